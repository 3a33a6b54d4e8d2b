//! Text preprocessing: tokenization, stopword removal, numeric bucketing, and
//! stemming.
//!
//! Tokens are maximal runs of alphanumeric characters; `.` and `,` are kept
//! only between digits so that decimals and thousand separators survive
//! ("5.3", "1,200,000"). Every numeric literal is replaced by one of
//! `__NUM__` / `__MIL__` / `__BIL__` by magnitude, consuming an adjacent
//! multiplier word ("million", "billion", ...) when present.

use super::porter;
use std::collections::HashSet;

pub const NUM_TOKEN: &str = "__NUM__";
pub const MIL_TOKEN: &str = "__MIL__";
pub const BIL_TOKEN: &str = "__BIL__";

const STOPWORDS_RAW: &str = include_str!("../../assets/stopwords.txt");

const MILLION: f64 = 1e6;
const BILLION: f64 = 1e9;

pub struct Preprocessor {
    stopwords: HashSet<&'static str>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new()
    }
}

impl Preprocessor {
    pub fn new() -> Preprocessor {
        let stopwords = STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Preprocessor { stopwords }
    }

    /// Lowercased stems with stopwords removed and numbers bucketed.
    /// An empty output is legal.
    pub fn preprocess(&self, body: &str) -> Vec<String> {
        let raw = tokenize(body);
        let mut out = Vec::with_capacity(raw.len());
        let mut i = 0;
        while i < raw.len() {
            let tok = &raw[i];
            if let Some(value) = parse_number(tok) {
                let mut value = value;
                if let Some(next) = raw.get(i + 1) {
                    if let Some(mult) = multiplier(next) {
                        value *= mult;
                        i += 1; // consume the multiplier word
                    }
                }
                out.push(bucket(value).to_string());
            } else if !self.stopwords.contains(tok.as_str()) {
                out.push(porter::stem(tok));
            }
            i += 1;
        }
        out
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }
}

/// Raw word count used by the minimum-length article filter: whitespace-split
/// words of the unprocessed body.
pub fn raw_word_count(body: &str) -> usize {
    body.split_whitespace().count()
}

fn bucket(value: f64) -> &'static str {
    let v = value.abs();
    if v >= BILLION {
        BIL_TOKEN
    } else if v >= MILLION {
        MIL_TOKEN
    } else {
        NUM_TOKEN
    }
}

fn multiplier(word: &str) -> Option<f64> {
    match word {
        "thousand" | "thousands" => Some(1e3),
        "million" | "millions" | "mln" => Some(1e6),
        "billion" | "billions" | "bln" => Some(1e9),
        "trillion" | "trillions" => Some(1e12),
        _ => None,
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    if !tok.chars().next()?.is_ascii_digit() {
        return None;
    }
    if !tok.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
        return None;
    }
    let cleaned: String = tok.chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().ok()
}

/// Split into lowercase tokens. Alphanumeric runs; '.'/',' retained only
/// between digits. The bucket sentinels pass through verbatim so that
/// re-running the pipeline over its own output is stable.
fn tokenize(body: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in body.split_whitespace() {
        if word == NUM_TOKEN || word == MIL_TOKEN || word == BIL_TOKEN {
            tokens.push(word.to_string());
            continue;
        }
        let chars: Vec<char> = word.chars().collect();
        let mut cur = String::new();
        for (idx, &c) in chars.iter().enumerate() {
            let keep = if c.is_alphanumeric() {
                true
            } else if c == '.' || c == ',' {
                let prev_digit = idx > 0 && chars[idx - 1].is_ascii_digit();
                let next_digit = idx + 1 < chars.len() && chars[idx + 1].is_ascii_digit();
                prev_digit && next_digit
            } else {
                false
            };
            if keep {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    tokens
}
