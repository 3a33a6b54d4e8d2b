//! Corpus ingestion: raw news articles to session-tagged, tokenized articles
//! plus a pruned vocabulary.

pub mod calendar;
pub mod porter;
pub mod text;

pub use calendar::{CalendarError, Session, TradingCalendar};
pub use text::Preprocessor;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Minimum corpus frequency and document frequency for a token to stay in the
/// vocabulary, and the minimum raw word count for an article to be news.
pub const MIN_TOKEN_FREQUENCY: u32 = 25;
pub const MIN_DOCUMENT_FREQUENCY: u32 = 25;
pub const MIN_WORD_COUNT: usize = 25;
/// Articles naming more than this many index members are market roundups.
pub const MAX_FIRMS: usize = 3;

const CORPUS_MAGIC: &[u8; 4] = b"NFCP";
const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad article record on line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error("membership file covers {start}..{end} but article falls on {day}")]
    MembershipOutOfRange { day: NaiveDate, start: NaiveDate, end: NaiveDate },
    #[error("membership file is empty")]
    EmptyMembership,
    #[error("corpus has no articles")]
    EmptyCorpus,
    #[error("corpus container is not in a supported format: {0}")]
    BadContainer(String),
}

/// One article as it arrives from the news feed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawArticle {
    pub article_id: String,
    pub timestamp: DateTime<Utc>,
    pub body: String,
    pub tickers: Vec<String>,
}

/// A kept article: session-tagged, firm-resolved, tokenized against the
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub article_id: String,
    pub firm_ids: Vec<u32>,
    pub trading_day: NaiveDate,
    pub session: Session,
    pub tokens: Vec<u32>,
    pub token_count: u32,
}

/// Dense-id vocabulary with per-token frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    document_frequency: Vec<u32>,
    total_frequency: Vec<u32>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn document_frequency(&self, id: u32) -> u32 {
        self.document_frequency[id as usize]
    }

    pub fn total_frequency(&self, id: u32) -> u32 {
        self.total_frequency[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Map string tokens to ids, silently dropping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Tokens kept: corpus frequency >= 25 and document frequency >= 25.
/// Ids are dense in [0, V), assigned in lexicographic token order.
pub fn build_vocabulary<'a, I, T>(documents: I) -> Result<Vocabulary, CorpusError>
where
    I: IntoIterator<Item = T>,
    T: IntoIterator<Item = &'a String>,
{
    let mut total: BTreeMap<String, u32> = BTreeMap::new();
    let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
    let mut any_doc = false;
    for doc in documents {
        any_doc = true;
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        for tok in doc {
            *total.entry(tok.clone()).or_insert(0) += 1;
            seen.insert(tok);
        }
        for tok in seen {
            *doc_freq.entry(tok.clone()).or_insert(0) += 1;
        }
    }
    if !any_doc {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut id_to_token = Vec::new();
    let mut document_frequency = Vec::new();
    let mut total_frequency = Vec::new();
    let mut token_to_id = HashMap::new();
    for (tok, &tf) in &total {
        let df = doc_freq[tok];
        if tf >= MIN_TOKEN_FREQUENCY && df >= MIN_DOCUMENT_FREQUENCY {
            let id = id_to_token.len() as u32;
            token_to_id.insert(tok.clone(), id);
            id_to_token.push(tok.clone());
            document_frequency.push(df);
            total_frequency.push(tf);
        }
    }
    Ok(Vocabulary { token_to_id, id_to_token, document_frequency, total_frequency })
}

/// Index membership intervals keyed by ticker and by firm.
#[derive(Debug, Clone)]
pub struct Membership {
    by_ticker: HashMap<String, Vec<(u32, NaiveDate, NaiveDate)>>,
    by_firm: BTreeMap<u32, Vec<(NaiveDate, NaiveDate)>>,
    coverage: (NaiveDate, NaiveDate),
}

#[derive(Debug, Deserialize, Serialize)]
struct MembershipRow {
    firm_id: u32,
    ticker: String,
    start_date: NaiveDate,
    end_date: NaiveDate,
}

impl Membership {
    pub fn from_reader<R: Read>(reader: R) -> Result<Membership, CorpusError> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut by_ticker: HashMap<String, Vec<(u32, NaiveDate, NaiveDate)>> = HashMap::new();
        let mut by_firm: BTreeMap<u32, Vec<(NaiveDate, NaiveDate)>> = BTreeMap::new();
        let mut lo: Option<NaiveDate> = None;
        let mut hi: Option<NaiveDate> = None;
        for row in rd.deserialize() {
            let row: MembershipRow = row?;
            lo = Some(lo.map_or(row.start_date, |d| d.min(row.start_date)));
            hi = Some(hi.map_or(row.end_date, |d| d.max(row.end_date)));
            by_ticker
                .entry(row.ticker.clone())
                .or_default()
                .push((row.firm_id, row.start_date, row.end_date));
            by_firm.entry(row.firm_id).or_default().push((row.start_date, row.end_date));
        }
        match (lo, hi) {
            (Some(start), Some(end)) => Ok(Membership { by_ticker, by_firm, coverage: (start, end) }),
            _ => Err(CorpusError::EmptyMembership),
        }
    }

    pub fn from_path(path: &Path) -> Result<Membership, CorpusError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn coverage(&self) -> (NaiveDate, NaiveDate) {
        self.coverage
    }

    /// Distinct member firms mentioned by `tickers` on `day`.
    pub fn member_firms_on(&self, tickers: &[String], day: NaiveDate) -> Result<Vec<u32>, CorpusError> {
        if day < self.coverage.0 || day > self.coverage.1 {
            return Err(CorpusError::MembershipOutOfRange {
                day,
                start: self.coverage.0,
                end: self.coverage.1,
            });
        }
        let mut firms = BTreeSet::new();
        for t in tickers {
            if let Some(spans) = self.by_ticker.get(t) {
                for &(firm, start, end) in spans {
                    if day >= start && day <= end {
                        firms.insert(firm);
                    }
                }
            }
        }
        Ok(firms.into_iter().collect())
    }

    pub fn is_member(&self, firm: u32, day: NaiveDate) -> bool {
        self.by_firm
            .get(&firm)
            .is_some_and(|spans| spans.iter().any(|&(s, e)| day >= s && day <= e))
    }

    pub fn firms(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_firm.keys().copied()
    }

    pub fn firm_count(&self) -> usize {
        self.by_firm.len()
    }

    /// (firm, year) pairs where the firm is a member on at least one day.
    pub fn member_firm_years(&self) -> Vec<(u32, i32)> {
        let mut out = BTreeSet::new();
        for (&firm, spans) in &self.by_firm {
            for &(s, e) in spans {
                for y in s.year()..=e.year() {
                    out.insert((firm, y));
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Why an article was dropped during filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoMemberFirms,
    TooManyFirms,
    TooShort,
    TimestampOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterDecision {
    Keep { firm_ids: Vec<u32> },
    Drop(DropReason),
}

/// Apply the news filters in order: no member firms, more than three member
/// firms, fewer than 25 raw words.
pub fn filter_article(
    raw: &RawArticle,
    membership: &Membership,
    trading_day: NaiveDate,
) -> Result<FilterDecision, CorpusError> {
    let firms = membership.member_firms_on(&raw.tickers, trading_day)?;
    if firms.is_empty() {
        return Ok(FilterDecision::Drop(DropReason::NoMemberFirms));
    }
    if firms.len() > MAX_FIRMS {
        return Ok(FilterDecision::Drop(DropReason::TooManyFirms));
    }
    if text::raw_word_count(&raw.body) < MIN_WORD_COUNT {
        return Ok(FilterDecision::Drop(DropReason::TooShort));
    }
    Ok(FilterDecision::Keep { firm_ids: firms })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub kept: usize,
    pub dropped: BTreeMap<String, usize>,
    pub vocabulary_size: usize,
}

/// The full ingestion product: canonical article order plus vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub articles: Vec<Article>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    pub fn token_total(&self) -> usize {
        self.articles.iter().map(|a| a.tokens.len()).sum()
    }
}

/// Classify, filter, preprocess and tokenize raw articles. Articles are
/// returned in canonical (trading day, session, id) order so the container is
/// independent of input file ordering.
pub fn ingest(
    raws: &[RawArticle],
    membership: &Membership,
    calendar: &TradingCalendar,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let pre = Preprocessor::new();
    let mut report = IngestReport::default();
    let mut kept: Vec<(Article, Vec<String>)> = Vec::new();

    for raw in raws {
        let (day, session) = match calendar.classify(raw.timestamp) {
            Ok(v) => v,
            Err(CalendarError::OutOfRange(_)) => {
                *report.dropped.entry("timestamp_out_of_range".into()).or_insert(0) += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match filter_article(raw, membership, day)? {
            FilterDecision::Drop(reason) => {
                let key = serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_else(|| format!("{reason:?}"));
                *report.dropped.entry(key).or_insert(0) += 1;
            }
            FilterDecision::Keep { firm_ids } => {
                let tokens = pre.preprocess(&raw.body);
                kept.push((
                    Article {
                        article_id: raw.article_id.clone(),
                        firm_ids,
                        trading_day: day,
                        session,
                        tokens: Vec::new(),
                        token_count: 0,
                    },
                    tokens,
                ));
            }
        }
    }

    let vocabulary = build_vocabulary(kept.iter().map(|(_, toks)| toks.iter()))?;
    for (article, toks) in &mut kept {
        article.tokens = vocabulary.encode(toks);
        article.token_count = article.tokens.len() as u32;
    }
    kept.sort_by(|a, b| {
        (a.0.trading_day, a.0.session, &a.0.article_id)
            .cmp(&(b.0.trading_day, b.0.session, &b.0.article_id))
    });

    report.kept = kept.len();
    report.vocabulary_size = vocabulary.len();
    let articles = kept.into_iter().map(|(a, _)| a).collect();
    Ok((Corpus { articles, vocabulary }, report))
}

/// Read newline-delimited JSON records {id, timestamp, tickers, body}.
pub fn read_articles_ndjson<R: BufRead>(reader: R) -> Result<Vec<RawArticle>, CorpusError> {
    #[derive(Deserialize)]
    struct Rec {
        id: String,
        timestamp: String,
        tickers: Vec<String>,
        body: String,
    }
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        let ts = DateTime::parse_from_rfc3339(&rec.timestamp)
            .map_err(|e| CorpusError::BadRecord { line: i + 1, message: format!("timestamp: {e}") })?
            .with_timezone(&Utc);
        if rec.body.is_empty() {
            return Err(CorpusError::BadRecord { line: i + 1, message: "empty body".into() });
        }
        out.push(RawArticle {
            article_id: rec.id,
            timestamp: ts,
            body: rec.body,
            tickers: rec.tickers,
        });
    }
    Ok(out)
}

pub fn write_articles_ndjson<W: Write>(w: &mut W, articles: &[RawArticle]) -> Result<(), CorpusError> {
    #[derive(Serialize)]
    struct Rec<'a> {
        id: &'a str,
        timestamp: String,
        tickers: &'a [String],
        body: &'a str,
    }
    for a in articles {
        let rec = Rec {
            id: &a.article_id,
            timestamp: a.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tickers: &a.tickers,
            body: &a.body,
        };
        serde_json::to_writer(&mut *w, &rec)
            .map_err(|e| CorpusError::BadContainer(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Holiday list: CSV with a `date` column; weekends are implicit.
pub fn read_holidays_csv<R: Read>(reader: R) -> Result<Vec<NaiveDate>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
    }
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: Row = row?;
        out.push(row.date);
    }
    Ok(out)
}

pub fn write_holidays_csv<W: Write>(w: W, holidays: &[NaiveDate]) -> Result<(), CorpusError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["date"])?;
    for d in holidays {
        wr.write_record([d.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_membership_csv<W: Write>(
    w: W,
    rows: &[(u32, String, NaiveDate, NaiveDate)],
) -> Result<(), CorpusError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "ticker", "start_date", "end_date"])?;
    for (firm, ticker, s, e) in rows {
        wr.write_record([firm.to_string(), ticker.clone(), s.to_string(), e.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Versioned binary corpus container.
pub fn write_corpus<W: Write>(w: &mut W, corpus: &Corpus) -> Result<(), CorpusError> {
    w.write_all(CORPUS_MAGIC)?;
    w.write_u32::<LittleEndian>(CORPUS_VERSION)?;
    let v = &corpus.vocabulary;
    w.write_u32::<LittleEndian>(v.len() as u32)?;
    for id in 0..v.len() as u32 {
        write_str(w, v.token(id))?;
        w.write_u32::<LittleEndian>(v.document_frequency(id))?;
        w.write_u32::<LittleEndian>(v.total_frequency(id))?;
    }
    w.write_u32::<LittleEndian>(corpus.articles.len() as u32)?;
    for a in &corpus.articles {
        write_str(w, &a.article_id)?;
        w.write_u8(a.firm_ids.len() as u8)?;
        for &f in &a.firm_ids {
            w.write_u32::<LittleEndian>(f)?;
        }
        w.write_i32::<LittleEndian>(a.trading_day.num_days_from_ce())?;
        w.write_u8(match a.session {
            Session::Intraday => 0,
            Session::Overnight => 1,
        })?;
        w.write_u32::<LittleEndian>(a.tokens.len() as u32)?;
        for &t in &a.tokens {
            w.write_u32::<LittleEndian>(t)?;
        }
    }
    Ok(())
}

pub fn read_corpus<R: Read>(r: &mut R) -> Result<Corpus, CorpusError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CORPUS_MAGIC {
        return Err(CorpusError::BadContainer("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CORPUS_VERSION {
        return Err(CorpusError::BadContainer(format!("unsupported version {version}")));
    }
    let v_len = r.read_u32::<LittleEndian>()? as usize;
    let mut id_to_token = Vec::with_capacity(v_len);
    let mut document_frequency = Vec::with_capacity(v_len);
    let mut total_frequency = Vec::with_capacity(v_len);
    let mut token_to_id = HashMap::with_capacity(v_len);
    for id in 0..v_len {
        let tok = read_str(r)?;
        document_frequency.push(r.read_u32::<LittleEndian>()?);
        total_frequency.push(r.read_u32::<LittleEndian>()?);
        token_to_id.insert(tok.clone(), id as u32);
        id_to_token.push(tok);
    }
    let vocabulary = Vocabulary { token_to_id, id_to_token, document_frequency, total_frequency };

    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut articles = Vec::with_capacity(n);
    for _ in 0..n {
        let article_id = read_str(r)?;
        let n_firms = r.read_u8()? as usize;
        let mut firm_ids = Vec::with_capacity(n_firms);
        for _ in 0..n_firms {
            firm_ids.push(r.read_u32::<LittleEndian>()?);
        }
        let days = r.read_i32::<LittleEndian>()?;
        let trading_day = NaiveDate::from_num_days_from_ce_opt(days)
            .ok_or_else(|| CorpusError::BadContainer("bad date".into()))?;
        let session = match r.read_u8()? {
            0 => Session::Intraday,
            1 => Session::Overnight,
            other => return Err(CorpusError::BadContainer(format!("bad session tag {other}"))),
        };
        let n_tok = r.read_u32::<LittleEndian>()? as usize;
        let mut tokens = Vec::with_capacity(n_tok);
        for _ in 0..n_tok {
            tokens.push(r.read_u32::<LittleEndian>()?);
        }
        let token_count = tokens.len() as u32;
        articles.push(Article { article_id, firm_ids, trading_day, session, tokens, token_count });
    }
    Ok(Corpus { articles, vocabulary })
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CorpusError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 24 {
        return Err(CorpusError::BadContainer(format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CorpusError::BadContainer(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn membership_fixture() -> Membership {
        let csv = "firm_id,ticker,start_date,end_date\n\
                   1,AAA,2020-01-01,2024-12-31\n\
                   2,BBB,2020-01-01,2024-12-31\n\
                   3,CCC,2020-01-01,2024-12-31\n\
                   4,DDD,2020-01-01,2024-12-31\n\
                   5,EEE,2020-01-01,2020-06-30\n";
        Membership::from_reader(csv.as_bytes()).unwrap()
    }

    fn raw(id: &str, tickers: &[&str], words: usize) -> RawArticle {
        RawArticle {
            article_id: id.to_string(),
            timestamp: "2021-03-02T15:00:00Z".parse().unwrap(),
            body: vec!["word"; words].join(" "),
            tickers: tickers.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn filter_order_and_thresholds() {
        let m = membership_fixture();
        let day = NaiveDate::from_ymd_opt(2021, 3, 2).unwrap();

        let four = raw("a", &["AAA", "BBB", "CCC", "DDD"], 100);
        assert_eq!(
            filter_article(&four, &m, day).unwrap(),
            FilterDecision::Drop(DropReason::TooManyFirms)
        );

        let short = raw("b", &["AAA"], 24);
        assert_eq!(
            filter_article(&short, &m, day).unwrap(),
            FilterDecision::Drop(DropReason::TooShort)
        );

        let boundary = raw("c", &["AAA", "BBB", "CCC"], 25);
        assert_eq!(
            filter_article(&boundary, &m, day).unwrap(),
            FilterDecision::Keep { firm_ids: vec![1, 2, 3] }
        );

        let none = raw("d", &["ZZZ"], 100);
        assert_eq!(
            filter_article(&none, &m, day).unwrap(),
            FilterDecision::Drop(DropReason::NoMemberFirms)
        );

        // expired membership does not count
        let expired = raw("e", &["EEE"], 100);
        assert_eq!(
            filter_article(&expired, &m, day).unwrap(),
            FilterDecision::Drop(DropReason::NoMemberFirms)
        );

        // outside membership coverage is an explicit error
        let early = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        assert!(matches!(
            filter_article(&four, &m, early),
            Err(CorpusError::MembershipOutOfRange { .. })
        ));
    }

    #[test]
    fn vocabulary_thresholds() {
        // "common" passes both thresholds; "bursty" fails document frequency;
        // "rare" fails both.
        let mut docs: Vec<Vec<String>> = Vec::new();
        for _ in 0..30 {
            docs.push(vec!["common".to_string()]);
        }
        docs.push(vec!["bursty".to_string(); 100]);
        for d in docs.iter_mut().take(23) {
            d.push("bursty".to_string());
        }
        docs.push(vec!["rare".to_string()]);
        let v = build_vocabulary(docs.iter().map(|d| d.iter())).unwrap();
        assert!(v.id("common").is_some());
        assert!(v.id("bursty").is_none(), "bursty in 24 docs must be dropped");
        assert!(v.id("rare").is_none());

        // ids are a dense bijection
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn vocabulary_boundary_token_kept() {
        // token in exactly 25 docs with exactly 25 occurrences stays
        let docs: Vec<Vec<String>> = (0..25).map(|_| vec!["edge".to_string()]).collect();
        let v = build_vocabulary(docs.iter().map(|d| d.iter())).unwrap();
        assert_eq!(v.id("edge"), Some(0));
        assert_eq!(v.total_frequency(0), 25);
        assert_eq!(v.document_frequency(0), 25);
    }

    #[test]
    fn empty_corpus_is_error() {
        let docs: Vec<Vec<String>> = Vec::new();
        assert!(matches!(
            build_vocabulary(docs.iter().map(|d| d.iter())),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn vocabulary_matches_brute_force_counts() {
        let mut rng = crate::rng::stream_rng(99, 0);
        use rand::Rng;
        let words = ["alpha", "beta", "gamma", "delta", "epsilon"];
        let docs: Vec<Vec<String>> = (0..200)
            .map(|_| {
                (0..rng.gen_range(1..20))
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect()
            })
            .collect();
        let v = build_vocabulary(docs.iter().map(|d| d.iter())).unwrap();

        for w in words {
            let tf: u32 = docs.iter().map(|d| d.iter().filter(|t| *t == w).count() as u32).sum();
            let df: u32 = docs.iter().filter(|d| d.iter().any(|t| t == w)).count() as u32;
            let retained = tf >= MIN_TOKEN_FREQUENCY && df >= MIN_DOCUMENT_FREQUENCY;
            assert_eq!(v.id(w).is_some(), retained, "token {w}: tf={tf} df={df}");
            if let Some(id) = v.id(w) {
                assert_eq!(v.total_frequency(id), tf);
                assert_eq!(v.document_frequency(id), df);
            }
        }
    }

    #[test]
    fn ingest_is_order_independent() {
        let m = membership_fixture();
        let cal = TradingCalendar::new(
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
            [],
            "America/New_York",
        )
        .unwrap();
        let body: String = (0..40).map(|i| format!("word{i} common stock")).collect::<Vec<_>>().join(" ");
        let raws: Vec<RawArticle> = (0..40)
            .map(|i| RawArticle {
                article_id: format!("id-{i:03}"),
                timestamp: format!("2021-03-0{}T1{}:00:00Z", 1 + i % 5, i % 9)
                    .parse()
                    .unwrap(),
                body: body.clone(),
                tickers: vec![["AAA", "BBB", "CCC"][i % 3].to_string()],
            })
            .collect();
        let (c1, _) = ingest(&raws, &m, &cal).unwrap();
        let mut shuffled = raws.clone();
        shuffled.reverse();
        let (c2, _) = ingest(&shuffled, &m, &cal).unwrap();
        assert_eq!(c1.articles, c2.articles);
        assert_eq!(c1.vocabulary, c2.vocabulary);
    }

    #[test]
    fn corpus_container_roundtrip() {
        let m = membership_fixture();
        let cal = TradingCalendar::new(
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
            [],
            "America/New_York",
        )
        .unwrap();
        let body: String = vec!["housing"; 30].join(" ");
        let raws: Vec<RawArticle> = (0..30)
            .map(|i| RawArticle {
                article_id: format!("r{i}"),
                timestamp: "2021-03-02T15:00:00Z".parse().unwrap(),
                body: body.clone(),
                tickers: vec!["AAA".to_string()],
            })
            .collect();
        let (corpus, report) = ingest(&raws, &m, &cal).unwrap();
        assert_eq!(report.kept, 30);
        assert_eq!(corpus.vocabulary.len(), 1);

        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        let back = read_corpus(&mut buf.as_slice()).unwrap();
        assert_eq!(back.articles, corpus.articles);
        assert_eq!(back.vocabulary, corpus.vocabulary);
    }
}
