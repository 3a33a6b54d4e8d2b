//! Firm-year characteristics used as regression controls: size,
//! inverse-hyperbolic-sine book-to-market, investment, profitability, and
//! session-specific momentum and volatility, all cross-sectionally demeaned
//! within each year.

use crate::backtest::returns::ReturnPanel;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

pub const N_CONTROLS: usize = 8;
pub const CONTROL_NAMES: [&str; N_CONTROLS] = [
    "size",
    "book_to_market",
    "investment",
    "profitability",
    "intraday_momentum",
    "overnight_momentum",
    "intraday_volatility",
    "overnight_volatility",
];

#[derive(Debug, Error)]
pub enum ControlsError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct FundamentalsRow {
    pub firm_id: u32,
    pub year: i32,
    pub size: f64,
    pub book_to_market: f64,
    pub investment: f64,
    pub profitability: f64,
}

/// Demeaned characteristics per (firm, year).
#[derive(Debug, Clone, Default)]
pub struct Controls {
    values: BTreeMap<(u32, i32), [f64; N_CONTROLS]>,
}

impl Controls {
    pub fn get(&self, firm: u32, year: i32) -> Option<&[f64; N_CONTROLS]> {
        self.values.get(&(firm, year))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, i32), &[f64; N_CONTROLS])> {
        self.values.iter()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ControlsReport {
    /// (firm, year) rows without momentum history (fewer than 11 prior months).
    pub missing_momentum: Vec<(u32, i32)>,
    /// (firm, year) rows without fundamentals.
    pub missing_fundamentals: Vec<(u32, i32)>,
}

/// Momentum for year y: compounded (summed log) monthly session returns over
/// the eleven months January..November, leaving out the most recent month of
/// the measurement year. Missing when fewer than 11 of those months have data.
fn momentum(
    monthly: &BTreeMap<(u32, i32, u32), (f64, f64)>,
    firm: u32,
    year: i32,
) -> Option<(f64, f64)> {
    let mut mi = 0.0;
    let mut mo = 0.0;
    for month in 1..=11u32 {
        let (i, o) = monthly.get(&(firm, year, month))?;
        mi += i;
        mo += o;
    }
    Some((mi, mo))
}

/// Assemble the characteristics panel for every (firm, year) that has
/// fundamentals, full momentum history, and return data. Each control is
/// demeaned across firms within the year.
pub fn build_controls(
    panel: &ReturnPanel,
    fundamentals: &[FundamentalsRow],
) -> (Controls, ControlsReport) {
    let monthly = panel.monthly_session_returns();
    let vol = panel.annual_volatility();
    let funda: BTreeMap<(u32, i32), &FundamentalsRow> =
        fundamentals.iter().map(|f| ((f.firm_id, f.year), f)).collect();

    let mut report = ControlsReport::default();
    let mut raw: BTreeMap<(u32, i32), [f64; N_CONTROLS]> = BTreeMap::new();
    let firm_years: Vec<(u32, i32)> = vol.keys().copied().collect();
    for (firm, year) in firm_years {
        let f = match funda.get(&(firm, year)) {
            Some(f) => f,
            None => {
                report.missing_fundamentals.push((firm, year));
                continue;
            }
        };
        let (mom_i, mom_o) = match momentum(&monthly, firm, year) {
            Some(m) => m,
            None => {
                report.missing_momentum.push((firm, year));
                continue;
            }
        };
        let (vol_i, vol_o) = vol[&(firm, year)];
        debug_assert!(vol_i >= 0.0 && vol_o >= 0.0);
        raw.insert(
            (firm, year),
            [
                f.size,
                f.book_to_market.asinh(),
                f.investment,
                f.profitability,
                mom_i,
                mom_o,
                vol_i,
                vol_o,
            ],
        );
    }

    // cross-sectional demeaning within year
    let mut year_sums: BTreeMap<i32, ([f64; N_CONTROLS], usize)> = BTreeMap::new();
    for (&(_, year), vals) in &raw {
        let e = year_sums.entry(year).or_insert(([0.0; N_CONTROLS], 0));
        for (s, v) in e.0.iter_mut().zip(vals) {
            *s += v;
        }
        e.1 += 1;
    }
    let mut values = BTreeMap::new();
    for ((firm, year), mut vals) in raw {
        let (sums, n) = year_sums[&year];
        for (v, s) in vals.iter_mut().zip(sums) {
            *v -= s / n as f64;
        }
        values.insert((firm, year), vals);
    }
    (Controls { values }, report)
}

pub fn read_fundamentals_csv<R: Read>(reader: R) -> Result<Vec<FundamentalsRow>, ControlsError> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_fundamentals_csv<W: std::io::Write>(
    w: W,
    rows: &[FundamentalsRow],
) -> Result<(), ControlsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "year", "size", "book_to_market", "investment", "profitability"])?;
    for r in rows {
        wr.write_record([
            r.firm_id.to_string(),
            r.year.to_string(),
            format!("{}", r.size),
            format!("{}", r.book_to_market),
            format!("{}", r.investment),
            format!("{}", r.profitability),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
