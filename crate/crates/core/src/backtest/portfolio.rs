//! Daily equal-weight portfolio return series for the annual selections, and
//! the average-daily-return comparison table.

use super::returns::ReturnPanel;
use crate::corpus::Session;
use crate::econometrics::{self, stars};
use crate::forecast::Selection;
use crate::linalg::Mat;
use chrono::{Datelike, NaiveDate};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("series are misaligned: {0}")]
    Misaligned(String),
    #[error("no evaluation days")]
    Empty,
    #[error(transparent)]
    Econ(#[from] econometrics::EconError),
    #[error("collinear design: {0}")]
    Collinear(String),
}

/// Basis points per unit log return.
pub const BPS: f64 = 1e4;

/// Per-day equal-weight mean session returns (bps) for the four portfolios.
/// A selection made at the end of year t is held through every day of year
/// t+1; complements are taken against each day's eligible universe.
#[derive(Debug, Clone)]
pub struct DailyPortfolioSeries {
    pub days: Vec<NaiveDate>,
    /// LS°: mean overnight return of the long-selected set.
    pub long_selected: Vec<Option<f64>>,
    /// LNS°: mean overnight return of everything else.
    pub long_rest: Vec<Option<f64>>,
    /// SSⁱ: mean intraday return of the short-selected set.
    pub short_selected: Vec<Option<f64>>,
    /// SNSⁱ: mean intraday return of everything else.
    pub short_rest: Vec<Option<f64>>,
    /// Days where some portfolio had no members.
    pub gaps: Vec<(NaiveDate, &'static str)>,
}

impl DailyPortfolioSeries {
    /// Running sum of daily mean log returns (gaps skipped), in log units.
    pub fn cumulative(&self, which: PortfolioColumn) -> Vec<(NaiveDate, f64)> {
        let series = self.column(which);
        let mut acc = 0.0;
        let mut out = Vec::new();
        for (d, v) in self.days.iter().zip(series) {
            if let Some(bps) = v {
                acc += bps / BPS;
                out.push((*d, acc));
            }
        }
        out
    }

    pub fn column(&self, which: PortfolioColumn) -> &[Option<f64>] {
        match which {
            PortfolioColumn::LongSelected => &self.long_selected,
            PortfolioColumn::LongRest => &self.long_rest,
            PortfolioColumn::ShortSelected => &self.short_selected,
            PortfolioColumn::ShortRest => &self.short_rest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortfolioColumn {
    LongSelected,
    LongRest,
    ShortSelected,
    ShortRest,
}

/// Restriction of each held year's universe (used by the split-half check:
/// held-out half only). Keyed by selection year t; applies to days of t+1.
pub type YearUniverse = BTreeMap<i32, BTreeSet<u32>>;

pub fn portfolio_series(
    selections: &BTreeMap<i32, Selection>,
    panel: &ReturnPanel,
    universe: Option<&YearUniverse>,
) -> DailyPortfolioSeries {
    let mut days = Vec::new();
    let mut ls = Vec::new();
    let mut lns = Vec::new();
    let mut ss = Vec::new();
    let mut sns = Vec::new();
    let mut gaps = Vec::new();

    for day in panel.days() {
        let sel = match selections.get(&(day.year() - 1)) {
            Some(s) => s,
            None => continue,
        };
        let allowed = universe.and_then(|u| u.get(&(day.year() - 1)));
        let eligible = |firm: u32| -> bool {
            panel.is_member(firm, day) && allowed.map_or(true, |set| set.contains(&firm))
        };

        let mean_over = |in_set: bool| -> Option<f64> {
            let mut sum = 0.0;
            let mut n = 0usize;
            for firm in panel.firms() {
                if !eligible(firm) || sel.in_long_overnight(firm) != in_set {
                    continue;
                }
                if let Some(r) = panel.session_return(firm, day, Session::Overnight) {
                    sum += r * BPS;
                    n += 1;
                }
            }
            (n > 0).then(|| sum / n as f64)
        };
        let mean_intra = |in_set: bool| -> Option<f64> {
            let mut sum = 0.0;
            let mut n = 0usize;
            for firm in panel.firms() {
                if !eligible(firm) || sel.in_short_intraday(firm) != in_set {
                    continue;
                }
                if let Some(r) = panel.session_return(firm, day, Session::Intraday) {
                    sum += r * BPS;
                    n += 1;
                }
            }
            (n > 0).then(|| sum / n as f64)
        };

        let (a, b, c, d) = (mean_over(true), mean_over(false), mean_intra(true), mean_intra(false));
        for (v, label) in
            [(&a, "long_selected"), (&b, "long_rest"), (&c, "short_selected"), (&d, "short_rest")]
        {
            if v.is_none() {
                gaps.push((day, label));
            }
        }
        days.push(day);
        ls.push(a);
        lns.push(b);
        ss.push(c);
        sns.push(d);
    }

    DailyPortfolioSeries {
        days,
        long_selected: ls,
        long_rest: lns,
        short_selected: ss,
        short_rest: sns,
        gaps,
    }
}

/// One table entry: a mean (or mean difference) in bps with its Newey-West
/// standard error.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TableCell {
    pub estimate: f64,
    pub se: f64,
    pub tstat: f64,
    pub pvalue: f64,
    pub stars: String,
    pub nobs: usize,
}

impl TableCell {
    pub fn from_intercept(result: &econometrics::RegressionResult, idx: usize) -> TableCell {
        let se = result.se()[idx];
        let t = result.t_stats()[idx];
        let p = result.p_values()[idx];
        TableCell {
            estimate: result.coefficients[idx],
            se,
            tstat: t,
            pvalue: p,
            stars: stars(p).to_string(),
            nobs: result.nobs,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AvgReturnTable {
    /// In column order: LS°, SSⁱ, LNS°, SNSⁱ, LS°-LNS°, SSⁱ-SNSⁱ, LS°-SSⁱ,
    /// LNS°-SNSⁱ.
    pub columns: Vec<(String, TableCell)>,
}

impl AvgReturnTable {
    pub fn get(&self, name: &str) -> Option<&TableCell> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }
}

/// Mean daily returns and pairwise differences as intercept-only regressions
/// with Newey-West (auto lag) standard errors, in basis points.
pub fn average_return_table(series: &DailyPortfolioSeries) -> Result<AvgReturnTable, BacktestError> {
    let n = series.days.len();
    for (name, col) in [
        ("long_selected", &series.long_selected),
        ("long_rest", &series.long_rest),
        ("short_selected", &series.short_selected),
        ("short_rest", &series.short_rest),
    ] {
        if col.len() != n {
            return Err(BacktestError::Misaligned(format!(
                "{name} has {} entries for {n} days",
                col.len()
            )));
        }
    }
    if n == 0 {
        return Err(BacktestError::Empty);
    }

    let mean_cell = |vals: Vec<f64>| -> Result<TableCell, BacktestError> {
        if vals.is_empty() {
            return Err(BacktestError::Empty);
        }
        let ones = Mat::from_rows(&vec![vec![1.0]; vals.len()]);
        let ctx = econometrics::fit(&vals, &ones, None)?;
        let nw = econometrics::newey_west(&ctx, None)?;
        Ok(TableCell::from_intercept(&nw, 0))
    };
    let single = |col: &[Option<f64>]| -> Vec<f64> { col.iter().flatten().copied().collect() };
    let diff = |a: &[Option<f64>], b: &[Option<f64>]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .filter_map(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            })
            .collect()
    };

    let columns = vec![
        ("LSo".to_string(), mean_cell(single(&series.long_selected))?),
        ("SSi".to_string(), mean_cell(single(&series.short_selected))?),
        ("LNSo".to_string(), mean_cell(single(&series.long_rest))?),
        ("SNSi".to_string(), mean_cell(single(&series.short_rest))?),
        (
            "LSo-LNSo".to_string(),
            mean_cell(diff(&series.long_selected, &series.long_rest))?,
        ),
        (
            "SSi-SNSi".to_string(),
            mean_cell(diff(&series.short_selected, &series.short_rest))?,
        ),
        (
            "LSo-SSi".to_string(),
            mean_cell(diff(&series.long_selected, &series.short_selected))?,
        ),
        (
            "LNSo-SNSi".to_string(),
            mean_cell(diff(&series.long_rest, &series.short_rest))?,
        ),
    ];
    Ok(AvgReturnTable { columns })
}
