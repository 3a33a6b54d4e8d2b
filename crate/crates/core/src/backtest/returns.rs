//! Daily open/close prices to intraday and overnight log returns.
//!
//! The day-s intraday return is open-to-close on day s; the day-s overnight
//! return runs from the close of the previous trading day to the open of day
//! s and includes dividends with ex-date s (paid to the holder at the prior
//! close). Splits and buybacks are assumed effective at the close, so raw
//! open/close prices are used as supplied.

use crate::corpus::{Membership, Session, TradingCalendar};
use crate::topicmodel::SessionReturns;
use chrono::{Datelike, NaiveDate};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReturnsError {
    #[error("nonpositive price for firm {firm} on {date}: open={open}, close={close}")]
    NonpositivePrice { firm: u32, date: NaiveDate, open: f64, close: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct DailyReturn {
    pub open: f64,
    pub close: f64,
    /// Open-to-close log return.
    pub intraday: f64,
    /// Prior-close-to-open log return with dividends; None when the previous
    /// trading day has no price for this firm.
    pub overnight: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct PriceRow {
    pub firm_id: u32,
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct DividendRow {
    pub firm_id: u32,
    pub ex_date: NaiveDate,
    pub amount: f64,
}

/// Per-firm daily session returns with index-membership flags.
#[derive(Debug, Clone, Default)]
pub struct ReturnPanel {
    data: BTreeMap<u32, BTreeMap<NaiveDate, DailyReturn>>,
    membership: BTreeMap<(u32, NaiveDate), bool>,
}

impl ReturnPanel {
    pub fn get(&self, firm: u32, date: NaiveDate) -> Option<&DailyReturn> {
        self.data.get(&firm)?.get(&date)
    }

    pub fn is_member(&self, firm: u32, date: NaiveDate) -> bool {
        self.membership.get(&(firm, date)).copied().unwrap_or(false)
    }

    pub fn firms(&self) -> impl Iterator<Item = u32> + '_ {
        self.data.keys().copied()
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> =
            self.data.values().flat_map(|m| m.keys().copied()).collect();
        days.sort();
        days.dedup();
        days
    }

    pub fn session_return(&self, firm: u32, date: NaiveDate, session: Session) -> Option<f64> {
        let d = self.get(firm, date)?;
        match session {
            Session::Intraday => Some(d.intraday),
            Session::Overnight => d.overnight,
        }
    }

    /// Annual session log returns: sums of the daily session log returns over
    /// member firm-days in the calendar year.
    pub fn annual_session_returns(&self) -> BTreeMap<(u32, i32), (f64, f64)> {
        let mut out: BTreeMap<(u32, i32), (f64, f64)> = BTreeMap::new();
        for (&firm, days) in &self.data {
            for (&date, r) in days {
                if !self.is_member(firm, date) {
                    continue;
                }
                let e = out.entry((firm, date.year())).or_insert((0.0, 0.0));
                e.0 += r.intraday;
                if let Some(o) = r.overnight {
                    e.1 += o;
                }
            }
        }
        out
    }

    /// Monthly session log returns, keyed by (firm, year, month).
    pub fn monthly_session_returns(&self) -> BTreeMap<(u32, i32, u32), (f64, f64)> {
        let mut out: BTreeMap<(u32, i32, u32), (f64, f64)> = BTreeMap::new();
        for (&firm, days) in &self.data {
            for (&date, r) in days {
                let e = out.entry((firm, date.year(), date.month())).or_insert((0.0, 0.0));
                e.0 += r.intraday;
                if let Some(o) = r.overnight {
                    e.1 += o;
                }
            }
        }
        out
    }

    /// Daily session returns in the lookup form the topic-model scorer uses.
    pub fn to_session_returns(&self) -> SessionReturns {
        let mut sr = SessionReturns::default();
        for (&firm, days) in &self.data {
            for (&date, r) in days {
                sr.insert(firm, date, Session::Intraday, r.intraday);
                if let Some(o) = r.overnight {
                    sr.insert(firm, date, Session::Overnight, o);
                }
            }
        }
        sr
    }

    /// Daily session-return standard deviations per firm-year, annualized by
    /// sqrt(252). Returns (intraday, overnight) pairs.
    pub fn annual_volatility(&self) -> BTreeMap<(u32, i32), (f64, f64)> {
        let mut series: BTreeMap<(u32, i32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (&firm, days) in &self.data {
            for (&date, r) in days {
                let e = series.entry((firm, date.year())).or_default();
                e.0.push(r.intraday);
                if let Some(o) = r.overnight {
                    e.1.push(o);
                }
            }
        }
        series
            .into_iter()
            .map(|(k, (i, o))| (k, (annualized_sd(&i), annualized_sd(&o))))
            .collect()
    }
}

fn annualized_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt() * 252.0_f64.sqrt()
}

/// Build the panel from price and dividend rows. Firm-days outside the index
/// are kept in the series (returns still compound through them) but flagged
/// as non-members so portfolio and regression code can exclude them.
pub fn build_returns(
    prices: &[PriceRow],
    dividends: &[DividendRow],
    membership: &Membership,
    calendar: &TradingCalendar,
) -> Result<ReturnPanel, ReturnsError> {
    let mut div_map: BTreeMap<(u32, NaiveDate), f64> = BTreeMap::new();
    for d in dividends {
        *div_map.entry((d.firm_id, d.ex_date)).or_insert(0.0) += d.amount;
    }

    let mut by_firm: BTreeMap<u32, BTreeMap<NaiveDate, PriceRow>> = BTreeMap::new();
    for p in prices {
        if p.open <= 0.0 || p.close <= 0.0 {
            return Err(ReturnsError::NonpositivePrice {
                firm: p.firm_id,
                date: p.date,
                open: p.open,
                close: p.close,
            });
        }
        by_firm.entry(p.firm_id).or_default().insert(p.date, *p);
    }

    let mut panel = ReturnPanel::default();
    for (&firm, days) in &by_firm {
        let mut firm_rets: BTreeMap<NaiveDate, DailyReturn> = BTreeMap::new();
        for (&date, p) in days {
            let intraday = (p.close / p.open).ln();
            let overnight = calendar.prev_trading_day(date).and_then(|prev| {
                days.get(&prev).map(|prev_p| {
                    let div = div_map.get(&(firm, date)).copied().unwrap_or(0.0);
                    ((p.open + div) / prev_p.close).ln()
                })
            });
            firm_rets.insert(date, DailyReturn { open: p.open, close: p.close, intraday, overnight });
            panel.membership.insert((firm, date), membership.is_member(firm, date));
        }
        panel.data.insert(firm, firm_rets);
    }
    Ok(panel)
}

pub fn read_prices_csv<R: Read>(reader: R) -> Result<Vec<PriceRow>, ReturnsError> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_dividends_csv<R: Read>(reader: R) -> Result<Vec<DividendRow>, ReturnsError> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_prices_csv<W: std::io::Write>(w: W, rows: &[PriceRow]) -> Result<(), ReturnsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "date", "open", "close"])?;
    for r in rows {
        wr.write_record([
            r.firm_id.to_string(),
            r.date.to_string(),
            format!("{}", r.open),
            format!("{}", r.close),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_dividends_csv<W: std::io::Write>(
    w: W,
    rows: &[DividendRow],
) -> Result<(), ReturnsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "ex_date", "amount"])?;
    for r in rows {
        wr.write_record([r.firm_id.to_string(), r.ex_date.to_string(), format!("{}", r.amount)])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_calendar() -> TradingCalendar {
        TradingCalendar::new(
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
            [],
            "America/New_York",
        )
        .unwrap()
    }

    fn fixture_membership() -> Membership {
        Membership::from_reader(
            "firm_id,ticker,start_date,end_date\n1,AAA,2021-01-01,2021-12-31\n".as_bytes(),
        )
        .unwrap()
    }

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, m, day).unwrap()
    }

    #[test]
    fn intraday_and_overnight_definitions() {
        let prices = vec![
            PriceRow { firm_id: 1, date: d(3, 1), open: 100.0, close: 101.0 },
            PriceRow { firm_id: 1, date: d(3, 2), open: 100.0, close: 99.0 },
        ];
        let dividends = vec![DividendRow { firm_id: 1, ex_date: d(3, 2), amount: 1.0 }];
        let panel =
            build_returns(&prices, &dividends, &fixture_membership(), &fixture_calendar()).unwrap();

        let day1 = panel.get(1, d(3, 1)).unwrap();
        assert!((day1.intraday - (101.0f64 / 100.0).ln()).abs() < 1e-15);
        assert!(day1.overnight.is_none(), "no prior close");

        // close 101 -> open 100 with dividend 1: ln(101/101)
        let day2 = panel.get(1, d(3, 2)).unwrap();
        assert!((day2.overnight.unwrap() - (101.0f64 / 101.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn dividend_goes_into_close_to_open() {
        let prices = vec![
            PriceRow { firm_id: 1, date: d(3, 1), open: 100.0, close: 100.0 },
            PriceRow { firm_id: 1, date: d(3, 2), open: 100.0, close: 100.0 },
        ];
        let dividends = vec![DividendRow { firm_id: 1, ex_date: d(3, 2), amount: 1.0 }];
        let panel =
            build_returns(&prices, &dividends, &fixture_membership(), &fixture_calendar()).unwrap();
        let r = panel.get(1, d(3, 2)).unwrap().overnight.unwrap();
        assert!((r - (101.0f64 / 100.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn session_returns_telescope_to_price_ratio() {
        let mut rng = crate::rng::stream_rng(77, 0);
        use rand::Rng;
        let cal = fixture_calendar();
        let days: Vec<NaiveDate> =
            cal.trading_days().iter().copied().take(40).collect();
        let mut prices = Vec::new();
        let mut close = 100.0f64;
        let mut first_open = None;
        for &date in &days {
            let open = close * (1.0 + (rng.gen::<f64>() - 0.5) * 0.02);
            let new_close = open * (1.0 + (rng.gen::<f64>() - 0.5) * 0.02);
            prices.push(PriceRow { firm_id: 1, date, open, close: new_close });
            if first_open.is_none() {
                first_open = Some(open);
            }
            close = new_close;
        }
        let panel = build_returns(&prices, &[], &fixture_membership(), &cal).unwrap();

        // sum of all session returns = ln(close_T / open_1)
        let mut total = 0.0;
        for &date in &days {
            let r = panel.get(1, date).unwrap();
            total += r.intraday + r.overnight.unwrap_or(0.0);
        }
        let expect = (close / first_open.unwrap()).ln();
        assert!((total - expect).abs() < 1e-10, "{total} vs {expect}");

        // intraday + overnight = close-to-close, day by day
        for w in days.windows(2) {
            let prev = panel.get(1, w[0]).unwrap();
            let cur = panel.get(1, w[1]).unwrap();
            let c2c = (cur.close / prev.close).ln();
            assert!((cur.intraday + cur.overnight.unwrap() - c2c).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_price_is_error_with_row_identity() {
        let prices = vec![PriceRow { firm_id: 7, date: d(5, 3), open: -1.0, close: 10.0 }];
        match build_returns(&prices, &[], &fixture_membership(), &fixture_calendar()) {
            Err(ReturnsError::NonpositivePrice { firm: 7, date, .. }) => {
                assert_eq!(date, d(5, 3));
            }
            other => panic!("expected price error, got {other:?}"),
        }
    }

    #[test]
    fn constant_prices_have_zero_volatility() {
        let cal = fixture_calendar();
        let prices: Vec<PriceRow> = cal
            .trading_days()
            .iter()
            .take(30)
            .map(|&date| PriceRow { firm_id: 1, date, open: 50.0, close: 50.0 })
            .collect();
        let panel = build_returns(&prices, &[], &fixture_membership(), &cal).unwrap();
        let vol = panel.annual_volatility();
        let (vi, vo) = vol[&(1, 2021)];
        assert_eq!(vi, 0.0);
        assert_eq!(vo, 0.0);
    }

    #[test]
    fn annual_returns_sum_daily_sessions() {
        let prices = vec![
            PriceRow { firm_id: 1, date: d(3, 1), open: 100.0, close: 110.0 },
            PriceRow { firm_id: 1, date: d(3, 2), open: 112.0, close: 108.0 },
        ];
        let panel = build_returns(&prices, &[], &fixture_membership(), &fixture_calendar()).unwrap();
        let annual = panel.annual_session_returns();
        let (ri, ro) = annual[&(1, 2021)];
        let expect_i = (110.0f64 / 100.0).ln() + (108.0f64 / 112.0).ln();
        let expect_o = (112.0f64 / 110.0).ln();
        assert!((ri - expect_i).abs() < 1e-12);
        assert!((ro - expect_o).abs() < 1e-12);
    }
}
