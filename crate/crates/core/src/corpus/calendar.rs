//! Exchange trading calendar and intraday/overnight session classification.
//!
//! A day's intraday session runs 09:30-16:00 exchange-local; everything from
//! the previous close to the next open (including weekends and holidays) is
//! that next trading day's overnight session.

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, TimeZone, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalendarError {
    #[error("empty trading calendar for {start}..{end}")]
    Empty { start: NaiveDate, end: NaiveDate },
    #[error("timestamp {0} is outside the calendar coverage")]
    OutOfRange(DateTime<Utc>),
    #[error("unknown timezone {0:?}")]
    BadTimezone(String),
}

/// Intraday (open to close) or overnight (prior close to open) session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Session {
    Intraday,
    Overnight,
}

impl Session {
    pub fn label(self) -> &'static str {
        match self {
            Session::Intraday => "i",
            Session::Overnight => "o",
        }
    }

    pub fn parse(s: &str) -> Option<Session> {
        match s {
            "i" | "intraday" => Some(Session::Intraday),
            "o" | "overnight" => Some(Session::Overnight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TradingCalendar {
    trading_days: Vec<NaiveDate>,
    session_open: NaiveTime,
    session_close: NaiveTime,
    holidays: BTreeSet<NaiveDate>,
    start: NaiveDate,
    tz: Tz,
}

impl TradingCalendar {
    /// Weekdays in `[start, end]` minus holidays, with a 09:30/16:00 session
    /// in the given exchange timezone.
    pub fn new(
        start: NaiveDate,
        end: NaiveDate,
        holidays: impl IntoIterator<Item = NaiveDate>,
        timezone: &str,
    ) -> Result<TradingCalendar, CalendarError> {
        let tz: Tz = timezone
            .parse()
            .map_err(|_| CalendarError::BadTimezone(timezone.to_string()))?;
        let holidays: BTreeSet<NaiveDate> = holidays.into_iter().collect();
        let mut trading_days = Vec::new();
        let mut d = start;
        while d <= end {
            let weekday = d.weekday();
            if weekday != Weekday::Sat && weekday != Weekday::Sun && !holidays.contains(&d) {
                trading_days.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        if trading_days.is_empty() {
            return Err(CalendarError::Empty { start, end });
        }
        Ok(TradingCalendar {
            trading_days,
            session_open: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            session_close: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            holidays,
            start,
            tz,
        })
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn holidays(&self) -> &BTreeSet<NaiveDate> {
        &self.holidays
    }

    pub fn timezone(&self) -> Tz {
        self.tz
    }

    pub fn is_trading_day(&self, d: NaiveDate) -> bool {
        self.trading_days.binary_search(&d).is_ok()
    }

    pub fn first_day(&self) -> NaiveDate {
        self.trading_days[0]
    }

    pub fn last_day(&self) -> NaiveDate {
        *self.trading_days.last().unwrap()
    }

    /// Next trading day strictly after `d`, if covered.
    pub fn next_trading_day(&self, d: NaiveDate) -> Option<NaiveDate> {
        match self.trading_days.binary_search(&d) {
            Ok(i) => self.trading_days.get(i + 1).copied(),
            Err(i) => self.trading_days.get(i).copied(),
        }
    }

    /// Previous trading day strictly before `d`, if covered.
    pub fn prev_trading_day(&self, d: NaiveDate) -> Option<NaiveDate> {
        match self.trading_days.binary_search(&d) {
            Ok(0) | Err(0) => None,
            Ok(i) => Some(self.trading_days[i - 1]),
            Err(i) => Some(self.trading_days[i - 1]),
        }
    }

    /// Map a UTC instant to its (trading day, session). Total on the covered
    /// range: every instant between the first trading day's date and the last
    /// trading day's close belongs to exactly one session.
    pub fn classify(&self, ts: DateTime<Utc>) -> Result<(NaiveDate, Session), CalendarError> {
        let local = ts.with_timezone(&self.tz);
        let d = local.date_naive();
        let t = local.time();
        if d < self.start {
            return Err(CalendarError::OutOfRange(ts));
        }
        if self.is_trading_day(d) {
            if t >= self.session_open && t < self.session_close {
                return Ok((d, Session::Intraday));
            }
            if t < self.session_open {
                return Ok((d, Session::Overnight));
            }
            // at or after the close: next trading day's overnight session
            return self
                .next_trading_day(d)
                .map(|n| (n, Session::Overnight))
                .ok_or(CalendarError::OutOfRange(ts));
        }
        self.next_trading_day(d)
            .map(|n| (n, Session::Overnight))
            .ok_or(CalendarError::OutOfRange(ts))
    }

    /// Convert an exchange-local wall-clock datetime to UTC. Ambiguous local
    /// times (the fall-back DST hour) resolve to the earlier instant.
    pub fn local_to_utc(&self, date: NaiveDate, time: NaiveTime) -> DateTime<Utc> {
        match self.tz.from_local_datetime(&date.and_time(time)) {
            chrono::LocalResult::Single(dt) => dt.with_timezone(&Utc),
            chrono::LocalResult::Ambiguous(a, _) => a.with_timezone(&Utc),
            chrono::LocalResult::None => {
                // spring-forward gap: shift one hour later
                let shifted = date.and_time(time) + chrono::Duration::hours(1);
                self.tz
                    .from_local_datetime(&shifted)
                    .earliest()
                    .expect("shifted time exists")
                    .with_timezone(&Utc)
            }
        }
    }

    /// Calendar years that contain at least one trading day.
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self.trading_days.iter().map(|d| d.year()).collect();
        ys.dedup();
        ys
    }
}
