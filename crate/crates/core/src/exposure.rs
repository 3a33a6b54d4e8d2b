//! Firm-level topic exposure panels: document-topic weights aggregated per
//! firm, period, and session, n-year rolling sums, and the topic-persistence
//! panel regression.

use crate::corpus::{Article, Session};
use crate::econometrics::{self, EconError, FixedEffects, RegressionResult};
use crate::linalg::Mat;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{Datelike, NaiveDate};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExposureError {
    #[error("article {article} references firm {firm} absent from the firm table")]
    UnknownFirm { article: String, firm: u32 },
    #[error("article {0} has no document-topic distribution")]
    MissingTheta(String),
    #[error("window_sum requires an annual panel")]
    NotAnnual,
    #[error("persistence regression needs at least 5 consecutive years, found {0}")]
    TooFewYears(usize),
    #[error("degenerate persistence design: column {column} is constant within every fixed-effect group")]
    DegenerateDesign { column: usize },
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error("panel cache is not in a supported format: {0}")]
    BadContainer(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Daily,
    Annual,
}

/// A day or a calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PeriodKey {
    Day(NaiveDate),
    Year(i32),
}

impl PeriodKey {
    pub fn year(&self) -> i32 {
        match self {
            PeriodKey::Day(d) => d.year(),
            PeriodKey::Year(y) => *y,
        }
    }
}

/// z^p_{j,k,t}: per (firm, period, session) sums of document-topic weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePanel {
    granularity: Granularity,
    topic_count: usize,
    values: BTreeMap<(u32, PeriodKey, Session), Vec<f64>>,
}

impl ExposurePanel {
    pub fn new(granularity: Granularity, topic_count: usize) -> ExposurePanel {
        ExposurePanel { granularity, topic_count, values: BTreeMap::new() }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn topic_count(&self) -> usize {
        self.topic_count
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&mut self, firm: u32, key: PeriodKey, session: Session, weights: &[f64]) {
        debug_assert_eq!(weights.len(), self.topic_count);
        let cell = self
            .values
            .entry((firm, key, session))
            .or_insert_with(|| vec![0.0; self.topic_count]);
        for (acc, w) in cell.iter_mut().zip(weights) {
            *acc += w;
        }
    }

    pub fn get(&self, firm: u32, key: PeriodKey, session: Session) -> Option<&[f64]> {
        self.values.get(&(firm, key, session)).map(Vec::as_slice)
    }

    /// z^all = z^i + z^o, entrywise.
    pub fn combined(&self, firm: u32, key: PeriodKey) -> Option<Vec<f64>> {
        let i = self.get(firm, key, Session::Intraday);
        let o = self.get(firm, key, Session::Overnight);
        match (i, o) {
            (None, None) => None,
            (a, b) => {
                let mut out = vec![0.0; self.topic_count];
                for z in [a, b].into_iter().flatten() {
                    for (acc, v) in out.iter_mut().zip(z) {
                        *acc += v;
                    }
                }
                Some(out)
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, PeriodKey, Session), &Vec<f64>)> {
        self.values.iter()
    }

    pub fn firms(&self) -> BTreeSet<u32> {
        self.values.keys().map(|k| k.0).collect()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.values.keys().map(|k| k.1.year()).collect()
    }

    /// Sum daily cells into calendar-year cells, sessions kept separate.
    pub fn to_annual(&self) -> ExposurePanel {
        let mut annual = ExposurePanel::new(Granularity::Annual, self.topic_count);
        for ((firm, key, session), z) in &self.values {
            annual.add(*firm, PeriodKey::Year(key.year()), *session, z);
        }
        annual
    }

    /// Insert zero cells (both sessions) for member firm-years with no news,
    /// so firms without coverage keep an explicit zero exposure. Annual only.
    pub fn densify_annual(&mut self, firm_years: &[(u32, i32)]) {
        debug_assert_eq!(self.granularity, Granularity::Annual);
        for &(firm, year) in firm_years {
            for session in [Session::Intraday, Session::Overnight] {
                self.values
                    .entry((firm, PeriodKey::Year(year), session))
                    .or_insert_with(|| vec![0.0; self.topic_count]);
            }
        }
    }
}

/// z^p_{j,k,t} = Σ_{a ∈ A^p_{j,t}} theta_a[k]. An article mentioning several
/// firms contributes its full theta to each of them.
pub fn compute_exposures(
    articles: &[Article],
    thetas: &[Vec<f64>],
    granularity: Granularity,
    known_firms: &BTreeSet<u32>,
) -> Result<ExposurePanel, ExposureError> {
    if articles.len() != thetas.len() {
        return Err(ExposureError::MissingTheta(format!(
            "{} articles vs {} thetas",
            articles.len(),
            thetas.len()
        )));
    }
    let k = thetas.first().map_or(0, Vec::len);
    let mut panel = ExposurePanel::new(granularity, k);
    for (article, theta) in articles.iter().zip(thetas) {
        let key = match granularity {
            Granularity::Daily => PeriodKey::Day(article.trading_day),
            Granularity::Annual => PeriodKey::Year(article.trading_day.year()),
        };
        for &firm in &article.firm_ids {
            if !known_firms.contains(&firm) {
                return Err(ExposureError::UnknownFirm {
                    article: article.article_id.clone(),
                    firm,
                });
            }
            panel.add(firm, key, article.session, theta);
        }
    }
    Ok(panel)
}

/// n-year rolling sums z̄ for each session, per firm and target year.
#[derive(Debug, Clone)]
pub struct WindowedExposure {
    pub n: usize,
    topic_count: usize,
    values: BTreeMap<(u32, i32), WindowedCell>,
}

#[derive(Debug, Clone)]
pub struct WindowedCell {
    pub intraday: Vec<f64>,
    pub overnight: Vec<f64>,
}

impl WindowedCell {
    /// z̄ = z̄^i + z̄^o.
    pub fn combined(&self) -> Vec<f64> {
        self.intraday.iter().zip(&self.overnight).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct WindowReport {
    /// (firm, year) pairs skipped for insufficient history.
    pub omitted: Vec<(u32, i32)>,
}

impl WindowedExposure {
    pub fn get(&self, firm: u32, year: i32) -> Option<&WindowedCell> {
        self.values.get(&(firm, year))
    }

    pub fn topic_count(&self) -> usize {
        self.topic_count
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.values.keys().map(|k| k.1).collect()
    }

    pub fn firms_in_year(&self, year: i32) -> Vec<u32> {
        self.values.keys().filter(|k| k.1 == year).map(|k| k.0).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, i32), &WindowedCell)> {
        self.values.iter()
    }
}

/// Exact n-year sums per firm, topic, and session. Target years with fewer
/// than n years of history for a firm are omitted and reported.
pub fn window_sum(
    panel: &ExposurePanel,
    n: usize,
) -> Result<(WindowedExposure, WindowReport), ExposureError> {
    if panel.granularity() != Granularity::Annual {
        return Err(ExposureError::NotAnnual);
    }
    assert!(n >= 1, "window must be at least one year");
    let k = panel.topic_count();

    // collect years present per firm (a year counts if either session exists)
    let mut firm_years: BTreeMap<u32, BTreeSet<i32>> = BTreeMap::new();
    for ((firm, key, _), _) in panel.iter() {
        firm_years.entry(*firm).or_default().insert(key.year());
    }

    let mut values = BTreeMap::new();
    let mut report = WindowReport::default();
    for (&firm, years) in &firm_years {
        for &t in years {
            let window: Vec<i32> = ((t - n as i32 + 1)..=t).collect();
            if !window.iter().all(|y| years.contains(y)) {
                report.omitted.push((firm, t));
                continue;
            }
            let mut cell =
                WindowedCell { intraday: vec![0.0; k], overnight: vec![0.0; k] };
            for &y in &window {
                if let Some(z) = panel.get(firm, PeriodKey::Year(y), Session::Intraday) {
                    for (acc, v) in cell.intraday.iter_mut().zip(z) {
                        *acc += v;
                    }
                }
                if let Some(z) = panel.get(firm, PeriodKey::Year(y), Session::Overnight) {
                    for (acc, v) in cell.overnight.iter_mut().zip(z) {
                        *acc += v;
                    }
                }
            }
            values.insert((firm, t), cell);
        }
    }
    Ok((WindowedExposure { n, topic_count: k, values }, report))
}

/// Session selector for the persistence regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionSel {
    Intraday,
    Overnight,
    All,
}

/// Fixed-effect choices for the persistence regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersistenceFe {
    None,
    Topic,
    Firm,
    Both,
}

#[derive(Debug, Clone)]
pub struct PersistenceResult {
    pub rho: f64,
    pub se: f64,
    pub adj_r2: f64,
    pub nobs: usize,
    pub regression: RegressionResult,
}

/// Regress z^p_{j,k,t+1} on the mean of z^p over years t-3..t, with optional
/// topic/firm fixed effects and standard errors double-clustered on topic and
/// firm. The trailing window is fixed at 4 years.
pub fn persistence_regression(
    panel: &ExposurePanel,
    session: SessionSel,
    fe: PersistenceFe,
) -> Result<PersistenceResult, ExposureError> {
    const WINDOW: i32 = 4;
    if panel.granularity() != Granularity::Annual {
        return Err(ExposureError::NotAnnual);
    }
    let k = panel.topic_count();

    let fetch = |firm: u32, year: i32| -> Option<Vec<f64>> {
        match session {
            SessionSel::Intraday => {
                panel.get(firm, PeriodKey::Year(year), Session::Intraday).map(<[f64]>::to_vec)
            }
            SessionSel::Overnight => {
                panel.get(firm, PeriodKey::Year(year), Session::Overnight).map(<[f64]>::to_vec)
            }
            SessionSel::All => panel.combined(firm, PeriodKey::Year(year)),
        }
    };

    let years = panel.years();
    if years.len() < (WINDOW + 1) as usize {
        return Err(ExposureError::TooFewYears(years.len()));
    }

    let mut y = Vec::new();
    let mut mean_reg = Vec::new();
    let mut topic_labels: Vec<u64> = Vec::new();
    let mut firm_labels: Vec<u64> = Vec::new();
    for firm in panel.firms() {
        for &t in &years {
            let lead = match fetch(firm, t + 1) {
                Some(z) => z,
                None => continue,
            };
            let window: Option<Vec<Vec<f64>>> =
                ((t - WINDOW + 1)..=t).map(|u| fetch(firm, u)).collect();
            let window = match window {
                Some(w) => w,
                None => continue,
            };
            for topic in 0..k {
                let m: f64 = window.iter().map(|z| z[topic]).sum::<f64>() / WINDOW as f64;
                y.push(lead[topic]);
                mean_reg.push(m);
                topic_labels.push(topic as u64);
                firm_labels.push(firm as u64);
            }
        }
    }
    if y.is_empty() {
        return Err(ExposureError::TooFewYears(years.len()));
    }

    let (x, rho_idx, fe_spec) = match fe {
        PersistenceFe::None => {
            let rows: Vec<Vec<f64>> = mean_reg.iter().map(|&m| vec![1.0, m]).collect();
            (Mat::from_rows(&rows), 1usize, FixedEffects::None)
        }
        PersistenceFe::Topic => {
            let rows: Vec<Vec<f64>> = mean_reg.iter().map(|&m| vec![m]).collect();
            (Mat::from_rows(&rows), 0, FixedEffects::One(&topic_labels))
        }
        PersistenceFe::Firm => {
            let rows: Vec<Vec<f64>> = mean_reg.iter().map(|&m| vec![m]).collect();
            (Mat::from_rows(&rows), 0, FixedEffects::One(&firm_labels))
        }
        PersistenceFe::Both => {
            let rows: Vec<Vec<f64>> = mean_reg.iter().map(|&m| vec![m]).collect();
            (Mat::from_rows(&rows), 0, FixedEffects::Two(&topic_labels, &firm_labels))
        }
    };

    let regression =
        econometrics::panel_fe(&y, &x, fe_spec, Some(&topic_labels), Some(&firm_labels)).map_err(
            |e| match e {
                EconError::ConstantWithinGroups { column } => {
                    ExposureError::DegenerateDesign { column }
                }
                other => ExposureError::Econ(other),
            },
        )?;
    Ok(PersistenceResult {
        rho: regression.coefficients[rho_idx],
        se: regression.se()[rho_idx],
        adj_r2: regression.adj_r2,
        nobs: regression.nobs,
        regression,
    })
}

/// Columnar CSV: firm, topic, period, session, value.
pub fn write_panel_csv<W: Write>(w: W, panel: &ExposurePanel) -> Result<(), ExposureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm", "topic", "period", "session", "value"])
        .map_err(|e| ExposureError::BadContainer(e.to_string()))?;
    for ((firm, key, session), z) in panel.iter() {
        let period = match key {
            PeriodKey::Day(d) => d.to_string(),
            PeriodKey::Year(y) => y.to_string(),
        };
        for (topic, &v) in z.iter().enumerate() {
            wr.write_record([
                firm.to_string(),
                topic.to_string(),
                period.clone(),
                session.label().to_string(),
                format!("{v}"),
            ])
            .map_err(|e| ExposureError::BadContainer(e.to_string()))?;
        }
    }
    wr.flush()?;
    Ok(())
}

const PANEL_MAGIC: &[u8; 4] = b"NFXP";
const PANEL_VERSION: u32 = 1;

/// Compact binary cache, bit-exact round trip.
pub fn write_panel_bin<W: Write>(w: &mut W, panel: &ExposurePanel) -> Result<(), ExposureError> {
    w.write_all(PANEL_MAGIC)?;
    w.write_u32::<LittleEndian>(PANEL_VERSION)?;
    w.write_u8(match panel.granularity() {
        Granularity::Daily => 0,
        Granularity::Annual => 1,
    })?;
    w.write_u32::<LittleEndian>(panel.topic_count() as u32)?;
    w.write_u64::<LittleEndian>(panel.len() as u64)?;
    for ((firm, key, session), z) in panel.iter() {
        w.write_u32::<LittleEndian>(*firm)?;
        match key {
            PeriodKey::Day(d) => {
                w.write_u8(0)?;
                w.write_i32::<LittleEndian>(d.num_days_from_ce())?;
            }
            PeriodKey::Year(y) => {
                w.write_u8(1)?;
                w.write_i32::<LittleEndian>(*y)?;
            }
        }
        w.write_u8(match session {
            Session::Intraday => 0,
            Session::Overnight => 1,
        })?;
        for &v in z {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_panel_bin<R: Read>(r: &mut R) -> Result<ExposurePanel, ExposureError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PANEL_MAGIC {
        return Err(ExposureError::BadContainer("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != PANEL_VERSION {
        return Err(ExposureError::BadContainer(format!("unsupported version {version}")));
    }
    let granularity = match r.read_u8()? {
        0 => Granularity::Daily,
        1 => Granularity::Annual,
        g => return Err(ExposureError::BadContainer(format!("bad granularity {g}"))),
    };
    let k = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut panel = ExposurePanel::new(granularity, k);
    for _ in 0..n {
        let firm = r.read_u32::<LittleEndian>()?;
        let key = match r.read_u8()? {
            0 => {
                let days = r.read_i32::<LittleEndian>()?;
                PeriodKey::Day(
                    NaiveDate::from_num_days_from_ce_opt(days)
                        .ok_or_else(|| ExposureError::BadContainer("bad date".into()))?,
                )
            }
            1 => PeriodKey::Year(r.read_i32::<LittleEndian>()?),
            t => return Err(ExposureError::BadContainer(format!("bad period tag {t}"))),
        };
        let session = match r.read_u8()? {
            0 => Session::Intraday,
            1 => Session::Overnight,
            s => return Err(ExposureError::BadContainer(format!("bad session tag {s}"))),
        };
        let mut z = Vec::with_capacity(k);
        for _ in 0..k {
            z.push(r.read_f64::<LittleEndian>()?);
        }
        panel.add(firm, key, session, &z);
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Article;
    use rand::Rng;

    fn article(id: &str, firms: &[u32], day: (i32, u32, u32), session: Session) -> Article {
        Article {
            article_id: id.into(),
            firm_ids: firms.to_vec(),
            trading_day: NaiveDate::from_ymd_opt(day.0, day.1, day.2).unwrap(),
            session,
            tokens: vec![0],
            token_count: 1,
        }
    }

    fn firms(ids: &[u32]) -> BTreeSet<u32> {
        ids.iter().copied().collect()
    }

    #[test]
    fn single_article_identity() {
        let articles = vec![article("a", &[3], (2020, 5, 4), Session::Overnight)];
        let thetas = vec![vec![0.5, 0.5]];
        let panel =
            compute_exposures(&articles, &thetas, Granularity::Daily, &firms(&[3, 7])).unwrap();
        let key = PeriodKey::Day(NaiveDate::from_ymd_opt(2020, 5, 4).unwrap());
        assert_eq!(panel.get(3, key, Session::Overnight).unwrap(), &[0.5, 0.5]);
        assert!(panel.get(3, key, Session::Intraday).is_none());
    }

    #[test]
    fn multi_firm_article_contributes_full_theta_to_each() {
        let articles = vec![article("a", &[3, 7], (2020, 5, 4), Session::Overnight)];
        let thetas = vec![vec![0.5, 0.5]];
        let panel =
            compute_exposures(&articles, &thetas, Granularity::Daily, &firms(&[3, 7])).unwrap();
        let key = PeriodKey::Day(NaiveDate::from_ymd_opt(2020, 5, 4).unwrap());
        assert_eq!(panel.get(3, key, Session::Overnight).unwrap(), &[0.5, 0.5]);
        assert_eq!(panel.get(7, key, Session::Overnight).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn unknown_firm_is_error() {
        let articles = vec![article("a", &[9], (2020, 5, 4), Session::Intraday)];
        let thetas = vec![vec![1.0]];
        assert!(matches!(
            compute_exposures(&articles, &thetas, Granularity::Daily, &firms(&[3])),
            Err(ExposureError::UnknownFirm { firm: 9, .. })
        ));
    }

    #[test]
    fn panel_matches_brute_force_accumulation() {
        let mut rng = crate::rng::stream_rng(8, 0);
        let k = 3;
        let mut articles = Vec::new();
        let mut thetas = Vec::new();
        for i in 0..50 {
            let firm = rng.gen_range(0..5u32);
            let month = rng.gen_range(1..4u32);
            let day = rng.gen_range(1..28u32);
            let session = if rng.gen_bool(0.5) { Session::Intraday } else { Session::Overnight };
            articles.push(article(&format!("a{i}"), &[firm], (2020, month, day), session));
            let mut t: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = t.iter().sum();
            t.iter_mut().for_each(|v| *v /= s);
            thetas.push(t);
        }
        let panel =
            compute_exposures(&articles, &thetas, Granularity::Daily, &firms(&[0, 1, 2, 3, 4]))
                .unwrap();

        // brute force
        let mut expect: BTreeMap<(u32, NaiveDate, Session), Vec<f64>> = BTreeMap::new();
        for (a, t) in articles.iter().zip(&thetas) {
            let e = expect
                .entry((a.firm_ids[0], a.trading_day, a.session))
                .or_insert_with(|| vec![0.0; k]);
            for (acc, v) in e.iter_mut().zip(t) {
                *acc += v;
            }
        }
        for ((firm, day, session), z) in expect {
            assert_eq!(panel.get(firm, PeriodKey::Day(day), session).unwrap(), z.as_slice());
        }

        // annual equals the sum of daily entries, sessions separate
        let annual = panel.to_annual();
        let mut total_daily = vec![0.0; k];
        let mut total_annual = vec![0.0; k];
        for (_, z) in panel.iter() {
            for (a, v) in total_daily.iter_mut().zip(z) {
                *a += v;
            }
        }
        for (_, z) in annual.iter() {
            for (a, v) in total_annual.iter_mut().zip(z) {
                *a += v;
            }
        }
        for (a, b) in total_daily.iter().zip(&total_annual) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn session_additivity_is_exact() {
        let mut panel = ExposurePanel::new(Granularity::Annual, 2);
        panel.add(1, PeriodKey::Year(2020), Session::Intraday, &[0.25, 0.5]);
        panel.add(1, PeriodKey::Year(2020), Session::Overnight, &[0.5, 0.125]);
        assert_eq!(panel.combined(1, PeriodKey::Year(2020)).unwrap(), vec![0.75, 0.625]);
    }

    fn random_annual_panel(firms_n: u32, years: std::ops::RangeInclusive<i32>, k: usize, seed: u64) -> ExposurePanel {
        let mut rng = crate::rng::stream_rng(seed, 1);
        let mut panel = ExposurePanel::new(Granularity::Annual, k);
        for firm in 0..firms_n {
            for year in years.clone() {
                for session in [Session::Intraday, Session::Overnight] {
                    let z: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                    panel.add(firm, PeriodKey::Year(year), session, &z);
                }
            }
        }
        panel
    }

    #[test]
    fn window_of_one_is_identity_and_constant_series_scale() {
        let panel = random_annual_panel(3, 2015..=2020, 2, 4);
        let (w1, rep) = window_sum(&panel, 1).unwrap();
        assert!(rep.omitted.is_empty());
        for ((firm, year), cell) in w1.iter() {
            assert_eq!(
                panel.get(*firm, PeriodKey::Year(*year), Session::Intraday).unwrap(),
                cell.intraday.as_slice()
            );
        }

        // constant series: n=4 gives 4c
        let mut cpanel = ExposurePanel::new(Granularity::Annual, 1);
        for y in 2000..=2010 {
            cpanel.add(1, PeriodKey::Year(y), Session::Intraday, &[0.3]);
            cpanel.add(1, PeriodKey::Year(y), Session::Overnight, &[0.2]);
        }
        let (w4, _) = window_sum(&cpanel, 4).unwrap();
        let cell = w4.get(1, 2005).unwrap();
        assert!((cell.intraday[0] - 1.2).abs() < 1e-12);
        assert!((cell.overnight[0] - 0.8).abs() < 1e-12);
        assert!((cell.combined()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_matches_brute_force_and_telescopes() {
        let panel = random_annual_panel(4, 2010..=2022, 3, 9);
        let (w, rep) = window_sum(&panel, 4).unwrap();
        // first three years lack history
        assert_eq!(rep.omitted.len(), 3 * 4);

        for ((firm, year), cell) in w.iter() {
            let mut expect_i = vec![0.0; 3];
            for y in (*year - 3)..=*year {
                let z = panel.get(*firm, PeriodKey::Year(y), Session::Intraday).unwrap();
                for (a, v) in expect_i.iter_mut().zip(z) {
                    *a += v;
                }
            }
            for (a, b) in cell.intraday.iter().zip(&expect_i) {
                assert!((a - b).abs() < 1e-12);
            }
        }

        // telescoping: zbar_t - zbar_{t-1} = z_t - z_{t-n}
        for firm in 0..4u32 {
            for t in 2015..=2022 {
                let cur = w.get(firm, t).unwrap();
                let prev = w.get(firm, t - 1).unwrap();
                let z_t = panel.get(firm, PeriodKey::Year(t), Session::Overnight).unwrap();
                let z_tn = panel.get(firm, PeriodKey::Year(t - 4), Session::Overnight).unwrap();
                for topic in 0..3 {
                    let lhs = cur.overnight[topic] - prev.overnight[topic];
                    let rhs = z_t[topic] - z_tn[topic];
                    assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn perfect_persistence_recovers_rho_one() {
        // construct z_{t+1} = trailing mean exactly
        let k = 2;
        let mut panel = ExposurePanel::new(Granularity::Annual, k);
        let mut rng = crate::rng::stream_rng(12, 0);
        for firm in 0..5u32 {
            let mut hist: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..k).map(|_| 1.0 + rng.gen::<f64>()).collect())
                .collect();
            for (y, z) in hist.iter().enumerate() {
                panel.add(firm, PeriodKey::Year(2000 + y as i32), Session::Intraday, z);
                panel.add(firm, PeriodKey::Year(2000 + y as i32), Session::Overnight, z);
            }
            for y in 4..12 {
                let mean: Vec<f64> = (0..k)
                    .map(|t| hist[hist.len() - 4..].iter().map(|z| z[t]).sum::<f64>() / 4.0)
                    .collect();
                panel.add(firm, PeriodKey::Year(2000 + y), Session::Intraday, &mean);
                panel.add(firm, PeriodKey::Year(2000 + y), Session::Overnight, &mean);
                hist.push(mean);
            }
        }
        let res = persistence_regression(&panel, SessionSel::All, PersistenceFe::None).unwrap();
        assert!((res.rho - 1.0).abs() < 1e-8, "rho = {}", res.rho);
        assert!(res.regression.r2 > 1.0 - 1e-9);
    }

    #[test]
    fn too_few_years_is_error() {
        let panel = random_annual_panel(2, 2018..=2020, 1, 3);
        assert!(matches!(
            persistence_regression(&panel, SessionSel::All, PersistenceFe::None),
            Err(ExposureError::TooFewYears(_))
        ));
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let panel = random_annual_panel(2, 2015..=2017, 2, 5);
        let mut bin = Vec::new();
        write_panel_bin(&mut bin, &panel).unwrap();
        let back = read_panel_bin(&mut bin.as_slice()).unwrap();
        assert_eq!(back, panel);

        let mut csv_out = Vec::new();
        write_panel_csv(&mut csv_out, &panel).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("firm,topic,period,session,value"));
        assert_eq!(text.lines().count(), 1 + panel.len() * panel.topic_count());
    }
}
