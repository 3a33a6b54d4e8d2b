//! Regression and inference kernel: OLS, Newey-West HAC covariance with
//! automatic lag selection, one- and two-way clustered covariance, panel fixed
//! effects by iterative demeaning, Wald tests, and the annual-return
//! correlation table.
//!
//! Everything here is a pure function of its inputs and safe to call
//! concurrently.

use crate::linalg::{self, psd_repair, LeastSquares, LinalgError, Mat};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EconError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("too few observations: {0}")]
    TooFewObservations(String),
    #[error("column {column} is constant within every fixed-effect group")]
    ConstantWithinGroups { column: usize },
    #[error("cluster dimension {0} has a single cluster")]
    SingleCluster(usize),
    #[error("restriction covariance RVR' is singular")]
    SingularRestriction,
    #[error("{0}")]
    Degenerate(String),
}

/// Which covariance estimator produced `RegressionResult::covariance`.
#[derive(Debug, Clone, PartialEq)]
pub enum SeType {
    Iid,
    NeweyWest { lags: usize },
    ClusterOne { clusters: usize },
    ClusterTwo { clusters_a: usize, clusters_b: usize },
}

#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub covariance: Mat,
    pub se_type: SeType,
    pub nobs: usize,
    pub r2: f64,
    pub adj_r2: f64,
    /// Set when the two-way cluster covariance needed eigenvalue truncation.
    pub psd_repaired: bool,
}

impl RegressionResult {
    pub fn se(&self) -> Vec<f64> {
        self.covariance.diag().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn t_stats(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(self.se())
            .map(|(b, s)| if s > 0.0 { b / s } else { f64::INFINITY * b.signum() })
            .collect()
    }

    /// Two-sided p-values. Iid uses the t distribution with n-p dof;
    /// the robust estimators use the normal reference.
    pub fn p_values(&self) -> Vec<f64> {
        let dof = self.nobs.saturating_sub(self.coefficients.len()).max(1) as f64;
        self.t_stats()
            .iter()
            .map(|&t| {
                if !t.is_finite() {
                    return 0.0;
                }
                match self.se_type {
                    SeType::Iid => {
                        let d = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
                        2.0 * (1.0 - d.cdf(t.abs()))
                    }
                    _ => {
                        let n = Normal::new(0.0, 1.0).unwrap();
                        2.0 * (1.0 - n.cdf(t.abs()))
                    }
                }
            })
            .collect()
    }

    fn min_clusters(&self) -> Option<usize> {
        match self.se_type {
            SeType::ClusterOne { clusters } => Some(clusters),
            SeType::ClusterTwo { clusters_a, clusters_b } => Some(clusters_a.min(clusters_b)),
            _ => None,
        }
    }
}

/// Significance stars at the 0.1 / 0.05 / 0.01 thresholds.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// A fitted least-squares model plus everything the covariance estimators need.
pub struct OlsContext {
    x: Mat,
    residuals: Vec<f64>,
    xtx_inv: Mat,
    coef: Vec<f64>,
    nobs: usize,
    r2: f64,
    adj_r2: f64,
}

impl OlsContext {
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

/// Fit y on X, optionally with observation weights (rows scaled by sqrt(w)).
pub fn fit(y: &[f64], x: &Mat, weights: Option<&[f64]>) -> Result<OlsContext, EconError> {
    let (xw, yw) = match weights {
        None => (x.clone(), y.to_vec()),
        Some(w) => {
            assert_eq!(w.len(), y.len(), "weights must match observations");
            let mut xw = x.clone();
            let mut yw = y.to_vec();
            for i in 0..y.len() {
                let s = w[i].sqrt();
                for v in xw.row_mut(i) {
                    *v *= s;
                }
                yw[i] *= s;
            }
            (xw, yw)
        }
    };
    let n = yw.len();
    let p = xw.cols();
    if n == 0 {
        return Err(EconError::TooFewObservations("empty sample".into()));
    }
    let LeastSquares { coef, residuals, xtx_inv, .. } = linalg::least_squares(&xw, &yw)?;
    let ybar = yw.iter().sum::<f64>() / n as f64;
    let sst: f64 = yw.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };
    let adj_r2 = if n > p + 1 && sst > 0.0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0)
    } else {
        f64::NAN
    };
    Ok(OlsContext { x: xw, residuals, xtx_inv, coef, nobs: n, r2, adj_r2 })
}

/// Plain OLS with the iid covariance s² (XᵀX)⁻¹.
pub fn ols(y: &[f64], x: &Mat, weights: Option<&[f64]>) -> Result<RegressionResult, EconError> {
    let ctx = fit(y, x, weights)?;
    Ok(iid_result(&ctx))
}

pub fn iid_result(ctx: &OlsContext) -> RegressionResult {
    let n = ctx.nobs;
    let p = ctx.x.cols();
    let dof = (n.saturating_sub(p)).max(1) as f64;
    let s2 = ctx.residuals.iter().map(|r| r * r).sum::<f64>() / dof;
    let mut cov = ctx.xtx_inv.clone();
    cov.scale(s2);
    RegressionResult {
        coefficients: ctx.coef.clone(),
        covariance: cov,
        se_type: SeType::Iid,
        nobs: n,
        r2: ctx.r2,
        adj_r2: ctx.adj_r2,
        psd_repaired: false,
    }
}

/// Newey-West plug-in bandwidth, floor(4 (T/100)^(2/9)).
pub fn auto_lag(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// HAC covariance with the Bartlett kernel. Observations must already be in
/// time order. With `lags = Some(0)` this is exactly the White covariance.
pub fn newey_west(ctx: &OlsContext, lags: Option<usize>) -> Result<RegressionResult, EconError> {
    let t = ctx.nobs;
    if t < 2 {
        return Err(EconError::TooFewObservations(format!("T = {t} for Newey-West")));
    }
    let l = lags.unwrap_or_else(|| auto_lag(t)).min(t - 1);
    let p = ctx.x.cols();

    // scores g_t = x_t e_t
    let scores: Vec<Vec<f64>> = (0..t)
        .map(|i| ctx.x.row(i).iter().map(|v| v * ctx.residuals[i]).collect())
        .collect();

    let mut meat = Mat::zeros(p, p);
    for g in &scores {
        accumulate_outer(&mut meat, g, g, 1.0);
    }
    for lag in 1..=l {
        let w = 1.0 - lag as f64 / (l as f64 + 1.0);
        for i in lag..t {
            accumulate_outer(&mut meat, &scores[i], &scores[i - lag], w);
            accumulate_outer(&mut meat, &scores[i - lag], &scores[i], w);
        }
    }
    let cov = sandwich(&ctx.xtx_inv, &meat);
    Ok(RegressionResult {
        coefficients: ctx.coef.clone(),
        covariance: cov,
        se_type: SeType::NeweyWest { lags: l },
        nobs: t,
        r2: ctx.r2,
        adj_r2: ctx.adj_r2,
        psd_repaired: false,
    })
}

/// Heteroskedasticity-robust (White) covariance: Newey-West at lag 0.
pub fn white(ctx: &OlsContext) -> Result<RegressionResult, EconError> {
    newey_west(ctx, Some(0))
}

/// One- or two-way cluster-robust covariance. Two-way follows
/// Cameron-Gelbach-Miller: V = V_a + V_b - V_ab, with negative eigenvalues
/// truncated to zero (flagged) if the difference is indefinite.
pub fn clustered_cov(
    ctx: &OlsContext,
    dim_a: &[u64],
    dim_b: Option<&[u64]>,
    small_sample: bool,
) -> Result<RegressionResult, EconError> {
    assert_eq!(dim_a.len(), ctx.nobs, "cluster labels must match observations");
    let ga = count_clusters(dim_a);
    if ga < 2 {
        return Err(EconError::SingleCluster(0));
    }
    match dim_b {
        None => {
            let meat = cluster_meat(ctx, dim_a, small_sample, ga);
            let cov = sandwich(&ctx.xtx_inv, &meat);
            Ok(RegressionResult {
                coefficients: ctx.coef.clone(),
                covariance: cov,
                se_type: SeType::ClusterOne { clusters: ga },
                nobs: ctx.nobs,
                r2: ctx.r2,
                adj_r2: ctx.adj_r2,
                psd_repaired: false,
            })
        }
        Some(db) => {
            assert_eq!(db.len(), ctx.nobs);
            let gb = count_clusters(db);
            if gb < 2 {
                return Err(EconError::SingleCluster(1));
            }
            let inter: Vec<u64> = dim_a
                .iter()
                .zip(db)
                .map(|(a, b)| crate::rng::fnv1a(&[a.to_le_bytes(), b.to_le_bytes()].concat()))
                .collect();
            let gi = count_clusters(&inter);
            let mut meat = cluster_meat(ctx, dim_a, small_sample, ga);
            meat.add_assign(&cluster_meat(ctx, db, small_sample, gb));
            meat.sub_assign(&cluster_meat(ctx, &inter, small_sample, gi));
            let mut cov = sandwich(&ctx.xtx_inv, &meat);
            let (fixed, repaired) = psd_repair(&cov);
            if repaired {
                cov = fixed;
            }
            Ok(RegressionResult {
                coefficients: ctx.coef.clone(),
                covariance: cov,
                se_type: SeType::ClusterTwo { clusters_a: ga, clusters_b: gb },
                nobs: ctx.nobs,
                r2: ctx.r2,
                adj_r2: ctx.adj_r2,
                psd_repaired: repaired,
            })
        }
    }
}

fn count_clusters(labels: &[u64]) -> usize {
    let mut seen = std::collections::HashSet::new();
    for &l in labels {
        seen.insert(l);
    }
    seen.len()
}

fn cluster_meat(ctx: &OlsContext, labels: &[u64], small_sample: bool, g: usize) -> Mat {
    let p = ctx.x.cols();
    let mut sums: HashMap<u64, Vec<f64>> = HashMap::new();
    for i in 0..ctx.nobs {
        let entry = sums.entry(labels[i]).or_insert_with(|| vec![0.0; p]);
        let e = ctx.residuals[i];
        for (acc, v) in entry.iter_mut().zip(ctx.x.row(i)) {
            *acc += v * e;
        }
    }
    let mut meat = Mat::zeros(p, p);
    for s in sums.values() {
        accumulate_outer(&mut meat, s, s, 1.0);
    }
    if small_sample && g > 1 {
        let n = ctx.nobs as f64;
        let k = p as f64;
        let c = (g as f64 / (g as f64 - 1.0)) * ((n - 1.0) / (n - k).max(1.0));
        meat.scale(c);
    }
    meat
}

fn accumulate_outer(m: &mut Mat, a: &[f64], b: &[f64], w: f64) {
    let p = a.len();
    for i in 0..p {
        let ai = w * a[i];
        if ai == 0.0 {
            continue;
        }
        let row = m.row_mut(i);
        for j in 0..p {
            row[j] += ai * b[j];
        }
    }
}

fn sandwich(bread: &Mat, meat: &Mat) -> Mat {
    let mut cov = bread.mat_mat(meat).mat_mat(bread);
    cov.symmetrize();
    cov
}

/// Fixed-effect options for `panel_fe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedEffects<'a> {
    None,
    One(&'a [u64]),
    Two(&'a [u64], &'a [u64]),
    Three(&'a [u64], &'a [u64], &'a [u64]),
}

/// Within-transformation panel regression. Demeans y and X by each
/// fixed-effect dimension iteratively (to 1e-10 for multi-way), then runs OLS
/// and, when cluster labels are supplied, the cluster-robust covariance.
/// R² and adjusted R² refer to the within model.
pub fn panel_fe(
    y: &[f64],
    x: &Mat,
    fe: FixedEffects,
    cluster_a: Option<&[u64]>,
    cluster_b: Option<&[u64]>,
) -> Result<RegressionResult, EconError> {
    let dims: Vec<&[u64]> = match fe {
        FixedEffects::None => vec![],
        FixedEffects::One(a) => vec![a],
        FixedEffects::Two(a, b) => vec![a, b],
        FixedEffects::Three(a, b, c) => vec![a, b, c],
    };
    let (yd, xd) = if dims.is_empty() {
        (y.to_vec(), x.clone())
    } else {
        let mut cols: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.col(j)).collect();
        let mut yd = y.to_vec();
        demean_within(&mut yd, &dims);
        let orig_scale: Vec<f64> =
            cols.iter().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        for c in cols.iter_mut() {
            demean_within(c, &dims);
        }
        for (j, c) in cols.iter().enumerate() {
            let after = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if orig_scale[j] > 0.0 && after <= 1e-10 * orig_scale[j] {
                return Err(EconError::ConstantWithinGroups { column: j });
            }
        }
        let mut xd = Mat::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                xd[(i, j)] = cols[j][i];
            }
        }
        (yd, xd)
    };

    let ctx = fit(&yd, &xd, None)?;
    match (cluster_a, cluster_b) {
        (None, _) => Ok(iid_result(&ctx)),
        (Some(a), None) => clustered_cov(&ctx, a, None, false),
        (Some(a), Some(b)) => clustered_cov(&ctx, a, Some(b), false),
    }
}

/// Iterative demeaning across one or more group dimensions.
fn demean_within(v: &mut [f64], dims: &[&[u64]]) {
    if dims.len() == 1 {
        demean_one(v, dims[0]);
        return;
    }
    for _ in 0..500 {
        let mut max_shift = 0.0f64;
        for d in dims {
            max_shift = max_shift.max(demean_one(v, d));
        }
        if max_shift < 1e-10 {
            break;
        }
    }
}

fn demean_one(v: &mut [f64], labels: &[u64]) -> f64 {
    let mut sums: HashMap<u64, (f64, usize)> = HashMap::new();
    for (x, &l) in v.iter().zip(labels) {
        let e = sums.entry(l).or_insert((0.0, 0));
        e.0 += *x;
        e.1 += 1;
    }
    let mut max_mean = 0.0f64;
    for (x, &l) in v.iter_mut().zip(labels) {
        let (s, n) = sums[&l];
        let m = s / n as f64;
        max_mean = max_mean.max(m.abs());
        *x -= m;
    }
    max_mean
}

/// Wald test that the indicated coefficient pairs are equal.
/// Returns the p-value: chi-square with q dof, or F(q, G-1) when the
/// covariance is cluster-robust.
pub fn wald_equality(result: &RegressionResult, pairs: &[(usize, usize)]) -> Result<f64, EconError> {
    let q = pairs.len();
    if q == 0 {
        return Err(EconError::Degenerate("no restrictions supplied".into()));
    }
    let p = result.coefficients.len();
    let mut r = Mat::zeros(q, p);
    let mut rb = vec![0.0; q];
    for (row, &(i, j)) in pairs.iter().enumerate() {
        r[(row, i)] = 1.0;
        r[(row, j)] = -1.0;
        rb[row] = result.coefficients[i] - result.coefficients[j];
    }
    let rvr = r.mat_mat(&result.covariance).mat_mat(&r.transpose());
    let sol = linalg::solve_spd(&rvr, &rb).map_err(|_| EconError::SingularRestriction)?;
    let w: f64 = rb.iter().zip(&sol).map(|(a, b)| a * b).sum();
    let w = w.max(0.0);

    let pval = match result.min_clusters() {
        Some(g) if g > 1 => {
            let f = FisherSnedecor::new(q as f64, (g - 1) as f64)
                .map_err(|_| EconError::Degenerate("bad F dof".into()))?;
            1.0 - f.cdf(w / q as f64)
        }
        _ => {
            let c = ChiSquared::new(q as f64).unwrap();
            1.0 - c.cdf(w)
        }
    };
    Ok(pval.clamp(0.0, 1.0))
}

/// One stacked firm-year observation of annual session returns.
#[derive(Debug, Clone, Copy)]
pub struct AnnualReturnRow {
    pub firm: u32,
    pub year: i32,
    pub intraday: f64,
    pub overnight: f64,
}

#[derive(Debug, Clone)]
pub struct CorrCell {
    /// Name of the year-t variable.
    pub lag: &'static str,
    /// Name of the year-t+1 variable.
    pub lead: &'static str,
    pub corr: f64,
    pub tstat: f64,
    pub pvalue: f64,
    pub nobs: usize,
}

/// Correlations between annual intraday/overnight/close-to-close returns in
/// consecutive years, with significance from regressing the standardized lead
/// on the standardized lag under two-way (year, firm) clustering.
pub fn correlation_table(rows: &[AnnualReturnRow]) -> Result<Vec<CorrCell>, EconError> {
    // pair year t with t+1 within firm
    let mut by_key: HashMap<(u32, i32), (f64, f64)> = HashMap::new();
    for r in rows {
        by_key.insert((r.firm, r.year), (r.intraday, r.overnight));
    }
    let mut pairs: Vec<(u32, i32, (f64, f64), (f64, f64))> = Vec::new();
    for r in rows {
        if let Some(&next) = by_key.get(&(r.firm, r.year + 1)) {
            pairs.push((r.firm, r.year, (r.intraday, r.overnight), next));
        }
    }
    if pairs.len() < 3 {
        return Err(EconError::TooFewObservations(format!(
            "{} firm-year transition rows",
            pairs.len()
        )));
    }
    pairs.sort_by_key(|p| (p.0, p.1));

    let total = |v: (f64, f64)| v.0 + v.1;
    let specs: [(&'static str, &'static str, fn((f64, f64)) -> f64, fn((f64, f64)) -> f64); 5] = [
        ("r_intra_t", "r_intra_t+1", |v| v.0, |v| v.0),
        ("r_intra_t", "r_over_t+1", |v| v.0, |v| v.1),
        ("r_over_t", "r_intra_t+1", |v| v.1, |v| v.0),
        ("r_over_t", "r_over_t+1", |v| v.1, |v| v.1),
        ("r_t", "r_t+1", total, total),
    ];

    let years: Vec<u64> = pairs.iter().map(|p| p.1 as u64).collect();
    let firms: Vec<u64> = pairs.iter().map(|p| p.0 as u64).collect();

    let mut out = Vec::new();
    for (lag_name, lead_name, f_lag, f_lead) in specs {
        let xs: Vec<f64> = pairs.iter().map(|p| f_lag(p.2)).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| f_lead(p.3)).collect();
        let zx = standardize(&xs)?;
        let zy = standardize(&ys)?;
        let corr = linalg::dot(&zx, &zy) / zx.len() as f64;

        let mut x = Mat::zeros(zx.len(), 2);
        for i in 0..zx.len() {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = zx[i];
        }
        let ctx = fit(&zy, &x, None)?;
        let res = clustered_cov(&ctx, &years, Some(&firms), false)?;
        let t = res.t_stats()[1];
        let p = res.p_values()[1];
        out.push(CorrCell { lag: lag_name, lead: lead_name, corr, tstat: t, pvalue: p, nobs: zx.len() });
    }
    Ok(out)
}

fn standardize(v: &[f64]) -> Result<Vec<f64>, EconError> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(EconError::Degenerate("zero variance in correlation input".into()));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}
