//! Regulation matrix estimation: one Lasso regression of each gene expression
//! column on all regulators, solved by cyclic coordinate descent.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::{format_f64, CsvTable};
use crate::par::{map_range, Execution};

/// Above this many regulators the Gram matrix is not materialized.
pub const GRAM_MAX_REGULATORS: usize = 2000;
pub const MAX_SWEEPS: usize = 10_000;
/// Coordinate descent stops once no coefficient moves more than this in a sweep
/// (and the stationarity conditions hold).
pub const CHANGE_TOL: f64 = 1e-7;
/// Relative KKT slack the solver drives every column below before returning.
const SOLVER_KKT_TOL: f64 = 1e-9;
/// Path screening stops once max_l ‖R_l‖²·Δθ_l² falls below this fraction of ‖g‖².
pub const PATH_TOL: f64 = 1e-7;
/// Path screening stops once this fraction of ‖g‖² is explained.
pub const PATH_MAX_R2: f64 = 0.999;
pub const BIC_PATH_LEN: usize = 50;
pub const BIC_PATH_RATIO: f64 = 0.01;

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum LambdaRule {
    /// One penalty shared by every gene column.
    Fixed(f64),
    /// Per-column BIC along a log-spaced path from λ_max down to 0.01·λ_max.
    PerColumnBic,
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::PerColumnBic
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegulationMatrix {
    /// q×p coefficients; column j regresses gene j on the regulators.
    pub theta: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    pub nnz: Vec<usize>,
}

impl RegulationMatrix {
    pub fn q(&self) -> usize {
        self.theta.nrows()
    }
    pub fn p(&self) -> usize {
        self.theta.ncols()
    }

    pub fn from_theta(theta: DMatrix<f64>, lambdas: Vec<f64>) -> Self {
        let nnz = theta.column_iter().map(|c| c.iter().filter(|v| **v != 0.0).count()).collect();
        Self { theta, lambdas, nnz }
    }

    /// Sparse `row,col,value` export (zero-based indices).
    pub fn to_triplets(&self) -> CsvTable {
        let mut t = CsvTable::new(&["row", "col", "value"]);
        for j in 0..self.p() {
            for l in 0..self.q() {
                let v = self.theta[(l, j)];
                if v != 0.0 {
                    t.push(vec![l.to_string(), j.to_string(), format_f64(v)]);
                }
            }
        }
        t
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        self.to_triplets().write(path)
    }

    pub fn write_dense(&self, path: &Path) -> Result<()> {
        let names: Vec<String> = (0..self.p()).map(|j| format!("gene{j}")).collect();
        crate::io::write_matrix_csv(path, &names, &self.theta)
    }
}

#[derive(Clone, Copy)]
enum Stop {
    /// Coefficient change below `CHANGE_TOL` and the KKT conditions verified.
    Strict,
    /// Largest ‖R_l‖²·Δθ_l² of a sweep below the given absolute bound.
    Path(f64),
}

/// Precomputed regulator design shared by every column solve.
pub struct LassoDesign<'a> {
    r: &'a DMatrix<f64>,
    gram: Option<DMatrix<f64>>,
    col_sq: Vec<f64>,
}

impl<'a> LassoDesign<'a> {
    pub fn new(r: &'a DMatrix<f64>) -> Self {
        Self::with_gram_limit(r, GRAM_MAX_REGULATORS)
    }

    pub fn with_gram_limit(r: &'a DMatrix<f64>, gram_limit: usize) -> Self {
        let col_sq = r.column_iter().map(|c| c.norm_squared()).collect();
        let gram = (r.ncols() <= gram_limit).then(|| r.tr_mul(r));
        Self { r, gram, col_sq }
    }

    pub fn uses_gram(&self) -> bool {
        self.gram.is_some()
    }

    pub fn q(&self) -> usize {
        self.r.ncols()
    }

    pub fn correlations(&self, g: &DVector<f64>) -> DVector<f64> {
        self.r.tr_mul(g)
    }

    /// Minimizes ½‖g − Rθ‖² + λ‖θ‖₁ starting from `theta` (warm start), in place.
    /// Returns the number of sweeps used.
    pub fn solve(
        &self,
        g: &DVector<f64>,
        corr: &DVector<f64>,
        lambda: f64,
        theta: &mut DVector<f64>,
    ) -> Result<usize> {
        self.solve_until(g, corr, lambda, theta, Stop::Strict)
    }

    fn solve_until(
        &self,
        g: &DVector<f64>,
        corr: &DVector<f64>,
        lambda: f64,
        theta: &mut DVector<f64>,
        stop: Stop,
    ) -> Result<usize> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Numeric(format!("invalid lasso penalty {lambda}")));
        }
        match &self.gram {
            Some(gram) => self.solve_covariance(gram, corr, lambda, theta, stop),
            None => self.solve_naive(g, lambda, theta, stop),
        }
    }

    fn solve_covariance(
        &self,
        gram: &DMatrix<f64>,
        corr: &DVector<f64>,
        lambda: f64,
        theta: &mut DVector<f64>,
        stop: Stop,
    ) -> Result<usize> {
        let q = self.q();
        let mut fitted = gram * &*theta;
        let mut max_change = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            max_change = 0.0;
            let mut max_scaled: f64 = 0.0;
            for l in 0..q {
                let d = self.col_sq[l];
                if d <= 0.0 {
                    continue;
                }
                let old = theta[l];
                let z = corr[l] - fitted[l] + d * old;
                let new = soft_threshold(z, lambda) / d;
                let delta = new - old;
                if delta != 0.0 {
                    theta[l] = new;
                    fitted.axpy(delta, &gram.column(l), 1.0);
                    max_change = max_change.max(delta.abs());
                    max_scaled = max_scaled.max(d * delta * delta);
                }
            }
            if let Stop::Path(limit) = stop {
                if max_scaled < limit {
                    return Ok(sweep);
                }
                continue;
            }
            if max_change < CHANGE_TOL {
                fitted = gram * &*theta;
                let grad = corr - &fitted;
                if kkt_slack(&grad, theta, lambda, &self.col_sq) <= SOLVER_KKT_TOL * lambda.max(1.0) {
                    return Ok(sweep);
                }
            }
        }
        Err(Error::Convergence {
            sweeps: MAX_SWEEPS,
            max_change,
            last_iterate: theta.as_slice().to_vec(),
        })
    }

    fn solve_naive(&self, g: &DVector<f64>, lambda: f64, theta: &mut DVector<f64>, stop: Stop) -> Result<usize> {
        let q = self.q();
        let mut resid = g - self.r * &*theta;
        let mut max_change = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            max_change = 0.0;
            let mut max_scaled: f64 = 0.0;
            for l in 0..q {
                let d = self.col_sq[l];
                if d <= 0.0 {
                    continue;
                }
                let col = self.r.column(l);
                let old = theta[l];
                let z = col.dot(&resid) + d * old;
                let new = soft_threshold(z, lambda) / d;
                let delta = new - old;
                if delta != 0.0 {
                    theta[l] = new;
                    resid.axpy(-delta, &col, 1.0);
                    max_change = max_change.max(delta.abs());
                    max_scaled = max_scaled.max(d * delta * delta);
                }
            }
            if let Stop::Path(limit) = stop {
                if max_scaled < limit {
                    return Ok(sweep);
                }
                continue;
            }
            if max_change < CHANGE_TOL {
                resid = g - self.r * &*theta;
                let grad = self.r.tr_mul(&resid);
                if kkt_slack(&grad, theta, lambda, &self.col_sq) <= SOLVER_KKT_TOL * lambda.max(1.0) {
                    return Ok(sweep);
                }
            }
        }
        Err(Error::Convergence {
            sweeps: MAX_SWEEPS,
            max_change,
            last_iterate: theta.as_slice().to_vec(),
        })
    }

    /// Residual sum of squares ‖g − Rθ‖².
    pub fn rss(&self, g: &DVector<f64>, corr: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        match &self.gram {
            Some(gram) => {
                let v = g.norm_squared() - 2.0 * corr.dot(theta) + theta.dot(&(gram * theta));
                if v > 1e-10 * g.norm_squared() {
                    v
                } else {
                    (g - self.r * theta).norm_squared()
                }
            }
            None => (g - self.r * theta).norm_squared(),
        }
    }
}

fn kkt_slack(grad: &DVector<f64>, theta: &DVector<f64>, lambda: f64, col_sq: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..theta.len() {
        if col_sq[l] <= 0.0 {
            continue;
        }
        let v = if theta[l] == 0.0 {
            grad[l].abs() - lambda
        } else {
            (grad[l] - lambda * theta[l].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Lasso fit of a single response column.
pub fn lasso_column(r: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_finite(r, g)?;
    if g.len() != r.nrows() {
        return Err(crate::error::structural("response length differs from design rows"));
    }
    let design = LassoDesign::new(r);
    let corr = design.correlations(g);
    let mut theta = DVector::zeros(r.ncols());
    design.solve(g, &corr, lambda, &mut theta)?;
    Ok(theta)
}

fn check_finite(r: &DMatrix<f64>, g: &DVector<f64>) -> Result<()> {
    if r.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in lasso input".into()));
    }
    Ok(())
}

/// Log-spaced penalties from `max` down to `ratio·max`.
pub fn log_path(max: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| max * (step * k as f64).exp()).collect()
}

/// Per-column fit under the chosen rule. Returns (θ_j, λ_j).
fn fit_column(
    design: &LassoDesign<'_>,
    g: &DVector<f64>,
    rule: LambdaRule,
) -> Result<(DVector<f64>, f64)> {
    let corr = design.correlations(g);
    let q = design.q();
    match rule {
        LambdaRule::Fixed(lambda) => {
            let mut theta = DVector::zeros(q);
            if lambda.is_infinite() && lambda > 0.0 {
                return Ok((theta, lambda));
            }
            design.solve(g, &corr, lambda, &mut theta)?;
            Ok((theta, lambda))
        }
        LambdaRule::PerColumnBic => {
            let lambda_max = corr.amax();
            if lambda_max == 0.0 {
                return Ok((DVector::zeros(q), 0.0));
            }
            // The path is screened at a scaled-change tolerance and cut once the
            // fit saturates; only the BIC winner is then solved to full accuracy.
            let n = g.len() as f64;
            let tss = g.norm_squared();
            let mut theta = DVector::zeros(q);
            let mut best: Option<(f64, DVector<f64>, f64)> = None;
            for lambda in log_path(lambda_max, BIC_PATH_RATIO, BIC_PATH_LEN) {
                design.solve_until(g, &corr, lambda, &mut theta, Stop::Path(PATH_TOL * tss))?;
                let rss = design.rss(g, &corr, &theta).max(f64::MIN_POSITIVE);
                let df = theta.iter().filter(|v| **v != 0.0).count() as f64;
                // Past n/2 nonzeros RSS/n no longer estimates the noise level and
                // BIC rewards interpolation.
                if df > n / 2.0 {
                    break;
                }
                let bic = n * (rss / n).ln() + df * n.ln();
                if best.as_ref().is_none_or(|(b, _, _)| bic < *b) {
                    best = Some((bic, theta.clone(), lambda));
                }
                if rss <= (1.0 - PATH_MAX_R2) * tss {
                    break;
                }
            }
            let (_, mut theta, lambda) = best.expect("non-empty path");
            design.solve(g, &corr, lambda, &mut theta)?;
            Ok((theta, lambda))
        }
    }
}

/// Estimates Θ̂ column by column. Columns are independent and may be solved in parallel.
pub fn estimate_regulation(
    ds: &Dataset,
    rule: LambdaRule,
    exec: Execution,
) -> Result<RegulationMatrix> {
    let design = LassoDesign::new(&ds.r);
    estimate_with_design(&design, &ds.g, rule, exec)
}

pub fn estimate_with_design(
    design: &LassoDesign<'_>,
    g: &DMatrix<f64>,
    rule: LambdaRule,
    exec: Execution,
) -> Result<RegulationMatrix> {
    if g.iter().any(|v| !v.is_finite()) || design.r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in regulation input".into()));
    }
    let p = g.ncols();
    let fits = map_range(exec, p, |j| {
        let col = g.column(j).into_owned();
        fit_column(design, &col, rule).map_err(|e| e.context(format!("gene column {j}")))
    });
    let mut theta = DMatrix::zeros(design.q(), p);
    let mut lambdas = Vec::with_capacity(p);
    for (j, fit) in fits.into_iter().enumerate() {
        let (col, lambda) = fit?;
        theta.set_column(j, &col);
        lambdas.push(lambda);
    }
    Ok(RegulationMatrix::from_theta(theta, lambdas))
}

/// Largest λ_max over all gene columns; any fixed penalty at or above it zeroes Θ̂.
pub fn global_lambda_max(ds: &Dataset) -> f64 {
    ds.r.tr_mul(&ds.g).amax()
}

/// Outcome of an independent KKT audit of one Lasso column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktReport {
    /// Largest amount by which an inactive gradient exceeds λ.
    pub inactive_excess: f64,
    /// Largest |gradient − λ·sign(θ)| over active coordinates.
    pub active_gap: f64,
    pub sign_mismatches: usize,
}

impl KktReport {
    pub fn passes(&self, lambda: f64, tol: f64) -> bool {
        let slack = tol * lambda.max(f64::MIN_POSITIVE);
        self.inactive_excess <= slack && self.active_gap <= slack && self.sign_mismatches == 0
    }
}

/// Checks stationarity of θ for ½‖g − Rθ‖² + λ‖θ‖₁ directly from `R`, `g`, λ, θ.
pub fn kkt_report(r: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, theta: &DVector<f64>) -> KktReport {
    let resid = g - r * theta;
    let grad = r.tr_mul(&resid);
    let mut report = KktReport {
        inactive_excess: 0.0,
        active_gap: 0.0,
        sign_mismatches: 0,
    };
    for l in 0..theta.len() {
        if theta[l] == 0.0 {
            report.inactive_excess = report.inactive_excess.max(grad[l].abs() - lambda);
        } else {
            report.active_gap = report.active_gap.max((grad[l].abs() - lambda).abs());
            if grad[l].signum() != theta[l].signum() && grad[l] != 0.0 {
                report.sign_mismatches += 1;
            }
        }
    }
    report
}

/// Fraction of columns of a fit that pass the KKT audit at relative tolerance `tol`.
pub fn kkt_pass_count(ds: &Dataset, fit: &RegulationMatrix, tol: f64) -> usize {
    (0..fit.p())
        .filter(|&j| {
            let g = ds.g.column(j).into_owned();
            let th = fit.theta.column(j).into_owned();
            kkt_report(&ds.r, &g, fit.lambdas[j], &th).passes(fit.lambdas[j], tol)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, q: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = crate::seed::rng_from(seed);
        let r = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(q, |l, _| if l % 3 == 0 { 1.0 } else { 0.0 });
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = &r * beta + noise;
        (r, g)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    #[test]
    fn null_threshold_gives_zero() {
        let (r, g) = random_problem(30, 6, 1);
        let lmax = r.tr_mul(&g).amax();
        let th = lasso_column(&r, &g, lmax).unwrap();
        assert!(th.iter().all(|v| *v == 0.0));
        let th = lasso_column(&r, &g, lmax * 0.5).unwrap();
        assert!(th.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn covariance_and_naive_paths_agree() {
        let (r, g) = random_problem(40, 12, 2);
        let cov = LassoDesign::new(&r);
        let naive = LassoDesign::with_gram_limit(&r, 0);
        assert!(cov.uses_gram() && !naive.uses_gram());
        let corr = cov.correlations(&g);
        let mut a = DVector::zeros(12);
        let mut b = DVector::zeros(12);
        cov.solve(&g, &corr, 5.0, &mut a).unwrap();
        naive.solve(&g, &corr, 5.0, &mut b).unwrap();
        assert!((&a - &b).amax() < 1e-8);
    }

    #[test]
    fn solutions_pass_kkt_audit() {
        for seed in 0..5 {
            let (r, g) = random_problem(50, 20, seed);
            let lmax = r.tr_mul(&g).amax();
            for frac in [0.9, 0.3, 0.05] {
                let lambda = lmax * frac;
                let th = lasso_column(&r, &g, lambda).unwrap();
                assert!(kkt_report(&r, &g, lambda, &th).passes(lambda, 1e-6));
            }
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let (r, g) = random_problem(60, 15, 9);
        let design = LassoDesign::new(&r);
        let corr = design.correlations(&g);
        let path = log_path(corr.amax(), 0.01, 20);
        let mut warm = DVector::zeros(15);
        for &lambda in &path {
            design.solve(&g, &corr, lambda, &mut warm).unwrap();
            let mut cold = DVector::zeros(15);
            design.solve(&g, &corr, lambda, &mut cold).unwrap();
            assert!((&warm - &cold).amax() < 1e-8, "lambda {lambda}");
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let (r, mut g) = random_problem(10, 3, 4);
        g[0] = f64::NAN;
        assert!(matches!(lasso_column(&r, &g, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn log_path_endpoints() {
        let path = log_path(10.0, 0.01, 50);
        assert_eq!(path.len(), 50);
        assert!((path[0] - 10.0).abs() < 1e-12);
        assert!((path[49] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn triplet_export_lists_nonzeros() {
        let theta = DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -2.0, 0.0]);
        let fit = RegulationMatrix::from_theta(theta, vec![1.0, 1.0]);
        assert_eq!(fit.nnz, vec![1, 1]);
        let csv = fit.to_triplets().to_csv_string();
        assert_eq!(csv, "row,col,value\n1,0,-2\n0,1,1.5\n");
    }
}
