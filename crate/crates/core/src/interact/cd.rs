use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{penalty_l1, FittedModel, SurvivalWeights};
use crate::data::FeatureSet;
use crate::error::{structural, Error, Result};
use crate::regulation::soft_threshold;

const RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdOptions {
    pub max_iter: usize,
    /// Relative change of the monitored objective that ends the outer loop.
    pub tol: f64,
    /// Decompose interactions as β ∗ η / γ ∗ τ. When false, interactions are
    /// free coefficients penalized alongside the mains.
    pub hierarchical: bool,
    /// Record the monitored objective after every update step (a–e).
    pub record_steps: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-4,
            hierarchical: true,
            record_steps: false,
        }
    }
}

/// Row-weighted copy of the design with precomputed interaction columns,
/// shared across the fits of a tuning grid.
pub(crate) struct Design {
    pub n: usize,
    pub m: usize,
    /// Unpenalized block `[w, w⊙E]`.
    pub a: DMatrix<f64>,
    /// `(A'A)⁻¹A'`, ridge-stabilized when needed.
    pub a_solve: DMatrix<f64>,
    pub xs: Vec<DMatrix<f64>>,
    pub z: DMatrix<f64>,
    /// `ex[m][s] = E_m ⊙ X_s` (weighted).
    pub ex: Vec<Vec<DMatrix<f64>>>,
    /// `ez[m] = E_m ⊙ Z` (weighted).
    pub ez: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub survival: bool,
    pub diagnostics: Vec<String>,
}

impl Design {
    pub fn new(
        fs: &FeatureSet,
        e: &DMatrix<f64>,
        y: &DVector<f64>,
        weights: Option<&SurvivalWeights>,
    ) -> Result<Self> {
        let n = fs.n();
        if e.nrows() != n || y.len() != n {
            return Err(structural(format!(
                "row counts differ: features {n}, environment {}, outcome {}",
                e.nrows(),
                y.len()
            )));
        }
        if fs.x_blocks.iter().any(|x| x.nrows() != n || x.ncols() == 0) {
            return Err(structural("module blocks must have n rows and at least one column"));
        }
        let w = match weights {
            None => DVector::from_element(n, 1.0),
            Some(sw) => {
                if sw.rho.len() != n {
                    return Err(structural("survival weights do not match the number of subjects"));
                }
                if sw.rho.iter().all(|r| *r == 0.0) {
                    return Err(Error::AllCensored);
                }
                sw.by_subject().map(f64::sqrt)
            }
        };
        let scale = |mat: &DMatrix<f64>| {
            let mut out = mat.clone();
            for mut col in out.column_iter_mut() {
                col.component_mul_assign(&w);
            }
            out
        };
        let m = e.ncols();
        let mut a = DMatrix::zeros(n, m + 1);
        a.set_column(0, &w);
        for k in 0..m {
            a.set_column(k + 1, &e.column(k).component_mul(&w));
        }
        let mut diagnostics = Vec::new();
        let mut gram = a.tr_mul(&a);
        let chol = match gram.clone().cholesky() {
            Some(c) => c,
            None => {
                diagnostics.push(format!(
                    "environment cross-product is singular; added {RIDGE:e} to its diagonal"
                ));
                for i in 0..gram.nrows() {
                    gram[(i, i)] += RIDGE;
                }
                gram.cholesky()
                    .ok_or_else(|| Error::Numeric("environment cross-product not positive definite".into()))?
            }
        };
        let a_solve = chol.solve(&a.transpose());
        let xs: Vec<DMatrix<f64>> = fs.x_blocks.iter().map(scale).collect();
        let z = scale(&fs.z);
        let times = |mat: &DMatrix<f64>, k: usize| {
            let mut out = mat.clone();
            for mut col in out.column_iter_mut() {
                col.component_mul_assign(&e.column(k));
            }
            out
        };
        let ex = (0..m).map(|k| xs.iter().map(|x| times(x, k)).collect()).collect();
        let ez = (0..m).map(|k| times(&z, k)).collect();
        let y = y.component_mul(&w);
        if !y.iter().all(|v| v.is_finite()) || !a.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite outcome or environment value".into()));
        }
        Ok(Self {
            n,
            m,
            a,
            a_solve,
            xs,
            z,
            ex,
            ez,
            y,
            survival: weights.is_some(),
            diagnostics,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.xs.iter().map(|x| x.ncols()).collect()
    }

    pub fn p_z(&self) -> usize {
        self.z.ncols()
    }

    /// Weighted fitted values of `model`.
    pub fn fitted(&self, model: &FittedModel) -> DVector<f64> {
        let mut c = DVector::zeros(self.m + 1);
        c[0] = model.intercept;
        c.rows_mut(1, self.m).copy_from(&model.alpha);
        let mut out = &self.a * c;
        for (s, x) in self.xs.iter().enumerate() {
            out += x * &model.beta[s];
            for k in 0..self.m {
                out += &self.ex[k][s] * model.module_interaction(k, s);
            }
        }
        if self.p_z() > 0 {
            out += &self.z * &model.gamma;
            for k in 0..self.m {
                let coef = DVector::from_fn(self.p_z(), |d, _| model.individual_interaction(k, d));
                out += &self.ez[k] * coef;
            }
        }
        out
    }

    /// Unpenalized least-squares residual of the outcome on `[1, E]`.
    pub fn null_residual(&self) -> DVector<f64> {
        let c = &self.a_solve * &self.y;
        &self.y - &self.a * c
    }
}

fn dot(a: nalgebra::DVectorView<'_, f64>, b: &DVector<f64>) -> f64 {
    a.dot(b)
}

/// Cyclic coordinate descent for the hierarchical interaction model.
///
/// `init` warm-starts every coefficient; its dimensions must match `fs`.
#[allow(clippy::too_many_arguments)]
pub fn cd_fit(
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    weights: Option<&SurvivalWeights>,
    opts: &CdOptions,
    init: Option<&FittedModel>,
) -> Result<FittedModel> {
    let design = Design::new(fs, e, y, weights)?;
    fit_design(&design, lambda1, lambda2, opts, init)
}

pub(crate) fn fit_design(
    d: &Design,
    lambda1: f64,
    lambda2: f64,
    opts: &CdOptions,
    init: Option<&FittedModel>,
) -> Result<FittedModel> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(structural(format!("penalties must be nonnegative (got {lambda1}, {lambda2})")));
    }
    let widths = d.widths();
    let mut model = match init {
        Some(start) => {
            let mut mdl = start.clone();
            let ok = mdl.alpha.len() == d.m
                && mdl.beta.len() == widths.len()
                && mdl.beta.iter().zip(&widths).all(|(b, w)| b.len() == *w)
                && mdl.gamma.len() == d.p_z()
                && mdl.hierarchical == opts.hierarchical;
            if !ok {
                return Err(structural("warm start does not match the design"));
            }
            mdl.objective_trace.clear();
            mdl.step_trace.clear();
            mdl.diagnostics.clear();
            mdl
        }
        None => FittedModel::zeros(d.m, &widths, d.p_z(), opts.hierarchical),
    };
    model.lambda1 = lambda1;
    model.lambda2 = lambda2;
    model.survival_mode = d.survival;
    model.converged = false;
    model.iterations = 0;
    model.diagnostics.extend(d.diagnostics.iter().cloned());

    let mut r = &d.y - d.fitted(&model);
    let q_of = |r: &DVector<f64>, mdl: &FittedModel| 0.5 * r.norm_squared() + penalty_l1(mdl);
    let mut q_prev = q_of(&r, &model);
    if !q_prev.is_finite() {
        return Err(Error::Numeric("initial objective is not finite".into()));
    }
    model.objective_trace.push(q_prev);
    if opts.record_steps {
        model.step_trace.push(q_prev);
    }

    for iter in 1..=opts.max_iter {
        for step in 0..5 {
            match step {
                0 => update_alpha(d, &mut model, &mut r),
                1 => update_beta(d, &mut model, &mut r),
                2 => update_gamma(d, &mut model, &mut r),
                3 => update_eta(d, &mut model, &mut r),
                _ => update_tau(d, &mut model, &mut r),
            }
            if opts.record_steps {
                model.step_trace.push(q_of(&r, &model));
            }
        }
        // Refresh the residual to keep accumulated rounding out of the trace.
        r = &d.y - d.fitted(&model);
        let q = q_of(&r, &model);
        if !q.is_finite() {
            return Err(Error::Numeric(format!("objective became non-finite at iteration {iter}")));
        }
        model.objective_trace.push(q);
        model.iterations = iter;
        let rel = if q_prev > 0.0 { (q_prev - q).abs() / q_prev } else { 0.0 };
        q_prev = q;
        if rel < opts.tol {
            model.converged = true;
            break;
        }
    }
    if model.hierarchical {
        let bad = model.hierarchy_violations();
        if bad > 0 {
            return Err(Error::Invariant(format!("{bad} interactions survive without their main effect")));
        }
    }
    Ok(model)
}

fn update_alpha(d: &Design, model: &mut FittedModel, r: &mut DVector<f64>) {
    let mut c = DVector::zeros(d.m + 1);
    c[0] = model.intercept;
    c.rows_mut(1, d.m).copy_from(&model.alpha);
    let y_tilde = &*r + &d.a * &c;
    let c_new = &d.a_solve * &y_tilde;
    *r = y_tilde - &d.a * &c_new;
    model.intercept = c_new[0];
    model.alpha.copy_from(&c_new.rows(1, d.m));
}

/// Coordinate-wise lasso on the columns of `w` with shared penalty `lam`,
/// starting from `coef` with current residual `r = Ỹ − W coef`.
fn cd_block(w: &DMatrix<f64>, coef: &mut DVector<f64>, r: &mut DVector<f64>, lam: f64) {
    for j in 0..w.ncols() {
        let col = w.column(j);
        let nrm = col.norm_squared();
        let old = coef[j];
        let new = if nrm > 0.0 {
            soft_threshold(dot(col, r) + nrm * old, lam) / nrm
        } else {
            0.0
        };
        if new != old {
            r.axpy(old - new, &col, 1.0);
            coef[j] = new;
        }
    }
}

/// Group step shared by the β and η updates: kill-test on `W̃'Ỹ`, then
/// coordinate-wise soft-thresholding inside a surviving group.
fn group_step(w: &DMatrix<f64>, coef: &mut DVector<f64>, r: &mut DVector<f64>, lam: f64) {
    let y_tilde = &*r + w * &*coef;
    let score = w.tr_mul(&y_tilde).norm();
    if score <= lam {
        coef.fill(0.0);
        *r = y_tilde;
    } else {
        cd_block(w, coef, r, lam);
    }
}

fn update_beta(d: &Design, model: &mut FittedModel, r: &mut DVector<f64>) {
    for (s, x) in d.xs.iter().enumerate() {
        let lam = model.lambda1 * (x.ncols() as f64).sqrt();
        if model.hierarchical {
            let mut w = x.clone();
            for k in 0..d.m {
                let eta = &model.eta[k][s];
                for (j, mut col) in w.column_iter_mut().enumerate() {
                    if eta[j] != 0.0 {
                        col.axpy(eta[j], &d.ex[k][s].column(j), 1.0);
                    }
                }
            }
            group_step(&w, &mut model.beta[s], r, lam);
            for j in 0..x.ncols() {
                if model.beta[s][j] == 0.0 {
                    for k in 0..d.m {
                        model.eta[k][s][j] = 0.0;
                    }
                }
            }
        } else {
            group_step(x, &mut model.beta[s], r, lam);
        }
    }
}

fn update_gamma(d: &Design, model: &mut FittedModel, r: &mut DVector<f64>) {
    let lam = model.lambda2;
    for j in 0..d.p_z() {
        let mut w = d.z.column(j).into_owned();
        if model.hierarchical {
            for k in 0..d.m {
                let t = model.tau[(k, j)];
                if t != 0.0 {
                    w.axpy(t, &d.ez[k].column(j), 1.0);
                }
            }
        }
        let nrm = w.norm_squared();
        let old = model.gamma[j];
        let new = if nrm > 0.0 {
            soft_threshold(w.dot(r) + nrm * old, lam) / nrm
        } else {
            0.0
        };
        if new != old {
            r.axpy(old - new, &w, 1.0);
            model.gamma[j] = new;
        }
        if model.hierarchical && new == 0.0 {
            for k in 0..d.m {
                model.tau[(k, j)] = 0.0;
            }
        }
    }
}

fn update_eta(d: &Design, model: &mut FittedModel, r: &mut DVector<f64>) {
    for k in 0..d.m {
        for s in 0..d.xs.len() {
            let lam = model.lambda1 * (d.xs[s].ncols() as f64).sqrt();
            if model.hierarchical {
                let beta = &model.beta[s];
                if beta.iter().all(|b| *b == 0.0) {
                    continue;
                }
                let mut w = d.ex[k][s].clone();
                for (j, mut col) in w.column_iter_mut().enumerate() {
                    col *= beta[j];
                }
                group_step(&w, &mut model.eta[k][s], r, lam);
            } else {
                group_step(&d.ex[k][s], &mut model.eta[k][s], r, lam);
            }
        }
    }
}

fn update_tau(d: &Design, model: &mut FittedModel, r: &mut DVector<f64>) {
    let lam = model.lambda2;
    for k in 0..d.m {
        for j in 0..d.p_z() {
            let g = if model.hierarchical { model.gamma[j] } else { 1.0 };
            if g == 0.0 {
                continue;
            }
            let col = d.ez[k].column(j);
            let nrm = g * g * col.norm_squared();
            let old = model.tau[(k, j)];
            let new = if nrm > 0.0 {
                soft_threshold(g * dot(col, r) + nrm * old, lam) / nrm
            } else {
                0.0
            };
            if new != old {
                r.axpy(g * (old - new), &col, 1.0);
                model.tau[(k, j)] = new;
            }
        }
    }
}

/// Stationarity slack of the zeroed coefficients at a fitted point.
#[derive(Clone, Debug, PartialEq)]
pub struct KktCheck {
    /// Largest `‖W̃'_s r‖₂ − λ₁√p_s` over zeroed module groups.
    pub group_excess: f64,
    /// Largest `|W̃'_d r| − λ₂` over zeroed individual features.
    pub individual_excess: f64,
}

impl KktCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.group_excess <= tol && self.individual_excess <= tol
    }
}

pub fn kkt_check(
    model: &FittedModel,
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&SurvivalWeights>,
) -> Result<KktCheck> {
    let d = Design::new(fs, e, y, weights)?;
    let r = &d.y - d.fitted(model);
    let mut group_excess = f64::NEG_INFINITY;
    for (s, x) in d.xs.iter().enumerate() {
        if model.beta[s].iter().all(|b| *b == 0.0) {
            let score = x.tr_mul(&r).norm();
            group_excess = group_excess.max(score - model.lambda1 * (x.ncols() as f64).sqrt());
        }
    }
    let mut individual_excess = f64::NEG_INFINITY;
    for j in 0..d.p_z() {
        if model.gamma[j] == 0.0 {
            individual_excess = individual_excess.max(d.z.column(j).dot(&r).abs() - model.lambda2);
        }
    }
    Ok(KktCheck {
        group_excess,
        individual_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlockKind, BlockMeta, Entity};
    use crate::interact::{km_weights, predict};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, k: usize, rng: &mut crate::seed::Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng))
    }

    fn features(n: usize, widths: &[usize], p_z: usize, rng: &mut crate::seed::Rng) -> FeatureSet {
        let x_blocks: Vec<_> = widths.iter().map(|&w| gaussian(n, w, rng)).collect();
        let block_meta = widths
            .iter()
            .enumerate()
            .map(|(s, &w)| BlockMeta {
                module_id: s + 1,
                kind: BlockKind::Pca,
                members: vec![Entity::Gene(s)],
                center: vec![0.0],
                loadings: DMatrix::from_element(1, w, 1.0),
                explained: vec![],
            })
            .collect();
        FeatureSet {
            x_blocks,
            z: gaussian(n, p_z, rng),
            block_meta,
            z_meta: (0..p_z).map(Entity::Regulator).collect(),
        }
    }

    /// Hierarchical truth: module 0 main + interaction with E_0, Z_0 main + interaction with E_1.
    fn planted(n: usize, seed: u64) -> (FeatureSet, DMatrix<f64>, DVector<f64>) {
        let mut rng = crate::seed::rng_from(seed);
        let fs = features(n, &[2, 2], 3, &mut rng);
        let e = gaussian(n, 2, &mut rng);
        let mut truth = FittedModel::zeros(2, &[2, 2], 3, true);
        truth.alpha[0] = 0.5;
        truth.beta[0][0] = 1.5;
        truth.beta[0][1] = -1.0;
        truth.eta[0][0][0] = 1.0;
        truth.eta[0][0][1] = -1.0;
        truth.gamma[0] = 1.2;
        truth.tau[(1, 0)] = 1.0;
        let noise = gaussian(n, 1, &mut rng).column(0).into_owned() * 0.1;
        let y = predict(&truth, &fs, &e).unwrap() + noise;
        (fs, e, y)
    }

    #[test]
    fn huge_penalties_give_ols_on_environment() {
        let (fs, e, y) = planted(40, 1);
        let fit = cd_fit(&fs, &e, &y, 1e9, 1e9, None, &CdOptions::default(), None).unwrap();
        assert_eq!(fit.molecular_nonzeros(), 0);
        let mut a = DMatrix::from_element(40, 3, 1.0);
        a.columns_mut(1, 2).copy_from(&e);
        let c = a.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        assert!((fit.intercept - c[0]).abs() < 1e-10);
        assert!((fit.alpha[0] - c[1]).abs() < 1e-10);
        assert!((fit.alpha[1] - c[2]).abs() < 1e-10);
    }

    #[test]
    fn planted_support_recovered_with_hierarchy_and_monotone_trace() {
        let (fs, e, y) = planted(50, 2);
        let fit = cd_fit(&fs, &e, &y, 5.0, 5.0, None, &CdOptions::default(), None).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.hierarchy_violations(), 0);
        let id = fit.identify(&fs);
        let mains: Vec<_> = id.mains.iter().copied().collect();
        assert_eq!(mains, vec![Entity::Gene(0), Entity::Regulator(0)]);
        let inter: Vec<_> = id.interactions.iter().copied().collect();
        assert_eq!(inter, vec![(Entity::Gene(0), 0), (Entity::Regulator(0), 1)]);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn every_step_weakly_decreases_q() {
        for seed in 0..10 {
            let (fs, e, y) = planted(30, 100 + seed);
            let opts = CdOptions {
                record_steps: true,
                max_iter: 30,
                ..CdOptions::default()
            };
            for hier in [true, false] {
                let o = CdOptions { hierarchical: hier, ..opts.clone() };
                let fit = cd_fit(&fs, &e, &y, 0.5, 0.3, None, &o, None).unwrap();
                for w in fit.step_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{} > {}", w[1], w[0]);
                }
            }
        }
    }

    #[test]
    fn reduces_to_plain_lasso_without_modules() {
        let mut rng = crate::seed::rng_from(5);
        let n = 60;
        let fs = features(n, &[], 4, &mut rng);
        let e = gaussian(n, 1, &mut rng);
        let y = &fs.z.column(0) * 1.0 - &fs.z.column(2) * 0.7 + gaussian(n, 1, &mut rng).column(0) * 0.5;
        let opts = CdOptions {
            tol: 1e-14,
            max_iter: 5000,
            ..CdOptions::default()
        };
        let lam = 8.0;
        let fit = cd_fit(&fs, &e, &y, 1.0, lam, None, &opts, None).unwrap();
        // Standalone lasso of the E-adjusted outcome on E-adjusted Z.
        let mut a = DMatrix::from_element(n, 2, 1.0);
        a.set_column(1, &e.column(0));
        let proj = |v: &DVector<f64>| {
            let c = a.clone().svd(true, true).solve(v, 1e-12).unwrap();
            v - &a * c
        };
        let yt = proj(&y);
        let zt = DMatrix::from_columns(
            &(0..4).map(|j| proj(&fs.z.column(j).into_owned())).collect::<Vec<_>>(),
        );
        let theta = crate::regulation::lasso_column(&zt, &yt, lam).unwrap();
        for j in 0..4 {
            assert!((fit.gamma[j] - theta[j]).abs() < 1e-6, "{j}: {} vs {}", fit.gamma[j], theta[j]);
        }
        assert!(fit.tau.iter().all(|t| *t == 0.0) || fit.hierarchy_violations() == 0);
    }

    #[test]
    fn uniform_survival_weights_match_continuous_fit() {
        let (fs, e, y) = planted(40, 7);
        let n = 40.0;
        let w = km_weights(y.as_slice(), &vec![true; 40]);
        let cont = cd_fit(&fs, &e, &y, 1.0, 0.8, None, &CdOptions::default(), None).unwrap();
        let surv = cd_fit(&fs, &e, &y, 1.0 / n, 0.8 / n, Some(&w), &CdOptions::default(), None).unwrap();
        assert!(surv.survival_mode);
        let diff = |a: &FittedModel, b: &FittedModel| {
            let mut m = (a.intercept - b.intercept).abs().max((&a.alpha - &b.alpha).amax());
            for s in 0..a.beta.len() {
                m = m.max((&a.beta[s] - &b.beta[s]).amax());
            }
            m.max((&a.gamma - &b.gamma).amax()).max((&a.tau - &b.tau).amax())
        };
        assert!(diff(&cont, &surv) < 1e-10, "{}", diff(&cont, &surv));
    }

    #[test]
    fn all_censored_is_rejected() {
        let (fs, e, y) = planted(10, 3);
        let w = km_weights(y.as_slice(), &vec![false; 10]);
        let err = cd_fit(&fs, &e, &y, 1.0, 1.0, Some(&w), &CdOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::AllCensored));
    }

    #[test]
    fn singular_environment_gets_ridge_diagnostic() {
        let (fs, e, y) = planted(20, 4);
        let mut e2 = DMatrix::zeros(20, 2);
        e2.set_column(0, &e.column(0));
        e2.set_column(1, &e.column(0));
        let fit = cd_fit(&fs, &e2, &y, 1.0, 1.0, None, &CdOptions::default(), None).unwrap();
        assert!(!fit.diagnostics.is_empty());
    }

    #[test]
    fn converged_fit_satisfies_kkt_spot_check() {
        let (fs, e, y) = planted(60, 9);
        let opts = CdOptions {
            tol: 1e-13,
            max_iter: 5000,
            ..CdOptions::default()
        };
        let fit = cd_fit(&fs, &e, &y, 3.0, 3.0, None, &opts, None).unwrap();
        assert!(kkt_check(&fit, &fs, &e, &y, None).unwrap().passes(1e-6));
    }

    #[test]
    fn non_hierarchical_mode_can_select_interaction_without_main() {
        let mut rng = crate::seed::rng_from(11);
        let n = 80;
        let fs = features(n, &[], 2, &mut rng);
        let e = gaussian(n, 1, &mut rng);
        let y = fs.z.column(0).component_mul(&e.column(0)) * 2.0;
        let opts = CdOptions {
            hierarchical: false,
            ..CdOptions::default()
        };
        let fit = cd_fit(&fs, &e, &y, 1.0, 5.0, None, &opts, None).unwrap();
        assert!(fit.tau[(0, 0)] != 0.0);
        let hier = cd_fit(&fs, &e, &y, 1.0, 5.0, None, &CdOptions::default(), None).unwrap();
        assert_eq!(hier.hierarchy_violations(), 0);
    }
}
