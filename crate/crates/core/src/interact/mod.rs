//! Hierarchical molecular × environment interaction model.
//!
//! The linear predictor is
//!
//! ```text
//! g = c + Eα + Σ_s X_s β_s + Zγ + Σ_m Σ_s (E_m ⊙ X_s)(β_s ∗ η_sm) + Σ_m (E_m ⊙ Z)(γ ∗ τ_m)
//! ```
//!
//! where `E_m ⊙ A` multiplies the environmental column into every column of `A`
//! and `∗` is the elementwise product. The decomposition `β ∗ η` (and `γ ∗ τ`)
//! means an interaction can only be nonzero when its main effect is. Fits with
//! `hierarchical = false` drop the decomposition and use `η`, `τ` directly.

mod cd;
mod ebic;
mod survival;

pub use cd::{cd_fit, kkt_check, CdOptions, KktCheck};
pub use ebic::{default_grid, ebic_select, ebic_value, total_candidates, EbicResult, EbicRow, GridSpec};
pub use survival::{km_weights, SurvivalWeights};

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{BlockKind, Entity, FeatureSet};
use crate::error::{structural, Result};
use crate::io::{format_f64, CsvTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Unpenalized constant.
    pub intercept: f64,
    /// Environmental main effects (length M).
    pub alpha: DVector<f64>,
    /// Module main effects, one vector of length p_s per module.
    pub beta: Vec<DVector<f64>>,
    /// Individual-feature main effects (length p_z).
    pub gamma: DVector<f64>,
    /// Module interaction-specific effects, indexed `eta[m][s]`.
    pub eta: Vec<Vec<DVector<f64>>>,
    /// Individual interaction-specific effects, M × p_z.
    pub tau: DMatrix<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Monitored objective after each outer iteration (entry 0 is the start).
    pub objective_trace: Vec<f64>,
    /// Monitored objective after each update step, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_trace: Vec<f64>,
    pub converged: bool,
    pub survival_mode: bool,
    pub hierarchical: bool,
    pub iterations: usize,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl FittedModel {
    pub fn zeros(m: usize, widths: &[usize], p_z: usize, hierarchical: bool) -> Self {
        Self {
            intercept: 0.0,
            alpha: DVector::zeros(m),
            beta: widths.iter().map(|&w| DVector::zeros(w)).collect(),
            gamma: DVector::zeros(p_z),
            eta: (0..m).map(|_| widths.iter().map(|&w| DVector::zeros(w)).collect()).collect(),
            tau: DMatrix::zeros(m, p_z),
            lambda1: 0.0,
            lambda2: 0.0,
            objective_trace: Vec::new(),
            step_trace: Vec::new(),
            converged: false,
            survival_mode: false,
            hierarchical,
            iterations: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_modules(&self) -> usize {
        self.beta.len()
    }

    /// Effective interaction coefficients of module `s` with factor `m`.
    pub fn module_interaction(&self, m: usize, s: usize) -> DVector<f64> {
        if self.hierarchical {
            self.beta[s].component_mul(&self.eta[m][s])
        } else {
            self.eta[m][s].clone()
        }
    }

    /// Effective interaction coefficient of individual feature `d` with factor `m`.
    pub fn individual_interaction(&self, m: usize, d: usize) -> f64 {
        if self.hierarchical {
            self.gamma[d] * self.tau[(m, d)]
        } else {
            self.tau[(m, d)]
        }
    }

    /// Count of nonzero effective molecular coefficients (mains and interactions).
    pub fn molecular_nonzeros(&self) -> usize {
        let mut count = self.beta.iter().map(|b| nnz(b.as_slice())).sum::<usize>() + nnz(self.gamma.as_slice());
        for m in 0..self.m() {
            for s in 0..self.num_modules() {
                count += nnz(self.module_interaction(m, s).as_slice());
            }
            for d in 0..self.gamma.len() {
                count += (self.individual_interaction(m, d) != 0.0) as usize;
            }
        }
        count
    }

    /// Hierarchy violations: (m, s) pairs with η_sm ≠ 0 but β_s = 0, and (m, d)
    /// pairs with τ_md ≠ 0 but γ_d = 0.
    pub fn hierarchy_violations(&self) -> usize {
        let mut bad = 0;
        for m in 0..self.m() {
            for s in 0..self.num_modules() {
                if nnz(self.eta[m][s].as_slice()) > 0 && nnz(self.beta[s].as_slice()) == 0 {
                    bad += 1;
                }
            }
            for d in 0..self.gamma.len() {
                if self.tau[(m, d)] != 0.0 && self.gamma[d] == 0.0 {
                    bad += 1;
                }
            }
        }
        bad
    }

    fn check_dims(&self, fs: &FeatureSet, e: &DMatrix<f64>) -> Result<()> {
        let widths = fs.block_widths();
        let ok = e.ncols() == self.m()
            && e.nrows() == fs.n()
            && widths.len() == self.beta.len()
            && widths.iter().zip(&self.beta).all(|(w, b)| *w == b.len())
            && fs.p_z() == self.gamma.len()
            && self.eta.len() == self.m()
            && self.tau.shape() == (self.m(), fs.p_z());
        if ok {
            Ok(())
        } else {
            Err(structural("model dimensions do not match the feature set / environment"))
        }
    }

    /// Identified molecular entities: module selections expand to members.
    pub fn identify(&self, fs: &FeatureSet) -> Identified {
        let mut out = Identified::default();
        for (s, meta) in fs.block_meta.iter().enumerate() {
            match meta.kind {
                BlockKind::Pca => {
                    if nnz(self.beta[s].as_slice()) > 0 {
                        out.mains.extend(meta.members.iter().copied());
                    }
                    for m in 0..self.m() {
                        if nnz(self.module_interaction(m, s).as_slice()) > 0 {
                            out.interactions.extend(meta.members.iter().map(|&e| (e, m)));
                        }
                    }
                }
                BlockKind::Raw => {
                    for (j, &ent) in meta.members.iter().enumerate() {
                        if self.beta[s][j] != 0.0 {
                            out.mains.insert(ent);
                        }
                        for m in 0..self.m() {
                            if self.module_interaction(m, s)[j] != 0.0 {
                                out.interactions.insert((ent, m));
                            }
                        }
                    }
                }
            }
        }
        for (d, &ent) in fs.z_meta.iter().enumerate() {
            if self.gamma[d] != 0.0 {
                out.mains.insert(ent);
            }
            for m in 0..self.m() {
                if self.individual_interaction(m, d) != 0.0 {
                    out.interactions.insert((ent, m));
                }
            }
        }
        out
    }
}

fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

/// Entity-level selections of a fit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identified {
    pub mains: BTreeSet<Entity>,
    /// (entity, environmental factor index).
    pub interactions: BTreeSet<(Entity, usize)>,
}

impl Identified {
    pub fn len(&self) -> usize {
        self.mains.len() + self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluates the linear predictor for the subjects in `fs` / `e`.
pub fn predict(model: &FittedModel, fs: &FeatureSet, e: &DMatrix<f64>) -> Result<DVector<f64>> {
    model.check_dims(fs, e)?;
    let n = fs.n();
    let mut out = e * &model.alpha;
    out.add_scalar_mut(model.intercept);
    for (s, x) in fs.x_blocks.iter().enumerate() {
        out += x * &model.beta[s];
        for m in 0..model.m() {
            let coef = model.module_interaction(m, s);
            if coef.iter().all(|v| *v == 0.0) {
                continue;
            }
            let v = x * coef;
            out += v.component_mul(&e.column(m));
        }
    }
    if fs.p_z() > 0 {
        out += &fs.z * &model.gamma;
        for m in 0..model.m() {
            let coef = DVector::from_fn(fs.p_z(), |d, _| model.individual_interaction(m, d));
            if coef.iter().all(|v| *v == 0.0) {
                continue;
            }
            let v = &fs.z * coef;
            out += v.component_mul(&e.column(m));
        }
    }
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

fn weighted_loss(
    model: &FittedModel,
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&SurvivalWeights>,
) -> Result<f64> {
    let resid = y - predict(model, fs, e)?;
    Ok(match weights {
        None => 0.5 * resid.norm_squared(),
        Some(w) => {
            let rho = w.by_subject();
            0.5 * resid.iter().zip(rho.iter()).map(|(r, p)| p * r * r).sum::<f64>()
        }
    })
}

/// Penalized objective with group norms on module coefficients:
/// ½‖√ρ ∗ (Y − g)‖² + λ₁ Σ_s √p_s (‖β_s‖₂ + Σ_m ‖η_sm‖₂) + λ₂ (‖γ‖₁ + Σ_m ‖τ_m‖₁).
pub fn objective(
    model: &FittedModel,
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&SurvivalWeights>,
) -> Result<f64> {
    let mut pen1 = 0.0;
    for s in 0..model.num_modules() {
        let root = (model.beta[s].len() as f64).sqrt();
        let eta: f64 = (0..model.m()).map(|m| model.eta[m][s].norm()).sum();
        pen1 += root * (model.beta[s].norm() + eta);
    }
    let pen2 = model.gamma.lp_norm(1) + model.tau.iter().map(|v| v.abs()).sum::<f64>();
    Ok(weighted_loss(model, fs, e, y, weights)? + model.lambda1 * pen1 + model.lambda2 * pen2)
}

/// The objective monitored by coordinate descent: module coefficients carry
/// the √p_s-scaled L1 penalty applied coordinate-wise inside surviving groups.
pub fn monitored_objective(
    model: &FittedModel,
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&SurvivalWeights>,
) -> Result<f64> {
    Ok(weighted_loss(model, fs, e, y, weights)? + penalty_l1(model))
}

pub(crate) fn penalty_l1(model: &FittedModel) -> f64 {
    let mut pen1 = 0.0;
    for s in 0..model.num_modules() {
        let root = (model.beta[s].len() as f64).sqrt();
        let eta: f64 = (0..model.m()).map(|m| model.eta[m][s].lp_norm(1)).sum();
        pen1 += root * (model.beta[s].lp_norm(1) + eta);
    }
    let pen2 = model.gamma.lp_norm(1) + model.tau.iter().map(|v| v.abs()).sum::<f64>();
    model.lambda1 * pen1 + model.lambda2 * pen2
}

/// Per-entity coefficient table: `group,entity_type,entity_name,main,<E...>`.
///
/// Module coefficients are mapped back to members through the block loadings.
/// Rows whose coefficients are all zero are omitted and zero cells are blank.
pub fn coefficient_table(
    model: &FittedModel,
    fs: &FeatureSet,
    entity_name: &dyn Fn(Entity) -> String,
    env_names: &[String],
) -> CsvTable {
    let mut header = vec!["group".to_string(), "entity_type".into(), "entity_name".into(), "main".into()];
    header.extend(env_names.iter().cloned());
    let mut t = CsvTable::new(&header);
    let cell = |v: f64| if v == 0.0 { String::new() } else { format_f64(v) };
    for (s, meta) in fs.block_meta.iter().enumerate() {
        let main = &meta.loadings * &model.beta[s];
        let inter: Vec<DVector<f64>> =
            (0..model.m()).map(|m| &meta.loadings * model.module_interaction(m, s)).collect();
        for (k, &ent) in meta.members.iter().enumerate() {
            if main[k] == 0.0 && inter.iter().all(|v| v[k] == 0.0) {
                continue;
            }
            let mut row = vec![format!("M{}", meta.module_id), ent.kind().into(), entity_name(ent), cell(main[k])];
            row.extend(inter.iter().map(|v| cell(v[k])));
            t.push(row);
        }
    }
    for (d, &ent) in fs.z_meta.iter().enumerate() {
        let inter: Vec<f64> = (0..model.m()).map(|m| model.individual_interaction(m, d)).collect();
        if model.gamma[d] == 0.0 && inter.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mut row = vec![format!("I{}", d + 1), ent.kind().into(), entity_name(ent), cell(model.gamma[d])];
        row.extend(inter.iter().map(|v| cell(*v)));
        t.push(row);
    }
    t
}

/// Environmental coefficients and intercept, one row each.
pub fn environment_table(model: &FittedModel, env_names: &[String]) -> CsvTable {
    let mut t = CsvTable::new(&["term", "coefficient"]);
    t.push(vec!["intercept".into(), format_f64(model.intercept)]);
    for (m, name) in env_names.iter().enumerate() {
        t.push(vec![name.clone(), format_f64(model.alpha[m])]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BlockMeta;

    fn one_block(x: DMatrix<f64>) -> FeatureSet {
        let k = x.ncols();
        FeatureSet {
            block_meta: vec![BlockMeta {
                module_id: 1,
                kind: BlockKind::Pca,
                members: vec![Entity::Gene(0)],
                center: vec![0.0],
                loadings: DMatrix::from_element(1, k, 1.0),
                explained: vec![1.0; k],
            }],
            z: DMatrix::zeros(x.nrows(), 0),
            x_blocks: vec![x],
            z_meta: Vec::new(),
        }
    }

    #[test]
    fn hand_expanded_single_subject() {
        let (e, x) = (0.7, -1.3);
        let fs = one_block(DMatrix::from_element(1, 1, x));
        let mut model = FittedModel::zeros(1, &[1], 0, true);
        model.alpha[0] = 1.0;
        model.beta[0][0] = 2.0;
        model.eta[0][0][0] = 3.0;
        let g = predict(&model, &fs, &DMatrix::from_element(1, 1, e)).unwrap();
        assert!((g[0] - (e + 2.0 * x + 6.0 * e * x)).abs() < 1e-15);
    }

    #[test]
    fn zero_model_predicts_zero_and_objective_is_half_ss() {
        let fs = one_block(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        let e = DMatrix::from_column_slice(3, 1, &[0.5, -0.5, 1.0]);
        let model = FittedModel::zeros(1, &[1], 0, true);
        assert_eq!(predict(&model, &fs, &e).unwrap(), DVector::zeros(3));
        let y = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        assert!((objective(&model, &fs, &e, &y, None).unwrap() - 4.5).abs() < 1e-15);
    }

    #[test]
    fn penalties_increase_objective() {
        let fs = one_block(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        let e = DMatrix::from_column_slice(3, 1, &[0.5, -0.5, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let mut model = FittedModel::zeros(1, &[1], 0, true);
        model.beta[0][0] = 0.3;
        let base = objective(&model, &fs, &e, &y, None).unwrap();
        model.lambda1 = 0.5;
        assert!(objective(&model, &fs, &e, &y, None).unwrap() > base);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let fs = one_block(DMatrix::zeros(3, 2));
        let model = FittedModel::zeros(1, &[1], 0, true);
        assert!(predict(&model, &fs, &DMatrix::zeros(3, 1)).is_err());
    }
}
