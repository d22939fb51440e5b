use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cd::{fit_design, CdOptions, Design};
use super::{FittedModel, SurvivalWeights};
use crate::data::FeatureSet;
use crate::error::{structural, Result};
use crate::io::{format_f64, CsvTable};
use crate::par::{map_range, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub len1: usize,
    pub len2: usize,
    /// Orders of magnitude spanned below each kill-all value.
    pub decades: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            len1: 20,
            len2: 20,
            decades: 3.0,
        }
    }
}

fn log_grid(max: f64, len: usize, decades: f64) -> Vec<f64> {
    // Without any candidates for this penalty the grid collapses to one point.
    if !(max > 0.0 && max.is_finite()) {
        return vec![1.0];
    }
    if len <= 1 {
        return vec![max];
    }
    (0..len)
        .map(|k| max * 10f64.powf(-decades * k as f64 / (len - 1) as f64))
        .collect()
}

fn kill_all_values(d: &Design, hierarchical: bool) -> (f64, f64) {
    let r0 = d.null_residual();
    let mut l1 = 0.0f64;
    for (s, x) in d.xs.iter().enumerate() {
        let root = (x.ncols() as f64).sqrt();
        l1 = l1.max(x.tr_mul(&r0).norm() / root);
        if !hierarchical {
            for k in 0..d.m {
                l1 = l1.max(d.ex[k][s].tr_mul(&r0).norm() / root);
            }
        }
    }
    let mut l2 = d.z.tr_mul(&r0).amax();
    if !hierarchical {
        for k in 0..d.m {
            l2 = l2.max(d.ez[k].tr_mul(&r0).amax());
        }
    }
    (l1, l2)
}

/// Log-spaced descending grids for λ₁ and λ₂, each starting at the smallest
/// value that zeroes every molecular coefficient at the unpenalized fit.
pub fn default_grid(
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&SurvivalWeights>,
    hierarchical: bool,
    spec: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = Design::new(fs, e, y, weights)?;
    let (l1, l2) = kill_all_values(&d, hierarchical);
    Ok((log_grid(l1, spec.len1, spec.decades), log_grid(l2, spec.len2, spec.decades)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbicRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rss: f64,
    pub df: usize,
    pub ebic: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct EbicResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub model: FittedModel,
    pub rows: Vec<EbicRow>,
}

impl EbicResult {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["lambda1", "lambda2", "rss", "df", "ebic", "converged", "iterations"]);
        for r in &self.rows {
            t.push(vec![
                format_f64(r.lambda1),
                format_f64(r.lambda2),
                format_f64(r.rss),
                r.df.to_string(),
                format_f64(r.ebic),
                r.converged.to_string(),
                r.iterations.to_string(),
            ]);
        }
        t
    }
}

/// Total candidate coefficients of the model: E mains plus every molecular
/// main and its M interactions.
pub fn total_candidates(widths: &[usize], p_z: usize, m: usize) -> usize {
    m + (1 + m) * (widths.iter().sum::<usize>() + p_z)
}

pub fn ebic_value(n: usize, rss: f64, df: usize, p_tot: usize, gamma_ebic: f64) -> f64 {
    let nf = n as f64;
    let fit = nf * (rss / nf).max(f64::MIN_POSITIVE).ln();
    fit + df as f64 * (nf.ln() + 2.0 * gamma_ebic * (p_tot.max(1) as f64).ln())
}

/// Fits every grid cell and returns the EBIC minimizer.
///
/// Each λ₁ row is an independent warm-started path over descending λ₂; rows
/// run concurrently under [`Execution::Parallel`] with identical results.
#[allow(clippy::too_many_arguments)]
pub fn ebic_select(
    fs: &FeatureSet,
    e: &DMatrix<f64>,
    y: &DVector<f64>,
    grid1: &[f64],
    grid2: &[f64],
    gamma_ebic: f64,
    weights: Option<&SurvivalWeights>,
    opts: &CdOptions,
    exec: Execution,
) -> Result<EbicResult> {
    if grid1.is_empty() || grid2.is_empty() {
        return Err(structural("tuning grids must be nonempty"));
    }
    let d = Design::new(fs, e, y, weights)?;
    let mut g1 = grid1.to_vec();
    let mut g2 = grid2.to_vec();
    g1.sort_by(|a, b| b.total_cmp(a));
    g2.sort_by(|a, b| b.total_cmp(a));
    let p_tot = total_candidates(&d.widths(), d.p_z(), d.m);

    let rows = map_range(exec, g1.len(), |i| -> Result<Vec<(EbicRow, FittedModel)>> {
        let mut out: Vec<(EbicRow, FittedModel)> = Vec::with_capacity(g2.len());
        for (j, &l2) in g2.iter().enumerate() {
            let init = out.last().map(|(_, m)| m);
            let model = fit_design(&d, g1[i], l2, opts, init)
                .map_err(|err| err.context(format!("grid cell ({}, {}) λ1={} λ2={}", i + 1, j + 1, g1[i], l2)))?;
            let rss = (&d.y - d.fitted(&model)).norm_squared();
            let df = model.molecular_nonzeros() + d.m;
            let row = EbicRow {
                lambda1: g1[i],
                lambda2: l2,
                rss,
                df,
                ebic: ebic_value(d.n, rss, df, p_tot, gamma_ebic),
                converged: model.converged,
                iterations: model.iterations,
            };
            out.push((row, model));
        }
        Ok(out)
    });

    let mut table = Vec::with_capacity(g1.len() * g2.len());
    let mut best: Option<(f64, FittedModel)> = None;
    for row in rows {
        for (r, model) in row? {
            // Strict comparison keeps the earlier (larger-λ) cell on ties.
            if best.as_ref().is_none_or(|(v, _)| r.ebic < *v) {
                best = Some((r.ebic, model));
            }
            table.push(r);
        }
    }
    let (_, model) = best.expect("grid is nonempty");
    Ok(EbicResult {
        lambda1: model.lambda1,
        lambda2: model.lambda2,
        model,
        rows: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Entity;
    use rand_distr::{Distribution, StandardNormal};

    fn individual_problem(n: usize, p: usize, seed: u64, signal: bool) -> (FeatureSet, DMatrix<f64>, DVector<f64>) {
        let mut rng = crate::seed::rng_from(seed);
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let z = draw(n, p);
        let e = draw(n, 2);
        let mut y = draw(n, 1).column(0).into_owned() * 0.5;
        if signal {
            y += z.column(0) * 2.0 + z.column(0).component_mul(&e.column(1)) * 1.5 + z.column(3) * -1.8;
        }
        let fs = FeatureSet {
            x_blocks: vec![],
            z,
            block_meta: vec![],
            z_meta: (0..p).map(Entity::Gene).collect(),
        };
        (fs, e, y)
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let (fs, e, y) = individual_problem(30, 5, 1, true);
        let res = ebic_select(&fs, &e, &y, &[0.7], &[3.0], 1.0, None, &CdOptions::default(), Execution::Sequential)
            .unwrap();
        assert_eq!((res.lambda1, res.lambda2), (0.7, 3.0));
        assert_eq!(res.rows.len(), 1);
    }

    #[test]
    fn strong_signal_support_is_selected() {
        let (fs, e, y) = individual_problem(200, 10, 2, true);
        let (g1, g2) = default_grid(&fs, &e, &y, None, true, &GridSpec::default()).unwrap();
        assert_eq!(g2.len(), GridSpec::default().len2);
        let res = ebic_select(&fs, &e, &y, &g1, &g2, 1.0, None, &CdOptions::default(), Execution::Parallel).unwrap();
        let id = res.model.identify(&fs);
        assert_eq!(id.mains.iter().copied().collect::<Vec<_>>(), vec![Entity::Gene(0), Entity::Gene(3)]);
        assert_eq!(id.interactions.iter().copied().collect::<Vec<_>>(), vec![(Entity::Gene(0), 1)]);
    }

    #[test]
    fn parallel_rows_match_sequential() {
        let (fs, e, y) = individual_problem(40, 6, 3, true);
        let (g1, g2) = default_grid(&fs, &e, &y, None, true, &GridSpec { len1: 3, len2: 3, decades: 1.0 }).unwrap();
        let a = ebic_select(&fs, &e, &y, &g1, &g2, 1.0, None, &CdOptions::default(), Execution::Sequential).unwrap();
        let b = ebic_select(&fs, &e, &y, &g1, &g2, 1.0, None, &CdOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn largest_grid_value_kills_everything() {
        let (fs, e, y) = individual_problem(40, 6, 4, true);
        let (g1, g2) = default_grid(&fs, &e, &y, None, true, &GridSpec::default()).unwrap();
        let res = ebic_select(&fs, &e, &y, &g1[..1], &g2[..1], 1.0, None, &CdOptions::default(), Execution::Sequential)
            .unwrap();
        assert_eq!(res.model.molecular_nonzeros(), 0);
    }

    #[test]
    fn candidate_count() {
        assert_eq!(total_candidates(&[2, 3], 4, 5), 5 + 6 * 9);
    }
}
