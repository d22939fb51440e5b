use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bicluster::RegulatoryModule;
use crate::data::{Dataset, Entity};
use crate::error::{structural, Error, Result};
use crate::integration::module_members;
use crate::interact::Identified;
use crate::io::{format_f64, CsvTable};
use crate::par::{map_range, Execution};
use crate::pipeline::{run_pipeline, PipelineConfig, Variant};
use crate::seed::SeedStream;

/// (TP, FP) pooled over main effects and (entity, factor) interactions.
pub fn score_identification(result: &Identified, truth: &Identified) -> (usize, usize) {
    let tp = result.mains.intersection(&truth.mains).count()
        + result.interactions.intersection(&truth.interactions).count();
    (tp, result.len() - tp)
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Best Jaccard similarity (over member genes and regulators) between each
/// planted module and any recovered module; 0 when nothing was recovered.
pub fn module_recovery(planted: &[RegulatoryModule], recovered: &[RegulatoryModule]) -> Vec<f64> {
    let sets: Vec<BTreeSet<Entity>> = recovered.iter().map(|m| module_members(m).into_iter().collect()).collect();
    planted
        .iter()
        .map(|p| {
            let target: BTreeSet<Entity> = module_members(p).into_iter().collect();
            sets.iter().map(|s| jaccard(&target, s)).fold(0.0, f64::max)
        })
        .collect()
}

fn centered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Matrix correlation of two column-centered data matrices on the same subjects.
pub fn rv_coefficient(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(structural(format!("RV coefficient needs equal row counts ({} vs {})", a.nrows(), b.nrows())));
    }
    let (a, b) = (centered(a), centered(b));
    let cross = a.tr_mul(&b).norm_squared();
    let aa = a.tr_mul(&a).norm();
    let bb = b.tr_mul(&b).norm();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Numeric("RV coefficient undefined for a zero (centered) matrix".into()));
    }
    Ok(cross / (aa * bb))
}

pub fn pmse(y: &DVector<f64>, prediction: &DVector<f64>) -> f64 {
    (y - prediction).norm_squared() / y.len() as f64
}

/// Kaplan–Meier estimate of the censoring survival function from training
/// data, returned as sorted (time, survival just after time) steps.
fn censoring_km(time: &[f64], delta: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut steps = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = time.len() as f64;
    let mut i = 0;
    while i < order.len() {
        let t = time[order[i]];
        let mut censored = 0.0;
        let mut leaving = 0.0;
        while i < order.len() && time[order[i]] == t {
            if !delta[order[i]] {
                censored += 1.0;
            }
            leaving += 1.0;
            i += 1;
        }
        if censored > 0.0 {
            surv *= 1.0 - censored / at_risk;
            steps.push((t, surv));
        }
        at_risk -= leaving;
    }
    steps
}

/// Censoring survival just before `t`.
fn g_before(steps: &[(f64, f64)], t: f64) -> f64 {
    let k = steps.partition_point(|(s, _)| *s < t);
    if k == 0 {
        1.0
    } else {
        steps[k - 1].1
    }
}

/// Inverse-probability-of-censoring weighted concordance of predicted log
/// survival times, with censoring weights from the training split and pairs
/// truncated at the largest test event time. Tied predictions count one half.
/// Returns `None` when no comparable pair exists.
pub fn concordance_ipcw(
    train_time: &[f64],
    train_delta: &[bool],
    test_time: &[f64],
    test_delta: &[bool],
    prediction: &[f64],
) -> Option<f64> {
    let steps = censoring_km(train_time, train_delta);
    let tau = test_time
        .iter()
        .zip(test_delta)
        .filter(|(_, d)| **d)
        .map(|(t, _)| *t)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..test_time.len() {
        if !test_delta[i] || test_time[i] > tau {
            continue;
        }
        let g = g_before(&steps, test_time[i]);
        if g <= 0.0 {
            continue;
        }
        let w = 1.0 / (g * g);
        for j in 0..test_time.len() {
            if test_time[i] < test_time[j] {
                den += w;
                // Higher risk (shorter predicted time) for the earlier failure is concordant.
                let (ri, rj) = (-prediction[i], -prediction[j]);
                if ri > rj {
                    num += w;
                } else if ri == rj {
                    num += 0.5 * w;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMetric {
    Pmse,
    CStatistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResamplingReport {
    pub metric: PredictionMetric,
    /// Mean over the splits that produced a value.
    pub value: f64,
    pub per_split: Vec<Option<f64>>,
    /// Selection frequency of each main effect across splits.
    pub ooi_main: BTreeMap<Entity, f64>,
    /// Selection frequency of each (entity, factor) interaction across splits.
    pub ooi_inter: BTreeMap<(Entity, usize), f64>,
    pub diagnostics: Vec<String>,
}

impl ResamplingReport {
    /// `entity_type,entity_name,term,ooi`, sorted by decreasing frequency.
    pub fn ooi_table(&self, ds: &Dataset) -> CsvTable {
        let mut rows: Vec<(f64, Vec<String>)> = Vec::new();
        for (e, f) in &self.ooi_main {
            rows.push((*f, vec![e.kind().into(), ds.entity_name(*e).into(), "main".into(), format_f64(*f)]));
        }
        for ((e, m), f) in &self.ooi_inter {
            rows.push((*f, vec![e.kind().into(), ds.entity_name(*e).into(), ds.env_names[*m].clone(), format_f64(*f)]));
        }
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut t = CsvTable::new(&["entity_type", "entity_name", "term", "ooi"]);
        for (_, r) in rows {
            t.push(r);
        }
        t
    }

    pub fn splits_table(&self) -> CsvTable {
        let name = match self.metric {
            PredictionMetric::Pmse => "pmse",
            PredictionMetric::CStatistic => "c_statistic",
        };
        let mut t = CsvTable::new(&["split", name]);
        for (k, v) in self.per_split.iter().enumerate() {
            t.push(vec![(k + 1).to_string(), v.map(format_f64).unwrap_or_default()]);
        }
        t
    }
}

/// Repeated random splits: fit on a `ratio` share of subjects, predict the rest.
pub fn evaluate_resampling(
    ds: &Dataset,
    variant: Variant,
    cfg: &PipelineConfig,
    splits: usize,
    ratio: f64,
    seed: u64,
    exec: Execution,
) -> Result<ResamplingReport> {
    if splits == 0 {
        return Err(structural("resampling needs at least one split"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(structural(format!("training ratio must lie in (0, 1), got {ratio}")));
    }
    let n = ds.n();
    let n_train = ((n as f64) * ratio).round() as usize;
    if n_train < 3 || n_train >= n {
        return Err(structural(format!("ratio {ratio} leaves no usable split for n={n}")));
    }
    let seeds = SeedStream::new(seed);
    let survival = ds.is_survival();
    let outcomes = map_range(exec, splits, |k| -> Result<(Option<f64>, Identified, Option<String>)> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeds.rng("split", k as u64));
        let (train_idx, test_idx) = idx.split_at(n_train);
        let train = ds.select_rows(train_idx);
        let test = ds.select_rows(test_idx);
        let fit = run_pipeline(&train, variant, cfg, exec).map_err(|e| e.context(format!("split {}", k + 1)))?;
        let selection = fit.selection();
        let pred = fit.saved(&train).predict(&test)?;
        let value = if survival {
            let td = train.delta.as_ref().expect("survival dataset");
            let sd = test.delta.as_ref().expect("survival dataset");
            if !sd.iter().any(|d| *d) {
                return Ok((None, selection, Some(format!("split {} skipped: no held-out events", k + 1))));
            }
            concordance_ipcw(train.y.as_slice(), td, test.y.as_slice(), sd, pred.as_slice())
        } else {
            Some(pmse(&test.y, &pred))
        };
        Ok((value, selection, None))
    });

    let mut per_split = Vec::with_capacity(splits);
    let mut main_counts: BTreeMap<Entity, usize> = BTreeMap::new();
    let mut inter_counts: BTreeMap<(Entity, usize), usize> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for out in outcomes {
        let (value, sel, diag) = out?;
        per_split.push(value);
        diagnostics.extend(diag);
        for e in sel.mains {
            *main_counts.entry(e).or_default() += 1;
        }
        for key in sel.interactions {
            *inter_counts.entry(key).or_default() += 1;
        }
    }
    let used: Vec<f64> = per_split.iter().flatten().copied().collect();
    let value = if used.is_empty() { f64::NAN } else { used.iter().sum::<f64>() / used.len() as f64 };
    let freq = |c: usize| c as f64 / splits as f64;
    Ok(ResamplingReport {
        metric: if survival { PredictionMetric::CStatistic } else { PredictionMetric::Pmse },
        value,
        per_split,
        ooi_main: main_counts.into_iter().map(|(k, c)| (k, freq(c))).collect(),
        ooi_inter: inter_counts.into_iter().map(|(k, c)| (k, freq(c))).collect(),
        diagnostics,
    })
}
