use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{generate_dataset, score_identification, CorrStructure, Placement, Signal, SimConfig, ThetaPattern};
use crate::io::CsvTable;
use crate::par::{map_range, Execution};
use crate::pipeline::{run_pipeline, PipelineConfig, Variant};
use crate::seed::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub theta_pattern: ThetaPattern,
    pub corr: CorrStructure,
    pub placement: Placement,
    pub signal: Signal,
}

impl Scenario {
    pub fn of(sim: &SimConfig) -> Self {
        Self {
            theta_pattern: sim.theta_pattern,
            corr: sim.corr,
            placement: sim.placement,
            signal: sim.signal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Dimensions, scale and root seed; the scenario fields are overridden per cell.
    pub sim: SimConfig,
    /// Cells to run; empty means the scenario of `sim`.
    pub scenarios: Vec<Scenario>,
    pub replicates: usize,
    pub variants: Vec<Variant>,
    pub pipeline: PipelineConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            scenarios: Vec::new(),
            replicates: 2,
            variants: Variant::ALL.to_vec(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub variant: Variant,
    pub replicate: usize,
    pub tp: usize,
    pub fp: usize,
    pub seconds: f64,
    /// Set when generation or fitting failed; counts are then zero.
    pub error: Option<String>,
}

/// Runs generate → fit → score for every scenario, replicate and variant.
///
/// Replicates run concurrently; each replicate's data depends only on the
/// root seed, the scenario and the replicate index.
pub fn run_benchmark(cfg: &BenchConfig, exec: Execution) -> Vec<BenchRow> {
    let scenarios = if cfg.scenarios.is_empty() { vec![Scenario::of(&cfg.sim)] } else { cfg.scenarios.clone() };
    let root = SeedStream::new(cfg.sim.seed);
    let mut rows = Vec::new();
    for (c, sc) in scenarios.iter().enumerate() {
        let cell_seeds = root.child("scenario", c as u64);
        let per_rep = map_range(exec, cfg.replicates, |rep| {
            let sim = SimConfig {
                theta_pattern: sc.theta_pattern,
                corr: sc.corr,
                placement: sc.placement,
                signal: sc.signal,
                seed: cell_seeds.derive("replicate", rep as u64),
                ..cfg.sim.clone()
            };
            let failed = |variant, msg: String| BenchRow {
                scenario: *sc,
                variant,
                replicate: rep + 1,
                tp: 0,
                fp: 0,
                seconds: 0.0,
                error: Some(msg),
            };
            let (ds, truth) = match generate_dataset(&sim) {
                Ok(v) => v,
                Err(e) => return cfg.variants.iter().map(|&v| failed(v, e.to_string())).collect::<Vec<_>>(),
            };
            cfg.variants
                .iter()
                .map(|&variant| {
                    let start = Instant::now();
                    match run_pipeline(&ds, variant, &cfg.pipeline, exec) {
                        Ok(fit) => {
                            let (tp, fp) = score_identification(&fit.selection(), &truth.important);
                            BenchRow {
                                scenario: *sc,
                                variant,
                                replicate: rep + 1,
                                tp,
                                fp,
                                seconds: start.elapsed().as_secs_f64(),
                                error: None,
                            }
                        }
                        Err(e) => failed(variant, e.to_string()),
                    }
                })
                .collect()
        });
        rows.extend(per_rep.into_iter().flatten());
    }
    rows
}

/// `pattern,corr,placement,signal,variant,replicate,TP,FP,seconds`.
pub fn rows_table(rows: &[BenchRow]) -> CsvTable {
    let mut t = CsvTable::new(&["pattern", "corr", "placement", "signal", "variant", "replicate", "TP", "FP", "seconds"]);
    for r in rows {
        t.push(vec![
            r.scenario.theta_pattern.to_string(),
            r.scenario.corr.to_string(),
            r.scenario.placement.to_string(),
            r.scenario.signal.to_string(),
            r.variant.to_string(),
            r.replicate.to_string(),
            if r.error.is_some() { "NA".into() } else { r.tp.to_string() },
            if r.error.is_some() { "NA".into() } else { r.fp.to_string() },
            format!("{:.3}", r.seconds),
        ]);
    }
    t
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn fmt_mean_sd(values: &[f64]) -> String {
    let (m, s) = mean_sd(values);
    format!("{m:.2}({s:.2})")
}

/// Per scenario × variant: `mean(sd)` of TP and FP over successful
/// replicates, plus the failure count. Timings stay in the per-row table so
/// the summary is reproducible.
pub fn summary_table(rows: &[BenchRow]) -> CsvTable {
    let mut groups: BTreeMap<(Scenario, Variant), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.scenario, r.variant)).or_default().push(r);
    }
    let mut t = CsvTable::new(&[
        "pattern", "corr", "placement", "signal", "variant", "replicates", "failures", "TP", "FP",
    ]);
    for ((sc, v), group) in groups {
        let ok: Vec<&BenchRow> = group.iter().copied().filter(|r| r.error.is_none()).collect();
        let col = |f: fn(&BenchRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        t.push(vec![
            sc.theta_pattern.to_string(),
            sc.corr.to_string(),
            sc.placement.to_string(),
            sc.signal.to_string(),
            v.to_string(),
            group.len().to_string(),
            (group.len() - ok.len()).to_string(),
            fmt_mean_sd(&col(|r| r.tp as f64)),
            fmt_mean_sd(&col(|r| r.fp as f64)),
        ]);
    }
    t
}

/// Mean TP and FP of one variant over successful rows.
pub fn variant_means(rows: &[BenchRow], variant: Variant) -> (f64, f64) {
    let ok: Vec<&BenchRow> = rows.iter().filter(|r| r.variant == variant && r.error.is_none()).collect();
    let tp: Vec<f64> = ok.iter().map(|r| r.tp as f64).collect();
    let fp: Vec<f64> = ok.iter().map(|r| r.fp as f64).collect();
    (mean_sd(&tp).0, mean_sd(&fp).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_formats_mean_and_sd() {
        let sc = Scenario::of(&SimConfig::default());
        let row = |rep, tp, err: Option<&str>| BenchRow {
            scenario: sc,
            variant: Variant::Alt4,
            replicate: rep,
            tp,
            fp: 1,
            seconds: 0.5,
            error: err.map(String::from),
        };
        let rows = vec![row(1, 2, None), row(2, 4, None), row(3, 0, Some("boom"))];
        let t = summary_table(&rows);
        let text = t.to_csv_string();
        assert!(text.contains("alt4,3,1,3.00(1.41),1.00(0.00)\n"), "{text}");
        assert_eq!(rows_table(&rows).len(), 3);
        assert_eq!(variant_means(&rows, Variant::Alt4), (3.0, 1.0));
    }
}
