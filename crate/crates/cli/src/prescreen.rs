//! Marginal-regression prescreening of molecular columns.

use meint::data::{Dataset, Entity};
use meint::interact::km_weights;
use meint::io::{format_f64, CsvTable};
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::CliError;

#[derive(Clone, Debug)]
pub struct Marginal {
    pub entity: Entity,
    pub slope: f64,
    pub t: f64,
    pub pvalue: f64,
}

/// Simple regression of the outcome on one column, with an intercept. In
/// survival mode each subject is weighted by its Kaplan–Meier jump, so
/// censored subjects before the last event carry no weight.
fn marginal(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let used = w.iter().filter(|v| **v > 0.0).count();
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - xm, y[i] - ym);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if used < 3 || sxx <= 0.0 {
        return (0.0, 0.0, 1.0);
    }
    let slope = sxy / sxx;
    let df = (used - 2) as f64;
    // Weights are rescaled to sum to the number of weighted subjects.
    let scale = used as f64 / sw;
    let rss = ((syy - slope * sxy) * scale).max(0.0);
    let se = (rss / df / (sxx * scale)).sqrt();
    if se == 0.0 {
        return (slope, f64::INFINITY, 0.0);
    }
    let t = slope / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (slope, t, 2.0 * dist.sf(t.abs()))
}

pub fn marginal_tests(ds: &Dataset) -> Vec<Marginal> {
    let w: Vec<f64> = match &ds.delta {
        Some(d) => {
            let kw = km_weights(ds.y.as_slice(), d).by_subject();
            kw.iter().copied().collect()
        }
        None => vec![1.0; ds.n()],
    };
    let y = ds.y.as_slice();
    let entities = (0..ds.p()).map(Entity::Gene).chain((0..ds.q()).map(Entity::Regulator));
    entities
        .map(|entity| {
            let col: Vec<f64> = ds.entity_column(entity).iter().copied().collect();
            let (slope, t, pvalue) = marginal(&col, y, &w);
            Marginal { entity, slope, t, pvalue }
        })
        .collect()
}

/// Keeps the `k` columns of `G` and `R` jointly with the smallest marginal
/// p-values (ties broken by column order). Returns the reduced dataset and a
/// report table.
pub fn prescreen(ds: &Dataset, k: usize) -> Result<(Dataset, CsvTable), CliError> {
    let tests = marginal_tests(ds);
    let mut order: Vec<usize> = (0..tests.len()).collect();
    order.sort_by(|&a, &b| tests[a].pvalue.total_cmp(&tests[b].pvalue).then(a.cmp(&b)));
    let mut keep = vec![false; tests.len()];
    order.iter().take(k).for_each(|&i| keep[i] = true);

    let mut genes = Vec::new();
    let mut regs = Vec::new();
    let mut table = CsvTable::new(&["entity_type", "entity_name", "slope", "t", "pvalue", "kept"]);
    for (i, m) in tests.iter().enumerate() {
        if keep[i] {
            match m.entity {
                Entity::Gene(j) => genes.push(j),
                Entity::Regulator(l) => regs.push(l),
            }
        }
        table.push(vec![
            m.entity.kind().into(),
            ds.entity_name(m.entity).into(),
            format_f64(m.slope),
            format_f64(m.t),
            format_f64(m.pvalue),
            u8::from(keep[i]).to_string(),
        ]);
    }
    if genes.is_empty() || regs.is_empty() {
        return Err(CliError::Usage(format!(
            "--prescreen {k} keeps {} genes and {} regulators; both blocks need at least one column",
            genes.len(),
            regs.len()
        )));
    }
    let cols = |m: &DMatrix<f64>, idx: &[usize]| m.select_columns(idx);
    let reduced = Dataset {
        g: cols(&ds.g, &genes),
        r: cols(&ds.r, &regs),
        gene_names: genes.iter().map(|&j| ds.gene_names[j].clone()).collect(),
        regulator_names: regs.iter().map(|&l| ds.regulator_names[l].clone()).collect(),
        ..ds.clone()
    };
    Ok((reduced, table))
}
