use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Kaplan–Meier weights for least-squares fitting of an accelerated failure
/// time model under right censoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalWeights {
    /// Weights in ascending observed-time order.
    pub rho: Vec<f64>,
    /// `sort_order[i]` is the original subject index at sorted position `i`.
    pub sort_order: Vec<usize>,
}

impl SurvivalWeights {
    /// Weights indexed by original subject.
    pub fn by_subject(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.rho.len());
        for (pos, &i) in self.sort_order.iter().enumerate() {
            out[i] = self.rho[pos];
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.rho.iter().sum()
    }
}

/// Sorts by observed time (events before censorings on ties, then by index)
/// and applies the product-limit jump formula.
pub fn km_weights(y_observed: &[f64], delta: &[bool]) -> SurvivalWeights {
    let n = y_observed.len();
    assert_eq!(n, delta.len(), "time and event vectors differ in length");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        y_observed[a]
            .total_cmp(&y_observed[b])
            .then(delta[b].cmp(&delta[a]))
            .then(a.cmp(&b))
    });
    let nf = n as f64;
    let mut rho = Vec::with_capacity(n);
    // Running product over earlier subjects of ((n−i')/(n−i'+1))^δ_i'.
    let mut surv = 1.0;
    for (pos, &i) in order.iter().enumerate() {
        let rank = (pos + 1) as f64;
        let d = delta[i];
        rho.push(if d { surv / (nf - rank + 1.0) } else { 0.0 });
        if d {
            surv *= (nf - rank) / (nf - rank + 1.0);
        }
    }
    SurvivalWeights {
        rho,
        sort_order: order,
    }
}
