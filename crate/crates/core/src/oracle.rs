//! Brute-force exact inference and evaluation metrics.

use crate::error::{Error, Result};
use crate::model::{Assignment, FactorGraph};

/// Largest number of free-variable assignments [`exact`] enumerates.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

/// Partition function and per-variable posterior marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub z: f64,
    pub marginals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Number of assignments to the variables not fixed by `evidence`.
pub fn state_count(graph: &FactorGraph, evidence: &Assignment) -> u128 {
    graph
        .variables()
        .filter(|v| !evidence.contains(v.id))
        .fold(1u128, |acc, v| acc.saturating_mul(v.cardinality as u128))
}

/// Calls `visit` with every full assignment consistent with `evidence`.
pub fn enumerate(graph: &FactorGraph, evidence: &Assignment, cap: u128, mut visit: impl FnMut(&[usize])) -> Result<()> {
    graph.check_assignment(evidence)?;
    let states = state_count(graph, evidence);
    if states > cap {
        return Err(Error::TooLarge { states, cap });
    }
    let free: Vec<usize> = (0..graph.num_vars()).filter(|&v| !evidence.contains(v)).collect();
    let mut full: Vec<usize> = (0..graph.num_vars()).map(|v| evidence.get(v).unwrap_or(0)).collect();
    for _ in 0..states {
        visit(&full);
        for &v in free.iter().rev() {
            full[v] += 1;
            if full[v] < graph.cardinality(v) {
                break;
            }
            full[v] = 0;
        }
    }
    Ok(())
}

pub fn exact(graph: &FactorGraph, evidence: &Assignment) -> Result<ExactResult> {
    exact_with_cap(graph, evidence, DEFAULT_STATE_CAP)
}

pub fn exact_with_cap(graph: &FactorGraph, evidence: &Assignment, cap: u128) -> Result<ExactResult> {
    let mut z = Kahan::default();
    let mut mass: Vec<Vec<Kahan>> = graph.cards().iter().map(|&k| vec![Kahan::default(); k]).collect();
    enumerate(graph, evidence, cap, |full| {
        let w = graph.weight(full);
        if w != 0.0 {
            z.add(w);
            for (v, &x) in full.iter().enumerate() {
                mass[v][x].add(w);
            }
        }
    })?;
    if !(z.sum > 0.0) {
        return Err(Error::Inconsistent("model has zero partition function under the evidence".into()));
    }
    let marginals = mass
        .iter()
        .map(|m| m.iter().map(|k| k.sum / z.sum).collect())
        .collect();
    Ok(ExactResult { z: z.sum, marginals })
}

/// `E_P[fun]` under the model's normalized distribution.
pub fn expectation(graph: &FactorGraph, fun: impl Fn(&[usize]) -> f64) -> Result<f64> {
    let mut z = Kahan::default();
    let mut acc = Kahan::default();
    enumerate(graph, &Assignment::new(), DEFAULT_STATE_CAP, |full| {
        let w = graph.weight(full);
        if w != 0.0 {
            z.add(w);
            acc.add(w * fun(full));
        }
    })?;
    if !(z.sum > 0.0) {
        return Err(Error::Inconsistent("model has zero partition function".into()));
    }
    Ok(acc.sum / z.sum)
}

/// `H(P, Q) = sqrt(sum_i (sqrt p_i - sqrt q_i)^2) / sqrt 2`.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "distributions have different lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok((s.sqrt() / std::f64::consts::SQRT_2).min(1.0))
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
