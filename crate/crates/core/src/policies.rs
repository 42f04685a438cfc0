//! Deterministic variable-selection policies.
//!
//! Every policy scores the candidates (unassigned, non-query variables in the
//! current circuit's scope) and returns the best one. Scores within a relative
//! `1e-12` of the running best count as ties, and ties go to the lowest id.

use crate::circuit::{entropy, Circuit, Mask, Store};
use crate::compiler::{CompileState, OrderMode};
use crate::error::{Error, Result};
use crate::model::{DistanceTable, FactorGraph, QuerySpec, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Least increase of the Rao-Blackwell variance of the query.
    RbVar,
    /// Smallest entropy of the circuit marginal.
    MinEnt,
    /// Closest to the centre of the compilation frontier.
    FrontierDist,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RbVar => "rbvar",
            PolicyKind::MinEnt => "minent",
            PolicyKind::FrontierDist => "fd",
        }
    }

    /// The compilation order each policy is paired with by default.
    pub fn default_order(self) -> OrderMode {
        match self {
            PolicyKind::RbVar => OrderMode::Bfs,
            PolicyKind::MinEnt | PolicyKind::FrontierDist => OrderMode::RevBfs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    pub kind: PolicyKind,
    /// Select the RBVAR maximizer instead of the minimizer.
    pub rbvar_argmax: bool,
}

impl Policy {
    pub fn new(kind: PolicyKind) -> Self {
        Policy {
            kind,
            rbvar_argmax: false,
        }
    }
}

/// Candidates for conditioning, ascending.
pub fn candidates(state: &CompileState, query: &QuerySpec) -> Vec<VarId> {
    state
        .current()
        .scope()
        .iter()
        .copied()
        .filter(|&v| v != query.var && !state.assigned().contains(v))
        .collect()
}

fn argmin(cands: &[VarId], scores: &[f64]) -> VarId {
    let mut best = 0;
    for i in 1..cands.len() {
        let tol = 1e-12 * scores[best].abs().max(1.0);
        if scores[i] < scores[best] - tol {
            best = i;
        }
    }
    cands[best]
}

/// `sum_v P(query = value | x = v)^2 P(x = v)` in the current circuit.
pub fn rbvar_event_score(store: &Store, c: &Circuit, x: VarId, query_var: VarId, query_value: usize) -> Result<f64> {
    let n = store.num_vars();
    let all = store.all_marginals(c, &Mask::sum_all(n))?;
    let p_alpha = all.probs[query_var][query_value];
    if p_alpha == 0.0 {
        return Ok(0.0);
    }
    let cond = store.all_marginals(c, &Mask::sum_all(n).fix(query_var, query_value))?;
    Ok(event_score(&all.probs[x], &cond.probs[x], p_alpha))
}

fn event_score(px: &[f64], px_given_alpha: &[f64], p_alpha: f64) -> f64 {
    px.iter()
        .zip(px_given_alpha)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &pa)| {
            let post = pa * p_alpha / p;
            post * post * p
        })
        .sum()
}

/// RBVAR scores of `cands`: event scores summed over query values, each
/// weighted by the current query marginal.
pub fn rbvar_scores(store: &Store, c: &Circuit, cands: &[VarId], query_var: VarId) -> Result<Vec<f64>> {
    let n = store.num_vars();
    let all = store.all_marginals(c, &Mask::sum_all(n))?;
    let mut scores = vec![0.0; cands.len()];
    for (a, &p_alpha) in all.probs[query_var].iter().enumerate() {
        if p_alpha == 0.0 {
            continue;
        }
        let cond = store.all_marginals(c, &Mask::sum_all(n).fix(query_var, a))?;
        for (s, &x) in scores.iter_mut().zip(cands) {
            *s += p_alpha * event_score(&all.probs[x], &cond.probs[x], p_alpha);
        }
    }
    Ok(scores)
}

pub fn rbvar_score(store: &Store, c: &Circuit, x: VarId, query_var: VarId) -> Result<f64> {
    Ok(rbvar_scores(store, c, &[x], query_var)?[0])
}

pub fn minent_select(store: &Store, c: &Circuit, cands: &[VarId]) -> Result<VarId> {
    if cands.is_empty() {
        return Err(Error::SelectionExhausted);
    }
    let m = store.all_marginals(c, &Mask::sum_all(store.num_vars()))?;
    let scores: Vec<f64> = cands.iter().map(|&x| entropy(&m.probs[x])).collect();
    Ok(argmin(cands, &scores))
}

/// `argmin_x max_{f in frontier} dist(x, f)`; the lowest id when the frontier is empty.
pub fn fd_select(cands: &[VarId], frontier: &[VarId], distances: &DistanceTable) -> Result<VarId> {
    if cands.is_empty() {
        return Err(Error::SelectionExhausted);
    }
    if frontier.is_empty() {
        return Ok(cands[0]);
    }
    let scores: Vec<f64> = cands
        .iter()
        .map(|&x| frontier.iter().map(|&f| distances.get(x, f)).max().unwrap() as f64)
        .collect();
    Ok(argmin(cands, &scores))
}

/// A policy bound to the model-level data it needs.
#[derive(Debug, Clone)]
pub struct Selector {
    policy: Policy,
    distances: Option<DistanceTable>,
}

impl Selector {
    pub fn new(policy: Policy, graph: &FactorGraph) -> Self {
        let distances = (policy.kind == PolicyKind::FrontierDist).then(|| graph.distance_table());
        Selector { policy, distances }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn select(&self, state: &CompileState, graph: &FactorGraph, query: &QuerySpec, store: &Store) -> Result<VarId> {
        let cands = candidates(state, query);
        if cands.is_empty() {
            return Err(Error::SelectionExhausted);
        }
        match self.policy.kind {
            PolicyKind::RbVar => {
                let mut scores = rbvar_scores(store, state.current(), &cands, query.var)?;
                if self.policy.rbvar_argmax {
                    scores.iter_mut().for_each(|s| *s = -*s);
                }
                Ok(argmin(&cands, &scores))
            }
            PolicyKind::MinEnt => minent_select(store, state.current(), &cands),
            PolicyKind::FrontierDist => {
                let frontier: Vec<VarId> = state.frontier(graph).into_iter().collect();
                fd_select(&cands, &frontier, self.distances.as_ref().expect("distance table"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::VarOrder;
    use crate::model::{Assignment, FactorGraph};

    fn chain(n: usize) -> FactorGraph {
        let cards = vec![2; n];
        let factors = (0..n - 1)
            .map(|i| FactorGraph::factor(&cards, vec![i, i + 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .collect();
        FactorGraph::new(cards, factors).unwrap()
    }

    fn unary_model(tables: &[[f64; 2]]) -> (FactorGraph, Store, Circuit) {
        let cards = vec![2; tables.len()];
        let factors: Vec<_> = tables
            .iter()
            .enumerate()
            .map(|(v, t)| FactorGraph::factor(&cards, vec![v], t.to_vec()).unwrap())
            .collect();
        let g = FactorGraph::new(cards.clone(), factors).unwrap();
        let mut s = Store::new(cards, VarOrder::natural(tables.len())).unwrap();
        let mut c = s.constant(1.0).unwrap();
        for f in g.factors() {
            let fc = s.from_factor(f);
            c = s.multiply(&c, &fc);
        }
        (g, s, c)
    }

    #[test]
    fn minent_prefers_point_masses() {
        let (_, s, c) = unary_model(&[[1.0, 1.0], [1.0, 1.0], [3.0, 0.0]]);
        assert_eq!(minent_select(&s, &c, &[1, 2]).unwrap(), 2);
        assert_eq!(minent_select(&s, &c, &[0, 1]).unwrap(), 0);
        assert!(matches!(minent_select(&s, &c, &[]), Err(Error::SelectionExhausted)));
    }

    #[test]
    fn frontier_distance_on_chain() {
        let g = chain(5);
        let d = g.distance_table();
        assert_eq!(fd_select(&[0, 1, 2], &[3], &d).unwrap(), 2);
        assert_eq!(fd_select(&[1, 2], &[], &d).unwrap(), 1);
    }

    #[test]
    fn frontier_distance_on_grid() {
        // 3x3 grid, ids row-major
        let cards = vec![2; 9];
        let mut factors = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                let v = r * 3 + c;
                if c + 1 < 3 {
                    factors.push(FactorGraph::factor(&cards, vec![v, v + 1], vec![1.0; 4]).unwrap());
                }
                if r + 1 < 3 {
                    factors.push(FactorGraph::factor(&cards, vec![v, v + 3], vec![1.0; 4]).unwrap());
                }
            }
        }
        let g = FactorGraph::new(cards, factors).unwrap();
        let d = g.distance_table();
        // frontier {2, 6}: max distances 0:(2,2) 1:(1,3) 3:(3,1) 4:(2,2) 5:(1,3) 8:(2,2)
        assert_eq!(fd_select(&[0, 1, 3, 4, 5, 8], &[2, 6], &d).unwrap(), 0);
        assert_eq!(fd_select(&[1, 3, 4, 5], &[2, 6], &d).unwrap(), 4);
        // frontier {0, 1}: max distances 3:(1,2) 4:(2,1) 5:(3,2)
        assert_eq!(fd_select(&[3, 4, 5], &[0, 1], &d).unwrap(), 3);
    }

    #[test]
    fn rbvar_limits() {
        // x0 independent of the query x2, x1 equal to it
        let cards = vec![2, 2, 2];
        let fs = vec![
            FactorGraph::factor(&cards, vec![0], vec![1.0, 3.0]).unwrap(),
            FactorGraph::factor(&cards, vec![1, 2], vec![1.0, 0.0, 0.0, 3.0]).unwrap(),
            FactorGraph::factor(&cards, vec![2], vec![2.0, 1.0]).unwrap(),
        ];
        let g = FactorGraph::new(cards.clone(), fs).unwrap();
        let mut s = Store::new(cards, VarOrder::natural(3)).unwrap();
        let mut c = s.constant(1.0).unwrap();
        for f in g.factors() {
            let fc = s.from_factor(f);
            c = s.multiply(&c, &fc);
        }
        // P(x2 = 1) = 3 / 5
        let p = 3.0 / 5.0;
        let indep = rbvar_event_score(&s, &c, 0, 2, 1).unwrap();
        assert!((indep - p * p).abs() < 1e-12);
        let det = rbvar_event_score(&s, &c, 1, 2, 1).unwrap();
        assert!((det - p).abs() < 1e-12);
        let both = rbvar_scores(&s, &c, &[0, 1], 2).unwrap();
        assert!(both[0] < both[1]);
        assert!(both.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn rbvar_ties_pick_lowest_id() {
        let cards = vec![2; 4];
        let mut s = Store::new(cards.clone(), VarOrder::natural(4)).unwrap();
        let sym: Vec<_> = (0..3)
            .map(|i| FactorGraph::factor(&cards, vec![i, i + 1], vec![1.0; 4]).unwrap())
            .collect();
        let g = FactorGraph::new(cards, sym).unwrap();
        let q = QuerySpec::new(&g, 3, Assignment::new()).unwrap();
        let mut st = CompileState::for_query(&g, &q, OrderMode::Bfs, &s);
        while !st.is_compiled() {
            st.step(&g, &mut s).unwrap();
        }
        let sel = Selector::new(Policy::new(PolicyKind::RbVar), &g);
        let pick = sel.select(&st, &g, &q, &s).unwrap();
        assert_eq!(pick, 0);
        let again = sel.select(&st, &g, &q, &s).unwrap();
        assert_eq!(pick, again);
    }
}
