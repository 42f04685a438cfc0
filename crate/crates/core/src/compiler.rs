//! Bottom-up compilation: factor circuits multiplied one at a time in a
//! planned order, with conditioning allowed between steps.

use std::collections::{BTreeSet, VecDeque};

use crate::circuit::{Circuit, Store};
use crate::error::{Error, Result};
use crate::model::{Assignment, FactorGraph, QuerySpec, VarId, UNREACHABLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderMode {
    /// Outwards from the query variable.
    Bfs,
    /// The exact reverse of [`OrderMode::Bfs`], reaching the query last.
    RevBfs,
}

/// Factor multiplication order. A factor's distance is the minimum
/// primal-graph distance from the query over its scope; ties go to the lower
/// factor id and factors unreachable from the query come last.
pub fn plan_order(graph: &FactorGraph, query: &QuerySpec, mode: OrderMode) -> Vec<usize> {
    let dist = graph.distances_from(query.var);
    let mut keyed: Vec<(usize, usize)> = graph
        .factors()
        .iter()
        .enumerate()
        .map(|(fid, f)| {
            let d = f.scope().iter().map(|&v| dist[v]).min().unwrap_or(UNREACHABLE);
            (d, fid)
        })
        .collect();
    keyed.sort_unstable();
    let mut order: Vec<usize> = keyed.into_iter().map(|(_, fid)| fid).collect();
    if mode == OrderMode::RevBfs {
        order.reverse();
    }
    order
}

/// Loop state of one collapsed-compilation sample.
#[derive(Debug, Clone)]
pub struct CompileState {
    current: Circuit,
    multiplied: Vec<bool>,
    touched: Vec<usize>,
    pending: VecDeque<usize>,
    assigned: Assignment,
    q: f64,
}

impl CompileState {
    /// Empty product over `order`, with `assigned` (usually the evidence)
    /// already conditioned.
    pub fn new(graph: &FactorGraph, order: Vec<usize>, assigned: Assignment, store: &Store) -> Self {
        CompileState {
            current: store.constant(1.0).expect("unit constant"),
            multiplied: vec![false; graph.factors().len()],
            touched: vec![0; graph.num_vars()],
            pending: order.into(),
            assigned,
            q: 1.0,
        }
    }

    pub fn for_query(graph: &FactorGraph, query: &QuerySpec, mode: OrderMode, store: &Store) -> Self {
        Self::new(graph, plan_order(graph, query, mode), query.evidence.clone(), store)
    }

    pub fn current(&self) -> &Circuit {
        &self.current
    }

    pub fn assigned(&self) -> &Assignment {
        &self.assigned
    }

    /// Product of the proposal probabilities of every sampled value so far.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        self.pending.iter().copied()
    }

    pub fn is_multiplied(&self, factor: usize) -> bool {
        self.multiplied[factor]
    }

    pub fn is_compiled(&self) -> bool {
        self.pending.is_empty()
    }

    /// Multiplies the next pending factor, restricted by the assigned values.
    pub fn step(&mut self, graph: &FactorGraph, store: &mut Store) -> Result<usize> {
        let fid = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::Domain("compile step with no pending factor".into()))?;
        let factor = &graph.factors()[fid];
        let restricted = factor.restrict(&self.assigned);
        let fc = store.from_factor(&restricted);
        self.current = store.multiply(&self.current, &fc);
        self.multiplied[fid] = true;
        for &v in factor.scope() {
            self.touched[v] += 1;
        }
        Ok(fid)
    }

    /// Conditions `var = value` into the circuit and every later factor,
    /// scaling the proposal probability by `prob`.
    pub fn assign(&mut self, store: &mut Store, var: VarId, value: usize, prob: f64) {
        self.current = store.condition(&self.current, var, value);
        self.assigned.set(var, value);
        self.q *= prob;
    }

    /// The current circuit over every unassigned model variable, so that
    /// variables outside all multiplied factors count each of their values.
    pub fn completed(&self, graph: &FactorGraph) -> Circuit {
        let free = (0..graph.num_vars()).filter(|&v| !self.assigned.contains(v));
        self.current.clone().lift(free)
    }

    /// Unassigned variables with some, but not all, incident factors multiplied.
    pub fn frontier(&self, graph: &FactorGraph) -> BTreeSet<VarId> {
        (0..graph.num_vars())
            .filter(|&v| {
                let t = self.touched[v];
                !self.assigned.contains(v) && t > 0 && t < graph.adjacency(v).len()
            })
            .collect()
    }
}

/// Compiles the whole model with the query's evidence conditioned in.
pub fn compile_exact(graph: &FactorGraph, query: &QuerySpec, mode: OrderMode, store: &mut Store) -> Result<Circuit> {
    compile_exact_with_limit(graph, query, mode, store, None)
}

/// As [`compile_exact`], failing with a resource error once the store holds
/// more than `node_limit` nodes.
pub fn compile_exact_with_limit(
    graph: &FactorGraph,
    query: &QuerySpec,
    mode: OrderMode,
    store: &mut Store,
    node_limit: Option<usize>,
) -> Result<Circuit> {
    let mut state = CompileState::for_query(graph, query, mode, store);
    while !state.is_compiled() {
        state.step(graph, store)?;
        if let Some(limit) = node_limit {
            if store.num_nodes() > limit {
                return Err(Error::Resource(format!("compilation exceeded {limit} nodes")));
            }
        }
    }
    Ok(state.completed(graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Mask, VarOrder};
    use crate::model::parse_uai;

    const CHAIN3: &str = "MARKOV\n3\n2 2 2\n2\n2 0 1\n2 1 2\n\n4\n2 2 2 5\n\n4\n3 8 8 8\n";

    fn chain(n: usize) -> FactorGraph {
        let cards = vec![2; n];
        let factors = (0..n - 1)
            .map(|i| FactorGraph::factor(&cards, vec![i, i + 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .collect();
        FactorGraph::new(cards, factors).unwrap()
    }

    fn store_for(g: &FactorGraph) -> Store {
        Store::new(g.cards().to_vec(), VarOrder::natural(g.num_vars())).unwrap()
    }

    #[test]
    fn bfs_orders_on_chain() {
        let g = chain(4);
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        assert_eq!(plan_order(&g, &q, OrderMode::Bfs), vec![0, 1, 2]);
        assert_eq!(plan_order(&g, &q, OrderMode::RevBfs), vec![2, 1, 0]);
        let g = chain(2);
        let q = QuerySpec::new(&g, 1, Assignment::new()).unwrap();
        assert_eq!(plan_order(&g, &q, OrderMode::Bfs), vec![0]);
        assert_eq!(plan_order(&g, &q, OrderMode::RevBfs), vec![0]);
    }

    #[test]
    fn exact_chain3() {
        let g = parse_uai(CHAIN3).unwrap();
        let mut s = store_for(&g);
        let q = QuerySpec::new(&g, 1, Assignment::new()).unwrap();
        let c = compile_exact(&g, &q, OrderMode::Bfs, &mut s).unwrap();
        assert_eq!(s.wmc(&c, &Mask::sum_all(3)), 156.0);
        let q = QuerySpec::new(&g, 0, [(1, 1)].into_iter().collect()).unwrap();
        let c = compile_exact(&g, &q, OrderMode::RevBfs, &mut s).unwrap();
        assert_eq!(s.wmc(&c, &Mask::sum_all(3)), 112.0);
        assert!(!c.in_scope(1));
    }

    #[test]
    fn empty_model_compiles_to_one() {
        let g = FactorGraph::new(vec![2], vec![]).unwrap();
        let mut s = store_for(&g);
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        let c = compile_exact(&g, &q, OrderMode::Bfs, &mut s).unwrap();
        assert_eq!(c, s.constant(1.0).unwrap().lift([0]));
        assert_eq!(s.wmc(&c, &Mask::sum_all(1)), 2.0);
    }

    #[test]
    fn node_limit_is_a_resource_error() {
        let g = chain(6);
        let mut s = store_for(&g);
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        let r = compile_exact_with_limit(&g, &q, OrderMode::Bfs, &mut s, Some(2));
        assert!(matches!(r, Err(Error::Resource(_))));
    }

    #[test]
    fn frontier_tracking() {
        let g = chain(3);
        let mut s = store_for(&g);
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        let mut st = CompileState::for_query(&g, &q, OrderMode::Bfs, &s);
        assert!(st.frontier(&g).is_empty());
        st.step(&g, &mut s).unwrap();
        assert_eq!(st.frontier(&g), BTreeSet::from([1]));
        st.step(&g, &mut s).unwrap();
        assert!(st.frontier(&g).is_empty());
        assert!(st.step(&g, &mut s).is_err());
    }

    #[test]
    fn covered_factor_multiplies_a_constant() {
        let g = parse_uai(CHAIN3).unwrap();
        let mut s = store_for(&g);
        let mut st = CompileState::new(&g, vec![1, 0], Assignment::new(), &s);
        st.step(&g, &mut s).unwrap();
        st.assign(&mut s, 1, 1, 0.5);
        // f_1 restricted to B=1 still has A free; condition A too
        st.assign(&mut s, 0, 1, 0.5);
        let before = s.wmc(st.current(), &Mask::sum_all(3));
        st.step(&g, &mut s).unwrap();
        assert_eq!(s.wmc(st.current(), &Mask::sum_all(3)), before * 5.0);
        assert_eq!(st.q(), 0.25);
    }
}
