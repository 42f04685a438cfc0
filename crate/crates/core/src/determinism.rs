//! Zero-weight factor entries as hard constraints: the logical base, a
//! compiled consistency oracle, proposal renormalization and literal
//! entailment.

use std::sync::Arc;

use crate::circuit::{Circuit, Mask, Store, VarOrder};
use crate::error::{Error, Result};
use crate::model::{Assignment, Factor, FactorGraph, VarId};

/// `var = value`, or its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub var: VarId,
    pub value: usize,
    pub negated: bool,
}

/// A disjunction of literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause(Vec<Literal>);

impl Clause {
    /// The clause forbidding one full row of a factor.
    pub fn forbid(vars: &[VarId], values: &[usize]) -> Self {
        Clause(
            vars.iter()
                .zip(values)
                .map(|(&var, &value)| Literal {
                    var,
                    value,
                    negated: true,
                })
                .collect(),
        )
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn satisfied_by(&self, full: &[usize]) -> bool {
        self.0.iter().any(|l| (full[l.var] == l.value) != l.negated)
    }
}

/// Conjunction of all zero-row clauses, compiled to a 0/1 circuit.
#[derive(Debug, Clone)]
pub struct LogicalBase {
    clauses: Vec<Clause>,
    store: Store,
    circuit: Circuit,
}

impl LogicalBase {
    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Number of models of the base consistent with `a`.
    pub fn count(&self, a: &Assignment) -> f64 {
        self.store.wmc(&self.circuit, &Mask::from_assignment(self.store.num_vars(), a))
    }

    /// Whether some full extension of `a ∪ {var = value}` avoids every zero entry.
    pub fn consistent(&self, a: &Assignment, var: VarId, value: usize) -> bool {
        let mask = Mask::from_assignment(self.store.num_vars(), a).fix(var, value);
        self.store.wmc(&self.circuit, &mask) > 0.0
    }

    /// Every unassigned `var = value` implied by `a`, from one marginal pass.
    pub fn entailed_literals(&self, a: &Assignment) -> Result<Assignment> {
        let m = self
            .store
            .all_marginals(&self.circuit, &Mask::from_assignment(self.store.num_vars(), a))?;
        Ok(m.probs
            .iter()
            .enumerate()
            .filter(|(v, _)| !a.contains(*v))
            .filter_map(|(v, p)| single_support(p).map(|x| (v, x)))
            .collect())
    }
}

fn single_support(p: &[f64]) -> Option<usize> {
    let mut it = p.iter().enumerate().filter(|(_, &x)| x > 0.0);
    match (it.next(), it.next()) {
        (Some((x, _)), None) => Some(x),
        _ => None,
    }
}

/// One clause per zero-weight table row, negating that row's conjunction.
pub fn zero_clauses(graph: &FactorGraph) -> Vec<Clause> {
    let mut clauses = Vec::new();
    for f in graph.factors() {
        for (i, &w) in f.table().iter().enumerate() {
            if w == 0.0 {
                clauses.push(Clause::forbid(f.scope(), &f.row(i)));
            }
        }
    }
    clauses
}

pub fn extract_base(graph: &FactorGraph, order: VarOrder) -> Result<LogicalBase> {
    extract_base_with_limit(graph, order, None)
}

/// Builds and compiles the logical base, failing with a resource error once
/// the base store grows beyond `node_limit` nodes.
pub fn extract_base_with_limit(graph: &FactorGraph, order: VarOrder, node_limit: Option<usize>) -> Result<LogicalBase> {
    let clauses = zero_clauses(graph);
    let mut store = Store::new(graph.cards().to_vec(), order)?;
    let mut circuit = store.constant(1.0)?;
    for clause in &clauses {
        let vars: Vec<VarId> = clause.literals().iter().map(|l| l.var).collect();
        let cards: Vec<usize> = vars.iter().map(|&v| graph.cardinality(v)).collect();
        let values: Vec<usize> = clause.literals().iter().map(|l| l.value).collect();
        let mut table = vec![1.0; cards.iter().product()];
        let row = Factor::new(vars.clone(), cards.clone(), table.clone())?;
        table[row.index(&values)] = 0.0;
        let c = store.from_factor(&Factor::new(vars, cards, table)?);
        circuit = store.multiply(&circuit, &c);
        if let Some(limit) = node_limit {
            if store.num_nodes() > limit {
                return Err(Error::Resource(format!("logical base exceeded {limit} nodes")));
            }
        }
    }
    store.clear_apply_cache();
    if store.wmc(&circuit, &Mask::sum_all(graph.num_vars())) == 0.0 {
        return Err(Error::Inconsistent("logical base is unsatisfiable".into()));
    }
    Ok(LogicalBase {
        clauses,
        store,
        circuit,
    })
}

/// Zeroes disallowed entries and rescales the rest to sum to one. When every
/// allowed entry is zero the result is uniform over the allowed values.
pub fn renormalize(p: &[f64], allowed: &[bool]) -> Result<Vec<f64>> {
    if p.len() != allowed.len() {
        return Err(Error::Domain("probability and mask lengths differ".into()));
    }
    let n_allowed = allowed.iter().filter(|&&a| a).count();
    if n_allowed == 0 {
        return Err(Error::Inconsistent("no value is consistent with the logical base".into()));
    }
    let total: f64 = p.iter().zip(allowed).filter(|(_, &a)| a).map(|(x, _)| x).sum();
    Ok(if total > 0.0 {
        p.iter()
            .zip(allowed)
            .map(|(&x, &a)| if a { x / total } else { 0.0 })
            .collect()
    } else {
        allowed
            .iter()
            .map(|&a| if a { 1.0 / n_allowed as f64 } else { 0.0 })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    On,
    Off,
    /// Per-factor checks only.
    Local,
}

/// A consistency oracle for sampling decisions.
#[derive(Debug, Clone)]
pub enum Oracle {
    Off,
    Local,
    Compiled(Arc<LogicalBase>),
}

impl Oracle {
    /// Builds the requested oracle. A compiled base over `node_budget` nodes
    /// degrades to [`Oracle::Local`].
    pub fn build(graph: &FactorGraph, mode: OracleMode, order: &VarOrder, node_budget: Option<usize>) -> Result<Oracle> {
        Ok(match mode {
            OracleMode::Off => Oracle::Off,
            OracleMode::Local => Oracle::Local,
            OracleMode::On => match extract_base_with_limit(graph, order.clone(), node_budget) {
                Ok(base) => Oracle::Compiled(Arc::new(base)),
                Err(Error::Resource(_)) => Oracle::Local,
                Err(e) => return Err(e),
            },
        })
    }

    pub fn is_off(&self) -> bool {
        matches!(self, Oracle::Off)
    }

    /// Whether `a` (typically the evidence) can still be extended to a
    /// nonzero-weight assignment.
    pub fn satisfiable(&self, graph: &FactorGraph, a: &Assignment) -> bool {
        match self {
            Oracle::Off => true,
            Oracle::Compiled(base) => base.count(a) > 0.0,
            Oracle::Local => graph
                .factors()
                .iter()
                .all(|f| f.restrict(a).table().iter().any(|&w| w > 0.0)),
        }
    }

    pub fn consistent(&self, graph: &FactorGraph, a: &Assignment, var: VarId, value: usize) -> bool {
        match self {
            Oracle::Off => true,
            Oracle::Compiled(base) => base.consistent(a, var, value),
            Oracle::Local => {
                let mut ext = a.clone();
                ext.set(var, value);
                graph.adjacency(var).iter().all(|&fid| {
                    graph.factors()[fid]
                        .restrict(&ext)
                        .table()
                        .iter()
                        .any(|&w| w > 0.0)
                })
            }
        }
    }

    /// Per-value consistency of `var` given `a`.
    pub fn allowed(&self, graph: &FactorGraph, a: &Assignment, var: VarId) -> Vec<bool> {
        (0..graph.cardinality(var))
            .map(|x| self.consistent(graph, a, var, x))
            .collect()
    }

    /// Literals forced by `a`, in increasing variable order, skipping `exclude`.
    pub fn entailed(&self, graph: &FactorGraph, a: &Assignment, exclude: VarId) -> Result<Vec<(VarId, usize)>> {
        match self {
            Oracle::Off => Ok(Vec::new()),
            Oracle::Compiled(base) => Ok(base
                .entailed_literals(a)?
                .iter()
                .filter(|&(v, _)| v != exclude)
                .collect()),
            Oracle::Local => {
                let mut ext = a.clone();
                let mut out = Vec::new();
                loop {
                    let mut changed = false;
                    for v in 0..graph.num_vars() {
                        if v == exclude || ext.contains(v) {
                            continue;
                        }
                        let allowed = self.allowed(graph, &ext, v);
                        if allowed.iter().filter(|&&x| x).count() == 1 {
                            let x = allowed.iter().position(|&x| x).unwrap();
                            ext.set(v, x);
                            out.push((v, x));
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                out.sort_unstable();
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(table: Vec<f64>) -> FactorGraph {
        let cards = vec![2, 2];
        let f = FactorGraph::factor(&cards, vec![0, 1], table).unwrap();
        FactorGraph::new(cards, vec![f]).unwrap()
    }

    #[test]
    fn positive_model_has_empty_base() {
        let g = binary(vec![1.0, 2.0, 3.0, 4.0]);
        let b = extract_base(&g, VarOrder::natural(2)).unwrap();
        assert!(b.clauses().is_empty());
        assert_eq!(b.circuit(), &b.store().constant(1.0).unwrap());
        let a = Assignment::new();
        assert!(b.consistent(&a, 0, 1));
        assert!(b.entailed_literals(&a).unwrap().is_empty());
    }

    #[test]
    fn single_zero_row() {
        let g = binary(vec![1.0, 1.0, 1.0, 0.0]);
        let b = extract_base(&g, VarOrder::natural(2)).unwrap();
        assert_eq!(b.clauses().len(), 1);
        assert_eq!(b.count(&Assignment::new()), 3.0);
        assert!(b.entailed_literals(&Assignment::new()).unwrap().is_empty());
        let a: Assignment = [(0, 1)].into_iter().collect();
        assert_eq!(b.entailed_literals(&a).unwrap(), [(1, 0)].into_iter().collect());
    }

    #[test]
    fn equality_base() {
        let g = binary(vec![1.0, 0.0, 0.0, 1.0]);
        let b = extract_base(&g, VarOrder::natural(2)).unwrap();
        assert_eq!(b.count(&Assignment::new()), 2.0);
        let a0: Assignment = [(0, 0)].into_iter().collect();
        assert!(!b.consistent(&a0, 1, 1));
        assert!(b.consistent(&a0, 1, 0));
        let a1: Assignment = [(0, 1)].into_iter().collect();
        assert_eq!(b.entailed_literals(&a1).unwrap(), [(1, 1)].into_iter().collect());
        let local = Oracle::Local;
        assert!(!local.consistent(&g, &a0, 1, 1));
        assert_eq!(local.entailed(&g, &a1, 5).unwrap(), vec![(1, 1)]);
    }

    #[test]
    fn unsatisfiable_base() {
        let g = binary(vec![0.0; 4]);
        assert!(matches!(extract_base(&g, VarOrder::natural(2)), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn renormalization() {
        assert_eq!(renormalize(&[0.5, 0.5], &[true, false]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(renormalize(&[0.2, 0.8], &[true, true]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(renormalize(&[0.7, 0.3, 0.0], &[false, true, true]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(renormalize(&[1.0, 0.0], &[false, true]).unwrap(), vec![0.0, 1.0]);
        assert!(renormalize(&[0.5, 0.5], &[false, false]).is_err());
    }

    #[test]
    fn budget_falls_back_to_local() {
        let g = binary(vec![1.0, 0.0, 0.0, 1.0]);
        let o = Oracle::build(&g, OracleMode::On, &VarOrder::natural(2), Some(0)).unwrap();
        assert!(matches!(o, Oracle::Local));
        let o = Oracle::build(&g, OracleMode::On, &VarOrder::natural(2), None).unwrap();
        assert!(matches!(o, Oracle::Compiled(_)));
    }
}
