//! Reduced, ordered, weighted multi-valued decision diagrams.
//!
//! A [`Store`] owns the shared node table for one variable order. A
//! [`Circuit`] is a handle into a store: a weighted root edge plus the set of
//! variables the represented function ranges over. Variables of the scope
//! that a path does not test are free along that path, so the function does
//! not depend on them there; summing such a variable out multiplies by its
//! number of unmasked values.
//!
//! Every decision node is normalized so that its largest outgoing weight is
//! exactly `1.0`; the factored-out scale travels on the incoming edge. Zero
//! edges always point at the terminal, and a node whose outgoing edges are
//! all identical is never stored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Assignment, Factor, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    /// The single terminal, evaluating to 1.
    pub const TRUE: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub weight: f64,
    pub node: NodeId,
}

impl Edge {
    pub const ZERO: Edge = Edge {
        weight: 0.0,
        node: NodeId::TRUE,
    };

    fn unit(node: NodeId) -> Edge {
        Edge { weight: 1.0, node }
    }

    fn key(&self) -> (u64, u32) {
        (self.weight.to_bits(), self.node.0)
    }
}

#[derive(Debug, Clone)]
struct Node {
    var: VarId,
    children: Box<[Edge]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NodeKey {
    var: VarId,
    children: Box<[(u64, u32)]>,
}

/// A fixed total order on variables. Paths test variables by increasing rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarOrder {
    order: Vec<VarId>,
    rank: Vec<usize>,
}

impl VarOrder {
    /// Variables ranked by id.
    pub fn natural(n: usize) -> Self {
        VarOrder {
            order: (0..n).collect(),
            rank: (0..n).collect(),
        }
    }

    pub fn from_permutation(order: Vec<VarId>) -> Result<Self> {
        let n = order.len();
        let mut rank = vec![usize::MAX; n];
        for (r, &v) in order.iter().enumerate() {
            if v >= n || rank[v] != usize::MAX {
                return Err(Error::Domain(format!("variable order is not a permutation of 0..{n}")));
            }
            rank[v] = r;
        }
        Ok(VarOrder { order, rank })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn rank(&self, var: VarId) -> usize {
        self.rank[var]
    }

    pub fn var_at(&self, rank: usize) -> VarId {
        self.order[rank]
    }

    pub fn as_slice(&self) -> &[VarId] {
        &self.order
    }
}

/// Per-variable evaluation inputs: a fixed value, or summation over all values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(Vec<Option<usize>>);

impl Mask {
    pub fn sum_all(n: usize) -> Self {
        Mask(vec![None; n])
    }

    pub fn from_assignment(n: usize, a: &Assignment) -> Self {
        let mut m = Mask::sum_all(n);
        for (v, x) in a.iter() {
            m.0[v] = Some(x);
        }
        m
    }

    pub fn fix(mut self, var: VarId, value: usize) -> Self {
        self.0[var] = Some(value);
        self
    }

    pub fn set(&mut self, var: VarId, value: Option<usize>) {
        self.0[var] = value;
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0[var]
    }

    fn allows(&self, var: VarId, value: usize) -> bool {
        self.0[var].is_none_or(|x| x == value)
    }

    fn count(&self, var: VarId, card: usize) -> usize {
        if self.0[var].is_some() {
            1
        } else {
            card
        }
    }
}

/// A function over `scope`, rooted in some [`Store`].
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    root: Edge,
    scope: BTreeSet<VarId>,
}

impl Circuit {
    pub fn root(&self) -> Edge {
        self.root
    }

    pub fn scope(&self) -> &BTreeSet<VarId> {
        &self.scope
    }

    pub fn in_scope(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    /// The same function, additionally declared to range over `vars`.
    pub fn lift(mut self, vars: impl IntoIterator<Item = VarId>) -> Self {
        self.scope.extend(vars);
        self
    }
}

/// Normalized marginals of every model variable plus the weighted model count.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub wmc: f64,
    pub probs: Vec<Vec<f64>>,
}

/// Scope variables of one evaluation, in rank order, with their unmasked counts.
struct ScopeRanks {
    ranks: Vec<usize>,
    vars: Vec<VarId>,
    counts: Vec<f64>,
}

impl ScopeRanks {
    /// Positions of scope variables with rank in `lo..hi`.
    fn gap(&self, lo: usize, hi: usize) -> std::ops::Range<usize> {
        let a = self.ranks.partition_point(|&r| r < lo);
        let b = self.ranks.partition_point(|&r| r < hi);
        a..b.max(a)
    }

    fn skip(&self, lo: usize, hi: usize) -> f64 {
        self.counts[self.gap(lo, hi)].iter().product()
    }
}

/// Shared node storage with a unique table and an apply cache.
#[derive(Debug, Clone)]
pub struct Store {
    cards: Vec<usize>,
    order: VarOrder,
    nodes: Vec<Node>,
    unique: HashMap<NodeKey, NodeId>,
    apply_cache: HashMap<(NodeId, NodeId), Edge>,
}

impl Store {
    pub fn new(cards: Vec<usize>, order: VarOrder) -> Result<Self> {
        if cards.len() != order.len() {
            return Err(Error::Domain(format!(
                "variable order covers {} variables, model has {}",
                order.len(),
                cards.len()
            )));
        }
        Ok(Store {
            cards,
            order,
            nodes: vec![Node {
                var: usize::MAX,
                children: Box::new([]),
            }],
            unique: HashMap::new(),
            apply_cache: HashMap::new(),
        })
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn order(&self) -> &VarOrder {
        &self.order
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    /// Decision nodes ever stored, reachable or not.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn clear_apply_cache(&mut self) {
        self.apply_cache.clear();
    }

    /// Drops every node. Previously returned circuits become invalid.
    pub fn reset(&mut self) {
        self.nodes.truncate(1);
        self.unique.clear();
        self.apply_cache.clear();
    }

    /// Tested variable and outgoing edges of a decision node.
    pub fn node(&self, id: NodeId) -> Option<(VarId, &[Edge])> {
        if id == NodeId::TRUE {
            None
        } else {
            let n = &self.nodes[id.index()];
            Some((n.var, &n.children))
        }
    }

    fn rank_of(&self, id: NodeId) -> usize {
        if id == NodeId::TRUE {
            self.cards.len()
        } else {
            self.order.rank(self.nodes[id.index()].var)
        }
    }

    fn mk(&mut self, var: VarId, mut children: Vec<Edge>) -> Edge {
        for e in children.iter_mut() {
            if e.weight == 0.0 {
                *e = Edge::ZERO;
            }
        }
        let first = children[0];
        if children.iter().all(|e| e.key() == first.key()) {
            return first;
        }
        let scale = children.iter().map(|e| e.weight).fold(0.0, f64::max);
        for e in children.iter_mut() {
            if e.weight != 0.0 {
                e.weight /= scale;
            }
        }
        let key = NodeKey {
            var,
            children: children.iter().map(Edge::key).collect(),
        };
        let id = match self.unique.get(&key) {
            Some(&id) => id,
            None => {
                let id = NodeId(u32::try_from(self.nodes.len()).expect("node store overflow"));
                self.nodes.push(Node {
                    var,
                    children: children.into_boxed_slice(),
                });
                self.unique.insert(key, id);
                id
            }
        };
        Edge { weight: scale, node: id }
    }

    pub fn constant(&self, weight: f64) -> Result<Circuit> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Domain(format!("constant weight {weight} is not a finite nonnegative real")));
        }
        let root = if weight == 0.0 {
            Edge::ZERO
        } else {
            Edge {
                weight,
                node: NodeId::TRUE,
            }
        };
        Ok(Circuit {
            root,
            scope: BTreeSet::new(),
        })
    }

    /// Indicator of `var = value`.
    pub fn literal(&mut self, var: VarId, value: usize) -> Circuit {
        let children = (0..self.cards[var])
            .map(|x| if x == value { Edge::unit(NodeId::TRUE) } else { Edge::ZERO })
            .collect();
        let root = self.mk(var, children);
        Circuit {
            root,
            scope: BTreeSet::from([var]),
        }
    }

    pub fn from_factor(&mut self, f: &Factor) -> Circuit {
        // scope positions sorted by rank
        let mut positions: Vec<usize> = (0..f.scope().len()).collect();
        positions.sort_by_key(|&i| self.order.rank(f.scope()[i]));
        let mut values = vec![0; f.scope().len()];
        let root = self.build_factor(f, &positions, 0, &mut values);
        Circuit {
            root,
            scope: f.scope().iter().copied().collect(),
        }
    }

    fn build_factor(&mut self, f: &Factor, positions: &[usize], depth: usize, values: &mut [usize]) -> Edge {
        if depth == positions.len() {
            let w = f.table()[f.index(values)];
            return if w == 0.0 { Edge::ZERO } else { Edge { weight: w, node: NodeId::TRUE } };
        }
        let pos = positions[depth];
        let card = f.cards()[pos];
        let mut children = Vec::with_capacity(card);
        for x in 0..card {
            values[pos] = x;
            children.push(self.build_factor(f, positions, depth + 1, values));
        }
        self.mk(f.scope()[pos], children)
    }

    /// Pointwise product over the union of both scopes.
    pub fn multiply(&mut self, a: &Circuit, b: &Circuit) -> Circuit {
        let root = self.mul_edges(a.root, b.root);
        Circuit {
            root,
            scope: a.scope.union(&b.scope).copied().collect(),
        }
    }

    fn mul_edges(&mut self, a: Edge, b: Edge) -> Edge {
        if a.weight == 0.0 || b.weight == 0.0 {
            return Edge::ZERO;
        }
        let e = self.mul_nodes(a.node, b.node);
        let weight = a.weight * b.weight * e.weight;
        if weight == 0.0 {
            Edge::ZERO
        } else {
            Edge { weight, node: e.node }
        }
    }

    fn mul_nodes(&mut self, a: NodeId, b: NodeId) -> Edge {
        if a == NodeId::TRUE {
            return Edge::unit(b);
        }
        if b == NodeId::TRUE {
            return Edge::unit(a);
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(&e) = self.apply_cache.get(&key) {
            return e;
        }
        let (ra, rb) = (self.rank_of(a), self.rank_of(b));
        let top = self.order.var_at(ra.min(rb));
        let card = self.cards[top];
        let mut children = Vec::with_capacity(card);
        for x in 0..card {
            let ea = if ra <= rb { self.nodes[a.index()].children[x] } else { Edge::unit(a) };
            let eb = if rb <= ra { self.nodes[b.index()].children[x] } else { Edge::unit(b) };
            children.push(self.mul_edges(ea, eb));
        }
        let e = self.mk(top, children);
        self.apply_cache.insert(key, e);
        e
    }

    /// Restricts `var` to `value` and removes it from the scope.
    pub fn condition(&mut self, c: &Circuit, var: VarId, value: usize) -> Circuit {
        if !c.in_scope(var) {
            return c.clone();
        }
        let mut memo = HashMap::new();
        let target = self.order.rank(var);
        let e = self.cond_node(c.root.node, target, value, &mut memo);
        let weight = c.root.weight * e.weight;
        let root = if weight == 0.0 { Edge::ZERO } else { Edge { weight, node: e.node } };
        let mut scope = c.scope.clone();
        scope.remove(&var);
        Circuit { root, scope }
    }

    fn cond_node(
        &mut self,
        n: NodeId,
        target: usize,
        value: usize,
        memo: &mut HashMap<NodeId, Edge>,
    ) -> Edge {
        let r = self.rank_of(n);
        if r > target {
            return Edge::unit(n);
        }
        if r == target {
            return self.nodes[n.index()].children[value];
        }
        if let Some(&e) = memo.get(&n) {
            return e;
        }
        let node_var = self.nodes[n.index()].var;
        let card = self.cards[node_var];
        let mut children = Vec::with_capacity(card);
        for x in 0..card {
            let child = self.nodes[n.index()].children[x];
            children.push(if child.weight == 0.0 {
                Edge::ZERO
            } else {
                let e = self.cond_node(child.node, target, value, memo);
                Edge {
                    weight: child.weight * e.weight,
                    node: e.node,
                }
            });
        }
        let e = self.mk(node_var, children);
        memo.insert(n, e);
        e
    }

    /// Decision nodes reachable from the root, parents before children.
    pub fn reachable(&self, c: &Circuit) -> Vec<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![c.root.node];
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            if n == NodeId::TRUE || !seen.insert(n) {
                continue;
            }
            out.push(n);
            for e in self.nodes[n.index()].children.iter() {
                if e.weight != 0.0 {
                    stack.push(e.node);
                }
            }
        }
        out.sort_by_key(|&n| (self.rank_of(n), n));
        out
    }

    pub fn size(&self, c: &Circuit) -> usize {
        if c.root.weight == 0.0 {
            0
        } else {
            self.reachable(c).len()
        }
    }

    fn scope_ranks(&self, c: &Circuit, mask: &Mask) -> ScopeRanks {
        let mut entries: Vec<(usize, VarId)> = c.scope.iter().map(|&v| (self.order.rank(v), v)).collect();
        entries.sort_unstable();
        ScopeRanks {
            ranks: entries.iter().map(|e| e.0).collect(),
            vars: entries.iter().map(|e| e.1).collect(),
            counts: entries
                .iter()
                .map(|&(_, v)| mask.count(v, self.cards[v]) as f64)
                .collect(),
        }
    }

    /// Bottom-up values of `nodes` (parents-first order) under `mask`.
    fn node_values(&self, nodes: &[NodeId], index: &HashMap<NodeId, usize>, sr: &ScopeRanks, mask: &Mask) -> Vec<f64> {
        let mut values = vec![0.0; nodes.len()];
        for (i, &n) in nodes.iter().enumerate().rev() {
            let node = &self.nodes[n.index()];
            let lo = self.order.rank(node.var) + 1;
            let mut total = 0.0;
            for (x, e) in node.children.iter().enumerate() {
                if e.weight == 0.0 || !mask.allows(node.var, x) {
                    continue;
                }
                let child = if e.node == NodeId::TRUE { 1.0 } else { values[index[&e.node]] };
                total += e.weight * sr.skip(lo, self.rank_of(e.node)) * child;
            }
            values[i] = total;
        }
        values
    }

    fn index_of(nodes: &[NodeId]) -> HashMap<NodeId, usize> {
        nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect()
    }

    /// Weighted model count: the sum of the circuit's value over every
    /// assignment of its scope consistent with `mask`.
    pub fn wmc(&self, c: &Circuit, mask: &Mask) -> f64 {
        if c.root.weight == 0.0 {
            return 0.0;
        }
        let sr = self.scope_ranks(c, mask);
        let nodes = self.reachable(c);
        let index = Self::index_of(&nodes);
        let values = self.node_values(&nodes, &index, &sr, mask);
        let root_value = if c.root.node == NodeId::TRUE { 1.0 } else { values[0] };
        c.root.weight * sr.skip(0, self.rank_of(c.root.node)) * root_value
    }

    /// Natural logarithm of [`Store::wmc`], evaluated in log space.
    pub fn ln_wmc(&self, c: &Circuit, mask: &Mask) -> f64 {
        if c.root.weight == 0.0 {
            return f64::NEG_INFINITY;
        }
        let sr = self.scope_ranks(c, mask);
        let ln_skip = |lo: usize, hi: usize| -> f64 { sr.counts[sr.gap(lo, hi)].iter().map(|c| c.ln()).sum() };
        let nodes = self.reachable(c);
        let index = Self::index_of(&nodes);
        let mut values = vec![f64::NEG_INFINITY; nodes.len()];
        for (i, &n) in nodes.iter().enumerate().rev() {
            let node = &self.nodes[n.index()];
            let lo = self.order.rank(node.var) + 1;
            let terms: Vec<f64> = node
                .children
                .iter()
                .enumerate()
                .filter(|(x, e)| e.weight != 0.0 && mask.allows(node.var, *x))
                .map(|(_, e)| {
                    let child = if e.node == NodeId::TRUE { 0.0 } else { values[index[&e.node]] };
                    e.weight.ln() + ln_skip(lo, self.rank_of(e.node)) + child
                })
                .collect();
            values[i] = log_sum_exp(&terms);
        }
        let root_value = if c.root.node == NodeId::TRUE { 0.0 } else { values[0] };
        c.root.weight.ln() + ln_skip(0, self.rank_of(c.root.node)) + root_value
    }

    /// Marginal distribution of `var` under `mask`, which must sum over `var`.
    pub fn marginal(&self, c: &Circuit, var: VarId, mask: &Mask) -> Result<Vec<f64>> {
        if mask.get(var).is_some() {
            return Err(Error::Domain(format!("mask fixes the marginal variable {var}")));
        }
        Ok(self.all_marginals(c, mask)?.probs.swap_remove(var))
    }

    /// Marginals of every variable from one upward and one downward pass.
    ///
    /// Variables outside the scope get the uniform distribution over their
    /// unmasked values; masked variables get a point mass.
    pub fn all_marginals(&self, c: &Circuit, mask: &Mask) -> Result<Marginals> {
        let n = self.num_vars();
        let sr = self.scope_ranks(c, mask);
        let nodes = self.reachable(c);
        let index = Self::index_of(&nodes);
        let values = self.node_values(&nodes, &index, &sr, mask);

        let mut tested: Vec<Vec<f64>> = self.cards.iter().map(|&k| vec![0.0; k]).collect();
        let mut skipped = vec![0.0; sr.ranks.len()];
        let mut flow = vec![0.0; nodes.len()];

        let wmc = if c.root.weight == 0.0 {
            0.0
        } else {
            let root_rank = self.rank_of(c.root.node);
            let top = c.root.weight * sr.skip(0, root_rank);
            let root_value = if c.root.node == NodeId::TRUE { 1.0 } else { values[0] };
            let z = top * root_value;
            for i in sr.gap(0, root_rank) {
                skipped[i] += z;
            }
            if c.root.node != NodeId::TRUE {
                flow[0] = top;
            }
            z
        };
        if !(wmc > 0.0) {
            return Err(Error::Inconsistent("circuit has zero weighted model count".into()));
        }

        for (i, &nid) in nodes.iter().enumerate() {
            let node = &self.nodes[nid.index()];
            let lo = self.order.rank(node.var) + 1;
            for (x, e) in node.children.iter().enumerate() {
                if e.weight == 0.0 || !mask.allows(node.var, x) {
                    continue;
                }
                let hi = self.rank_of(e.node);
                let down = flow[i] * e.weight * sr.skip(lo, hi);
                let child = if e.node == NodeId::TRUE {
                    1.0
                } else {
                    let j = index[&e.node];
                    flow[j] += down;
                    values[j]
                };
                let mass = down * child;
                tested[node.var][x] += mass;
                for k in sr.gap(lo, hi) {
                    skipped[k] += mass;
                }
            }
        }

        for (k, &v) in sr.vars.iter().enumerate() {
            let share = skipped[k] / sr.counts[k];
            for (x, t) in tested[v].iter_mut().enumerate() {
                if mask.allows(v, x) {
                    *t += share;
                }
            }
        }

        let probs = (0..n)
            .map(|v| {
                if c.in_scope(v) {
                    tested[v].iter().map(|m| m / wmc).collect()
                } else {
                    let k = self.cards[v];
                    let allowed = mask.count(v, k) as f64;
                    (0..k)
                        .map(|x| if mask.allows(v, x) { 1.0 / allowed } else { 0.0 })
                        .collect()
                }
            })
            .collect();
        Ok(Marginals { wmc, probs })
    }

    /// Graphviz rendering: one node per variable test, edges labelled `value:weight`.
    pub fn to_dot(&self, c: &Circuit) -> String {
        let mut out = String::from("digraph circuit {\n  root [shape=point];\n  t [label=\"1\", shape=box];\n");
        let name = |n: NodeId| {
            if n == NodeId::TRUE {
                "t".to_string()
            } else {
                format!("n{}", n.0)
            }
        };
        if c.root.weight != 0.0 {
            let _ = writeln!(out, "  root -> {} [label=\"{}\"];", name(c.root.node), c.root.weight);
            for n in self.reachable(c) {
                let node = &self.nodes[n.index()];
                let _ = writeln!(out, "  {} [label=\"x{}\"];", name(n), node.var);
                for (x, e) in node.children.iter().enumerate() {
                    if e.weight != 0.0 {
                        let _ = writeln!(out, "  {} -> {} [label=\"{}:{}\"];", name(n), name(e.node), x, e.weight);
                    }
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}
