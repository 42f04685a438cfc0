//! Factor graphs over discrete variables, UAI ingestion and the augmented
//! graph construction used to reason about online collapsed sampling.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type VarId = usize;

/// Distance reported between variables that are not connected in the primal graph.
pub const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub cardinality: usize,
}

/// A nonnegative table over an ordered scope, stored row-major with the last
/// scope variable changing fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    /// `cards[i]` is the cardinality of `scope[i]`.
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if scope.len() != cards.len() {
            return Err(Error::Domain("scope and cardinality lists differ in length".into()));
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(Error::Domain(format!("variable {v} repeated in factor scope")));
            }
        }
        let expected: usize = cards.iter().product();
        if table.len() != expected {
            return Err(Error::Domain(format!(
                "table has {} entries, scope requires {expected}",
                table.len()
            )));
        }
        if let Some(bad) = table.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("factor entry {bad} is not a finite nonnegative real")));
        }
        Ok(Factor { scope, cards, table })
    }

    /// A factor with empty scope holding a single weight.
    pub fn constant(weight: f64) -> Result<Self> {
        Factor::new(Vec::new(), Vec::new(), vec![weight])
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Row index of the given per-scope values.
    pub fn index(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.scope.len());
        values
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    /// Per-scope values of a row index.
    pub fn row(&self, mut index: usize) -> Vec<usize> {
        let mut values = vec![0; self.scope.len()];
        for i in (0..self.scope.len()).rev() {
            values[i] = index % self.cards[i];
            index /= self.cards[i];
        }
        values
    }

    /// Entry selected by a full assignment indexed by variable id.
    pub fn value_at(&self, full: &[usize]) -> f64 {
        let idx = self
            .scope
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + full[v]);
        self.table[idx]
    }

    /// Drops every row inconsistent with `assignment` and removes the assigned
    /// variables from the scope.
    pub fn restrict(&self, assignment: &Assignment) -> Factor {
        if !self.scope.iter().any(|v| assignment.contains(*v)) {
            return self.clone();
        }
        let mut scope = Vec::new();
        let mut cards = Vec::new();
        for (&v, &c) in self.scope.iter().zip(&self.cards) {
            if !assignment.contains(v) {
                scope.push(v);
                cards.push(c);
            }
        }
        let size: usize = cards.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut values: Vec<usize> = self
            .scope
            .iter()
            .map(|v| assignment.get(*v).unwrap_or(0))
            .collect();
        let free: Vec<usize> = (0..self.scope.len())
            .filter(|&i| !assignment.contains(self.scope[i]))
            .collect();
        for _ in 0..size {
            table.push(self.table[self.index(&values)]);
            // odometer over the free positions, last one fastest
            for &i in free.iter().rev() {
                values[i] += 1;
                if values[i] < self.cards[i] {
                    break;
                }
                values[i] = 0;
            }
        }
        Factor { scope, cards, table }
    }
}

/// Partial map from variable id to value index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Assignment(BTreeMap<VarId, usize>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, var: VarId, value: usize) -> Option<usize> {
        self.0.insert(var, value)
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(&v, &x)| (v, x))
    }

    pub fn extend(&mut self, other: &Assignment) {
        for (v, x) in other.iter() {
            self.set(v, x);
        }
    }
}

impl FromIterator<(VarId, usize)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (VarId, usize)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// A marginal query on one variable, optionally under evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub var: VarId,
    pub evidence: Assignment,
}

impl QuerySpec {
    pub fn new(graph: &FactorGraph, var: VarId, evidence: Assignment) -> Result<Self> {
        if var >= graph.num_vars() {
            return Err(Error::Domain(format!("query variable {var} does not exist")));
        }
        if evidence.contains(var) {
            return Err(Error::Domain(format!("query variable {var} is observed")));
        }
        graph.check_assignment(&evidence)?;
        Ok(QuerySpec { var, evidence })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    cards: Vec<usize>,
    factors: Vec<Factor>,
    adjacency: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn new(cards: Vec<usize>, factors: Vec<Factor>) -> Result<Self> {
        if let Some(v) = cards.iter().position(|&c| c < 2) {
            return Err(Error::Domain(format!("variable {v} has cardinality below 2")));
        }
        let mut adjacency = vec![Vec::new(); cards.len()];
        for (fid, f) in factors.iter().enumerate() {
            for (&v, &c) in f.scope.iter().zip(&f.cards) {
                if v >= cards.len() {
                    return Err(Error::Domain(format!("factor {fid} mentions unknown variable {v}")));
                }
                if cards[v] != c {
                    return Err(Error::Domain(format!(
                        "factor {fid} uses cardinality {c} for variable {v} of cardinality {}",
                        cards[v]
                    )));
                }
                adjacency[v].push(fid);
            }
        }
        Ok(FactorGraph {
            cards,
            factors,
            adjacency,
        })
    }

    /// Builds a factor from scope and table, looking cardinalities up in `cards`.
    pub fn factor(cards: &[usize], scope: Vec<VarId>, table: Vec<f64>) -> Result<Factor> {
        let fc = scope
            .iter()
            .map(|&v| {
                cards
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::Domain(format!("unknown variable {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Factor::new(scope, fc, table)
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, var: VarId) -> usize {
        self.cards[var]
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        self.cards.iter().enumerate().map(|(id, &cardinality)| Variable { id, cardinality })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Ids of the factors mentioning `var`, ascending.
    pub fn adjacency(&self, var: VarId) -> &[usize] {
        &self.adjacency[var]
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<()> {
        for (v, x) in a.iter() {
            if v >= self.num_vars() {
                return Err(Error::Domain(format!("assigned variable {v} does not exist")));
            }
            if x >= self.cards[v] {
                return Err(Error::Domain(format!(
                    "value {x} out of range for variable {v} of cardinality {}",
                    self.cards[v]
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized weight of a full assignment indexed by variable id.
    pub fn weight(&self, full: &[usize]) -> f64 {
        self.factors.iter().map(|f| f.value_at(full)).product()
    }

    /// Variables sharing at least one factor with `var`, ascending, excluding `var`.
    pub fn neighbors(&self, var: VarId) -> Vec<VarId> {
        let mut out: Vec<VarId> = self.adjacency[var]
            .iter()
            .flat_map(|&f| self.factors[f].scope.iter().copied())
            .filter(|&u| u != var)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Breadth-first hop counts from `source` in the primal graph.
    pub fn distances_from(&self, source: VarId) -> Vec<usize> {
        let mut dist = vec![UNREACHABLE; self.num_vars()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for w in self.neighbors(u) {
                if dist[w] == UNREACHABLE {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Shortest path length between two variables, [`UNREACHABLE`] when disconnected.
    pub fn graph_distance(&self, a: VarId, b: VarId) -> usize {
        self.distances_from(a)[b]
    }

    /// All-pairs primal-graph distances.
    pub fn distance_table(&self) -> DistanceTable {
        let n = self.num_vars();
        let mut dist = Vec::with_capacity(n * n);
        for v in 0..n {
            dist.extend(self.distances_from(v));
        }
        DistanceTable { n, dist }
    }

    /// Adds, for every variable, a copy `X*` and a selector `S` with the
    /// factors `P(S)` uniform and `P(X* | S, X)`.
    ///
    /// Copies get ids `n..2n` and selectors `2n..3n`. The ternary factor has
    /// scope `(S_i, X_i, X*_i)`.
    pub fn augment(&self) -> FactorGraph {
        let n = self.num_vars();
        let mut cards = self.cards.clone();
        cards.extend_from_slice(&self.cards);
        cards.extend(std::iter::repeat_n(2, n));
        let mut factors = self.factors.clone();
        for i in 0..n {
            let s = 2 * n + i;
            factors.push(Factor {
                scope: vec![s],
                cards: vec![2],
                table: vec![0.5, 0.5],
            });
        }
        for i in 0..n {
            let k = self.cards[i];
            let mut table = Vec::with_capacity(2 * k * k);
            for sel in 0..2 {
                for x in 0..k {
                    for copy in 0..k {
                        table.push(match (sel, x == copy) {
                            (0, _) => 0.5,
                            (_, true) => 1.0,
                            _ => 0.0,
                        });
                    }
                }
            }
            factors.push(Factor {
                scope: vec![2 * n + i, i, n + i],
                cards: vec![2, k, k],
                table,
            });
        }
        FactorGraph::new(cards, factors).expect("augmented graph is well formed")
    }

    /// Writes the model in UAI `MARKOV` format.
    pub fn to_uai(&self) -> String {
        let mut out = String::new();
        out.push_str("MARKOV\n");
        let _ = writeln!(out, "{}", self.num_vars());
        let _ = writeln!(out, "{}", join(self.cards.iter()));
        let _ = writeln!(out, "{}", self.factors.len());
        for f in &self.factors {
            if f.scope.is_empty() {
                out.push_str("0\n");
            } else {
                let _ = writeln!(out, "{} {}", f.scope.len(), join(f.scope.iter()));
            }
        }
        for f in &self.factors {
            let _ = writeln!(out, "\n{}", f.table.len());
            let _ = writeln!(out, "{}", join(f.table.iter()));
        }
        out
    }
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Dense all-pairs primal-graph distances.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<usize>,
}

impl DistanceTable {
    pub fn get(&self, a: VarId, b: VarId) -> usize {
        self.dist[a * self.n + b]
    }
}

struct Tokens<'a> {
    items: Vec<(&'a str, usize)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut last_line = 1;
        for (i, line) in text.lines().enumerate() {
            last_line = i + 1;
            if line.trim_start().starts_with('c') {
                continue;
            }
            items.extend(line.split_whitespace().map(|t| (t, i + 1)));
        }
        Tokens {
            items,
            pos: 0,
            last_line,
        }
    }

    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        let tok = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::parse(self.last_line, format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn usize(&mut self, what: &str) -> Result<(usize, usize)> {
        let (tok, line) = self.next(what)?;
        tok.parse()
            .map(|x| (x, line))
            .map_err(|_| Error::parse(line, format!("expected {what}, found '{tok}'")))
    }

    fn f64(&mut self, what: &str) -> Result<(f64, usize)> {
        let (tok, line) = self.next(what)?;
        tok.parse()
            .map(|x| (x, line))
            .map_err(|_| Error::parse(line, format!("expected {what}, found '{tok}'")))
    }

    fn finish(&self) -> Result<()> {
        match self.items.get(self.pos) {
            Some((tok, line)) => Err(Error::parse(*line, format!("trailing token '{tok}'"))),
            None => Ok(()),
        }
    }
}

/// Parses a UAI `MARKOV` model.
pub fn parse_uai(text: &str) -> Result<FactorGraph> {
    let mut toks = Tokens::new(text);
    let (kind, line) = toks.next("model type")?;
    if !kind.eq_ignore_ascii_case("MARKOV") {
        return Err(Error::parse(line, format!("unsupported model type '{kind}', expected MARKOV")));
    }
    let (n, _) = toks.usize("variable count")?;
    let mut cards = Vec::with_capacity(n);
    for i in 0..n {
        let (c, line) = toks.usize("cardinality")?;
        if c < 2 {
            return Err(Error::parse(line, format!("variable {i} has cardinality {c}, need at least 2")));
        }
        cards.push(c);
    }
    let (m, _) = toks.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for _ in 0..m {
        let (k, _) = toks.usize("scope size")?;
        let mut scope = Vec::with_capacity(k);
        for _ in 0..k {
            let (v, line) = toks.usize("variable index")?;
            if v >= n {
                return Err(Error::parse(line, format!("variable index {v} out of range (n = {n})")));
            }
            if scope.contains(&v) {
                return Err(Error::parse(line, format!("variable {v} repeated in scope")));
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(m);
    for (fid, scope) in scopes.into_iter().enumerate() {
        let (len, line) = toks.usize("table size")?;
        let expected: usize = scope.iter().map(|&v| cards[v]).product();
        if len != expected {
            return Err(Error::parse(
                line,
                format!("factor {fid} declares {len} entries, its scope requires {expected}"),
            ));
        }
        let mut table = Vec::with_capacity(len);
        for _ in 0..len {
            let (w, line) = toks.f64("table entry")?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::parse(line, format!("negative or non-finite entry {w}")));
            }
            table.push(w);
        }
        let fc = scope.iter().map(|&v| cards[v]).collect();
        factors.push(Factor { scope, cards: fc, table });
    }
    toks.finish()?;
    FactorGraph::new(cards, factors).map_err(|e| Error::parse(0, e.to_string()))
}

/// Parses `k var val var val ...` evidence against a model.
pub fn parse_evidence(text: &str, graph: &FactorGraph) -> Result<Assignment> {
    let mut toks = Tokens::new(text);
    let (k, _) = toks.usize("evidence count")?;
    let mut a = Assignment::new();
    for _ in 0..k {
        let (v, line) = toks.usize("variable index")?;
        let (x, vline) = toks.usize("value index")?;
        if v >= graph.num_vars() {
            return Err(Error::parse(line, format!("variable index {v} out of range")));
        }
        if x >= graph.cardinality(v) {
            return Err(Error::parse(
                vline,
                format!("value {x} out of range for variable {v} of cardinality {}", graph.cardinality(v)),
            ));
        }
        if a.set(v, x).is_some() {
            return Err(Error::parse(line, format!("variable {v} observed twice")));
        }
    }
    toks.finish()?;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CHAIN3: &str = "MARKOV\n3\n2 2 2\n2\n2 0 1\n2 1 2\n\n4\n2 2 2 5\n\n4\n3 8 8 8\n";

    fn chain(n: usize) -> FactorGraph {
        let cards = vec![2; n];
        let factors = (0..n - 1)
            .map(|i| FactorGraph::factor(&cards, vec![i, i + 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .collect();
        FactorGraph::new(cards, factors).unwrap()
    }

    #[test]
    fn parses_chain3() {
        let g = parse_uai(CHAIN3).unwrap();
        assert_eq!(g.num_vars(), 3);
        assert_eq!(g.factors().len(), 2);
        assert_eq!(g.factors()[0].table(), &[2.0, 2.0, 2.0, 5.0]);
        assert_eq!(g.factors()[1].scope(), &[1, 2]);
        assert_eq!(g.adjacency(1), &[0, 1]);
        assert_eq!(g.weight(&[1, 1, 0]), 40.0);
    }

    #[test]
    fn parses_empty_model_and_comments() {
        let g = parse_uai("c a comment\nMARKOV\n1\n2\n0\n").unwrap();
        assert_eq!(g.num_vars(), 1);
        assert!(g.factors().is_empty());
    }

    #[test]
    fn rejects_bad_models() {
        let short = "MARKOV\n2\n2 2\n1\n2 0 1\n3\n1 2 3\n";
        match parse_uai(short) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_uai("BAYES\n1\n2\n0\n").is_err());
        assert!(parse_uai("MARKOV\n2\n2 2\n1\n2 0 2\n4\n1 1 1 1\n").is_err());
        assert!(parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 -1\n").is_err());
        assert!(parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 1 7\n").is_err());
    }

    #[test]
    fn uai_round_trip() {
        let g = parse_uai(CHAIN3).unwrap();
        assert_eq!(parse_uai(&g.to_uai()).unwrap(), g);
    }

    #[test]
    fn evidence_parsing() {
        let g = parse_uai(CHAIN3).unwrap();
        let a = parse_evidence("1 0 1", &g).unwrap();
        assert_eq!(a.get(0), Some(1));
        assert_eq!(a.len(), 1);
        assert!(parse_evidence("0", &g).unwrap().is_empty());
        assert!(parse_evidence("1 0 5", &g).is_err());
        assert!(parse_evidence("2 0 1 0 0", &g).is_err());
        assert!(parse_evidence("1 7 0", &g).is_err());
    }

    #[test]
    fn distances_on_chain() {
        let g = chain(3);
        assert_eq!(g.graph_distance(0, 2), 2);
        assert_eq!(g.graph_distance(0, 0), 0);
        let cards = vec![2, 2];
        let g = FactorGraph::new(cards, vec![]).unwrap();
        assert_eq!(g.graph_distance(0, 1), UNREACHABLE);
        assert!(UNREACHABLE > g.num_vars());
    }

    #[test]
    fn restrict_drops_inconsistent_rows() {
        let g = parse_uai(CHAIN3).unwrap();
        let f = &g.factors()[1];
        let a: Assignment = [(1, 1)].into_iter().collect();
        let r = f.restrict(&a);
        assert_eq!(r.scope(), &[2]);
        assert_eq!(r.table(), &[8.0, 8.0]);
        let a: Assignment = [(1, 0), (2, 0)].into_iter().collect();
        let r = f.restrict(&a);
        assert!(r.scope().is_empty());
        assert_eq!(r.table(), &[3.0]);
    }

    #[test]
    fn augment_shape() {
        let g = chain(3);
        let a = g.augment();
        assert_eq!(a.num_vars(), 9);
        assert_eq!(a.factors().len(), 2 + 6);
        let ternary = &a.factors()[2 + 3];
        assert_eq!(ternary.scope(), &[6, 0, 3]);
        // row (S=1, X=0, X*=1)
        assert_eq!(ternary.table()[ternary.index(&[1, 0, 1])], 0.0);
        assert_eq!(ternary.table()[ternary.index(&[1, 1, 1])], 1.0);
        assert_eq!(ternary.table()[ternary.index(&[0, 1, 0])], 0.5);
    }

    #[test]
    fn adjacency_matches_scopes() {
        let g = chain(5);
        for v in 0..5 {
            for (fid, f) in g.factors().iter().enumerate() {
                assert_eq!(f.scope().contains(&v), g.adjacency(v).contains(&fid));
            }
        }
    }
}
