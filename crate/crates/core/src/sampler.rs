//! Online collapsed importance sampling by collapsed compilation.
//!
//! One sample compiles the model factor by factor. Whenever the circuit grows
//! past the size threshold, the policy picks an in-circuit variable, a value
//! is drawn from the proposal and the circuit is conditioned on it. When all
//! factors are in, the circuit represents `P(X_d, x_p)`: its weighted model
//! count is `P̂(x_p)`, the importance weight is `P̂(x_p) / Q(x_p)` and the
//! query marginal in the circuit is the collapsed expectation.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Mask, Store, VarOrder};
use crate::compiler::{plan_order, CompileState, OrderMode};
use crate::determinism::{renormalize, Oracle, OracleMode};
use crate::error::{Error, Result};
use crate::model::{Assignment, FactorGraph, QuerySpec, VarId};
use crate::oracle;
use crate::policies::{Policy, PolicyKind, Selector};

/// Size threshold that never triggers conditioning.
pub const NO_THRESHOLD: usize = usize::MAX;

/// Stored nodes above which the sampler's store is wiped between samples.
const STORE_RESET_NODES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProposalKind {
    /// The variable's marginal in the partially compiled circuit.
    Sdd,
    Uniform,
    /// Posterior marginals from exact enumeration, ignoring earlier samples.
    TrueMarginal,
}

impl ProposalKind {
    pub fn name(self) -> &'static str {
        match self {
            ProposalKind::Sdd => "sdd",
            ProposalKind::Uniform => "uniform",
            ProposalKind::TrueMarginal => "true",
        }
    }
}

/// How the sampled variables are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Condition whenever the circuit exceeds the size threshold.
    Online(Policy),
    /// Condition exactly these variables, in this order, ignoring the threshold.
    /// Each is conditioned as soon as it appears in the circuit; any left
    /// over at the end are drawn from their factor-restricted marginals.
    Offline(Vec<VarId>),
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub size_threshold: usize,
    pub selection: Selection,
    pub order_mode: OrderMode,
    /// Decision-diagram variable order; natural id order when `None`.
    pub var_order: Option<Vec<VarId>>,
    pub proposal: ProposalKind,
    pub oracle: OracleMode,
    /// Node budget for compiling the logical base before degrading to local checks.
    pub oracle_node_budget: Option<usize>,
    pub seed: u64,
    pub max_samples: usize,
    pub time_limit: Option<Duration>,
}

impl SamplerConfig {
    /// Online sampling with the policy's default compilation order.
    pub fn new(kind: PolicyKind) -> Self {
        SamplerConfig {
            size_threshold: NO_THRESHOLD,
            selection: Selection::Online(Policy::new(kind)),
            order_mode: kind.default_order(),
            var_order: None,
            proposal: ProposalKind::Sdd,
            oracle: OracleMode::On,
            oracle_node_budget: Some(1 << 20),
            seed: 0,
            max_samples: 1000,
            time_limit: None,
        }
    }

    pub fn offline(vars: Vec<VarId>) -> Self {
        SamplerConfig {
            selection: Selection::Offline(vars),
            order_mode: OrderMode::Bfs,
            ..SamplerConfig::new(PolicyKind::RbVar)
        }
    }

    pub fn threshold(mut self, nodes: usize) -> Self {
        self.size_threshold = nodes;
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.max_samples = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn proposal(mut self, kind: ProposalKind) -> Self {
        self.proposal = kind;
        self
    }

    pub fn oracle(mut self, mode: OracleMode) -> Self {
        self.oracle = mode;
        self
    }

    pub fn order(mut self, mode: OrderMode) -> Self {
        self.order_mode = mode;
        self
    }

    fn validate(&self, graph: &FactorGraph, query: &QuerySpec) -> Result<()> {
        if self.size_threshold == 0 {
            return Err(Error::Usage("size threshold must be at least 1".into()));
        }
        if let Selection::Offline(vars) = &self.selection {
            for (i, &v) in vars.iter().enumerate() {
                if v >= graph.num_vars() || v == query.var || vars[..i].contains(&v) {
                    return Err(Error::Usage(format!(
                        "offline variable {v} must be a distinct non-query model variable"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One conditioning decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub var: VarId,
    pub value: usize,
    /// Proposal probability of `value` as used in `q`.
    pub prob: f64,
    /// Forced by the determinism oracle (probability one).
    pub entailed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: u64,
    /// Conditioned variables in the order they were conditioned.
    pub steps: Vec<Step>,
    /// Proposal probability `Q(x_p)`.
    pub q: f64,
    /// Weighted model count of the final circuit, `P̂(x_p)`.
    pub wmc: f64,
    /// `wmc / q`, zero for rejected samples.
    pub weight: f64,
    /// Query marginal given `x_p`.
    pub collapsed: Vec<f64>,
    pub final_size: usize,
    pub peak_size: usize,
    pub rejected: bool,
}

impl Sample {
    pub fn x_p(&self) -> Assignment {
        self.steps.iter().map(|s| (s.var, s.value)).collect()
    }

    /// Variables sampled from a proposal, excluding entailed ones.
    pub fn num_sampled(&self) -> usize {
        self.steps.iter().filter(|s| !s.entailed).count()
    }
}

/// Self-normalized accumulator of collapsed expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    sums: Vec<f64>,
    weight_sum: f64,
    weight_sq_sum: f64,
    count: usize,
    rejected: usize,
}

impl Estimator {
    pub fn new(card: usize) -> Self {
        Estimator {
            sums: vec![0.0; card],
            weight_sum: 0.0,
            weight_sq_sum: 0.0,
            count: 0,
            rejected: 0,
        }
    }

    pub fn add(&mut self, s: &Sample) {
        self.count += 1;
        if s.rejected {
            self.rejected += 1;
            return;
        }
        for (acc, p) in self.sums.iter_mut().zip(&s.collapsed) {
            *acc += s.weight * p;
        }
        self.weight_sum += s.weight;
        self.weight_sq_sum += s.weight * s.weight;
    }

    pub fn merge(&mut self, other: &Estimator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.weight_sum += other.weight_sum;
        self.weight_sq_sum += other.weight_sq_sum;
        self.count += other.count;
        self.rejected += other.rejected;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Unnormalized per-value sums `sum_m w[m] E[query = v | x_p[m]]`.
    pub fn weighted_sums(&self) -> &[f64] {
        &self.sums
    }

    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub fn ess(&self) -> f64 {
        if self.weight_sq_sum > 0.0 {
            self.weight_sum * self.weight_sum / self.weight_sq_sum
        } else {
            0.0
        }
    }

    pub fn estimate(&self) -> Result<Vec<f64>> {
        if !(self.weight_sum > 0.0) {
            return Err(Error::NoEstimate(self.count));
        }
        Ok(self.sums.iter().map(|s| s / self.weight_sum).collect())
    }
}

/// Self-normalized estimate of the query marginal from `samples`.
pub fn estimate(samples: &[Sample], card: usize) -> Result<Vec<f64>> {
    let mut e = Estimator::new(card);
    samples.iter().for_each(|s| e.add(s));
    e.estimate()
}

/// The per-sample random stream for `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A sampler chain: owns one node store and draws samples for one query.
pub struct Sampler<'g> {
    graph: &'g FactorGraph,
    query: QuerySpec,
    config: SamplerConfig,
    store: Store,
    oracle: Oracle,
    selector: Option<Selector>,
    plan: Vec<usize>,
    true_marginals: Option<Vec<Vec<f64>>>,
}

enum Chooser<'a, R> {
    Random(&'a mut R),
    Replay(std::slice::Iter<'a, Step>),
}

impl<'g> Sampler<'g> {
    pub fn new(graph: &'g FactorGraph, query: QuerySpec, config: SamplerConfig) -> Result<Self> {
        let order = var_order(graph, &config)?;
        let oracle = Oracle::build(graph, config.oracle, &order, config.oracle_node_budget)?;
        Self::with_oracle(graph, query, config, oracle)
    }

    /// Uses an already built oracle, so chains can share one logical base.
    pub fn with_oracle(graph: &'g FactorGraph, query: QuerySpec, config: SamplerConfig, oracle: Oracle) -> Result<Self> {
        config.validate(graph, &query)?;
        let order = var_order(graph, &config)?;
        if !oracle.satisfiable(graph, &query.evidence) {
            return Err(Error::Inconsistent("evidence contradicts the model's zero entries".into()));
        }
        let true_marginals = match config.proposal {
            ProposalKind::TrueMarginal => match oracle::exact(graph, &query.evidence) {
                Ok(r) => Some(r.marginals),
                Err(Error::TooLarge { states, cap }) => {
                    return Err(Error::Unsupported(format!(
                        "true-marginal proposal needs enumeration of {states} states (cap {cap})"
                    )))
                }
                Err(e) => return Err(e),
            },
            _ => None,
        };
        let selector = match &config.selection {
            Selection::Online(p) => Some(Selector::new(*p, graph)),
            Selection::Offline(_) => None,
        };
        Ok(Sampler {
            graph,
            plan: plan_order(graph, &query, config.order_mode),
            store: Store::new(graph.cards().to_vec(), order)?,
            query,
            config,
            oracle,
            selector,
            true_marginals,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn query(&self) -> &QuerySpec {
        &self.query
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    /// Draws sample `index` from its own `(seed, index)` stream.
    pub fn draw(&mut self, index: u64) -> Result<Sample> {
        let mut rng = sample_rng(self.config.seed, index);
        self.draw_with(index, &mut rng)
    }

    pub fn draw_with<R: Rng>(&mut self, index: u64, rng: &mut R) -> Result<Sample> {
        self.run_sample(index, Chooser::Random(rng))
    }

    /// Re-runs a sample forcing its recorded values. The policy must pick the
    /// recorded variables in the recorded order; otherwise this fails.
    pub fn replay(&mut self, sample: &Sample) -> Result<Sample> {
        let forced: Vec<Step> = sample.steps.iter().filter(|s| !s.entailed).copied().collect();
        self.run_sample::<ChaCha8Rng>(sample.index, Chooser::Replay(forced.iter()))
    }

    fn run_sample<R: Rng>(&mut self, index: u64, mut chooser: Chooser<'_, R>) -> Result<Sample> {
        self.store.clear_apply_cache();
        if self.store.num_nodes() > STORE_RESET_NODES {
            self.store.reset();
        }
        let graph = self.graph;
        let n = graph.num_vars();
        let mut state = CompileState::new(graph, self.plan.clone(), self.query.evidence.clone(), &self.store);
        let mut steps = Vec::new();
        let mut peak = 0;
        let mut rejected = !self.propagate(&mut state, &mut steps)?;
        let mut next_offline = 0;
        let offline = match &self.config.selection {
            Selection::Offline(vars) => Some(vars.clone()),
            Selection::Online(_) => None,
        };

        'compile: while !rejected && !state.is_compiled() {
            state.step(graph, &mut self.store)?;
            match &offline {
                None => loop {
                    let size = self.store.size(state.current());
                    peak = peak.max(size);
                    if size <= self.config.size_threshold {
                        break;
                    }
                    let selector = self.selector.as_ref().expect("online selector");
                    let var = match selector.select(&state, graph, &self.query, &self.store) {
                        Ok(v) => v,
                        Err(Error::SelectionExhausted) => break,
                        Err(Error::Inconsistent(_)) => {
                            rejected = true;
                            break 'compile;
                        }
                        Err(e) => return Err(e),
                    };
                    if !self.condition(&mut state, var, &mut chooser, &mut steps)? {
                        rejected = true;
                        break 'compile;
                    }
                },
                Some(vars) => {
                    peak = peak.max(self.store.size(state.current()));
                    while next_offline < vars.len() {
                        let v = vars[next_offline];
                        if !state.assigned().contains(v) {
                            if !state.current().in_scope(v) {
                                break;
                            }
                            if !self.condition(&mut state, v, &mut chooser, &mut steps)? {
                                rejected = true;
                                break 'compile;
                            }
                        }
                        next_offline += 1;
                    }
                }
            }
        }
        if let (false, Some(vars)) = (rejected, &offline) {
            for &v in &vars[next_offline..] {
                if !state.assigned().contains(v) && !self.condition(&mut state, v, &mut chooser, &mut steps)? {
                    rejected = true;
                    break;
                }
            }
        }
        if let Chooser::Replay(mut rest) = chooser {
            if rest.next().is_some() {
                return Err(Error::Domain("replay finished with unused recorded steps".into()));
            }
        }

        let card = graph.cardinality(self.query.var);
        let fin = state.completed(graph);
        let wmc = if rejected {
            0.0
        } else {
            self.store.wmc(&fin, &Mask::sum_all(n))
        };
        let final_size = self.store.size(&fin);
        let q = state.q();
        if !(wmc > 0.0) {
            return Ok(Sample {
                index,
                steps,
                q,
                wmc: 0.0,
                weight: 0.0,
                collapsed: vec![0.0; card],
                final_size,
                peak_size: peak.max(final_size),
                rejected: true,
            });
        }
        let collapsed = self.store.marginal(&fin, self.query.var, &Mask::sum_all(n))?;
        Ok(Sample {
            index,
            steps,
            q,
            wmc,
            weight: wmc / q,
            collapsed,
            final_size,
            peak_size: peak.max(final_size),
            rejected: false,
        })
    }

    /// Draws and conditions a value of `var`. Returns `false` when the sample
    /// has to be rejected.
    fn condition<R: Rng>(
        &mut self,
        state: &mut CompileState,
        var: VarId,
        chooser: &mut Chooser<'_, R>,
        steps: &mut Vec<Step>,
    ) -> Result<bool> {
        let graph = self.graph;
        let k = graph.cardinality(var);
        let proposal = match self.config.proposal {
            ProposalKind::Sdd => {
                let m = if state.current().in_scope(var) {
                    self.store.marginal(state.current(), var, &Mask::sum_all(graph.num_vars()))
                } else {
                    self.restricted_marginal(state.assigned(), var)
                };
                match m {
                    Ok(p) => p,
                    Err(Error::Inconsistent(_)) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
            ProposalKind::Uniform => vec![1.0 / k as f64; k],
            ProposalKind::TrueMarginal => self.true_marginals.as_ref().expect("true marginals")[var].clone(),
        };
        let dist = if self.oracle.is_off() {
            proposal
        } else {
            match renormalize(&proposal, &self.oracle.allowed(graph, state.assigned(), var)) {
                Ok(p) => p,
                Err(Error::Inconsistent(_)) => return Ok(false),
                Err(e) => return Err(e),
            }
        };
        let value = match chooser {
            Chooser::Random(rng) => {
                let w = WeightedIndex::new(&dist)
                    .map_err(|e| Error::Inconsistent(format!("proposal for variable {var}: {e}")))?;
                w.sample(*rng)
            }
            Chooser::Replay(it) => match it.next() {
                Some(s) if s.var == var => s.value,
                Some(s) => {
                    return Err(Error::Domain(format!(
                        "replay diverged: policy chose {var}, sample recorded {}",
                        s.var
                    )))
                }
                None => return Err(Error::Domain("replay ran past the recorded steps".into())),
            },
        };
        let prob = dist[value];
        if prob == 0.0 {
            return Ok(false);
        }
        state.assign(&mut self.store, var, value, prob);
        steps.push(Step {
            var,
            value,
            prob,
            entailed: false,
        });
        if !self.propagate(state, steps)? {
            return Ok(false);
        }
        Ok(state.current().root().weight > 0.0)
    }

    /// Conditions every literal the oracle says is forced. Returns `false` if
    /// the current assignment is already contradictory.
    fn propagate(&mut self, state: &mut CompileState, steps: &mut Vec<Step>) -> Result<bool> {
        let forced = match self.oracle.entailed(self.graph, state.assigned(), self.query.var) {
            Ok(f) => f,
            Err(Error::Inconsistent(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        for (var, value) in forced {
            state.assign(&mut self.store, var, value, 1.0);
            steps.push(Step {
                var,
                value,
                prob: 1.0,
                entailed: true,
            });
        }
        Ok(true)
    }

    /// Marginal of `var` in the product of its factors restricted by `assigned`.
    fn restricted_marginal(&mut self, assigned: &Assignment, var: VarId) -> Result<Vec<f64>> {
        let mut c = self.store.constant(1.0)?;
        for &fid in self.graph.adjacency(var) {
            let f = self.store.from_factor(&self.graph.factors()[fid].restrict(assigned));
            c = self.store.multiply(&c, &f);
        }
        let c = c.lift([var]);
        self.store.marginal(&c, var, &Mask::sum_all(self.graph.num_vars()))
    }
}

fn var_order(graph: &FactorGraph, config: &SamplerConfig) -> Result<VarOrder> {
    match &config.var_order {
        Some(order) => VarOrder::from_permutation(order.clone()),
        None => Ok(VarOrder::natural(graph.num_vars())),
    }
}

/// Samples and estimate of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<Sample>,
    pub estimator: Estimator,
    pub elapsed: Duration,
}

impl RunOutput {
    pub fn estimate(&self) -> Result<Vec<f64>> {
        self.estimator.estimate()
    }
}

/// Draws samples `0, 1, ...` until `max_samples` or the time limit.
pub fn run(graph: &FactorGraph, query: &QuerySpec, config: &SamplerConfig) -> Result<RunOutput> {
    run_parallel(graph, query, config, 1)
}

/// Runs `workers` independent chains over interleaved sample indices. Samples
/// are accumulated in index order, so the result does not depend on the
/// number of workers (unless a time limit cuts chains at different points).
pub fn run_parallel(graph: &FactorGraph, query: &QuerySpec, config: &SamplerConfig, workers: usize) -> Result<RunOutput> {
    if config.max_samples == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    let workers = workers.max(1);
    let start = Instant::now();
    let deadline = config.time_limit.map(|t| start + t);
    let order = var_order(graph, config)?;
    let oracle = match Oracle::build(graph, config.oracle, &order, config.oracle_node_budget)? {
        Oracle::Compiled(base) => Oracle::Compiled(Arc::clone(&base)),
        o => o,
    };

    let chain = |w: usize| -> Result<Vec<Sample>> {
        let mut sampler = Sampler::with_oracle(graph, query.clone(), config.clone(), oracle.clone())?;
        let mut out = Vec::new();
        let mut index = w;
        while index < config.max_samples {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            out.push(sampler.draw(index as u64)?);
            index += workers;
        }
        Ok(out)
    };

    let mut samples = if workers == 1 {
        chain(0)?
    } else {
        let results: Vec<Result<Vec<Sample>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|w| scope.spawn(move || chain(w))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampler worker panicked"))
                .collect()
        });
        let mut all = Vec::new();
        for r in results {
            all.extend(r?);
        }
        all.sort_by_key(|s| s.index);
        all
    };
    samples.shrink_to_fit();
    let mut estimator = Estimator::new(graph.cardinality(query.var));
    samples.iter().for_each(|s| estimator.add(s));
    Ok(RunOutput {
        samples,
        estimator,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_uai;

    const CHAIN3: &str = "MARKOV\n3\n2 2 2\n2\n2 0 1\n2 1 2\n\n4\n2 2 2 5\n\n4\n3 8 8 8\n";

    fn chain3() -> (FactorGraph, QuerySpec) {
        let g = parse_uai(CHAIN3).unwrap();
        let q = QuerySpec::new(&g, 1, Assignment::new()).unwrap();
        (g, q)
    }

    #[test]
    fn infinite_threshold_is_exact() {
        let (g, q) = chain3();
        let mut s = Sampler::new(&g, q, SamplerConfig::new(PolicyKind::MinEnt)).unwrap();
        let x = s.draw(0).unwrap();
        assert!(x.steps.is_empty());
        assert_eq!(x.q, 1.0);
        assert_eq!(x.weight, 156.0);
        assert!((x.collapsed[0] - 44.0 / 156.0).abs() < 1e-12);
        assert!((x.collapsed[1] - 112.0 / 156.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_one_conditions_everything_else() {
        let cards = vec![2, 2];
        let f = FactorGraph::factor(&cards, vec![0, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = FactorGraph::new(cards, vec![f]).unwrap();
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        let cfg = SamplerConfig::new(PolicyKind::RbVar).threshold(1).samples(4000).seed(7);
        let out = run(&g, &q, &cfg).unwrap();
        assert!(out.samples.iter().all(|s| s.num_sampled() == 1 && s.steps[0].var == 1));
        // E[w * collapsed] = Z * P(x0 = v) = (3, 7)
        let n = out.samples.len() as f64;
        let sums = out.estimator.weighted_sums();
        assert!((sums[0] / n - 3.0).abs() < 0.2);
        assert!((sums[1] / n - 7.0).abs() < 0.2);
        // the circuit proposal is the exact marginal of x1, so every weight is Z
        assert!(out.samples.iter().all(|s| (s.weight - 10.0).abs() < 1e-12));
        let est = out.estimate().unwrap();
        assert!((est[1] - 0.7).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn uniform_proposal_probabilities() {
        let (g, q) = chain3();
        let cfg = SamplerConfig::new(PolicyKind::MinEnt)
            .threshold(1)
            .proposal(ProposalKind::Uniform)
            .oracle(OracleMode::Off);
        let mut s = Sampler::new(&g, q, cfg).unwrap();
        let x = s.draw(3).unwrap();
        assert!(!x.steps.is_empty());
        assert!(x.steps.iter().all(|st| st.prob == 0.5));

        let cards = vec![2, 2];
        let f = FactorGraph::factor(&cards, vec![0, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let g = FactorGraph::new(cards, vec![f]).unwrap();
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        // x1 = 1 is impossible: the oracle entails x1 = 0 before any draw
        let cfg = SamplerConfig::new(PolicyKind::MinEnt).threshold(1).proposal(ProposalKind::Uniform);
        let mut s = Sampler::new(&g, q.clone(), cfg).unwrap();
        let x = s.draw(0).unwrap();
        assert_eq!(x.steps, vec![Step { var: 1, value: 0, prob: 1.0, entailed: true }]);
        // local oracle renormalizes the uniform proposal to a point mass
        let off = Oracle::Local;
        assert_eq!(off.allowed(&g, &Assignment::new(), 1), vec![true, false]);
    }

    #[test]
    fn estimator_merge_matches_concatenation() {
        let (g, q) = chain3();
        let cfg = SamplerConfig::new(PolicyKind::FrontierDist).threshold(1).samples(40).seed(3);
        let out = run(&g, &q, &cfg).unwrap();
        let (a, b) = out.samples.split_at(17);
        let mut ea = Estimator::new(2);
        a.iter().for_each(|s| ea.add(s));
        let mut eb = Estimator::new(2);
        b.iter().for_each(|s| eb.add(s));
        ea.merge(&eb);
        let whole = out.estimator.estimate().unwrap();
        let merged = ea.estimate().unwrap();
        for (x, y) in whole.iter().zip(&merged) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(ea.count(), 40);
    }

    #[test]
    fn estimate_edge_cases() {
        let mk = |w: f64, c: Vec<f64>, rejected: bool| Sample {
            index: 0,
            steps: vec![],
            q: 1.0,
            wmc: w,
            weight: w,
            collapsed: c,
            final_size: 0,
            peak_size: 0,
            rejected,
        };
        let same = vec![mk(1.0, vec![0.3, 0.7], false), mk(9.0, vec![0.3, 0.7], false)];
        let e = estimate(&same, 2).unwrap();
        assert!((e[0] - 0.3).abs() < 1e-15);
        let none = vec![mk(0.0, vec![0.0, 0.0], true)];
        assert!(matches!(estimate(&none, 2), Err(Error::NoEstimate(1))));
    }

    #[test]
    fn workers_do_not_change_results() {
        let (g, q) = chain3();
        let cfg = SamplerConfig::new(PolicyKind::MinEnt).threshold(1).samples(30).seed(11);
        let a = run_parallel(&g, &q, &cfg, 1).unwrap();
        let b = run_parallel(&g, &q, &cfg, 3).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.estimate().unwrap(), b.estimate().unwrap());
    }

    #[test]
    fn offline_conditions_listed_variables() {
        let (g, q) = chain3();
        let cfg = SamplerConfig::offline(vec![2, 0]).samples(20);
        let out = run(&g, &q, &cfg).unwrap();
        for s in &out.samples {
            let vars: Vec<_> = s.steps.iter().map(|st| st.var).collect();
            assert_eq!(vars, vec![2, 0]);
        }
        let cfg = SamplerConfig::offline(vec![]).samples(1);
        let out = run(&g, &q, &cfg).unwrap();
        assert_eq!(out.samples[0].weight, 156.0);
        assert!(run(&g, &q, &SamplerConfig::offline(vec![1])).is_err());
    }

    #[test]
    fn replay_reproduces_samples() {
        let (g, q) = chain3();
        for kind in [PolicyKind::RbVar, PolicyKind::MinEnt, PolicyKind::FrontierDist] {
            let mut s = Sampler::new(&g, q.clone(), SamplerConfig::new(kind).threshold(1)).unwrap();
            for i in 0..10 {
                let x = s.draw(i).unwrap();
                let r = s.replay(&x).unwrap();
                assert_eq!(r.steps, x.steps);
                assert_eq!(r.q.to_bits(), x.q.to_bits());
                assert_eq!(r.wmc.to_bits(), x.wmc.to_bits());
            }
        }
    }

    #[test]
    fn true_marginal_proposal_requires_enumeration() {
        let cards = vec![2; 30];
        let g = FactorGraph::new(cards, vec![]).unwrap();
        let q = QuerySpec::new(&g, 0, Assignment::new()).unwrap();
        let cfg = SamplerConfig::new(PolicyKind::MinEnt).proposal(ProposalKind::TrueMarginal);
        assert!(matches!(Sampler::new(&g, q, cfg), Err(Error::Unsupported(_))));
    }
}
