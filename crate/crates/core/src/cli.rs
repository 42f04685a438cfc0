//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::circuit::{Mask, Store, VarOrder};
use crate::compiler::{compile_exact_with_limit, OrderMode};
use crate::determinism::OracleMode;
use crate::error::{Error, Result};
use crate::model::{parse_evidence, parse_uai, Assignment, FactorGraph, QuerySpec, VarId};
use crate::oracle::{self, hellinger, median};
use crate::policies::{Policy, PolicyKind};
use crate::sampler::{run_parallel, Estimator, ProposalKind, RunOutput, SamplerConfig, Selection, NO_THRESHOLD};

#[derive(Debug, Parser)]
#[command(name = "colcomp", version, about = "Approximate marginals by collapsed compilation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate query marginals by collapsed compilation sampling.
    Infer(InferArgs),
    /// Exact marginals of every variable by enumeration.
    Exact(ModelArgs),
    /// Hellinger distance between two MAR files, per query and median.
    Eval { reference: PathBuf, candidate: PathBuf },
    /// Exact compilation statistics, optionally dumping the diagram as DOT.
    Compile(CompileArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Write the MAR output here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Rbvar,
    Minent,
    Fd,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Rbvar => PolicyKind::RbVar,
            PolicyArg::Minent => PolicyKind::MinEnt,
            PolicyArg::Fd => PolicyKind::FrontierDist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Bfs,
    Revbfs,
}

impl From<OrderArg> for OrderMode {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Bfs => OrderMode::Bfs,
            OrderArg::Revbfs => OrderMode::RevBfs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProposalArg {
    Sdd,
    Uniform,
    True,
}

impl From<ProposalArg> for ProposalKind {
    fn from(p: ProposalArg) -> Self {
        match p {
            ProposalArg::Sdd => ProposalKind::Sdd,
            ProposalArg::Uniform => ProposalKind::Uniform,
            ProposalArg::True => ProposalKind::TrueMarginal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    On,
    Off,
    Local,
}

impl From<OracleArg> for OracleMode {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::On => OracleMode::On,
            OracleArg::Off => OracleMode::Off,
            OracleArg::Local => OracleMode::Local,
        }
    }
}

/// A node count, or `inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub usize);

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Threshold(NO_THRESHOLD));
        }
        match s.parse::<usize>() {
            Ok(0) => Err("size threshold must be at least 1".into()),
            Ok(k) => Ok(Threshold(k)),
            Err(e) => Err(format!("expected a node count or 'inf': {e}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Query variable; repeat for several. Every variable when omitted.
    #[arg(long = "query-var")]
    pub query_var: Vec<VarId>,
    #[arg(long, value_enum, default_value = "minent")]
    pub policy: PolicyArg,
    /// Factor order; the policy's default when omitted.
    #[arg(long, value_enum)]
    pub order: Option<OrderArg>,
    #[arg(long = "size-threshold", default_value = "inf")]
    pub size_threshold: Threshold,
    #[arg(long, value_enum, default_value = "sdd")]
    pub proposal: ProposalArg,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Soft wall-clock budget per run, in seconds.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub oracle: OracleArg,
    /// Independent runs with seeds `seed, seed + 1, ...`; the MAR pools them.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Exact MAR (one line per model variable) for error reporting.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Write the run report here instead of stderr.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Select the RBVAR maximizer instead of the minimizer.
    #[arg(long = "rbvar-argmax")]
    pub rbvar_argmax: bool,
    /// Decision-diagram variable order as a comma-separated permutation.
    #[arg(long = "var-order", value_delimiter = ',')]
    pub var_order: Option<Vec<VarId>>,
    /// Condition exactly these variables in this order instead of using the policy.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub offline: Option<Vec<VarId>>,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Variable the factor order is planned around.
    #[arg(long = "query-var", default_value_t = 0)]
    pub query_var: VarId,
    #[arg(long, value_enum, default_value = "bfs")]
    pub order: OrderArg,
    #[arg(long = "var-order", value_delimiter = ',')]
    pub var_order: Option<Vec<VarId>>,
    #[arg(long = "node-limit")]
    pub node_limit: Option<usize>,
    /// Write the compiled diagram in DOT format.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

/// Text written by a successful command.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load(model: &Path, evidence: Option<&Path>) -> Result<(FactorGraph, Assignment)> {
    let graph = parse_uai(&read(model)?)?;
    let ev = match evidence {
        Some(p) => parse_evidence(&read(p)?, &graph)?,
        None => Assignment::new(),
    };
    Ok((graph, ev))
}

/// `MAR` followed by one `card p_0 ... p_{k-1}` line per query.
pub fn format_mar(marginals: &[Vec<f64>]) -> String {
    let mut s = String::from("MAR\n");
    for m in marginals {
        write!(s, "{}", m.len()).unwrap();
        for p in m {
            write!(s, " {p}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_mar(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "MAR")) => {}
        Some((i, other)) => return Err(Error::parse(i, format!("expected 'MAR', found '{other}'"))),
        None => return Err(Error::parse(1, "empty MAR file")),
    }
    lines
        .map(|(i, l)| {
            let mut toks = l.split_whitespace();
            let card: usize = toks
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::parse(i, format!("bad cardinality: {e}")))?;
            let probs = toks
                .map(|t| t.parse::<f64>().map_err(|e| Error::parse(i, format!("bad probability '{t}': {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if probs.len() != card {
                return Err(Error::parse(i, format!("expected {card} probabilities, found {}", probs.len())));
            }
            Ok(probs)
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<Output> {
    match cli.command {
        Command::Infer(a) => infer(&a),
        Command::Exact(a) => exact(&a),
        Command::Eval { reference, candidate } => eval(&read(&reference)?, &read(&candidate)?),
        Command::Compile(a) => compile(&a),
    }
}

fn emit(out: &mut Output, path: Option<&Path>, text: String, to_stdout: bool) -> Result<()> {
    match path {
        Some(p) => write(p, &text),
        None if to_stdout => {
            out.stdout.push_str(&text);
            Ok(())
        }
        None => {
            out.stderr.push_str(&text);
            Ok(())
        }
    }
}

fn exact(a: &ModelArgs) -> Result<Output> {
    let (graph, ev) = load(&a.model, a.evidence.as_deref())?;
    let r = oracle::exact(&graph, &ev)?;
    let mut out = Output::default();
    emit(&mut out, a.output.as_deref(), format_mar(&r.marginals), true)?;
    Ok(out)
}

fn eval(reference: &str, candidate: &str) -> Result<Output> {
    let r = parse_mar(reference)?;
    let c = parse_mar(candidate)?;
    if r.len() != c.len() {
        return Err(Error::Domain(format!(
            "reference has {} queries, candidate has {}",
            r.len(),
            c.len()
        )));
    }
    if r.is_empty() {
        return Err(Error::Domain("no queries to compare".into()));
    }
    let mut s = String::new();
    let mut hs = Vec::new();
    for (i, (p, q)) in r.iter().zip(&c).enumerate() {
        let h = hellinger(p, q)?;
        writeln!(s, "query={i} hellinger={h}").unwrap();
        hs.push(h);
    }
    writeln!(s, "median_hellinger={}", median(&hs)).unwrap();
    Ok(Output {
        stdout: s,
        stderr: String::new(),
    })
}

fn compile(a: &CompileArgs) -> Result<Output> {
    let (graph, ev) = load(&a.model, a.evidence.as_deref())?;
    let query = QuerySpec::new(&graph, a.query_var, ev)?;
    let order = match &a.var_order {
        Some(p) => VarOrder::from_permutation(p.clone())?,
        None => VarOrder::natural(graph.num_vars()),
    };
    let mut store = Store::new(graph.cards().to_vec(), order)?;
    let c = compile_exact_with_limit(&graph, &query, a.order.into(), &mut store, a.node_limit)?;
    let mask = Mask::sum_all(graph.num_vars());
    let mut s = String::new();
    writeln!(s, "nodes={}", store.size(&c)).unwrap();
    writeln!(s, "store_nodes={}", store.num_nodes()).unwrap();
    writeln!(s, "wmc={}", store.wmc(&c, &mask)).unwrap();
    writeln!(s, "ln_wmc={}", store.ln_wmc(&c, &mask)).unwrap();
    if let Some(p) = &a.dump {
        write(p, &store.to_dot(&c))?;
    }
    Ok(Output {
        stdout: s,
        stderr: String::new(),
    })
}

fn config_for(a: &InferArgs, seed: u64) -> Result<SamplerConfig> {
    if a.samples == 0 {
        return Err(Error::Usage("--samples must be at least 1".into()));
    }
    if a.runs == 0 || a.workers == 0 {
        return Err(Error::Usage("--runs and --workers must be at least 1".into()));
    }
    let time_limit = match a.time_limit {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::Usage("--time-limit must be a positive number of seconds".into()))
        }
        Some(t) => Some(Duration::from_secs_f64(t)),
        None => None,
    };
    let kind = PolicyKind::from(a.policy);
    let mut cfg = SamplerConfig::new(kind);
    if let Some(vars) = &a.offline {
        cfg.selection = Selection::Offline(vars.clone());
    } else {
        cfg.selection = Selection::Online(Policy {
            kind,
            rbvar_argmax: a.rbvar_argmax,
        });
    }
    if let Some(o) = a.order {
        cfg.order_mode = o.into();
    }
    cfg.size_threshold = a.size_threshold.0;
    cfg.var_order = a.var_order.clone();
    cfg.proposal = a.proposal.into();
    cfg.oracle = a.oracle.into();
    cfg.seed = seed;
    cfg.max_samples = a.samples;
    cfg.time_limit = time_limit;
    Ok(cfg)
}

fn threshold_text(t: usize) -> String {
    if t == NO_THRESHOLD {
        "inf".into()
    } else {
        t.to_string()
    }
}

fn infer(a: &InferArgs) -> Result<Output> {
    let (graph, ev) = load(&a.model.model, a.model.evidence.as_deref())?;
    let vars: Vec<VarId> = if a.query_var.is_empty() {
        (0..graph.num_vars()).collect()
    } else {
        a.query_var.clone()
    };
    let reference = match &a.reference {
        Some(p) => {
            let r = parse_mar(&read(p)?)?;
            if r.len() != graph.num_vars() {
                return Err(Error::Usage(format!(
                    "reference has {} lines, model has {} variables",
                    r.len(),
                    graph.num_vars()
                )));
            }
            Some(r)
        }
        None => None,
    };
    config_for(a, a.seed)?;

    let mut report = String::new();
    writeln!(report, "model={}", a.model.model.display()).unwrap();
    if let Some(e) = &a.model.evidence {
        writeln!(report, "evidence={}", e.display()).unwrap();
    }
    let list = |v: &[VarId]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    writeln!(report, "query_vars={}", list(&vars)).unwrap();
    writeln!(report, "policy={}", PolicyKind::from(a.policy).name()).unwrap();
    let order = a.order.map(OrderMode::from).unwrap_or(PolicyKind::from(a.policy).default_order());
    writeln!(report, "order={}", if order == OrderMode::Bfs { "bfs" } else { "revbfs" }).unwrap();
    writeln!(report, "size_threshold={}", threshold_text(a.size_threshold.0)).unwrap();
    writeln!(report, "proposal={}", ProposalKind::from(a.proposal).name()).unwrap();
    writeln!(report, "samples={}", a.samples).unwrap();
    match a.time_limit {
        Some(t) => writeln!(report, "time_limit={t}").unwrap(),
        None => writeln!(report, "time_limit=none").unwrap(),
    }
    writeln!(report, "seed={}", a.seed).unwrap();
    writeln!(report, "oracle={:?}", OracleMode::from(a.oracle)).unwrap();
    writeln!(report, "runs={}", a.runs).unwrap();
    writeln!(report, "workers={}", a.workers).unwrap();
    writeln!(report, "rbvar_argmax={}", a.rbvar_argmax).unwrap();
    if let Some(v) = &a.var_order {
        writeln!(report, "var_order={}", list(v)).unwrap();
    }
    if let Some(v) = &a.offline {
        writeln!(report, "offline={}", list(v)).unwrap();
    }

    let mut pooled_mar = Vec::new();
    for &var in &vars {
        let query = QuerySpec::new(&graph, var, ev.clone())?;
        let mut pooled = Estimator::new(graph.cardinality(var));
        let mut errors = Vec::new();
        for r in 0..a.runs {
            let seed = a.seed.wrapping_add(r as u64);
            let cfg = config_for(a, seed)?;
            let out = run_parallel(&graph, &query, &cfg, a.workers)?;
            write_run(&mut report, r, var, seed, &out);
            if let Some(refm) = &reference {
                let h = match out.estimate() {
                    Ok(est) => hellinger(&refm[var], &est)?,
                    Err(_) => 1.0,
                };
                writeln!(report, "run={r} var={var} hellinger={h}").unwrap();
                errors.push(h);
            }
            pooled.merge(&out.estimator);
        }
        if !errors.is_empty() {
            writeln!(report, "var={var} median_hellinger={}", median(&errors)).unwrap();
        }
        writeln!(report, "var={var} pooled_samples={} pooled_ess={}", pooled.count(), pooled.ess()).unwrap();
        pooled_mar.push(pooled.estimate()?);
    }

    let mut out = Output::default();
    emit(&mut out, a.model.output.as_deref(), format_mar(&pooled_mar), true)?;
    emit(&mut out, a.report.as_deref(), report, false)?;
    Ok(out)
}

fn write_run(report: &mut String, r: usize, var: VarId, seed: u64, out: &RunOutput) {
    let n = out.samples.len();
    let sizes: Vec<usize> = out.samples.iter().map(|s| s.peak_size).collect();
    let mean = |xs: &mut dyn Iterator<Item = usize>| {
        if n == 0 {
            0.0
        } else {
            xs.sum::<usize>() as f64 / n as f64
        }
    };
    let mean_size = mean(&mut sizes.iter().copied());
    let mean_final = mean(&mut out.samples.iter().map(|s| s.final_size));
    let mean_sampled = mean(&mut out.samples.iter().map(|s| s.num_sampled()));
    writeln!(
        report,
        "run={r} var={var} seed={seed} samples={n} rejected={} ess={} mean_peak_size={mean_size} max_peak_size={} mean_final_size={mean_final} mean_sampled={mean_sampled} wall_s={:.3}",
        out.estimator.rejected(),
        out.estimator.ess(),
        sizes.iter().max().copied().unwrap_or(0),
        out.elapsed.as_secs_f64()
    )
    .unwrap();
}
