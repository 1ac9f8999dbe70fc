//! The `chainsig` command line.
//!
//! Every subcommand writes one JSON document (or CSV for block tables) to
//! stdout or `--out`. Output depends only on the arguments and the seed, not
//! on `--workers`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 budget or value limit
//! exceeded, 4 audit failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{parse_rational, ChainSpecDocument, DocumentForm, LabeledChain, StateId, ValidationReport};
use crate::error::{invalid, Error, Result};
use crate::oracle::{audit_chain, default_epsilon_grid, AuditConfig, AuditReport, Epsilon, ExactProbability, Oracle, ProbValue, ProductOracle, DEFAULT_BUDGET};
use crate::product::{
    count_event, run_product_serial_test, run_product_two_path_test, run_product_uniform_pivot_test, ProductChain, RegionHistogram, DEFAULT_VALUE_LIMIT,
};
use crate::sampling::{RngSeed, DEFAULT_GEOMETRIC_CAP};
use crate::significance::{run_test, SignificanceReport, TestConfig, TestName};
use crate::zoo::{random_reversible_chain, BlockTable, GridDistrictingChain, GridDistrictingState, PartisanScore, ZooSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "chainsig", version, about = "Local-outlier significance tests for reversible Markov chains")]
pub struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Work budget for exact enumeration.
    #[arg(long, global = true, env = "CHAINSIG_BUDGET", default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,

    /// Write the output document here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check row sums, weights and detailed balance (or grid constraints).
    Validate(SourceArgs),
    /// Run one significance test and print its report.
    Test(TestArgs),
    /// Exact rho/p tables and bound audits on explicit chains.
    Oracle(OracleArgs),
    /// Exact count of outcome tuples whose summed value is at most delta.
    CountEvent(CountArgs),
    /// Print a zoo chain as a chain document, or a synthetic block table.
    Zoo(ZooArgs),
    /// Print a JSON schema, or check a document against it.
    Schema(SchemaArgs),
}

/// Where the chain comes from. Repeat `--chain`/`--zoo` for product tests;
/// files come first, then zoo chains, each in the order given.
#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Chain document (JSON).
    #[arg(long)]
    pub chain: Vec<PathBuf>,

    /// Built-in chain: knn:N, iid:N, path:N, cycle:N, random:N:SEED, grid:WxH:D[:DEV].
    #[arg(long)]
    pub zoo: Vec<ZooSpec>,

    /// Block table (`cell,x,y,pop,votes_a,votes_b`) for the grid-districting chain.
    #[arg(long)]
    pub blocks: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    pub districts: usize,

    /// Allowed population deviation as a fraction of the ideal.
    #[arg(long, default_value_t = 0.1)]
    pub deviation: f64,

    #[arg(long, value_enum, default_value_t = ScoreArg::VoteMargin)]
    pub score: ScoreArg,

    /// Flip the score's sign so that high scores are flagged.
    #[arg(long)]
    pub negate: bool,

    /// Starting districting as comma-separated district ids `1..=D`, one per row of the table.
    #[arg(long, value_delimiter = ',')]
    pub initial: Vec<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    Seats,
    VoteMargin,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    #[arg(long, value_enum)]
    pub test: TestName,

    #[arg(long)]
    pub k: Option<usize>,

    /// Per-component lengths for product-uniform-pivot.
    #[arg(long, value_delimiter = ',')]
    pub k_tuple: Vec<usize>,

    #[arg(long, default_value_t = 1)]
    pub m: usize,

    #[arg(long, default_value_t = 1)]
    pub t: usize,

    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    /// Mean length for geometric-outlier.
    #[arg(long)]
    pub mu: Option<f64>,

    #[arg(long, default_value_t = DEFAULT_GEOMETRIC_CAP)]
    pub length_cap: usize,

    /// Nominal ε (decimal or p/q) for a pass/fail verdict.
    #[arg(long)]
    pub epsilon: Option<String>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0)]
    pub stream: u64,

    /// Start state index, one per component (default 0). Grid chains start
    /// from `--initial` or the built-in districting.
    #[arg(long, value_delimiter = ',')]
    pub sigma0: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TiesArg {
    Conservative,
    Random,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Single query rho^k_{j,l}.
    #[arg(long)]
    pub rho: bool,

    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long)]
    pub j: Option<usize>,

    #[arg(long)]
    pub l: Option<usize>,

    /// How ties with the pivot count in `--rho` queries.
    #[arg(long, value_enum, default_value_t = TiesArg::Conservative)]
    pub ties: TiesArg,

    /// ε values for the tables (default: a grid that hits every floor(ε n)).
    #[arg(long)]
    pub epsilon: Vec<String>,

    /// α values for (ε,α) certification of every state.
    #[arg(long)]
    pub alpha: Vec<String>,

    /// Star-split tree audits with legs up to this length.
    #[arg(long, default_value_t = 0)]
    pub tree_k: usize,

    /// Star-split tree audits with up to this many legs.
    #[arg(long, default_value_t = 0)]
    pub tree_m: usize,

    /// Audit this many random reversible chains instead of a given chain.
    #[arg(long)]
    pub sweep: Option<usize>,

    /// States per random chain in a sweep.
    #[arg(long, default_value_t = 5)]
    pub states: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Histogram file: `{"region": {"value": count, ...}, ...}`.
    #[arg(long)]
    pub histograms: PathBuf,

    /// Threshold (decimal or p/q).
    #[arg(long, allow_hyphen_values = true)]
    pub delta: String,

    #[arg(long, default_value_t = DEFAULT_VALUE_LIMIT)]
    pub value_limit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Dense,
    Edges,
}

#[derive(Args, Debug)]
pub struct ZooArgs {
    /// knn:N, iid:N, path:N, cycle:N, random:N:SEED or grid:WxH:D[:DEV].
    #[arg(required_unless_present = "synthetic_blocks")]
    pub spec: Option<ZooSpec>,

    #[arg(long, value_enum, default_value_t = FormArg::Dense)]
    pub form: FormArg,

    /// Print the synthetic `WxH` block table as CSV instead.
    #[arg(long, conflicts_with = "spec")]
    pub synthetic_blocks: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemaKind {
    Report,
    Chain,
}

#[derive(Args, Debug)]
pub struct SchemaArgs {
    #[arg(long, value_enum, default_value_t = SchemaKind::Report)]
    pub kind: SchemaKind,

    /// Check this document instead of printing the schema.
    #[arg(long)]
    pub check: Option<PathBuf>,
}

/// Output text and exit code of a successful run.
struct Outcome {
    text: String,
    code: i32,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, code: EXIT_OK }
    }

    fn json<T: Serialize>(value: &T, code: i32) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
        text.push('\n');
        Outcome { text, code }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::BudgetExceeded { .. } | Error::ValueExplosion { .. } => EXIT_BUDGET,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{text}");
            return EXIT_OK;
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &outcome.text).map_err(Error::from),
                None => stdout.write_all(outcome.text.as_bytes()).map_err(Error::from),
            };
            match written {
                Ok(()) => outcome.code,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main_entry() -> i32 {
    run_from(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn run(cli: &Cli) -> Result<Outcome> {
    match cli.workers {
        Some(0) => Err(invalid("workers", "need at least one worker")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| invalid("workers", e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, cli.budget),
        Command::Test(a) => cmd_test(a, cli.budget),
        Command::Oracle(a) => cmd_oracle(a, cli.budget),
        Command::CountEvent(a) => cmd_count_event(a),
        Command::Zoo(a) => cmd_zoo(a, cli.budget),
        Command::Schema(a) => cmd_schema(a),
    }
}

enum Source {
    Explicit(Vec<(String, LabeledChain)>),
    Grid(GridDistrictingChain),
}

fn load_source(args: &SourceArgs, budget: u64) -> Result<Source> {
    if let Some(path) = &args.blocks {
        if !args.chain.is_empty() || !args.zoo.is_empty() {
            return Err(invalid("blocks", "give either --blocks or --chain/--zoo, not both"));
        }
        let score = match args.score {
            ScoreArg::Seats => PartisanScore::Seats,
            ScoreArg::VoteMargin => PartisanScore::VoteMargin,
        };
        let mut chain = GridDistrictingChain::new(BlockTable::load(path)?, args.districts, args.deviation, score, args.negate)?;
        if !args.initial.is_empty() {
            chain = chain.with_initial(GridDistrictingState::from_district_ids(&args.initial)?)?;
        }
        return Ok(Source::Grid(chain));
    }
    if !args.initial.is_empty() {
        return Err(invalid("initial", "only applies with --blocks"));
    }
    let mut out = Vec::new();
    for path in &args.chain {
        out.push((path.display().to_string(), ChainSpecDocument::load(path)?.to_chain()?));
    }
    for spec in &args.zoo {
        out.push((spec.to_string(), build_zoo(spec, budget)?));
    }
    if out.is_empty() {
        return Err(invalid("chain", "give a chain with --chain, --zoo or --blocks"));
    }
    Ok(Source::Explicit(out))
}

fn build_zoo(spec: &ZooSpec, budget: u64) -> Result<LabeledChain> {
    match *spec {
        ZooSpec::Grid { width, height, districts, deviation } => {
            let c = GridDistrictingChain::new(BlockTable::synthetic(width, height), districts, deviation, PartisanScore::VoteMargin, false)?;
            Ok(c.enumerate(budget)?.1)
        }
        _ => spec.build(),
    }
}

/// The explicit chains of a source; grid tables are enumerated.
fn explicit(source: Source, budget: u64) -> Result<Vec<(String, LabeledChain)>> {
    match source {
        Source::Explicit(v) => Ok(v),
        Source::Grid(g) => Ok(vec![("blocks".to_string(), g.enumerate(budget)?.1)]),
    }
}

#[derive(Serialize)]
struct ChainValidation {
    source: String,
    n_states: usize,
    exact: bool,
    report: ValidationReport,
}

#[derive(Serialize)]
struct GridValidation {
    cells: usize,
    districts: usize,
    ideal_population: f64,
    initial: Vec<u16>,
    populations: Vec<u64>,
    score: f64,
    valid: bool,
}

fn cmd_validate(args: &SourceArgs, budget: u64) -> Result<Outcome> {
    match load_source(args, budget)? {
        Source::Grid(g) => {
            let s = g.initial_state();
            let doc = GridValidation {
                cells: g.blocks().len(),
                districts: g.districts(),
                ideal_population: g.ideal_population(),
                initial: s.district_ids(),
                populations: g.populations(s),
                score: g.score(s),
                valid: g.violation(s).is_none(),
            };
            Ok(Outcome::json(&doc, EXIT_OK))
        }
        Source::Explicit(chains) => {
            let docs: Vec<ChainValidation> = chains
                .into_iter()
                .map(|(source, c)| ChainValidation { source, n_states: c.n_states(), exact: c.exact().is_some(), report: c.validate() })
                .collect();
            let code = if docs.iter().all(|d| d.report.is_valid()) { EXIT_OK } else { EXIT_CONFIG };
            Ok(Outcome::json(&docs, code))
        }
    }
}

fn parse_epsilon_f64(text: &Option<String>) -> Result<Option<f64>> {
    text.as_deref().map(|t| Epsilon::parse(t).map(|e| e.to_f64())).transpose()
}

fn require_k(k: Option<usize>) -> Result<usize> {
    k.ok_or_else(|| invalid("k", "this test needs --k"))
}

fn cmd_test(args: &TestArgs, budget: u64) -> Result<Outcome> {
    let seed = RngSeed::with_stream(args.seed, args.stream);
    let epsilon = parse_epsilon_f64(&args.epsilon)?;
    let source = load_source(&args.source, budget)?;
    let product_test = matches!(args.test, TestName::ProductSerial | TestName::ProductTwoPath | TestName::ProductUniformPivot);
    let report = if product_test {
        let chains = explicit(source, budget)?;
        let d = chains.len();
        let sigma0 = if args.sigma0.is_empty() { vec![0; d] } else { args.sigma0.clone() };
        let product = ProductChain::sum(chains.into_iter().map(|(_, c)| c).collect())?.with_budget(budget);
        let mut report = match args.test {
            TestName::ProductSerial => run_product_serial_test(&product, &sigma0, require_k(args.k)?, seed)?,
            TestName::ProductTwoPath => run_product_two_path_test(&product, &sigma0, require_k(args.k)?, seed)?,
            _ => {
                let k = match (args.k, args.k_tuple.is_empty()) {
                    (_, false) => args.k_tuple.clone(),
                    (Some(k), true) => vec![k; d],
                    (None, true) => return Err(invalid("k", "product-uniform-pivot needs --k or --k-tuple")),
                };
                run_product_uniform_pivot_test(&product, &sigma0, &k, args.alpha, args.m, args.t, seed)?
            }
        };
        if let Some(eps) = epsilon {
            crate::significance::attach_nominal(&mut report, eps)?;
        }
        report
    } else {
        let config = TestConfig {
            k: match args.test {
                TestName::GeometricOutlier => args.k.unwrap_or(0),
                _ => require_k(args.k)?,
            },
            m: args.m,
            t: args.t,
            alpha: args.alpha,
            mu: match args.test {
                TestName::GeometricOutlier => args.mu.ok_or_else(|| invalid("mu", "geometric-outlier needs --mu"))?,
                _ => 1.0,
            },
            length_cap: args.length_cap,
            epsilon,
            seed,
            ..TestConfig::default()
        };
        match source {
            Source::Grid(g) => {
                if !args.sigma0.is_empty() {
                    return Err(invalid("sigma0", "grid chains start from --initial"));
                }
                run_test(&g, &g.initial_state().clone(), args.test, &config)?
            }
            Source::Explicit(chains) => {
                let [(_, chain)] = chains.as_slice() else {
                    return Err(invalid("chain", format!("{:?} takes one chain, got {}", args.test, chains.len())));
                };
                let sigma0 = match args.sigma0.as_slice() {
                    [] => 0,
                    [s] => *s,
                    _ => return Err(invalid("sigma0", "give one start state")),
                };
                chain.require_valid()?;
                run_test(chain, &StateId(sigma0), args.test, &config)?
            }
        }
    };
    Ok(Outcome::ok(report.to_json()))
}

#[derive(Serialize)]
struct RhoEntry {
    j: usize,
    l: usize,
    value: ProbValue,
}

#[derive(Serialize)]
struct CertificationEntry {
    alpha: String,
    /// States certified as non-(ε,α)-outliers.
    non_outliers: Vec<usize>,
}

#[derive(Serialize)]
struct EpsilonEntry {
    epsilon: String,
    /// `p^k_{0,ε}`: one trajectory from a stationary start.
    single_trajectory: ProbValue,
    serial: ProbValue,
    /// `p^{2k}_{k,ε}`.
    two_path: ProbValue,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    certification: Vec<CertificationEntry>,
}

#[derive(Serialize)]
struct OracleTable {
    chain: String,
    exact: bool,
    k: usize,
    rho: Vec<RhoEntry>,
    epsilons: Vec<EpsilonEntry>,
    audit: AuditReport,
}

#[derive(Serialize)]
struct ProductEntry {
    epsilon: String,
    serial: ProbValue,
    serial_bound: String,
    two_path: ProbValue,
    two_path_bound: String,
    holds: bool,
}

#[derive(Serialize)]
struct ProductTable {
    components: Vec<String>,
    d: usize,
    k: usize,
    exact: bool,
    entries: Vec<ProductEntry>,
    passed: bool,
}

#[derive(Serialize)]
struct SweepDocument {
    chains: usize,
    states: usize,
    seed: u64,
    max_k: usize,
    tree_k: usize,
    tree_m: usize,
    failing_chains: Vec<usize>,
    report: AuditReport,
}

fn epsilons(texts: &[String], k: usize) -> Result<Vec<Epsilon>> {
    if texts.is_empty() {
        Ok(default_epsilon_grid(k))
    } else {
        texts.iter().map(|t| Epsilon::parse(t)).collect()
    }
}

fn cmd_oracle(args: &OracleArgs, budget: u64) -> Result<Outcome> {
    if let Some(n) = args.sweep {
        return oracle_sweep(args, n, budget);
    }
    let chains = explicit(load_source(&args.source, budget)?, budget)?;
    if args.rho {
        let [(_, chain)] = chains.as_slice() else {
            return Err(invalid("chain", "--rho takes one chain"));
        };
        let need = |v: Option<usize>, name: &'static str| v.ok_or_else(|| invalid(name, format!("--rho needs --{name}")));
        let (k, j, l) = (need(args.k, "k")?, need(args.j, "j")?, need(args.l, "l")?);
        let oracle = Oracle::with_budget(chain, budget)?;
        let value: ExactProbability = match args.ties {
            TiesArg::Conservative => oracle.rho(k, j, l)?,
            TiesArg::Random => oracle.rho_random_ties(k, j, l + 1)?,
        };
        return Ok(Outcome::json(&value, EXIT_OK));
    }
    if args.ties == TiesArg::Random {
        return Err(invalid("ties", "random ties apply to --rho queries"));
    }
    let k = args.k.ok_or_else(|| invalid("k", "oracle tables need --k"))?;
    if chains.len() > 1 {
        return oracle_product(args, chains, k, budget);
    }
    let (name, chain) = &chains[0];
    let oracle = Oracle::with_budget(chain, budget)?;
    let alphas = args.alpha.iter().map(|a| parse_rational(a)).collect::<Result<Vec<BigRational>>>()?;
    let grid = epsilons(&args.epsilon, k)?;
    let table = oracle.walk_table(2 * k, 2 * k)?;
    let mut rho = Vec::new();
    for j in 0..=k {
        for l in 0..=k {
            rho.push(RhoEntry { j, l, value: table.rho(k, j, l) });
        }
    }
    let mut entries = Vec::new();
    for eps in &grid {
        let (l1, l2) = (eps.ell(k as u64 + 1), eps.ell(2 * k as u64 + 1));
        let mut certification = Vec::new();
        for alpha in &alphas {
            let non_outliers = (0..chain.n_states())
                .map(|s| oracle.certify_eps_alpha(StateId(s), k, eps, alpha).map(|c| c.non_outlier))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .enumerate()
                .filter_map(|(s, ok)| ok.then_some(s))
                .collect();
            certification.push(CertificationEntry { alpha: crate::chain::format_rational(alpha), non_outliers });
        }
        entries.push(EpsilonEntry {
            epsilon: eps.to_string(),
            single_trajectory: l1.map_or_else(ProbValue::zero, |l| table.rho(k, 0, l)),
            serial: l1.map_or_else(ProbValue::zero, |l| table.rho_sum(k, l).div_int(k as u64 + 1)),
            two_path: l2.map_or_else(ProbValue::zero, |l| table.rho(2 * k, k, l)),
            certification,
        });
    }
    let mut config = AuditConfig::new(k).with_trees(args.tree_k, args.tree_m);
    config.epsilons = grid;
    if !alphas.is_empty() {
        config.alphas = alphas;
    }
    let audit = audit_chain(&oracle, &config)?;
    let code = if audit.passed() { EXIT_OK } else { EXIT_AUDIT };
    let doc = OracleTable { chain: name.clone(), exact: oracle.is_exact(), k, rho, epsilons: entries, audit };
    Ok(Outcome::json(&doc, code))
}

fn oracle_product(args: &OracleArgs, chains: Vec<(String, LabeledChain)>, k: usize, budget: u64) -> Result<Outcome> {
    let names: Vec<String> = chains.iter().map(|(n, _)| n.clone()).collect();
    let product = ProductChain::sum(chains.into_iter().map(|(_, c)| c).collect())?.with_budget(budget);
    let oracle = ProductOracle::with_budget(&product, budget)?;
    let d = product.d();
    let scale = BigRational::from_integer(num_bigint::BigInt::from(2u8).pow(d as u32));
    let mut entries = Vec::new();
    for eps in epsilons(&args.epsilon, k)? {
        let serial = oracle.serial_probability(k, &eps)?;
        let two_path = oracle.two_path_probability(k, &eps)?;
        let two_bound = (eps.value() * &scale).min(BigRational::from_integer(1.into()));
        let holds = serial.le(&ProbValue::Exact(eps.value().clone())) && two_path.le(&ProbValue::Exact(two_bound.clone()));
        entries.push(ProductEntry {
            epsilon: eps.to_string(),
            serial,
            serial_bound: eps.to_string(),
            two_path,
            two_path_bound: crate::chain::format_rational(&two_bound),
            holds,
        });
    }
    let passed = entries.iter().all(|e| e.holds);
    let doc = ProductTable { components: names, d, k, exact: oracle.is_exact(), entries, passed };
    Ok(Outcome::json(&doc, if passed { EXIT_OK } else { EXIT_AUDIT }))
}

fn oracle_sweep(args: &OracleArgs, n: usize, budget: u64) -> Result<Outcome> {
    let s = &args.source;
    if !s.chain.is_empty() || !s.zoo.is_empty() || s.blocks.is_some() {
        return Err(invalid("sweep", "a sweep generates its own chains"));
    }
    let max_k = args.k.unwrap_or(4);
    let config = AuditConfig::new(max_k).with_trees(args.tree_k, args.tree_m);
    let root = RngSeed::new(args.seed);
    let reports = (0..n)
        .into_par_iter()
        .map(|i| {
            let chain = random_reversible_chain(args.states, root.item(i as u64))?;
            audit_chain(&Oracle::with_budget(&chain, budget)?, &config)
        })
        .collect::<Result<Vec<AuditReport>>>()?;
    let failing_chains = reports.iter().enumerate().filter(|(_, r)| !r.passed()).map(|(i, _)| i).collect();
    let mut merged = AuditReport { exact: true, checks: Default::default(), violations: Vec::new() };
    for r in reports {
        merged.merge(r);
    }
    let code = if merged.passed() { EXIT_OK } else { EXIT_AUDIT };
    let doc = SweepDocument { chains: n, states: args.states, seed: args.seed, max_k, tree_k: args.tree_k, tree_m: args.tree_m, failing_chains, report: merged };
    Ok(Outcome::json(&doc, code))
}

fn cmd_count_event(args: &CountArgs) -> Result<Outcome> {
    let histograms = RegionHistogram::load(&args.histograms)?;
    let delta = parse_rational(&args.delta)?;
    Ok(Outcome::json(&count_event(&histograms, &delta, args.value_limit)?, EXIT_OK))
}

fn cmd_zoo(args: &ZooArgs, budget: u64) -> Result<Outcome> {
    if let Some(dims) = &args.synthetic_blocks {
        let bad = || invalid("synthetic-blocks", format!("expected WxH, got {dims:?}"));
        let (w, h) = dims.split_once('x').ok_or_else(bad)?;
        let (w, h): (usize, usize) = (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
        if w == 0 || h == 0 {
            return Err(bad());
        }
        return Ok(Outcome::ok(BlockTable::synthetic(w, h).to_csv()?));
    }
    let spec = args.spec.as_ref().expect("clap requires a spec");
    let chain = build_zoo(spec, budget)?;
    let form = match args.form {
        FormArg::Dense => DocumentForm::Dense,
        FormArg::Edges => DocumentForm::Edges,
    };
    let mut text = ChainSpecDocument::from_chain(&chain, form)?.to_json();
    text.push('\n');
    Ok(Outcome::ok(text))
}

#[derive(Serialize)]
struct CheckResult {
    kind: &'static str,
    valid: bool,
}

fn cmd_schema(args: &SchemaArgs) -> Result<Outcome> {
    match (&args.check, args.kind) {
        (None, SchemaKind::Report) => Ok(Outcome::json(&schemars::schema_for!(SignificanceReport), EXIT_OK)),
        (None, SchemaKind::Chain) => Ok(Outcome::json(&schemars::schema_for!(ChainSpecDocument), EXIT_OK)),
        (Some(path), kind) => {
            check_document(path, kind)?;
            let kind = match kind {
                SchemaKind::Report => "report",
                SchemaKind::Chain => "chain",
            };
            Ok(Outcome::json(&CheckResult { kind, valid: true }, EXIT_OK))
        }
    }
}

fn check_document(path: &Path, kind: SchemaKind) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    match kind {
        SchemaKind::Report => SignificanceReport::from_json(&text)?.check(),
        SchemaKind::Chain => ChainSpecDocument::from_json(&text)?.to_chain().map(|_| ()),
    }
}
