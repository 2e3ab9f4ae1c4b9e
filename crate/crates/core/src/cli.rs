//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid model, 3 contradictory
//! evidence or infeasible chain, 4 rejection budget exhausted. Reports go to
//! stdout, notes and errors to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value as Json};

use crate::diagram::{validate_diagram, Configuration, Evidence, InfluenceDiagram, Value, VariableId};
use crate::emc::{extract_emc, global_revise, Revision};
use crate::error::{Error, Result};
use crate::model_file::{parse_evidence, ModelFile};
use crate::models::infection::{build_infection_model, infection_posterior_oracle, InfectionParams};
use crate::models::toxicity::{
    learn_alpha_posterior, predict_survival, simulate_history, AlphaBelief, History, ToxicityParams,
};
use crate::sampler::{query, Acceptance, Estimator, PosteriorTable, Retain, SampleSet, SamplerConfig, ScanOrder};

#[derive(Debug, Parser)]
#[command(name = "tempid", version, about = "Influence diagrams over semi-Markov processes")]
struct Cli {
    /// Root seed for all randomness; drawn from entropy and printed if absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file and list every violation.
    Validate { model: PathBuf },
    /// Revise the embedded chain's domains after a-priori exclusions.
    Revise(ReviseArgs),
    /// Draw composite samples and report diagnostics.
    Sample(SampleArgs),
    /// Estimate posterior tables for target variables.
    Query(SampleArgs),
    /// Run one of the bundled models.
    #[command(subcommand)]
    Demo(Demo),
}

#[derive(Debug, Args)]
struct ReviseArgs {
    model: PathBuf,
    /// `Var:label,label,...`; repeat for several variables.
    #[arg(long)]
    exclude: Vec<String>,
    /// Also prune successor values with no compatible predecessor.
    #[arg(long)]
    bidirectional: bool,
    /// Write the compatibility graphs as dot text.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Kernel,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanArg {
    Fixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RetainArg {
    Last,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AcceptanceArg {
    Likelihood,
    Support,
}

#[derive(Debug, Clone, Args)]
struct SamplerArgs {
    /// Number of forward seeds (chains).
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Gibbs sweeps per chain.
    #[arg(long, default_value_t = 5)]
    h: usize,
    /// Consecutive forward rejections allowed per chain.
    #[arg(long, default_value_t = 100_000)]
    max_rejections: u64,
    #[arg(long, value_enum, default_value_t = ScanArg::Fixed)]
    scan: ScanArg,
    #[arg(long, value_enum, default_value_t = RetainArg::Last)]
    retain: RetainArg,
    #[arg(long, value_enum, default_value_t = AcceptanceArg::Likelihood)]
    acceptance: AcceptanceArg,
}

impl SamplerArgs {
    fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            m: self.m,
            h: self.h,
            seed,
            max_rejections: self.max_rejections,
            scan_order: match self.scan {
                ScanArg::Fixed => ScanOrder::Fixed,
                ScanArg::Random => ScanOrder::Random,
            },
            retain: match self.retain {
                RetainArg::Last => Retain::Last,
                RetainArg::All => Retain::All,
            },
            acceptance: match self.acceptance {
                AcceptanceArg::Likelihood => Acceptance::Likelihood,
                AcceptanceArg::Support => Acceptance::Support,
            },
        }
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    model: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Mixture)]
    estimator: EstimatorArg,
    /// Comma-separated `Var=value` pairs, added to the file's evidence.
    #[arg(long)]
    evidence: Option<String>,
    /// Comma-separated target variables.
    #[arg(long)]
    target: Option<String>,
    /// Write one sampled configuration per line.
    #[arg(long)]
    histories: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Demo {
    /// Posterior over the initial state given the observed time to fever.
    Infection(InfectionArgs),
    /// Learn the dysfunction coefficients and forecast survival per plan.
    Toxicity(ToxicityArgs),
}

#[derive(Debug, Args)]
struct InfectionArgs {
    /// Observed time from the initial state to fever, in months.
    #[arg(long, default_value_t = 3.0)]
    t_obs: f64,
    /// JSON file overriding the default parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    sampler: InfectionSampler,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Mixture)]
    estimator: EstimatorArg,
    /// Compare against the exact posterior.
    #[arg(long)]
    check: bool,
    /// Write the built model, with the evidence, as a model file.
    #[arg(long)]
    write_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InfectionSampler {
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    h: usize,
    #[arg(long, default_value_t = 100_000)]
    max_rejections: u64,
}

#[derive(Debug, Args)]
struct ToxicityArgs {
    /// JSON history `{doses, dysfunction, alive}`; simulated if absent.
    #[arg(long)]
    history: Option<PathBuf>,
    /// JSON dose plan (array of 0/1) or list of candidate plans.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Total number of steps, observed plus planned.
    #[arg(long)]
    horizon: Option<usize>,
    /// JSON file overriding the default parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Posterior samples for the sampler path.
    #[arg(long, default_value_t = 5000)]
    m: usize,
    #[arg(long, default_value_t = 5000)]
    rollouts: usize,
    /// Compare the sampler-path posterior with the closed form.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PlanFile {
    One(Vec<u8>),
    Many(Vec<Vec<u8>>),
}

struct Report {
    text: String,
    json: Json,
}

/// Runs the tool and returns its exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let needs_seed = !matches!(cli.command, Command::Validate { .. } | Command::Revise(_));
    let seed = match cli.seed {
        Some(s) => s,
        None if needs_seed => {
            let s = rand::rng().random::<u64>();
            eprintln!("seed: {s} (pass --seed {s} to reproduce)");
            s
        }
        None => 0,
    };
    match execute(&cli, seed) {
        Ok((report, code)) => {
            let mut out = std::io::stdout().lock();
            let _ = match cli.output {
                Output::Text => write!(out, "{}", report.text),
                Output::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report.json).expect("json")),
            };
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) | Error::ModelFile(_) | Error::Json(_) | Error::NotAChain(_) => 2,
        Error::Contradictory(_) | Error::BlanketInconsistency(_) => 3,
        Error::RejectionBudget { .. } => 4,
        _ => 1,
    }
}

fn execute(cli: &Cli, seed: u64) -> Result<(Report, i32)> {
    match &cli.command {
        Command::Validate { model } => validate(model),
        Command::Revise(args) => revise(args).map(|r| (r, 0)),
        Command::Sample(args) => sample(args, seed, cli.verbose, false).map(|r| (r, 0)),
        Command::Query(args) => sample(args, seed, cli.verbose, true).map(|r| (r, 0)),
        Command::Demo(Demo::Infection(args)) => infection_demo(args, seed).map(|r| (r, 0)),
        Command::Demo(Demo::Toxicity(args)) => toxicity_demo(args, seed).map(|r| (r, 0)),
    }
}

fn validate(path: &Path) -> Result<(Report, i32)> {
    let file = ModelFile::load(path)?;
    let spec = file.to_spec()?;
    let report = validate_diagram(&spec);
    let mut violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
    if report.is_ok() {
        let d = spec.build()?;
        if let Err(e) = file.evidence(&d) {
            violations.push(format!("evidence: {e}"));
        }
    }
    let mut text = String::new();
    if violations.is_empty() {
        let _ = writeln!(text, "ok: {} variables, no violations", file.variables.len());
    } else {
        let _ = writeln!(text, "{} violation(s):", violations.len());
        for v in &violations {
            let _ = writeln!(text, "  - {v}");
        }
    }
    for w in &report.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let code = if violations.is_empty() { 0 } else { 2 };
    let json = json!({
        "command": "validate",
        "ok": violations.is_empty(),
        "violations": violations,
        "warnings": report.warnings,
    });
    Ok((Report { text, json }, code))
}

fn load(path: &Path) -> Result<(InfluenceDiagram, Evidence)> {
    crate::model_file::load_model(path)
}

fn revise(args: &ReviseArgs) -> Result<Report> {
    let (d, _) = load(&args.model)?;
    let chain = d
        .chain()
        .ok_or_else(|| Error::Argument("the model declares no embedded chain".into()))?;
    let before = extract_emc(&d, chain)?;
    let mut exclusions: BTreeMap<VariableId, Vec<usize>> = BTreeMap::new();
    for spec in &args.exclude {
        let bad = |why: &str| Error::Argument(format!("--exclude `{spec}`: {why}"));
        let (name, labels) = spec.split_once(':').ok_or_else(|| bad("expected Var:label,label"))?;
        let id = d.id(name.trim()).map_err(|_| bad("unknown variable"))?;
        let domain = &d.node(id)?.domain;
        let entry = exclusions.entry(id).or_default();
        for label in labels.split(',').map(str::trim).filter(|l| !l.is_empty()) {
            entry.push(domain.state(label).ok_or_else(|| bad(&format!("`{label}` is not a value of {name}")))?);
        }
    }
    let mode = if args.bidirectional {
        Revision::Bidirectional
    } else {
        Revision::Literal
    };
    let after = global_revise(&before, &exclusions, mode)?;
    if let Some(path) = &args.dot {
        fs::write(path, after.to_dot())?;
    }
    let mut text = String::from("variable  before -> after\n");
    let mut rows = Vec::new();
    for pos in 0..after.vars().len() {
        let b = before.domain_labels(pos);
        let a = after.domain_labels(pos);
        let _ = writeln!(text, "{:<8}  {{{}}} -> {{{}}}", after.names()[pos], b.join(","), a.join(","));
        rows.push(json!({"variable": after.names()[pos], "before": b, "after": a}));
    }
    let links: Vec<bool> = (1..=after.link_count())
        .map(|i| after.is_completely_connected(i).unwrap_or(false))
        .collect();
    let _ = writeln!(
        text,
        "gibbs reachability: {}",
        if after.gibbs_reachability_ok() { "ok" } else { "fails (a link is not completely connected)" }
    );
    if after.is_infeasible() {
        return Err(Error::Contradictory(format!(
            "revision empties a domain:\n{text}"
        )));
    }
    let json = json!({
        "command": "revise",
        "mode": if args.bidirectional { "bidirectional" } else { "literal" },
        "domains": rows,
        "completely_connected": links,
        "gibbs_reachability": after.gibbs_reachability_ok(),
    });
    Ok(Report { text, json })
}

fn estimator(e: EstimatorArg) -> Estimator {
    match e {
        EstimatorArg::Kernel => Estimator::Kernel,
        EstimatorArg::Mixture => Estimator::Mixture,
    }
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Kernel => "kernel",
        Estimator::Mixture => "mixture",
    }
}

fn sample(args: &SampleArgs, seed: u64, verbose: bool, require_target: bool) -> Result<Report> {
    let (d, mut evidence) = load(&args.model)?;
    if let Some(text) = &args.evidence {
        parse_evidence(&d, text, &mut evidence)?;
    }
    let targets: Vec<VariableId> = match &args.target {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| d.id(t))
            .collect::<Result<_>>()?,
        None if require_target => return Err(Error::Argument("query needs --target".into())),
        None => d
            .ids()
            .filter(|&id| d.nodes()[id.0].domain.is_discrete() && !evidence.contains(id))
            .collect(),
    };
    let config = args.sampler.config(seed);
    let (report, set) = query(&d, &evidence, &config, &targets, estimator(args.estimator))?;
    if let Some(path) = &args.histories {
        write_histories(&d, &set, path)?;
    }
    if verbose {
        for id in d.ids() {
            let (u, mv) = (set.diagnostics.gibbs_updates[id.0], set.diagnostics.gibbs_moves[id.0]);
            if u > 0 {
                eprintln!("{}: {mv}/{u} Gibbs updates moved", d.name(id));
            }
        }
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} estimator, m={} h={} seed={} histories={}",
        estimator_name(report.estimator),
        report.m,
        report.h,
        seed,
        report.histories
    );
    for t in &report.tables {
        text.push_str(&table_text(&d, t));
    }
    text.push_str(&diagnostics_text(&set));
    let json = json!({
        "command": if require_target { "query" } else { "sample" },
        "seed": seed,
        "m": report.m,
        "h": report.h,
        "estimator": estimator_name(report.estimator),
        "histories": report.histories,
        "tables": report.tables.iter().map(|t| table_json(&d, t)).collect::<Vec<_>>(),
        "diagnostics": diagnostics_json(&d, &set),
        "warnings": report.warnings,
    });
    Ok(Report { text, json })
}

fn table_text(d: &InfluenceDiagram, t: &PosteriorTable) -> String {
    let mut out = format!("posterior of {}\n  value   p        se\n", d.name(t.target));
    for ((label, p), se) in t.labels.iter().zip(&t.probs).zip(&t.std_errors) {
        let _ = writeln!(out, "  {label:<6}  {p:.6}  {se:.6}");
    }
    out
}

fn table_json(d: &InfluenceDiagram, t: &PosteriorTable) -> Json {
    json!({
        "target": d.name(t.target),
        "values": t.labels.iter().zip(&t.probs).zip(&t.std_errors)
            .map(|((l, p), se)| json!({"value": l, "p": p, "se": se}))
            .collect::<Vec<_>>(),
    })
}

fn diagnostics_text(set: &SampleSet) -> String {
    let dg = &set.diagnostics;
    let updates: u64 = dg.gibbs_updates.iter().sum();
    let moves: u64 = dg.gibbs_moves.iter().sum();
    let mut out = format!(
        "forward attempts {}, rejections {} (rate {:.4}); Gibbs updates {}, moves {}\n",
        dg.forward_attempts,
        dg.rejections,
        dg.rejection_rate(),
        updates,
        moves
    );
    for w in &set.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn diagnostics_json(d: &InfluenceDiagram, set: &SampleSet) -> Json {
    let dg = &set.diagnostics;
    let mut gibbs = Map::new();
    for id in d.ids() {
        if dg.gibbs_updates[id.0] > 0 {
            gibbs.insert(
                d.name(id).to_string(),
                json!({"updates": dg.gibbs_updates[id.0], "moves": dg.gibbs_moves[id.0]}),
            );
        }
    }
    json!({
        "forward_attempts": dg.forward_attempts,
        "rejections": dg.rejections,
        "rejection_rate": dg.rejection_rate(),
        "gibbs": gibbs,
        "reachability_ok": set.reachability_ok,
    })
}

fn history_json(d: &InfluenceDiagram, cfg: &Configuration) -> Json {
    let mut line = Map::new();
    for id in d.ids() {
        let v = match cfg.get(id) {
            None => Json::Null,
            Some(Value::State(_)) => Json::String(d.format_value(id, cfg.get(id).expect("set"))),
            Some(Value::Real(x)) => json!(x),
            Some(Value::Vector(v)) => json!(v),
        };
        line.insert(d.name(id).to_string(), v);
    }
    Json::Object(line)
}

fn write_histories(d: &InfluenceDiagram, set: &SampleSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for h in &set.histories {
        out.push_str(&serde_json::to_string(&history_json(d, h))?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

const CONSTANT_NOTE: &str = "note: the two-phase time-to-fever density uses the convolution constant \
rate0*rate1/(rate1-rate0) (Erlang when the rates are equal); with the rate sum in the denominator \
the density would not integrate to 1";

fn infection_demo(args: &InfectionArgs, seed: u64) -> Result<Report> {
    let params = match &args.params {
        Some(path) => InfectionParams::from_json(&fs::read_to_string(path)?)?,
        None => InfectionParams::default(),
    };
    eprintln!("{CONSTANT_NOTE}");
    let d = build_infection_model(&params)?;
    let mut evidence = Evidence::new();
    evidence.observe_real(&d, "T_obs", args.t_obs)?;
    if let Some(path) = &args.write_model {
        fs::write(path, ModelFile::from_diagram(&d, &evidence).to_json())?;
    }
    let x0 = d.id("X0")?;
    let config = SamplerConfig {
        m: args.sampler.m,
        h: args.sampler.h,
        seed,
        max_rejections: args.sampler.max_rejections,
        ..Default::default()
    };
    let est = estimator(args.estimator);
    let (report, set) = query(&d, &evidence, &config, &[x0], est)?;
    let table = &report.tables[0];
    let mut text = format!(
        "T_obs = {} months; {} estimator, m={} h={} seed={}\n",
        args.t_obs,
        estimator_name(est),
        config.m,
        config.h,
        seed
    );
    text.push_str(&table_text(&d, table));
    let virus_a = table.prob("2").unwrap_or(0.0);
    let _ = writeln!(text, "P(exposed to virus A | T_obs) = P(X0=2 | T_obs) = {virus_a:.6}");
    text.push_str(&diagnostics_text(&set));
    let mut json = json!({
        "command": "demo infection",
        "seed": seed,
        "t_obs": args.t_obs,
        "m": config.m,
        "h": config.h,
        "estimator": estimator_name(est),
        "table": table_json(&d, table),
        "diagnostics": diagnostics_json(&d, &set),
        "warnings": report.warnings,
        "notes": [CONSTANT_NOTE],
    });
    if args.check {
        let exact = infection_posterior_oracle(&params, args.t_obs)?;
        let mut rows = Vec::new();
        let mut all_ok = true;
        text.push_str("check against exact posterior\n  value   exact     estimate  |diff|/se\n");
        for (k, label) in table.labels.iter().enumerate() {
            let diff = (table.probs[k] - exact[k]).abs();
            let se = table.std_errors[k];
            let ok = diff <= 3.0 * se || diff < 1e-9;
            all_ok &= ok;
            let z = if se > 0.0 { diff / se } else { 0.0 };
            let _ = writeln!(
                text,
                "  {label:<6}  {:.6}  {:.6}  {z:.2}{}",
                exact[k],
                table.probs[k],
                if ok { "" } else { "  DISCREPANCY" }
            );
            rows.push(json!({"value": label, "exact": exact[k], "estimate": table.probs[k], "ok": ok}));
        }
        let _ = writeln!(text, "check: {}", if all_ok { "ok (all within 3 SE)" } else { "discrepancies found" });
        json["check"] = json!({"ok": all_ok, "values": rows});
    }
    Ok(Report { text, json })
}

fn toxicity_demo(args: &ToxicityArgs, seed: u64) -> Result<Report> {
    let params = match &args.params {
        Some(path) => {
            let p: ToxicityParams = serde_json::from_str(&fs::read_to_string(path)?)?;
            p.check()?;
            p
        }
        None => ToxicityParams::default(),
    };
    let history = match &args.history {
        Some(path) => serde_json::from_str::<History>(&fs::read_to_string(path)?)?,
        None => {
            let doses: Vec<u8> = (0..params.horizon / 2).map(|i| (i % 2 == 0) as u8).collect();
            simulate_history(&params, params.alpha_mean, &doses, seed)
        }
    };
    let k = history.steps();
    let horizon = args.horizon.unwrap_or(params.horizon.max(k));
    if horizon < k {
        return Err(Error::Argument(format!("horizon {horizon} is shorter than the {k}-step history")));
    }
    let remaining = horizon - k;
    let plans: Vec<Vec<u8>> = match &args.plan {
        Some(path) => match serde_json::from_str::<PlanFile>(&fs::read_to_string(path)?)? {
            PlanFile::One(p) => vec![p],
            PlanFile::Many(ps) => ps,
        },
        None => vec![vec![1; remaining], vec![0; remaining]],
    };
    for p in &plans {
        if p.len() != remaining {
            return Err(Error::Argument(format!(
                "plan has {} steps; horizon {horizon} minus history {k} needs {remaining}",
                p.len()
            )));
        }
        if p.iter().any(|&d| d > 1) {
            return Err(Error::Argument("plan doses must be 0 or 1".into()));
        }
    }

    let post = learn_alpha_posterior(&params, &history, args.m, seed)?;
    let belief = AlphaBelief {
        mean: post.sample_mean,
        cov: post.sample_cov,
    };
    let r_k = *history.dysfunction.last().expect("checked");
    let mut text = format!("history: {k} steps, r_k = {r_k:.4}; seed={seed}\nalpha posterior (sampler, m={})\n", args.m);
    for i in 0..3 {
        let _ = writeln!(
            text,
            "  alpha{i}: mean {:.5} sd {:.5}   (closed form {:.5} sd {:.5})",
            post.sample_mean[i],
            post.sample_cov[i][i].sqrt(),
            post.exact.mean[i],
            post.exact.cov[i][i].sqrt()
        );
    }
    let mut forecasts = Vec::new();
    for (n, plan) in plans.iter().enumerate() {
        let f = predict_survival(&params, &belief, r_k, plan, args.rollouts, seed.wrapping_add(1))?;
        let plan_str: String = plan.iter().map(|d| char::from(b'0' + d)).collect();
        let _ = writeln!(text, "plan {n} [{plan_str}]: P(alive) per step");
        for (j, (p, se)) in f.alive.iter().zip(&f.std_errors).enumerate() {
            let _ = writeln!(text, "  step {:>3}  {p:.5} ± {se:.5}", k + j + 1);
        }
        if f.clamped > 0 {
            let _ = writeln!(text, "  {} rollout levels clamped into (0, w)", f.clamped);
        }
        forecasts.push(json!({
            "plan": plan,
            "alive": f.alive,
            "se": f.std_errors,
            "clamped": f.clamped,
        }));
    }
    let mut json = json!({
        "command": "demo toxicity",
        "seed": seed,
        "history_steps": k,
        "horizon": horizon,
        "alpha": {
            "sample_mean": post.sample_mean,
            "sample_cov": post.sample_cov,
            "exact_mean": post.exact.mean,
            "exact_cov": post.exact.cov,
        },
        "forecasts": forecasts,
    });
    if args.check {
        let m = post.samples.len() as f64;
        let mean_ok: Vec<bool> = (0..3)
            .map(|i| (post.sample_mean[i] - post.exact.mean[i]).abs() <= 3.0 * (post.sample_cov[i][i] / m).sqrt())
            .collect();
        let frob = |c: &[[f64; 3]; 3]| c.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let mut diff = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                diff[i][j] = post.sample_cov[i][j] - post.exact.cov[i][j];
            }
        }
        let rel = frob(&diff) / frob(&post.exact.cov);
        let ok = mean_ok.iter().all(|&b| b) && rel < 0.1;
        let _ = writeln!(
            text,
            "check: means within 3 MC SE {:?}; covariance relative Frobenius error {rel:.4}; {}",
            mean_ok,
            if ok { "ok" } else { "discrepancies found" }
        );
        json["check"] = json!({"ok": ok, "mean_within_3se": mean_ok, "cov_relative_error": rel});
    }
    Ok(Report { text, json })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["tempid", "frobnicate"]), 1);
        assert_eq!(run(["tempid", "validate"]), 1);
        assert_eq!(run(["tempid", "--bogus", "validate", "x.json"]), 1);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["tempid", "--help"]), 0);
    }

    #[test]
    fn missing_file_is_usage_error() {
        assert_eq!(run(["tempid", "validate", "/nonexistent/model.json"]), 1);
    }
}
