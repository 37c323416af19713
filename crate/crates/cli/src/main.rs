//! `necc`: requirement wizard, generation loop, evaluation, reports and
//! deployment scripts.
//!
//! Exit codes: 0 success, 1 usage, 2 infeasible requirements or exhausted
//! loop, 3 backend unavailable.

mod deploy;
mod transport;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use necc::cca::{extract_profile, BaseCca, FaultFlag, FaultSet, PROFILE_BEGIN};
use necc::chat::{ChatClient, Exchange, ReplayClient};
use necc::evaluator::{Backend, EvalError, Evaluator};
use necc::prompting::PromptMode;
use necc::refinery::{
    run_loop, Candidate, ExchangeObserver, FaultPlan, LlmRefiner, LoopError, PriceTable, ReferenceRefiner, Refiner,
    RefinerBackend, RefinerConfig, RunHistory, RunStatus,
};
use necc::reporting::{cdf_tsv, history_tsv, measurements_tsv, pool_curve_tsv, pool_size_curve, score_cdf};
use necc::requirements::{
    build_requirements, parse_streaming_spec, parse_streaming_spec_with_llm, HomeNetwork, RequirementError,
    DEFAULT_SHARE_FRACTION,
};
use necc::run::{candidate_json, candidate_stem, read_candidate, write_run, RequirementFile, RunManifest};

use transport::{CurlClient, DEFAULT_URL};

#[derive(Parser, Debug)]
#[command(name = "necc", version, about = "Customize TCP congestion control to streaming requirements")]
struct Cli {
    /// Seed for scenario randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Candidate generator.
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Reference)]
    backend: BackendArg,
    #[arg(long, global = true)]
    pool_size: Option<u32>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<u32>,
    /// Write the initial prompt and every feedback turn into the run directory.
    #[arg(long, global = true)]
    dump_prompts: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Reference,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalBackendArg {
    Simulated,
    Native,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Cdf,
    PoolCurve,
    History,
    Measurements,
}

#[derive(Args, Debug)]
struct LlmArgs {
    /// Model identifier sent to the chat endpoint and used for pricing.
    #[arg(long)]
    model: Option<String>,
    /// Chat-completion endpoint; the key is read from NECC_API_KEY.
    #[arg(long, default_value = DEFAULT_URL)]
    llm_url: String,
    /// Serve responses from a recorded fixture instead of the network.
    #[arg(long)]
    llm_replay: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_enum, default_value_t = EvalBackendArg::Simulated)]
    eval_backend: EvalBackendArg,
    /// Extra include directory for the native compiler.
    #[arg(long = "include")]
    include_dirs: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a streaming description and upload speed into a requirement file.
    Model {
        /// Streaming description, e.g. "2K resolution 60fps streaming".
        #[arg(long)]
        text: String,
        /// Uplink speed in Mbps.
        #[arg(long)]
        upload: f64,
        /// Fraction of the uplink the stream may use.
        #[arg(long, default_value_t = DEFAULT_SHARE_FRACTION)]
        share: f64,
        #[arg(long, default_value = "requirements.toml")]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Generate, evaluate and refine candidates until one satisfies every requirement.
    Generate {
        #[arg(long)]
        requirements: PathBuf,
        #[arg(long, value_parser = parse_base)]
        base: BaseCca,
        /// Parent of the per-run directory.
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Fault injected into one initial candidate: `INDEX:FLAG[,FLAG]`.
        #[arg(long = "fault", value_parser = parse_fault)]
        faults: Vec<(u32, FaultSet)>,
        /// Fault injected into every initial candidate.
        #[arg(long = "fault-all", value_parser = parse_flag, value_delimiter = ',')]
        fault_all: Vec<FaultFlag>,
        /// Refinement cannot remove injected faults.
        #[arg(long)]
        persistent_faults: bool,
        #[arg(long, value_parser = parse_prompt_mode, default_value = "cot")]
        prompt_mode: PromptMode,
        /// TOML price table replacing the built-in one.
        #[arg(long)]
        price_table: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Score one candidate program against a requirement file.
    Evaluate {
        #[arg(long)]
        requirements: PathBuf,
        /// A `.bpf.c` source or a candidate `.json`.
        #[arg(long)]
        candidate: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Print a table from a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = Table::PoolCurve)]
        table: Table,
    },
    /// Emit the installation script for a candidate scoring 100.
    Deploy {
        /// A candidate `.json` or a run directory (its best candidate).
        #[arg(long)]
        candidate: PathBuf,
        /// Write the script here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_base(s: &str) -> Result<BaseCca, String> {
    s.parse().map_err(|e: necc::cca::CcaError| e.to_string())
}

fn parse_flag(s: &str) -> Result<FaultFlag, String> {
    s.parse().map_err(|e: necc::cca::ProfileError| e.to_string())
}

fn parse_prompt_mode(s: &str) -> Result<PromptMode, String> {
    s.parse()
}

fn parse_fault(s: &str) -> Result<(u32, FaultSet), String> {
    let (idx, flags) = s.split_once(':').ok_or_else(|| format!("expected INDEX:FLAG[,FLAG], got `{s}`"))?;
    let idx = idx.trim().parse().map_err(|_| format!("bad candidate index `{idx}`"))?;
    let flags = flags.split(',').map(parse_flag).collect::<Result<FaultSet, _>>()?;
    Ok((idx, flags))
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Infeasible(String),
    Exhausted,
    Backend(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infeasible(_) | Failure::Exhausted => 2,
            Failure::Backend(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Infeasible(m) => eprintln!("{m}"),
                Failure::Exhausted => eprintln!("no candidate reached 100 within the iteration budget"),
                Failure::Backend(m) => eprintln!("backend unavailable: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = refiner_config(&cli);
    match cli.command {
        Command::Model { ref text, upload, share, ref out, ref llm } => cmd_model(&cli, &cfg, text, upload, share, out, llm),
        Command::Generate {
            ref requirements,
            base,
            ref out_dir,
            ref faults,
            ref fault_all,
            persistent_faults,
            prompt_mode,
            ref price_table,
            ref llm,
            ref eval,
        } => {
            let mut cfg = cfg;
            cfg.prompt_mode = prompt_mode;
            if let Some(m) = &llm.model {
                cfg.model_id = m.clone();
            }
            cfg.fault_plan = FaultPlan {
                every: fault_all.iter().copied().collect(),
                per_candidate: faults.iter().cloned().collect(),
                persistent: persistent_faults,
            };
            cmd_generate(&cli, cfg, requirements, base, out_dir, price_table.as_deref(), llm, eval)
        }
        Command::Evaluate { ref requirements, ref candidate, ref out, ref eval } => {
            cmd_evaluate(cli.seed, requirements, candidate, out.as_deref(), eval)
        }
        Command::Report { ref run, table } => cmd_report(run, table),
        Command::Deploy { ref candidate, ref out } => cmd_deploy(candidate, out.as_deref()),
    }
}

fn refiner_config(cli: &Cli) -> RefinerConfig {
    let d = RefinerConfig::default();
    RefinerConfig {
        backend: match cli.backend {
            BackendArg::Reference => RefinerBackend::Reference,
            BackendArg::Llm => RefinerBackend::Llm,
        },
        temperature: cli.temperature.unwrap_or(d.temperature),
        pool_size: cli.pool_size.unwrap_or(d.pool_size),
        max_iterations: cli.max_iterations.unwrap_or(d.max_iterations),
        ..d
    }
}

fn chat_client(llm: &LlmArgs) -> Result<Box<dyn ChatClient>, Failure> {
    match &llm.llm_replay {
        Some(path) => {
            let exchanges = ReplayClient::load_fixture(path).map_err(|e| Failure::Usage(anyhow::anyhow!("{}: {e}", path.display())))?;
            Ok(Box::new(ReplayClient::from_exchanges(exchanges)))
        }
        None => Ok(Box::new(CurlClient::from_env(&llm.llm_url).map_err(Failure::Backend)?)),
    }
}

fn cmd_model(cli: &Cli, cfg: &RefinerConfig, text: &str, upload: f64, share: f64, out: &Path, llm: &LlmArgs) -> Outcome {
    let spec = match cli.backend {
        BackendArg::Reference => parse_streaming_spec(text),
        BackendArg::Llm => {
            let client = chat_client(llm)?;
            let model = llm.model.as_deref().unwrap_or(&cfg.model_id);
            parse_streaming_spec_with_llm(client.as_ref(), model, cfg.temperature, text)
        }
    }
    .map_err(|e| Failure::Usage(e.into()))?;
    let network = HomeNetwork::with_share(upload, share).map_err(|e| Failure::Usage(e.into()))?;
    let requirements = match build_requirements(&spec, &network) {
        Ok(r) => r,
        Err(RequirementError::InfeasibleRequirements { min_mbps, max_mbps }) => {
            return Err(Failure::Infeasible(format!(
                "{}\n(R1 {min_mbps} Mbps > R2 {max_mbps} Mbps)",
                RequirementError::InfeasibleRequirements { min_mbps, max_mbps }
            )))
        }
        Err(e) => return Err(Failure::Usage(e.into())),
    };
    if spec.assumed_default {
        println!("note: no resolution or bitrate recognised; assuming HD");
    }
    println!("R1 minimum throughput: {} Mbps", requirements.r1_min_throughput_mbps);
    println!("R2 maximum throughput: {} Mbps", requirements.r2_max_throughput_mbps);
    println!("R3 loss threshold: {}%", requirements.r3_loss_threshold * 100.0);
    let file = RequirementFile { streaming: Some(text.to_string()), requirements, network };
    std::fs::write(out, file.to_text()).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn read_requirements(path: &Path) -> Result<RequirementFile, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RequirementFile::from_text(&text).map_err(|m| {
        if m.starts_with("infeasible") {
            Failure::Infeasible(format!("{}: {m}", path.display()))
        } else {
            Failure::Usage(anyhow::anyhow!("{}: {m}", path.display()))
        }
    })
}

fn evaluator(file: &RequirementFile, seed: u64, eval: &EvalArgs) -> Evaluator {
    let mut ev = Evaluator::new(file.requirements, &file.network, seed).with_backend(match eval.eval_backend {
        EvalBackendArg::Simulated => Backend::Simulated,
        EvalBackendArg::Native => Backend::Native,
    });
    ev.native.include_dirs = eval.include_dirs.clone();
    ev
}

/// Persists every exchange under `exchanges/` as it happens.
struct ExchangeLog {
    dir: PathBuf,
    written: Mutex<Vec<String>>,
}

impl ExchangeObserver for ExchangeLog {
    fn record(&self, candidate_id: u32, exchange: &Exchange) -> Result<(), String> {
        let rel = format!("exchanges/{}.json", candidate_stem(candidate_id));
        let path = self.dir.join(&rel);
        std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| e.to_string())?;
        let mut body = serde_json::to_string_pretty(exchange).map_err(|e| e.to_string())?;
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
        self.written.lock().unwrap().push(rel);
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    cli: &Cli,
    cfg: RefinerConfig,
    requirements: &Path,
    base: BaseCca,
    out_dir: &Path,
    price_table: Option<&Path>,
    llm: &LlmArgs,
    eval: &EvalArgs,
) -> Outcome {
    let file = read_requirements(requirements)?;
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    let prices = match price_table {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PriceTable::from_text(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("{}: {e}", p.display())))?
        }
        None => PriceTable::builtin(),
    };
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let dir = out_dir.join(format!("{stamp}-seed{}", cli.seed));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ev = evaluator(&file, cli.seed, eval);
    let log = ExchangeLog { dir: dir.clone(), written: Mutex::new(Vec::new()) };

    let client;
    let llm_refiner;
    let refiner: &dyn Refiner = match cfg.backend {
        RefinerBackend::Reference => &ReferenceRefiner,
        RefinerBackend::Llm => {
            client = chat_client(llm)?;
            llm_refiner = LlmRefiner::new(client.as_ref(), prices).with_observer(&log);
            &llm_refiner
        }
    };

    let mut manifest = RunManifest {
        requirements: file.requirements,
        network: file.network,
        base_cca: base,
        config: cfg.clone(),
        eval_backend: ev.backend,
        seed: cli.seed,
        status: None,
        best_candidate: None,
        best_score: None,
        error: None,
        artifacts: Vec::new(),
    };
    let result = run_loop(&file.requirements, base, &cfg, refiner, &ev);
    let extra = log.written.lock().unwrap().clone();
    let write = |manifest: &mut RunManifest, candidates: &[Candidate], history: &RunHistory, prompt| {
        write_run(&dir, manifest, candidates, history, prompt, &extra).with_context(|| format!("writing {}", dir.display()))
    };
    match result {
        Ok(outcome) => {
            let status = outcome.history.status.expect("finished loop has a status");
            manifest.status = Some(status);
            manifest.best_candidate = Some(outcome.best.id);
            manifest.best_score = outcome.best.score();
            let prompt = cli.dump_prompts.then_some(&outcome.prompt);
            write(&mut manifest, &outcome.candidates, &outcome.history, prompt)?;
            println!("run directory: {}", dir.display());
            println!("best candidate: {} (score {})", candidate_stem(outcome.best.id), outcome.best.score().unwrap_or(0));
            println!("best-score trajectory: {:?}", outcome.history.best_scores());
            match status {
                RunStatus::Succeeded => Ok(()),
                RunStatus::Exhausted => Err(Failure::Exhausted),
            }
        }
        Err(LoopError::RefinerUnavailable { message, history, candidates }) => {
            manifest.error = Some(message.clone());
            write(&mut manifest, &candidates, &history, None)?;
            println!("partial run written to {}", dir.display());
            Err(Failure::Backend(message))
        }
        Err(LoopError::Eval(EvalError::BackendUnavailable(m))) => Err(Failure::Backend(m)),
        Err(e) => Err(Failure::Usage(e.into())),
    }
}

fn load_candidate(path: &Path) -> Result<Candidate, Failure> {
    if path.extension().is_some_and(|e| e == "json") {
        let mut c = read_candidate(path).map_err(|e| Failure::Usage(e.into()))?;
        c.report = None;
        return Ok(c);
    }
    let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (control_profile, format_error) = match extract_profile(&source) {
        Ok(Some(p)) => (Some(p), None),
        Ok(None) => (None, Some(format!("{} has no `{PROFILE_BEGIN}` block", path.display()))),
        Err(e) => (None, Some(format!("{}: {e}", path.display()))),
    };
    Ok(Candidate {
        id: 0,
        iteration_born: 0,
        parent_id: None,
        control_profile,
        source_text: source,
        format_error,
        report: None,
        cost: Default::default(),
        conversation: Vec::new(),
    })
}

fn cmd_evaluate(seed: u64, requirements: &Path, candidate: &Path, out: Option<&Path>, eval: &EvalArgs) -> Outcome {
    let file = read_requirements(requirements)?;
    let mut c = load_candidate(candidate)?;
    let report = evaluator(&file, seed, eval).evaluate(&c).map_err(|e| match e {
        EvalError::BackendUnavailable(m) => Failure::Backend(m),
        e => Failure::Usage(e.into()),
    })?;
    println!("score: {}", report.score);
    let text = report.feedback_text();
    if !text.is_empty() {
        println!("{text}");
    }
    if let Some(out) = out {
        c.report = Some(report);
        std::fs::write(out, candidate_json(&c)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn read_history(path: &Path) -> Result<RunHistory, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn run_candidates(run: &Path) -> Result<Vec<Candidate>, Failure> {
    let dir = run.join("candidates");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_candidate(p).map_err(|e| Failure::Usage(e.into()))).collect()
}

fn cmd_report(run: &Path, table: Table) -> Outcome {
    let history = read_history(&run.join("history.json"))?;
    let initial = history.initial();
    let text = match table {
        Table::Cdf => {
            let scores: Vec<u32> = initial.iter().map(|c| c.score).collect();
            cdf_tsv(&score_cdf(&scores).map_err(|e| Failure::Usage(e.into()))?)
        }
        Table::PoolCurve => {
            pool_curve_tsv(&pool_size_curve(&history, initial.len()).map_err(|e| Failure::Usage(e.into()))?)
        }
        Table::History => history_tsv(&history),
        Table::Measurements => measurements_tsv(&run_candidates(run)?),
    };
    print!("{text}");
    Ok(())
}

fn cmd_deploy(candidate: &Path, out: Option<&Path>) -> Outcome {
    let json = if candidate.is_dir() {
        let manifest = RunManifest::read(&candidate.join("manifest.json")).map_err(|e| Failure::Usage(e.into()))?;
        let id = manifest
            .best_candidate
            .ok_or_else(|| Failure::Usage(anyhow::anyhow!("{} records no best candidate", candidate.display())))?;
        candidate.join("candidates").join(format!("{}.json", candidate_stem(id)))
    } else {
        candidate.to_path_buf()
    };
    if !json.is_file() {
        return Err(Failure::Usage(anyhow::anyhow!("no candidate at {}", json.display())));
    }
    let c = read_candidate(&json).map_err(|e| Failure::Usage(e.into()))?;
    let stem = json.file_stem().and_then(|s| s.to_str()).unwrap_or("candidate");
    let source = json.with_file_name(format!("{stem}.bpf.c"));
    let script =
        deploy::deploy_script(&c, &source.display().to_string()).map_err(|r| Failure::Usage(anyhow::anyhow!("{r}")))?;
    match out {
        Some(p) => {
            std::fs::write(p, script).with_context(|| format!("writing {}", p.display()))?;
            println!("wrote {}", p.display());
        }
        None => print!("{script}"),
    }
    Ok(())
}
