//! `worldsim`: generate scenario datasets, query models, score and report.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{parse_categories, parse_frames, CategoryList, FrameList, Overrides, RunConfig};
use worldsim_core::eval::{
    read_log, render_report, run_eval, score, BiasedClient, EvalJob, HttpClient, MetricsReport, ModelClient,
    OracleClient, RateLimiter, ScriptedClient,
};
use worldsim_core::scenarios::{
    apply_probe, build_suite, generate, generate_dataset, manifest_records, write_artifacts, Manifest,
    MANIFEST_FORMAT_VERSION,
};
use worldsim_core::ProbeVariant;

const EXIT_CONFIG: u8 = 2;
const EXIT_GENERATION: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;
const EXIT_SCORING: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "worldsim", version, about = "Driving world-model scenarios and multimodal model evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed for suite generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Frame counts per grid, e.g. 3,6,9.
    #[arg(long, value_parser = parse_frames)]
    frames: Option<FrameList>,
    /// Comma-separated category subset.
    #[arg(long, value_parser = parse_categories)]
    category: Option<CategoryList>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and render the suite, then write the manifest.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Query a model for every manifest record and append to its response log.
    Eval {
        #[command(flatten)]
        common: Common,
        /// oracle, biased, scripted:<file.jsonl>[#<model tag>], or a client name from the config.
        #[arg(long, default_value = "oracle")]
        model: String,
        /// Manifest to evaluate; defaults to <out>/manifest.json.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Keep the existing log and skip records already answered.
        #[arg(long)]
        resume: bool,
    },
    /// Score response logs and write the report.
    Score {
        #[command(flatten)]
        common: Common,
        /// Response logs; defaults to every log under <out>/responses.
        #[arg(long = "log")]
        logs: Vec<PathBuf>,
        /// Checks logged ground truth against this manifest when given.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report directory; defaults to <out>/report.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Re-render report files from a saved metrics.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/report/metrics.json.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Regenerate one scenario with a counterfactual element added.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Scenario id from the suite, e.g. forward_backward_001.
        #[arg(long)]
        scenario: String,
        /// add_barrier_backward or add_reference_vehicle.
        #[arg(long)]
        probe: String,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen { common }
            | Command::Eval { common, .. }
            | Command::Score { common, .. }
            | Command::Report { common, .. }
            | Command::Probe { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Eval { .. } => "eval",
            Command::Score { .. } => "score",
            Command::Report { .. } => "report",
            Command::Probe { .. } => "probe",
        }
    }
}

/// Error tagged with the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
}

fn write_run_meta(cfg: &RunConfig, command: &str) -> Result<()> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg,
    };
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(format!("run_meta_{command}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.to_json()?).with_context(|| format!("writing {}", path.display()))
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    Ok(Manifest::parse(&text)?)
}

fn cmd_gen(cfg: &RunConfig) -> Result<(), Failure> {
    let specs = build_suite(&cfg.suite_config()).code(EXIT_CONFIG)?;
    let manifest = generate_dataset(&specs, &cfg.constants, &cfg.camera, &cfg.out).code(EXIT_GENERATION)?;
    write_manifest(&manifest, &cfg.out.join("manifest.json")).code(EXIT_GENERATION)?;
    println!(
        "generated {} scenarios, {} manifest records under {}",
        specs.len(),
        manifest.records.len(),
        cfg.out.display()
    );
    Ok(())
}

fn slug(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn make_client(spec: &str, cfg: &RunConfig) -> Result<Box<dyn ModelClient>> {
    Ok(match spec {
        "oracle" => Box::new(OracleClient::new()),
        "biased" => Box::new(BiasedClient::new()),
        s if s.starts_with("scripted:") => {
            let rest = &s["scripted:".len()..];
            let (path, model) = match rest.rsplit_once('#') {
                Some((p, m)) => (p, Some(m)),
                None => (rest, None),
            };
            let client = ScriptedClient::from_jsonl(Path::new(path), model)?;
            if client.is_empty() {
                bail!("script {path} has no responses");
            }
            Box::new(client)
        }
        name => {
            let http = cfg
                .clients
                .get(name)
                .ok_or_else(|| anyhow!("unknown model {name:?}; expected oracle, biased, scripted:<file> or a configured client"))?;
            Box::new(HttpClient::new(http.clone()))
        }
    })
}

fn cmd_eval(cfg: &RunConfig, model: &str, manifest: Option<&Path>, resume: bool) -> Result<(), Failure> {
    let client = make_client(model, cfg).code(EXIT_CONFIG)?;
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("manifest.json"));
    let manifest_data = read_manifest(&manifest_path).code(EXIT_CONFIG)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let dir = cfg.out.join("responses");
    let tag = slug(client.tag());
    let log_path = dir.join(format!("{tag}.jsonl"));
    let errors_path = dir.join(format!("{tag}.errors.jsonl"));
    let limiter = RateLimiter::new(cfg.rate.clone());
    let job = EvalJob {
        manifest: &manifest_data,
        root,
        client: client.as_ref(),
        limiter: &limiter,
        log_path: &log_path,
        errors_path: &errors_path,
        resume,
        overrides: &cfg.prompt,
        workers: cfg.workers(),
    };
    let summary = run_eval(&job).code(EXIT_TRANSPORT)?;
    println!(
        "{}: {} written, {} skipped, {} failed -> {}",
        client.tag(),
        summary.written,
        summary.skipped,
        summary.failed,
        log_path.display()
    );
    if summary.failed > 0 {
        return Err(anyhow!("{} queries failed; see {}", summary.failed, errors_path.display())).code(EXIT_TRANSPORT);
    }
    Ok(())
}

fn default_logs(out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("responses");
    let mut logs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".jsonl") && !name.ends_with(".errors.jsonl")
        })
        .collect();
    logs.sort();
    Ok(logs)
}

fn print_accuracy(metrics: &MetricsReport) {
    for (key, m) in &metrics.cells {
        let probe = key.probe.as_deref().map(|p| format!(" [{p}]")).unwrap_or_default();
        let acc = m.accuracy.value().map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!("{:<16} {:<18}{probe} {acc} ({})", key.model, key.category.as_str(), m.accuracy);
    }
}

fn cmd_score(cfg: &RunConfig, logs: &[PathBuf], manifest: Option<&Path>, report_dir: Option<&Path>) -> Result<(), Failure> {
    let logs = if logs.is_empty() {
        default_logs(&cfg.out).code(EXIT_SCORING)?
    } else {
        logs.to_vec()
    };
    let mut records = Vec::new();
    for log in &logs {
        records.extend(read_log(log).code(EXIT_SCORING)?);
    }
    if let Some(path) = manifest {
        let m = read_manifest(path).code(EXIT_CONFIG)?;
        let truth: std::collections::HashMap<(&str, usize), &str> = m
            .records
            .iter()
            .filter(|r| r.probe.is_none())
            .map(|r| ((r.scenario_id.as_str(), r.frame_count), r.label.as_str()))
            .collect();
        for r in records.iter().filter(|r| r.probe.is_none()) {
            match truth.get(&(r.scenario_id.as_str(), r.frame_count)) {
                Some(t) if *t == r.truth => {}
                Some(t) => {
                    return Err(anyhow!("{}: log truth {} disagrees with manifest {t}", r.scenario_id, r.truth))
                        .code(EXIT_SCORING)
                }
                None => {
                    return Err(anyhow!("{}/{} is not in the manifest", r.scenario_id, r.frame_count))
                        .code(EXIT_SCORING)
                }
            }
        }
    }
    let metrics = score(&records).code(EXIT_SCORING)?;
    let dir = report_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("report"));
    std::fs::create_dir_all(&dir).code(EXIT_SCORING)?;
    let json = serde_json::to_string_pretty(&metrics).code(EXIT_SCORING)? + "\n";
    std::fs::write(dir.join("metrics.json"), json).code(EXIT_SCORING)?;
    render_report(&metrics, &dir).code(EXIT_SCORING)?;
    print_accuracy(&metrics);
    println!("report written to {}", dir.display());
    Ok(())
}

fn cmd_report(cfg: &RunConfig, metrics: Option<&Path>, report_dir: Option<&Path>) -> Result<(), Failure> {
    let path = metrics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out.join("report").join("metrics.json"));
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .code(EXIT_SCORING)?;
    let metrics: MetricsReport = serde_json::from_str(&text).code(EXIT_SCORING)?;
    let dir = report_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    render_report(&metrics, &dir).code(EXIT_SCORING)?;
    print_accuracy(&metrics);
    Ok(())
}

fn cmd_probe(cfg: &RunConfig, scenario: &str, probe: &str) -> Result<(), Failure> {
    let variant: ProbeVariant = serde_json::from_value(serde_json::Value::String(probe.to_string()))
        .map_err(|_| anyhow!("unknown probe {probe:?}; expected add_barrier_backward or add_reference_vehicle"))
        .code(EXIT_CONFIG)?;
    let specs = build_suite(&cfg.suite_config()).code(EXIT_CONFIG)?;
    let spec = specs
        .iter()
        .find(|s| s.id == scenario)
        .ok_or_else(|| anyhow!("scenario {scenario} is not in the configured suite"))
        .code(EXIT_CONFIG)?;
    let (run, truth) = generate(spec, &cfg.constants).code(EXIT_GENERATION)?;
    let probed = apply_probe(spec, &run, variant).code(EXIT_CONFIG)?;
    write_artifacts(spec, &probed, &cfg.camera, &cfg.constants, &cfg.out).code(EXIT_GENERATION)?;
    let manifest_path = cfg.out.join("manifest.json");
    let mut manifest = if manifest_path.exists() {
        read_manifest(&manifest_path).code(EXIT_CONFIG)?
    } else {
        Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            records: Vec::new(),
        }
    };
    manifest
        .records
        .retain(|r| !(r.scenario_id == spec.id && r.probe == Some(variant)));
    let added = manifest_records(spec, &truth, Some(variant));
    for r in &added {
        println!("{} -> {}", r.scenario_id, r.grid_path);
    }
    manifest.records.extend(added);
    write_manifest(&manifest, &manifest_path).code(EXIT_GENERATION)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.command.common().clone();
    let overrides = Overrides {
        seed: common.seed,
        out: common.out,
        frames: common.frames.map(|f| f.0),
        categories: common.category.map(|c| c.0),
    };
    let cfg = RunConfig::load(common.config.as_deref(), &overrides).code(EXIT_CONFIG)?;
    write_run_meta(&cfg, cli.command.name()).code(EXIT_CONFIG)?;
    match &cli.command {
        Command::Gen { .. } => cmd_gen(&cfg),
        Command::Eval {
            model,
            manifest,
            resume,
            ..
        } => cmd_eval(&cfg, model, manifest.as_deref(), *resume),
        Command::Score {
            logs,
            manifest,
            report_dir,
            ..
        } => cmd_score(&cfg, logs, manifest.as_deref(), report_dir.as_deref()),
        Command::Report {
            metrics, report_dir, ..
        } => cmd_report(&cfg, metrics.as_deref(), report_dir.as_deref()),
        Command::Probe { scenario, probe, .. } => cmd_probe(&cfg, scenario, probe),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
