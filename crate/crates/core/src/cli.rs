//! The `vidloop` command line.
//!
//! Settings come from built-in defaults, then the `--config` file, then
//! flags; later sources win. Exit codes: 0 when the command completed
//! (a run that hit its iteration cap still completed), 1 for usage and
//! configuration errors, 2 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{emit_report, load_runs};
use crate::config::{BackendKind, Config, GeneratorKind};
use crate::sandbox::run_sandbox;
use crate::workflow::{execute_run, load_manifest, run_batch, ExitStatus, RunInputs, RunLog};

#[derive(Debug, Parser)]
#[command(name = "vidloop", version, about = "Design, generate and redesign text-to-video layouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the loop for one prompt.
    Run(RunArgs),
    /// Run every entry of a JSON manifest.
    Batch(BatchArgs),
    /// Guidance descent and gradient checks on the toy attention model.
    Sandbox(SandboxArgs),
    /// Corrected-ratio and correction-count tables from run logs.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Sim,
    Remote,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Agent backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Video generator.
    #[arg(long, value_enum)]
    generator: Option<GeneratorArg>,
    /// Chat-completions URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Base URL of a remote generator.
    #[arg(long)]
    generator_endpoint: Option<String>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<u32>,
    /// Simulator seed, overriding the scenario's.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Prompt; defaults to the scenario's.
    #[arg(long)]
    prompt: Option<String>,
    /// JSONL replies for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Simulator scenario JSON.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Intent JSON for the oracle backend.
    #[arg(long)]
    intent: Option<PathBuf>,
    /// Run directory for the log (and frames, with `loop.save_frames`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// JSON manifest: `{"runs": [{"name", "prompt", "scenario", "intent", "script", "subset"}]}`.
    manifest: PathBuf,
    /// Batch directory; one subdirectory per run plus `batch.json`.
    #[arg(long)]
    out: PathBuf,
    /// Concurrent runs.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SandboxArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of descent trials.
    #[arg(long)]
    seeds: Option<u64>,
    /// Latent step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of gradient-check instances.
    #[arg(long)]
    instances: Option<u64>,
    /// Directory for `trajectories.csv` and `gradient_check.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run or batch directories, searched for run logs.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Directory for the CSV tables and summary.
    #[arg(long)]
    out: PathBuf,
}

const OK: i32 = 0;
const USAGE: i32 = 1;
const RUNTIME: i32 = 2;

fn load_config(path: Option<&Path>) -> Result<Config, crate::Error> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn apply_common(cfg: &mut Config, c: &Common) -> Result<(), crate::Error> {
    if let Some(b) = c.backend {
        cfg.chat.backend = match b {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Oracle => BackendKind::Oracle,
        };
    }
    if let Some(g) = c.generator {
        cfg.generator.kind = match g {
            GeneratorArg::Sim => GeneratorKind::Sim,
            GeneratorArg::Remote => GeneratorKind::Remote,
        };
    }
    if let Some(e) = &c.endpoint {
        cfg.chat.endpoint = Some(e.clone());
    }
    if let Some(e) = &c.generator_endpoint {
        cfg.generator.endpoint = Some(e.clone());
    }
    if let Some(m) = c.max_iters {
        cfg.run.max_iterations = m;
    }
    if let Some(s) = c.seed {
        cfg.generator.seed = Some(s);
    }
    cfg.validate()?;
    Ok(())
}

fn code_for(e: &crate::Error) -> i32 {
    if e.is_usage() {
        USAGE
    } else {
        RUNTIME
    }
}

fn describe_exit(exit: &Option<ExitStatus>) -> String {
    match exit {
        Some(ExitStatus::Aligned) => "aligned".into(),
        Some(ExitStatus::MaxIterations) => "max_iterations".into(),
        Some(ExitStatus::Error { reason }) => format!("error ({reason})"),
        None => "incomplete".into(),
    }
}

fn print_run(log: &RunLog, out: &mut dyn Write) -> std::io::Result<()> {
    for r in &log.records {
        let v = &r.verification;
        if v.aligned {
            writeln!(out, "iteration {}: aligned", r.index)?;
            continue;
        }
        let aspects: Vec<String> = v
            .issues
            .iter()
            .map(|i| {
                serde_json::to_value(i.aspect)
                    .ok()
                    .and_then(|a| a.as_str().map(str::to_owned))
                    .unwrap_or_default()
            })
            .collect();
        write!(out, "iteration {}: not aligned [{}]", r.index, aspects.join(", "))?;
        if let Some(route) = r.route {
            write!(out, ", route {} ({})", route.name(), route.label())?;
        }
        if let Some(d) = &r.design {
            let scales: Vec<String> = r
                .emphasized
                .iter()
                .map(|id| format!("{id}->{}", d.scale(*id)))
                .collect();
            write!(out, ", emphasized [{}]", scales.join(", "))?;
        }
        if r.fallback.is_some() {
            write!(out, ", fallback")?;
        }
        writeln!(out)?;
    }
    writeln!(
        out,
        "exit: {} after {} iteration(s)",
        describe_exit(&log.exit),
        log.records.len()
    )
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, crate::Error> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    apply_common(&mut cfg, &a.common)?;
    let inputs = RunInputs {
        prompt: a.prompt,
        scenario: a.scenario,
        intent: a.intent,
        script: a.script,
        ..Default::default()
    };
    let log = execute_run(&cfg, &inputs, a.out.as_deref())?;
    print_run(&log, out)?;
    if let Some(dir) = &a.out {
        writeln!(out, "run directory: {}", dir.display())?;
    }
    Ok(match log.exit {
        Some(ExitStatus::Error { .. }) | None => RUNTIME,
        _ => OK,
    })
}

fn cmd_batch(a: BatchArgs, out: &mut dyn Write) -> Result<i32, crate::Error> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    apply_common(&mut cfg, &a.common)?;
    if let Some(w) = a.workers {
        cfg.batch.workers = w;
        cfg.validate()?;
    }
    let manifest = load_manifest(&a.manifest)?;
    let summary = run_batch(&manifest, &cfg, Some(&a.out), cfg.batch.workers)?;
    let mut errors = 0;
    for o in &summary.outcomes {
        if matches!(o.exit, ExitStatus::Error { .. }) {
            errors += 1;
        }
        writeln!(
            out,
            "{}: {} after {} iteration(s)",
            o.name,
            describe_exit(&Some(o.exit.clone())),
            o.iterations
        )?;
    }
    writeln!(
        out,
        "{} run(s), {errors} error(s); manifest at {}",
        summary.outcomes.len(),
        a.out.join("batch.json").display()
    )?;
    Ok(OK)
}

fn cmd_sandbox(a: SandboxArgs, out: &mut dyn Write) -> Result<i32, crate::Error> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seeds {
        cfg.sandbox.seeds = s;
    }
    if let Some(alpha) = a.alpha {
        cfg.sandbox.schedule.alpha = alpha;
    }
    if let Some(n) = a.instances {
        cfg.sandbox.gradient_instances = n;
    }
    cfg.validate()?;
    let r = run_sandbox(&cfg.sandbox, a.out.as_deref())?;
    writeln!(
        out,
        "descent: {}/{} trials non-increasing ({:.6})",
        r.non_increasing,
        r.trials,
        r.descent_rate()
    )?;
    writeln!(
        out,
        "gradient check: {}/{} instances within {:e} (pass rate {:.6}, worst relative error {:.3e})",
        r.gradient_passed,
        r.gradient_instances,
        cfg.sandbox.fd_tolerance,
        r.gradient_pass_rate(),
        r.worst_rel_error
    )?;
    if let Some(dir) = &a.out {
        writeln!(out, "tables in {}", dir.display())?;
    }
    Ok(OK)
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<i32, crate::Error> {
    let runs = load_runs(&a.dirs)?;
    let report = emit_report(&runs, &a.out)?;
    write!(out, "{}", report.summary)?;
    writeln!(out, "tables in {}", a.out.display())?;
    Ok(OK)
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Batch(a) => cmd_batch(a, out),
        Command::Sandbox(a) => cmd_sandbox(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            code_for(&e)
        }
    }
}
