//! `antago`: run, verify and sweep antagonistic bellow actuator scenarios.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use antago_core::diagnostics::diagnostics;
use antago_core::presets::{self, preset_dir_from_env, PRESET_DIR_ENV};
use antago_core::scenario;
use antago_core::simulation::{simulate, ScenarioConfig};
use antago_core::solver::Method;
use antago_core::sweep::{linspace, sweep, RunStatus};
use antago_core::telemetry;
use antago_core::verify::{run_suite, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "antago", version, about = "Antagonistic bellow actuator simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trajectory as CSV.
    Run(RunArgs),
    /// Run numerical checks of the model, observer and controller.
    Verify(VerifyArgs),
    /// Vary one parameter of a scenario and tabulate the outcome.
    Sweep(SweepArgs),
    /// List, show or export the preset scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// Relative tolerance of the adaptive integrator.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Absolute tolerance of the adaptive integrator.
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Integration method.
    #[arg(long, value_parser = ["rk23", "rk4"])]
    method: Option<String>,
}

impl SolverArgs {
    fn method(&self) -> Option<Method> {
        self.method.as_deref().map(|m| m.parse().expect("restricted by clap"))
    }

    fn apply(&self, sc: &mut ScenarioConfig) {
        if let Some(m) = self.method() {
            sc.solver.method = m;
        }
        if let Some(v) = self.rel_tol {
            sc.solver.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            sc.solver.abs_tol = v;
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    file: Option<PathBuf>,
    /// Preset name instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<(String, ScenarioConfig)> {
        match (&self.file, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let sc = scenario::parse(&text).with_context(|| format!("in {}", path.display()))?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
                Ok((stem.to_string(), sc))
            }
            (None, Some(name)) => {
                let sc = presets::load_preset(name, preset_dir_from_env().as_deref())?;
                Ok((name.clone(), sc))
            }
            (None, None) => bail!("give a scenario file or --preset"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output CSV; defaults to `<name>.csv`. The summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for symmetry with `verify`; runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run: matching, observer-decay, lyapunov, gradients, gains or all.
    #[arg(default_value = "all")]
    suites: Vec<String>,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Parameter to vary, named as in scenario files.
    parameter: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, requires_all = ["to", "count"], conflicts_with = "values")]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', required_unless_present = "from")]
    values: Option<Vec<f64>>,
    /// Only check gains; do not simulate.
    #[arg(long)]
    no_sim: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for symmetry with `verify`; sweeps are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Subcommand)]
enum PresetAction {
    /// Print the available preset names.
    List,
    /// Print a preset file.
    Show { name: String },
    /// Write the built-in presets into a directory.
    Export { dir: PathBuf },
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.toml")
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let (name, mut sc) = args.scenario.load()?;
    args.solver.apply(&mut sc);
    let out = args.out.unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    match simulate(&sc) {
        Ok(result) => {
            write_atomic(&out, telemetry::to_csv_string(&result.record)?.as_bytes())?;
            let d = diagnostics(&result.record, &sc.gains, &sc.params)?;
            let summary = telemetry::summary_toml(&d, &result.stability);
            write_atomic(&summary_path(&out), summary.as_bytes())?;
            println!("wrote {} ({} samples)", out.display(), result.record.len());
            println!("final x        {:.6e} m (target {:.6e} m)", d.final_x, d.x_star);
            println!("position error {:.3e} m", d.position_error);
            println!("final F_tilde  {:.6e} N", d.final_f_tilde);
            println!("final zeta     {:.3e} N", d.final_zeta);
            println!("max Psi rise   {:.3e} J (max Psi {:.3e} J)", d.max_psi_increment, d.max_psi);
            match d.settle_time {
                Some(t) => println!("settle time    {t:.3} s"),
                None => println!("settle time    not settled"),
            }
            if !result.stability.positive_definite {
                eprintln!("warning: gain conditions not satisfied (margin {:.3e})", result.stability.margin);
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            if let Some(partial) = e.partial() {
                write_atomic(&out, telemetry::to_csv_string(partial)?.as_bytes())?;
                eprintln!("partial trajectory written to {} ({} samples)", out.display(), partial.len());
            }
            Err(e.into())
        }
    }
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>> {
    let mut suites = Vec::new();
    for name in names {
        if name == "all" {
            suites.extend(Suite::ALL);
        } else {
            suites.push(name.parse().map_err(anyhow::Error::msg)?);
        }
    }
    suites.dedup();
    Ok(suites)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let opts = VerifyOptions {
        seed: args.seed,
        method: args.solver.method(),
        rel_tol: args.solver.rel_tol,
        abs_tol: args.solver.abs_tol,
        ..VerifyOptions::default()
    };
    let mut text = String::new();
    let mut ok = true;
    for suite in parse_suites(&args.suites)? {
        let report = run_suite(suite, &opts)?;
        ok &= report.passed();
        let block = report.to_string();
        print!("{block}");
        text.push_str(&block);
    }
    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes())?;
    }
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let (_, mut base) = args.scenario.load()?;
    args.solver.apply(&mut base);
    let values = match (&args.values, args.from, args.to, args.count) {
        (Some(v), ..) => v.clone(),
        (None, Some(lo), Some(hi), Some(n)) => linspace(lo, hi, n),
        _ => bail!("give --values or --from/--to/--count"),
    };
    if values.is_empty() {
        bail!("no values to sweep");
    }
    let rows = sweep(&base, &args.parameter, &values, !args.no_sim)?;
    let mut buf = Vec::new();
    telemetry::write_rows(&rows, &mut buf)?;
    match &args.out {
        Some(out) => write_atomic(out, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    let failed = rows
        .iter()
        .filter(|r| matches!(r.status, RunStatus::DomainExit | RunStatus::StepUnderflow))
        .count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", rows.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_presets(action: PresetAction) -> Result<ExitCode> {
    let dir = preset_dir_from_env();
    match action {
        PresetAction::List => {
            let names = presets::list_presets(dir.as_deref())
                .with_context(|| format!("listing presets (from {PRESET_DIR_ENV})"))?;
            for name in names {
                println!("{name}");
            }
        }
        PresetAction::Show { name } => print!("{}", presets::preset_text(&name, dir.as_deref())?),
        PresetAction::Export { dir } => {
            for path in presets::export_presets(&dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Presets { action } => cmd_presets(action),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
