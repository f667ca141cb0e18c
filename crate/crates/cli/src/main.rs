//! `sdd-sim`: run scenarios, verification suites and parameter sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use sdd_core::diagnostics::dissipation_from_trajectory;
use sdd_core::scenario::{self, resolve_key, ScenarioConfig};
use sdd_core::suite::{run_suite, SUITES};
use sdd_core::{solve, write_csv_file, SddError};

#[derive(Parser, Debug)]
#[command(name = "sdd-sim", version, about = "Reaction-diffusion with state-dependent delay: solve, verify, sweep")]
struct Cli {
    /// Worker threads for sweeps
    #[arg(long, global = true, env = "SDD_SIM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario and write the trajectory CSV
    Run {
        /// Scenario file, or the name of a bundled preset
        #[arg(long)]
        config: String,
        /// CSV path (overrides output.path)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the fully resolved configuration and exit
        #[arg(long)]
        print_config: bool,
        /// Override a key, e.g. --set b.p=4 (repeatable)
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a verification suite on the bundled presets
    Verify {
        /// all | H | oracle | dissipation | holder | dependence | apriori
        suite: String,
        /// Also print the reports as JSON
        #[arg(long)]
        json: bool,
    },
    /// Solve one scenario for several values of a single key
    Sweep {
        #[arg(long)]
        config: String,
        /// Config key, or its unambiguous last component (`p` for `b.p`)
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output directory
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
    /// List bundled presets, or print one
    Presets { name: Option<String> },
}

fn exit_code(e: &SddError) -> u8 {
    match e {
        SddError::Config { .. } | SddError::InvalidArgument(_) | SddError::Io(_) | SddError::Unsupported(_) => 2,
        SddError::Divergence { .. } => 3,
        _ => 1,
    }
}

fn load_config(arg: &str) -> Result<ScenarioConfig, SddError> {
    let path = Path::new(arg);
    if path.exists() {
        return ScenarioConfig::from_path(path);
    }
    match scenario::preset(arg) {
        Some(text) => ScenarioConfig::parse(text),
        None => Err(SddError::Io(format!("{arg}: no such file or bundled preset"))),
    }
}

fn apply_overrides(cfg: &mut ScenarioConfig, overrides: &[String]) -> Result<(), SddError> {
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| SddError::Config { key: kv.clone(), message: "expected KEY=VALUE".into() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn cmd_run(config: &str, out: Option<PathBuf>, print_config: bool, overrides: &[String]) -> Result<(), SddError> {
    let mut cfg = load_config(config)?;
    apply_overrides(&mut cfg, overrides)?;
    if print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let (spec, opts, t) = cfg.build()?;
    let cols = cfg.columns()?;
    let out = out.unwrap_or_else(|| cfg.output_path());
    let start = Instant::now();
    let traj = solve(&spec, &opts, t)?;
    write_csv_file(&traj, &spec.op, &cols, &out)?;
    println!(
        "final_norm={:.16e} t_final={} steps={} wall_time={:.3}s clamp_events={} corrector_steps={} corrector_warnings={} csv={}",
        traj.final_state().norm(),
        traj.final_time(),
        traj.forward_times().len() - 1,
        start.elapsed().as_secs_f64(),
        traj.clamp_events(),
        traj.corrector_steps(),
        traj.corrector_warnings(),
        out.display()
    );
    Ok(())
}

fn cmd_verify(name: &str, json: bool) -> Result<bool, SddError> {
    let outcomes = match run_suite(name) {
        Some(r) => r?,
        None => {
            return Err(SddError::InvalidArgument(format!(
                "unknown suite `{name}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
    };
    for o in &outcomes {
        println!("{}", o.line());
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&outcomes).expect("reports serialize"));
    }
    Ok(outcomes.iter().all(|o| o.pass))
}

struct SweepRow {
    value: String,
    file: PathBuf,
    final_norm: f64,
    max_norm: f64,
    entry_time: Option<f64>,
    error: Option<SddError>,
}

fn file_stem(key: &str, value: &str) -> String {
    let clean: String = value.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    format!("{}_{clean}", key.replace('.', "_"))
}

fn cmd_sweep(config: &str, param: &str, values: &[String], out: &Path, threads: Option<usize>) -> Result<bool, SddError> {
    let base = load_config(config)?;
    let key = resolve_key(param)?;
    let mut jobs = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        cfg.set(key, v)?;
        let built = cfg.build()?;
        jobs.push((v.clone(), cfg.columns()?, built));
    }
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| SddError::InvalidArgument(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|(value, cols, (spec, opts, t))| {
                let file = out.join(format!("{}.csv", file_stem(key, value)));
                let result = solve(spec, opts, *t).and_then(|traj| {
                    write_csv_file(&traj, &spec.op, cols, &file)?;
                    let entry = if spec.birth.is_bounded() {
                        dissipation_from_trajectory(spec, &traj, 0.0)?.entry_time
                    } else {
                        None
                    };
                    let max_norm = traj.forward_states().iter().map(|v| v.norm()).fold(0.0, f64::max);
                    Ok((traj.final_state().norm(), max_norm, entry))
                });
                match result {
                    Ok((final_norm, max_norm, entry_time)) => {
                        SweepRow { value: value.clone(), file, final_norm, max_norm, entry_time, error: None }
                    }
                    Err(e) => SweepRow {
                        value: value.clone(),
                        file,
                        final_norm: f64::NAN,
                        max_norm: f64::NAN,
                        entry_time: None,
                        error: Some(e),
                    },
                }
            })
            .collect()
    });
    let mut summary = format!("{key},final_norm,max_norm,entry_time,status,file\n");
    for r in &rows {
        let entry = r.entry_time.map_or(String::new(), |t| format!("{t:.16e}"));
        let status = r.error.as_ref().map_or("ok".to_string(), |e| e.to_string().replace(',', ";"));
        let _ = writeln!(
            summary,
            "{},{:.16e},{:.16e},{entry},{status},{}",
            r.value,
            r.final_norm,
            r.max_norm,
            r.file.display()
        );
    }
    std::fs::write(out.join("summary.csv"), &summary)?;
    print!("{summary}");
    if let Some(e) = rows.iter().find_map(|r| r.error.clone()) {
        return Err(e);
    }
    Ok(true)
}

fn cmd_presets(name: Option<&str>) -> Result<(), SddError> {
    match name {
        None => {
            for (n, text) in scenario::PRESETS {
                let about = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{n}\t{about}");
            }
            Ok(())
        }
        Some(n) => {
            let text = scenario::preset(n).ok_or_else(|| SddError::InvalidArgument(format!("no bundled preset `{n}`")))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, print_config, set } => cmd_run(config, out.clone(), *print_config, set).map(|_| true),
        Command::Verify { suite, json } => cmd_verify(suite, *json),
        Command::Sweep { config, param, values, out } => cmd_sweep(config, param, values, out, cli.threads),
        Command::Presets { name } => cmd_presets(name.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("sdd-sim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
