use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ptmp_core::gaussian::ModeLabel;
use ptmp_core::keyrate::key_rate_traced;
use ptmp_core::network::build_network_cov;
use ptmp_core::reduction::{closed_form_three_mode, reduce_to_three_modes, PairingOrder};
use ptmp_sweep::config::{Format, Mode, SweepConfig};
use ptmp_sweep::error::{Result, SweepError};
use ptmp_sweep::figures::{run_figure, Figure};
use ptmp_sweep::mcval::{report_json, run_mc_validation, McStatus};
use ptmp_sweep::report::{dataset_json, write_csv, Metadata};
use ptmp_sweep::sweep::{run_sweep, Dataset};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ptmp", version, about = "Key rates of point-to-multipoint CV-QKD networks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Rate at a single point.
    Keyrate {
        #[command(flatten)]
        io: OutArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        distance_km: Option<f64>,
    },
    /// Rate over the configured grid.
    Sweep {
        #[command(flatten)]
        io: OutArgs,
    },
    /// Regenerate a built-in figure and run its checks.
    Figure {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Three-mode reduction trace at a single point (JSON).
    Reduce {
        #[command(flatten)]
        io: OutArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        distance_km: Option<f64>,
    },
    /// Monte Carlo check of the modal matrix and rate (JSON).
    McValidate {
        #[command(flatten)]
        io: OutArgs,
        #[arg(long)]
        pulses: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format `{s}` (csv or json)")),
    }
}

fn load(io: &OutArgs) -> Result<SweepConfig> {
    let mut cfg = match &io.config {
        Some(p) => SweepConfig::from_path(p)?,
        None => SweepConfig::default(),
    };
    if let Some(f) = io.format {
        cfg.output.format = f;
    }
    if let Some(p) = &io.out {
        cfg.output.path = Some(p.display().to_string());
    }
    Ok(cfg)
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| SweepError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn csv_text(rows: &[ptmp_sweep::SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| SweepError::Output(e.to_string()))
}

/// Write one dataset. CSV puts the ratio family in a `_ratios` sibling file.
fn write_dataset(data: &Dataset, meta: &Metadata, cfg: &SweepConfig, label: &str) -> Result<()> {
    let path = cfg.output.path.as_ref().map(PathBuf::from);
    match cfg.output.format {
        Format::Json => emit(path.map(|p| with_suffix(&p, label)).as_deref(), &(dataset_json(data, meta)? + "\n")),
        Format::Csv => {
            let main = csv_text(&data.rows)?;
            match path {
                Some(p) => {
                    let p = with_suffix(&p, label);
                    emit(Some(&p), &main)?;
                    if !data.ratio_family.is_empty() {
                        emit(Some(&with_suffix(&p, "ratios")), &csv_text(&data.ratio_family)?)?;
                    }
                    Ok(())
                }
                None => {
                    if !label.is_empty() {
                        println!("# {label}");
                    }
                    emit(None, &main)
                }
            }
        }
    }
}

fn run_keyrate(io: &OutArgs, n: Option<usize>, distance: Option<f64>) -> Result<ExitCode> {
    let start = Instant::now();
    let mut cfg = load(io)?;
    let n = n.unwrap_or(cfg.grid.n_bobs[0]);
    let d = distance.unwrap_or_else(|| cfg.grid.distances()[0]);
    cfg.grid.n_bobs = vec![n];
    cfg.grid.distances_km = Some(vec![d]);
    cfg.validate()?;
    let data = run_sweep(&cfg)?;
    if let Some(f) = data.summary.failures.first() {
        return Err(SweepError::Output(format!("N={} at {} km: {}", f.n, f.distance_km, f.error)));
    }
    let meta = Metadata::new(command_line(), &cfg, start.elapsed().as_secs_f64());
    write_dataset(&data, &meta, &cfg, "")?;
    Ok(ExitCode::SUCCESS)
}

fn run_sweep_cmd(io: &OutArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let cfg = load(io)?;
    if cfg.mode == Mode::McValidate {
        return run_mc(io, None, None);
    }
    let data = run_sweep(&cfg)?;
    let meta = Metadata::new(command_line(), &cfg, start.elapsed().as_secs_f64());
    write_dataset(&data, &meta, &cfg, "")?;
    for (n, d) in &data.summary.max_secure_distance_km {
        match d {
            Some(d) => log::info!("N={n}: max secure distance {d} km"),
            None => log::info!("N={n}: no secure distance on the grid"),
        }
    }
    Ok(if data.summary.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        log::error!("{} grid points failed", data.summary.failures.len());
        ExitCode::from(1)
    })
}

fn run_figure_cmd(name: &str, out: Option<PathBuf>, format: Option<Format>) -> Result<ExitCode> {
    let fig: Figure = name.parse()?;
    let start = Instant::now();
    let run = run_figure(fig)?;
    let elapsed = start.elapsed().as_secs_f64();
    for ld in &run.datasets {
        let mut cfg = ld.config.clone();
        cfg.output.path = out.as_ref().map(|p| p.display().to_string());
        cfg.output.format = format.unwrap_or(cfg.output.format);
        let meta = Metadata::new(command_line(), &cfg, elapsed);
        write_dataset(&ld.data, &meta, &cfg, &ld.label)?;
    }
    for c in &run.checks {
        eprintln!("{c}");
    }
    eprintln!("{fig}: {:.2} s", elapsed);
    Ok(if run.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_reduce(io: &OutArgs, n: Option<usize>, distance: Option<f64>) -> Result<ExitCode> {
    let cfg = load(io)?;
    let n = n.unwrap_or(cfg.grid.n_bobs[0]);
    let d = distance.unwrap_or_else(|| cfg.grid.distances()[0]);
    let params = cfg.params()?;
    let link = cfg.link_at(n, d, cfg.analytic_ratio())?;
    let topo = link.topology()?;
    let gamma = build_network_cov(&topo, params.v_m)?;
    let target = ModeLabel::Bob(n as u32);
    let (reduced, steps) = reduce_to_three_modes(&gamma, target, &PairingOrder::default())?;
    let closed = closed_form_three_mode(&topo, params.v_m)?;
    let trace = key_rate_traced(&gamma, target, &params, &[link.detector], &cfg.holevo_route.holevo())?;
    let doc = json!({
        "n_bobs": n,
        "distance_km": d,
        "steps": steps,
        "reduced": reduced,
        "closed_form": closed,
        "max_abs_difference": (reduced.entries() - closed.entries()).amax(),
        "key_rate": trace.breakdown,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| SweepError::Output(e.to_string()))? + "\n";
    emit(io.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_mc(io: &OutArgs, pulses: Option<usize>, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg = load(io)?;
    if let Some(p) = pulses {
        cfg.mc.pulses = p;
    }
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    let report = run_mc_validation(&cfg)?;
    emit(io.out.as_deref(), &(report_json(&report)? + "\n"))?;
    eprintln!(
        "mc-validate: {} (max |z| {:.2}, {:.1} s): {}",
        report.status, report.max_abs_z, report.elapsed_s, report.message
    );
    Ok(match report.status {
        McStatus::Pass | McStatus::InsufficientPrecision => ExitCode::SUCCESS,
        McStatus::Fail => ExitCode::from(1),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Keyrate { io, n, distance_km } => run_keyrate(io, *n, *distance_km),
        Command::Sweep { io } => run_sweep_cmd(io),
        Command::Figure { name, out, format } => run_figure_cmd(name, out.clone(), *format),
        Command::Reduce { io, n, distance_km } => run_reduce(io, *n, *distance_km),
        Command::McValidate { io, pulses, seed } => run_mc(io, *pulses, *seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
