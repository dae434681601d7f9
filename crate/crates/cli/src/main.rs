use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fleetcharge::config::PolicyKind;
use fleetcharge_cli::{
    compare, ensure_dir, load_config, parse_weights, render_fit, render_sweep, sweep, validate_fade, write_file, write_ledger, Inputs,
    MetricsView, Timing, DEFAULT_SWEEP,
};

#[derive(Parser)]
#[command(name = "fleetcharge", version, about = "Fleet charge scheduling: replay, compare and sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay sessions under one policy.
    Simulate(RunArgs),
    /// Replay under both policies and report the differences.
    Compare(RunArgs),
    /// Replay the proposed policy once per weight triple.
    Sweep(SweepArgs),
    /// Fit statistics of the surface fade model against the exact model.
    ValidateFade(FadeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Baseline,
    Proposed,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for compatibility; runs are deterministic.
    #[arg(long)]
    seedless: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Objective weights as `cost,fade,availability`.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Weight triple; repeat for several. Defaults to 0.6,0.3,0.1 0.3,0.6,0.1 0.1,0.3,0.6.
    #[arg(long)]
    weights: Vec<String>,
}

#[derive(Args)]
struct FadeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Points per axis.
    #[arg(long, default_value_t = 100)]
    grid: usize,
}

fn out_dir(common: &Common, inputs: &Inputs) -> Option<PathBuf> {
    common.out.clone().or_else(|| inputs.config.out_dir.clone())
}

fn load(common: &Common) -> Result<Inputs> {
    let config = load_config(common.config.as_deref())?;
    Inputs::load(config, common.sessions.as_deref(), common.prices.as_deref())
}

fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    if let Some(d) = dir {
        write_file(&ensure_dir(d)?.join(name), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let inputs = load(&args.common)?;
            let kind = match args.policy {
                Some(PolicyArg::Baseline) => PolicyKind::Baseline,
                Some(PolicyArg::Proposed) => PolicyKind::Proposed,
                None => inputs.config.policy,
            };
            let weights = match &args.weights {
                Some(w) => parse_weights(w)?,
                None => inputs.config.weights(),
            };
            let out = inputs.simulate(kind, weights)?;
            let view = MetricsView::from(&out.metrics);
            let json = serde_json::to_string_pretty(&view)? + "\n";
            print!("{json}");
            let timing = Timing::of(if kind == PolicyKind::Baseline { "baseline" } else { "proposed" }, &out);
            eprintln!("max optimization time {:.1} ms over {} plans", timing.max_opt_time_ms, timing.plans);
            let dir = out_dir(&args.common, &inputs);
            if let Some(d) = &dir {
                ensure_dir(d)?;
                write_ledger(&d.join(format!("ledger_{}.csv", timing.label)), &out.ledger)?;
            }
            emit(dir.as_deref(), "metrics.json", &json)?;
            emit(dir.as_deref(), "timing.json", &(serde_json::to_string_pretty(&timing)? + "\n"))?;
        }
        Command::Compare(args) => {
            let inputs = load(&args.common)?;
            let weights = match &args.weights {
                Some(w) => parse_weights(w)?,
                None => inputs.config.weights(),
            };
            let (cmp, [base, prop]) = compare(&inputs, weights)?;
            let text = cmp.render_text();
            print!("{text}");
            let timings = [Timing::of("baseline", &base), Timing::of("proposed", &prop)];
            eprintln!("max optimization time: baseline {:.1} ms, proposed {:.1} ms", timings[0].max_opt_time_ms, timings[1].max_opt_time_ms);
            let dir = out_dir(&args.common, &inputs);
            if let Some(d) = &dir {
                ensure_dir(d)?;
                write_ledger(&d.join("ledger_baseline.csv"), &base.ledger)?;
                write_ledger(&d.join("ledger_proposed.csv"), &prop.ledger)?;
            }
            emit(dir.as_deref(), "report.txt", &text)?;
            emit(dir.as_deref(), "report.json", &cmp.render_json())?;
            emit(dir.as_deref(), "timing.json", &(serde_json::to_string_pretty(&timings)? + "\n"))?;
        }
        Command::Sweep(args) => {
            let inputs = load(&args.common)?;
            let triples = if args.weights.is_empty() {
                DEFAULT_SWEEP.iter().map(|w| fleetcharge::Weights::from_array(*w)).collect()
            } else {
                args.weights.iter().map(|w| parse_weights(w)).collect::<Result<Vec<_>>>()?
            };
            let (rows, outcomes) = sweep(&inputs, &triples)?;
            let text = render_sweep(&rows);
            print!("{text}");
            let timings: Vec<Timing> = rows
                .iter()
                .zip(&outcomes)
                .map(|(r, o)| Timing::of(&format!("{:?}", r.weights), o))
                .collect();
            for t in &timings {
                eprintln!("{}: max optimization time {:.1} ms", t.label, t.max_opt_time_ms);
            }
            let dir = out_dir(&args.common, &inputs);
            emit(dir.as_deref(), "sweep.txt", &text)?;
            emit(dir.as_deref(), "sweep.json", &(serde_json::to_string_pretty(&rows)? + "\n"))?;
            emit(dir.as_deref(), "timing.json", &(serde_json::to_string_pretty(&timings)? + "\n"))?;
        }
        Command::ValidateFade(args) => {
            let config = load_config(args.config.as_deref())?;
            let report = validate_fade(&config, args.grid)?;
            print!("{}", render_fit(&report, args.grid));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
