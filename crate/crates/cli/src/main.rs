use clap::Parser;
use prftps_cli::{run_scenario, write_output, CliError, ExperimentConfig, Scenario};
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs one experiment scenario and writes its CSV files.
#[derive(Debug, Parser)]
#[command(name = "prftps", version)]
struct Args {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Edge list: node count, then one `receiver sender` pair per line.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Use floating-point discovery with this singular-value ratio.
    #[arg(long)]
    rank_tol: Option<f64>,
    #[arg(long)]
    parallel_trials: bool,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build(args: Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Invalid {
            field: kv.clone(),
            msg: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim()).map_err(|msg| CliError::Invalid {
            field: k.trim().to_string(),
            msg,
        })?;
    }
    if args.scenario.is_some() {
        cfg.scenario = args.scenario;
    }
    if args.graph_file.is_some() {
        cfg.graph_file = args.graph_file;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.out_dir {
        cfg.out_dir = d;
    }
    if let Some(e) = args.eta {
        cfg.eta = e;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if args.rank_tol.is_some() {
        cfg.rank_tol = args.rank_tol;
    }
    cfg.parallel_trials |= args.parallel_trials;
    Ok(cfg)
}

fn main() -> ExitCode {
    let result = build(Args::parse()).and_then(|cfg| {
        let out = run_scenario(&cfg)?;
        write_output(&out, &cfg.out_dir)?;
        Ok((out, cfg.out_dir))
    });
    match result {
        Ok((out, dir)) => {
            for line in &out.summary {
                println!("{line}");
            }
            for (name, _) in &out.files {
                println!("wrote {}", dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
