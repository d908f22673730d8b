use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fedgraph::experiment::{run, ExperimentConfig, ExperimentError, Mode, RunSummary};
use fedgraph::metrics::MetricBundle;

/// Fairness-aware federated GCN training on graph data, with baselines,
/// structural-bias sweeps and prediction audits.
#[derive(Debug, Parser)]
#[command(name = "fedgraph", version)]
struct Args {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Print the resolved configuration with every default filled in, then exit.
    #[arg(long)]
    print_config: bool,
    /// Output directory.
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
    /// Replace every seed in the configuration with this value.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Replace the configured mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn pct(x: f64) -> String {
    format!("{:6.2}", 100.0 * x)
}

fn bundle_line(label: &str, b: &MetricBundle) -> String {
    let flags = b.flags.render();
    format!(
        "{label:<14} acc {}  auc {}  dSP {}  dEO {}  tradeoff(acc) {:8.2}  tradeoff(auc) {:8.2}{}",
        pct(b.accuracy),
        pct(b.auc),
        pct(b.delta_sp),
        pct(b.delta_eo),
        b.tradeoff_acc,
        b.tradeoff_auc,
        if flags.is_empty() { String::new() } else { format!("  [{flags}]") }
    )
}

fn report(cfg: &ExperimentConfig, s: &RunSummary) {
    println!("mode {}", cfg.mode.name());
    if let Some(load) = &s.load {
        println!("data: {}", load.render());
    }
    for sp in &s.splits {
        println!("{}", bundle_line(&format!("split {} global", sp.split), &sp.global));
        if let Some(l) = &sp.local {
            println!("{}", bundle_line(&format!("split {} local", sp.split), l));
        }
    }
    if s.splits.len() > 1 {
        if let Some(m) = s.mean_global() {
            println!("{}", bundle_line("mean global", &m));
        }
    }
    if let Some(sweep) = &s.sweep {
        println!("{:>6} {:>10} {:>12}", "d", "|rho| emp", "|rho| model");
        for row in &sweep.rows {
            println!("{:>6.2} {:>10.4} {:>12.4}", row.d, row.mean_abs_rho_empirical, row.rho_closed_form);
        }
    }
    if let Some(a) = &s.audit {
        println!("{}", bundle_line("audit", a));
    }
    for path in &s.outputs {
        println!("wrote {}", path.display());
    }
}

fn execute(args: &Args) -> Result<(), ExperimentError> {
    let mut cfg = ExperimentConfig::parse_file(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.override_seeds(seed);
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    if args.print_config {
        print!("{}", cfg.render());
        return Ok(());
    }
    let out = args.out.as_ref().expect("clap enforces --out");
    let summary = run(&cfg, out)?;
    report(&cfg, &summary);
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
