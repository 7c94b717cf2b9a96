use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shiftmeasure::commands::{self, TestKind};
use shiftmeasure::config::ExperimentConfig;
use shiftmeasure::verify::Verdict;
use shiftmeasure::{Error, Result};

#[derive(Parser)]
#[command(name = "shiftmeasure", version, about = "Invariant measures for weighted backward shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the schedule and certificates, write model.json.
    Build(Common),
    /// Draw points from the measure, write samples.csv.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Run statistical and exact checks, write report.json.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma separated subset of invariance,mixing,support,density,exactness.
        #[arg(long)]
        tests: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration: l2-doubling, l2-bilateral or omega-any.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Mixing lags, e.g. `0..50` or `0,1,2,5,10`.
    #[arg(long)]
    lags: Option<String>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    depth: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => return Err(Error::Config("pass --config or --preset".into())),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.samples {
            c.samples = n;
        }
        if let Some(l) = &self.lags {
            c.lags = commands::parse_lags(l)?;
        }
        if let Some(d) = self.depth {
            c.model.depth = d;
        }
        if let Some(l) = self.level {
            c.level = l;
        }
        c.validate()?;
        std::fs::create_dir_all(&self.out)?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Build(common) => {
            let config = common.resolve()?;
            let (_, summary) = commands::cmd_build(&config)?;
            commands::write_json(&common.out.join("model.json"), &summary)?;
            println!("fingerprint {}", summary.fingerprint);
            println!("schedule {:?}", summary.schedule);
            Ok(Verdict::Pass)
        }
        Command::Sample { common, count } => {
            let config = common.resolve()?;
            let (model, summary) = commands::cmd_build(&config)?;
            let rows = commands::cmd_sample(&config, &model, count)?;
            commands::write_json(&common.out.join("model.json"), &summary)?;
            commands::write_sample_table(&common.out.join("samples.csv"), config.model.side, &rows)?;
            println!("wrote {} samples", rows.len());
            Ok(Verdict::Pass)
        }
        Command::Verify { common, tests } => {
            let config = common.resolve()?;
            let (model, _) = commands::cmd_build(&config)?;
            let tests = match tests {
                Some(t) => TestKind::parse_list(&t)?,
                None => TestKind::defaults(model.mode()),
            };
            let report = commands::cmd_verify(&config, &model, &tests)?;
            write_outputs(&common.out, &report)?;
            for r in &report.reports {
                println!(
                    "{:<12} {:<28} discrepancy {:.4e} tolerance {:.4e} {:?}",
                    r.test, r.event.as_deref().unwrap_or("-"), r.discrepancy, r.tolerance, r.verdict
                );
            }
            println!("verdict {:?}", report.verdict);
            Ok(report.verdict)
        }
    }
}

fn write_outputs(out: &Path, report: &commands::RunReport) -> Result<()> {
    commands::write_json(&out.join("report.json"), report)?;
    for r in report.reports.iter().filter(|r| !r.curve.is_empty()) {
        commands::write_mixing_table(&out.join("mixing.csv"), r)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = run(cli);
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    }
    ExitCode::from(commands::exit_code(&outcome) as u8)
}
