use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use pathsim::gen::random_topology;
use pathsim::report::{comparison_csv, MetricsReport};
use pathsim::scenario::{check_converged, compare, prepare, Overrides, ScenarioError, ScenarioSpec};
use pathsim::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Run interdomain routing scenarios under BGP, R-BGP, MIRO and YAMR.
#[derive(Debug, Parser)]
#[command(name = "pathsim", version)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, required_unless_present = "gen")]
    scenario: Option<PathBuf>,
    /// Topology file, overriding the one named in the scenario.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Protocol to run; repeatable. Overrides the scenario's list.
    #[arg(long = "protocol", value_parser = parse_protocol)]
    protocols: Vec<Protocol>,
    /// Output directory. Reports go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    quiesce_limit: Option<u64>,
    /// Treat scenario warnings as errors.
    #[arg(long)]
    strict: bool,
    /// Emit one comparison table instead of per-protocol reports.
    #[arg(long)]
    compare: bool,
    /// Also write the message trace of each run.
    #[arg(long, requires = "out")]
    trace: bool,
    /// Print a random topology with N ASes from SEED and exit.
    #[arg(long, num_args = 2, value_names = ["N", "SEED"], conflicts_with = "scenario")]
    gen: Option<Vec<u64>>,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: pathsim::UnknownProtocol| e.to_string())
}

/// Anything that is not a scenario error is an output problem.
fn io_error(e: anyhow::Error) -> (i32, anyhow::Error) {
    (4, e)
}

fn write(out: &Option<PathBuf>, name: &str, body: &str) -> Result<(), (i32, anyhow::Error)> {
    match out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io_error)?;
            let p = dir.join(name);
            fs::write(&p, body).with_context(|| format!("writing {}", p.display())).map_err(io_error)
        }
    }
}

fn scenario_err(e: ScenarioError) -> (i32, anyhow::Error) {
    (e.exit_code(), anyhow::anyhow!(e.to_string()))
}

fn run(cli: Cli) -> Result<(), (i32, anyhow::Error)> {
    if let Some(g) = &cli.gen {
        let text = random_topology(g[0] as usize, g[1]).to_text();
        return write(&cli.out, "topology.txt", &text);
    }
    let path = cli.scenario.clone().expect("clap enforces --scenario");
    let spec = ScenarioSpec::load(&path).map_err(scenario_err)?;
    let format = match (cli.format, spec.output) {
        (Some(f), _) => f,
        (None, Some(pathsim::scenario::OutputFormat::Csv)) => Format::Csv,
        (None, _) => Format::Json,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let ov = Overrides {
        topology: cli.topology.clone(),
        protocols: cli.protocols.clone(),
        quiesce_limit: cli.quiesce_limit,
        strict: cli.strict,
        trace: cli.trace,
    };
    let prep = prepare(spec, base, &ov).map_err(scenario_err)?;
    for w in &prep.warnings {
        eprintln!("warning: {w}");
    }

    if cli.compare {
        let rows = compare(&prep).map_err(scenario_err)?;
        let body = match format {
            Format::Csv => comparison_csv(&rows),
            Format::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
        };
        write(&cli.out, &format!("comparison.{}", ext(format)), &body)?;
        return if rows.iter().all(|r| r.converged) {
            Ok(())
        } else {
            let stuck: Vec<_> = rows.iter().filter(|r| !r.converged).map(|r| r.protocol.clone()).collect();
            Err(scenario_err(ScenarioError::NonConvergence {
                limit: prep.sim.quiesce_limit,
                protocols: stuck.join(", "),
            }))
        };
    }

    let runs = prep.run_all().map_err(scenario_err)?;
    let reports: Vec<MetricsReport> = runs.iter().map(|(r, _)| r.clone()).collect();
    for (r, sim) in &runs {
        let body = match format {
            Format::Json => r.to_json() + "\n",
            Format::Csv => r.to_csv(),
        };
        write(&cli.out, &format!("{}.{}", r.protocol, ext(format)), &body)?;
        if cli.trace {
            let t = serde_json::to_string_pretty(sim.trace()).expect("trace serializes") + "\n";
            write(&cli.out, &format!("{}.trace.json", r.protocol), &t)?;
        }
    }
    check_converged(&prep, &reports).map_err(scenario_err)
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
