use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbc_core::{
    csv_header, csv_row, run, run_oq_baseline, Error, MetricsReport, Scenario, SwitchGeometry,
};
use rayon::prelude::*;

mod scenario;
mod verify;

use scenario::{Kind, ScenarioFile};
use verify::Outcome;

#[derive(Parser)]
#[command(name = "lbc", version, about = "Load-balancing Clos switch simulator")]
struct Cli {
    /// Override the seed given in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (pattern, load) point of a scenario file, or the replay suite.
    Run {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check the schedule and the rate analysis for a k x k switch.
    Verify {
        #[arg(short)]
        k: usize,
    },
    /// Run each point on the switch and on an ideal output-queued switch
    /// fed the same arrivals.
    Compare {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Schema(String),
    Invariant(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Schema(_) => 2,
            Failure::Invariant(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Schema(m) | Failure::Invariant(m) | Failure::Io(m) => m,
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    ScenarioFile::parse(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))
}

fn version_line() -> String {
    format!("# lbc {}", env!("CARGO_PKG_VERSION"))
}

/// Writes to `path`, or to stdout when there is none or it is `-`.
fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path.filter(|p| *p != Path::new("-")) {
        Some(p) => fs::write(p, body).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn invariant(s: &Scenario, e: Error) -> Failure {
    Failure::Invariant(format!(
        "{} {} load {}: {e}",
        s.id, s.traffic.pattern, s.traffic.load
    ))
}

fn progress(quiet: bool, s: &Scenario, r: &MetricsReport) {
    if !quiet {
        eprintln!(
            "{} {} load {:.3}: throughput {:.4}, mean delay {:.1}",
            s.id,
            s.traffic.pattern,
            s.traffic.load,
            r.throughput_rel(),
            r.mean_delay()
        );
    }
}

fn print_outcomes(outcomes: &[Outcome], quiet: bool) -> usize {
    let mut failed = 0;
    for o in outcomes {
        if !o.pass {
            failed += 1;
        }
        if !quiet || !o.pass {
            let status = if o.pass { "PASS" } else { "FAIL" };
            if o.detail.is_empty() {
                println!("{status} {}", o.name);
            } else {
                println!("{status} {}: {}", o.name, o.detail);
            }
        }
    }
    failed
}

fn cmd_replay(file: &ScenarioFile, output: Option<&Path>, quiet: bool) -> Result<(), Failure> {
    file.check_replay().map_err(Failure::Schema)?;
    let outcomes = verify::replay_suite();
    let failed = print_outcomes(&outcomes, quiet);
    if let Some(path) = output {
        let mut body = format!("{}\ncheck,status\n", version_line());
        for o in &outcomes {
            body.push_str(&format!(
                "{},{}\n",
                o.name,
                if o.pass { "match" } else { "mismatch" }
            ));
        }
        emit(Some(path), &body)?;
    }
    if failed > 0 {
        return Err(Failure::Invariant(format!("{failed} replay checks differ")));
    }
    Ok(())
}

/// Rows of the points that ran, in order, up to the first failure.
fn collect_rows<T>(
    points: &[Scenario],
    results: Vec<lbc_core::Result<T>>,
    mut row: impl FnMut(&Scenario, &T) -> String,
) -> (String, Option<Failure>) {
    let mut body = String::new();
    for (s, r) in points.iter().zip(results) {
        match r {
            Ok(r) => body.push_str(&row(s, &r)),
            Err(e) => return (body, Some(invariant(s, e))),
        }
    }
    (body, None)
}

/// Counting mode records reorderings as data; say so unless quiet.
fn report_reorders(total: u64, quiet: bool) {
    if total > 0 && !quiet {
        eprintln!("lbc: warning: {total} out-of-order deliveries counted");
    }
}

fn cmd_run(
    path: &Path,
    output: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), Failure> {
    let file = load(path)?;
    let output = output.or_else(|| file.output.clone());
    if file.kind == Kind::Replay {
        return cmd_replay(&file, output.as_deref(), quiet);
    }
    let points = file.points(seed).map_err(Failure::Schema)?;
    let results: Vec<_> = points
        .par_iter()
        .map(|s| {
            let r = run(s);
            if let Ok(r) = &r {
                progress(quiet, s, r);
            }
            r
        })
        .collect();
    let mut reorders = 0;
    let (rows, failure) = collect_rows(&points, results, |s, r| {
        reorders += r.in_order_violations;
        format!("{}\n", csv_row(&s.label(), r))
    });
    emit(
        output.as_deref(),
        &format!("{}\n{}\n{rows}", version_line(), csv_header()),
    )?;
    report_reorders(reorders, quiet);
    failure.map_or(Ok(()), Err)
}

fn cmd_compare(
    path: &Path,
    output: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), Failure> {
    let file = load(path)?;
    let output = output.or_else(|| file.output.clone());
    let points = file.points(seed).map_err(Failure::Schema)?;
    let results: Vec<_> = points
        .par_iter()
        .map(|s| {
            let pair = run(s).and_then(|l| Ok((l, run_oq_baseline(s)?)));
            if let Ok((l, _)) = &pair {
                progress(quiet, s, l);
            }
            pair
        })
        .collect();
    let mut reorders = 0;
    let (rows, failure) = collect_rows(&points, results, |s, (lbc, oq)| {
        reorders += lbc.in_order_violations;
        let label = s.label();
        format!("lbc,{}\noq,{}\n", csv_row(&label, lbc), csv_row(&label, oq))
    });
    emit(
        output.as_deref(),
        &format!("{}\nswitch,{}\n{rows}", version_line(), csv_header()),
    )?;
    report_reorders(reorders, quiet);
    failure.map_or(Ok(()), Err)
}

fn cmd_verify(k: usize, seed: Option<u64>, quiet: bool) -> Result<(), Failure> {
    let geo = SwitchGeometry::symmetric(k).map_err(|e| Failure::Schema(e.to_string()))?;
    if !quiet {
        println!("module 0 configuration, k={k}");
        print!("{}", verify::configuration_table(&geo));
        if k == 2 {
            println!("P1\n{}", lbc_core::schedule::compound_p1(&geo));
            println!("P2\n{}", lbc_core::schedule::compound_p2(&geo));
        }
    }
    let mut outcomes = verify::schedule_suite(&geo);
    outcomes.extend(verify::analysis_suite(&geo, seed.unwrap_or(1)));
    match print_outcomes(&outcomes, quiet) {
        0 => Ok(()),
        n => Err(Failure::Invariant(format!("{n} checks failed"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { file, output } => cmd_run(&file, output, cli.seed, cli.quiet),
        Command::Compare { file, output } => cmd_compare(&file, output, cli.seed, cli.quiet),
        Command::Verify { k } => cmd_verify(k, cli.seed, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lbc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
