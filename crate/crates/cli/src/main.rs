//! `choicetrees`: sample k-choice walks, trees, Rayleigh paths and stick-breaking
//! trees, or run the named experiments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use choicetrees::experiments::{run_experiment, ExperimentParams, EXPERIMENTS};
use choicetrees::export;
use choicetrees::stickbreak::{sample_measure_point, sb_sample};
use choicetrees::trees::{canonical_tree_code, sample_ab_tree, sample_wilson_tree};
use choicetrees::walk::{run_le_length_process, ChoiceWalkState};
use choicetrees::{sample_rayleigh, Algorithm, AvoidMode, ChoiceRule, Error, RngStream, Variant};

#[derive(Parser)]
#[command(name = "choicetrees", version, about = "k-choice random walks, spanning trees and their scaling limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Maximal,
    Uniform,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Maximal => Variant::Maximal,
            VariantArg::Uniform => Variant::Uniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ab,
    Wilson,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AvoidArg {
    FullPast,
    LoopErasure,
}

#[derive(Args)]
struct Common {
    /// Seed for all randomness.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory of one choice walk as CSV (m,vertex).
    SampleWalk {
        #[arg(short)]
        n: usize,
        #[arg(short, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value = "maximal")]
        variant: VariantArg,
        #[arg(long, value_enum, default_value = "full-past")]
        avoid: AvoidArg,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Loop-erased length process as CSV (m,Z).
    SampleLe {
        #[arg(short)]
        n: usize,
        #[arg(short, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value = "maximal")]
        variant: VariantArg,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[command(flatten)]
        common: Common,
    },
    /// k-Rayleigh path as CSV, either on a time grid (t,value) or as jumps (s,x).
    SampleRayleigh {
        #[arg(short, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        /// Grid spacing for the (t,value) output.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Write the jump list instead of grid values.
        #[arg(long)]
        jumps: bool,
        #[command(flatten)]
        common: Common,
    },
    /// A choice spanning tree as JSON, or a histogram CSV (code,count) when replicas > 1.
    SampleTree {
        #[arg(long, value_enum, default_value = "ab")]
        algo: AlgoArg,
        #[arg(long, value_enum, default_value = "maximal")]
        variant: VariantArg,
        #[arg(short)]
        n: usize,
        #[arg(short, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// A random stick-breaking tree as JSON, or as a distance-matrix CSV
    /// (i,j,distance) between points drawn from its glue measure.
    SampleSticks {
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Number of branches.
        #[arg(long, default_value_t = 10)]
        branches: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Points sampled for the distance matrix.
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a named experiment and prints its reports as JSON lines.
    Experiment {
        name: String,
        #[arg(short)]
        n: Option<usize>,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write a CSV summary table here.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_str(path: &Option<PathBuf>, s: &str) -> Result<(), Error> {
    let mut w = output(path)?;
    writeln!(w, "{s}")?;
    w.flush()?;
    Ok(())
}

fn positive(name: &str, v: usize) -> Result<(), Error> {
    if v == 0 {
        return Err(Error::Range(format!("{name} must be >= 1")));
    }
    Ok(())
}

/// `Ok(true)` on success, `Ok(false)` when an experiment ran but failed.
fn run(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::SampleWalk { n, k, variant, avoid, horizon, common } => {
            positive("n", n)?;
            let rule = ChoiceRule::new(variant.into(), k)?;
            let mode = match avoid {
                AvoidArg::FullPast => AvoidMode::FullPast,
                AvoidArg::LoopErasure => AvoidMode::LoopErasure,
            };
            let mut rng = RngStream::new(common.seed, 0);
            let mut state = ChoiceWalkState::new(n, mode, 0)?;
            let mut buf = Vec::new();
            for _ in 0..horizon {
                state.step(&rule, &mut rng, &mut buf);
            }
            let mut w = output(&common.out)?;
            export::write_walk_csv(&mut w, state.trajectory())?;
            w.flush()?;
        }
        Command::SampleLe { n, k, variant, horizon, common } => {
            positive("n", n)?;
            let rule = ChoiceRule::new(variant.into(), k)?;
            let z = run_le_length_process(n, &rule, horizon, &mut RngStream::new(common.seed, 0))?;
            let mut w = output(&common.out)?;
            export::write_le_csv(&mut w, &z, horizon)?;
            w.flush()?;
        }
        Command::SampleRayleigh { k, t_max, step, jumps, common } => {
            let path = sample_rayleigh(k, t_max, &mut RngStream::new(common.seed, 0))?;
            let mut w = output(&common.out)?;
            if jumps {
                export::write_jumps_csv(&mut w, &path)?;
            } else {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::Range("step must be > 0".into()));
                }
                let count = (t_max / step).floor() as usize;
                let grid: Vec<f64> = (0..=count).map(|i| i as f64 * step).filter(|&t| t <= t_max).collect();
                export::write_rayleigh_grid_csv(&mut w, &path, &grid)?;
            }
            w.flush()?;
        }
        Command::SampleTree { algo, variant, n, k, replicas, jobs, common } => {
            positive("replicas", replicas)?;
            positive("jobs", jobs)?;
            let variant: Variant = variant.into();
            let algorithm = match algo {
                AlgoArg::Ab => Algorithm::Ab,
                AlgoArg::Wilson => Algorithm::Wilson,
            };
            let sample = |r: u64| {
                let mut rng = RngStream::new(common.seed, r);
                match algorithm {
                    Algorithm::Ab => sample_ab_tree(n, k, variant, &mut rng),
                    Algorithm::Wilson => sample_wilson_tree(n, k, variant, &mut rng),
                }
            };
            if replicas == 1 {
                write_str(&common.out, &export::tree_json(&sample(0)?)?)?;
            } else {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| Error::ResourceLimit(e.to_string()))?;
                let codes: Vec<String> = pool.install(|| {
                    (0..replicas as u64)
                        .into_par_iter()
                        .map(|r| sample(r).and_then(|t| canonical_tree_code(&t)))
                        .collect::<Result<_, _>>()
                })?;
                let mut hist = BTreeMap::new();
                for c in codes {
                    *hist.entry(c).or_insert(0u64) += 1;
                }
                let mut w = output(&common.out)?;
                export::write_histogram_csv(&mut w, &hist)?;
                w.flush()?;
            }
        }
        Command::SampleSticks { beta, gamma, branches, format, points, common } => {
            let mut rng = RngStream::new(common.seed, 0);
            let (y, z, tree) = sb_sample(beta, gamma, branches, &mut rng)?;
            match format {
                Format::Json => write_str(&common.out, &export::sticks_json(beta, gamma, &y, &z)?)?,
                Format::Csv => {
                    positive("points", points)?;
                    let pts = (0..points).map(|_| sample_measure_point(&tree, gamma, &mut rng)).collect::<Result<Vec<_>, _>>()?;
                    let matrix: Vec<Vec<f64>> = pts.iter().map(|&a| pts.iter().map(|&b| tree.distance(a, b)).collect()).collect();
                    let mut w = output(&common.out)?;
                    export::write_distance_csv(&mut w, &matrix)?;
                    w.flush()?;
                }
            }
        }
        Command::Experiment { name, n, k, variant, replicas, t_max, jobs, summary, common } => {
            if !EXPERIMENTS.contains(&name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "unknown experiment '{name}'; known: {}",
                    EXPERIMENTS.join(", ")
                )));
            }
            positive("jobs", jobs)?;
            let params = ExperimentParams {
                seed: common.seed,
                jobs: Some(jobs),
                n,
                k,
                variant: variant.map(Into::into),
                replicas,
                t_max,
            };
            let start = Instant::now();
            let outcome = run_experiment(&name, &params)?;
            eprintln!("{name}: {:.2}s", start.elapsed().as_secs_f64());
            let mut reports = outcome.parts.clone();
            reports.push(outcome.report.clone());
            let mut w = output(&common.out)?;
            export::write_reports_jsonl(&mut w, &reports)?;
            w.flush()?;
            if let Some(path) = summary {
                let mut s = output(&Some(path))?;
                export::write_summary_csv(&mut s, &reports)?;
                s.flush()?;
            }
            eprintln!("{name}: {}", if outcome.report.pass { "PASS" } else { "FAIL" });
            return Ok(outcome.report.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
