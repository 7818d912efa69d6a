//! Command line for low-rank matrix recovery: solve completion problems
//! from mask/values files, run synthetic benchmark grids, complete
//! grayscale images, evaluate recovery-guarantee constants, and run the
//! built-in verification suite.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matrec_core::analysis::{eta_from_rip, lambda_bound, prop_mini_threshold};
use matrec_core::bench::{fmt_sig8, rows_to_csv, run_grid, TrialSpec};
use matrec_core::fileio::{read_mask_text, read_values_text, write_matrix_text};
use matrec_core::image::{complete_image, read_pgm, sample_pixels, write_pgm};
use matrec_core::selfcheck;
use matrec_core::{solve, MeasurementOp, SolverConfig, SolverPath};

#[derive(Parser)]
#[command(
    name = "matrec",
    version,
    about = "Low-rank matrix recovery via iteratively reweighted least squares"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a matrix from a mask file and a values file.
    Solve(SolveArgs),
    /// Run seeded synthetic completion trials and emit CSV.
    Synth(SynthArgs),
    /// Complete a grayscale PGM image from a subset of pixels.
    Image(ImageArgs),
    /// Evaluate the recovery-guarantee constants eta and Lambda.
    Theory(TheoryArgs),
    /// Run the built-in oracle and invariant suite.
    Check(CheckArgs),
}

#[derive(Args, Clone)]
struct SolverOpts {
    /// Target rank K.
    #[arg(short = 'K', long = "rank")]
    rank: usize,
    /// Shrinkage factor applied to sigma_{K+1} in the eps update.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Relative eps change counted as a stall.
    #[arg(long, default_value_t = 1e-6)]
    eps_tol: f64,
    /// Consecutive stalled iterations needed to stop.
    #[arg(long, default_value_t = 50)]
    eps_stall: usize,
    /// Update path: auto, dense, or woodbury.
    #[arg(long, default_value = "auto")]
    path: String,
}

impl SolverOpts {
    fn to_config(&self) -> Result<SolverConfig, String> {
        let path = match self.path.as_str() {
            "auto" => SolverPath::Auto,
            "dense" => SolverPath::Dense,
            "woodbury" => SolverPath::Woodbury,
            other => return Err(format!("unknown path '{other}' (expected auto, dense, or woodbury)")),
        };
        Ok(SolverConfig::new(self.rank)
            .with_gamma(self.gamma)
            .with_max_iter(self.max_iter)
            .with_stall(self.eps_tol, self.eps_stall)
            .with_path(path))
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Mask file: header "n p", then one "row col" pair per line.
    #[arg(long)]
    mask: PathBuf,
    /// Values file: one real per mask line.
    #[arg(long)]
    values: PathBuf,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output matrix file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Planted rank of the ground-truth matrices.
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    /// Observed fractions; comma-separated list runs a grid.
    #[arg(long, default_value = "0.35", value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Additive noise level on the observed entries.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the original experiment dimensions (n = p = 500).
    #[arg(long)]
    paper_scale: bool,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output CSV file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImageArgs {
    /// Input PGM image (P5 or P2, maxval <= 255).
    input: PathBuf,
    /// Fraction of pixels to observe (ignored when --mask is given).
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    /// Explicit mask file instead of sampling by fraction.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output PGM file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    /// Restricted isometry constant delta_{3k}.
    #[arg(long)]
    delta3k: f64,
    /// Restricted isometry constant delta_{4k}.
    #[arg(long)]
    delta4k: f64,
    /// Working rank K of the solver.
    #[arg(short = 'K', long = "K")]
    big_k: usize,
    /// Rank k of the matrices to be recovered.
    #[arg(short = 'k', long = "k")]
    k: usize,
    /// Emit machine-readable CSV instead of the text report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 20260809)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Image(args) => cmd_image(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, String> {
    let cfg = args.solver.to_config()?;
    let mask_text = fs::read_to_string(&args.mask).map_err(|e| format!("{}: {e}", args.mask.display()))?;
    let (n, p, mask) = read_mask_text(&mask_text).map_err(|e| e.to_string())?;
    let values_text =
        fs::read_to_string(&args.values).map_err(|e| format!("{}: {e}", args.values.display()))?;
    let values = read_values_text(&values_text).map_err(|e| e.to_string())?;
    let op = MeasurementOp::completion(n, p, &mask).map_err(|e| e.to_string())?;
    let m = op.vec_from_pairs(&mask, &values).map_err(|e| e.to_string())?;
    let report = solve(&op, &m, &cfg).map_err(|e| e.to_string())?;
    let last = report.trace.last().expect("trace is nonempty");
    eprintln!(
        "solved {n}x{p} from {} entries: {} iterations, stop {}, final eps {}",
        mask.len(),
        report.iterations,
        report.stop_reason,
        fmt_sig8(last.eps)
    );
    let text = write_matrix_text(&report.x_final);
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, String> {
    let cfg = args.solver.to_config()?;
    let (n, p) = if args.paper_scale { (500, 500) } else { (args.n, args.p) };
    let specs: Vec<TrialSpec> = args
        .kappa
        .iter()
        .map(|&kappa| TrialSpec {
            n,
            p,
            k: args.k,
            kappa,
            noise_sigma: args.noise,
            seed: args.seed,
            solver: cfg.clone(),
        })
        .collect();
    let rows = run_grid(&specs, args.trials).map_err(|e| e.to_string())?;
    let csv = rows_to_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_image(args: ImageArgs) -> Result<ExitCode, String> {
    let cfg = args.solver.to_config()?;
    let bytes = fs::read(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let img = read_pgm(&bytes).map_err(|e| e.to_string())?;
    let mask = match &args.mask {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let (n, p, mask) = read_mask_text(&text).map_err(|e| e.to_string())?;
            if n != img.height() || p != img.width() {
                return Err(format!(
                    "mask is for a {n}x{p} matrix but the image is {}x{}",
                    img.height(),
                    img.width()
                ));
            }
            mask
        }
        None => sample_pixels(&img, args.fraction, args.seed).map_err(|e| e.to_string())?,
    };
    let out = complete_image(&img, &mask, &cfg).map_err(|e| e.to_string())?;
    eprintln!(
        "completed {}x{} image from {} pixels: {} iterations, stop {}",
        img.width(),
        img.height(),
        mask.len(),
        out.report.iterations,
        out.report.stop_reason
    );
    fs::write(&args.out, write_pgm(&out.image)).map_err(|e| format!("{}: {e}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_theory(args: TheoryArgs) -> Result<ExitCode, String> {
    let eta = eta_from_rip(args.delta3k, args.delta4k).map_err(|e| e.to_string())?;
    let threshold = prop_mini_threshold(args.big_k);
    let converges = threshold.map(|t| eta < t);
    let lambda = lambda_bound(eta, args.big_k, args.k);
    if args.csv {
        println!("quantity,value");
        println!("eta,{}", fmt_sig8(eta));
        println!(
            "eta_threshold,{}",
            threshold.map(fmt_sig8).unwrap_or_default()
        );
        println!(
            "eta_below_threshold,{}",
            converges.map(|b| b.to_string()).unwrap_or_default()
        );
        println!(
            "lambda,{}",
            lambda.as_ref().map(|&l| fmt_sig8(l)).unwrap_or_default()
        );
    } else {
        println!("eta = {}", fmt_sig8(eta));
        match (threshold, converges) {
            (Some(t), Some(ok)) => println!(
                "convergence check (gamma = 1/n): eta < 1 - 2/(K-2) = {} -> {}",
                fmt_sig8(t),
                if ok { "satisfied" } else { "NOT satisfied" }
            ),
            _ => println!("convergence check (gamma = 1/n): requires K > 2"),
        }
        match &lambda {
            Ok(l) => println!("Lambda = {}", fmt_sig8(*l)),
            Err(e) => println!("Lambda: {e}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode, String> {
    let outcomes = selfcheck::run_all(args.seed);
    let mut all_pass = true;
    for out in &outcomes {
        println!("{} {:<28} {}", if out.pass { "PASS" } else { "FAIL" }, out.name, out.detail);
        all_pass &= out.pass;
    }
    println!(
        "{} of {} checks passed",
        outcomes.iter().filter(|o| o.pass).count(),
        outcomes.len()
    );
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
