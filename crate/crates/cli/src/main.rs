//! Command-line entry point: experiment sweeps, the analytic verification
//! suite, scree data from checkpoints, and synthetic dataset generation.

mod config;
mod experiment;
mod theory;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use eigengame_core::dataset::{
    read_matrix_binary, read_matrix_csv, write_matrix_binary, write_matrix_csv, FileFormat,
};
use eigengame_core::eigengame::load_checkpoint;
use eigengame_core::linalg::{make_spectrum, synthetic_matrix, Gram, SpectrumKind, SpectrumSpec};
use eigengame_core::metrics::rayleigh_quotients;

use config::{ExperimentConfig, RawConfig};

#[derive(Parser)]
#[command(name = "eigengame", about = "Streaming top-k PCA as a k-player game", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct SpectrumArgs {
    /// Synthetic spectrum kind: linear, exponential or bubble.
    #[arg(long)]
    spectrum: Option<String>,
    /// Problem dimension for synthetic spectra.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    /// Bubble index range `lo:hi` (1-based, inclusive).
    #[arg(long)]
    bubble: Option<String>,
    /// Conjugate the diagonal by a seeded random rotation.
    #[arg(long)]
    rotate: bool,
}

impl SpectrumArgs {
    fn raw(&self) -> RawConfig {
        RawConfig {
            spectrum_kind: self.spectrum.clone(),
            d: self.d,
            lambda_max: self.lambda_max,
            lambda_min: self.lambda_min,
            bubble: self.bubble.clone(),
            rotate: if self.rotate { Some(true) } else { None },
            ..Default::default()
        }
    }

    fn to_spec(&self, default_d: usize) -> anyhow::Result<SpectrumSpec> {
        let kind = match self.spectrum.as_deref().unwrap_or("linear") {
            "linear" => SpectrumKind::Linear,
            "exponential" | "exp" => SpectrumKind::Exponential,
            "bubble" => SpectrumKind::Bubble,
            other => bail!("unknown spectrum kind `{other}`"),
        };
        let bubble_range = match &self.bubble {
            Some(s) => {
                let parts: Vec<&str> = s.split(&[':', '-'][..]).collect();
                if parts.len() != 2 {
                    bail!("bubble range `{s}` must look like `lo:hi`");
                }
                Some((parts[0].trim().parse()?, parts[1].trim().parse()?))
            }
            None => None,
        };
        Ok(SpectrumSpec {
            kind: if bubble_range.is_some() { SpectrumKind::Bubble } else { kind },
            d: self.d.unwrap_or(default_d),
            lambda_max: self.lambda_max.unwrap_or(1000.0),
            lambda_min: self.lambda_min.unwrap_or(1.0),
            bubble_range,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write per-arm plus aggregate metric CSVs.
    Run {
        /// Config file (flat key = value, or JSON); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Update rule(s), comma separated: eigengame, eigengame-r, oja,
        /// gha, hebb-deflation, krasulina.
        #[arg(long)]
        rule: Option<String>,
        /// Step size(s), comma separated.
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Streak tolerance in radians.
        #[arg(long)]
        tol_rad: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Mean-center dataset columns before use.
        #[arg(long)]
        centered: bool,
        /// Dataset file to run on (instead of a synthetic spectrum).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Dataset format: csv or binary.
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        spectrum: SpectrumArgs,
    },
    /// Run the analytic verification suite against a synthetic spectrum.
    Theory {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value = "theory-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-component Rayleigh quotient, utility and penalty ratio from a
    /// checkpoint.
    Scree {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file supplying the operator.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value = "scree.csv")]
        out: PathBuf,
        #[arg(long)]
        centered: bool,
    },
    /// Generate a synthetic dataset whose Gram matrix realizes a spectrum.
    GenData {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        /// Number of samples (rows).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_operator(
    data: &Option<PathBuf>,
    format: &Option<String>,
    spectrum: &SpectrumArgs,
    centered: bool,
    seed: u64,
) -> anyhow::Result<nalgebra::DMatrix<f64>> {
    if let Some(path) = data {
        let fmt: FileFormat = format.as_deref().unwrap_or("csv").parse()?;
        let mut x = match fmt {
            FileFormat::Csv => read_matrix_csv(path)?,
            FileFormat::Binary => read_matrix_binary(path)?,
        };
        if centered {
            let n = x.nrows() as f64;
            for j in 0..x.ncols() {
                let mean = x.column(j).sum() / n;
                x.column_mut(j).add_scalar_mut(-mean);
            }
        }
        Ok(x.transpose() * &x)
    } else {
        let spec = spectrum.to_spec(50)?;
        let (m, _) = synthetic_matrix(&spec, spectrum.rotate, seed)?;
        Ok(m)
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            k,
            rule,
            alpha,
            batch,
            iters,
            trials,
            seed,
            tol_rad,
            out,
            centered,
            data,
            format,
            spectrum,
        } => {
            let mut cfg = ExperimentConfig::default();
            if let Some(path) = &config {
                RawConfig::from_file(path)
                    .with_context(|| format!("reading config {}", path.display()))?
                    .apply(&mut cfg)?;
            }
            // Flag layer overrides the file layer.
            spectrum.raw().apply(&mut cfg)?;
            let flags = RawConfig {
                k,
                rules: rule,
                alpha,
                batch,
                iters,
                trials,
                seed,
                tol_rad,
                out: out.map(|p| p.display().to_string()),
                centered: if centered { Some(true) } else { None },
                dataset_path: data.as_ref().map(|p| p.display().to_string()),
                dataset_format: format,
                problem: data.is_some().then(|| "dataset".to_string()),
                ..Default::default()
            };
            flags.apply(&mut cfg)?;
            let summary = experiment::run_experiment(&cfg)?;
            println!(
                "wrote {} arm files, {} and {}",
                summary.arm_files.len(),
                summary.aggregate_file.display(),
                summary.best_file.display()
            );
        }
        Command::Theory { spectrum, out, seed } => {
            let spec = spectrum.to_spec(8)?;
            let (report, path) = theory::theory_suite(&spec, &out, seed)?;
            for c in &report.checks {
                println!("{:<32} {:?} (residual {:.3e})", c.name, c.status, c.residual);
            }
            println!("report: {}", path.display());
            if !report.all_passed {
                bail!("theory suite failed");
            }
        }
        Command::Scree { checkpoint, data, format, spectrum, out, centered } => {
            let state = load_checkpoint(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let m = load_operator(&data, &format, &spectrum, centered, state.seed())?;
            if m.nrows() != state.dim() {
                bail!(
                    "checkpoint dimension {} does not match operator dimension {}",
                    state.dim(),
                    m.nrows()
                );
            }
            let rep = rayleigh_quotients(state.v_hat(), Gram::Matrix(&m))?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(f, "component,rayleigh,utility,penalty_ratio")?;
            for i in 0..state.k() {
                writeln!(
                    f,
                    "{},{:.17e},{:.17e},{:.17e}",
                    i + 1,
                    rep.quotients[i],
                    rep.utilities[i],
                    rep.penalty_ratios[i]
                )?;
            }
            f.flush()?;
            println!("wrote {}", out.display());
        }
        Command::GenData { spectrum, n, seed, format, out } => {
            let spec = spectrum.to_spec(50)?;
            let lambda = make_spectrum(&spec)?;
            let (_, truth) = synthetic_matrix(&spec, spectrum.rotate, seed)?;
            let x = experiment::samples_with_gram(&lambda, &truth.v, n, seed)?;
            match format.parse::<FileFormat>()? {
                FileFormat::Csv => write_matrix_csv(&out, &x)?,
                FileFormat::Binary => write_matrix_binary(&out, &x)?,
            }
            println!("wrote {} ({n} x {})", out.display(), spec.d);
        }
    }
    Ok(())
}
