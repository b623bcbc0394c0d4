use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsm_cli::config::parse_pairs;
use rsm_cli::{run, CliError, Command, RunConfig};

/// Response-surface models for drug-combination dose-response data.
#[derive(Parser)]
#[command(name = "rsm", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit each model on each design and save the fitted models.
    Fit(Opts),
    /// Replicated design-by-model comparison table.
    Compare(Opts),
    /// Observed vs predicted pairs over the full grid.
    Scatter(Opts),
    /// Prediction grids over two factors with the third held fixed.
    Contour(Opts),
    /// One-dimensional correlation curves for a set of range parameters.
    KernelCurve(Opts),
    /// Write the grid and a synthetic dataset as CSV.
    GenSynthetic(Opts),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<String>,
    },
}

/// Every flag overrides the matching key of `--config`.
#[derive(Args)]
struct Opts {
    /// `key = value` configuration file (a manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data CSV; built-in synthetic data when omitted.
    #[arg(long)]
    data: Option<String>,
    /// Dose grid CSV.
    #[arg(long)]
    grid: Option<String>,
    /// Synthetic source: cells, normal, cancer, quadratic or gp.
    #[arg(long)]
    synthetic: Option<String>,
    /// Noise SD added to synthetic truth.
    #[arg(long)]
    noise: Option<String>,
    /// Comma-separated models: kriging, quadratic, hill, mlp.
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated design families, e.g. D_full,RD80,D047.
    #[arg(long)]
    designs: Option<String>,
    /// Kernel: matern-p (p = 0, 1, 2, ...) or gaussian.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    tau2: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Network restarts.
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long)]
    kriging_restarts: Option<String>,
    #[arg(long)]
    hill_starts: Option<String>,
    /// Network trainer: rprop or gd.
    #[arg(long)]
    mlp_trainer: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Factor held fixed in contour grids: A, B or C.
    #[arg(long)]
    fixed_factor: Option<String>,
    /// Standardized value of the fixed factor.
    #[arg(long)]
    fixed_value: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    /// Comma-separated range parameters for kernel curves.
    #[arg(long)]
    thetas: Option<String>,
    #[arg(long)]
    h_max: Option<String>,
    #[arg(long)]
    points: Option<String>,
    /// Bootstrap resamples for Kriging parameter SDs.
    #[arg(long)]
    bootstrap: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Result<BTreeMap<String, String>, CliError> {
        let mut pairs = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => BTreeMap::new(),
        };
        let flags = [
            ("data", &self.data),
            ("grid", &self.grid),
            ("synthetic", &self.synthetic),
            ("noise", &self.noise),
            ("models", &self.models),
            ("designs", &self.designs),
            ("kernel", &self.kernel),
            ("tau2", &self.tau2),
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("restarts", &self.restarts),
            ("kriging_restarts", &self.kriging_restarts),
            ("hill_starts", &self.hill_starts),
            ("mlp_trainer", &self.mlp_trainer),
            ("out", &self.out),
            ("fixed_factor", &self.fixed_factor),
            ("fixed_value", &self.fixed_value),
            ("resolution", &self.resolution),
            ("thetas", &self.thetas),
            ("h_max", &self.h_max),
            ("points", &self.points),
            ("bootstrap", &self.bootstrap),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.insert(k.to_string(), v.clone());
            }
        }
        Ok(pairs)
    }
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (command, pairs) = match cli.command {
        Cmd::Fit(o) => (Command::Fit, o.pairs()?),
        Cmd::Compare(o) => (Command::Compare, o.pairs()?),
        Cmd::Scatter(o) => (Command::Scatter, o.pairs()?),
        Cmd::Contour(o) => (Command::Contour, o.pairs()?),
        Cmd::KernelCurve(o) => (Command::KernelCurve, o.pairs()?),
        Cmd::GenSynthetic(o) => (Command::GenSynthetic, o.pairs()?),
        Cmd::Replay { manifest, out } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| CliError::Io {
                path: manifest.clone(),
                source: e,
            })?;
            let mut pairs = parse_pairs(&text)?;
            let command = pairs
                .get("command")
                .ok_or_else(|| CliError::Config(format!("{}: no command recorded", manifest.display())))?;
            let command = Command::parse(command)?;
            if let Some(out) = out {
                pairs.insert("out".into(), out);
            }
            (command, pairs)
        }
    };
    let config = RunConfig::from_pairs(&pairs)?;
    run(command, &config)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rsm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
