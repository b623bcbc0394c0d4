//! The subcommands. Each writes its outputs plus `manifest.txt` into the
//! configured output directory and returns the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rsm_core::designs::{DoseGrid, Provenance};
use rsm_core::evaluation::{
    contour_grid, model_seed, mse, pearson, run_comparison, scatter_data, split_seed, write_scatter_csv,
    CombinationSurface, ContourGrid, DesignFamily, Truth,
};
use rsm_core::gp::parameter_report_bootstrap;
use rsm_core::kernels::kernel_curve;
use rsm_core::model::{FittedModel, ModelKind, ModelSettings};
use rsm_core::synthetic::synthetic_dataset;
use rsm_core::{Dataset, KernelSpec};

use crate::config::{RunConfig, SyntheticSource};
use crate::error::{CliError, Result};
use crate::ingest::{ingest_path, write_data_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Compare,
    Contour,
    Scatter,
    KernelCurve,
    GenSynthetic,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Compare => "compare",
            Command::Contour => "contour",
            Command::Scatter => "scatter",
            Command::KernelCurve => "kernel-curve",
            Command::GenSynthetic => "gen-synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "fit" => Command::Fit,
            "compare" => Command::Compare,
            "contour" => Command::Contour,
            "scatter" => Command::Scatter,
            "kernel-curve" => Command::KernelCurve,
            "gen-synthetic" => Command::GenSynthetic,
            other => return Err(CliError::Config(format!("unknown command {other:?}"))),
        })
    }
}

/// Runs `command`, writing the manifest first so every run leaves one behind.
pub fn run(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let manifest = config.out.join("manifest.txt");
    write_text(&manifest, &config.to_manifest(command.name()))?;
    let mut written = match command {
        Command::Fit => cmd_fit(config)?,
        Command::Compare => cmd_compare(config)?,
        Command::Contour => cmd_contour(config)?,
        Command::Scatter => cmd_scatter(config)?,
        Command::KernelCurve => cmd_kernel_curve(config)?,
        Command::GenSynthetic => cmd_gen_synthetic(config)?,
    };
    written.insert(0, manifest);
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn load_grid(config: &RunConfig) -> Result<DoseGrid> {
    match &config.grid {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::io(p, e))?;
            Ok(DoseGrid::read_csv(f)?)
        }
        None => Ok(DoseGrid::default_grid()),
    }
}

/// Calibrated synthetic viability surfaces for the two cell types.
pub fn cell_surfaces() -> [(&'static str, CombinationSurface); 2] {
    [
        ("normal", CombinationSurface::normal_cell()),
        ("cancer", CombinationSurface::cancer_cell()),
    ]
}

/// Synthetic datasets over the full grid, clamped to `[0, 1]` like
/// standardized measurements.
pub fn synthetic_datasets(
    source: SyntheticSource,
    grid: &DoseGrid,
    noise: f64,
    seed: u64,
) -> Result<Vec<(String, Dataset)>> {
    let truths: Vec<(String, Truth)> = match source {
        SyntheticSource::Cells => cell_surfaces()
            .into_iter()
            .map(|(n, s)| (n.to_string(), Truth::Combination(s)))
            .collect(),
        SyntheticSource::Normal => vec![("normal".into(), Truth::Combination(CombinationSurface::normal_cell()))],
        SyntheticSource::Cancer => vec![("cancer".into(), Truth::Combination(CombinationSurface::cancer_cell()))],
        SyntheticSource::Quadratic => vec![("quadratic".into(), Truth::Quadratic)],
        SyntheticSource::Gp => vec![(
            "gp".into(),
            Truth::GaussianProcess {
                kernel: KernelSpec::matern52(),
                thetas: vec![1.24, 2.0, 1.24],
                sigma2: 0.04,
                mu: 0.6,
            },
        )],
    };
    let data_seed = split_seed(seed, 0xDA7A);
    truths
        .into_iter()
        .enumerate()
        .map(|(k, (name, truth))| {
            let ds = synthetic_dataset(grid, &truth, noise, split_seed(data_seed, k as u64), true)?;
            Ok((name, ds))
        })
        .collect()
}

pub fn load_datasets(config: &RunConfig, grid: &DoseGrid) -> Result<Vec<(String, Dataset)>> {
    match &config.data {
        Some(p) => ingest_path(p, grid),
        None => synthetic_datasets(config.synthetic, grid, config.noise, config.seed),
    }
}

/// Training data for `family` (replicate 0) and the seed used to fit on it.
/// Data that does not cover the grid is used as-is under the label `data`.
fn training_set(
    ds: &Dataset,
    grid: &DoseGrid,
    family: &DesignFamily,
    seed: u64,
) -> Result<(String, Dataset, u64)> {
    if ds.design.provenance != Provenance::FullFactorial {
        return Ok(("data".into(), ds.clone(), family.design_seed(seed, 0)));
    }
    let design_seed = family.design_seed(seed, 0);
    let design = family.realize(&ds.design, grid, design_seed)?;
    Ok((family.to_string(), ds.subset(&design)?, design_seed))
}

fn fit_one(
    kind: ModelKind,
    train: &Dataset,
    grid: &DoseGrid,
    settings: &ModelSettings,
    design_seed: u64,
) -> Result<FittedModel> {
    Ok(FittedModel::fit(kind, train, grid, settings, model_seed(design_seed, kind))?)
}

fn unique_designs(config: &RunConfig, ds: &Dataset) -> Vec<DesignFamily> {
    if ds.design.provenance == Provenance::FullFactorial {
        config.designs.clone()
    } else {
        config.designs.first().cloned().into_iter().collect()
    }
}

pub fn cmd_fit(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = load_grid(config)?;
    let settings = config.settings();
    let mut written = Vec::new();
    for (name, ds) in load_datasets(config, &grid)? {
        let mut summary = String::from("model,design,n,mse,r\n");
        for family in unique_designs(config, &ds) {
            let (label, train, design_seed) = training_set(&ds, &grid, &family, config.seed)?;
            for &kind in &config.models {
                let model = fit_one(kind, &train, &grid, &settings, design_seed)?;
                let path = config.out.join(format!("{name}_{}_{label}.model.txt", kind.key()));
                write_text(&path, &model.to_document().to_string())?;
                written.push(path);
                if let FittedModel::Kriging(m) = &model {
                    let mut cfg = settings.kriging.clone();
                    cfg.seed = model_seed(design_seed, kind);
                    let report = parameter_report_bootstrap(m, &cfg, config.bootstrap, split_seed(design_seed, 0xB007))?;
                    let path = config.out.join(format!("{name}_kriging_{label}.params.txt"));
                    write_text(&path, &report.render())?;
                    written.push(path);
                }
                let pred = model.predict_batch(ds.rows())?;
                let r = pearson(&pred, &ds.responses).map_or(String::new(), |r| format!("{r:e}"));
                summary.push_str(&format!(
                    "{},{label},{},{:e},{r}\n",
                    kind.key(),
                    train.n_runs(),
                    mse(&pred, &ds.responses)?
                ));
            }
        }
        let path = config.out.join(format!("{name}_fit.csv"));
        write_text(&path, &summary)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_compare(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = load_grid(config)?;
    let settings = config.settings();
    let mut written = Vec::new();
    for (name, ds) in load_datasets(config, &grid)? {
        let report = run_comparison(
            &ds,
            &grid,
            &config.models,
            &config.designs,
            config.replicates,
            config.seed,
            &settings,
        )?;
        let table = config.out.join(format!("{name}_table.txt"));
        write_text(&table, &format!("{name}\n{}", report.comparison_table()))?;
        let csv = config.out.join(format!("{name}_report.csv"));
        write_with(&csv, |w| Ok(report.write_csv(w)?))?;
        written.push(table);
        written.push(csv);
    }
    Ok(written)
}

pub fn cmd_scatter(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = load_grid(config)?;
    let settings = config.settings();
    let mut written = Vec::new();
    for (name, ds) in load_datasets(config, &grid)? {
        for family in unique_designs(config, &ds) {
            let (label, train, design_seed) = training_set(&ds, &grid, &family, config.seed)?;
            for &kind in &config.models {
                let model = fit_one(kind, &train, &grid, &settings, design_seed)?;
                let pairs = scatter_data(&model, &ds)?;
                let path = config.out.join(format!("{name}_{}_{label}_scatter.csv", kind.key()));
                write_with(&path, |w| Ok(write_scatter_csv(&pairs, w)?))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn cmd_contour(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = load_grid(config)?;
    let settings = config.settings();
    let mut written = Vec::new();
    for (name, ds) in load_datasets(config, &grid)? {
        let mut diffs = String::from("model,design,reference,max_abs_difference\n");
        for &kind in &config.models {
            let mut reference: Option<(String, ContourGrid)> = None;
            for family in unique_designs(config, &ds) {
                let (label, train, design_seed) = training_set(&ds, &grid, &family, config.seed)?;
                let model = fit_one(kind, &train, &grid, &settings, design_seed)?;
                let g = contour_grid(&model, config.fixed_factor, config.fixed_value, config.resolution)?;
                let path = config.out.join(format!("{name}_{}_{label}_contour.csv", kind.key()));
                write_with(&path, |w| Ok(g.write_csv(w)?))?;
                written.push(path);
                match &reference {
                    None => reference = Some((label, g)),
                    Some((ref_label, r)) => {
                        diffs.push_str(&format!("{},{label},{ref_label},{:e}\n", kind.key(), g.max_abs_difference(r)?));
                    }
                }
            }
        }
        if diffs.lines().count() > 1 {
            let path = config.out.join(format!("{name}_contour_differences.csv"));
            write_text(&path, &diffs)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_kernel_curve(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let curve = kernel_curve(config.kernel, &config.thetas, config.h_max, config.points)?;
    let path = config.out.join("kernel_curve.csv");
    write_with(&path, |w| Ok(curve.write_csv(w)?))?;
    Ok(vec![path])
}

pub fn cmd_gen_synthetic(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = load_grid(config)?;
    let sets = synthetic_datasets(config.synthetic, &grid, config.noise, config.seed)?;
    let grid_path = config.out.join("grid.csv");
    write_with(&grid_path, |w| Ok(grid.write_csv(w)?))?;
    let data_path = config.out.join("data.csv");
    write_with(&data_path, |w| write_data_csv(&sets, w))?;
    Ok(vec![grid_path, data_path])
}
