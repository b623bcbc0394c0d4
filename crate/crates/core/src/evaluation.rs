//! Model-versus-design comparison harness.
//!
//! Every model is fitted on the runs of a design and scored against the
//! responses of the whole grid (training runs included). Random design
//! families are averaged over seeded replicates; failed fits are counted and
//! left out of the means.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::designs::{factor_label, level_subset_factorial, random_subdesign, Design, DoseGrid};
use crate::error::{domain, Error, Result};
use crate::model::{FittedModel, ModelKind, ModelSettings};

pub use crate::synthetic::{gp_draw, quadratic_surface, synthetic_dataset, truth_values, CombinationSurface, Truth};

/// Derives an independent child seed (splitmix64 over `master` and `index`).
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_lengths(pred: &[f64], obs: &[f64]) -> Result<()> {
    if pred.len() != obs.len() {
        return domain(format!("length mismatch: {} predictions, {} observations", pred.len(), obs.len()));
    }
    if pred.is_empty() {
        return domain("cannot score empty vectors");
    }
    Ok(())
}

pub fn mse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_lengths(pred, obs)?;
    Ok(pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / pred.len() as f64)
}

/// Sample Pearson correlation; undefined when either vector is constant.
pub fn pearson(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_lengths(pred, obs)?;
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mo = obs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, o) in pred.iter().zip(obs) {
        let (dp, d_o) = (p - mp, o - mo);
        sxy += dp * d_o;
        sxx += dp * dp;
        syy += d_o * d_o;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = if sxx == 0.0 { "predictions" } else { "observations" };
        return Err(Error::UndefinedCorrelation(format!("{which} are constant")));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// A rule for realizing designs from the full grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DesignFamily {
    Full,
    /// Full factorial over the given level codes of every factor.
    LevelSubset(Vec<usize>),
    /// Uniform random sub-designs of `n` runs, one per replicate.
    Random { n: usize },
}

impl DesignFamily {
    pub fn is_random(&self) -> bool {
        matches!(self, DesignFamily::Random { .. })
    }

    /// Runs in a realized design on `grid`.
    pub fn n_runs(&self, grid: &DoseGrid) -> usize {
        match self {
            DesignFamily::Full => grid.n_runs_full(),
            DesignFamily::LevelSubset(codes) => codes.len().pow(grid.n_factors() as u32),
            DesignFamily::Random { n } => *n,
        }
    }

    /// Stable numeric tag mixed into replicate seeds (FNV-1a of the name).
    fn tag(&self) -> u64 {
        self.to_string()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }

    /// Seed of the design used in `replicate`. Shared by all models so that
    /// they are compared on identical designs.
    pub fn design_seed(&self, master: u64, replicate: usize) -> u64 {
        split_seed(split_seed(master, self.tag()), replicate as u64)
    }

    pub fn realize(&self, full: &Design, grid: &DoseGrid, seed: u64) -> Result<Design> {
        match self {
            DesignFamily::Full => Ok(full.clone()),
            DesignFamily::LevelSubset(codes) => level_subset_factorial(grid, codes),
            DesignFamily::Random { n } => random_subdesign(full, *n, seed),
        }
    }
}

impl fmt::Display for DesignFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignFamily::Full => write!(f, "D_full"),
            DesignFamily::LevelSubset(codes) => {
                write!(f, "D")?;
                if codes.iter().any(|c| *c > 9) {
                    let parts: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
                    write!(f, "{}", parts.join("-"))
                } else {
                    codes.iter().try_for_each(|c| write!(f, "{c}"))
                }
            }
            DesignFamily::Random { n } => write!(f, "RD{n}"),
        }
    }
}

impl FromStr for DesignFamily {
    type Err = Error;

    /// Accepts `D_full`/`full`, `RD<n>`, and `D<codes>` with single digits
    /// (`D047`) or dash-separated codes (`D0-4-7`).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        if lower == "d_full" || lower == "full" || lower == "dfull" {
            return Ok(DesignFamily::Full);
        }
        let bad = || Error::Parse(format!("unknown design family {t:?}"));
        if let Some(n) = lower.strip_prefix("rd") {
            let n: usize = n.parse().map_err(|_| bad())?;
            return Ok(DesignFamily::Random { n });
        }
        if let Some(rest) = lower.strip_prefix('d') {
            let codes: Vec<usize> = if rest.contains('-') {
                rest.split('-').map(|c| c.parse().map_err(|_| bad())).collect::<Result<_>>()?
            } else {
                rest.chars()
                    .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                    .collect::<Result<_>>()?
            };
            if codes.is_empty() {
                return Err(bad());
            }
            return Ok(DesignFamily::LevelSubset(codes));
        }
        Err(bad())
    }
}

/// Outcome of one replicate of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub design_seed: u64,
    pub mse: Option<f64>,
    pub r: Option<f64>,
    /// Why the fit or the scoring failed; `None` on success.
    pub failure: Option<String>,
}

/// One (model, design family) cell of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub model: ModelKind,
    pub design: DesignFamily,
    pub replicates: Vec<ReplicateResult>,
}

impl CellResult {
    pub fn n_replicates(&self) -> usize {
        self.replicates.len()
    }

    pub fn n_failed(&self) -> usize {
        self.replicates.iter().filter(|r| r.failure.is_some()).count()
    }

    /// Mean MSE over successful replicates.
    pub fn mean_mse(&self) -> Option<f64> {
        mean(self.replicates.iter().filter(|r| r.failure.is_none()).filter_map(|r| r.mse))
    }

    /// Mean Pearson r over successful replicates.
    pub fn mean_r(&self) -> Option<f64> {
        mean(self.replicates.iter().filter(|r| r.failure.is_none()).filter_map(|r| r.r))
    }

    /// `1000 * mean MSE`, the value shown in tables.
    pub fn scaled_mse(&self) -> Option<f64> {
        self.mean_mse().map(|m| 1000.0 * m)
    }

    pub fn display(&self) -> String {
        match (self.mean_mse(), self.mean_r()) {
            (Some(m), Some(r)) => format_cell(m, r),
            _ => "n/a".to_string(),
        }
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Table cell: `1000 * MSE` and `100 * r` with two decimals each.
pub fn format_cell(mse: f64, r: f64) -> String {
    format!("{:.2}({:.2}%)", 1000.0 * mse, 100.0 * r)
}

/// Fits `model` on `design` and scores predictions over the whole grid.
fn score_replicate(
    full: &Dataset,
    grid: &DoseGrid,
    design: &Design,
    model: ModelKind,
    settings: &ModelSettings,
    model_seed: u64,
) -> Result<(f64, f64)> {
    let train = full.subset(design)?;
    let fitted = FittedModel::fit(model, &train, grid, settings, model_seed)?;
    let pred = fitted.predict_batch(full.rows())?;
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed {
            diagnostics: vec!["non-finite prediction".into()],
        });
    }
    Ok((mse(&pred, &full.responses)?, pearson(&pred, &full.responses)?))
}

/// Seed handed to the model fit in one replicate.
pub fn model_seed(design_seed: u64, model: ModelKind) -> u64 {
    let idx = ModelKind::ALL.iter().position(|k| *k == model).unwrap_or(0);
    split_seed(design_seed, 1 + idx as u64)
}

fn run_parallel<T: Send>(count: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1));
    if threads <= 1 {
        return (0..count).map(job).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = job(i);
                results.lock().expect("result lock")[i] = Some(v);
            });
        }
    });
    slots.into_iter().map(|v| v.expect("every replicate ran")).collect()
}

/// Evaluates one (model, design family) cell.
///
/// Fixed families run a single replicate whatever `replicates` says. A design
/// too small for the model is a configuration error raised before any fit.
pub fn run_cell(
    full: &Dataset,
    grid: &DoseGrid,
    family: &DesignFamily,
    model: ModelKind,
    replicates: usize,
    master_seed: u64,
    settings: &ModelSettings,
) -> Result<CellResult> {
    if full.n_runs() != grid.n_runs_full() {
        return Err(Error::Config(format!(
            "full dataset has {} runs, the grid has {}",
            full.n_runs(),
            grid.n_runs_full()
        )));
    }
    let n = family.n_runs(grid);
    let needed = model.min_runs(grid.n_factors());
    if n < needed {
        return Err(Error::Config(format!(
            "{} needs at least {needed} runs but {family} has {n}",
            model.label()
        )));
    }
    if n > grid.n_runs_full() {
        return Err(Error::Config(format!("{family} asks for more runs than the grid has")));
    }
    let reps = if family.is_random() { replicates.max(1) } else { 1 };
    let full_design = &full.design;
    let results = run_parallel(reps, |rep| {
        let design_seed = family.design_seed(master_seed, rep);
        let outcome = family
            .realize(full_design, grid, design_seed)
            .and_then(|d| score_replicate(full, grid, &d, model, settings, model_seed(design_seed, model)));
        match outcome {
            Ok((m, r)) => ReplicateResult {
                replicate: rep,
                design_seed,
                mse: Some(m),
                r: Some(r),
                failure: None,
            },
            Err(e) => ReplicateResult {
                replicate: rep,
                design_seed,
                mse: None,
                r: None,
                failure: Some(format!("design seed {design_seed}: {e}")),
            },
        }
    });
    Ok(CellResult {
        model,
        design: family.clone(),
        replicates: results,
    })
}

/// All cells of a comparison in configuration order (models outer, designs inner).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub models: Vec<ModelKind>,
    pub designs: Vec<DesignFamily>,
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn cell(&self, model: ModelKind, design: &DesignFamily) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.model == model && &c.design == design)
    }

    /// Plain-text table: models as rows, design families as columns, then
    /// one footnote line per cell with excluded replicates.
    pub fn comparison_table(&self) -> String {
        let mut header = vec!["Model".to_string()];
        header.extend(self.designs.iter().map(|d| d.to_string()));
        let mut rows = vec![header];
        let mut notes = Vec::new();
        for &m in &self.models {
            let mut row = vec![m.label().to_string()];
            for d in &self.designs {
                match self.cell(m, d) {
                    Some(c) => {
                        let mut text = c.display();
                        if c.n_failed() > 0 {
                            notes.push(format!(
                                "{} / {}: {}/{} excluded",
                                m.label(),
                                d,
                                c.n_failed(),
                                c.n_replicates()
                            ));
                            text.push('*');
                        }
                        row.push(text);
                    }
                    None => row.push("-".into()),
                }
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, s)| format!("{s:<w$}", w = widths[j]))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out.push_str("Cells: 1000 x MSE (r). * failed fits excluded from the mean.\n");
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
        out
    }

    /// Machine CSV `model,design,replicate,mse,r,failed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "design", "replicate", "mse", "r", "failed"])?;
        for c in &self.cells {
            for r in &c.replicates {
                w.write_record([
                    c.model.key().to_string(),
                    c.design.to_string(),
                    r.replicate.to_string(),
                    r.mse.map_or(String::new(), |v| format!("{v:e}")),
                    r.r.map_or(String::new(), |v| format!("{v:e}")),
                    (r.failure.is_some() as u8).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`EvalReport::write_csv`]. Failure messages
    /// and design seeds are not stored there and come back empty / zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut models = Vec::new();
        let mut designs = Vec::new();
        let mut cells: BTreeMap<(usize, usize), Vec<ReplicateResult>> = BTreeMap::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(Error::Parse(format!("report row {} has {} fields", line + 1, rec.len())));
            }
            let m: ModelKind = rec[0].parse()?;
            let d: DesignFamily = rec[1].parse()?;
            let mi = position_or_push(&mut models, m);
            let di = position_or_push(&mut designs, d);
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number {s:?}")))
                }
            };
            let failed = &rec[5] == "1";
            cells.entry((mi, di)).or_default().push(ReplicateResult {
                replicate: rec[2].parse().map_err(|_| Error::Parse(format!("bad replicate {:?}", &rec[2])))?,
                design_seed: 0,
                mse: num(&rec[3])?,
                r: num(&rec[4])?,
                failure: failed.then(String::new),
            });
        }
        let cells = cells
            .into_iter()
            .map(|((mi, di), replicates)| CellResult {
                model: models[mi],
                design: designs[di].clone(),
                replicates,
            })
            .collect();
        Ok(EvalReport { models, designs, cells })
    }
}

fn position_or_push<T: PartialEq>(v: &mut Vec<T>, x: T) -> usize {
    match v.iter().position(|y| *y == x) {
        Some(i) => i,
        None => {
            v.push(x);
            v.len() - 1
        }
    }
}

/// Runs every (model, design) cell. Compatibility of all cells is checked
/// before any fitting starts.
pub fn run_comparison(
    full: &Dataset,
    grid: &DoseGrid,
    models: &[ModelKind],
    designs: &[DesignFamily],
    replicates: usize,
    master_seed: u64,
    settings: &ModelSettings,
) -> Result<EvalReport> {
    for m in models {
        for d in designs {
            let (n, need) = (d.n_runs(grid), m.min_runs(grid.n_factors()));
            if n < need {
                return Err(Error::Config(format!("{} needs at least {need} runs but {d} has {n}", m.label())));
            }
        }
    }
    let mut cells = Vec::new();
    for &m in models {
        for d in designs {
            cells.push(run_cell(full, grid, d, m, replicates, master_seed, settings)?);
        }
    }
    Ok(EvalReport {
        models: models.to_vec(),
        designs: designs.to_vec(),
        cells,
    })
}

/// `(observed, predicted)` for every run of `full`, in grid order.
pub fn scatter_data(model: &FittedModel, full: &Dataset) -> Result<Vec<(f64, f64)>> {
    let pred = model.predict_batch(full.rows())?;
    Ok(full.responses.iter().copied().zip(pred).collect())
}

pub fn write_scatter_csv<W: Write>(pairs: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["observed", "predicted"])?;
    for (o, p) in pairs {
        w.write_record([format!("{o:e}"), format!("{p:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scatter_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad scatter row {:?}", rec)))
            };
            Ok((f(0)?, f(1)?))
        })
        .collect()
}

/// Predictions on a uniform `resolution x resolution` grid over the two free
/// factors with `fixed_factor` pinned at `fixed_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub fixed_factor: usize,
    pub fixed_value: f64,
    /// Free factors in increasing index order: rows follow `free[0]`, columns `free[1]`.
    pub free: [usize; 2],
    pub axis: Vec<f64>,
    /// `values[i][j]` at `free[0] = axis[i]`, `free[1] = axis[j]`.
    pub values: Vec<Vec<f64>>,
}

pub fn contour_grid(model: &FittedModel, fixed_factor: usize, fixed_value: f64, resolution: usize) -> Result<ContourGrid> {
    if fixed_factor > 2 {
        return domain(format!("fixed factor {fixed_factor} out of range for 3 factors"));
    }
    if !(0.0..=1.0).contains(&fixed_value) {
        return domain(format!("fixed value {fixed_value} outside [0, 1]"));
    }
    if resolution < 2 {
        return domain("contour resolution must be at least 2");
    }
    let free: Vec<usize> = (0..3).filter(|&j| j != fixed_factor).collect();
    let axis: Vec<f64> = (0..resolution).map(|i| i as f64 / (resolution - 1) as f64).collect();
    let mut values = Vec::with_capacity(resolution);
    for &u in &axis {
        let points: Vec<Vec<f64>> = axis
            .iter()
            .map(|&v| {
                let mut x = vec![0.0; 3];
                x[fixed_factor] = fixed_value;
                x[free[0]] = u;
                x[free[1]] = v;
                x
            })
            .collect();
        values.push(model.predict_batch(&points)?);
    }
    Ok(ContourGrid {
        fixed_factor,
        fixed_value,
        free: [free[0], free[1]],
        axis,
        values,
    })
}

impl ContourGrid {
    /// Largest absolute difference to another grid over the same axes.
    pub fn max_abs_difference(&self, other: &ContourGrid) -> Result<f64> {
        if self.axis != other.axis || self.free != other.free {
            return domain("contour grids have different axes");
        }
        Ok(self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// First header cell is `A\B|C=<value>`; the rest of the header holds the
    /// column-factor coordinates, and each row starts with its row-factor coordinate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let corner = format!(
            "{}\\{}|{}={}",
            factor_label(self.free[0]),
            factor_label(self.free[1]),
            factor_label(self.fixed_factor),
            self.fixed_value
        );
        let mut header = vec![corner];
        header.extend(self.axis.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for (u, row) in self.axis.iter().zip(&self.values) {
            let mut rec = vec![u.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut records = rd.records();
        let header = records.next().ok_or_else(|| Error::Parse("empty contour file".into()))??;
        let corner = header.get(0).unwrap_or_default();
        let parse_err = || Error::Parse(format!("bad contour header {corner:?}"));
        let (axes, fixed) = corner.split_once('|').ok_or_else(parse_err)?;
        let (rname, cname) = axes.split_once('\\').ok_or_else(parse_err)?;
        let (fname, fval) = fixed.split_once('=').ok_or_else(parse_err)?;
        let index = |name: &str| (0..3).find(|&j| factor_label(j) == name).ok_or_else(parse_err);
        let free = [index(rname)?, index(cname)?];
        let fixed_factor = index(fname)?;
        let fixed_value: f64 = fval.parse().map_err(|_| parse_err())?;
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
        let axis = header.iter().skip(1).map(num).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            let row = rec.iter().skip(1).map(num).collect::<Result<Vec<_>>>()?;
            if row.len() != axis.len() || rec.get(0).map(num).transpose()? != axis.get(i).copied() {
                return Err(Error::Parse(format!("contour row {} does not match the axis", i + 1)));
            }
            values.push(row);
        }
        if values.len() != axis.len() {
            return Err(Error::Parse("contour grid is not square".into()));
        }
        Ok(ContourGrid {
            fixed_factor,
            fixed_value,
            free,
            axis,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PolynomialModel;
    use crate::designs::full_factorial;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((mse(&[0.1, 0.2, 0.4], &[0.1, 0.2, 0.1]).unwrap() - 0.03).abs() < 1e-15);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let obs = [0.1, 0.5, 0.3, 0.9];
        let aff: Vec<f64> = obs.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&aff, &obs).unwrap() - 1.0).abs() < 1e-14);
        let neg: Vec<f64> = obs.iter().map(|v| -v).collect();
        assert!((pearson(&neg, &obs).unwrap() + 1.0).abs() < 1e-14);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&[0.4; 4], &obs), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[0.4], &[0.1]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.00097, 0.9956), "0.97(99.56%)");
        assert_eq!(format_cell(0.0, 1.0), "0.00(100.00%)");
    }

    #[test]
    fn family_names() {
        for s in ["D_full", "RD80", "RD27", "D047"] {
            assert_eq!(s.parse::<DesignFamily>().unwrap().to_string(), s);
        }
        assert_eq!("D0-4-12".parse::<DesignFamily>().unwrap(), DesignFamily::LevelSubset(vec![0, 4, 12]));
        assert!("X12".parse::<DesignFamily>().is_err());
        assert!("RDx".parse::<DesignFamily>().is_err());
        assert_eq!(DesignFamily::LevelSubset(vec![0, 4, 7]).n_runs(&DoseGrid::default_grid()), 27);
    }

    #[test]
    fn split_seed_is_spread() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| split_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(split_seed(1, 0), split_seed(0, 1));
    }

    fn quadratic_full() -> (Dataset, DoseGrid) {
        let grid = DoseGrid::default_grid();
        let full = full_factorial(&grid);
        let y = full.rows.iter().map(|x| quadratic_surface(x)).collect();
        (Dataset::new(full, y).unwrap(), grid)
    }

    #[test]
    fn polynomial_is_exact_on_quadratic() {
        let (data, grid) = quadratic_full();
        let cell = run_cell(
            &data,
            &grid,
            &DesignFamily::LevelSubset(vec![0, 4, 7]),
            ModelKind::Polynomial,
            5,
            1,
            &ModelSettings::default(),
        )
        .unwrap();
        assert_eq!(cell.n_replicates(), 1);
        assert!(cell.mean_mse().unwrap() < 1e-12);
    }

    #[test]
    fn incompatible_design_is_a_config_error() {
        let (data, grid) = quadratic_full();
        let err = run_cell(
            &data,
            &grid,
            &DesignFamily::Random { n: 8 },
            ModelKind::Polynomial,
            2,
            1,
            &ModelSettings::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn failures_are_excluded() {
        let cell = CellResult {
            model: ModelKind::HillBased,
            design: DesignFamily::Random { n: 27 },
            replicates: vec![
                ReplicateResult { replicate: 0, design_seed: 1, mse: Some(0.002), r: Some(0.9), failure: None },
                ReplicateResult { replicate: 1, design_seed: 2, mse: None, r: None, failure: Some("x".into()) },
                ReplicateResult { replicate: 2, design_seed: 3, mse: Some(0.004), r: Some(0.8), failure: None },
            ],
        };
        assert_eq!(cell.n_failed(), 1);
        assert!((cell.mean_mse().unwrap() - 0.003).abs() < 1e-15);
        let report = EvalReport {
            models: vec![ModelKind::HillBased],
            designs: vec![DesignFamily::Random { n: 27 }],
            cells: vec![cell],
        };
        assert!(report.comparison_table().contains("1/3 excluded"));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let back = EvalReport::read_csv(&buf[..]).unwrap();
        assert_eq!(back.cells[0].n_failed(), 1);
        assert_eq!(back.cells[0].mean_mse(), report.cells[0].mean_mse());
    }

    #[test]
    fn contour_consistency_and_round_trip() {
        let mut betas = [0.0; 10];
        betas[0] = 0.5;
        betas[1] = 0.2;
        betas[8] = -0.1;
        let model = FittedModel::Polynomial(PolynomialModel { betas });
        let g = contour_grid(&model, 2, 0.0, 11).unwrap();
        assert_eq!(g.values.len(), 11);
        assert_eq!(g.values[0][0], model.predict(&[0.0, 0.0, 0.0]).unwrap());
        assert_eq!(g.values[10][5], model.predict(&[1.0, 0.5, 0.0]).unwrap());
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("A\\B|C=0,"));
        assert_eq!(ContourGrid::read_csv(&buf[..]).unwrap(), g);
        assert!(contour_grid(&model, 2, 1.5, 11).is_err());

        let constant = FittedModel::Polynomial(PolynomialModel { betas: [0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] });
        let c = contour_grid(&constant, 0, 0.5, 5).unwrap();
        assert!(c.values.iter().flatten().all(|v| *v == 0.3));
    }

    #[test]
    fn scatter_round_trip() {
        let (data, _) = quadratic_full();
        let model = FittedModel::Polynomial(crate::baselines::poly_fit(&data).unwrap());
        let pairs = scatter_data(&model, &data).unwrap();
        assert_eq!(pairs.len(), 512);
        let pred = model.predict_batch(data.rows()).unwrap();
        assert!(pairs.iter().zip(&pred).all(|((_, p), q)| p == q));
        let mut buf = Vec::new();
        write_scatter_csv(&pairs, &mut buf).unwrap();
        assert_eq!(read_scatter_csv(&buf[..]).unwrap(), pairs);
    }

    proptest! {
        #[test]
        fn pearson_is_bounded(v in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Ok(r) = pearson(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            prop_assert!(mse(&a, &b).unwrap() >= 0.0);
        }

        #[test]
        fn excluded_mean_is_bounded(ms in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 1..20)) {
            let replicates: Vec<ReplicateResult> = ms.iter().enumerate().map(|(i, m)| ReplicateResult {
                replicate: i, design_seed: i as u64, mse: *m, r: m.map(|_| 0.5),
                failure: m.is_none().then(|| "failed".to_string()),
            }).collect();
            let cell = CellResult { model: ModelKind::HillBased, design: DesignFamily::Random { n: 27 }, replicates };
            let max = ms.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            if let Some(m) = cell.mean_mse() {
                prop_assert!(m <= max + 1e-15);
            }
            prop_assert!(cell.n_failed() <= cell.n_replicates());
        }
    }
}
