//! Dose grids and the factorial / random sub-designs drawn from them.
//!
//! Design coordinates are actual dosages min-max standardized per factor, so
//! the lowest dose maps to 0 and the highest to 1.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

/// Column label for factor `j`: `A`, `B`, `C`, ...
pub fn factor_label(j: usize) -> String {
    let mut j = j;
    let mut s = String::new();
    loop {
        s.insert(0, (b'A' + (j % 26) as u8) as char);
        if j < 26 {
            break;
        }
        j = j / 26 - 1;
    }
    s
}

/// Actual dosage levels for each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseGrid {
    pub factor_names: Vec<String>,
    /// `levels[j]` is strictly ascending; coded level `k` is `levels[j][k]`.
    pub levels: Vec<Vec<f64>>,
}

impl DoseGrid {
    pub fn new(factor_names: Vec<String>, levels: Vec<Vec<f64>>) -> Result<Self> {
        if factor_names.is_empty() || factor_names.len() != levels.len() {
            return domain(format!(
                "dose grid needs one level list per factor ({} names, {} level lists)",
                factor_names.len(),
                levels.len()
            ));
        }
        for (name, lv) in factor_names.iter().zip(&levels) {
            if lv.len() < 2 {
                return domain(format!("factor {name} needs at least 2 levels"));
            }
            if lv.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return domain(format!("factor {name} has a negative or non-finite dose"));
            }
            if lv.windows(2).any(|w| w[0] >= w[1]) {
                return domain(format!("levels of factor {name} are not strictly ascending"));
            }
        }
        Ok(DoseGrid {
            factor_names,
            levels,
        })
    }

    /// The three-drug grid (μM) of the lung-cancer combination experiment:
    /// AG490, U0126 and I-3-M at eight levels each.
    pub fn default_grid() -> Self {
        let ag490 = vec![0.0, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0];
        let u0126 = vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
        let i3m = ag490.clone();
        DoseGrid {
            factor_names: vec!["AG490".into(), "U0126".into(), "I-3-M".into()],
            levels: vec![ag490, u0126, i3m],
        }
    }

    pub fn n_factors(&self) -> usize {
        self.levels.len()
    }

    pub fn n_levels(&self, factor: usize) -> usize {
        self.levels[factor].len()
    }

    pub fn n_runs_full(&self) -> usize {
        self.levels.iter().map(Vec::len).product()
    }

    fn check_codes(&self, coded: &[usize]) -> Result<()> {
        if coded.len() != self.n_factors() {
            return domain(format!(
                "coded point has {} entries, grid has {} factors",
                coded.len(),
                self.n_factors()
            ));
        }
        for (j, &c) in coded.iter().enumerate() {
            if c >= self.n_levels(j) {
                return domain(format!(
                    "code {c} out of range for factor {} (levels 0..{})",
                    self.factor_names[j],
                    self.n_levels(j) - 1
                ));
            }
        }
        Ok(())
    }

    pub fn dose(&self, factor: usize, code: usize) -> f64 {
        self.levels[factor][code]
    }

    pub fn actual_doses(&self, coded: &[usize]) -> Result<Vec<f64>> {
        self.check_codes(coded)?;
        Ok(coded.iter().enumerate().map(|(j, &c)| self.dose(j, c)).collect())
    }

    /// Per-factor `(dose - min) / (max - min)`.
    pub fn standardize(&self, coded: &[usize]) -> Result<Vec<f64>> {
        self.check_codes(coded)?;
        Ok(coded
            .iter()
            .enumerate()
            .map(|(j, &c)| self.standardize_dose(j, self.dose(j, c)))
            .collect())
    }

    pub fn standardize_dose(&self, factor: usize, dose: f64) -> f64 {
        let lv = &self.levels[factor];
        let (lo, hi) = (lv[0], lv[lv.len() - 1]);
        (dose - lo) / (hi - lo)
    }

    /// Inverse of [`standardize_dose`](Self::standardize_dose).
    pub fn unstandardize(&self, factor: usize, x: f64) -> f64 {
        let lv = &self.levels[factor];
        let (lo, hi) = (lv[0], lv[lv.len() - 1]);
        lo + x * (hi - lo)
    }

    /// Code whose actual dose equals `dose` exactly, if any.
    pub fn code_of_dose(&self, factor: usize, dose: f64) -> Option<usize> {
        self.levels[factor].iter().position(|&v| v == dose)
    }

    /// Reads `factor,level0,level1,...` rows (header optional).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut names = Vec::new();
        let mut levels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let Some(name) = rec.get(0) else { continue };
            if i == 0 && name.eq_ignore_ascii_case("factor") {
                continue;
            }
            let lv = rec
                .iter()
                .skip(1)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("dose grid line {}: {s:?}: {e}", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            names.push(name.to_string());
            levels.push(lv);
        }
        DoseGrid::new(names, levels)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let max_levels = self.levels.iter().map(Vec::len).max().unwrap_or(0);
        let mut header = vec!["factor".to_string()];
        header.extend((0..max_levels).map(|k| format!("level{k}")));
        w.write_record(&header)?;
        for (name, lv) in self.factor_names.iter().zip(&self.levels) {
            let mut rec = vec![name.clone()];
            rec.extend(lv.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where a design's rows came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    FullFactorial,
    RandomSubset { seed: u64, n: usize },
    LevelSubsetFactorial { codes: Vec<usize> },
    /// Arbitrary points in the unit cube with no grid codes.
    Scattered,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::FullFactorial => write!(f, "D_full"),
            Provenance::RandomSubset { n, .. } => write!(f, "RD{n}"),
            Provenance::LevelSubsetFactorial { codes } => {
                write!(f, "D")?;
                for c in codes {
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            Provenance::Scattered => write!(f, "scattered"),
        }
    }
}

/// Runs in standardized coordinates with their originating grid codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: Vec<Vec<f64>>,
    /// Empty for [`Provenance::Scattered`] designs.
    pub coded_rows: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

impl Design {
    /// A design of arbitrary points; every coordinate must lie in `[0, 1]`.
    pub fn scattered(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return domain(format!("row {i} has {} coordinates, expected {d}", r.len()));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return domain(format!("row {i} lies outside the unit cube"));
            }
        }
        Ok(Design {
            rows,
            coded_rows: Vec::new(),
            provenance: Provenance::Scattered,
        })
    }

    fn from_codes(grid: &DoseGrid, coded_rows: Vec<Vec<usize>>, provenance: Provenance) -> Result<Self> {
        let rows = coded_rows
            .iter()
            .map(|c| grid.standardize(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Design {
            rows,
            coded_rows,
            provenance,
        })
    }

    pub fn n_runs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_factors(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// CSV `codeA,...,A,...`; scattered designs carry only the standardized columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.n_factors();
        let coded = !self.coded_rows.is_empty();
        let mut w = csv::Writer::from_writer(out);
        let mut header = Vec::new();
        if coded {
            header.extend((0..d).map(|j| format!("code{}", factor_label(j))));
        }
        header.extend((0..d).map(factor_label));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(2 * d);
            if coded {
                rec.extend(self.coded_rows[i].iter().map(|c| c.to_string()));
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a design written by [`write_csv`](Self::write_csv). Provenance is
    /// not stored in the file; coded designs come back as `provenance`.
    pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let n_code = header.iter().filter(|h| h.starts_with("code")).count();
        let d = header.len() - n_code;
        if n_code != 0 && n_code != d {
            return Err(Error::Parse("design CSV must have as many code columns as factors".into()));
        }
        let mut rows = Vec::new();
        let mut coded_rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |s: &str| Error::Parse(format!("design row {}: bad value {s:?}", i + 1));
            if n_code > 0 {
                coded_rows.push(
                    rec.iter()
                        .take(n_code)
                        .map(|s| s.parse::<usize>().map_err(|_| bad(s)))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            rows.push(
                rec.iter()
                    .skip(n_code)
                    .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        if n_code == 0 {
            return Design::scattered(rows);
        }
        Ok(Design {
            rows,
            coded_rows,
            provenance,
        })
    }
}

fn cartesian(level_sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for set in level_sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

/// Every level combination, lexicographic in the codes (last factor fastest).
pub fn full_factorial(grid: &DoseGrid) -> Design {
    let sets: Vec<Vec<usize>> = grid.levels.iter().map(|lv| (0..lv.len()).collect()).collect();
    Design::from_codes(grid, cartesian(&sets), Provenance::FullFactorial)
        .expect("codes generated from the grid are in range")
}

/// Full factorial over the given coded levels of every factor (e.g. `{0, 4, 7}`).
pub fn level_subset_factorial(grid: &DoseGrid, codes: &[usize]) -> Result<Design> {
    if codes.is_empty() {
        return domain("level subset must be non-empty");
    }
    let mut seen = HashSet::new();
    for &c in codes {
        if !seen.insert(c) {
            return domain(format!("duplicate code {c} in level subset"));
        }
        for j in 0..grid.n_factors() {
            if c >= grid.n_levels(j) {
                return domain(format!(
                    "code {c} out of range for factor {}",
                    grid.factor_names[j]
                ));
            }
        }
    }
    let mut sorted = codes.to_vec();
    sorted.sort_unstable();
    let sets = vec![sorted.clone(); grid.n_factors()];
    Design::from_codes(
        grid,
        cartesian(&sets),
        Provenance::LevelSubsetFactorial { codes: sorted },
    )
}

/// `n` distinct runs of `full` drawn uniformly without replacement.
///
/// Rows keep their order in `full`, so the result is a function of the seed only.
pub fn random_subdesign(full: &Design, n: usize, seed: u64) -> Result<Design> {
    let total = full.n_runs();
    if n > total {
        return domain(format!("cannot draw {n} runs from a {total}-run design"));
    }
    if n == 0 {
        return domain("random sub-design needs at least one run");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    let rows = idx.iter().map(|&i| full.rows[i].clone()).collect();
    let coded_rows = if full.coded_rows.is_empty() {
        Vec::new()
    } else {
        idx.iter().map(|&i| full.coded_rows[i].clone()).collect()
    };
    Ok(Design {
        rows,
        coded_rows,
        provenance: Provenance::RandomSubset { seed, n },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standardize_default_grid() {
        let g = DoseGrid::default_grid();
        assert_eq!(g.standardize(&[7, 0, 0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(g.standardize(&[4, 0, 0]).unwrap()[0], 10.0 / 300.0);
        assert_eq!(g.standardize(&[0, 7, 3]).unwrap(), vec![0.0, 1.0, 0.01]);
        assert!(g.standardize(&[8, 0, 0]).is_err());
        assert!(g.standardize(&[0, 0]).is_err());
    }

    #[test]
    fn factorial_sizes() {
        let g = DoseGrid::default_grid();
        let full = full_factorial(&g);
        assert_eq!(full.n_runs(), 512);
        assert_eq!(full.coded_rows[0], vec![0, 0, 0]);
        assert_eq!(full.coded_rows[1], vec![0, 0, 1]);
        assert_eq!(full.coded_rows[511], vec![7, 7, 7]);

        let one = DoseGrid::new(vec!["x".into()], vec![(0..8).map(f64::from).collect()]).unwrap();
        assert_eq!(full_factorial(&one).n_runs(), 8);

        let two = DoseGrid::new(
            vec!["p".into(), "q".into()],
            vec![vec![0.0, 1.0, 5.0], vec![2.0, 3.0, 4.0]],
        )
        .unwrap();
        let d = full_factorial(&two);
        assert_eq!(d.n_runs(), 9);
        assert_eq!(d.rows[0], vec![0.0, 0.0]);
        assert_eq!(d.rows[8], vec![1.0, 1.0]);
    }

    #[test]
    fn level_subsets() {
        let g = DoseGrid::default_grid();
        let d047 = level_subset_factorial(&g, &[0, 4, 7]).unwrap();
        assert_eq!(d047.n_runs(), 27);
        assert_eq!(d047.provenance.to_string(), "D047");
        let d057 = level_subset_factorial(&g, &[0, 5, 7]).unwrap();
        assert_eq!(d057.n_runs(), 27);
        let all = level_subset_factorial(&g, &(0..8).collect::<Vec<_>>()).unwrap();
        let full = full_factorial(&g);
        assert_eq!(all.rows, full.rows);
        assert_eq!(all.coded_rows, full.coded_rows);

        assert!(level_subset_factorial(&g, &[]).is_err());
        assert!(level_subset_factorial(&g, &[0, 8]).is_err());
        assert!(level_subset_factorial(&g, &[4, 4]).is_err());
    }

    #[test]
    fn random_subdesigns() {
        let full = full_factorial(&DoseGrid::default_grid());
        let all = random_subdesign(&full, 512, 3).unwrap();
        assert_eq!(all.rows, full.rows);

        let a = random_subdesign(&full, 80, 1).unwrap();
        let b = random_subdesign(&full, 80, 1).unwrap();
        let c = random_subdesign(&full, 80, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.coded_rows, c.coded_rows);

        for seed in 0..100 {
            let d = random_subdesign(&full, 27, seed).unwrap();
            let distinct: HashSet<_> = d.coded_rows.iter().collect();
            assert_eq!(distinct.len(), 27);
        }
        assert!(random_subdesign(&full, 513, 0).is_err());
    }

    #[test]
    fn grid_csv_round_trip() {
        let g = DoseGrid::default_grid();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("factor,level0,"));
        assert_eq!(DoseGrid::read_csv(&buf[..]).unwrap(), g);

        let bad = "factor,level0,level1\nA,1,0.5\n";
        assert!(DoseGrid::read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn design_csv_round_trip() {
        let g = DoseGrid::default_grid();
        let d = level_subset_factorial(&g, &[0, 4, 7]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("codeA,codeB,codeC,A,B,C\n"));
        let back = Design::read_csv(&buf[..], d.provenance.clone()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn labels() {
        assert_eq!(factor_label(0), "A");
        assert_eq!(factor_label(2), "C");
        assert_eq!(factor_label(26), "AA");
    }

    proptest! {
        #[test]
        fn standardize_monotone(factor in 0usize..3, a in 0usize..8, b in 0usize..8) {
            prop_assume!(a < b);
            let g = DoseGrid::default_grid();
            let mut ca = vec![0, 0, 0];
            let mut cb = vec![0, 0, 0];
            ca[factor] = a;
            cb[factor] = b;
            prop_assert!(g.standardize(&ca).unwrap()[factor] < g.standardize(&cb).unwrap()[factor]);
        }

        #[test]
        fn subdesign_rows_come_from_full(n in 1usize..512, seed in any::<u64>()) {
            let full = full_factorial(&DoseGrid::default_grid());
            let sub = random_subdesign(&full, n, seed).unwrap();
            let pool: HashSet<_> = full.coded_rows.iter().collect();
            let drawn: HashSet<_> = sub.coded_rows.iter().collect();
            prop_assert_eq!(drawn.len(), n);
            prop_assert!(drawn.is_subset(&pool));
        }

        #[test]
        fn level_subset_within_full(mask in 1u8..=255) {
            let codes: Vec<usize> = (0..8).filter(|k| mask & (1 << k) != 0).collect();
            let g = DoseGrid::default_grid();
            let sub = level_subset_factorial(&g, &codes).unwrap();
            let pool: HashSet<_> = full_factorial(&g).coded_rows.into_iter().collect();
            prop_assert_eq!(sub.n_runs(), codes.len().pow(3));
            prop_assert!(sub.coded_rows.iter().all(|r| pool.contains(r)));
        }
    }
}
