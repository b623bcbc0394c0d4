use std::collections::HashMap;

use crate::designs::Design;
use crate::error::{domain, Result};

/// A design paired with one observed response per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: Design,
    pub responses: Vec<f64>,
}

impl Dataset {
    pub fn new(design: Design, responses: Vec<f64>) -> Result<Self> {
        if design.n_runs() != responses.len() {
            return domain(format!(
                "design has {} runs but {} responses were given",
                design.n_runs(),
                responses.len()
            ));
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return domain(format!("response {i} is not finite"));
        }
        Ok(Dataset { design, responses })
    }

    /// Scattered points with responses, for fitting on non-grid data.
    pub fn from_points(rows: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        Dataset::new(Design::scattered(rows)?, responses)
    }

    pub fn n_runs(&self) -> usize {
        self.responses.len()
    }

    pub fn n_factors(&self) -> usize {
        self.design.n_factors()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.design.rows
    }

    /// Restricts this dataset to the runs of `sub`, matched by grid code.
    pub fn subset(&self, sub: &Design) -> Result<Dataset> {
        if self.design.coded_rows.is_empty() || sub.coded_rows.is_empty() {
            return domain("subsetting needs coded designs on both sides");
        }
        let index: HashMap<&[usize], usize> = self
            .design
            .coded_rows
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_slice(), i))
            .collect();
        let mut responses = Vec::with_capacity(sub.n_runs());
        for c in &sub.coded_rows {
            match index.get(c.as_slice()) {
                Some(&i) => responses.push(self.responses[i]),
                None => return domain(format!("design run {c:?} has no observation")),
            }
        }
        Dataset::new(sub.clone(), responses)
    }

    /// Index of the first response outside `[0, 1]`.
    pub fn first_out_of_unit_range(&self) -> Option<usize> {
        self.responses.iter().position(|y| !(0.0..=1.0).contains(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{full_factorial, level_subset_factorial, DoseGrid};

    #[test]
    fn subset_matches_codes() {
        let g = DoseGrid::default_grid();
        let full = full_factorial(&g);
        let y: Vec<f64> = (0..512).map(|i| i as f64 / 511.0).collect();
        let data = Dataset::new(full, y).unwrap();
        let d047 = level_subset_factorial(&g, &[0, 4, 7]).unwrap();
        let sub = data.subset(&d047).unwrap();
        assert_eq!(sub.n_runs(), 27);
        // code (4, 7, 0) sits at position 4*64 + 7*8 + 0 in the full grid
        let k = d047.coded_rows.iter().position(|c| c == &vec![4, 7, 0]).unwrap();
        assert_eq!(sub.responses[k], (4 * 64 + 7 * 8) as f64 / 511.0);
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        let d = Design::scattered(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(Dataset::new(d.clone(), vec![0.0]).is_err());
        assert!(Dataset::new(d, vec![0.0, f64::NAN]).is_err());
    }
}
