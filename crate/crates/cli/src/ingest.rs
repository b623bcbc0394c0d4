//! Reading measured or generated response data onto a dose grid.
//!
//! The first `d` columns locate each run: either grid codes (headers starting
//! with `code`, e.g. `codeA`) or actual dosages (any other header). Every
//! further column is one response variable and becomes its own dataset, so a
//! file with `normal,cancer` columns yields two datasets.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rsm_core::designs::{factor_label, Design, DoseGrid, Provenance};
use rsm_core::Dataset;

use crate::error::{CliError, Result};

fn ingest_err(row: usize, message: impl Into<String>) -> CliError {
    CliError::Ingest {
        row,
        message: message.into(),
    }
}

/// Parses a data CSV into one named dataset per response column.
///
/// Rows are matched exactly to grid points. A file covering the whole grid
/// is put into full-factorial order. Row numbers in errors count data rows
/// from 1 (the header is not counted).
pub fn ingest<R: Read>(input: R, grid: &DoseGrid) -> Result<Vec<(String, Dataset)>> {
    let d = grid.n_factors();
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rd
        .headers()
        .map_err(|e| ingest_err(0, format!("cannot read header: {e}")))?
        .clone();
    if header.len() <= d {
        return Err(ingest_err(
            0,
            format!("expected {d} factor columns and at least one response column, found {} columns", header.len()),
        ));
    }
    let coded: Vec<bool> = header
        .iter()
        .take(d)
        .map(|h| h.to_ascii_lowercase().starts_with("code"))
        .collect();
    if coded.iter().any(|c| *c) && !coded.iter().all(|c| *c) {
        return Err(ingest_err(0, "factor columns mix codes and dosages"));
    }
    let by_code = coded[0];
    let names: Vec<String> = header.iter().skip(d).map(str::to_string).collect();

    let mut codes_seen = HashSet::new();
    let mut runs: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ingest_err(row, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(ingest_err(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let mut codes = Vec::with_capacity(d);
        for j in 0..d {
            let field = &rec[j];
            let code = if by_code {
                let c: usize = field
                    .parse()
                    .map_err(|_| ingest_err(row, format!("code {field:?} for factor {} is not an integer", factor_label(j))))?;
                if c >= grid.n_levels(j) {
                    return Err(ingest_err(row, format!("unknown code {c} for factor {}", factor_label(j))));
                }
                c
            } else {
                let dose: f64 = field
                    .parse()
                    .map_err(|_| ingest_err(row, format!("dose {field:?} for factor {} is not a number", factor_label(j))))?;
                grid.code_of_dose(j, dose).ok_or_else(|| {
                    ingest_err(row, format!("dose {dose} is not a level of factor {}", grid.factor_names[j]))
                })?
            };
            codes.push(code);
        }
        if !codes_seen.insert(codes.clone()) {
            return Err(ingest_err(row, format!("duplicate run {codes:?}")));
        }
        let mut ys = Vec::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            let field = &rec[d + k];
            let y: f64 = field
                .parse()
                .map_err(|_| ingest_err(row, format!("response {name} = {field:?} is not a number")))?;
            if !(0.0..=1.0).contains(&y) {
                return Err(ingest_err(row, format!("response {name} = {y} is outside [0, 1]")));
            }
            ys.push(y);
        }
        runs.push((codes, ys));
    }
    if runs.is_empty() {
        return Err(ingest_err(0, "no data rows"));
    }

    let complete = runs.len() == grid.n_runs_full();
    if complete {
        runs.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let coded_rows: Vec<Vec<usize>> = runs.iter().map(|r| r.0.clone()).collect();
    let rows = coded_rows
        .iter()
        .map(|c| grid.standardize(c))
        .collect::<rsm_core::Result<Vec<_>>>()?;
    let design = Design {
        rows,
        coded_rows,
        provenance: if complete {
            Provenance::FullFactorial
        } else {
            Provenance::Scattered
        },
    };
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let ys = runs.iter().map(|r| r.1[k]).collect();
            Ok((name.clone(), Dataset::new(design.clone(), ys)?))
        })
        .collect()
}

pub fn ingest_path(path: &Path, grid: &DoseGrid) -> Result<Vec<(String, Dataset)>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest(file, grid)
}

/// Writes datasets sharing one coded design as `codeA,...,<name>...`.
pub fn write_data_csv<W: Write>(datasets: &[(String, Dataset)], out: W) -> Result<()> {
    let Some((_, first)) = datasets.first() else {
        return Err(CliError::Config("nothing to write".into()));
    };
    if datasets.iter().any(|(_, ds)| ds.design.coded_rows != first.design.coded_rows) {
        return Err(CliError::Config("datasets do not share a design".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let d = first.n_factors();
    let mut header: Vec<String> = (0..d).map(|j| format!("code{}", factor_label(j))).collect();
    header.extend(datasets.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(rsm_core::Error::from)?;
    for (i, codes) in first.design.coded_rows.iter().enumerate() {
        let mut rec: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
        rec.extend(datasets.iter().map(|(_, ds)| ds.responses[i].to_string()));
        w.write_record(&rec).map_err(rsm_core::Error::from)?;
    }
    w.flush().map_err(rsm_core::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rsm_core::designs::full_factorial;

    fn full_csv(bad_row: Option<usize>) -> String {
        let grid = DoseGrid::default_grid();
        let full = full_factorial(&grid);
        let mut s = String::from("codeA,codeB,codeC,response\n");
        for (i, c) in full.coded_rows.iter().enumerate() {
            let y = if Some(i + 1) == bad_row { 1.3 } else { 0.5 };
            s.push_str(&format!("{},{},{},{y}\n", c[0], c[1], c[2]));
        }
        s
    }

    #[test]
    fn full_file_ingests() {
        let out = ingest(full_csv(None).as_bytes(), &DoseGrid::default_grid()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "response");
        assert_eq!(out[0].1.n_runs(), 512);
        assert_eq!(out[0].1.design.provenance, Provenance::FullFactorial);
    }

    #[test]
    fn out_of_range_names_row() {
        match ingest(full_csv(Some(7)).as_bytes(), &DoseGrid::default_grid()) {
            Err(CliError::Ingest { row, message }) => {
                assert_eq!(row, 7);
                assert!(message.contains("1.3"));
            }
            other => panic!("expected an ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn two_cell_types_and_doses() {
        let text = "AG490,U0126,I-3-M,normal,cancer\n0,0,0,1,1\n300,100,0.3,0.4,0.2\n10,3,10,0.8,0.6\n";
        let out = ingest(text.as_bytes(), &DoseGrid::default_grid()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].0, "normal");
        assert_eq!(out[1].1.responses, vec![1.0, 0.2, 0.6]);
        assert_eq!(out[1].1.design.coded_rows[1], vec![7, 7, 1]);
        assert_eq!(out[1].1.design.rows[2], vec![10.0 / 300.0, 0.03, 10.0 / 300.0]);
    }

    #[test]
    fn ingestion_errors() {
        let g = DoseGrid::default_grid();
        let cases = [
            ("codeA,codeB,codeC,y\n0,0,0,0.5\n0,9,0,0.5\n", 2, "unknown code"),
            ("codeA,codeB,codeC,y\n0,0,0,0.5\n0,0,0,0.4\n", 2, "duplicate"),
            ("A,B,C,y\n0,0,0,0.5\n0,0,2,0.4\n", 2, "not a level"),
            ("codeA,codeB,codeC,y\n0,0,0,abc\n", 1, "not a number"),
        ];
        for (text, want_row, fragment) in cases {
            match ingest(text.as_bytes(), &g) {
                Err(CliError::Ingest { row, message }) => {
                    assert_eq!(row, want_row, "{text}");
                    assert!(message.contains(fragment), "{message}");
                }
                other => panic!("expected an ingestion error for {text:?}, got {other:?}"),
            }
        }
        assert!(ingest("codeA,B,codeC,y\n0,0,0,1\n".as_bytes(), &g).is_err());
        assert!(ingest("codeA,codeB,codeC\n0,0,0\n".as_bytes(), &g).is_err());
    }

    #[test]
    fn write_then_ingest() {
        let g = DoseGrid::default_grid();
        let text = "codeA,codeB,codeC,normal,cancer\n0,0,0,1,1\n7,7,1,0.4,0.2\n";
        let sets = ingest(text.as_bytes(), &g).unwrap();
        let mut buf = Vec::new();
        write_data_csv(&sets, &mut buf).unwrap();
        assert_eq!(ingest(&buf[..], &g).unwrap(), sets);
    }
}
