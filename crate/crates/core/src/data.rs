//! Dataset and design-matrix files.
//!
//! A dataset file is CSV with header `g,l,y1,...,yM` and one row per
//! cluster. A design file is headerless CSV with `M` rows and `M0` columns.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::{ClusterDataset, ClusterTable};
use crate::model::LogLinearModel;

/// Housing satisfaction in 20 Montevideo (Minnesota) neighborhoods, 3 x 3
/// cells (neighborhood satisfaction x own-home satisfaction), 18 clusters of
/// 5 households and 2 of 3.
pub const HOUSING_CSV: &str = include_str!("../data/housing.csv");

pub fn housing() -> ClusterDataset {
    read_dataset(HOUSING_CSV.as_bytes(), "housing.csv").expect("bundled fixture parses")
}

fn parse_err(path: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a dataset; `name` labels errors.
pub fn read_dataset<R: Read>(input: R, name: &str) -> Result<ClusterDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 4 || &header[0] != "g" || &header[1] != "l" {
        return Err(parse_err(
            name,
            1,
            "header must be g,l,y1,...,yM with M >= 2",
        ));
    }
    for (k, h) in header.iter().skip(2).enumerate() {
        if h != format!("y{}", k + 1) {
            return Err(parse_err(
                name,
                1,
                format!("expected column y{}, found {h:?}", k + 1),
            ));
        }
    }
    let cells = header.len() - 2;
    let mut tables = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cells + 2 {
            return Err(parse_err(
                name,
                line,
                format!("expected {} fields, found {}", cells + 2, rec.len()),
            ));
        }
        let index = |k: usize, field: &str| -> Result<usize> {
            match rec[k].parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(parse_err(
                    name,
                    line,
                    format!(
                        "field {field} must be a positive integer, found {:?}",
                        &rec[k]
                    ),
                )),
            }
        };
        let group = index(0, "g")?;
        let cluster = index(1, "l")?;
        let counts = (0..cells)
            .map(|r| {
                rec[r + 2].parse::<u64>().map_err(|_| {
                    parse_err(
                        name,
                        line,
                        format!(
                            "field y{} must be a nonnegative integer, found {:?}",
                            r + 1,
                            &rec[r + 2]
                        ),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        tables.push(ClusterTable {
            group,
            cluster,
            counts,
        });
    }
    ClusterDataset::new(tables).map_err(|e| match e {
        Error::Invalid(msg) | Error::Dimension(msg) => parse_err(name, 0, msg),
        other => other,
    })
}

pub fn read_dataset_file(path: &Path) -> Result<ClusterDataset> {
    let f = std::fs::File::open(path)?;
    read_dataset(f, &path.display().to_string())
}

pub fn write_dataset<W: Write>(ds: &ClusterDataset, mut out: W) -> Result<()> {
    let mut header = vec!["g".to_string(), "l".to_string()];
    header.extend((1..=ds.cells()).map(|r| format!("y{r}")));
    writeln!(out, "{}", header.join(","))?;
    for t in ds.tables() {
        let mut row = vec![t.group.to_string(), t.cluster.to_string()];
        row.extend(t.counts.iter().map(u64::to_string));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a headerless design matrix and validates it as a model.
pub fn read_design<R: Read>(input: R, name: &str) -> Result<LogLinearModel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>().map_err(|_| {
                    parse_err(
                        name,
                        line,
                        format!("column {} is not a number: {v:?}", c + 1),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    name,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(name, 1, "design file is empty"));
    }
    let (m, m0) = (rows.len(), rows[0].len());
    let w = DMatrix::from_fn(m, m0, |r, c| rows[r][c]);
    LogLinearModel::new(w).map_err(|e| match e {
        Error::Invalid(msg) => parse_err(name, 0, msg),
        other => other,
    })
}

pub fn read_design_file(path: &Path) -> Result<LogLinearModel> {
    let f = std::fs::File::open(path)?;
    read_design(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn housing_fixture_shape() {
        let ds = housing();
        assert_eq!(ds.cells(), 9);
        assert_eq!(ds.num_clusters(), 20);
        assert_eq!(ds.groups()[0].cluster_size(), 5);
        assert_eq!(ds.groups()[0].len(), 18);
        assert_eq!(ds.groups()[1].cluster_size(), 3);
        assert_eq!(ds.groups()[1].len(), 2);
        assert_eq!(ds.total_count(), 96);
        // column (1,3) is empty
        assert_eq!(ds.cell_totals()[2], 0);
    }

    #[test]
    fn negative_count_cites_line() {
        let text = "g,l,y1,y2\n1,1,1,1\n1,2,-1,3\n";
        match read_dataset(text.as_bytes(), "bad.csv") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("y1"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_dataset("a,b,y1,y2\n1,1,1,1\n".as_bytes(), "x").is_err());
        assert!(read_dataset("g,l,y1,y3\n1,1,1,1\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn unequal_group_sizes_rejected() {
        let text = "g,l,y1,y2\n1,1,1,1\n1,2,2,1\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), "x"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn design_file_round_trip() {
        let model = LogLinearModel::independence(3, 3).unwrap();
        let mut text = String::new();
        for r in 0..9 {
            let row: Vec<String> = model
                .design()
                .row(r)
                .iter()
                .map(|v| v.to_string())
                .collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let loaded = read_design(text.as_bytes(), "w.csv").unwrap();
        assert_eq!(loaded.design(), model.design());
    }

    #[test]
    fn singular_design_file_rejected() {
        let text = "1,1\n1,1\n1,1\n1,1\n";
        assert!(read_design(text.as_bytes(), "w.csv").is_err());
    }
}
