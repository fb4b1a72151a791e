use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::graph::PointCloud;

/// Which column of a CSV row holds the class label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    First,
    #[default]
    Last,
    Index(usize),
}

impl LabelColumn {
    fn resolve(self, width: usize) -> Option<usize> {
        match self {
            LabelColumn::First => Some(0),
            LabelColumn::Last => width.checked_sub(1),
            LabelColumn::Index(i) => (i < width).then_some(i),
        }
    }
}

/// A loaded CSV file together with the label remapping that was applied.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvDataset {
    pub dataset: LabeledDataset,
    /// `mapping[c]` is the original label text of dense class `c`.
    pub mapping: Vec<String>,
    pub header: Option<Vec<String>>,
}

pub fn load_csv(path: &Path, label_column: LabelColumn) -> Result<CsvDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    read_csv(File::open(path)?, label_column, &name)
}

/// Parses comma-separated numeric rows. A first row containing any
/// non-numeric cell is taken as a header.
pub fn read_csv<R: Read>(input: R, label_column: LabelColumn, name: &str) -> Result<CsvDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut header = None;
    let mut width = None;
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            Error::parse(line, None, e.to_string())
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if idx == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_owned).collect());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::parse(
                line,
                Some(record.len().min(w) + 1),
                format!("expected {w} columns, found {}", record.len()),
            ));
        }
        let label_col = label_column
            .resolve(w)
            .ok_or_else(|| Error::invalid(format!("label column {label_column:?} outside a {w}-column file")))?;
        if w < 2 {
            return Err(Error::parse(line, None, "need at least one feature and one label column"));
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_col {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(line, Some(c + 1), format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, Some(c + 1), format!("non-finite value {cell:?}")));
            }
            features.push(v);
        }
    }
    let width = width.ok_or_else(|| Error::Format("CSV file has no data rows".into()))?;
    if raw_labels.len() < 2 {
        return Err(Error::Format("CSV file needs at least two data rows".into()));
    }

    let mapping = dense_mapping(&raw_labels);
    let labels = raw_labels
        .iter()
        .map(|l| mapping.binary_search_by(|m| compare_labels(m, l)).expect("label is in mapping"))
        .collect();
    let cloud = PointCloud::new(features, width - 1)?;
    let dataset = LabeledDataset::new(cloud, labels, mapping.len(), name)?;
    Ok(CsvDataset {
        dataset,
        mapping,
        header,
    })
}

/// Numeric labels sort by value, anything else lexicographically after them.
fn compare_labels(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn dense_mapping(raw: &[String]) -> Vec<String> {
    let mut m = raw.to_vec();
    m.sort_by(|a, b| compare_labels(a, b));
    m.dedup();
    m
}

/// Writes features then the label on each row, no header. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(ds: &LabeledDataset, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (p, l) in ds.cloud.points().zip(&ds.labels) {
        for v in p {
            write!(out, "{v},")?;
        }
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// One `dense,original` pair per line.
pub fn write_label_mapping<W: Write>(mapping: &[String], mut out: W) -> Result<()> {
    for (c, orig) in mapping.iter().enumerate() {
        writeln!(out, "{c},{orig}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file() {
        let ds = read_csv("1.5,2,7\n3,4,9\n".as_bytes(), LabelColumn::Last, "t").unwrap();
        assert_eq!(ds.dataset.len(), 2);
        assert_eq!(ds.dataset.cloud.dim(), 2);
        assert_eq!(ds.dataset.labels, vec![0, 1]);
        assert_eq!(ds.mapping, vec!["7", "9"]);
        assert!(ds.header.is_none());
    }

    #[test]
    fn header_is_detected() {
        let ds = read_csv("x,y,label\n1,2,b\n3,4,a\n".as_bytes(), LabelColumn::Last, "t").unwrap();
        assert_eq!(ds.header.unwrap(), vec!["x", "y", "label"]);
        assert_eq!(ds.dataset.labels, vec![1, 0]);
    }

    #[test]
    fn numeric_labels_sort_by_value() {
        let ds = read_csv("0,10\n1,9\n2,10\n".as_bytes(), LabelColumn::Last, "t").unwrap();
        assert_eq!(ds.mapping, vec!["9", "10"]);
        assert_eq!(ds.dataset.labels, vec![1, 0, 1]);
    }

    #[test]
    fn ragged_and_non_numeric() {
        let err = read_csv("1,2,0\n3,1\n".as_bytes(), LabelColumn::Last, "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_csv("1,2,0\n3,x,1\n".as_bytes(), LabelColumn::Last, "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: Some(2), .. }));
    }

    #[test]
    fn first_column_labels() {
        let ds = read_csv("5,1,2\n6,3,4\n".as_bytes(), LabelColumn::First, "t").unwrap();
        assert_eq!(ds.dataset.cloud.point(1), &[3.0, 4.0]);
    }
}
