//! Comma-delimited files with a header row. Every column is a channel except
//! the optional label column, whose cells must be `0` or `1`.

use std::path::Path;

use super::{Dataset, Split};
use crate::{Error, Result};

pub fn load_csv(path: &Path, label_column: Option<&str>, split: Split) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }
    let label_index = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("{}: no column named {name}", path.display())))?,
        ),
        None => None,
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != label_index)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(Error::Data(format!("{}: no value columns", path.display())));
    }
    let mut channels = vec![Vec::new(); names.len()];
    let mut labels = label_index.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        let mut c = 0;
        for (i, cell) in record.iter().enumerate() {
            let where_ = || format!("{}: line {line}, column {}", path.display(), headers[i]);
            if Some(i) == label_index {
                let v = match cell {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(Error::Data(format!("{}: label {cell:?} is not 0 or 1", where_()))),
                };
                labels.as_mut().expect("label column present").push(v);
            } else {
                if cell.is_empty() {
                    return Err(Error::Data(format!("{}: blank cell", where_())));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Data(format!("{}: {cell:?} is not a number", where_())))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("{}: {cell:?} is not finite", where_())));
                }
                channels[c].push(v);
                c += 1;
            }
        }
    }
    if channels[0].is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Dataset::new(names, channels, labels, split)
}

/// Writes values with shortest round-trip formatting; labels go last under
/// the header `label`.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut header: Vec<&str> = dataset.names().iter().map(String::as_str).collect();
    if dataset.labels().is_some() {
        header.push("label");
    }
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    writer.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..dataset.len() {
        row.clear();
        row.extend(dataset.channels().iter().map(|c| format!("{:?}", c[t])));
        if let Some(l) = dataset.labels() {
            row.push(l[t].to_string());
        }
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
