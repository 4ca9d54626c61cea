//! CSV ingestion.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ranks::Dataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// The first row holds column names.
    pub header: bool,
}

pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

/// Two numeric columns `x,y`; rows are sorted by `x`, which must not repeat.
pub fn read_csv<R: Read>(reader: R, options: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1 + usize::from(options.header);
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse { row, message: format!("expected 2 columns, found {}", rec.len()) });
        }
        let cell = |c: usize| -> Result<f64> {
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("non-numeric cell {:?}", &rec[c]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, message: format!("non-finite cell {:?}", &rec[c]) });
            }
            Ok(v)
        };
        rows.push((cell(0)?, cell(1)?));
    }
    if rows.len() < 2 {
        return Err(Error::TooFewRows(rows.len()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateX(w[0].0));
    }
    let (x, y) = rows.into_iter().unzip();
    Dataset::new(x, y)
}
