//! Column-oriented household table with CSV I/O.
//!
//! Numeric columns hold `f64` with `NaN` marking a missing cell; text
//! columns (identifiers, categories) are kept verbatim.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, idx: &[usize]) -> Column {
        match self {
            Column::Num(v) => Column::Num(idx.iter().map(|&i| v[i]).collect()),
            Column::Text(v) => Column::Text(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Column>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Column::len).unwrap_or(0)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Insert or replace a column. Panics on a length mismatch, which is a
    /// programming error rather than a data error.
    pub fn set(&mut self, name: &str, col: Column) {
        if !self.columns.is_empty() {
            assert_eq!(col.len(), self.n_rows(), "column `{name}` has the wrong length");
        }
        match self.index.get(name) {
            Some(&i) => self.columns[i] = col,
            None => {
                self.index.insert(name.to_string(), self.names.len());
                self.names.push(name.to_string());
                self.columns.push(col);
            }
        }
    }

    pub fn set_num(&mut self, name: &str, v: Vec<f64>) {
        self.set(name, Column::Num(v));
    }

    pub fn set_text(&mut self, name: &str, v: Vec<String>) {
        self.set(name, Column::Text(v));
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn num(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Num(v) => Ok(v),
            Column::Text(_) => Err(Error::SchemaMismatch(format!("column `{name}` is not numeric"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<Vec<String>> {
        match self.column(name)? {
            Column::Text(v) => Ok(v.clone()),
            Column::Num(v) => Ok(v.iter().map(|x| format_num(*x)).collect()),
        }
    }

    pub fn num_mut(&mut self, name: &str) -> Result<&mut Vec<f64>> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        match &mut self.columns[i] {
            Column::Num(v) => Ok(v),
            Column::Text(_) => Err(Error::SchemaMismatch(format!("column `{name}` is not numeric"))),
        }
    }

    /// Subset of rows, in the given order (indices may repeat).
    pub fn take_rows(&self, idx: &[usize]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
            index: self.index.clone(),
        }
    }

    /// Keep rows whose numeric cells in `cols` are all finite.
    pub fn complete_cases(&self, cols: &[&str]) -> Result<Table> {
        let data: Vec<&[f64]> = cols.iter().map(|c| self.num(c)).collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&i| data.iter().all(|c| c[i].is_finite()))
            .collect();
        Ok(self.take_rows(&keep))
    }

    pub fn read_csv_path(path: &Path) -> Result<Table> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    /// Read a headed CSV. A column is numeric when every non-empty cell
    /// parses as a float (`NA` and empty count as missing); otherwise text.
    pub fn read_csv<R: Read>(reader: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate().take(headers.len()) {
                raw[j].push(cell.trim().to_string());
            }
        }
        let mut t = Table::new();
        for (name, cells) in headers.iter().zip(raw) {
            let numeric = cells.iter().all(|c| is_missing(c) || c.parse::<f64>().is_ok());
            if numeric {
                let v = cells
                    .iter()
                    .map(|c| if is_missing(c) { f64::NAN } else { c.parse().unwrap() })
                    .collect();
                t.set_num(name, v);
            } else {
                t.set_text(name, cells);
            }
        }
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c {
                    Column::Num(v) => format_num(v[i]),
                    Column::Text(v) => v[i].clone(),
                })
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn is_missing(c: &str) -> bool {
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Shortest round-trip formatting; integers print without a fraction.
pub fn format_num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}
