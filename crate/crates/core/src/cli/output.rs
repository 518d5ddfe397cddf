//! CSV files with 17 significant digits, LF line endings and a header row.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// A CSV cell: a number, an integer, or empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Streaming CSV writer that counts data rows.
pub struct CsvWriter {
    out: BufWriter<File>,
    rows: usize,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(header.join(",").as_bytes())?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            rows: 0,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> io::Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        let mut line = String::with_capacity(24 * cells.len());
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            match *c {
                Cell::Num(v) => line.push_str(&format_number(v)),
                Cell::Int(v) => line.push_str(&v.to_string()),
                Cell::Empty => {}
            }
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.rows += 1;
        Ok(())
    }

    /// Flush and return the number of data rows written.
    pub fn finish(mut self) -> io::Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}
