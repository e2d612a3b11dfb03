//! Numeric CSV tables with a header row.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const PLANAR_HEADER: [&str; 10] = ["t", "xi", "eta", "xi_dot", "eta_dot", "E_pl", "L", "A_eta", "D", "E_sph"];
pub const SPHERICAL_HEADER: [&str; 8] = ["t", "qx", "qy", "qz", "vx", "vy", "vz", "E_sph"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Indices of the named columns, failing on the first missing one.
    pub fn columns(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column(n).with_context(|| format!("missing column \"{n}\""))).collect()
    }

    pub fn has_columns(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.column(n).is_some())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|&x| fmt(x)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Table> {
        let mut input = csv::Reader::from_reader(r);
        let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, record) in input.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("row {i}: non-numeric field"))?;
            if row.len() != header.len() {
                bail!("row {i}: {} fields, expected {}", row.len(), header.len());
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Table::read_from(file)
    }
}
