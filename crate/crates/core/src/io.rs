//! CSV artifacts and run manifests.
//!
//! Every CSV starts with one `#` comment line naming the schema, its version
//! and units, followed by a header row. Floats are written in Rust's shortest
//! round-trip form, so reading a file back reproduces the values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::ResponseSurface;

pub const SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A parsed CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// Comment line without the leading `#`.
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, units: &str, header: Vec<String>) -> Self {
        Self {
            comment: format!(" schema={schema} v{SCHEMA_VERSION}; {units}"),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn schema(&self) -> Option<&str> {
        self.comment.split_whitespace().find_map(|w| w.strip_prefix("schema="))
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing column `{name}`")))
    }

    /// All cells as floats, with row/column context on failure.
    pub fn numbers(&self) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, c)| {
                        c.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("row {} column `{}`: `{c}` is not a number", i + 1, self.header[j]))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(io_err(path))?;
        writeln!(f, "#{}", self.comment).map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut reader = BufReader::new(f);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(io_err(path))?;
        let comment = first
            .trim_end()
            .strip_prefix('#')
            .ok_or_else(|| Error::Config(format!("{}: first line must be a `#` schema comment", path.display())))?
            .to_string();
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { comment, header, rows })
    }
}

/// Real ω × T surface: one row per frequency, one column per delay.
pub fn write_real_surface(path: &Path, schema: &str, freqs: &[f64], delays: &[f64], values: &DMatrix<f64>) -> Result<()> {
    let mut header = vec!["freq_cm1".to_string()];
    header.extend(delays.iter().map(|d| d.to_string()));
    let mut t = Table::new(schema, "rows: probe frequency cm^-1; columns: delay fs", header);
    for (i, w) in freqs.iter().enumerate() {
        let mut row = vec![*w];
        row.extend(values.row(i).iter());
        t.push_numbers(&row);
    }
    t.write(path)
}

pub fn read_real_surface(path: &Path) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let t = Table::read(path)?;
    let delays = parse_axis(&t.header[1..], path)?;
    let rows = t.numbers()?;
    check_width(&rows, delays.len() + 1, path)?;
    let freqs = rows.iter().map(|r| r[0]).collect();
    let values = DMatrix::from_fn(rows.len(), delays.len(), |i, j| rows[i][j + 1]);
    Ok((freqs, delays, values))
}

/// Complex surface with re/im columns interleaved per delay (`re@T`, `im@T`).
pub fn write_response(path: &Path, schema: &str, r: &ResponseSurface) -> Result<()> {
    let mut header = vec!["freq_cm1".to_string()];
    for d in &r.delays {
        header.push(format!("re@{d}"));
        header.push(format!("im@{d}"));
    }
    let mut t = Table::new(schema, "rows: probe frequency cm^-1; re/im pairs per delay fs", header);
    for (i, w) in r.freqs.iter().enumerate() {
        let mut row = vec![*w];
        for j in 0..r.delays.len() {
            row.push(r.values[(i, j)].re);
            row.push(r.values[(i, j)].im);
        }
        t.push_numbers(&row);
    }
    t.write(path)
}

pub fn read_response(path: &Path) -> Result<ResponseSurface> {
    let t = Table::read(path)?;
    let mut delays = Vec::new();
    for (k, h) in t.header[1..].iter().enumerate() {
        let (tag, d) = h
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("{}: column `{h}` is not re@T or im@T", path.display())))?;
        let want = if k % 2 == 0 { "re" } else { "im" };
        if tag != want {
            return Err(Error::Config(format!("{}: expected a `{want}@` column, found `{h}`", path.display())));
        }
        if k % 2 == 0 {
            delays.push(parse_axis(&[d.to_string()], path)?[0]);
        }
    }
    let rows = t.numbers()?;
    check_width(&rows, 2 * delays.len() + 1, path)?;
    let values = DMatrix::from_fn(rows.len(), delays.len(), |i, j| Complex64::new(rows[i][2 * j + 1], rows[i][2 * j + 2]));
    Ok(ResponseSurface {
        freqs: rows.iter().map(|r| r[0]).collect(),
        delays,
        values,
    })
}

fn parse_axis(cells: &[String], path: &Path) -> Result<Vec<f64>> {
    cells
        .iter()
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: header `{c}` is not a delay", path.display())))
        })
        .collect()
}

fn check_width(rows: &[Vec<f64>], width: usize, path: &Path) -> Result<()> {
    match rows.iter().position(|r| r.len() != width) {
        Some(i) => Err(Error::Config(format!("{}: row {} has the wrong number of columns", path.display(), i + 1))),
        None => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: resolved parameters, seed and
/// input digests. No timestamps, so reruns produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub parameters: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, parameters: Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
