//! File formats: unit-labelled tables (CSV/JSON), the binary matrix format
//! and the tone table.

use std::io::{Read, Write};
use std::path::Path;

use qrm_core::pulse::{Tone, ToneRole, ToneSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::TWO_PI;
use crate::error::CliError;

/// A named numeric table. Column names carry their unit as `name [unit]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Table { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name || c.split(" [").next() == Some(name))?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.columns).map_err(|e| csv_err(path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read_csv(name: &str, path: &Path) -> Result<Table, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let columns = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        let mut t = Table::with_columns(name, columns);
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| CliError::Output(format!("{}: {e}", path.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            t.rows.push(row);
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Value {
        json!({ "columns": self.columns, "rows": self.rows })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

const MATRIX_MAGIC: &[u8; 4] = b"QRMM";
const MATRIX_VERSION: u16 = 1;

/// Dense matrix stored row-major; complex entries interleave `(re, im)`.
///
/// File layout (little endian): `"QRMM"`, `u16` version, `u8` kind
/// (0 real, 1 complex), `u8` reserved, `u64` rows, `u64` cols, then the
/// `f64` payload.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub complex: bool,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn real(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        MatrixFile { rows, cols, complex: false, data }
    }

    pub fn complex(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), 2 * rows * cols);
        MatrixFile { rows, cols, complex: true, data }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.data.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.push(self.complex as u8);
        out.push(0);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Output(format!("matrix file: {m}"));
        if bytes.len() < 24 || &bytes[..4] != MATRIX_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MATRIX_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let complex = match bytes[6] {
            0 => false,
            1 => true,
            k => return Err(bad(&format!("unknown kind {k}"))),
        };
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let count = rows * cols * if complex { 2 } else { 1 };
        let payload = &bytes[24..];
        if payload.len() != 8 * count {
            return Err(bad("payload length does not match the header"));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(MatrixFile { rows, cols, complex, data })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub const TONE_TABLE_HEADER: &str = "# qrm tone table v1";

/// Plain-text tone table, one tone per line.
///
/// The `offset` column is `ω_m − ω₀` (Hz); the absolute optical frequency
/// cannot carry it to sub-Hz precision.
pub fn tone_table(spec: &ToneSpec) -> String {
    let mut s = String::new();
    s.push_str(TONE_TABLE_HEADER);
    s.push('\n');
    s.push_str("# label rabi_rate[Hz] frequency[Hz] phase[rad] offset[Hz]\n");
    for t in &spec.tones {
        s.push_str(&format!(
            "{} {} {} {} {}\n",
            t.role.label(),
            t.rabi_rate / TWO_PI,
            t.frequency / TWO_PI,
            t.phase,
            t.offset / TWO_PI
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneRow {
    pub label: String,
    pub rabi_rate_hz: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
    pub offset_hz: f64,
}

impl ToneRow {
    pub fn from_tone(t: &Tone) -> Self {
        ToneRow {
            label: t.role.label().into(),
            rabi_rate_hz: t.rabi_rate / TWO_PI,
            frequency_hz: t.frequency / TWO_PI,
            phase_rad: t.phase,
            offset_hz: t.offset / TWO_PI,
        }
    }

    pub fn to_tone(&self) -> Result<Tone, CliError> {
        let role = ToneRole::from_label(&self.label)
            .ok_or_else(|| CliError::Output(format!("unknown tone label `{}`", self.label)))?;
        Ok(Tone {
            role,
            rabi_rate: TWO_PI * self.rabi_rate_hz,
            frequency: TWO_PI * self.frequency_hz,
            offset: TWO_PI * self.offset_hz,
            phase: self.phase_rad,
        })
    }
}

pub fn parse_tone_table(text: &str) -> Result<Vec<ToneRow>, CliError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TONE_TABLE_HEADER) {
        return Err(CliError::Output("tone table: missing version header".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(CliError::Output(format!("tone table line {}: expected 5 fields", k + 2)));
        }
        let num = |s: &str| {
            s.parse::<f64>().map_err(|e| CliError::Output(format!("tone table line {}: {e}", k + 2)))
        };
        rows.push(ToneRow {
            label: f[0].into(),
            rabi_rate_hz: num(f[1])?,
            frequency_hz: num(f[2])?,
            phase_rad: num(f[3])?,
            offset_hz: num(f[4])?,
        });
    }
    Ok(rows)
}

pub fn tone_json(spec: &ToneSpec) -> Value {
    json!({
        "format": "qrm tone table",
        "version": 1,
        "units": { "rabi_rate_hz": "Hz", "frequency_hz": "Hz", "offset_hz": "Hz", "phase_rad": "rad" },
        "tones": spec.tones.iter().map(ToneRow::from_tone).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use qrm_core::model::QrmParams;
    use qrm_core::pulse::{compile_tones, IonParams};

    #[test]
    fn tone_table_round_trip() {
        let wa = TWO_PI * 25e3;
        let p = QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.27 * wa, theta: 1.0 };
        let spec = compile_tones(&p, &IonParams::reference()).unwrap();
        let rows = parse_tone_table(&tone_table(&spec)).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, tone) in rows.iter().zip(&spec.tones) {
            let back = row.to_tone().unwrap();
            assert_eq!(back.role, tone.role);
            assert!((back.rabi_rate - tone.rabi_rate).abs() <= 1e-12 * tone.rabi_rate);
            assert!((back.offset - tone.offset).abs() <= 1e-9 * tone.offset.abs().max(1.0));
            assert_eq!(back.phase, tone.phase);
        }
        let json = tone_json(&spec);
        assert_eq!(json["tones"][2]["label"], "carrier");
        assert!(parse_tone_table("red 1 2 3 4").is_err());
    }

    proptest! {
        #[test]
        fn matrix_round_trip(rows in 0usize..6, cols in 0usize..6, complex: bool, seed in any::<u64>()) {
            let n = rows * cols * if complex { 2 } else { 1 };
            let data: Vec<f64> = (0..n).map(|k| ((k as u64).wrapping_mul(seed | 1) as f64).sin()).collect();
            let m = MatrixFile { rows, cols, complex, data };
            prop_assert_eq!(MatrixFile::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }

    #[test]
    fn matrix_rejects_corruption() {
        let m = MatrixFile::real(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut b = m.to_bytes();
        assert!(MatrixFile::from_bytes(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(MatrixFile::from_bytes(&b).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("t", &["x [s]", "y [1]"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        t.push(vec![2.0, -4.5e-17]);
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        assert_eq!(Table::read_csv("t", &path).unwrap(), t);
        assert_eq!(t.column("x").unwrap(), [0.1, 2.0]);
    }
}
