//! Artifact writers. Every file starts with the configuration hash and the
//! seed: JSON documents carry them as top-level fields, CSV files as a
//! leading `#` comment line. Floats use the shortest decimal form that
//! round-trips, so identical runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// What produced an artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// An output directory plus the provenance stamped on everything in it.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
    provenance: Provenance,
}

impl OutputDir {
    pub fn create(root: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `body` as a JSON object with the provenance fields first.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> CliResult<PathBuf> {
        let stamped = Stamped {
            config_sha256: &self.provenance.config_sha256,
            seed: self.provenance.seed,
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped)
            .map_err(|e| CliError::Numerical(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Opens a CSV file with the provenance comment and `header` written.
    pub fn csv(&self, name: &str, header: &[String]) -> CliResult<CsvSink> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(
            out,
            "# config_sha256={} seed={}",
            self.provenance.config_sha256, self.provenance.seed
        )
        .map_err(|e| CliError::io(&path, e))?;
        let mut sink = CsvSink {
            writer: csv::Writer::from_writer(out),
            path,
            row: Vec::with_capacity(header.len()),
        };
        sink.writer.write_record(header).map_err(|e| sink.error(e))?;
        Ok(sink)
    }
}

/// A CSV writer whose rows are built from numbers.
pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
    row: Vec<String>,
}

impl CsvSink {
    pub fn write_row(&mut self, values: &[f64]) -> CliResult<()> {
        self.row.clear();
        self.row.extend(values.iter().map(|v| format_f64(*v)));
        self.writer.write_record(&self.row).map_err(|e| sink_error(&self.path, e))
    }

    /// A row led by an integer key (path index, ray index).
    pub fn write_keyed_row(&mut self, key: usize, values: &[f64]) -> CliResult<()> {
        self.row.clear();
        self.row.push(key.to_string());
        self.row.extend(values.iter().map(|v| format_f64(*v)));
        self.writer.write_record(&self.row).map_err(|e| sink_error(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }

    fn error(&self, e: csv::Error) -> CliError {
        sink_error(&self.path, e)
    }
}

fn sink_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Numerical(format!("{}: {other:?}", path.display())),
    }
}

/// Shortest round-trip decimal form; `NaN` and infinities spelled out.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Column names `prefix_ij` for the upper triangle, row-major, 1-based.
pub fn upper_triangle_names(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim)
        .flat_map(|i| (i..dim).map(move |j| format!("{prefix}_{}{}", i + 1, j + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn provenance() -> Provenance {
        Provenance {
            config_sha256: "ab".repeat(32),
            seed: 42,
        }
    }

    #[derive(Serialize)]
    struct Body {
        value: f64,
        label: &'static str,
    }

    #[test]
    fn json_starts_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path(), provenance()).unwrap();
        let path = out.write_json("x.json", &Body { value: 0.1, label: "a" }).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seed"], 42);
        assert_eq!(v["config_sha256"], "ab".repeat(32));
        assert_eq!(v["value"], 0.1);
        assert!(text.find("config_sha256").unwrap() < text.find("value").unwrap());
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn csv_has_comment_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(&dir.path().join("nested"), provenance()).unwrap();
        let mut sink = out.csv("x.csv", &["t".into(), "v".into()]).unwrap();
        sink.write_row(&[0.5, 1.0 / 3.0]).unwrap();
        sink.write_keyed_row(7, &[f64::NAN]).unwrap();
        let text = fs::read_to_string(sink.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# config_sha256={} seed=42", "ab".repeat(32)));
        assert_eq!(lines[1], "t,v");
        assert_eq!(lines[2], "0.5,0.3333333333333333");
        assert_eq!(lines[3], "7,NaN");
    }

    #[test]
    fn triangle_names() {
        assert_eq!(upper_triangle_names("x", 2), ["x_11", "x_12", "x_22"]);
        assert_eq!(upper_triangle_names("psi", 3).len(), 6);
    }

    #[test]
    fn special_values() {
        assert_eq!(format_f64(f64::INFINITY), "inf");
        assert_eq!(format_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(format_f64(1e-300), "1e-300");
        assert_eq!(format_f64(-0.0), "-0.0");
    }

    proptest! {
        #[test]
        fn formatting_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = format_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
