//! Report files. Floats are written with 17 significant digits; non-finite
//! values become the strings "inf", "-inf" and "nan" in JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Number, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn sig17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// JSON value of a float, keeping infinities visible.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(Number::from_f64(v).expect("finite"))
    } else {
        Value::String(sig17(v))
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

/// Pretty printing with every float at 17 significant digits.
struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        w.write_all(sig17(v).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON text with floats at 17 significant digits.
pub fn to_json_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing a Value cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn provenance(grid: Value, tolerances: Value, threads: usize) -> Value {
    let describe = env!("HYPERCTRL_GIT_DESCRIBE");
    json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "git_describe": if describe.is_empty() { Value::Null } else { Value::String(describe.into()) },
        "grid": grid,
        "tolerances": tolerances,
        "threads": threads,
    })
}

/// Output directory, checked for writability before any solve.
#[derive(Debug, Clone)]
pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn prepare(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", path.display())))?;
        let probe = path.join(".hyperctrl-write-probe");
        fs::write(&probe, b"")
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", path.display())))?;
        let _ = fs::remove_file(&probe);
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json(&self, name: &str, value: Value) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        let mut text = to_json_string(&value);
        text.push('\n');
        fs::write(&p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_csv<I>(&self, name: &str, header: &[String], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let p = self.file(name);
        let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", p.display()));
        let mut w = csv::Writer::from_path(&p).map_err(io)?;
        write_rows(&mut w, header, rows).map_err(io)?;
        w.flush().map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }
}

fn write_rows<W: Write, I: IntoIterator<Item = Vec<f64>>>(
    w: &mut csv::Writer<W>,
    header: &[String],
    rows: I,
) -> Result<(), csv::Error> {
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| sig17(*v)))?;
    }
    Ok(())
}

/// CSV text for stdout.
pub fn csv_string<I: IntoIterator<Item = Vec<f64>>>(header: &[String], rows: I) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_rows(&mut w, header, rows).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// Envelope shared by all JSON reports.
pub fn report(command: &str, config: Value, provenance: Value, result: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "provenance": provenance,
        "result": result,
    })
}
