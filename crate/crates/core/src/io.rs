//! File formats: CSV datasets, JSON-lines traces, `key=value` configs and
//! content digests.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Dataset, DrawRecord, Hyperparams};

/// Name of the optional ground-truth column.
pub const LABEL_COLUMN: &str = "label";

fn data_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {msg}", path.display()))
}

/// Reads a headed CSV of numeric columns plus an optional integer `label`
/// column.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, e))?;
    let headers: Vec<String> = rdr.headers().map_err(|e| data_err(path, e))?.iter().map(String::from).collect();
    let label_idx = headers.iter().position(|h| h == LABEL_COLUMN);
    let names: Vec<String> = headers.iter().filter(|h| *h != LABEL_COLUMN).cloned().collect();
    if names.is_empty() {
        return Err(data_err(path, "no numeric columns"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                let l: usize = field
                    .parse()
                    .map_err(|_| data_err(path, format!("row {}: label {field:?} is not a nonnegative integer", r + 1)))?;
                labels.push(l);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| data_err(path, format!("row {}, column {}: {field:?} is not a number", r + 1, headers[j])))?;
                values.push(v);
            }
        }
        rows += 1;
    }
    let mut d = Dataset::new(DMatrix::from_row_slice(rows, names.len(), &values), label_idx.map(|_| labels))
        .map_err(|e| e.context(path.display()))?;
    d.column_names = names;
    Ok(d)
}

/// Writes values with full precision; labels (zero-based in memory) are
/// written one-based.
pub fn write_dataset_csv(path: &Path, data: &Dataset, labels: Option<&[usize]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = data.column_names.clone();
    if labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for t in 0..data.n_obs() {
        let mut rec: Vec<String> = data.values.row(t).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            rec.push((l[t] + 1).to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// Writes through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| data_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Streams draws to a JSON-lines file.
pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write(&mut self, draw: &DrawRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, draw)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<DrawRecord>> {
    let f = File::open(path).map_err(|e| data_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DrawRecord =
            serde_json::from_str(&line).map_err(|e| data_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(d);
    }
    Ok(out)
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
    }
    Ok(map)
}

const BNB_KEYS: [&str; 3] = ["alpha_lambda", "a_pi", "b_pi"];

fn parse_value(key: &str, raw: &str, template: &Value) -> Result<Value> {
    let bad = || Error::Config(format!("{key}: cannot parse {raw:?}"));
    match template {
        Value::Array(_) => {
            let items = raw
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Value::from(items))
        }
        Value::Number(n) if n.is_u64() => Ok(Value::from(raw.parse::<u64>().map_err(|_| bad())?)),
        _ => Ok(Value::from(raw.parse::<f64>().map_err(|_| bad())?)),
    }
}

/// Overrides hyperparameters from `key=value` pairs named after the
/// fields. Vector values are comma separated. Unknown keys are an error.
pub fn apply_hyper_overrides(hyper: &Hyperparams, pairs: &BTreeMap<String, String>) -> Result<Hyperparams> {
    let mut v = serde_json::to_value(hyper)?;
    for (key, raw) in pairs {
        let obj = v.as_object_mut().expect("hyperparameters serialize to an object");
        if BNB_KEYS.contains(&key.as_str()) {
            let bnb = obj.get_mut("bnb").and_then(Value::as_object_mut).expect("bnb object");
            let parsed = parse_value(key, raw, &bnb[key.as_str()])?;
            bnb.insert(key.clone(), parsed);
        } else if key != "bnb" && obj.contains_key(key) {
            let parsed = parse_value(key, raw, &obj[key.as_str()])?;
            obj.insert(key.clone(), parsed);
        } else {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
    }
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}
