//! CSV / JSON artifacts: field snapshots, control profiles and numeric tables.
use crate::error::{Error, Result};
use crate::profile::{ControlProfile, Shape};
use crate::spectral::FourierField;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const CONVENTION: &str = "unitary-sqrt2pi";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a header row and numeric rows (shortest round-trip formatting).
pub fn write_table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidArgument(format!("row of {} values for {} columns", r.len(), header.len())));
        }
        w.write_record(r.iter().map(|v| format!("{v:?}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_table(File::create(path)?, header, rows)
}

/// Field snapshot: `# j=..,N=..,convention=..` comment line, then columns k,re,im.
pub fn write_field<W: Write>(mut out: W, u: &FourierField) -> Result<()> {
    writeln!(out, "# j={},N={},convention={CONVENTION}", u.order_j(), u.trunc_n())?;
    let rows = u.modes().zip(u.coeffs()).map(|(k, c)| vec![k as f64, c.re, c.im]);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "re", "im"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([format!("{}", r[0] as i64), format!("{:?}", r[1]), format!("{:?}", r[2])]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_file(path: &Path, u: &FourierField) -> Result<()> {
    write_field(File::create(path)?, u)
}

fn parse_meta(line: &str) -> Result<(u32, usize)> {
    let body = line.trim_start_matches('#').trim();
    let (mut j, mut n, mut conv) = (None, None, None);
    for kv in body.split(',') {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header entry '{kv}'")))?;
        match k.trim() {
            "j" => j = v.trim().parse().ok(),
            "N" => n = v.trim().parse().ok(),
            "convention" => conv = Some(v.trim().to_string()),
            other => return Err(Error::Parse(format!("unknown header key '{other}'"))),
        }
    }
    if conv.as_deref() != Some(CONVENTION) {
        return Err(Error::Parse(format!("convention must be {CONVENTION}")));
    }
    match (j, n) {
        (Some(j), Some(n)) => Ok((j, n)),
        _ => Err(Error::Parse("header needs j and N".into())),
    }
}

/// Reads a field snapshot; a field that is not Hermitian symmetric is kept complex.
pub fn read_field(path: &Path) -> Result<FourierField> {
    let mut rd = BufReader::new(File::open(path)?);
    let mut first = String::new();
    rd.read_line(&mut first)?;
    let (j, n) = parse_meta(&first).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut coeffs = vec![None; 2 * n + 1];
    let mut r = csv::Reader::from_reader(rd);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = || Error::Parse(format!("{}: data row {} malformed", path.display(), line + 1));
        if rec.len() != 3 {
            return Err(bad());
        }
        let k: i64 = rec[0].trim().parse().map_err(|_| bad())?;
        let re: f64 = rec[1].trim().parse().map_err(|_| bad())?;
        let im: f64 = rec[2].trim().parse().map_err(|_| bad())?;
        if k.unsigned_abs() as usize > n {
            return Err(Error::Parse(format!("{}: mode {k} outside N={n}", path.display())));
        }
        coeffs[(k + n as i64) as usize] = Some(Complex64::new(re, im));
    }
    let coeffs: Vec<Complex64> = coeffs
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| Error::Parse(format!("{}: mode {} missing", path.display(), i as i64 - n as i64)))
        })
        .collect::<Result<_>>()?;
    FourierField::new(j, n, coeffs.clone()).or_else(|_| FourierField::new_complex(j, n, coeffs))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfileSidecar {
    pub omega_start: f64,
    pub omega_len: f64,
    pub shape: String,
    #[serde(default)]
    pub power: Option<u32>,
    pub norm_check: f64,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Profile coefficients (n, re, im) plus the JSON sidecar next to it.
pub fn write_profile(path: &Path, p: &ControlProfile) -> Result<()> {
    let ng = p.n_g() as i64;
    let rows = p.g_coeffs().iter().enumerate().map(|(i, c)| vec![(i as i64 - ng) as f64, c.re, c.im]);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["n", "re", "im"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([format!("{}", r[0] as i64), format!("{:?}", r[1]), format!("{:?}", r[2])]).map_err(csv_err)?;
    }
    w.flush()?;
    let (omega_start, omega_len) = p.omega();
    let side = ProfileSidecar {
        omega_start,
        omega_len,
        shape: p.shape().tag().to_string(),
        power: match p.shape() {
            Shape::RaisedCosine { power } => Some(power),
            Shape::Constant => None,
        },
        norm_check: p.norm_check(),
    };
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(sidecar_path(path), text + "\n")?;
    Ok(())
}

/// Reads a profile. Named shapes are rebuilt from the sidecar and must reproduce the stored
/// coefficients; anything else is loaded as raw coefficients.
pub fn read_profile(path: &Path) -> Result<ControlProfile> {
    let side: ProfileSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| Error::Parse(format!("{}: {e}", sidecar_path(path).display())))?;
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok());
        match (f(0), f(1), f(2)) {
            (Some(n), Some(re), Some(im)) => rows.push((n as i64, Complex64::new(re, im))),
            _ => return Err(Error::Parse(format!("{}: malformed row", path.display()))),
        }
    }
    rows.sort_by_key(|r| r.0);
    let ng = rows.len() / 2;
    if rows.iter().enumerate().any(|(i, r)| r.0 != i as i64 - ng as i64) {
        return Err(Error::Parse(format!("{}: coefficient rows must cover -n..n", path.display())));
    }
    let coeffs: Vec<Complex64> = rows.into_iter().map(|r| r.1).collect();
    let shape = match (side.shape.as_str(), side.power) {
        ("constant", _) => Shape::Constant,
        ("raised_cosine", Some(power)) => Shape::RaisedCosine { power },
        ("raised_cosine", None) => Shape::RaisedCosine { power: crate::profile::DEFAULT_POWER },
        (s, _) => return Err(Error::Parse(format!("unknown profile shape '{s}'"))),
    };
    if let Ok(p) = ControlProfile::build(side.omega_start, side.omega_len, shape) {
        if p.g_coeffs().len() == coeffs.len() && p.g_coeffs().iter().zip(&coeffs).all(|(a, b)| (a - b).norm() <= 1e-12)
        {
            return Ok(p);
        }
    }
    ControlProfile::from_coeffs(side.omega_start, side.omega_len, shape, coeffs)
}

/// Writes a serializable value as pretty JSON with sorted object keys.
pub fn write_json_sorted<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, to_json_sorted(v)? + "\n")?;
    Ok(())
}

pub fn to_json_sorted<T: Serialize>(v: &T) -> Result<String> {
    // serde_json::Value maps are BTreeMap-backed (no preserve_order), so keys come out sorted
    let val = serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))?;
    serde_json::to_string_pretty(&val).map_err(|e| Error::Io(e.to_string()))
}
