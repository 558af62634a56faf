//! CSV tables, staged output directories and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

/// `%.12g`-style formatting, independent of locale.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    const DIGITS: i32 = 12;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::Num(v) => format_number(*v),
            Field::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Field::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| crate::config::config_error(format!("malformed manifest {}: {e}", path.display())))
    }
}

/// Files are written into a hidden staging directory and only moved into
/// the output directory once everything succeeded. Dropping an unfinished
/// stage removes whatever it holds.
pub struct Stage {
    out_dir: PathBuf,
    dir: PathBuf,
    files: BTreeMap<String, String>,
    committed: Vec<PathBuf>,
    done: bool,
}

impl Stage {
    pub fn new(out_dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let dir = out_dir.join(format!(".bfl-staging-{}-{stamp}", std::process::id()));
        fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            dir,
            files: BTreeMap::new(),
            committed: Vec::new(),
            done: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Moves every staged file into place, the manifest last.
    pub fn commit(mut self, manifest: &RunManifest) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(manifest)?;
        let path = self.dir.join(MANIFEST_NAME);
        fs::write(&path, json.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        let names: Vec<String> = self.files.keys().cloned().collect();
        for name in names.iter().map(String::as_str).chain([MANIFEST_NAME]) {
            let target = self.out_dir.join(name);
            fs::rename(self.dir.join(name), &target)
                .with_context(|| format!("moving {} into place", target.display()))?;
            self.committed.push(target);
        }
        self.done = true;
        let _ = fs::remove_dir_all(&self.dir);
        Ok(())
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.committed {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456.789), "123456.789");
        assert_eq!(format_number(1e-7), "1e-07");
        assert_eq!(format_number(6.02214076e23), "6.02214076e+23");
        assert_eq!(format_number(0.0001), "0.0001");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(999999999999.5), "1e+12");
    }

    #[test]
    fn csv_rendering() {
        let mut t = Table::new("x.csv", &["name", "N", "value"]);
        t.push(vec!["mean".into(), 10usize.into(), 0.5.into()]);
        assert_eq!(t.to_csv(), "name,N,value\nmean,10,0.5\n");
    }

    #[test]
    fn dropped_stage_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        {
            let mut s = Stage::new(tmp.path()).unwrap();
            s.write("a.csv", b"x\n").unwrap();
        }
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn committed_stage_has_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = Stage::new(tmp.path()).unwrap();
        s.write("a.csv", b"x\n").unwrap();
        let m = RunManifest {
            tool: "bfl".into(),
            version: "0".into(),
            command: "front".into(),
            seed: 1,
            config: BTreeMap::new(),
            started_at: String::new(),
            finished_at: String::new(),
            files: s.checksums().clone(),
        };
        s.commit(&m).unwrap();
        let mut names: Vec<String> = fs::read_dir(tmp.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec!["a.csv", "manifest.json"]);
        let back = RunManifest::load(&tmp.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.files["a.csv"], sha256_hex(b"x\n"));
    }
}
