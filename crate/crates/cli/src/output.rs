//! Output files: CSV series, JSON reports and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use runtumble::analysis::Verdict;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Scenario;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Collects every file a pipeline writes, plus the probe verdicts.
pub struct Sink {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
    verdicts: Vec<(String, Verdict)>,
}

impl Sink {
    pub fn create(dir: &Path, hash: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            files: Vec::new(),
            verdicts: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| v.passed())
    }

    fn register(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    /// Two-column CSV preceded by a `# scenario_hash=` line.
    pub fn csv(
        &mut self,
        name: &str,
        columns: (&str, &str),
        xs: &[f64],
        ys: &[f64],
    ) -> io::Result<()> {
        assert_eq!(xs.len(), ys.len());
        let path = self.register(name);
        let mut out = String::with_capacity(48 * xs.len() + 128);
        out.push_str("# scenario_hash=");
        out.push_str(&self.hash);
        out.push('\n');
        out.push_str(columns.0);
        out.push(',');
        out.push_str(columns.1);
        out.push('\n');
        for (x, y) in xs.iter().zip(ys) {
            out.push_str(&fmt_g17(*x));
            out.push(',');
            out.push_str(&fmt_g17(*y));
            out.push('\n');
        }
        fs::write(path, out)
    }

    pub fn series(&mut self, name: &str, times: &[f64], values: &[f64]) -> io::Result<()> {
        self.csv(name, ("t", "value"), times, values)
    }

    /// `report_<probe>.json`; a `None` verdict marks an informational report.
    pub fn report(
        &mut self,
        probe: &str,
        parameters: Value,
        values: Value,
        verdict: Option<Verdict>,
    ) -> io::Result<()> {
        let doc = json!({
            "probe": probe,
            "scenario_hash": self.hash,
            "parameters": parameters,
            "values": values,
            "verdict": verdict,
        });
        if let Some(v) = verdict {
            self.verdicts.push((probe.to_string(), v));
        }
        let path = self.register(&format!("report_{probe}.json"));
        let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    /// Binary or other opaque output written by `write`.
    pub fn raw(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
    ) -> io::Result<()> {
        let path = self.register(name);
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        write(&mut w)?;
        w.flush()
    }

    pub fn finish(
        self,
        scenario: &Scenario,
        pipeline: &str,
        threads: usize,
    ) -> io::Result<Manifest> {
        let mut outputs = BTreeMap::new();
        for name in &self.files {
            outputs.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let manifest = Manifest {
            code_version: CODE_VERSION.to_string(),
            scenario_hash: self.hash.clone(),
            pipeline: pipeline.to_string(),
            threads,
            scenario: serde_json::to_value(scenario).map_err(io::Error::other)?,
            outputs,
            verdicts: self.verdicts.iter().map(|(p, v)| (p.clone(), *v)).collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub scenario_hash: String,
    pub pipeline: String,
    pub threads: usize,
    /// Fully resolved scenario.
    pub scenario: Value,
    /// File name to SHA-256 digest.
    pub outputs: BTreeMap<String, String>,
    pub verdicts: BTreeMap<String, Verdict>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g17() {
        // reference strings from C printf("%.17g")
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (0.0001, "0.0001"),
            (123456789012345678.0, "1.2345678901234568e+17"),
            (12345678901234567.0, "12345678901234568"),
            (1e300, "1.0000000000000001e+300"),
            (f64::MIN_POSITIVE, "2.2250738585072014e-308"),
            (1.0 / 3.0, "0.33333333333333331"),
            (0.04, "0.040000000000000001"),
            (-0.0, "-0"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g17(x), s, "{x:e}");
        }
        assert_eq!(fmt_g17(f64::NAN), "nan");
        assert_eq!(fmt_g17(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn g17_round_trips() {
        for k in -300..300 {
            let x = 1.2345678901234567f64 * 10f64.powi(k) / 7.0;
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }
}
