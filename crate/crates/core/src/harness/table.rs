use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFlag {
    Ok,
    /// Sinkhorn did not reach tolerance within budget; excluded from fits.
    Unconverged,
    /// Iteration count past the numerical floor of the reference.
    Floor,
    /// The search target was not reached in range.
    Unattained,
}

impl RowFlag {
    pub fn name(self) -> &'static str {
        match self {
            RowFlag::Ok => "ok",
            RowFlag::Unconverged => "unconverged",
            RowFlag::Floor => "floor",
            RowFlag::Unattained => "unattained",
        }
    }
}

impl fmt::Display for RowFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RowFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [RowFlag::Ok, RowFlag::Unconverged, RowFlag::Floor, RowFlag::Unattained]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown row flag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Values for [`ResultTable::param_names`], in order.
    pub params: Vec<f64>,
    pub value: f64,
    /// Standard error over trials (0 for a single trial).
    pub std_error: f64,
    pub trials: usize,
    pub flag: RowFlag,
    /// Seed the row was derived from.
    pub seed: u64,
}

/// Measured values with the full parameter tuple on every row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: Experiment,
    /// Content hash of the resolved configuration.
    pub run_id: String,
    pub param_names: Vec<String>,
    pub rows: Vec<ResultRow>,
}

/// 64-bit FNV-1a of the canonical TOML form of `cfg`, as 16 hex digits.
/// The output directory is not part of the hash.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output = None;
    let text = canonical.to_toml().unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

const FIXED_HEAD: [&str; 3] = ["run_id", "experiment", "seed"];
const FIXED_TAIL: [&str; 4] = ["value", "std_error", "trials", "flag"];

impl ResultTable {
    pub fn new(experiment: Experiment, run_id: String, param_names: &[&str]) -> Self {
        Self { experiment, run_id, param_names: param_names.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: ResultRow) {
        assert_eq!(row.params.len(), self.param_names.len(), "row parameter count");
        self.rows.push(row);
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    /// Rows whose parameter `name` equals `value`.
    pub fn select(&self, name: &str, value: f64) -> Vec<&ResultRow> {
        let Some(i) = self.param_index(name) else { return Vec::new() };
        self.rows.iter().filter(|r| r.params[i] == value).collect()
    }

    /// Floats are written in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = FIXED_HEAD.to_vec();
        header.extend(self.param_names.iter().map(String::as_str));
        header.extend(FIXED_TAIL);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![self.run_id.clone(), self.experiment.to_string(), r.seed.to_string()];
            rec.extend(r.params.iter().map(|p| p.to_string()));
            rec.extend([r.value.to_string(), r.std_error.to_string(), r.trials.to_string(), r.flag.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("result table: {msg}"));
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < FIXED_HEAD.len() + FIXED_TAIL.len()
            || header[..3] != FIXED_HEAD
            || header[header.len() - 4..] != FIXED_TAIL
        {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let param_names = header[3..header.len() - 4].to_vec();
        let np = param_names.len();
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let mut run_id = None;
        let mut experiment = None;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            run_id.get_or_insert_with(|| rec[0].to_string());
            if experiment.is_none() {
                experiment = Some(rec[1].parse::<Experiment>()?);
            }
            let params = (0..np).map(|k| num(&rec[3 + k])).collect::<Result<Vec<f64>>>()?;
            rows.push(ResultRow {
                params,
                value: num(&rec[3 + np])?,
                std_error: num(&rec[4 + np])?,
                trials: rec[5 + np].parse().map_err(|e| bad(format!("trials: {e}")))?,
                flag: rec[6 + np].parse()?,
                seed: rec[2].parse().map_err(|e| bad(format!("seed: {e}")))?,
            });
        }
        Ok(Self {
            experiment: experiment.ok_or_else(|| bad("no rows".into()))?,
            run_id: run_id.unwrap_or_default(),
            param_names,
            rows,
        })
    }
}

/// Named scalars derived from a table (fit slopes, pass/fail checks).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, f64)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "value"])?;
        for (k, v) in &self.entries {
            w.write_record([k.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v = rec[1].parse::<f64>().map_err(|e| Error::Config(format!("summary value: {e}")))?;
            entries.push((rec[0].to_string(), v));
        }
        Ok(Self { entries })
    }
}

/// A named acceptance check evaluated on an experiment's output.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new(Experiment::MseSample, "00ff".into(), &["m", "n", "t"]);
        t.push(ResultRow {
            params: vec![50.0, 100.0, 0.1],
            value: 0.1 + 0.2,
            std_error: 1.0 / 3.0,
            trials: 10,
            flag: RowFlag::Ok,
            seed: u64::MAX,
        });
        t.push(ResultRow {
            params: vec![1600.0, 1600.0, 0.9],
            value: 1.234e-300,
            std_error: 0.0,
            trials: 1,
            flag: RowFlag::Unconverged,
            seed: 3,
        });
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv_string();
        assert!(text.starts_with("run_id,experiment,seed,m,n,t,value,std_error,trials,flag\n"));
        assert!(text.contains("0.30000000000000004"));
        assert_eq!(ResultTable::read_csv(text.as_bytes()).unwrap(), t);
    }

    #[test]
    fn summary_round_trip() {
        let mut s = Summary::default();
        s.push("beta[t=0.1]", 0.987654321);
        s.push("pass:slope", 1.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(Summary::read_csv(buf.as_slice()).unwrap(), s);
        assert_eq!(s.get("pass:slope"), Some(1.0));
    }

    #[test]
    fn run_id_tracks_config() {
        let text = "experiment = \"mse-sample\"\nepsilon = 0.1\n[grid]\nm = [5]\nn = [5]\nt = [0.5]\n";
        let a = ExperimentConfig::from_toml(text).unwrap();
        let mut b = a.clone();
        assert_eq!(run_id(&a), run_id(&b));
        b.output = Some("elsewhere".into());
        assert_eq!(run_id(&a), run_id(&b));
        b.seed = 1;
        assert_ne!(run_id(&a), run_id(&b));
        assert_eq!(run_id(&a).len(), 16);
    }
}
