//! File formats: event and covariate CSVs, model JSON and JSON-lines traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{Atom, WeightScheme};
use crate::error::{Error, Result};
use crate::fw::{FitTrace, InitialOffset};
use crate::hawkes::HawkesParams;
use crate::likelihood::{AdditiveModel, Term};
use crate::timeline::{build_timeline, EventTimeline, PreprocessTransform};

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub family: String,
    pub params: serde_json::Value,
    pub coef: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub dim: usize,
    pub preprocessing: PreprocessTransform,
    /// Final value of the offset.
    pub f0: f64,
    pub f0_rule: InitialOffset,
    pub budget: f64,
    pub atoms: Vec<AtomRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesParams>,
    pub weights_scheme: WeightScheme,
}

impl ModelFile {
    pub fn new(
        model: &AdditiveModel,
        f0_rule: InitialOffset,
        preprocessing: PreprocessTransform,
        hawkes: Option<HawkesParams>,
    ) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            dim: model.dim,
            preprocessing,
            f0: model.offset,
            f0_rule,
            budget: model.budget,
            atoms: model
                .terms
                .iter()
                .map(|t| AtomRecord {
                    family: t.atom.family_name().to_string(),
                    params: t.atom.params_json(),
                    coef: t.coef,
                    weight: t.weight,
                })
                .collect(),
            hawkes,
            weights_scheme: model.weights,
        }
    }

    pub fn model(&self) -> Result<AdditiveModel> {
        let mut terms = Vec::with_capacity(self.atoms.len());
        for r in &self.atoms {
            terms.push(Term { atom: Atom::from_json(&r.family, &r.params)?, coef: r.coef, weight: r.weight });
        }
        Ok(AdditiveModel { dim: self.dim, offset: self.f0, terms, budget: self.budget, weights: self.weights_scheme })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported model version {}", self.version)));
        }
        if self.preprocessing.caps.len() != self.dim || self.preprocessing.scales.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: self.preprocessing.caps.len() });
        }
        if !self.f0.is_finite() || !self.budget.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        if let Some(h) = &self.hawkes {
            h.validate()?;
        }
        let model = self.model()?;
        for t in &model.terms {
            if !t.coef.is_finite() || !(t.weight > 0.0) {
                return Err(Error::InvalidParameter(format!("bad coefficient or weight for {}", t.atom)));
            }
            if let Some(k) = t.atom.coordinate() {
                if k >= self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: k + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = self.to_json()?;
        let back: ModelFile = serde_json::from_str(&text)?;
        back.validate()?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<ModelFile> {
        let m: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        m.validate()?;
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &FitTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in &trace.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<crate::fw::TraceRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_events(path: &Path, jumps: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time"])?;
    for t in jumps {
        w.write_record([t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariates(path: &Path, timeline: &EventTimeline) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=timeline.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (t, x) in timeline.updates() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("line {line}: cannot parse {s:?} as a number")))
}

pub fn read_events(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("time") {
        return Err(Error::InvalidParameter(format!("{}: first column must be `time`", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        out.push(parse_field(rec.get(0).unwrap_or(""), i + 2)?);
    }
    Ok(out)
}

pub fn read_covariates(path: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("time") || headers.len() < 2 {
        return Err(Error::InvalidParameter(format!("{}: header must be `time,x1,...,xK`", path.display())));
    }
    let dim = headers.len() - 1;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::DimensionMismatch { expected: dim + 1, got: rec.len() });
        }
        let t = parse_field(&rec[0], i + 2)?;
        let x = (1..=dim).map(|k| parse_field(&rec[k], i + 2)).collect::<Result<Vec<_>>>()?;
        out.push((t, x));
    }
    Ok(out)
}

/// Loads a timeline; without an explicit horizon the last jump closes it.
pub fn read_timeline(events: &Path, covariates: &Path, horizon: Option<f64>) -> Result<EventTimeline> {
    let jumps = read_events(events)?;
    let updates = read_covariates(covariates)?;
    let horizon = match horizon {
        Some(h) => h,
        None => jumps.iter().copied().fold(f64::NAN, f64::max),
    };
    if !horizon.is_finite() {
        return Err(Error::NoJumps);
    }
    build_timeline(updates, jumps, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fw::TraceRecord;

    fn model() -> AdditiveModel {
        let mut m = AdditiveModel::constant(2, -0.3);
        m.budget = 4.0;
        m.weights = WeightScheme::EmpiricalL2;
        m.terms.push(Term { atom: Atom::Linear { k: 1 }, coef: 0.7, weight: 0.5 });
        m.terms.push(Term { atom: Atom::Bernstein { k: 0, coefs: vec![0.0, 0.5, 1.0] }, coef: -1.25, weight: 0.25 });
        m.terms.push(Term {
            atom: Atom::Sigmoid { k: 0, threshold: 1, a1: 1.0, a2: -1.0, c1: 0.3, c2: -0.1 },
            coef: 0.1,
            weight: 1.0,
        });
        m
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile::new(
            &model(),
            InitialOffset::LogRate,
            PreprocessTransform::identity(2),
            Some(HawkesParams { c: 2.0, a: 1.3 }),
        );
        file.write(&path).unwrap();
        let back = ModelFile::read(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.model().unwrap(), model());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"hawkes\""));
        assert!(text.contains("\"weights_scheme\": \"empirical_l2\""));
    }

    #[test]
    fn rejects_atoms_beyond_the_dimension() {
        let mut file = ModelFile::new(&model(), InitialOffset::Zero, PreprocessTransform::identity(2), None);
        file.atoms[0].params = serde_json::json!({ "k": 5 });
        assert!(file.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tl = build_timeline(vec![(0.0, vec![0.1, -2.5]), (0.75, vec![1.0 / 3.0, 4.0])], vec![0.5, 1.25, 2.0], 2.0)
            .unwrap();
        let ev = dir.path().join("events.csv");
        let cv = dir.path().join("covariates.csv");
        write_events(&ev, tl.jump_times()).unwrap();
        write_covariates(&cv, &tl).unwrap();
        assert!(std::fs::read_to_string(&cv).unwrap().starts_with("time,x1,x2\n"));
        let back = read_timeline(&ev, &cv, None).unwrap();
        assert_eq!(back, tl);
    }

    #[test]
    fn bad_csv_values_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ev = dir.path().join("events.csv");
        std::fs::write(&ev, "time\n0.5\nabc\n").unwrap();
        assert!(matches!(read_events(&ev), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn trace_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let rec = |i| TraceRecord { iter: i, loglik: -1.5, gap: 0.25, atom: "linear{\"k\":0}".into(), rho: 0.5 };
        let trace = FitTrace { records: vec![rec(1), rec(2)], initial_loglik: -2.0 };
        write_trace(&path, &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace.records);
    }
}
