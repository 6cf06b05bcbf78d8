//! Synthetic drifting streams and CSV batch ingestion.
//!
//! Time steps are numbered from 1. When a holdout is requested each row
//! goes to the test set iff its seeded uniform draw is below 1/3.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::Observation;
use crate::rng::{counter_rng, Domain};

pub const STREAM_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub steps: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    pub segments: Vec<Segment>,
    pub batch_size: usize,
    pub seed: u64,
    /// Hold out a third of every batch for testing.
    #[serde(default)]
    pub holdout: bool,
}

impl DriftSchedule {
    /// The artificial Beta-Binomial stream: p = 0.2 for 30 steps, 0.5 for
    /// 30 steps, 0.8 for 40 steps.
    pub fn three_regime_binomial(batch_size: usize, seed: u64) -> Self {
        let seg = |steps, p| Segment { steps, params: vec![p] };
        Self {
            segments: vec![seg(30, 0.2), seg(30, 0.5), seg(40, 0.8)],
            batch_size,
            seed,
            holdout: false,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.segments.is_empty() {
            return Err(invalid("schedule has no segments"));
        }
        if let Some(i) = self.segments.iter().position(|s| s.steps == 0) {
            return Err(invalid(format!("segment {i} has zero steps")));
        }
        Ok(())
    }

    /// (t, segment) for every step.
    fn steps(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s, s.steps))
            .enumerate()
            .map(|(i, s)| (i + 1, s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub t: usize,
    pub train: Vec<Observation>,
    pub test: Vec<Observation>,
}

impl Batch {
    pub fn new(t: usize, train: Vec<Observation>) -> Self {
        Self { t, train, test: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn split_rows(rows: Vec<Observation>, seed: u64, t: usize) -> (Vec<Observation>, Vec<Observation>) {
    let mut rng = counter_rng(seed, Domain::Split, t as u64);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for row in rows {
        if rng.random::<f64>() < 1.0 / 3.0 {
            test.push(row);
        } else {
            train.push(row);
        }
    }
    (train, test)
}

fn make_batch(t: usize, rows: Vec<Observation>, holdout: bool, seed: u64) -> Batch {
    if holdout {
        let (train, test) = split_rows(rows, seed, t);
        Batch { t, train, test }
    } else {
        Batch::new(t, rows)
    }
}

/// Bernoulli draws at the active segment's p.
pub fn generate_binomial_stream(sched: &DriftSchedule) -> Result<Vec<Batch>> {
    sched.check()?;
    for (i, s) in sched.segments.iter().enumerate() {
        match s.params.as_slice() {
            [p] if *p > 0.0 && *p < 1.0 => {}
            other => {
                return Err(invalid(format!(
                    "segment {i}: binomial parameter must be a single p in (0, 1), got {other:?}"
                )))
            }
        }
    }
    Ok(sched
        .steps()
        .map(|(t, seg)| {
            let p = seg.params[0];
            let mut rng = counter_rng(sched.seed, Domain::Generate, t as u64);
            let rows = (0..sched.batch_size)
                .map(|_| vec![if rng.random::<f64>() < p { 1.0 } else { 0.0 }])
                .collect();
            make_batch(t, rows, sched.holdout, sched.seed)
        })
        .collect())
}

/// Gaussian components parsed from a segment: `[mean, sd]` or
/// `[w₁, mean₁, sd₁, w₂, mean₂, sd₂, …]` with positive weights.
fn gaussian_components(i: usize, params: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let comps: Vec<(f64, f64, f64)> = match params.len() {
        2 => vec![(1.0, params[0], params[1])],
        n if n >= 3 && n % 3 == 0 => params.chunks(3).map(|c| (c[0], c[1], c[2])).collect(),
        n => {
            return Err(invalid(format!(
                "segment {i}: expected [mean, sd] or (weight, mean, sd) triples, got {n} values"
            )))
        }
    };
    for &(w, m, sd) in &comps {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(invalid(format!("segment {i}: stddev must be > 0, got {sd}")));
        }
        if !(w > 0.0 && w.is_finite()) || !m.is_finite() {
            return Err(invalid(format!("segment {i}: invalid component ({w}, {m}, {sd})")));
        }
    }
    let total: f64 = comps.iter().map(|c| c.0).sum();
    Ok(comps.into_iter().map(|(w, m, s)| (w / total, m, s)).collect())
}

/// Gaussian (or 1-D Gaussian-mixture) draws per schedule.
pub fn generate_gaussian_stream(sched: &DriftSchedule) -> Result<Vec<Batch>> {
    sched.check()?;
    let comps: Vec<Vec<(f64, f64, f64)>> = sched
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| gaussian_components(i, &s.params))
        .collect::<Result<_>>()?;
    let mut seg_of_step = Vec::new();
    for (i, s) in sched.segments.iter().enumerate() {
        seg_of_step.extend(std::iter::repeat_n(i, s.steps));
    }
    Ok(seg_of_step
        .iter()
        .enumerate()
        .map(|(idx, &seg)| {
            let t = idx + 1;
            let mut rng = counter_rng(sched.seed, Domain::Generate, t as u64);
            let rows = (0..sched.batch_size)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = comps[seg].last().copied().expect("non-empty");
                    for &c in &comps[seg] {
                        acc += c.0;
                        if u < acc {
                            chosen = c;
                            break;
                        }
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vec![chosen.1 + chosen.2 * z]
                })
                .collect();
            make_batch(t, rows, sched.holdout, sched.seed)
        })
        .collect())
}

/// Loads a CSV with a header row and one observation per row.
///
/// Rows are grouped by `batch_column`; batches are ordered by numeric key
/// when every key parses as a number, otherwise by first appearance. A
/// column named `split` (values `train`/`test`) is honored when present;
/// otherwise each batch is split with `split_seed`. All remaining columns
/// are the observation values, in header order. Lines starting with `#`
/// are comments.
pub fn load_csv_stream(path: &Path, batch_column: &str, split_seed: u64) -> Result<Vec<Batch>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let key_idx = headers.iter().position(|h| h == batch_column).ok_or_else(|| Error::Parse {
        path: display.clone(),
        row: 1,
        message: format!("missing batch column '{batch_column}'"),
    })?;
    let split_idx = headers.iter().position(|h| h == "split");
    let value_idx: Vec<usize> =
        (0..headers.len()).filter(|&i| i != key_idx && Some(i) != split_idx).collect();
    if value_idx.is_empty() {
        return Err(Error::Parse {
            path: display,
            row: 1,
            message: "no value columns".into(),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<Observation>, Vec<Observation>, bool)> = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        // header is row 1
        let row_no = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: display.clone(),
            row: row_no,
            message: e.to_string(),
        })?;
        let key = rec.get(key_idx).unwrap_or_default().to_string();
        let values = value_idx
            .iter()
            .map(|&j| {
                let raw = rec.get(j).unwrap_or_default();
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    path: display.clone(),
                    row: row_no,
                    message: format!("column '{}': cannot parse '{raw}' as a number", &headers[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (Vec::new(), Vec::new(), false)
        });
        match split_idx.map(|j| rec.get(j).unwrap_or_default()) {
            Some("train") => entry.0.push(values),
            Some("test") => {
                entry.1.push(values);
                entry.2 = true;
            }
            Some(other) => {
                return Err(Error::Parse {
                    path: display.clone(),
                    row: row_no,
                    message: format!("split must be 'train' or 'test', got '{other}'"),
                })
            }
            None => entry.0.push(values),
        }
    }

    let numeric: Option<Vec<f64>> = order.iter().map(|k| k.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut idx: Vec<usize> = (0..order.len()).collect();
        idx.sort_by(|&a, &b| nums[a].total_cmp(&nums[b]));
        order = idx.into_iter().map(|i| order[i].clone()).collect();
    }

    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, key)| {
            let t = i + 1;
            let (train, test, _) = groups.remove(&key).expect("grouped key");
            if split_idx.is_some() {
                Batch { t, train, test }
            } else {
                make_batch(t, train, true, split_seed)
            }
        })
        .collect())
}

/// Writes batches as `t,split,x0,x1,…` with a schema comment line.
pub fn write_csv_stream<W: Write>(batches: &[Batch], mut out: W) -> Result<()> {
    let width = batches
        .iter()
        .flat_map(|b| b.train.iter().chain(&b.test))
        .map(|r| r.len())
        .next()
        .unwrap_or(1);
    writeln!(out, "# schema_version={STREAM_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "split".to_string()];
    header.extend((0..width).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for b in batches {
        for (split, rows) in [("train", &b.train), ("test", &b.test)] {
            for row in rows {
                let mut rec = vec![b.t.to_string(), split.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
