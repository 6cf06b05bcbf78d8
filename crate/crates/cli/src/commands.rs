//! The `generate`, `run` and `compare` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use streamvb::learners::{Learner, LearnerConfig, LearnerKind, LearnerRegistry};
use streamvb::metrics::TraceRecord;
use streamvb::models::ModelSpec;
use streamvb::streams::{write_csv_stream, Batch, STREAM_SCHEMA_VERSION};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const STREAM_FILE: &str = "stream.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes the configured synthetic stream to `<output_dir>/stream.csv`.
pub fn generate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let Some(schedule) = cfg.stream.schedule(cfg.seed) else {
        return Err(CliError::Config("generate needs a synthetic stream source, not csv".into()));
    };
    let stream = cfg.stream.load(cfg.seed, Path::new("."))?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(STREAM_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    write_csv_stream(&stream, &mut out).map_err(|e| CliError::from_core_at(e, &path))?;
    out.flush().map_err(|e| CliError::io(&path, e))?;
    let rows: usize = stream.iter().map(Batch::len).sum();
    debug_assert_eq!(stream.len(), schedule.total_steps());
    Ok(format!(
        "wrote {rows} rows in {} batches to {} (schema_version={STREAM_SCHEMA_VERSION})",
        stream.len(),
        path.display()
    ))
}

pub fn trace_path(dir: &Path, learner: &str) -> PathBuf {
    dir.join(format!("trace_{learner}.csv"))
}

fn trace_header(model: &ModelSpec, kind: LearnerKind) -> Vec<String> {
    let mut h: Vec<String> = vec!["t".into(), "learner".into(), "elbo".into()];
    h.extend(model.blocks().iter().map(|b| format!("ess_{}", b.name)));
    match kind {
        LearnerKind::SvbHpp => h.push("expected_rho".into()),
        LearnerKind::SvbMhpp => h.extend(model.blocks().iter().map(|b| format!("expected_rho_{}", b.name))),
        _ => {}
    }
    h.push("tmll".into());
    h.extend(model.summary_labels());
    h
}

fn trace_row(r: &TraceRecord) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut row = vec![r.t.to_string(), r.learner.clone(), r.elbo.to_string()];
    row.extend(r.ess.iter().map(|&e| opt(e)));
    row.extend(r.expected_rho.iter().map(f64::to_string));
    row.push(opt(r.tmll));
    row.extend(r.summary.iter().map(f64::to_string));
    row
}

/// Streams every batch through one learner, appending a trace row per step.
fn run_learner(
    mut learner: Box<dyn Learner>,
    model: &ModelSpec,
    stream: &[Batch],
    path: &Path,
) -> Result<usize, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# schema_version={TRACE_SCHEMA_VERSION}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::malformed(path, e.to_string());
    w.write_record(trace_header(model, learner.kind())).map_err(csv_err)?;
    for batch in stream {
        let record = learner.step(batch)?;
        w.write_record(trace_row(&record)).map_err(csv_err)?;
        // keep the prefix on disk if a later step fails
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    Ok(stream.len())
}

/// Outcome of one learner within a run.
#[derive(Debug)]
pub struct LearnerOutcome {
    pub name: String,
    pub result: Result<usize, CliError>,
}

/// Runs every configured learner over the stream concurrently, one trace
/// file each. A failing learner does not stop the others.
pub fn run(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<LearnerOutcome>, CliError> {
    let model = cfg.model.build()?;
    let learners: Vec<LearnerConfig> = cfg.learner_configs()?;
    let stream = cfg.stream.load(cfg.seed, base)?;
    create_dir(&cfg.output_dir)?;
    let registry = LearnerRegistry::default();

    let outcomes = thread::scope(|scope| {
        let handles: Vec<_> = learners
            .iter()
            .map(|lc| {
                let name = lc.display_name();
                let built = registry.build(&model, lc);
                let path = trace_path(&cfg.output_dir, &name);
                let (model, stream) = (&model, &stream);
                let handle = scope.spawn(move || run_learner(built?, model, stream, &path));
                (name, handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| LearnerOutcome { name, result: h.join().expect("learner thread panicked") })
            .collect()
    });
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub learner: String,
    pub aggregated_tmll: f64,
    pub steps: usize,
    pub best: bool,
}

struct Trace {
    learner: String,
    ts: Vec<usize>,
    tmll: Vec<f64>,
}

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let bad = |msg: String| CliError::malformed(path, msg);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::from_core_at(e.into(), path))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column '{name}'")))
    };
    let (t_col, learner_col, tmll_col) = (col("t")?, col("learner")?, col("tmll")?);
    let mut trace = Trace { learner: String::new(), ts: Vec::new(), tmll: Vec::new() };
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(format!("data row {row}: {e}")))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let t = field(t_col).parse().map_err(|_| bad(format!("data row {row}: bad t '{}'", field(t_col))))?;
        let tmll: f64 = match field(tmll_col) {
            "" => return Err(bad(format!("data row {row}: no tmll value (was the stream split into train/test?)"))),
            v => v.parse().map_err(|_| bad(format!("data row {row}: bad tmll '{v}'")))?,
        };
        if trace.learner.is_empty() {
            trace.learner = field(learner_col).to_string();
        }
        trace.ts.push(t);
        trace.tmll.push(tmll);
    }
    if trace.ts.is_empty() {
        return Err(bad("trace has no rows".into()));
    }
    Ok(trace)
}

/// Aggregates the TMLL of every `trace_*.csv` in `dir`, writes
/// `summary.csv` and returns the rows with the best learner flagged.
pub fn compare(dir: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::malformed(dir, "no trace_*.csv files"));
    }
    let traces = paths.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>, _>>()?;
    for (p, t) in paths.iter().zip(&traces).skip(1) {
        if t.ts != traces[0].ts {
            return Err(CliError::malformed(
                p,
                format!(
                    "covers {} steps while {} covers {}; traces must come from the same stream",
                    t.ts.len(),
                    paths[0].display(),
                    traces[0].ts.len()
                ),
            ));
        }
    }
    let mut rows: Vec<SummaryRow> = traces
        .iter()
        .map(|t| SummaryRow {
            learner: t.learner.clone(),
            aggregated_tmll: t.tmll.iter().sum(),
            steps: t.ts.len(),
            best: false,
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.aggregated_tmll.total_cmp(&b.1.aggregated_tmll))
        .map(|(i, _)| i)
        .expect("non-empty");
    rows[best].best = true;

    let path = dir.join(SUMMARY_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# schema_version={TRACE_SCHEMA_VERSION}").map_err(|e| CliError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::malformed(&path, e.to_string());
    w.write_record(["learner", "aggregated_tmll", "steps", "best"]).map_err(csv_err)?;
    for r in &rows {
        w.write_record([r.learner.clone(), r.aggregated_tmll.to_string(), r.steps.to_string(), r.best.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

/// Aligned text table of a comparison, best learner marked with `*`.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.learner.len()).max().unwrap_or(0).max("learner".len());
    let mut s = format!("  {:<width$}  {:>16}  {:>6}\n", "learner", "aggregated_tmll", "steps");
    for r in rows {
        let mark = if r.best { '*' } else { ' ' };
        s += &format!("{mark} {:<width$}  {:>16.4}  {:>6}\n", r.learner, r.aggregated_tmll, r.steps);
    }
    s
}
