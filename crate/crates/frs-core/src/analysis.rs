//! Aggregation of per-sample results into plot-ready tables: score means per
//! strictness, accuracy versus temperature, certainty histograms, the
//! entropy/breaking-temperature correlation, and question-type proportions.
//!
//! Reports are emitted as tab-separated files plus one JSON summary. Floats
//! are written in Rust's shortest round-trip form, so every emitted
//! aggregate can be recomputed bit-exactly from the emitted per-sample rows;
//! [`audit_report`] does exactly that.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::QuestionType;
use crate::dist::{trace_avg_probability, AnswerTrace};
use crate::protocol::{AccuracyCurve, AccuracyPoint};
use crate::score::{frs_for_sample, BreakResult, RobustnessSample};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation is undefined: {0}")]
    Degenerate(String),
    #[error("curves do not share a grid: temperature {0} is not on the widest curve")]
    GridMismatch(f64),
    #[error("top/bottom size {n} exceeds half the sample count ({samples})")]
    RankWindowTooLarge { n: usize, samples: usize },
    #[error("no sample carries a question-type label")]
    NoLabeledSamples,
    #[error("invalid strictness {0}: must be >= 1")]
    InvalidStrictness(f64),
    #[error("cannot write report file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report audit failed for {file}: {detail}")]
    Inconsistent { file: String, detail: String },
    #[error(transparent)]
    Score(#[from] crate::score::ScoreError),
}

/// Mean score per strictness exponent, recomputed from each sample's
/// entropy and break result; samples that never broke contribute exactly 1
/// at every strictness.
pub fn aggregate_frs(
    samples: &[RobustnessSample],
    d_values: &[f64],
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput("samples"));
    }
    let mut table = Vec::with_capacity(d_values.len());
    for &d in d_values {
        if d.is_nan() || d < 1.0 {
            return Err(AnalysisError::InvalidStrictness(d));
        }
        let mut total = 0.0;
        for s in samples {
            total += frs_for_sample(s.entropy_h, d, s.break_result)?;
        }
        table.push((d, total / samples.len() as f64));
    }
    Ok(table)
}

/// Sample Pearson correlation coefficient, clamped into `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::Degenerate(format!(
            "need at least 2 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(AnalysisError::Degenerate(
            "an input has zero variance".into(),
        ));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation between baseline entropy and breaking temperature over the
/// samples that actually broke.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakCorrelation {
    pub r: f64,
    pub broken: usize,
    /// Samples without a breaking temperature, excluded from the statistic.
    pub excluded_no_break: usize,
}

pub fn entropy_vs_break_correlation(
    samples: &[RobustnessSample],
) -> Result<BreakCorrelation, AnalysisError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0usize;
    for s in samples {
        match s.break_result {
            BreakResult::Broke { t_b } => {
                xs.push(s.entropy_h);
                ys.push(t_b);
            }
            BreakResult::NoBreakWithinGrid { .. } => excluded += 1,
        }
    }
    if xs.len() < 2 {
        return Err(AnalysisError::Degenerate(format!(
            "only {} broken samples",
            xs.len()
        )));
    }
    let r = pearson(&xs, &ys)?;
    Ok(BreakCorrelation {
        r,
        broken: xs.len(),
        excluded_no_break: excluded,
    })
}

/// Half-open certainty bin `[i/10, (i+1)/10)` for an average probability;
/// the boundary value 1.0 joins the top bin.
pub fn certainty_bin(avg_probability: f64) -> usize {
    if avg_probability >= 1.0 {
        9
    } else {
        ((avg_probability * 10.0).floor() as usize).min(9)
    }
}

/// Counts of answers per certainty bin at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertaintyHistogram {
    pub temperature: f64,
    pub bins: [u64; 10],
}

/// Bin answer traces by average chosen-token probability, one histogram per
/// temperature group.
pub fn certainty_histogram(
    groups: &[(f64, Vec<AnswerTrace>)],
) -> Result<Vec<CertaintyHistogram>, AnalysisError> {
    if groups.is_empty() {
        return Err(AnalysisError::EmptyInput("trace groups"));
    }
    let mut histograms = Vec::with_capacity(groups.len());
    for (temperature, traces) in groups {
        let mut bins = [0u64; 10];
        for trace in traces {
            if let Ok(p) = trace_avg_probability(trace) {
                bins[certainty_bin(p)] += 1;
            }
        }
        histograms.push(CertaintyHistogram {
            temperature: *temperature,
            bins,
        });
    }
    histograms.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    Ok(histograms)
}

/// Sum the per-sample certainty bins persisted on accuracy points into one
/// histogram per temperature.
pub fn certainty_histogram_from_curves(curves: &[AccuracyCurve]) -> Vec<CertaintyHistogram> {
    let mut by_temp: Vec<(i64, f64, [u64; 10])> = Vec::new();
    for curve in curves {
        for point in &curve.points {
            let key = (point.temperature * 1000.0).round() as i64;
            match by_temp.iter_mut().find(|(k, _, _)| *k == key) {
                Some((_, _, bins)) => {
                    for (b, add) in bins.iter_mut().zip(&point.certainty_bins) {
                        *b += add;
                    }
                }
                None => by_temp.push((key, point.temperature, point.certainty_bins)),
            }
        }
    }
    by_temp.sort_by_key(|(k, _, _)| *k);
    by_temp
        .into_iter()
        .map(|(_, temperature, bins)| CertaintyHistogram { temperature, bins })
        .collect()
}

/// Mean accuracy per temperature across curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureAccuracy {
    pub temperature: f64,
    pub mean_accuracy: f64,
    pub curve_count: usize,
}

fn grid_key(temperature: f64) -> i64 {
    (temperature * 1000.0).round() as i64
}

/// Sorted union of the temperatures probed by any curve.
pub fn union_grid(curves: &[AccuracyCurve]) -> Vec<f64> {
    let mut keys: Vec<(i64, f64)> = Vec::new();
    for curve in curves {
        for point in &curve.points {
            let key = grid_key(point.temperature);
            if !keys.iter().any(|(k, _)| *k == key) {
                keys.push((key, point.temperature));
            }
        }
    }
    keys.sort_by_key(|(k, _)| *k);
    keys.into_iter().map(|(_, t)| t).collect()
}

/// Per-temperature mean accuracy over all curves. Curves may cover subsets
/// of `grid` (binary-search sweeps probe only some points), but every probed
/// temperature must lie on it; off-grid points mean curves from different
/// runs were mixed.
pub fn accuracy_table(
    curves: &[AccuracyCurve],
    grid: &[f64],
) -> Result<Vec<TemperatureAccuracy>, AnalysisError> {
    if curves.is_empty() {
        return Err(AnalysisError::EmptyInput("curves"));
    }
    let reference: Vec<i64> = grid.iter().copied().map(grid_key).collect();
    let mut sums: HashMap<i64, (f64, usize)> = HashMap::new();
    for curve in curves {
        for point in &curve.points {
            let key = grid_key(point.temperature);
            if !reference.contains(&key) {
                return Err(AnalysisError::GridMismatch(point.temperature));
            }
            let entry = sums.entry(key).or_insert((0.0, 0));
            entry.0 += point.accuracy;
            entry.1 += 1;
        }
    }
    let mut table: Vec<TemperatureAccuracy> = Vec::with_capacity(sums.len());
    for (&key, &temperature) in reference.iter().zip(grid) {
        if let Some((total, count)) = sums.get(&key) {
            table.push(TemperatureAccuracy {
                temperature,
                mean_accuracy: total / *count as f64,
                curve_count: *count,
            });
        }
    }
    Ok(table)
}

/// Share of a question type landing in the top-ranked set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProportion {
    pub question_type: QuestionType,
    pub top_count: usize,
    pub bottom_count: usize,
    /// `100 * top / (top + bottom)`.
    pub top_share_pct: f64,
}

/// Rank samples by score (ties broken by lower entropy, then question id),
/// take the `n` highest and `n` lowest, and report for each question type
/// the percentage of its top+bottom appearances that were in the top set.
/// Types absent from both sets are omitted.
pub fn question_type_proportions(
    samples: &[RobustnessSample],
    labels: &HashMap<String, QuestionType>,
    n: usize,
) -> Result<Vec<TypeProportion>, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput("samples"));
    }
    if n == 0 || n * 2 > samples.len() {
        return Err(AnalysisError::RankWindowTooLarge {
            n,
            samples: samples.len(),
        });
    }
    let type_of = |s: &RobustnessSample| -> Option<QuestionType> {
        labels.get(&s.question_id).copied().or(s.question_type)
    };
    if !samples.iter().any(|s| type_of(s).is_some()) {
        return Err(AnalysisError::NoLabeledSamples);
    }
    let mut ranked: Vec<&RobustnessSample> = samples.iter().collect();
    ranked.sort_by(|a, b| {
        b.frs
            .total_cmp(&a.frs)
            .then_with(|| a.entropy_h.total_cmp(&b.entropy_h))
            .then_with(|| a.question_id.cmp(&b.question_id))
    });
    let mut counts: HashMap<QuestionType, (usize, usize)> = HashMap::new();
    for s in &ranked[..n] {
        if let Some(t) = type_of(s) {
            counts.entry(t).or_default().0 += 1;
        }
    }
    for s in &ranked[ranked.len() - n..] {
        if let Some(t) = type_of(s) {
            counts.entry(t).or_default().1 += 1;
        }
    }
    let mut proportions: Vec<TypeProportion> = counts
        .into_iter()
        .map(|(question_type, (top, bottom))| TypeProportion {
            question_type,
            top_count: top,
            bottom_count: bottom,
            top_share_pct: 100.0 * top as f64 / (top + bottom) as f64,
        })
        .collect();
    proportions.sort_by_key(|p| p.question_type);
    Ok(proportions)
}

/// Run provenance carried into every report artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_id: String,
    pub dataset_tag: String,
    pub config_hash: String,
}

/// Everything the report stage computes. All aggregate tables are derived
/// from `samples` and `curves`, which are themselves emitted, so the whole
/// report can be audited from its own files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub d_values: Vec<f64>,
    pub samples: Vec<RobustnessSample>,
    pub curves: Vec<AccuracyCurve>,
    pub frs_means: Vec<(f64, f64)>,
    pub accuracy_by_temperature: Vec<TemperatureAccuracy>,
    pub certainty: Vec<CertaintyHistogram>,
    pub correlation: Option<BreakCorrelation>,
    pub notes: Vec<String>,
    pub type_proportions: Option<Vec<TypeProportion>>,
    pub proportion_n: usize,
    pub quarantined: usize,
}

impl RunReport {
    /// Assemble a report. `labels`, when given, override per-record question
    /// types. `proportion_n` of `None` picks `min(1000, samples / 2)`.
    pub fn build(
        metadata: RunMetadata,
        mut samples: Vec<RobustnessSample>,
        mut curves: Vec<AccuracyCurve>,
        d_values: &[f64],
        labels: Option<&HashMap<String, QuestionType>>,
        proportion_n: Option<usize>,
        quarantined: usize,
    ) -> Result<Self, AnalysisError> {
        if samples.is_empty() {
            return Err(AnalysisError::EmptyInput("samples"));
        }
        samples.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        curves.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        if let Some(labels) = labels {
            for s in &mut samples {
                if let Some(t) = labels.get(&s.question_id) {
                    s.question_type = Some(*t);
                }
            }
        }
        let mut notes = Vec::new();
        let frs_means = aggregate_frs(&samples, d_values)?;
        let grid = union_grid(&curves);
        let accuracy_by_temperature = accuracy_table(&curves, &grid)?;
        let certainty = certainty_histogram_from_curves(&curves);
        let correlation = match entropy_vs_break_correlation(&samples) {
            Ok(c) => Some(c),
            Err(AnalysisError::Degenerate(reason)) => {
                notes.push(format!("entropy/break correlation omitted: {reason}"));
                None
            }
            Err(e) => return Err(e),
        };
        let proportion_n = match proportion_n {
            Some(n) => n,
            None => (samples.len() / 2).min(1000),
        };
        let empty = HashMap::new();
        let label_map = labels.unwrap_or(&empty);
        let type_proportions = if proportion_n == 0 {
            notes.push("question-type proportions omitted: too few samples".into());
            None
        } else {
            match question_type_proportions(&samples, label_map, proportion_n) {
                Ok(p) => Some(p),
                Err(AnalysisError::NoLabeledSamples) => {
                    notes.push(
                        "question-type proportions omitted: no labeled samples".into(),
                    );
                    None
                }
                Err(AnalysisError::RankWindowTooLarge { n, samples }) => {
                    return Err(AnalysisError::RankWindowTooLarge { n, samples })
                }
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            metadata,
            d_values: d_values.to_vec(),
            samples,
            curves,
            frs_means,
            accuracy_by_temperature,
            certainty,
            correlation,
            notes,
            type_proportions,
            proportion_n,
            quarantined,
        })
    }
}

fn fmt_d(d: f64) -> String {
    if d.fract() == 0.0 && d.abs() < 1e15 {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    }
}

/// Every delimited file opens with a comment line carrying the config hash,
/// so any artifact can be traced back to the run that produced it.
fn provenance_line(report: &RunReport) -> String {
    format!("# config {}\n", report.metadata.config_hash)
}

fn fmt_type(t: Option<QuestionType>) -> String {
    t.map(|t| t.to_string()).unwrap_or_default()
}

fn break_kind(b: BreakResult) -> &'static str {
    match b {
        BreakResult::Broke { .. } => "broke",
        BreakResult::NoBreakWithinGrid { .. } => "no_break",
    }
}

fn break_temperature(b: BreakResult) -> f64 {
    match b {
        BreakResult::Broke { t_b } => t_b,
        BreakResult::NoBreakWithinGrid { max_t } => max_t,
    }
}

fn render_per_sample(report: &RunReport) -> String {
    let mut out = provenance_line(report);
    out.push_str("question_id\tquestion_type\tentropy\tbreak_kind\tbreak_temperature");
    for &d in &report.d_values {
        out.push_str("\tfrs_d");
        out.push_str(&fmt_d(d));
    }
    out.push('\n');
    for s in &report.samples {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}",
            s.question_id,
            fmt_type(s.question_type),
            s.entropy_h,
            break_kind(s.break_result),
            break_temperature(s.break_result),
        ));
        for &d in &report.d_values {
            let frs = frs_for_sample(s.entropy_h, d, s.break_result).expect("samples validated");
            out.push_str(&format!("\t{frs}"));
        }
        out.push('\n');
    }
    out
}

fn render_curve_points(report: &RunReport) -> String {
    let mut out = provenance_line(report);
    out.push_str("question_id\ttemperature\taccuracy\ttrial_count");
    for i in 0..10 {
        out.push_str(&format!("\tbin_{i}"));
    }
    out.push('\n');
    for curve in &report.curves {
        for p in &curve.points {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}",
                curve.question_id, p.temperature, p.accuracy, p.trial_count
            ));
            for b in &p.certainty_bins {
                out.push_str(&format!("\t{b}"));
            }
            out.push('\n');
        }
    }
    out
}

fn render_frs_means(report: &RunReport) -> String {
    let mut out = provenance_line(report);
    out.push_str("d\tmean_frs\tsample_count\n");
    for (d, mean) in &report.frs_means {
        out.push_str(&format!("{}\t{}\t{}\n", fmt_d(*d), mean, report.samples.len()));
    }
    out
}

fn render_accuracy_table(report: &RunReport) -> String {
    let mut out = provenance_line(report);
    out.push_str("temperature\tmean_accuracy\tcurve_count\n");
    for row in &report.accuracy_by_temperature {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            row.temperature, row.mean_accuracy, row.curve_count
        ));
    }
    out
}

fn render_certainty(report: &RunReport) -> String {
    let mut out = provenance_line(report);
    out.push_str("temperature\tbin_low\tbin_high\tcount\n");
    for hist in &report.certainty {
        for (i, count) in hist.bins.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                hist.temperature,
                i as f64 / 10.0,
                (i + 1) as f64 / 10.0,
                count
            ));
        }
    }
    out
}

fn render_type_proportions(report: &RunReport, proportions: &[TypeProportion]) -> String {
    let mut out = provenance_line(report);
    out.push_str("question_type\ttop_count\tbottom_count\ttop_share_pct\n");
    for p in proportions {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.question_type, p.top_count, p.bottom_count, p.top_share_pct
        ));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct Summary {
    config_hash: String,
    model_id: String,
    dataset_tag: String,
    d_values: Vec<f64>,
    sample_count: usize,
    quarantined: usize,
    proportion_n: usize,
    correlation: Option<BreakCorrelation>,
    notes: Vec<String>,
    files: Vec<String>,
}

fn render_summary(report: &RunReport, files: &[String]) -> String {
    let summary = Summary {
        config_hash: report.metadata.config_hash.clone(),
        model_id: report.metadata.model_id.clone(),
        dataset_tag: report.metadata.dataset_tag.clone(),
        d_values: report.d_values.clone(),
        sample_count: report.samples.len(),
        quarantined: report.quarantined,
        proportion_n: report.proportion_n,
        correlation: report.correlation,
        notes: report.notes.clone(),
        files: files.to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

const PER_SAMPLE_FILE: &str = "per_sample.tsv";
const CURVE_POINTS_FILE: &str = "curve_points.tsv";
const FRS_MEANS_FILE: &str = "frs_by_d.tsv";
const ACCURACY_FILE: &str = "accuracy_by_temperature.tsv";
const CERTAINTY_FILE: &str = "certainty_bins.tsv";
const PROPORTIONS_FILE: &str = "question_type_proportions.tsv";
const SUMMARY_FILE: &str = "summary.json";

/// Write the report as delimited files plus a JSON summary into `dir`.
/// Output is byte-deterministic for identical reports.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    if report.samples.is_empty() {
        return Err(AnalysisError::EmptyInput("samples"));
    }
    std::fs::create_dir_all(dir).map_err(|source| AnalysisError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files: Vec<(String, String)> = vec![
        (PER_SAMPLE_FILE.into(), render_per_sample(report)),
        (CURVE_POINTS_FILE.into(), render_curve_points(report)),
        (FRS_MEANS_FILE.into(), render_frs_means(report)),
        (ACCURACY_FILE.into(), render_accuracy_table(report)),
        (CERTAINTY_FILE.into(), render_certainty(report)),
    ];
    if let Some(proportions) = &report.type_proportions {
        files.push((
            PROPORTIONS_FILE.into(),
            render_type_proportions(report, proportions),
        ));
    }
    let names: Vec<String> = files
        .iter()
        .map(|(name, _)| name.clone())
        .chain(std::iter::once(SUMMARY_FILE.to_string()))
        .collect();
    files.push((SUMMARY_FILE.into(), render_summary(report, &names)));

    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(&name);
        std::fs::write(&path, content).map_err(|source| AnalysisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn read_report_file(dir: &Path, name: &str) -> Result<String, AnalysisError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    file: &'static str,
    what: &str,
) -> Result<T, AnalysisError> {
    field.parse().map_err(|_| AnalysisError::Inconsistent {
        file: file.to_string(),
        detail: format!("cannot parse {what} from {field:?}"),
    })
}

/// Reconstruct the report inputs from the emitted per-sample rows, recompute
/// every aggregate with the same code paths, and verify the regenerated
/// files match the emitted ones byte for byte.
pub fn audit_report(dir: &Path) -> Result<(), AnalysisError> {
    let summary_text = read_report_file(dir, SUMMARY_FILE)?;
    let summary: Summary =
        serde_json::from_str(&summary_text).map_err(|e| AnalysisError::Inconsistent {
            file: SUMMARY_FILE.to_string(),
            detail: e.to_string(),
        })?;

    let per_sample_text = read_report_file(dir, PER_SAMPLE_FILE)?;
    let primary_d = *summary
        .d_values
        .first()
        .ok_or_else(|| AnalysisError::Inconsistent {
            file: SUMMARY_FILE.to_string(),
            detail: "summary lists no d values".into(),
        })?;
    let mut samples = Vec::new();
    for line in per_sample_text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 + summary.d_values.len() {
            return Err(AnalysisError::Inconsistent {
                file: PER_SAMPLE_FILE.to_string(),
                detail: format!("row has {} fields", fields.len()),
            });
        }
        let entropy: f64 = parse_field(fields[2], PER_SAMPLE_FILE, "entropy")?;
        let temperature: f64 = parse_field(fields[4], PER_SAMPLE_FILE, "break temperature")?;
        let break_result = match fields[3] {
            "broke" => BreakResult::Broke { t_b: temperature },
            "no_break" => BreakResult::NoBreakWithinGrid { max_t: temperature },
            other => {
                return Err(AnalysisError::Inconsistent {
                    file: PER_SAMPLE_FILE.to_string(),
                    detail: format!("unknown break kind {other:?}"),
                })
            }
        };
        let question_type = if fields[1].is_empty() {
            None
        } else {
            Some(parse_field(fields[1], PER_SAMPLE_FILE, "question type")?)
        };
        // every emitted score column must equal its recomputation
        for (i, &d) in summary.d_values.iter().enumerate() {
            let emitted: f64 = parse_field(fields[5 + i], PER_SAMPLE_FILE, "frs")?;
            let recomputed = frs_for_sample(entropy, d, break_result)?;
            if emitted != recomputed {
                return Err(AnalysisError::Inconsistent {
                    file: PER_SAMPLE_FILE.to_string(),
                    detail: format!(
                        "frs at d={} for {}: emitted {emitted}, recomputed {recomputed}",
                        fmt_d(d),
                        fields[0]
                    ),
                });
            }
        }
        samples.push(RobustnessSample {
            question_id: fields[0].to_string(),
            entropy_h: entropy,
            break_result,
            frs: frs_for_sample(entropy, primary_d, break_result)?,
            d: primary_d,
            question_type,
        });
    }

    let curve_text = read_report_file(dir, CURVE_POINTS_FILE)?;
    let mut curves: Vec<AccuracyCurve> = Vec::new();
    for line in curve_text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 14 {
            return Err(AnalysisError::Inconsistent {
                file: CURVE_POINTS_FILE.to_string(),
                detail: format!("row has {} fields", fields.len()),
            });
        }
        let mut bins = [0u64; 10];
        for (i, bin) in bins.iter_mut().enumerate() {
            *bin = parse_field(fields[4 + i], CURVE_POINTS_FILE, "bin count")?;
        }
        let point = AccuracyPoint {
            temperature: parse_field(fields[1], CURVE_POINTS_FILE, "temperature")?,
            accuracy: parse_field(fields[2], CURVE_POINTS_FILE, "accuracy")?,
            trial_count: parse_field(fields[3], CURVE_POINTS_FILE, "trial count")?,
            certainty_bins: bins,
        };
        match curves.last_mut() {
            Some(curve) if curve.question_id == fields[0] => curve.points.push(point),
            _ => curves.push(AccuracyCurve {
                question_id: fields[0].to_string(),
                points: vec![point],
            }),
        }
    }

    let rebuilt = RunReport::build(
        RunMetadata {
            model_id: summary.model_id.clone(),
            dataset_tag: summary.dataset_tag.clone(),
            config_hash: summary.config_hash.clone(),
        },
        samples,
        curves,
        &summary.d_values,
        None,
        Some(summary.proportion_n).filter(|&n| n > 0),
        summary.quarantined,
    )?;

    let mut expectations: Vec<(&str, String)> = vec![
        (PER_SAMPLE_FILE, render_per_sample(&rebuilt)),
        (CURVE_POINTS_FILE, render_curve_points(&rebuilt)),
        (FRS_MEANS_FILE, render_frs_means(&rebuilt)),
        (ACCURACY_FILE, render_accuracy_table(&rebuilt)),
        (CERTAINTY_FILE, render_certainty(&rebuilt)),
    ];
    if let Some(proportions) = &rebuilt.type_proportions {
        expectations.push((
            PROPORTIONS_FILE,
            render_type_proportions(&rebuilt, proportions),
        ));
    }
    for (file, expected) in expectations {
        let on_disk = read_report_file(dir, file)?;
        if on_disk != expected {
            return Err(AnalysisError::Inconsistent {
                file: file.to_string(),
                detail: "recomputed content differs from emitted file".into(),
            });
        }
    }
    let emitted_correlation = summary.correlation;
    if emitted_correlation != rebuilt.correlation {
        return Err(AnalysisError::Inconsistent {
            file: SUMMARY_FILE.to_string(),
            detail: format!(
                "correlation {:?} differs from recomputation {:?}",
                emitted_correlation, rebuilt.correlation
            ),
        });
    }
    Ok(())
}
