//! From plausibility scores to labels, metrics, and reports.
//!
//! A relation is predicted by comparing the scores of its two marked
//! readings: support wins ties. Per-class precision, recall, and F1 are
//! reported in percent with explicit zero-division conventions (the attack
//! class is scarce, so empty denominators do occur), and the headline number
//! is the unweighted mean of the two class F1 scores. Four single models can
//! be aggregated by majority vote; two-two ties fall to a configurable rule.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationLabel;
use crate::model::{score_sequence, EncoderConfig, ModelError, ModelParams};
use crate::train::EmbeddedPair;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("ensemble member mismatch: {0}")]
    MemberMismatch(String),
    #[error("prediction/gold mismatch: {0}")]
    MissingPrediction(String),
    #[error("malformed prediction record: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One classified relation with both reading scores retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rel_id: String,
    pub predicted: RelationLabel,
    pub score_support: f64,
    pub score_attack: f64,
    pub connector_abbrev: String,
}

/// The decision rule: support if and only if its reading scores at least as
/// high as the attack reading.
pub fn prediction_from_scores(
    rel_id: &str,
    connector_abbrev: &str,
    score_support: f64,
    score_attack: f64,
) -> Prediction {
    let predicted = if score_support >= score_attack {
        RelationLabel::Support
    } else {
        RelationLabel::Attack
    };
    Prediction {
        rel_id: rel_id.to_string(),
        predicted,
        score_support,
        score_attack,
        connector_abbrev: connector_abbrev.to_string(),
    }
}

/// Score both readings of one instance and apply the decision rule.
pub fn classify(
    pair: &EmbeddedPair,
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<Prediction, EvalError> {
    let score_support = score_sequence(&pair.support_marked, params, config)?;
    let score_attack = score_sequence(&pair.attack_marked, params, config)?;
    Ok(prediction_from_scores(
        &pair.rel_id,
        &pair.connector_abbrev,
        score_support,
        score_attack,
    ))
}

pub fn classify_all(
    pairs: &[EmbeddedPair],
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<Vec<Prediction>, EvalError> {
    pairs.iter().map(|p| classify(p, params, config)).collect()
}

/// What breaks two-two ties in the four-member vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Compare the summed score margins: Σ(score_support − score_attack) ≥ 0
    /// predicts support.
    SumMargin,
    /// Fall back to the majority class of the data (support).
    MajorityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Connector abbreviations of the expected members.
    pub members: Vec<String>,
    pub tie_rule: TieRule,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: ["AA", "AD", "MH", "YN"].map(String::from).to_vec(),
            tie_rule: TieRule::SumMargin,
        }
    }
}

/// Majority vote over the configured members' predictions for one relation.
/// The output carries the member score sums, so the sum-margin tie decision
/// can be read off the returned record.
pub fn vote(members: &[Prediction], config: &EnsembleConfig) -> Result<Prediction, EvalError> {
    if members.len() != config.members.len() {
        return Err(EvalError::MemberMismatch(format!(
            "expected {} members, got {}",
            config.members.len(),
            members.len()
        )));
    }
    let rel_id = &members[0].rel_id;
    if members.iter().any(|m| &m.rel_id != rel_id) {
        return Err(EvalError::MemberMismatch(
            "members vote on different relations".to_string(),
        ));
    }
    // Abbreviations are matched in normalized form so "M/H" and "MH" agree.
    let norm = |s: &str| s.to_ascii_uppercase().replace(['/', '-'], "");
    let mut found: Vec<String> = members.iter().map(|m| norm(&m.connector_abbrev)).collect();
    let mut expected: Vec<String> = config.members.iter().map(|s| norm(s)).collect();
    found.sort_unstable();
    expected.sort_unstable();
    if found != expected {
        return Err(EvalError::MemberMismatch(format!(
            "expected connectors {expected:?}, got {found:?}"
        )));
    }

    let support_votes = members
        .iter()
        .filter(|m| m.predicted == RelationLabel::Support)
        .count();
    let attack_votes = members.len() - support_votes;
    let sum_support: f64 = members.iter().map(|m| m.score_support).sum();
    let sum_attack: f64 = members.iter().map(|m| m.score_attack).sum();
    let predicted = match support_votes.cmp(&attack_votes) {
        std::cmp::Ordering::Greater => RelationLabel::Support,
        std::cmp::Ordering::Less => RelationLabel::Attack,
        std::cmp::Ordering::Equal => match config.tie_rule {
            TieRule::SumMargin => {
                if sum_support - sum_attack >= 0.0 {
                    RelationLabel::Support
                } else {
                    RelationLabel::Attack
                }
            }
            TieRule::MajorityClass => RelationLabel::Support,
        },
    };
    Ok(Prediction {
        rel_id: rel_id.clone(),
        predicted,
        score_support: sum_support,
        score_attack: sum_attack,
        connector_abbrev: "vote".to_string(),
    })
}

/// Precision, recall, and F1 for one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Counts indexed as gold-class × predicted-class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub support_as_support: usize,
    pub support_as_attack: usize,
    pub attack_as_attack: usize,
    pub attack_as_support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub support: ClassMetrics,
    pub attack: ClassMetrics,
    /// Unweighted mean of the two class F1 scores, percent.
    pub macro_f1: f64,
    pub confusion: ConfusionCounts,
}

fn percent(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        100.0 * numerator as f64 / denominator as f64
    }
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class precision/recall/F1 and macro F1 over a fully covered gold set.
///
/// Conventions: precision is 0 when the class is never predicted, recall is 0
/// when the class has no gold instances, F1 is 0 when precision + recall = 0.
pub fn compute_metrics(
    predictions: &[Prediction],
    gold: &BTreeMap<String, RelationLabel>,
) -> Result<MetricsReport, EvalError> {
    let mut seen: BTreeMap<&str, RelationLabel> = BTreeMap::new();
    for p in predictions {
        if !gold.contains_key(&p.rel_id) {
            return Err(EvalError::MissingPrediction(format!(
                "prediction for unknown relation {}",
                p.rel_id
            )));
        }
        if seen.insert(&p.rel_id, p.predicted).is_some() {
            return Err(EvalError::MissingPrediction(format!(
                "duplicate prediction for {}",
                p.rel_id
            )));
        }
    }
    if let Some(missing) = gold.keys().find(|id| !seen.contains_key(id.as_str())) {
        return Err(EvalError::MissingPrediction(format!(
            "no prediction for {missing}"
        )));
    }

    let mut confusion = ConfusionCounts {
        support_as_support: 0,
        support_as_attack: 0,
        attack_as_attack: 0,
        attack_as_support: 0,
    };
    for (id, gold_label) in gold {
        let predicted = seen[id.as_str()];
        match (gold_label, predicted) {
            (RelationLabel::Support, RelationLabel::Support) => confusion.support_as_support += 1,
            (RelationLabel::Support, RelationLabel::Attack) => confusion.support_as_attack += 1,
            (RelationLabel::Attack, RelationLabel::Attack) => confusion.attack_as_attack += 1,
            (RelationLabel::Attack, RelationLabel::Support) => confusion.attack_as_support += 1,
        }
    }

    let support_precision = percent(
        confusion.support_as_support,
        confusion.support_as_support + confusion.attack_as_support,
    );
    let support_recall = percent(
        confusion.support_as_support,
        confusion.support_as_support + confusion.support_as_attack,
    );
    let attack_precision = percent(
        confusion.attack_as_attack,
        confusion.attack_as_attack + confusion.support_as_attack,
    );
    let attack_recall = percent(
        confusion.attack_as_attack,
        confusion.attack_as_attack + confusion.attack_as_support,
    );
    let support = ClassMetrics {
        precision: support_precision,
        recall: support_recall,
        f1: f1_from(support_precision, support_recall),
    };
    let attack = ClassMetrics {
        precision: attack_precision,
        recall: attack_recall,
        f1: f1_from(attack_precision, attack_recall),
    };
    Ok(MetricsReport {
        macro_f1: (support.f1 + attack.f1) / 2.0,
        support,
        attack,
        confusion,
    })
}

/// The majority-class baseline: predict the more frequent gold class everywhere.
pub fn majority_baseline_predictions(gold: &BTreeMap<String, RelationLabel>) -> Vec<Prediction> {
    let support_count = gold
        .values()
        .filter(|l| **l == RelationLabel::Support)
        .count();
    let majority = if 2 * support_count >= gold.len() {
        RelationLabel::Support
    } else {
        RelationLabel::Attack
    };
    let (s, a) = match majority {
        RelationLabel::Support => (1.0, 0.0),
        RelationLabel::Attack => (0.0, 1.0),
    };
    gold.keys()
        .map(|id| Prediction {
            rel_id: id.clone(),
            predicted: majority,
            score_support: s,
            score_attack: a,
            connector_abbrev: "majority".to_string(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Aggregation across runs.
// ---------------------------------------------------------------------------

/// Mean and sample standard deviation (n−1 denominator; 0 for a single
/// value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "mean of an empty slice");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// The seven reported numbers of one evaluation, as a flat record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector {
    pub support_precision: f64,
    pub support_recall: f64,
    pub support_f1: f64,
    pub attack_precision: f64,
    pub attack_recall: f64,
    pub attack_f1: f64,
    pub macro_f1: f64,
}

impl From<&MetricsReport> for MetricsVector {
    fn from(r: &MetricsReport) -> Self {
        MetricsVector {
            support_precision: r.support.precision,
            support_recall: r.support.recall,
            support_f1: r.support.f1,
            attack_precision: r.attack.precision,
            attack_recall: r.attack.recall,
            attack_f1: r.attack.f1,
            macro_f1: r.macro_f1,
        }
    }
}

const METRIC_FIELDS: [(&str, fn(&MetricsVector) -> f64); 7] = [
    ("support_precision", |v| v.support_precision),
    ("support_recall", |v| v.support_recall),
    ("support_f1", |v| v.support_f1),
    ("attack_precision", |v| v.attack_precision),
    ("attack_recall", |v| v.attack_recall),
    ("attack_f1", |v| v.attack_f1),
    ("macro_f1", |v| v.macro_f1),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mean: MetricsVector,
    pub std: MetricsVector,
}

/// Per-metric mean ± sample standard deviation over runs.
pub fn aggregate_metrics(reports: &[MetricsReport]) -> MetricsSummary {
    assert!(!reports.is_empty(), "aggregate of zero runs");
    let vectors: Vec<MetricsVector> = reports.iter().map(MetricsVector::from).collect();
    let stat = |extract: fn(&MetricsVector) -> f64| -> (f64, f64) {
        let values: Vec<f64> = vectors.iter().map(extract).collect();
        mean_std(&values)
    };
    let mut mean = vectors[0];
    let mut std = vectors[0];
    let assign = |v: &mut MetricsVector, field: &str, value: f64| match field {
        "support_precision" => v.support_precision = value,
        "support_recall" => v.support_recall = value,
        "support_f1" => v.support_f1 = value,
        "attack_precision" => v.attack_precision = value,
        "attack_recall" => v.attack_recall = value,
        "attack_f1" => v.attack_f1 = value,
        "macro_f1" => v.macro_f1 = value,
        _ => unreachable!(),
    };
    for (field, extract) in METRIC_FIELDS {
        let (m, s) = stat(extract);
        assign(&mut mean, field, m);
        assign(&mut std, field, s);
    }
    MetricsSummary { mean, std }
}

/// "60.7±1.7"-style cell text, one decimal each.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1}±{std:.1}")
}

// ---------------------------------------------------------------------------
// Report tables.
// ---------------------------------------------------------------------------

/// One grid cell: macro F1 of each run for a (row, column) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub row: String,
    pub column: String,
    pub macro_f1_runs: Vec<f64>,
}

/// Assemble the ablation grid as CSV. Rows and columns appear in first-seen
/// order; a missing cell renders empty; an empty input renders empty.
pub fn ablation_grid(cells: &[AblationCell]) -> String {
    if cells.is_empty() {
        return String::new();
    }
    let mut rows: Vec<&str> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    for cell in cells {
        if !rows.contains(&cell.row.as_str()) {
            rows.push(&cell.row);
        }
        if !cols.contains(&cell.column.as_str()) {
            cols.push(&cell.column);
        }
    }
    let mut out = String::from("model");
    for c in &cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in &rows {
        out.push_str(r);
        for c in &cols {
            out.push(',');
            if let Some(cell) = cells
                .iter()
                .find(|x| x.row == *r && x.column == *c && !x.macro_f1_runs.is_empty())
            {
                let (mean, std) = mean_std(&cell.macro_f1_runs);
                out.push_str(&format_mean_std(mean, std));
            }
        }
        out.push('\n');
    }
    out
}

/// Full metrics table (one row per model) with mean±std cells.
pub fn metrics_table_csv(rows: &[(String, MetricsSummary)]) -> String {
    let mut out = String::from(
        "model,support_precision,support_recall,support_f1,attack_precision,attack_recall,attack_f1,macro_f1\n",
    );
    for (name, summary) in rows {
        out.push_str(name);
        for (_, extract) in METRIC_FIELDS {
            out.push(',');
            out.push_str(&format_mean_std(
                extract(&summary.mean),
                extract(&summary.std),
            ));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Coefficient exports.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExport {
    /// dimension,c_target,c_source,c_connector; one row per dimension.
    pub scatter_csv: String,
    /// vector,mean,std,min,q25,median,q75,max; one row per vector.
    pub summary_csv: String,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Dump the three learned coefficient vectors for scatter plots, plus
/// distribution summaries.
pub fn export_coefficients(params: &ModelParams) -> CoefficientExport {
    let d = params.c_target.len();
    let mut scatter = String::from("dimension,c_target,c_source,c_connector\n");
    for i in 0..d {
        scatter.push_str(&format!(
            "{},{},{},{}\n",
            i, params.c_target[i], params.c_source[i], params.c_connector[i]
        ));
    }
    let mut summary = String::from("vector,mean,std,min,q25,median,q75,max\n");
    for (name, vec) in [
        ("c_target", &params.c_target),
        ("c_source", &params.c_source),
        ("c_connector", &params.c_connector),
    ] {
        let values: Vec<f64> = vec.to_vec();
        let (mean, std) = mean_std(&values);
        let mut sorted = values;
        sorted.sort_by(f64::total_cmp);
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            name,
            mean,
            std,
            sorted[0],
            quantile(&sorted, 0.25),
            quantile(&sorted, 0.5),
            quantile(&sorted, 0.75),
            sorted[sorted.len() - 1],
        ));
    }
    CoefficientExport {
        scatter_csv: scatter,
        summary_csv: summary,
    }
}

/// Minimal standalone scatter plot: one circle per dimension, both axes
/// auto-scaled with a small pad, crosshair at (1, 1) where every coefficient
/// starts.
pub fn coefficient_scatter_svg(
    x: &Array1<f64>,
    y: &Array1<f64>,
    x_label: &str,
    y_label: &str,
) -> String {
    assert_eq!(x.len(), y.len(), "axes must pair up");
    let (width, height, margin) = (420.0, 420.0, 40.0);
    let bounds = |v: &Array1<f64>| -> (f64, f64) {
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1.0);
        let pad = (max - min).max(1e-9) * 0.08;
        (min - pad, max + pad)
    };
    let (x0, x1) = bounds(x);
    let (y0, y1) = bounds(y);
    let sx = |v: f64| margin + (v - x0) / (x1 - x0) * (width - 2.0 * margin);
    let sy = |v: f64| height - margin - (v - y0) / (y1 - y0) * (height - 2.0 * margin);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // Crosshair through the initialization point.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n",
        sx(1.0),
        margin,
        sx(1.0),
        height - margin
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n",
        margin,
        sy(1.0),
        width - margin,
        sy(1.0)
    ));
    for (xv, yv) in x.iter().zip(y.iter()) {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n",
            sx(*xv),
            sy(*yv)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        width / 2.0,
        height - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {})\">{y_label}</text>\n",
        height / 2.0,
        height / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// Prediction persistence.
// ---------------------------------------------------------------------------

pub fn predictions_to_jsonl(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<Prediction>, EvalError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| EvalError::Parse(e.to_string())))
        .collect()
}
