//! Onset-error statistics and tolerance-window alignment accuracy.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::{NoteId, NoteSequence};

/// Tolerance windows reported by default, in seconds.
pub const TOLERANCES: [f64; 4] = [0.010, 0.025, 0.050, 0.100];

/// Window of the pitch + nearest-onset fallback matcher.
pub const FALLBACK_MATCH_WINDOW: f64 = 0.050;

/// Absolute onset errors are kept at nanosecond resolution, which removes
/// representation noise from differences of tick-aligned times.
fn quantize_error(e: f64) -> f64 {
    (e * 1e9).round() / 1e9
}

/// `|onset_est - onset_ref|` for every reference note, matched by id.
/// Reference notes missing from `est` get an infinite error.
pub fn onset_errors(est: &NoteSequence, reference: &NoteSequence) -> Result<Vec<(NoteId, f64)>> {
    let est_onsets: HashMap<NoteId, f64> = est.notes().iter().map(|n| (n.id, n.onset)).collect();
    let mut shared = 0;
    let errors = reference
        .notes()
        .iter()
        .map(|n| match est_onsets.get(&n.id) {
            Some(&onset) => {
                shared += 1;
                (n.id, quantize_error((onset - n.onset).abs()))
            }
            None => (n.id, f64::INFINITY),
        })
        .collect();
    if shared == 0 {
        return Err(Error::Evaluation(
            "estimated and reference sequences share no note ids".into(),
        ));
    }
    Ok(errors)
}

/// Greedy pitch-and-nearest-onset correspondence for sequences without
/// shared ids: candidate pairs of equal pitch within `window` seconds are
/// taken in order of increasing onset distance. Returns, per reference note,
/// the matched estimated note.
pub fn match_by_pitch_onset(
    est: &NoteSequence,
    reference: &NoteSequence,
    window: f64,
) -> Vec<(NoteId, Option<NoteId>)> {
    let mut candidates = Vec::new();
    for (ri, r) in reference.notes().iter().enumerate() {
        for (ei, e) in est.notes().iter().enumerate() {
            let d = (e.onset - r.onset).abs();
            if e.pitch == r.pitch && d <= window {
                candidates.push((d, ri, ei));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ref_match = vec![None; reference.len()];
    let mut est_used = vec![false; est.len()];
    for (_, ri, ei) in candidates {
        if ref_match[ri].is_none() && !est_used[ei] {
            ref_match[ri] = Some(est.notes()[ei].id);
            est_used[ei] = true;
        }
    }
    reference
        .notes()
        .iter()
        .zip(ref_match)
        .map(|(r, m)| (r.id, m))
        .collect()
}

/// Onset errors under [`match_by_pitch_onset`].
pub fn onset_errors_by_pitch(
    est: &NoteSequence,
    reference: &NoteSequence,
    window: f64,
) -> Result<Vec<(NoteId, f64)>> {
    let matches = match_by_pitch_onset(est, reference, window);
    if reference.is_empty() {
        return Err(Error::Evaluation("reference sequence is empty".into()));
    }
    Ok(matches
        .into_iter()
        .map(|(rid, eid)| {
            let r = reference.get(rid).expect("reference id");
            let e = eid
                .and_then(|id| est.get(id))
                .map_or(f64::INFINITY, |e| quantize_error((e.onset - r.onset).abs()));
            (rid, e)
        })
        .collect())
}

mod non_finite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteError {
    pub id: NoteId,
    /// Seconds; `null` in JSON when the note was not found.
    #[serde(with = "non_finite_as_null")]
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAccuracy {
    pub tolerance: f64,
    /// Percent of notes with error at most `tolerance`.
    pub accuracy: f64,
}

/// Per-note errors plus aggregate statistics. Statistics are computed over
/// finite errors only (NaN when there are none); accuracies count every
/// note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub per_note_errors: Vec<NoteError>,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub median: f64,
    #[serde(with = "nan_as_null")]
    pub std: f64,
    pub accuracy: Vec<WindowAccuracy>,
}

impl AlignmentReport {
    pub fn accuracy_at(&self, tolerance: f64) -> Option<f64> {
        self.accuracy
            .iter()
            .find(|w| (w.tolerance - tolerance).abs() < 1e-12)
            .map(|w| w.accuracy)
    }

    pub fn n_notes(&self) -> usize {
        self.per_note_errors.len()
    }
}

pub fn accuracy_report(errors: &[(NoteId, f64)]) -> Result<AlignmentReport> {
    accuracy_report_with(errors, &TOLERANCES)
}

pub fn accuracy_report_with(
    errors: &[(NoteId, f64)],
    tolerances: &[f64],
) -> Result<AlignmentReport> {
    if errors.is_empty() {
        return Err(Error::Evaluation("no onset errors to summarize".into()));
    }
    let mut finite: Vec<f64> = errors
        .iter()
        .map(|e| e.1)
        .filter(|e| e.is_finite())
        .collect();
    finite.sort_by(f64::total_cmp);
    let (mean, median, std) = if finite.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        let var = finite.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let mid = finite.len() / 2;
        let median = if finite.len().is_multiple_of(2) {
            0.5 * (finite[mid - 1] + finite[mid])
        } else {
            finite[mid]
        };
        (mean, median, var.sqrt())
    };
    let mut tolerances = tolerances.to_vec();
    tolerances.sort_by(f64::total_cmp);
    let accuracy = tolerances
        .into_iter()
        .map(|tolerance| {
            // position in the sorted finite errors of the first e > tolerance
            let within = finite.partition_point(|&e| e <= tolerance);
            WindowAccuracy {
                tolerance,
                accuracy: 100.0 * within as f64 / errors.len() as f64,
            }
        })
        .collect();
    Ok(AlignmentReport {
        per_note_errors: errors
            .iter()
            .map(|&(id, error)| NoteError { id, error })
            .collect(),
        mean,
        median,
        std,
        accuracy,
    })
}

/// Notes of several pieces pooled into one report, with per-piece reports
/// kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub pooled: AlignmentReport,
    pub per_piece: Vec<(String, AlignmentReport)>,
}

pub fn pooled_report(pieces: &[(String, Vec<(NoteId, f64)>)]) -> Result<PooledReport> {
    let all: Vec<(NoteId, f64)> = pieces.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    Ok(PooledReport {
        pooled: accuracy_report(&all)?,
        per_piece: pieces
            .iter()
            .filter(|(_, e)| !e.is_empty())
            .map(|(name, e)| Ok((name.clone(), accuracy_report(e)?)))
            .collect::<Result<_>>()?,
    })
}

/// One method's row, with errors in milliseconds and accuracies in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub std_ms: f64,
    pub acc_100ms: f64,
    pub acc_50ms: f64,
    pub acc_25ms: f64,
    pub acc_10ms: f64,
}

impl ComparisonRow {
    pub fn from_report(method: &str, report: &AlignmentReport) -> Self {
        let acc = |t| report.accuracy_at(t).unwrap_or(f64::NAN);
        ComparisonRow {
            method: method.to_string(),
            mean_ms: report.mean * 1e3,
            median_ms: report.median * 1e3,
            std_ms: report.std * 1e3,
            acc_100ms: acc(0.100),
            acc_50ms: acc(0.050),
            acc_25ms: acc(0.025),
            acc_10ms: acc(0.010),
        }
    }

    fn values(&self) -> [f64; 7] {
        [
            self.mean_ms,
            self.median_ms,
            self.std_ms,
            self.acc_100ms,
            self.acc_50ms,
            self.acc_25ms,
            self.acc_10ms,
        ]
    }
}

pub const COMPARISON_HEADER: [&str; 8] = [
    "method",
    "mean_ms",
    "median_ms",
    "std_ms",
    "acc_100ms",
    "acc_50ms",
    "acc_25ms",
    "acc_10ms",
];

/// Methods as rows, laid out like a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_methods(reports: &[(String, AlignmentReport)]) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(Error::Evaluation("nothing to compare".into()));
    }
    Ok(ComparisonTable {
        rows: reports
            .iter()
            .map(|(name, r)| ComparisonRow::from_report(name, r))
            .collect(),
    })
}

impl ComparisonTable {
    /// CSV with two decimals per value.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COMPARISON_HEADER)?;
        for row in &self.rows {
            let mut record = vec![row.method.clone()];
            record.extend(row.values().iter().map(|v| format!("{v:.2}")));
            w.write_record(&record)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Evaluation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let num = |i: usize| -> Result<f64> {
                let field = record.get(i).unwrap_or("");
                field
                    .parse()
                    .map_err(|_| Error::Evaluation(format!("bad number '{field}' in column {i}")))
            };
            rows.push(ComparisonRow {
                method: record.get(0).unwrap_or("").to_string(),
                mean_ms: num(1)?,
                median_ms: num(2)?,
                std_ms: num(3)?,
                acc_100ms: num(4)?,
                acc_50ms: num(5)?,
                acc_25ms: num(6)?,
                acc_10ms: num(7)?,
            });
        }
        Ok(ComparisonTable { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, csv_path: Option<&Path>, json_path: Option<&Path>) -> Result<()> {
        if let Some(p) = csv_path {
            std::fs::write(p, self.to_csv()?).map_err(|e| Error::io(p, e))?;
        }
        if let Some(p) = json_path {
            std::fs::write(p, self.to_json()?).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}
