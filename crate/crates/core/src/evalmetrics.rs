//! Objective metrics for generated pieces: instrument F1, note-density
//! accuracy, groove similarity and tension correlation, plus batch
//! aggregation and the evaluation targets file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{Key, Piece};
use crate::tension::{curve_similarity, variance, Similarity, SimilarityBranch, SimilarityConfig, TensionConfig, TensionError, TensionModel};
use crate::tokens::{density_bucket, BucketEdges};

pub const TARGETS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: generated piece has {generated} bars, target has {target}")]
    BarCount { what: &'static str, generated: usize, target: usize },
    #[error("piece has no bars")]
    EmptyPiece,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("targets file: {0}")]
    Targets(String),
    #[error(transparent)]
    Tension(#[from] TensionError),
}

fn check_bars(what: &'static str, generated: usize, target: usize) -> Result<(), EvalError> {
    if generated != target {
        return Err(EvalError::BarCount { what, generated, target });
    }
    Ok(())
}

/// F1 of two instrument sets; two empty sets agree perfectly.
pub fn set_f1(generated: &[u8], target: &[u8]) -> f64 {
    if generated.is_empty() && target.is_empty() {
        return 1.0;
    }
    let hits = generated.iter().filter(|i| target.contains(i)).count() as f64;
    2.0 * hits / (generated.len() + target.len()) as f64
}

fn per_bar_f1(generated: &Piece, target: &[Vec<u8>]) -> Result<Vec<f64>, EvalError> {
    check_bars("instrument targets", generated.bars.len(), target.len())?;
    Ok(generated.bars.iter().zip(target).map(|(b, t)| set_f1(&b.instruments(), t)).collect())
}

/// Mean per-bar F1 between the instruments a bar uses and its target set.
pub fn instrument_f1(generated: &Piece, target: &[Vec<u8>]) -> Result<f64, EvalError> {
    Ok(mean(&per_bar_f1(generated, target)?))
}

fn per_bar_density(generated: &Piece, target: &[u8], edges: &BucketEdges, bins: u8) -> Result<Vec<bool>, EvalError> {
    check_bars("density targets", generated.bars.len(), target.len())?;
    Ok(generated.bars.iter().zip(target).map(|(b, &t)| density_bucket(b.notes.len(), edges, bins) == t).collect())
}

/// Fraction of bars whose note-count bin equals the target bin.
pub fn note_density_accuracy(generated: &Piece, target: &[u8], edges: &BucketEdges, bins: u8) -> Result<f64, EvalError> {
    let hits = per_bar_density(generated, target, edges, bins)?;
    if hits.is_empty() {
        return Ok(1.0);
    }
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Onset pattern of one bar on the position grid, drums excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetGrid {
    pub positions: u32,
    /// Sorted distinct onset positions.
    pub onsets: Vec<u32>,
}

pub fn onset_grids(piece: &Piece, positions_per_quarter: u32) -> Vec<OnsetGrid> {
    let unit = (piece.ticks_per_quarter / positions_per_quarter.max(1)).max(1) as u64;
    piece
        .bars
        .iter()
        .map(|bar| {
            let positions = bar.len().div_ceil(unit) as u32;
            let mut onsets: Vec<u32> =
                bar.notes.iter().filter(|n| !n.drum).map(|n| ((n.onset - bar.start) / unit) as u32).collect();
            onsets.sort_unstable();
            onsets.dedup();
            OnsetGrid { positions, onsets }
        })
        .collect()
}

/// `1 - hamming / grid size` of two onset patterns; the larger grid counts.
pub fn grid_similarity(a: &OnsetGrid, b: &OnsetGrid) -> f64 {
    let size = a.positions.max(b.positions).max(1);
    let differ = a.onsets.iter().filter(|p| !b.onsets.contains(p)).count() + b.onsets.iter().filter(|p| !a.onsets.contains(p)).count();
    1.0 - differ as f64 / size as f64
}

fn per_bar_groove(generated: &[OnsetGrid], reference: &[OnsetGrid]) -> Result<Vec<f64>, EvalError> {
    if generated.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyPiece);
    }
    Ok(generated.iter().zip(reference).map(|(g, r)| grid_similarity(g, r)).collect())
}

/// Mean onset-grid similarity over the bars both pieces share.
pub fn groove_similarity(generated: &Piece, reference: &Piece, positions_per_quarter: u32) -> Result<f64, EvalError> {
    let g = onset_grids(generated, positions_per_quarter);
    let r = onset_grids(reference, positions_per_quarter);
    Ok(mean(&per_bar_groove(&g, &r)?))
}

/// Similarity of the generated piece's tension curve to the target. When
/// `key` is given it overrides key estimation.
pub fn tension_correlation(
    generated: &Piece,
    target: &[f64],
    model: &TensionModel<f64>,
    key: Option<Key>,
    config: &SimilarityConfig,
) -> Result<(Similarity, Vec<f64>), EvalError> {
    check_bars("tension target", generated.bars.len(), target.len())?;
    if generated.bars.is_empty() {
        return Err(EvalError::EmptyPiece);
    }
    let mut piece = generated.clone();
    if key.is_some() {
        piece.key_estimate = key;
    }
    let curve = model.piece_curve(&piece)?.values;
    Ok((curve_similarity(&curve, target, config)?, curve))
}

/// Everything one generated sample is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTargets {
    pub name: String,
    pub key: Option<Key>,
    pub instruments: Vec<Vec<u8>>,
    pub density: Vec<u8>,
    pub grooves: Vec<OnsetGrid>,
    pub tension: Vec<f64>,
}

/// Targets of a batch plus the settings needed to measure against them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    pub version: u32,
    pub positions_per_quarter: u32,
    pub density_edges: BucketEdges,
    pub density_bins: u8,
    pub tension: TensionConfig<f64>,
    pub similarity: SimilarityConfig,
    pub samples: Vec<SampleTargets>,
}

impl TargetsFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("targets serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let t: Self = serde_json::from_str(text).map_err(|e| EvalError::Targets(e.to_string()))?;
        if t.version != TARGETS_VERSION {
            return Err(EvalError::Targets(format!("unsupported version {}", t.version)));
        }
        Ok(t)
    }
}

/// Targets that a reference piece satisfies exactly, using `target` as the
/// tension curve (or the piece's own curve when `None`).
pub fn targets_from_reference(
    name: &str,
    reference: &Piece,
    target: Option<&[f64]>,
    model: &TensionModel<f64>,
    edges: &BucketEdges,
    bins: u8,
    positions_per_quarter: u32,
) -> Result<SampleTargets, EvalError> {
    if reference.bars.is_empty() {
        return Err(EvalError::EmptyPiece);
    }
    let analysis = model.analyze(reference)?;
    let tension = match target {
        Some(t) => t.to_vec(),
        None => analysis.curve.values,
    };
    Ok(SampleTargets {
        name: name.to_string(),
        key: Some(analysis.key),
        instruments: reference.bars.iter().map(|b| b.instruments()).collect(),
        density: reference.bars.iter().map(|b| density_bucket(b.notes.len(), edges, bins)).collect(),
        grooves: onset_grids(reference, positions_per_quarter),
        tension,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarDetail {
    pub bar: usize,
    pub instrument_f1: f64,
    pub density_match: bool,
    pub groove: Option<f64>,
    pub tension: f64,
    pub target_tension: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub instrument_f1: f64,
    pub note_density_accuracy: f64,
    pub groove_similarity: f64,
    pub tension_correlation: f64,
    pub tension_branch: SimilarityBranch,
    pub target_variance: f64,
    pub per_bar: Vec<BarDetail>,
}

/// Measures one generated piece against its targets.
pub fn evaluate_sample(generated: &Piece, targets: &SampleTargets, file: &TargetsFile) -> Result<EvalReport, EvalError> {
    let model = TensionModel::new(file.tension.clone())?;
    let f1 = per_bar_f1(generated, &targets.instruments)?;
    let density = per_bar_density(generated, &targets.density, &file.density_edges, file.density_bins)?;
    let grooves = per_bar_groove(&onset_grids(generated, file.positions_per_quarter), &targets.grooves)?;
    let (sim, curve) = tension_correlation(generated, &targets.tension, &model, targets.key, &file.similarity)?;
    let per_bar = (0..generated.bars.len())
        .map(|i| BarDetail {
            bar: i,
            instrument_f1: f1[i],
            density_match: density[i],
            groove: grooves.get(i).copied(),
            tension: curve[i],
            target_tension: targets.tension[i],
        })
        .collect();
    Ok(EvalReport {
        name: targets.name.clone(),
        instrument_f1: mean(&f1),
        note_density_accuracy: density.iter().filter(|&&d| d).count() as f64 / density.len() as f64,
        groove_similarity: mean(&grooves),
        tension_correlation: sim.value,
        tension_branch: sim.branch,
        target_variance: variance(&targets.tension),
        per_bar,
    })
}

/// Order-independent mean: values are summed in sorted order.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Batch means plus the tension aggregate over samples whose target varies
/// and whose correlation is non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub samples: usize,
    pub instrument_f1: f64,
    pub note_density_accuracy: f64,
    pub groove_similarity: f64,
    pub tension_correlation: f64,
    pub excluded_low_variance: usize,
    pub excluded_negative: usize,
    pub filtered_samples: usize,
    pub filtered_mean_correlation: f64,
    pub filtered_median_correlation: f64,
}

pub fn summarize(reports: &[EvalReport], variance_threshold: f64) -> Result<BatchSummary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let col = |f: fn(&EvalReport) -> f64| mean(&reports.iter().map(f).collect::<Vec<_>>());
    let mut low = 0;
    let mut negative = 0;
    let mut kept = Vec::new();
    for r in reports {
        if r.target_variance <= variance_threshold {
            low += 1;
        } else if r.tension_correlation < 0.0 {
            negative += 1;
        } else {
            kept.push(r.tension_correlation);
        }
    }
    Ok(BatchSummary {
        samples: reports.len(),
        instrument_f1: col(|r| r.instrument_f1),
        note_density_accuracy: col(|r| r.note_density_accuracy),
        groove_similarity: col(|r| r.groove_similarity),
        tension_correlation: col(|r| r.tension_correlation),
        excluded_low_variance: low,
        excluded_negative: negative,
        filtered_samples: kept.len(),
        filtered_mean_correlation: mean(&kept),
        filtered_median_correlation: median(&kept),
    })
}

pub const TABLE_HEADER: &str = "model,inference,bars,instrument_f1,note_density,groove_similarity,tension_correlation";

/// One row of the metrics table.
pub fn table_row(model: &str, inference: &str, bars: usize, s: &BatchSummary) -> String {
    format!(
        "{model},{inference},{bars},{:.6},{:.6},{:.6},{:.6}",
        s.instrument_f1, s.note_density_accuracy, s.groove_similarity, s.tension_correlation
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::music::{Note, TimeSignature};

    fn piece(notes: &[(u64, u8, u8)]) -> Piece {
        let notes = notes.iter().map(|&(on, p, inst)| Note::new(on, 240, p, 90, inst).unwrap()).collect();
        Piece::from_notes(notes, &[(0, TimeSignature::COMMON)], 480).unwrap()
    }

    #[test]
    fn f1_arithmetic() {
        assert_eq!(set_f1(&[0], &[0, 33]), 2.0 / 3.0);
        assert_eq!(set_f1(&[], &[]), 1.0);
        assert_eq!(set_f1(&[1], &[2]), 0.0);
        assert_eq!(set_f1(&[1, 2], &[2, 1]), 1.0);
    }

    #[test]
    fn instrument_f1_checks_bar_count() {
        let p = piece(&[(0, 60, 0)]);
        assert_eq!(instrument_f1(&p, &[vec![0]]).unwrap(), 1.0);
        assert!(matches!(instrument_f1(&p, &[]), Err(EvalError::BarCount { .. })));
    }

    #[test]
    fn groove_hamming() {
        let a = OnsetGrid { positions: 16, onsets: vec![0, 4, 8, 12] };
        let b = OnsetGrid { positions: 16, onsets: vec![0, 4, 8] };
        assert_eq!(grid_similarity(&a, &b), 15.0 / 16.0);
        let all: Vec<u32> = (0..16).collect();
        let c = OnsetGrid { positions: 16, onsets: all.iter().copied().filter(|p| !a.onsets.contains(p)).collect() };
        assert_eq!(grid_similarity(&a, &c), 0.0);
    }

    #[test]
    fn onset_grid_excludes_drums() {
        let mut p = piece(&[(0, 60, 0), (480, 62, 0)]);
        let mut d = Note::new(240, 120, 36, 100, 0).unwrap();
        d.drum = true;
        p.bars[0].notes.push(d);
        let g = onset_grids(&p, 4);
        assert_eq!(g[0], OnsetGrid { positions: 16, onsets: vec![0, 4] });
    }

    #[test]
    fn density_half_matching() {
        let p = Piece::from_notes(
            vec![Note::new(0, 240, 60, 90, 0).unwrap(), Note::new(1920, 240, 60, 90, 0).unwrap(), Note::new(2400, 240, 62, 90, 0).unwrap()],
            &[(0, TimeSignature::COMMON)],
            480,
        )
        .unwrap();
        let edges = BucketEdges { edges: vec![1.0, 2.0] };
        assert_eq!(note_density_accuracy(&p, &[0, 1], &edges, 3).unwrap(), 1.0);
        assert_eq!(note_density_accuracy(&p, &[0, 2], &edges, 3).unwrap(), 0.5);
        assert_eq!(note_density_accuracy(&p, &[2, 2], &edges, 3).unwrap(), 0.0);
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[0.1, 0.2, 0.3]), mean(&[0.3, 0.1, 0.2]));
    }
}
