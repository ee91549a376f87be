//! Dual-level beam search: nucleus-sampled token expansion ranked by
//! length-normalized log-probability plus a diversity term, and bar-level
//! re-ranking by similarity of the completed bars' tension to a target curve.
//!
//! Every `(step, beam)` pair draws from its own ChaCha8 stream
//! (`seed`, stream = `step << 32 | beam`), so results do not depend on the
//! order in which beams are expanded.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{Key, Piece};
use crate::seqmodel::{logsumexp, ModelError, SequenceModel};
use crate::tension::{curve_similarity, estimate_key, Similarity, SimilarityBranch, SimilarityConfig, TensionError, TensionModel};
use crate::tokens::{
    bar_boundaries, control_tokens_for_bar, decode, encode, BucketEdges, DecodeMode, Token, TokenError, TokenizerConfig,
    Vocabulary,
};

/// Tokens allowed per requested bar before generation is cut off.
pub const TOKENS_PER_BAR_BUDGET: usize = 512;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search parameter: {0}")]
    InvalidParams(String),
    #[error("target curve has {available} bars, {needed} needed")]
    TargetTooShort { needed: usize, available: usize },
    #[error("reference piece has no bars")]
    EmptyReference,
    #[error("model returned {found} log-probabilities for a vocabulary of {expected}")]
    Distribution { found: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tension(#[from] TensionError),
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// How the diversity of a bar segment is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiversityMode {
    /// Closeness to the reference bar's metrics, in [0, 3].
    #[default]
    Reference,
    /// Sum of the candidate's own metrics.
    Raw,
}

impl FromStr for DiversityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Self::Reference),
            "raw" => Ok(Self::Raw),
            _ => Err(format!("unknown diversity mode '{s}' (expected reference or raw)")),
        }
    }
}

impl fmt::Display for DiversityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reference => "reference",
            Self::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub beam_width: usize,
    pub nucleus_p: f64,
    pub temperature: f64,
    pub diversity_weight: f64,
    pub tension_weight: f64,
    pub variance_threshold: f64,
    pub max_bars: usize,
    pub final_candidates: usize,
    pub seed: u64,
    pub diversity_mode: DiversityMode,
    /// Scale of the absolute-difference similarity used for flat targets.
    pub scale_ref: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            beam_width: 8,
            nucleus_p: 0.9,
            temperature: 0.9,
            diversity_weight: 0.7,
            tension_weight: 4.0,
            variance_threshold: 0.001,
            max_bars: 8,
            final_candidates: 3,
            seed: 0,
            diversity_mode: DiversityMode::Reference,
            scale_ref: 1.0,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidParams(m.into()));
        if self.beam_width == 0 {
            return bad("beam width must be at least 1");
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return bad("nucleus p must lie in (0, 1]");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad("temperature must be positive");
        }
        if !self.diversity_weight.is_finite() || !self.tension_weight.is_finite() {
            return bad("weights must be finite");
        }
        if !(self.variance_threshold >= 0.0) || !self.variance_threshold.is_finite() {
            return bad("variance threshold must be non-negative");
        }
        if self.final_candidates == 0 || self.final_candidates > self.beam_width {
            return bad("final candidates must lie in 1..=beam width");
        }
        if !(self.scale_ref > 0.0) || !self.scale_ref.is_finite() {
            return bad("scale_ref must be positive");
        }
        Ok(())
    }

    pub fn similarity_config(&self) -> SimilarityConfig {
        SimilarityConfig { variance_threshold: self.variance_threshold, scale_ref: self.scale_ref }
    }
}

/// Random stream for one expansion.
pub fn expansion_rng(seed: u64, step: usize, beam: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 32) | beam as u64);
    rng
}

/// Draws up to `k` distinct tokens from the top-p nucleus of the
/// temperature-scaled distribution, in draw order.
pub fn nucleus_sample_k<R: Rng + ?Sized>(logprobs: &[f64], p: f64, temperature: f64, k: usize, rng: &mut R) -> Vec<u32> {
    let scaled: Vec<f64> = logprobs.iter().map(|&l| l / temperature).collect();
    let norm = logsumexp(&scaled);
    if !norm.is_finite() {
        return Vec::new();
    }
    let mut ranked: Vec<(u32, f64)> = scaled
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as u32, (l - norm).exp()))
        .filter(|&(_, q)| q > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mass = 0.0;
    let mut cut = ranked.len();
    for (i, &(_, q)) in ranked.iter().enumerate() {
        mass += q;
        if mass + 1e-12 >= p {
            cut = i + 1;
            break;
        }
    }
    ranked.truncate(cut);
    let mut out = Vec::with_capacity(k.min(ranked.len()));
    let mut remaining: f64 = ranked.iter().map(|r| r.1).sum();
    while out.len() < k && !ranked.is_empty() {
        let mut u = rng.gen::<f64>() * remaining;
        let mut pick = ranked.len() - 1;
        for (i, &(_, q)) in ranked.iter().enumerate() {
            if u < q {
                pick = i;
                break;
            }
            u -= q;
        }
        let (id, q) = ranked.remove(pick);
        remaining -= q;
        out.push(id);
    }
    out
}

/// Pitch variety, duration variety and normalized pitch-trigram entropy of
/// a bar segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiversityMetrics {
    pub pv: f64,
    pub dv: f64,
    pub pe: f64,
}

impl DiversityMetrics {
    /// Metrics of a note list given as (pitch, duration) pairs in order.
    pub fn from_notes(notes: &[(u8, u16)]) -> Self {
        let n = notes.len();
        if n == 0 {
            return Self::default();
        }
        let distinct = |f: &dyn Fn(&(u8, u16)) -> u16| {
            let mut v: Vec<u16> = notes.iter().map(f).collect();
            v.sort_unstable();
            v.dedup();
            v.len() as f64
        };
        let pv = distinct(&|x| x.0 as u16) / n as f64;
        let dv = distinct(&|x| x.1) / n as f64;
        let pe = if n < 3 {
            0.0
        } else {
            let total = n - 2;
            let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
            for w in notes.windows(3) {
                *counts.entry([w[0].0, w[1].0, w[2].0]).or_default() += 1;
            }
            let mut freq: Vec<usize> = counts.into_values().collect();
            freq.sort_unstable();
            let h: f64 = freq
                .iter()
                .map(|&c| {
                    let q = c as f64 / total as f64;
                    -q * q.ln()
                })
                .sum();
            if total > 1 {
                h / (total as f64).ln()
            } else {
                0.0
            }
        };
        Self { pv: pv.clamp(0.0, 1.0), dv: dv.clamp(0.0, 1.0), pe: pe.clamp(0.0, 1.0) }
    }
}

/// Diversity of a token segment: every Pitch token followed by a Duration
/// token before the next Pitch counts as a note.
pub fn diversity_metrics(segment: &[Token]) -> DiversityMetrics {
    let mut notes = Vec::new();
    let mut pitch = None;
    for tok in segment {
        match *tok {
            Token::Pitch(p) => pitch = Some(p),
            Token::Duration(d) => {
                if let Some(p) = pitch.take() {
                    notes.push((p, d));
                }
            }
            _ => {}
        }
    }
    DiversityMetrics::from_notes(&notes)
}

pub fn diversity_score(cand: &DiversityMetrics, reference: &DiversityMetrics, mode: DiversityMode) -> f64 {
    match mode {
        DiversityMode::Reference => {
            (1.0 - (cand.pv - reference.pv).abs()) + (1.0 - (cand.dv - reference.dv).abs()) + (1.0 - (cand.pe - reference.pe).abs())
        }
        DiversityMode::Raw => cand.pv + cand.dv + cand.pe,
    }
}

/// What the search needs to know about the token language.
pub trait SearchDomain {
    fn bos(&self) -> u32;
    fn is_bar(&self, id: u32) -> bool;
    fn is_eos(&self, id: u32) -> bool;
    /// Control ids passed to the model while writing the given bar.
    fn controls(&self, bar: usize) -> &[u32];
    fn segment_diversity(&self, segment: &[u32]) -> DiversityMetrics;
    fn reference_diversity(&self, bar: usize) -> DiversityMetrics;
    /// Tension of completed bar `bar` of a sequence that ends with the token
    /// completing it.
    fn bar_tension(&self, tokens: &[u32], bar: usize) -> Result<f64, SearchError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCandidate {
    pub tokens: Vec<u32>,
    pub cum_log_prob: f64,
    /// Number of scored (generated) tokens.
    pub length: usize,
    pub completed_bar_tensions: Vec<f64>,
    /// Index of the latest Bar token.
    pub current_bar_start: usize,
    pub bars_started: usize,
    pub finished: bool,
    /// Similarity of the completed bars to the target as of the latest bar
    /// re-rank; zero before the first completed bar.
    #[serde(default)]
    pub tension_similarity: f64,
    /// Score the beam was last ranked by.
    pub score: f64,
    #[serde(skip)]
    pending_bar: Option<usize>,
}

impl BeamCandidate {
    pub fn start(bos: u32) -> Self {
        Self {
            tokens: vec![bos],
            cum_log_prob: 0.0,
            length: 0,
            completed_bar_tensions: Vec::new(),
            current_bar_start: 0,
            bars_started: 0,
            finished: false,
            tension_similarity: 0.0,
            score: 0.0,
            pending_bar: None,
        }
    }

    pub fn lm_norm(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            self.cum_log_prob / self.length as f64
        }
    }

    /// Appends a token; returns the candidate and the bar whose segment it
    /// belongs to, with that segment's range.
    fn extend<D: SearchDomain + ?Sized>(&self, id: u32, logprob: f64, domain: &D, max_bars: usize) -> (Self, usize, std::ops::Range<usize>) {
        let mut next = self.clone();
        next.tokens.push(id);
        next.cum_log_prob += logprob;
        next.length += 1;
        let bar = self.bars_started.saturating_sub(1);
        let seg_start = if self.bars_started == 0 { 1 } else { self.current_bar_start + 1 };
        let len = next.tokens.len();
        if domain.is_bar(id) || domain.is_eos(id) {
            let segment = seg_start.min(len - 1)..len - 1;
            if self.bars_started >= 1 {
                next.pending_bar = Some(bar);
            }
            if domain.is_eos(id) || self.bars_started >= max_bars {
                next.finished = true;
            } else {
                next.bars_started += 1;
                next.current_bar_start = len - 1;
            }
            (next, bar, segment)
        } else {
            (next, bar, seg_start.min(len)..len)
        }
    }
}

/// Counters describing one search.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub steps: usize,
    pub model_calls: usize,
    pub bar_reranks: usize,
    pub pearson: usize,
    pub fallback: usize,
    pub truncated: bool,
}

impl SearchStats {
    fn record(&mut self, s: &Similarity) {
        match s.branch {
            SimilarityBranch::Pearson => self.pearson += 1,
            SimilarityBranch::Fallback => self.fallback += 1,
        }
    }
}

fn rank(beams: &mut Vec<BeamCandidate>, keep: usize) {
    beams.sort_by(|a, b| b.score.total_cmp(&a.score));
    beams.truncate(keep);
}

/// Similarity of a beam's completed bars to the matching target prefix.
pub fn tension_score(beam: &BeamCandidate, target: &[f64], params: &SearchParams) -> Result<Option<Similarity>, SearchError> {
    let n = beam.completed_bar_tensions.len();
    if n == 0 {
        return Ok(None);
    }
    if n > target.len() {
        return Err(SearchError::TargetTooShort { needed: n, available: target.len() });
    }
    Ok(Some(curve_similarity(&beam.completed_bar_tensions, &target[..n], &params.similarity_config())?))
}

fn final_score(beam: &mut BeamCandidate, target: &[f64], params: &SearchParams, stats: &mut SearchStats) -> Result<f64, SearchError> {
    let sim = tension_score(beam, target, params)?;
    if let Some(s) = &sim {
        stats.record(s);
    }
    beam.tension_similarity = sim.map_or(0.0, |s| s.value);
    Ok(beam.lm_norm() + params.tension_weight * beam.tension_similarity)
}

/// One token of expansion for every unfinished beam, scored by
/// `lm_norm + diversity_weight * diversity + tension_weight * similarity`
/// where the similarity is the one inherited from the latest bar re-rank.
/// Finished beams compete with their last score.
pub fn token_step<M: SequenceModel + ?Sized, D: SearchDomain + ?Sized>(
    beams: &[BeamCandidate],
    model: &M,
    domain: &D,
    params: &SearchParams,
    step: usize,
    stats: &mut SearchStats,
) -> Result<Vec<BeamCandidate>, SearchError> {
    let mut pool = Vec::with_capacity(beams.len() * params.beam_width);
    for (i, beam) in beams.iter().enumerate() {
        if beam.finished {
            pool.push(beam.clone());
            continue;
        }
        let bar = beam.bars_started.saturating_sub(1);
        let lp = model.next_token_logprobs(&beam.tokens, domain.controls(bar))?;
        stats.model_calls += 1;
        if lp.len() != model.vocab_size() {
            return Err(SearchError::Distribution { found: lp.len(), expected: model.vocab_size() });
        }
        let mut rng = expansion_rng(params.seed, step, i);
        for id in nucleus_sample_k(&lp, params.nucleus_p, params.temperature, params.beam_width, &mut rng) {
            let (mut cand, seg_bar, seg) = beam.extend(id, lp[id as usize], domain, params.max_bars);
            let div = if params.diversity_weight == 0.0 {
                0.0
            } else {
                let cm = domain.segment_diversity(&cand.tokens[seg]);
                diversity_score(&cm, &domain.reference_diversity(seg_bar), params.diversity_mode)
            };
            cand.score = cand.lm_norm() + params.diversity_weight * div + params.tension_weight * cand.tension_similarity;
            pool.push(cand);
        }
    }
    rank(&mut pool, params.beam_width);
    Ok(pool)
}

/// Records the tension of newly completed bars and re-ranks every beam by
/// `lm_norm + tension_weight * similarity`.
pub fn bar_rerank<D: SearchDomain + ?Sized>(
    beams: &mut Vec<BeamCandidate>,
    domain: &D,
    target: &[f64],
    params: &SearchParams,
    stats: &mut SearchStats,
) -> Result<(), SearchError> {
    for beam in beams.iter_mut() {
        if let Some(bar) = beam.pending_bar.take() {
            let t = domain.bar_tension(&beam.tokens, bar)?;
            beam.completed_bar_tensions.push(t);
        }
    }
    for beam in beams.iter_mut() {
        beam.score = final_score(beam, target, params, stats)?;
    }
    stats.bar_reranks += 1;
    rank(beams, params.beam_width);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub beam: BeamCandidate,
    pub lm_norm: f64,
    pub similarity: Option<Similarity>,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub candidates: Vec<RankedCandidate>,
    pub stats: SearchStats,
}

/// Runs the search and returns the best `final_candidates` sequences.
pub fn generate<M: SequenceModel + ?Sized, D: SearchDomain + ?Sized>(
    model: &M,
    domain: &D,
    target: &[f64],
    params: &SearchParams,
) -> Result<Generation, SearchError> {
    params.validate()?;
    if target.len() < params.max_bars {
        return Err(SearchError::TargetTooShort { needed: params.max_bars, available: target.len() });
    }
    let mut stats = SearchStats::default();
    let mut beams = vec![BeamCandidate::start(domain.bos())];
    if params.max_bars == 0 {
        beams[0].finished = true;
    }
    let budget = params.max_bars * TOKENS_PER_BAR_BUDGET;
    while !beams.iter().all(|b| b.finished) {
        if stats.steps >= budget {
            stats.truncated = true;
            break;
        }
        beams = token_step(&beams, model, domain, params, stats.steps, &mut stats)?;
        stats.steps += 1;
        if beams.iter().any(|b| b.pending_bar.is_some()) {
            bar_rerank(&mut beams, domain, target, params, &mut stats)?;
        }
    }
    let mut ranked = Vec::with_capacity(beams.len());
    for mut beam in beams {
        let similarity = tension_score(&beam, target, params)?;
        if let Some(s) = &similarity {
            stats.record(s);
        }
        let lm_norm = beam.lm_norm();
        let final_score = lm_norm + params.tension_weight * similarity.map_or(0.0, |s| s.value);
        beam.score = final_score;
        ranked.push(RankedCandidate { beam, lm_norm, similarity, final_score });
    }
    ranked.sort_by(|a, b| b.final_score.total_cmp(&a.final_score));
    ranked.truncate(params.final_candidates);
    Ok(Generation { candidates: ranked, stats })
}

/// The search domain of tokenized music, conditioned on a reference piece
/// and a target curve. Bar `i` of the output corresponds to bar `i` of the
/// reference; a shorter reference repeats its last bar.
pub struct MusicDomain<'a> {
    vocab: &'a Vocabulary,
    tokenizer: TokenizerConfig,
    tension: &'a TensionModel<f64>,
    key: Key,
    bar_controls: Vec<Vec<u32>>,
    reference_metrics: Vec<DiversityMetrics>,
    bos: u32,
    bar: u32,
    eos: u32,
}

impl<'a> MusicDomain<'a> {
    /// `reference` must already be canonical for `tokenizer`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vocab: &'a Vocabulary,
        tokenizer: TokenizerConfig,
        tension: &'a TensionModel<f64>,
        reference: &Piece,
        target: &[f64],
        bars: usize,
        density_edges: &BucketEdges,
        tension_edges: &BucketEdges,
    ) -> Result<Self, SearchError> {
        if reference.bars.is_empty() {
            return Err(SearchError::EmptyReference);
        }
        if target.len() < bars {
            return Err(SearchError::TargetTooShort { needed: bars, available: target.len() });
        }
        let key = match reference.key_estimate {
            Some(k) => k,
            None => estimate_key(reference)?,
        };
        let ref_bar = |i: usize| &reference.bars[i.min(reference.bars.len() - 1)];
        let bar_controls = (0..bars.max(1))
            .map(|i| {
                let t = target.get(i).copied().unwrap_or(0.0);
                control_tokens_for_bar(ref_bar(i), t, density_edges, tension_edges, &tokenizer).ids(vocab)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tokens = encode(reference, &tokenizer)?;
        let reference_metrics = bar_boundaries(&tokens).into_iter().map(|r| diversity_metrics(&tokens[r])).collect();
        Ok(Self {
            vocab,
            tokenizer,
            tension,
            key,
            bar_controls,
            reference_metrics,
            bos: vocab.id(&Token::Bos)?,
            bar: vocab.id(&Token::Bar)?,
            eos: vocab.id(&Token::Eos)?,
        })
    }

    pub fn key(&self) -> Key {
        self.key
    }

    /// Decodes a generated sequence, dropping a trailing Bar token.
    pub fn decode_ids(&self, ids: &[u32]) -> Result<Piece, SearchError> {
        let mut tokens = self.vocab.to_tokens(ids)?;
        if tokens.last() == Some(&Token::Bar) {
            tokens.pop();
        }
        let mut piece = decode(&tokens, &self.tokenizer, DecodeMode::Tolerant)?.piece;
        piece.key_estimate = Some(self.key);
        Ok(piece)
    }

    /// Curve of a decoded sequence under the domain's key.
    pub fn piece_curve(&self, piece: &Piece) -> Result<Vec<f64>, SearchError> {
        if piece.bars.is_empty() {
            return Ok(Vec::new());
        }
        let mut piece = piece.clone();
        piece.key_estimate = Some(self.key);
        Ok(self.tension.piece_curve(&piece)?.values)
    }
}

impl SearchDomain for MusicDomain<'_> {
    fn bos(&self) -> u32 {
        self.bos
    }

    fn is_bar(&self, id: u32) -> bool {
        id == self.bar
    }

    fn is_eos(&self, id: u32) -> bool {
        id == self.eos
    }

    fn controls(&self, bar: usize) -> &[u32] {
        &self.bar_controls[bar.min(self.bar_controls.len() - 1)]
    }

    fn segment_diversity(&self, segment: &[u32]) -> DiversityMetrics {
        let tokens: Vec<Token> = segment.iter().filter_map(|&id| self.vocab.token(id).ok()).collect();
        diversity_metrics(&tokens)
    }

    fn reference_diversity(&self, bar: usize) -> DiversityMetrics {
        match self.reference_metrics.len() {
            0 => DiversityMetrics::default(),
            n => self.reference_metrics[bar.min(n - 1)],
        }
    }

    fn bar_tension(&self, tokens: &[u32], bar: usize) -> Result<f64, SearchError> {
        let body = &tokens[..tokens.len().saturating_sub(1)];
        let piece = self.decode_ids(body)?;
        Ok(self.piece_curve(&piece)?.get(bar).copied().unwrap_or(0.0))
    }
}

/// Per-candidate section of a generation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub rank: usize,
    pub lm_norm: f64,
    pub tension_similarity: Option<f64>,
    pub branch: Option<SimilarityBranch>,
    pub final_score: f64,
    pub bar_tensions: Vec<f64>,
    /// Similarity to the target after each completed bar.
    pub similarity_trace: Vec<f64>,
    pub branch_trace: Vec<SimilarityBranch>,
    pub token_count: usize,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub params: SearchParams,
    pub target: Vec<f64>,
    pub candidates: Vec<CandidateReport>,
    pub stats: SearchStats,
}

impl GenerationReport {
    pub fn new(generation: &Generation, target: &[f64], params: &SearchParams) -> Result<Self, SearchError> {
        let cfg = params.similarity_config();
        let mut candidates = Vec::with_capacity(generation.candidates.len());
        for (i, c) in generation.candidates.iter().enumerate() {
            let tensions = &c.beam.completed_bar_tensions;
            let mut similarity_trace = Vec::with_capacity(tensions.len());
            let mut branch_trace = Vec::with_capacity(tensions.len());
            for n in 1..=tensions.len() {
                let s = curve_similarity(&tensions[..n], &target[..n], &cfg)?;
                similarity_trace.push(s.value);
                branch_trace.push(s.branch);
            }
            candidates.push(CandidateReport {
                rank: i + 1,
                lm_norm: c.lm_norm,
                tension_similarity: c.similarity.map(|s| s.value),
                branch: c.similarity.map(|s| s.branch),
                final_score: c.final_score,
                bar_tensions: tensions.clone(),
                similarity_trace,
                branch_trace,
                token_count: c.beam.tokens.len(),
                finished: c.beam.finished,
            });
        }
        Ok(Self { params: *params, target: target[..params.max_bars.min(target.len())].to_vec(), candidates, stats: generation.stats.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_returns_single_token() {
        let lp = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        let mut rng = expansion_rng(1, 0, 0);
        assert_eq!(nucleus_sample_k(&lp, 0.9, 0.9, 5, &mut rng), vec![1]);
    }

    #[test]
    fn uniform_four_needs_all() {
        let lp = [(0.25f64).ln(); 4];
        let mut rng = expansion_rng(7, 3, 1);
        let mut got = nucleus_sample_k(&lp, 0.9, 1.0, 4, &mut rng);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn cold_temperature_picks_argmax() {
        let mut rng = expansion_rng(0, 0, 0);
        for trial in 0..50 {
            let lp: Vec<f64> = (0..20).map(|i| -(((i * 37 + trial * 11) % 23) as f64) / 7.0 - 0.5).collect();
            let best = (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b]).then(b.cmp(&a))).unwrap() as u32;
            assert_eq!(nucleus_sample_k(&lp, 0.9, 1e-3, 4, &mut rng), vec![best]);
        }
    }

    #[test]
    fn samples_are_distinct_and_reproducible() {
        let lp: Vec<f64> = (0..30).map(|i| -(i as f64) * 0.1).collect();
        let a = nucleus_sample_k(&lp, 0.95, 0.9, 8, &mut expansion_rng(5, 2, 3));
        let b = nucleus_sample_k(&lp, 0.95, 0.9, 8, &mut expansion_rng(5, 2, 3));
        assert_eq!(a, b);
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), a.len());
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn diversity_examples() {
        let same = DiversityMetrics::from_notes(&[(60, 4); 5]);
        assert_eq!(same, DiversityMetrics { pv: 0.2, dv: 0.2, pe: 0.0 });
        let distinct = DiversityMetrics::from_notes(&[(60, 1), (62, 2), (64, 3), (65, 4)]);
        assert_eq!((distinct.pv, distinct.dv), (1.0, 1.0));
        assert!((distinct.pe - 1.0).abs() < 1e-12);
        assert_eq!(DiversityMetrics::from_notes(&[(60, 1), (62, 2), (64, 3)]).pe, 0.0);
        assert_eq!(DiversityMetrics::from_notes(&[]), DiversityMetrics::default());
    }

    #[test]
    fn diversity_scores() {
        let m = DiversityMetrics { pv: 0.5, dv: 0.5, pe: 0.0 };
        assert_eq!(diversity_score(&m, &m, DiversityMode::Reference), 3.0);
        assert_eq!(diversity_score(&m, &DiversityMetrics::default(), DiversityMode::Raw), 1.0);
        let other = DiversityMetrics { pv: 0.4, dv: 0.5, pe: 0.0 };
        assert!(diversity_score(&other, &m, DiversityMode::Reference) < 3.0);
    }

    #[test]
    fn segment_parsing_counts_complete_groups() {
        let toks = [Token::Position(0), Token::Pitch(60), Token::Velocity(3), Token::Duration(4), Token::Pitch(62)];
        assert_eq!(diversity_metrics(&toks).pv, 1.0);
    }

    #[test]
    fn default_params_match_published_settings() {
        let p = SearchParams::default();
        assert_eq!(
            (p.beam_width, p.nucleus_p, p.diversity_weight, p.tension_weight, p.temperature, p.final_candidates),
            (8, 0.9, 0.7, 4.0, 0.9, 3)
        );
        assert_eq!(p.variance_threshold, 0.001);
        assert!(p.validate().is_ok());
        assert!(SearchParams { final_candidates: 9, ..p }.validate().is_err());
        assert!(SearchParams { beam_width: 0, ..p }.validate().is_err());
    }
}
