//! Library-level steps shared by the commands: loading, training,
//! generation and curve files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tension_core::evalmetrics::{targets_from_reference, SampleTargets};
use tension_core::beamsearch::{generate, Generation, GenerationReport, MusicDomain, SearchParams};
use rayon::prelude::*;
use tension_core::midi::{chord_tracks, filter_chord_tracks, parse_midi};
use tension_core::music::{segment_into_bars_min, Key, Piece};
use tension_core::seqmodel::{GrammarConstrained, ModelBundle, NGramModel, SequenceModel, TrainingSequence};
use tension_core::tension::{default_scale_ref, TensionCurve, TensionModel, TensionWeights};
use tension_core::tokens::{bar_boundaries, build_bucket_edges, BucketEdges, canonicalize, control_tokens_for_bar, encode, Token, Vocabulary};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn load_midi(path: &Path) -> Result<Piece, CliError> {
    let parsed = parse_midi(&read_file(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        log::warn!("{}: {w:?}", path.display());
    }
    Ok(parsed.piece)
}

/// MIDI files directly inside a directory, sorted by name.
pub fn midi_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|x| x.to_str()).is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi")))
        .collect();
    files.sort();
    Ok(files)
}

/// Chord tracks only, in tokenizer-canonical form. `None` when the piece has
/// no chord track.
pub fn prepare(piece: &Piece, config: &RunConfig) -> Result<Option<Piece>, CliError> {
    match filter_chord_tracks(piece, config.train.min_polyphony) {
        Some(p) => Ok(Some(canonicalize(&p, &config.tokenizer)?)),
        None => Ok(None),
    }
}

pub fn tension_model(config: &RunConfig) -> Result<TensionModel<f64>, CliError> {
    Ok(TensionModel::new(config.tension.to_config())?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub files: usize,
    pub kept: usize,
    pub unreadable: usize,
    pub no_chord_tracks: usize,
    pub bars: usize,
    pub tokens: usize,
}

/// A prepared corpus file.
#[derive(Debug, Clone)]
pub struct CorpusPiece {
    pub name: String,
    pub piece: Piece,
    /// Track indices of the source file that passed the chord filter.
    pub retained_tracks: Vec<usize>,
}

enum Loaded {
    Kept(CorpusPiece),
    Unreadable,
    NoChords,
}

/// Reads and prepares every MIDI file of a directory, in parallel; the
/// result follows file-name order.
pub fn load_corpus(dir: &Path, config: &RunConfig) -> Result<(Vec<CorpusPiece>, CorpusStats), CliError> {
    let files = midi_files(dir)?;
    let loaded = files
        .par_iter()
        .map(|path| {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let piece = match load_midi(path) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("skipping {e}");
                    return Ok(Loaded::Unreadable);
                }
            };
            let retained_tracks = chord_tracks(&piece, config.train.min_polyphony);
            Ok(match prepare(&piece, config)? {
                Some(p) if !p.bars.is_empty() => Loaded::Kept(CorpusPiece { name, piece: p, retained_tracks }),
                _ => Loaded::NoChords,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut stats = CorpusStats { files: files.len(), ..CorpusStats::default() };
    let mut pieces = Vec::new();
    for l in loaded {
        match l {
            Loaded::Kept(p) => {
                stats.bars += p.piece.bars.len();
                pieces.push(p);
            }
            Loaded::Unreadable => stats.unreadable += 1,
            Loaded::NoChords => stats.no_chord_tracks += 1,
        }
    }
    stats.kept = pieces.len();
    Ok((pieces, stats))
}

/// Trains an n-gram bundle on prepared pieces.
pub fn train_bundle(pieces: &[Piece], config: &RunConfig) -> Result<ModelBundle, CliError> {
    if pieces.is_empty() {
        return Err(CliError::input("empty corpus"));
    }
    let model = tension_model(config)?;
    let curves = pieces.iter().map(|p| Ok(model.piece_curve(p)?.values)).collect::<Result<Vec<_>, CliError>>()?;
    let all_tensions: Vec<f64> = curves.iter().flatten().copied().collect();
    let counts: Vec<f64> = pieces.iter().flat_map(|p| &p.bars).filter(|b| !b.notes.is_empty()).map(|b| b.notes.len() as f64).collect();
    let tok = &config.tokenizer;
    let density_edges = build_bucket_edges(if counts.is_empty() { &[0.0] } else { &counts }, tok.density_bins as usize)?;
    let tension_edges = build_bucket_edges(&all_tensions, tok.tension_bins as usize)?;
    let vocab = Vocabulary::new(tok);
    let mut sequences = Vec::with_capacity(pieces.len());
    let mut longest_bar = 0;
    for (piece, curve) in pieces.iter().zip(&curves) {
        let tokens = encode(piece, tok)?;
        longest_bar = bar_boundaries(&tokens).iter().map(|r| r.len()).fold(longest_bar, usize::max);
        let ids = vocab.to_ids(&tokens)?;
        let bar_controls = piece
            .bars
            .iter()
            .zip(curve)
            .map(|(b, &t)| control_tokens_for_bar(b, t, &density_edges, &tension_edges, tok).ids(&vocab))
            .collect::<Result<Vec<_>, _>>()?;
        sequences.push(TrainingSequence { ids, bar_controls });
    }
    let ngram = NGramModel::train(&sequences, config.train.order, config.train.smoothing, vocab.len(), vocab.id(&Token::Bar)?)?;
    Ok(ModelBundle::new(
        *tok,
        config.tension.to_config(),
        density_edges,
        tension_edges,
        default_scale_ref(&all_tensions),
        &vocab,
        ngram,
    )
    .with_bar_token_limit(longest_bar))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    ModelBundle::from_bytes(&read_file(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Result of one generation run.
pub struct GenerationOutput {
    pub generation: Generation,
    pub report: GenerationReport,
    /// Decoded candidates, trimmed or padded to the requested bar count.
    pub pieces: Vec<Piece>,
    pub key: Key,
    /// The reference after chord filtering and canonicalization.
    pub reference: Piece,
}

/// Runs the search for a reference piece and target curve. The bundle
/// supplies tokenizer, tension settings, bins and similarity scale.
pub fn run_generation(
    bundle: &ModelBundle,
    model: &dyn SequenceModel,
    reference: &Piece,
    target: &[f64],
    params: &SearchParams,
    min_polyphony: f64,
) -> Result<GenerationOutput, CliError> {
    let reference = filter_chord_tracks(reference, min_polyphony).ok_or_else(|| CliError::input("reference has no chord tracks"))?;
    let reference = canonicalize(&reference, &bundle.tokenizer)?;
    let vocab = bundle.vocabulary()?;
    let tension = TensionModel::new(bundle.tension.clone())?;
    let params = SearchParams { scale_ref: bundle.scale_ref, ..*params };
    let domain = MusicDomain::new(
        &vocab,
        bundle.tokenizer,
        &tension,
        &reference,
        target,
        params.max_bars,
        &bundle.density_edges,
        &bundle.tension_edges,
    )?;
    let mut constrained = GrammarConstrained::new(model, &vocab, bundle.tokenizer).with_bar_limit(params.max_bars);
    if let Some(limit) = bundle.bar_token_limit {
        constrained = constrained.with_bar_token_limit(limit);
    }
    let generation = generate(&constrained, &domain, target, &params)?;
    let report = GenerationReport::new(&generation, target, &params)?;
    let pieces = generation
        .candidates
        .iter()
        .map(|c| fit_bars(&domain.decode_ids(&c.beam.tokens)?, params.max_bars))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(GenerationOutput { generation, report, pieces, key: domain.key(), reference })
}

/// Pads with empty bars or drops trailing bars so the piece has `bars` bars.
pub fn fit_bars(piece: &Piece, bars: usize) -> Result<Piece, CliError> {
    let notes: Vec<_> = piece.notes().cloned().collect();
    let mut rebuilt = segment_into_bars_min(&notes, &piece.time_signature_events(), piece.ticks_per_quarter, bars)?;
    rebuilt.truncate(bars);
    let end = rebuilt.last().map_or(0, |b| b.end);
    let mut out = piece.clone();
    out.bars = rebuilt;
    out.tempo_events.retain(|t| t.tick < end.max(1));
    Ok(out)
}

/// Curve file: CSV with a `bar_index,tension` header, or JSON with metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFile {
    pub curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<TensionWeights<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<Key>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_ref: Option<f64>,
}

pub fn read_curve(path: &Path) -> Result<Vec<f64>, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{} is not UTF-8", path.display())))?;
    let is_json = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let values = if is_json {
        serde_json::from_str::<CurveFile>(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?.curve
    } else {
        TensionCurve::<f64>::from_csv(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?.values
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input(format!("{}: non-finite tension value", path.display())));
    }
    Ok(values)
}

/// Targets for a generated sample conditioned on `reference`: the first
/// `bars` bars of the reference, its last bar repeated when it is shorter,
/// and the target curve in place of the reference's own tension.
#[allow(clippy::too_many_arguments)]
pub fn generation_targets(
    name: &str,
    reference: &Piece,
    target: &[f64],
    bars: usize,
    key: Key,
    model: &TensionModel<f64>,
    edges: &BucketEdges,
    bins: u8,
    positions_per_quarter: u32,
) -> Result<SampleTargets, CliError> {
    let head = fit_bars(reference, bars.min(reference.bars.len()))?;
    let mut t = targets_from_reference(name, &head, None, model, edges, bins, positions_per_quarter)?;
    fn extend<T: Clone>(v: &mut Vec<T>, len: usize) {
        if let Some(last) = v.last().cloned() {
            v.resize(len.max(v.len()), last);
        }
    }
    extend(&mut t.instruments, bars);
    extend(&mut t.density, bars);
    extend(&mut t.grooves, bars);
    t.tension = target[..bars].to_vec();
    t.key = Some(key);
    Ok(t)
}
