//! REMI+-style event tokens.
//!
//! A piece becomes `BOS (Bar TimeSig item*)* EOS`, where an item is a note
//! group `Position Instrument Pitch Velocity Duration`, a tempo change
//! `Position Tempo`, or (optionally) a chord label `Position Chord`.
//! Per-bar control tokens (time signature, instruments, density, tension)
//! share the vocabulary but travel on a separate conditioning channel.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{instrument_code, quantize, Bar, Grid, MusicError, Note, Piece, TempoEvent, TimeSignature};

/// Instrument code used for percussion.
pub const DRUM_INSTRUMENT: u8 = 128;
const DENOMINATORS: [u32; 6] = [1, 2, 4, 8, 16, 32];
const MAX_NUMERATOR: u32 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum TokenError {
    #[error("note at tick {tick} is not on the position grid")]
    OffGrid { tick: u64 },
    #[error("duration of {ticks} ticks is not a grid multiple up to {max_units} units")]
    Duration { ticks: u64, max_units: u32 },
    #[error("piece resolution {found} differs from the tokenizer grid {expected}")]
    Resolution { found: u32, expected: u32 },
    #[error("time signature {0} is outside the vocabulary")]
    TimeSignature(TimeSignature),
    #[error("token {token} at index {index} breaks the grammar")]
    Grammar { index: usize, token: String },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("token {0} is not in this vocabulary")]
    NotInVocabulary(String),
    #[error("bucket count must be at least 2, got {0}")]
    BinCount(usize),
    #[error("cannot build buckets from no values")]
    NoValues,
    #[error("vocabulary file: {0}")]
    VocabularyFormat(String),
    #[error(transparent)]
    Music(#[from] MusicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChordQuality {
    Major,
    Minor,
    Diminished,
    Augmented,
    Dominant7,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 5] = [Self::Major, Self::Minor, Self::Diminished, Self::Augmented, Self::Dominant7];

    fn intervals(self) -> &'static [u8] {
        match self {
            Self::Major => &[0, 4, 7],
            Self::Minor => &[0, 3, 7],
            Self::Diminished => &[0, 3, 6],
            Self::Augmented => &[0, 4, 8],
            Self::Dominant7 => &[0, 4, 7, 10],
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Major => "maj",
            Self::Minor => "min",
            Self::Diminished => "dim",
            Self::Augmented => "aug",
            Self::Dominant7 => "7",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Bos,
    Eos,
    Bar,
    TimeSig(TimeSignature),
    Position(u16),
    /// MIDI program, or 128 for percussion.
    Instrument(u8),
    Pitch(u8),
    Velocity(u8),
    /// Length in grid units.
    Duration(u16),
    Tempo(u8),
    /// Root pitch class and quality; `None` is "no chord".
    Chord(Option<(u8, ChordQuality)>),
    Density(u8),
    Tension(u8),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
            Token::Bar => f.write_str("Bar"),
            Token::TimeSig(ts) => write!(f, "TimeSig_{ts}"),
            Token::Position(p) => write!(f, "Position_{p}"),
            Token::Instrument(i) => write!(f, "Instrument_{i}"),
            Token::Pitch(p) => write!(f, "Pitch_{p}"),
            Token::Velocity(v) => write!(f, "Velocity_{v}"),
            Token::Duration(d) => write!(f, "Duration_{d}"),
            Token::Tempo(t) => write!(f, "Tempo_{t}"),
            Token::Chord(None) => f.write_str("Chord_N"),
            Token::Chord(Some((root, q))) => write!(f, "Chord_{root}:{}", q.label()),
            Token::Density(d) => write!(f, "Density_{d}"),
            Token::Tension(t) => write!(f, "Tension_{t}"),
        }
    }
}

impl FromStr for Token {
    type Err = TokenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError::UnknownToken(s.to_string());
        match s {
            "BOS" => return Ok(Token::Bos),
            "EOS" => return Ok(Token::Eos),
            "Bar" => return Ok(Token::Bar),
            "Chord_N" => return Ok(Token::Chord(None)),
            _ => {}
        }
        let (kind, value) = s.split_once('_').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<u16>().map_err(|_| bad());
        let small = |v: &str| v.parse::<u8>().map_err(|_| bad());
        Ok(match kind {
            "TimeSig" => Token::TimeSig(value.parse().map_err(|_| bad())?),
            "Position" => Token::Position(num(value)?),
            "Instrument" => Token::Instrument(small(value)?),
            "Pitch" => Token::Pitch(small(value)?),
            "Velocity" => Token::Velocity(small(value)?),
            "Duration" => Token::Duration(num(value)?),
            "Tempo" => Token::Tempo(small(value)?),
            "Density" => Token::Density(small(value)?),
            "Tension" => Token::Tension(small(value)?),
            "Chord" => {
                let (root, q) = value.split_once(':').ok_or_else(bad)?;
                let q = ChordQuality::ALL.into_iter().find(|c| c.label() == q).ok_or_else(bad)?;
                Token::Chord(Some((small(root)?, q)))
            }
            _ => return Err(bad()),
        })
    }
}

/// Whitespace-separated token strings.
pub fn tokens_to_string(tokens: &[Token]) -> String {
    tokens.iter().map(Token::to_string).collect::<Vec<_>>().join(" ")
}

pub fn tokens_from_string(text: &str) -> Result<Vec<Token>, TokenError> {
    text.split_whitespace().map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub grid: Grid,
    /// Longest duration token, in grid units.
    pub max_duration_units: u16,
    pub velocity_bins: u8,
    pub tempo_bins: u8,
    /// Tempo bin range in BPM, log-spaced.
    pub tempo_min_bpm: f64,
    pub tempo_max_bpm: f64,
    pub density_bins: u8,
    pub tension_bins: u8,
    pub include_chords: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            max_duration_units: 64,
            velocity_bins: 32,
            tempo_bins: 32,
            tempo_min_bpm: 40.0,
            tempo_max_bpm: 250.0,
            density_bins: 32,
            tension_bins: 32,
            include_chords: false,
        }
    }
}

impl TokenizerConfig {
    pub fn unit(&self) -> u64 {
        self.grid.unit()
    }

    /// Number of grid positions in a bar of the given signature.
    pub fn positions_in_bar(&self, ts: TimeSignature) -> u64 {
        ts.bar_ticks(self.grid.ticks_per_quarter) / self.unit()
    }

    fn max_positions(&self) -> u16 {
        let widest = TimeSignature { numerator: MAX_NUMERATOR, denominator: 1 };
        self.positions_in_bar(widest).min(u16::MAX as u64) as u16
    }

    pub fn velocity_bin(&self, velocity: u8) -> u8 {
        let v = velocity.clamp(1, 127) as u32 - 1;
        (v * self.velocity_bins as u32 / 127) as u8
    }

    /// Central velocity of a bin.
    pub fn velocity_of_bin(&self, bin: u8) -> u8 {
        let members: Vec<u8> = (1..=127u8).filter(|&v| self.velocity_bin(v) == bin).collect();
        match members.as_slice() {
            [] => 127,
            m => m[(m.len() - 1) / 2],
        }
    }

    fn tempo_micros_of_bin(&self, bin: u8) -> u32 {
        let span = (self.tempo_max_bpm / self.tempo_min_bpm).ln();
        let steps = (self.tempo_bins.max(2) - 1) as f64;
        let bpm = self.tempo_min_bpm * (span * bin as f64 / steps).exp();
        (60_000_000.0 / bpm).round() as u32
    }

    pub fn tempo_bin(&self, micros_per_quarter: u32) -> u8 {
        let target = (micros_per_quarter.max(1) as f64).ln();
        (0..self.tempo_bins)
            .min_by(|&a, &b| {
                let da = ((self.tempo_micros_of_bin(a) as f64).ln() - target).abs();
                let db = ((self.tempo_micros_of_bin(b) as f64).ln() - target).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(0)
    }

    pub fn tempo_of_bin(&self, bin: u8) -> u32 {
        self.tempo_micros_of_bin(bin)
    }
}

/// Bijective map between tokens and dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    ids: BTreeMap<Token, u32>,
}

impl Vocabulary {
    pub fn new(config: &TokenizerConfig) -> Self {
        let mut tokens = vec![Token::Bos, Token::Eos, Token::Bar];
        for numerator in 1..=MAX_NUMERATOR {
            for denominator in DENOMINATORS {
                tokens.push(Token::TimeSig(TimeSignature { numerator, denominator }));
            }
        }
        tokens.extend((0..config.max_positions()).map(Token::Position));
        tokens.extend((0..=DRUM_INSTRUMENT).map(Token::Instrument));
        tokens.extend((0..=127).map(Token::Pitch));
        tokens.extend((0..config.velocity_bins).map(Token::Velocity));
        tokens.extend((1..=config.max_duration_units).map(Token::Duration));
        tokens.extend((0..config.tempo_bins).map(Token::Tempo));
        tokens.extend((0..config.density_bins).map(Token::Density));
        tokens.extend((0..config.tension_bins).map(Token::Tension));
        if config.include_chords {
            tokens.push(Token::Chord(None));
            for root in 0..12 {
                tokens.extend(ChordQuality::ALL.iter().map(|&q| Token::Chord(Some((root, q)))));
            }
        }
        Self::from_tokens(tokens).expect("generated vocabulary is duplicate-free")
    }

    fn from_tokens(tokens: Vec<Token>) -> Result<Self, TokenError> {
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(*t, i as u32).is_some() {
                return Err(TokenError::VocabularyFormat(format!("duplicate token {t}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &Token) -> Result<u32, TokenError> {
        self.ids.get(token).copied().ok_or_else(|| TokenError::NotInVocabulary(token.to_string()))
    }

    pub fn token(&self, id: u32) -> Result<Token, TokenError> {
        self.tokens.get(id as usize).copied().ok_or(TokenError::UnknownId(id))
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn to_ids(&self, tokens: &[Token]) -> Result<Vec<u32>, TokenError> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn to_tokens(&self, ids: &[u32]) -> Result<Vec<Token>, TokenError> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// JSON object from token string to id.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, u32> = self.tokens.iter().enumerate().map(|(i, t)| (t.to_string(), i as u32)).collect();
        serde_json::to_value(map).expect("string map serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, TokenError> {
        let map: BTreeMap<String, u32> =
            serde_json::from_value(value.clone()).map_err(|e| TokenError::VocabularyFormat(e.to_string()))?;
        let mut slots: Vec<Option<Token>> = vec![None; map.len()];
        for (s, id) in map {
            let slot = slots
                .get_mut(id as usize)
                .ok_or_else(|| TokenError::VocabularyFormat(format!("id {id} is not dense")))?;
            if slot.is_some() {
                return Err(TokenError::VocabularyFormat(format!("id {id} assigned twice")));
            }
            *slot = Some(s.parse()?);
        }
        Self::from_tokens(slots.into_iter().map(|t| t.expect("all ids filled")).collect())
    }
}

/// Quantile bin edges. Bins are right-closed: a value equal to an edge falls
/// into the lower bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEdges {
    pub edges: Vec<f64>,
}

impl BucketEdges {
    pub fn bin_count(&self) -> usize {
        self.edges.len() + 1
    }

    /// Number of edges strictly below the value.
    pub fn bucket(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Edges at the `i / bins` quantiles, duplicates removed.
pub fn build_bucket_edges(values: &[f64], bins: usize) -> Result<BucketEdges, TokenError> {
    if bins < 2 {
        return Err(TokenError::BinCount(bins));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(TokenError::NoValues);
    }
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins).map(|i| quantile(&sorted, i as f64 / bins as f64)).collect();
    edges.dedup();
    Ok(BucketEdges { edges })
}

/// Conditioning attributes of one bar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlTokens {
    pub time_signature: TimeSignature,
    /// Sorted distinct instrument codes.
    pub instruments: Vec<u8>,
    pub density: u8,
    pub tension: u8,
}

impl ControlTokens {
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = vec![Token::TimeSig(self.time_signature)];
        out.extend(self.instruments.iter().map(|&i| Token::Instrument(i)));
        out.push(Token::Density(self.density));
        out.push(Token::Tension(self.tension));
        out
    }

    pub fn ids(&self, vocab: &Vocabulary) -> Result<Vec<u32>, TokenError> {
        vocab.to_ids(&self.tokens())
    }
}

pub fn control_tokens_for_bar(
    bar: &Bar,
    tension: f64,
    density_edges: &BucketEdges,
    tension_edges: &BucketEdges,
    config: &TokenizerConfig,
) -> ControlTokens {
    ControlTokens {
        time_signature: bar.time_signature,
        instruments: bar.instruments(),
        density: density_bucket(bar.notes.len(), density_edges, config.density_bins),
        tension: tension_bucket(tension, tension_edges, config.tension_bins),
    }
}

fn capped(bin: usize, bins: u8) -> u8 {
    bin.min(bins.saturating_sub(1) as usize) as u8
}

/// Density bin of a bar with `note_count` notes; empty bars are bin 0.
pub fn density_bucket(note_count: usize, edges: &BucketEdges, bins: u8) -> u8 {
    if note_count == 0 {
        0
    } else {
        capped(edges.bucket(note_count as f64), bins)
    }
}

pub fn tension_bucket(tension: f64, edges: &BucketEdges, bins: u8) -> u8 {
    capped(edges.bucket(tension), bins)
}

/// Brings a piece into the exact form the tokenizer reproduces: grid ticks,
/// velocities and tempi at bin centres, durations within the table, one
/// track per instrument, no key.
pub fn canonicalize(piece: &Piece, config: &TokenizerConfig) -> Result<Piece, TokenError> {
    let mut p = quantize(piece, &config.grid)?;
    let unit = config.unit();
    let max = config.max_duration_units as u64 * unit;
    let mut notes: Vec<Note> = p
        .notes()
        .map(|n| Note {
            instrument: if n.drum { 0 } else { n.instrument },
            velocity: config.velocity_of_bin(config.velocity_bin(n.velocity)),
            duration: n.duration.min(max),
            ..*n
        })
        .collect();
    notes.sort_by_key(|n| (n.onset, n.pitch, n.drum, n.instrument, std::cmp::Reverse(n.duration), std::cmp::Reverse(n.velocity)));
    notes.dedup_by(|b, a| (a.onset, a.pitch, a.drum, a.instrument) == (b.onset, b.pitch, b.drum, b.instrument));
    let mut keys: Vec<(bool, u8)> = notes.iter().map(|n| (n.drum, n.instrument)).collect();
    keys.sort_unstable();
    keys.dedup();
    for n in &mut notes {
        n.track = keys.binary_search(&(n.drum, n.instrument)).expect("key collected above");
    }
    for bar in &mut p.bars {
        bar.notes.clear();
    }
    for n in notes {
        let idx = p.bars.partition_point(|b| b.end <= n.onset);
        p.bars[idx].notes.push(n);
    }
    for bar in &mut p.bars {
        bar.notes.sort_by_key(Note::sort_key);
    }
    let end = p.end_tick();
    p.tempo_events.retain(|t| t.tick < end);
    for t in &mut p.tempo_events {
        t.micros_per_quarter = config.tempo_of_bin(config.tempo_bin(t.micros_per_quarter));
    }
    p.key_estimate = None;
    Ok(p)
}

const CHORD_THRESHOLD: usize = 3;

/// Best-matching chord label for a set of pitch classes.
pub fn chord_label(pitch_classes: &[u8]) -> Option<(u8, ChordQuality)> {
    let mut present = [false; 12];
    for &pc in pitch_classes {
        present[(pc % 12) as usize] = true;
    }
    let mut best: Option<(usize, usize, u8, ChordQuality)> = None;
    for root in 0..12u8 {
        for q in ChordQuality::ALL {
            let hits = q.intervals().iter().filter(|&&i| present[((root + i) % 12) as usize]).count();
            let misses = q.intervals().len() - hits;
            let better = match best {
                None => true,
                Some((h, m, _, _)) => hits > h || (hits == h && misses < m),
            };
            if better {
                best = Some((hits, misses, root, q));
            }
        }
    }
    best.filter(|b| b.0 >= CHORD_THRESHOLD && b.0 >= pitch_classes.len().min(3)).map(|b| (b.2, b.3))
}

enum Item {
    Tempo(u64, u8),
    Chord(u64, Option<(u8, ChordQuality)>),
    Note(u64, u8, u8, u8, u16),
}

impl Item {
    fn order(&self) -> (u64, u8, u8, u8, u8, u16) {
        match *self {
            Item::Tempo(p, _) => (p, 0, 0, 0, 0, 0),
            Item::Chord(p, _) => (p, 1, 0, 0, 0, 0),
            Item::Note(p, inst, pitch, vel, dur) => (p, 2, pitch, inst, vel, dur),
        }
    }
}

/// Tokenizes a piece. Velocities and tempi are binned; everything else must
/// already lie on the grid.
pub fn encode(piece: &Piece, config: &TokenizerConfig) -> Result<Vec<Token>, TokenError> {
    if piece.bars.is_empty() {
        return Ok(vec![Token::Bos, Token::Eos]);
    }
    if piece.ticks_per_quarter != config.grid.ticks_per_quarter {
        return Err(TokenError::Resolution { found: piece.ticks_per_quarter, expected: config.grid.ticks_per_quarter });
    }
    let unit = config.unit();
    let mut out = vec![Token::Bos];
    for bar in &piece.bars {
        if !bar.time_signature.is_valid() || bar.time_signature.numerator > MAX_NUMERATOR {
            return Err(TokenError::TimeSignature(bar.time_signature));
        }
        out.push(Token::Bar);
        out.push(Token::TimeSig(bar.time_signature));
        let position = |tick: u64| -> Result<u64, TokenError> {
            let rel = tick - bar.start;
            if !rel.is_multiple_of(unit) {
                return Err(TokenError::OffGrid { tick });
            }
            Ok(rel / unit)
        };
        let mut items = Vec::new();
        for t in piece.tempo_events.iter().filter(|t| t.tick >= bar.start && t.tick < bar.end) {
            items.push(Item::Tempo(position(t.tick)?, config.tempo_bin(t.micros_per_quarter)));
        }
        if config.include_chords {
            for w in crate::music::extract_chord_windows(bar, crate::music::WindowPolicy::Beat) {
                items.push(Item::Chord(position(w.start - (w.start - bar.start) % unit)?, chord_label(&w.pitch_classes())));
            }
        }
        for n in &bar.notes {
            if n.duration % unit != 0 || n.duration / unit > config.max_duration_units as u64 {
                return Err(TokenError::Duration { ticks: n.duration, max_units: config.max_duration_units as u32 });
            }
            items.push(Item::Note(
                position(n.onset)?,
                instrument_code(n),
                n.pitch,
                config.velocity_bin(n.velocity),
                (n.duration / unit) as u16,
            ));
        }
        items.sort_by_key(Item::order);
        for item in items {
            match item {
                Item::Tempo(p, b) => out.extend([Token::Position(p as u16), Token::Tempo(b)]),
                Item::Chord(p, c) => out.extend([Token::Position(p as u16), Token::Chord(c)]),
                Item::Note(p, inst, pitch, vel, dur) => out.extend([
                    Token::Position(p as u16),
                    Token::Instrument(inst),
                    Token::Pitch(pitch),
                    Token::Velocity(vel),
                    Token::Duration(dur),
                ]),
            }
        }
    }
    out.push(Token::Eos);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Any grammar violation is an error.
    Strict,
    /// Malformed groups are dropped and counted.
    Tolerant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub piece: Piece,
    /// Number of malformed regions skipped in tolerant mode.
    pub warnings: usize,
}

#[derive(Clone, Copy)]
enum Pending {
    None,
    Position(u16),
    Instrument(u16, u8),
    Pitch(u16, u8, u8),
    Velocity(u16, u8, u8, u8),
}

/// Rebuilds a piece from tokens. Decoding stops at the first EOS.
pub fn decode(tokens: &[Token], config: &TokenizerConfig, mode: DecodeMode) -> Result<Decoded, TokenError> {
    let tpq = config.grid.ticks_per_quarter;
    let unit = config.unit();
    let mut piece = Piece::empty(tpq);
    let mut notes: Vec<Note> = Vec::new();
    let mut warnings = 0usize;
    let mut pending = Pending::None;
    // Waiting for the next Position/Bar/EOS after a malformed region.
    let mut resync = false;
    let mut awaiting_timesig = false;
    let mut current: Option<(u64, u64)> = None;
    let mut last_ts = TimeSignature::COMMON;
    let mut start_index = 0;
    if tokens.first() == Some(&Token::Bos) {
        start_index = 1;
    } else if mode == DecodeMode::Strict {
        return Err(grammar(0, tokens.first().copied().unwrap_or(Token::Eos)));
    }

    let push_bar = |piece: &mut Piece, ts: TimeSignature| -> (u64, u64) {
        let start = piece.end_tick();
        let end = start + ts.bar_ticks(tpq);
        piece.bars.push(Bar { index: piece.bars.len(), start, end, time_signature: ts, notes: Vec::new() });
        (start, end)
    };

    for (index, &tok) in tokens.iter().enumerate().skip(start_index) {
        if awaiting_timesig {
            awaiting_timesig = false;
            if let Token::TimeSig(ts) = tok {
                if ts.is_valid() {
                    last_ts = ts;
                    current = Some(push_bar(&mut piece, ts));
                    continue;
                }
            }
            if mode == DecodeMode::Strict {
                return Err(grammar(index, tok));
            }
            warnings += 1;
            current = Some(push_bar(&mut piece, last_ts));
        }
        let sync = matches!(tok, Token::Bar | Token::Eos | Token::Position(_));
        if resync && !sync {
            continue;
        }
        resync = false;
        if sync && !matches!(pending, Pending::None) {
            // An unfinished group before a new one.
            if mode == DecodeMode::Strict {
                return Err(grammar(index, tok));
            }
            warnings += 1;
            pending = Pending::None;
        }
        match tok {
            Token::Eos => break,
            Token::Bar => {
                awaiting_timesig = true;
                continue;
            }
            _ => {}
        }
        let Some((bar_start, bar_end)) = current else {
            if mode == DecodeMode::Strict {
                return Err(grammar(index, tok));
            }
            warnings += 1;
            resync = true;
            continue;
        };
        let next = match (pending, tok) {
            (Pending::None, Token::Position(p)) => {
                if bar_start + p as u64 * unit >= bar_end {
                    None
                } else {
                    Some(Pending::Position(p))
                }
            }
            (Pending::Position(p), Token::Tempo(b)) => {
                piece.tempo_events.push(TempoEvent { tick: bar_start + p as u64 * unit, micros_per_quarter: config.tempo_of_bin(b) });
                Some(Pending::None)
            }
            (Pending::Position(_), Token::Chord(_)) => Some(Pending::None),
            (Pending::Position(p), Token::Instrument(i)) if i <= DRUM_INSTRUMENT => Some(Pending::Instrument(p, i)),
            (Pending::Instrument(p, i), Token::Pitch(pitch)) if pitch <= 127 => Some(Pending::Pitch(p, i, pitch)),
            (Pending::Pitch(p, i, pitch), Token::Velocity(v)) if v < config.velocity_bins => {
                Some(Pending::Velocity(p, i, pitch, v))
            }
            (Pending::Velocity(p, i, pitch, v), Token::Duration(d)) if d >= 1 && d <= config.max_duration_units => {
                let drum = i == DRUM_INSTRUMENT;
                notes.push(Note {
                    onset: bar_start + p as u64 * unit,
                    duration: d as u64 * unit,
                    pitch,
                    velocity: config.velocity_of_bin(v),
                    instrument: if drum { 0 } else { i },
                    track: 0,
                    drum,
                });
                Some(Pending::None)
            }
            _ => None,
        };
        match next {
            Some(state) => pending = state,
            None => {
                if mode == DecodeMode::Strict {
                    return Err(grammar(index, tok));
                }
                warnings += 1;
                pending = Pending::None;
                resync = true;
            }
        }
    }
    if !matches!(pending, Pending::None) || awaiting_timesig {
        if mode == DecodeMode::Strict {
            return Err(grammar(tokens.len(), Token::Eos));
        }
        if awaiting_timesig {
            push_bar(&mut piece, last_ts);
        }
        warnings += 1;
    }

    let mut keys: Vec<(bool, u8)> = notes.iter().map(|n| (n.drum, n.instrument)).collect();
    keys.sort_unstable();
    keys.dedup();
    for n in notes {
        let idx = piece.bars.partition_point(|b| b.end <= n.onset);
        let track = keys.binary_search(&(n.drum, n.instrument)).expect("key collected above");
        piece.bars[idx].notes.push(Note { track, ..n });
    }
    for bar in &mut piece.bars {
        bar.notes.sort_by_key(Note::sort_key);
    }
    piece.tempo_events.sort_by_key(|t| t.tick);
    Ok(Decoded { piece, warnings })
}

fn grammar(index: usize, token: Token) -> TokenError {
    TokenError::Grammar { index, token: token.to_string() }
}

/// Incremental position in the token grammar that [`encode`] produces:
/// which tokens may come next so that the sequence stays in canonical
/// order (positions non-decreasing, items at one position ordered as
/// tempo, chord, then notes by pitch and instrument).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrammarCursor {
    expect: Expect,
    bar_positions: u64,
    position: u16,
    instrument: u8,
    /// Order key (position, kind, pitch, instrument) of the last item.
    last: Option<(u16, u8, u8, u8)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expect {
    Start,
    TimeSig,
    Item,
    AfterPosition,
    Pitch,
    Velocity,
    Duration,
    Done,
    /// The prefix already broke the grammar; anything goes.
    Lost,
}

impl GrammarCursor {
    pub fn new() -> Self {
        Self { expect: Expect::Start, bar_positions: 0, position: 0, instrument: 0, last: None }
    }

    /// Cursor after a prefix that starts with BOS.
    pub fn after(tokens: &[Token], config: &TokenizerConfig) -> Self {
        let mut c = Self::new();
        for (i, t) in tokens.iter().enumerate() {
            if i == 0 && *t == Token::Bos {
                continue;
            }
            c.advance(t, config);
        }
        c
    }

    pub fn advance(&mut self, tok: &Token, config: &TokenizerConfig) {
        if self.expect == Expect::Lost {
            return;
        }
        if !self.allows(tok, config) {
            self.expect = Expect::Lost;
            return;
        }
        self.expect = match *tok {
            Token::Bar => {
                self.last = None;
                Expect::TimeSig
            }
            Token::TimeSig(ts) => {
                self.bar_positions = config.positions_in_bar(ts);
                Expect::Item
            }
            Token::Position(p) => {
                self.position = p;
                Expect::AfterPosition
            }
            Token::Tempo(_) => {
                self.last = Some((self.position, 0, 0, 0));
                Expect::Item
            }
            Token::Chord(_) => {
                self.last = Some((self.position, 1, 0, 0));
                Expect::Item
            }
            Token::Instrument(i) => {
                self.instrument = i;
                Expect::Pitch
            }
            Token::Pitch(p) => {
                self.last = Some((self.position, 2, p, self.instrument));
                Expect::Velocity
            }
            Token::Velocity(_) => Expect::Duration,
            Token::Duration(_) => Expect::Item,
            Token::Eos => Expect::Done,
            _ => Expect::Lost,
        };
    }

    /// Whether the next token must be a time signature.
    pub fn expects_time_signature(&self) -> bool {
        self.expect == Expect::TimeSig
    }

    fn note_fits(&self, pitch: u8, instrument: u8) -> bool {
        match self.last {
            Some((lp, 2, lpitch, linst)) if lp == self.position => (pitch, instrument) > (lpitch, linst),
            _ => true,
        }
    }

    fn kind_fits(&self, kind: u8) -> bool {
        self.last.is_none_or(|(lp, lk, _, _)| (self.position, kind) > (lp, lk))
    }

    pub fn allows(&self, tok: &Token, config: &TokenizerConfig) -> bool {
        match (self.expect, *tok) {
            (Expect::Lost, _) => true,
            (Expect::Start, Token::Bar | Token::Eos) => true,
            (Expect::TimeSig, Token::TimeSig(_)) => true,
            (Expect::Item, Token::Bar | Token::Eos) => true,
            (Expect::Item, Token::Position(p)) => {
                (p as u64) < self.bar_positions
                    && match self.last {
                        None => true,
                        Some((lp, lk, lpitch, linst)) => p > lp || (p == lp && (lk < 2 || (lpitch, linst) < (127, 128))),
                    }
            }
            (Expect::AfterPosition, Token::Tempo(_)) => self.kind_fits(0),
            (Expect::AfterPosition, Token::Chord(_)) => config.include_chords && self.kind_fits(1),
            (Expect::AfterPosition, Token::Instrument(i)) => match self.last {
                Some((lp, 2, lpitch, linst)) if lp == self.position => lpitch < 127 || i > linst,
                _ => true,
            },
            (Expect::Pitch, Token::Pitch(p)) => self.note_fits(p, self.instrument),
            (Expect::Velocity, Token::Velocity(_)) => true,
            (Expect::Duration, Token::Duration(d)) => d >= 1 && d <= config.max_duration_units,
            _ => false,
        }
    }
}

impl Default for GrammarCursor {
    fn default() -> Self {
        Self::new()
    }
}

/// Half-open index ranges, one per Bar token, each running to the next Bar
/// token, the first EOS, or the end of the sequence.
pub fn bar_boundaries(tokens: &[Token]) -> Vec<Range<usize>> {
    let end = tokens.iter().position(|t| *t == Token::Eos).unwrap_or(tokens.len());
    let starts: Vec<usize> = tokens[..end].iter().enumerate().filter(|(_, t)| **t == Token::Bar).map(|(i, _)| i).collect();
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| s..starts.get(k + 1).copied().unwrap_or(end))
        .collect()
}
