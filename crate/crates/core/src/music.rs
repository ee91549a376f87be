//! Symbolic music data model: notes, bars, keys, pieces, bar segmentation and
//! chord windowing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tiv::ChromaVector;

#[derive(Debug, Error, PartialEq)]
pub enum MusicError {
    #[error("pitch class {0} is outside 0..=11")]
    PitchClass(i64),
    #[error("invalid note: {0}")]
    InvalidNote(String),
    #[error("invalid time signature {0}/{1}")]
    TimeSignature(u32, u32),
    #[error("time-signature list is empty")]
    NoTimeSignatures,
    #[error("first time signature must start at tick 0, found tick {0}")]
    TimeSignatureOffset(u64),
    #[error("ticks per quarter must be positive")]
    TicksPerQuarter,
    #[error("chord window holds no pitches")]
    EmptyWindow,
    #[error("unrecognised key {0:?}")]
    KeyName(String),
}

/// Pitch class, 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PitchClass(u8);

const PC_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

impl PitchClass {
    pub fn new(value: u8) -> Result<Self, MusicError> {
        if value < 12 {
            Ok(Self(value))
        } else {
            Err(MusicError::PitchClass(value as i64))
        }
    }

    /// Wraps any integer into 0..=11.
    pub fn wrapping(value: i64) -> Self {
        Self(value.rem_euclid(12) as u8)
    }

    pub fn of_midi(pitch: u8) -> Self {
        Self(pitch % 12)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transpose(self, semitones: i64) -> Self {
        Self::wrapping(self.0 as i64 + semitones)
    }

    pub fn name(self) -> &'static str {
        PC_NAMES[self.index()]
    }
}

impl TryFrom<u8> for PitchClass {
    type Error = MusicError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PitchClass> for u8 {
    fn from(pc: PitchClass) -> u8 {
        pc.0
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A sounding note. `instrument` is the General MIDI program; percussion
/// notes carry `drum = true` and are excluded from harmonic analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub onset: u64,
    pub duration: u64,
    pub pitch: u8,
    pub velocity: u8,
    pub instrument: u8,
    pub track: usize,
    #[serde(default)]
    pub drum: bool,
}

impl Note {
    pub fn new(onset: u64, duration: u64, pitch: u8, velocity: u8, instrument: u8) -> Result<Self, MusicError> {
        let note = Self { onset, duration, pitch, velocity, instrument, track: 0, drum: false };
        note.validate()?;
        Ok(note)
    }

    pub fn validate(&self) -> Result<(), MusicError> {
        if self.duration == 0 {
            return Err(MusicError::InvalidNote(format!("zero duration at tick {}", self.onset)));
        }
        if self.pitch > 127 {
            return Err(MusicError::InvalidNote(format!("pitch {} out of range", self.pitch)));
        }
        if !(1..=127).contains(&self.velocity) {
            return Err(MusicError::InvalidNote(format!("velocity {} out of range", self.velocity)));
        }
        if self.instrument > 127 {
            return Err(MusicError::InvalidNote(format!("program {} out of range", self.instrument)));
        }
        Ok(())
    }

    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }

    pub fn pitch_class(&self) -> PitchClass {
        PitchClass::of_midi(self.pitch)
    }

    pub fn sounds_in(&self, start: u64, end: u64) -> bool {
        self.onset < end && self.end() > start
    }

    /// Canonical ordering used everywhere notes are sorted.
    pub fn sort_key(&self) -> (u64, u8, bool, u8, u64, u8, usize) {
        (self.onset, self.pitch, self.drum, self.instrument, self.duration, self.velocity, self.track)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSignature {
    pub numerator: u32,
    pub denominator: u32,
}

impl TimeSignature {
    pub const COMMON: TimeSignature = TimeSignature { numerator: 4, denominator: 4 };

    pub fn new(numerator: u32, denominator: u32) -> Result<Self, MusicError> {
        let ts = Self { numerator, denominator };
        if ts.is_valid() {
            Ok(ts)
        } else {
            Err(MusicError::TimeSignature(numerator, denominator))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.numerator > 0 && matches!(self.denominator, 1 | 2 | 4 | 8 | 16 | 32)
    }

    pub fn beat_ticks(&self, ticks_per_quarter: u32) -> u64 {
        ticks_per_quarter as u64 * 4 / self.denominator as u64
    }

    pub fn bar_ticks(&self, ticks_per_quarter: u32) -> u64 {
        self.numerator as u64 * ticks_per_quarter as u64 * 4 / self.denominator as u64
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        Self::COMMON
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for TimeSignature {
    type Err = MusicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s.split_once('/').ok_or(MusicError::TimeSignature(0, 0))?;
        let n = n.trim().parse().map_err(|_| MusicError::TimeSignature(0, 0))?;
        let d = d.trim().parse().map_err(|_| MusicError::TimeSignature(n, 0))?;
        Self::new(n, d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bar {
    pub index: usize,
    pub start: u64,
    pub end: u64,
    pub time_signature: TimeSignature,
    pub notes: Vec<Note>,
}

impl Bar {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Distinct programs in the bar, drums reported as 128.
    pub fn instruments(&self) -> Vec<u8> {
        let mut programs: Vec<u8> = self.notes.iter().map(instrument_code).collect();
        programs.sort_unstable();
        programs.dedup();
        programs
    }
}

/// Program number with percussion folded to 128.
pub fn instrument_code(note: &Note) -> u8 {
    if note.drum {
        128
    } else {
        note.instrument
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key {
    pub tonic: PitchClass,
    pub mode: Mode,
}

impl Key {
    pub fn new(tonic: PitchClass, mode: Mode) -> Self {
        Self { tonic, mode }
    }

    pub fn major(tonic: u8) -> Self {
        Self::new(PitchClass::wrapping(tonic as i64), Mode::Major)
    }

    pub fn minor(tonic: u8) -> Self {
        Self::new(PitchClass::wrapping(tonic as i64), Mode::Minor)
    }

    pub fn transpose(self, semitones: i64) -> Self {
        Self::new(self.tonic.transpose(semitones), self.mode)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{} {}", self.tonic, mode)
    }
}

impl FromStr for Key {
    type Err = MusicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MusicError::KeyName(s.to_string());
        let mut parts = s.split_whitespace();
        let tonic = parts.next().ok_or_else(err)?;
        let mode = match parts.next().map(str::to_ascii_lowercase).as_deref() {
            Some("major") | None => Mode::Major,
            Some("minor") => Mode::Minor,
            _ => return Err(err()),
        };
        let idx = PC_NAMES.iter().position(|n| n.eq_ignore_ascii_case(tonic)).ok_or_else(err)?;
        Ok(Self::new(PitchClass(idx as u8), mode))
    }
}

/// A tempo change: tick and microseconds per quarter note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u64,
    pub micros_per_quarter: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub ticks_per_quarter: u32,
    pub bars: Vec<Bar>,
    pub tempo_events: Vec<TempoEvent>,
    pub key_estimate: Option<Key>,
}

impl Piece {
    pub fn empty(ticks_per_quarter: u32) -> Self {
        Self { ticks_per_quarter, bars: Vec::new(), tempo_events: Vec::new(), key_estimate: None }
    }

    /// Builds a piece from loose notes, segmenting them into bars.
    pub fn from_notes(
        notes: Vec<Note>,
        time_signatures: &[(u64, TimeSignature)],
        ticks_per_quarter: u32,
    ) -> Result<Self, MusicError> {
        let bars = segment_into_bars(&notes, time_signatures, ticks_per_quarter)?;
        Ok(Self { ticks_per_quarter, bars, tempo_events: Vec::new(), key_estimate: None })
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> + '_ {
        self.bars.iter().flat_map(|b| b.notes.iter())
    }

    pub fn note_count(&self) -> usize {
        self.bars.iter().map(|b| b.notes.len()).sum()
    }

    pub fn end_tick(&self) -> u64 {
        self.bars.last().map_or(0, |b| b.end)
    }

    /// Time-signature changes as `(tick, signature)`, one entry per change.
    pub fn time_signature_events(&self) -> Vec<(u64, TimeSignature)> {
        let mut events: Vec<(u64, TimeSignature)> = Vec::new();
        for bar in &self.bars {
            if events.last().map(|e| e.1) != Some(bar.time_signature) {
                events.push((bar.start, bar.time_signature));
            }
        }
        if events.is_empty() {
            events.push((0, TimeSignature::COMMON));
        }
        events
    }

    /// Distinct `(drum, program)` pairs, sorted.
    pub fn instrument_keys(&self) -> Vec<(bool, u8)> {
        let mut keys: Vec<(bool, u8)> = self.notes().map(|n| (n.drum, n.instrument)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// Shifts every non-drum pitch by `semitones`, dropping notes pushed out of
    /// the MIDI range.
    pub fn transposed(&self, semitones: i32) -> Piece {
        let mut out = self.clone();
        for bar in &mut out.bars {
            bar.notes.retain_mut(|n| {
                if n.drum {
                    return true;
                }
                let p = n.pitch as i32 + semitones;
                if (0..=127).contains(&p) {
                    n.pitch = p as u8;
                    true
                } else {
                    false
                }
            });
            bar.notes.sort_by_key(Note::sort_key);
        }
        out.key_estimate = self.key_estimate.map(|k| k.transpose(semitones as i64));
        out
    }

    /// Keeps only notes whose track satisfies `keep`.
    pub fn retain_tracks(&self, mut keep: impl FnMut(usize) -> bool) -> Piece {
        let mut out = self.clone();
        for bar in &mut out.bars {
            bar.notes.retain(|n| keep(n.track));
        }
        out
    }
}

/// Start/end/signature of every bar in a grid.
fn bar_grid(
    time_signatures: &[(u64, TimeSignature)],
    ticks_per_quarter: u32,
    mut need: impl FnMut(usize, u64) -> bool,
) -> Vec<(u64, u64, TimeSignature)> {
    let mut grid = Vec::new();
    let mut cursor = 0u64;
    let mut next_change = 0usize;
    let mut current = time_signatures[0].1;
    while need(grid.len(), cursor) {
        // A change takes effect at the first bar line at or after its tick.
        while next_change < time_signatures.len() && time_signatures[next_change].0 <= cursor {
            current = time_signatures[next_change].1;
            next_change += 1;
        }
        let len = current.bar_ticks(ticks_per_quarter).max(1);
        grid.push((cursor, cursor + len, current));
        cursor += len;
    }
    grid
}

fn check_grid_inputs(time_signatures: &[(u64, TimeSignature)], ticks_per_quarter: u32) -> Result<(), MusicError> {
    if ticks_per_quarter == 0 {
        return Err(MusicError::TicksPerQuarter);
    }
    let first = time_signatures.first().ok_or(MusicError::NoTimeSignatures)?;
    if first.0 != 0 {
        return Err(MusicError::TimeSignatureOffset(first.0));
    }
    for (_, ts) in time_signatures {
        if !ts.is_valid() {
            return Err(MusicError::TimeSignature(ts.numerator, ts.denominator));
        }
    }
    Ok(())
}

/// Splits notes into consecutive bars following the active time signature.
///
/// Bars run from tick 0 up to the bar holding the last onset. A signature
/// change that falls inside a bar takes effect at the next bar line.
pub fn segment_into_bars(
    notes: &[Note],
    time_signatures: &[(u64, TimeSignature)],
    ticks_per_quarter: u32,
) -> Result<Vec<Bar>, MusicError> {
    segment_into_bars_min(notes, time_signatures, ticks_per_quarter, 0)
}

/// Like [`segment_into_bars`] but always emits at least `min_bars` bars.
pub fn segment_into_bars_min(
    notes: &[Note],
    time_signatures: &[(u64, TimeSignature)],
    ticks_per_quarter: u32,
    min_bars: usize,
) -> Result<Vec<Bar>, MusicError> {
    check_grid_inputs(time_signatures, ticks_per_quarter)?;
    let last_onset = notes.iter().map(|n| n.onset).max();
    let grid = bar_grid(time_signatures, ticks_per_quarter, |count, cursor| {
        count < min_bars || last_onset.is_some_and(|t| cursor <= t)
    });
    let mut bars: Vec<Bar> = grid
        .into_iter()
        .enumerate()
        .map(|(index, (start, end, time_signature))| Bar { index, start, end, time_signature, notes: Vec::new() })
        .collect();
    for note in notes {
        let idx = bars.partition_point(|b| b.end <= note.onset);
        bars[idx].notes.push(*note);
    }
    for bar in &mut bars {
        bar.notes.sort_by_key(Note::sort_key);
    }
    Ok(bars)
}

/// How a bar is cut into chord windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowPolicy {
    #[default]
    Beat,
    HalfBar,
    FullBar,
}

impl FromStr for WindowPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beat" => Ok(Self::Beat),
            "half-bar" => Ok(Self::HalfBar),
            "full-bar" | "bar" => Ok(Self::FullBar),
            other => Err(format!("unknown window policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChromaWeighting {
    Count,
    #[default]
    Duration,
}

impl FromStr for ChromaWeighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(Self::Count),
            "duration" => Ok(Self::Duration),
            other => Err(format!("unknown chroma weighting {other:?}")),
        }
    }
}

/// A pitch sounding inside a window and for how many ticks of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundingPitch {
    pub pitch: u8,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordWindow {
    pub start: u64,
    pub end: u64,
    /// Sorted by pitch.
    pub pitches: Vec<SoundingPitch>,
}

impl ChordWindow {
    pub fn from_notes<'a>(start: u64, end: u64, notes: impl IntoIterator<Item = &'a Note>) -> Self {
        let mut pitches: Vec<SoundingPitch> = notes
            .into_iter()
            .filter(|n| !n.drum && n.sounds_in(start, end))
            .map(|n| SoundingPitch { pitch: n.pitch, ticks: n.end().min(end) - n.onset.max(start) })
            .collect();
        pitches.sort_by_key(|p| (p.pitch, p.ticks));
        Self { start, end, pitches }
    }

    /// Window from bare MIDI pitches, each sounding for the whole span.
    pub fn from_pitches(start: u64, end: u64, pitches: &[u8]) -> Self {
        let mut pitches: Vec<SoundingPitch> =
            pitches.iter().map(|&pitch| SoundingPitch { pitch, ticks: end - start }).collect();
        pitches.sort_by_key(|p| (p.pitch, p.ticks));
        Self { start, end, pitches }
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }

    /// Pitch-class multiset, sorted.
    pub fn pitch_classes(&self) -> Vec<u8> {
        let mut pcs: Vec<u8> = self.pitches.iter().map(|p| p.pitch % 12).collect();
        pcs.sort_unstable();
        pcs
    }

    pub fn midi_pitches(&self) -> Vec<u8> {
        self.pitches.iter().map(|p| p.pitch).collect()
    }
}

fn window_bounds(start: u64, end: u64, numerator: u32, policy: WindowPolicy) -> Vec<(u64, u64)> {
    let len = end - start;
    let step = match policy {
        WindowPolicy::Beat => len / numerator.max(1) as u64,
        WindowPolicy::HalfBar => len / 2,
        WindowPolicy::FullBar => len,
    }
    .max(1);
    let mut out = Vec::new();
    let mut s = start;
    while s < end {
        let e = (s + step).min(end);
        out.push((s, e));
        s = e;
    }
    out
}

/// Chord windows of a single bar, using only the bar's own notes.
/// Windows with nothing sounding are omitted.
pub fn extract_chord_windows(bar: &Bar, policy: WindowPolicy) -> Vec<ChordWindow> {
    window_bounds(bar.start, bar.end, bar.time_signature.numerator, policy)
        .into_iter()
        .map(|(s, e)| ChordWindow::from_notes(s, e, &bar.notes))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Chord windows for every bar of a piece, including notes held over from
/// earlier bars.
pub fn piece_chord_windows(piece: &Piece, policy: WindowPolicy) -> Vec<Vec<ChordWindow>> {
    let mut pitched: Vec<&Note> = piece.notes().filter(|n| !n.drum).collect();
    pitched.sort_by_key(|n| n.sort_key());
    let mut active: Vec<&Note> = Vec::new();
    let mut next = 0usize;
    piece
        .bars
        .iter()
        .map(|bar| {
            while next < pitched.len() && pitched[next].onset < bar.end {
                active.push(pitched[next]);
                next += 1;
            }
            active.retain(|n| n.end() > bar.start);
            window_bounds(bar.start, bar.end, bar.time_signature.numerator, policy)
                .into_iter()
                .map(|(s, e)| ChordWindow::from_notes(s, e, active.iter().copied()))
                .filter(|w| !w.is_empty())
                .collect()
        })
        .collect()
}

/// Twelve-bin pitch-class profile of a window.
pub fn chroma_of<T: Scalar>(window: &ChordWindow, weighting: ChromaWeighting) -> Result<ChromaVector<T>, MusicError> {
    if window.is_empty() {
        return Err(MusicError::EmptyWindow);
    }
    let mut bins = [T::zero(); 12];
    for p in &window.pitches {
        let w = match weighting {
            ChromaWeighting::Count => T::one(),
            ChromaWeighting::Duration => T::from_u64(p.ticks).unwrap_or_else(T::zero),
        };
        bins[(p.pitch % 12) as usize] = bins[(p.pitch % 12) as usize] + w;
    }
    Ok(ChromaVector::new(bins))
}

/// Fixed tick grid applied on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub ticks_per_quarter: u32,
    pub positions_per_quarter: u32,
}

impl Default for Grid {
    fn default() -> Self {
        Self { ticks_per_quarter: 480, positions_per_quarter: 4 }
    }
}

impl Grid {
    pub fn unit(&self) -> u64 {
        (self.ticks_per_quarter / self.positions_per_quarter).max(1) as u64
    }
}

fn rescale(t: u64, from: u32, to: u32) -> u64 {
    if from == to {
        return t;
    }
    (t * to as u64 + from as u64 / 2) / from as u64
}

fn snap(t: u64, bars: &[(u64, u64, TimeSignature)], unit: u64) -> u64 {
    let idx = bars.partition_point(|b| b.1 <= t).min(bars.len().saturating_sub(1));
    let Some(&(start, end, _)) = bars.get(idx) else { return t };
    let pos = (t.saturating_sub(start) + unit / 2) / unit;
    (start + pos * unit).min(end)
}

/// Rescales a piece to the grid's resolution and snaps onsets, durations and
/// tempo changes to grid positions relative to each bar. Identical notes
/// (same onset, pitch and instrument) are merged. The bar count never shrinks.
pub fn quantize(piece: &Piece, grid: &Grid) -> Result<Piece, MusicError> {
    let from = piece.ticks_per_quarter;
    if from == 0 || grid.ticks_per_quarter == 0 || grid.positions_per_quarter == 0 {
        return Err(MusicError::TicksPerQuarter);
    }
    let to = grid.ticks_per_quarter;
    let unit = grid.unit();
    let ts_events: Vec<(u64, TimeSignature)> =
        piece.time_signature_events().into_iter().map(|(t, ts)| (rescale(t, from, to), ts)).collect();
    check_grid_inputs(&ts_events, to)?;

    let last = piece.notes().map(|n| rescale(n.onset, from, to)).max();
    let min_bars = piece.bars.len();
    let grid_bars = bar_grid(&ts_events, to, |count, cursor| {
        count < min_bars || last.is_some_and(|t| cursor <= t + unit)
    });

    let mut notes: Vec<Note> = piece
        .notes()
        .map(|n| {
            let mut q = *n;
            q.onset = snap(rescale(n.onset, from, to), &grid_bars, unit);
            let dur = rescale(n.duration, from, to);
            q.duration = ((dur + unit / 2) / unit).max(1) * unit;
            q
        })
        .collect();
    notes.sort_by_key(Note::sort_key);
    let mut merged: Vec<Note> = Vec::with_capacity(notes.len());
    for n in notes {
        match merged.last_mut() {
            Some(m) if m.onset == n.onset && m.pitch == n.pitch && m.drum == n.drum && m.instrument == n.instrument => {
                m.duration = m.duration.max(n.duration);
                m.velocity = m.velocity.max(n.velocity);
                m.track = m.track.min(n.track);
            }
            _ => merged.push(n),
        }
    }

    let bars = segment_into_bars_min(&merged, &ts_events, to, min_bars)?;
    let end = bars.last().map_or(0, |b| b.end);
    let mut tempo_events: Vec<TempoEvent> = Vec::new();
    for ev in &piece.tempo_events {
        let tick = snap(rescale(ev.tick, from, to), &grid_bars, unit);
        if tick >= end && tick > 0 {
            continue;
        }
        tempo_events.push(TempoEvent { tick, micros_per_quarter: ev.micros_per_quarter });
    }
    // Stable sort, then the last event at a tick wins.
    tempo_events.sort_by_key(|e| e.tick);
    tempo_events.dedup_by(|later, earlier| {
        let same = later.tick == earlier.tick;
        if same {
            earlier.micros_per_quarter = later.micros_per_quarter;
        }
        same
    });
    Ok(Piece { ticks_per_quarter: to, bars, tempo_events, key_estimate: piece.key_estimate })
}
