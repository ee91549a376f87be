//! Standard MIDI File reading and writing, chord-track filtering, and the
//! corpus manifest.
//!
//! Byte-level chunk and event decoding is delegated to `midly`; this module
//! resolves note pairs, instrument state and meta events into a [`Piece`].

use std::collections::{BTreeMap, HashMap};

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{quantize, Grid, MusicError, Note, Piece, TempoEvent, TimeSignature};

pub const DRUM_CHANNEL: u8 = 9;

#[derive(Debug, Error, PartialEq)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated {chunk} chunk: declares {declared} bytes, {available} available")]
    Truncated { chunk: String, declared: usize, available: usize },
    #[error("unsupported MIDI format {0} (only 0 and 1)")]
    UnsupportedFormat(u16),
    #[error("SMPTE timecode timing is not supported")]
    Timecode,
    #[error("malformed MIDI data: {0}")]
    Malformed(String),
    #[error("cannot write: {0}")]
    Unwritable(String),
    #[error(transparent)]
    Music(#[from] MusicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawEventKind {
    NoteOn { pitch: u8, velocity: u8 },
    NoteOff { pitch: u8 },
    Tempo { micros_per_quarter: u32 },
    TimeSignature { numerator: u8, denominator_power: u8 },
    ProgramChange { program: u8 },
}

/// A musically relevant event with its absolute tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMidiEvent {
    pub tick: u64,
    pub channel: u8,
    #[serde(flatten)]
    pub kind: RawEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawMidi {
    pub format: u16,
    pub ticks_per_quarter: u32,
    /// One event list per track, ticks non-decreasing. Also records where each
    /// track ends.
    pub tracks: Vec<(Vec<RawMidiEvent>, u64)>,
}

/// Validates the chunk structure so truncation is reported rather than
/// silently tolerated.
fn check_chunks(bytes: &[u8]) -> Result<(), MidiError> {
    if bytes.len() < 14 || &bytes[..4] != b"MThd" {
        return Err(MidiError::Header("missing MThd chunk".into()));
    }
    let len = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if len < 6 {
        return Err(MidiError::Header(format!("header length {len} is shorter than 6")));
    }
    let mut pos = 8usize.checked_add(len).filter(|&p| p <= bytes.len()).ok_or_else(|| MidiError::Truncated {
        chunk: "MThd".into(),
        declared: len,
        available: bytes.len() - 8,
    })?;
    let declared_tracks = u16::from_be_bytes([bytes[10], bytes[11]]) as usize;
    let mut seen = 0usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(MidiError::Truncated { chunk: "chunk header".into(), declared: 8, available: bytes.len() - pos });
        }
        let id = String::from_utf8_lossy(&bytes[pos..pos + 4]).into_owned();
        let len = u32::from_be_bytes([bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]]) as usize;
        let available = bytes.len() - pos - 8;
        if len > available {
            return Err(MidiError::Truncated { chunk: id, declared: len, available });
        }
        if id == "MTrk" {
            seen += 1;
        }
        pos += 8 + len;
    }
    if seen < declared_tracks {
        return Err(MidiError::Truncated {
            chunk: "MTrk".into(),
            declared: declared_tracks,
            available: seen,
        });
    }
    Ok(())
}

/// Decodes an SMF into absolute-tick events per track.
pub fn read_events(bytes: &[u8]) -> Result<RawMidi, MidiError> {
    check_chunks(bytes)?;
    let smf = Smf::parse(bytes).map_err(|e| MidiError::Malformed(e.to_string()))?;
    let format = match smf.header.format {
        Format::SingleTrack => 0,
        Format::Parallel => 1,
        Format::Sequential => return Err(MidiError::UnsupportedFormat(2)),
    };
    let ticks_per_quarter = match smf.header.timing {
        Timing::Metrical(t) => t.as_int() as u32,
        Timing::Timecode(..) => return Err(MidiError::Timecode),
    };
    if ticks_per_quarter == 0 {
        return Err(MidiError::Header("zero ticks per quarter".into()));
    }
    let tracks = smf
        .tracks
        .iter()
        .map(|track| {
            let mut tick = 0u64;
            let mut events = Vec::new();
            for ev in track {
                tick += ev.delta.as_int() as u64;
                let decoded = match ev.kind {
                    TrackEventKind::Midi { channel, message } => {
                        let channel = channel.as_int();
                        let kind = match message {
                            MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => {
                                Some(RawEventKind::NoteOn { pitch: key.as_int(), velocity: vel.as_int() })
                            }
                            MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => {
                                Some(RawEventKind::NoteOff { pitch: key.as_int() })
                            }
                            MidiMessage::ProgramChange { program } => {
                                Some(RawEventKind::ProgramChange { program: program.as_int() })
                            }
                            _ => None,
                        };
                        kind.map(|kind| RawMidiEvent { tick, channel, kind })
                    }
                    TrackEventKind::Meta(MetaMessage::Tempo(t)) => {
                        Some(RawMidiEvent { tick, channel: 0, kind: RawEventKind::Tempo { micros_per_quarter: t.as_int() } })
                    }
                    TrackEventKind::Meta(MetaMessage::TimeSignature(n, d, _, _)) => Some(RawMidiEvent {
                        tick,
                        channel: 0,
                        kind: RawEventKind::TimeSignature { numerator: n, denominator_power: d },
                    }),
                    _ => None,
                };
                events.extend(decoded);
            }
            (events, tick)
        })
        .collect();
    Ok(RawMidi { format, ticks_per_quarter, tracks })
}

/// Non-fatal problems found while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MidiWarning {
    /// A note-on without note-off, closed at the end of its track.
    UnmatchedNoteOn { track: usize, channel: u8, pitch: u8, tick: u64 },
    /// A note-off with nothing sounding.
    StrayNoteOff { track: usize, channel: u8, pitch: u8, tick: u64 },
    /// A note whose on and off fall on the same tick.
    ZeroLengthNote { track: usize, channel: u8, pitch: u8, tick: u64 },
    InvalidTimeSignature { tick: u64, numerator: u8, denominator_power: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMidi {
    pub piece: Piece,
    pub warnings: Vec<MidiWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Grid applied after parsing; `None` keeps the file's own ticks.
    pub grid: Option<Grid>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { grid: Some(Grid::default()) }
    }
}

pub fn parse_midi(bytes: &[u8]) -> Result<ParsedMidi, MidiError> {
    parse_midi_with(bytes, &ParseOptions::default())
}

struct OpenNote {
    onset: u64,
    velocity: u8,
    program: u8,
    depth: u32,
}

pub fn parse_midi_with(bytes: &[u8], options: &ParseOptions) -> Result<ParsedMidi, MidiError> {
    let raw = read_events(bytes)?;
    let mut warnings = Vec::new();
    let mut notes = Vec::new();
    let mut tempos = Vec::new();
    let mut signatures: Vec<(u64, TimeSignature)> = Vec::new();

    for (track_idx, (events, track_end)) in raw.tracks.iter().enumerate() {
        let mut programs = [0u8; 16];
        // Overlapping notes of one pitch on one channel merge into a single
        // note from the first onset to the last release.
        let mut open: HashMap<(u8, u8), OpenNote> = HashMap::new();
        let close = |channel: u8, pitch: u8, o: OpenNote, end: u64, warnings: &mut Vec<MidiWarning>, notes: &mut Vec<Note>| {
            let track = if raw.format == 0 { channel as usize } else { track_idx };
            if end <= o.onset {
                warnings.push(MidiWarning::ZeroLengthNote { track, channel, pitch, tick: o.onset });
                return;
            }
            notes.push(Note {
                onset: o.onset,
                duration: end - o.onset,
                pitch,
                velocity: o.velocity,
                instrument: o.program,
                track,
                drum: channel == DRUM_CHANNEL,
            });
        };
        for ev in events {
            match ev.kind {
                RawEventKind::NoteOn { pitch, velocity } => {
                    let slot = open.entry((ev.channel, pitch)).or_insert(OpenNote {
                        onset: ev.tick,
                        velocity,
                        program: programs[ev.channel as usize],
                        depth: 0,
                    });
                    slot.depth += 1;
                }
                RawEventKind::NoteOff { pitch } => match open.get_mut(&(ev.channel, pitch)) {
                    Some(o) if o.depth > 1 => o.depth -= 1,
                    Some(_) => {
                        let o = open.remove(&(ev.channel, pitch)).expect("present");
                        close(ev.channel, pitch, o, ev.tick, &mut warnings, &mut notes);
                    }
                    None => warnings.push(MidiWarning::StrayNoteOff {
                        track: track_idx,
                        channel: ev.channel,
                        pitch,
                        tick: ev.tick,
                    }),
                },
                RawEventKind::ProgramChange { program } => programs[ev.channel as usize] = program,
                RawEventKind::Tempo { micros_per_quarter } => {
                    tempos.push(TempoEvent { tick: ev.tick, micros_per_quarter })
                }
                RawEventKind::TimeSignature { numerator, denominator_power } => {
                    let ts = (denominator_power <= 5)
                        .then(|| TimeSignature::new(numerator as u32, 1 << denominator_power).ok())
                        .flatten();
                    match ts {
                        Some(ts) => signatures.push((ev.tick, ts)),
                        None => warnings.push(MidiWarning::InvalidTimeSignature {
                            tick: ev.tick,
                            numerator,
                            denominator_power,
                        }),
                    }
                }
            }
        }
        let mut leftovers: Vec<((u8, u8), OpenNote)> = open.into_iter().collect();
        leftovers.sort_by_key(|((c, p), o)| (o.onset, *c, *p));
        for ((channel, pitch), o) in leftovers {
            let track = if raw.format == 0 { channel as usize } else { track_idx };
            warnings.push(MidiWarning::UnmatchedNoteOn { track, channel, pitch, tick: o.onset });
            close(channel, pitch, o, *track_end, &mut warnings, &mut notes);
        }
    }

    signatures.sort_by_key(|s| s.0);
    // Several signatures on one tick: the last one read wins.
    signatures.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 = later.1;
            true
        } else {
            false
        }
    });
    if signatures.first().is_none_or(|s| s.0 != 0) {
        signatures.insert(0, (0, TimeSignature::COMMON));
    }
    tempos.sort_by_key(|t| t.tick);
    notes.sort_by_key(Note::sort_key);

    let mut piece = Piece::from_notes(notes, &signatures, raw.ticks_per_quarter)?;
    piece.tempo_events = tempos;
    if let Some(grid) = options.grid {
        piece = quantize(&piece, &grid)?;
    }
    Ok(ParsedMidi { piece, warnings })
}

fn channel_for(index: usize, drum: bool) -> u8 {
    if drum {
        return DRUM_CHANNEL;
    }
    let c = (index % 15) as u8;
    if c >= DRUM_CHANNEL {
        c + 1
    } else {
        c
    }
}

/// Writes a format-1 file: meta events in track 0, then one track per
/// `(drum, program)` pair.
pub fn write_midi(piece: &Piece) -> Result<Vec<u8>, MidiError> {
    let tpq = u15::try_from(u16::try_from(piece.ticks_per_quarter).unwrap_or(u16::MAX))
        .filter(|t| t.as_int() > 0)
        .ok_or_else(|| MidiError::Unwritable(format!("ticks per quarter {} out of range", piece.ticks_per_quarter)))?;
    for note in piece.notes() {
        note.validate().map_err(|e| MidiError::Unwritable(e.to_string()))?;
    }

    let mut meta: Vec<(u64, u8, TrackEventKind<'static>)> = Vec::new();
    for (tick, ts) in piece.time_signature_events() {
        let power = ts.denominator.trailing_zeros() as u8;
        let numerator = u8::try_from(ts.numerator)
            .map_err(|_| MidiError::Unwritable(format!("time signature numerator {} too large", ts.numerator)))?;
        meta.push((tick, 0, TrackEventKind::Meta(MetaMessage::TimeSignature(numerator, power, 24, 8))));
    }
    for t in &piece.tempo_events {
        let micros = u24::try_from(t.micros_per_quarter)
            .ok_or_else(|| MidiError::Unwritable(format!("tempo {} out of range", t.micros_per_quarter)))?;
        meta.push((t.tick, 1, TrackEventKind::Meta(MetaMessage::Tempo(micros))));
    }
    meta.sort_by_key(|e| (e.0, e.1));

    let mut tracks = vec![to_track(meta.into_iter().map(|(t, _, k)| (t, k)).collect())];
    let mut by_instrument: BTreeMap<(bool, u8), Vec<&Note>> = BTreeMap::new();
    for n in piece.notes() {
        by_instrument.entry((n.drum, n.instrument)).or_default().push(n);
    }
    let mut melodic = 0usize;
    for ((drum, program), notes) in by_instrument {
        let channel = channel_for(melodic, drum);
        if !drum {
            melodic += 1;
        }
        let ch = u4::new(channel);
        // Releases sort before attacks on the same tick.
        let mut events: Vec<(u64, u8, u8, TrackEventKind<'static>)> = vec![(
            0,
            0,
            0,
            TrackEventKind::Midi { channel: ch, message: MidiMessage::ProgramChange { program: u7::new(program) } },
        )];
        for n in notes {
            events.push((
                n.onset,
                2,
                n.pitch,
                TrackEventKind::Midi { channel: ch, message: MidiMessage::NoteOn { key: u7::new(n.pitch), vel: u7::new(n.velocity) } },
            ));
            events.push((
                n.end(),
                1,
                n.pitch,
                TrackEventKind::Midi { channel: ch, message: MidiMessage::NoteOff { key: u7::new(n.pitch), vel: u7::new(0) } },
            ));
        }
        events.sort_by_key(|e| (e.0, e.1, e.2));
        tracks.push(to_track(events.into_iter().map(|(t, _, _, k)| (t, k)).collect()));
    }

    let smf = Smf { header: Header::new(Format::Parallel, Timing::Metrical(tpq)), tracks };
    let mut out = Vec::new();
    smf.write_std(&mut out).map_err(|e| MidiError::Unwritable(e.to_string()))?;
    Ok(out)
}

fn to_track(events: Vec<(u64, TrackEventKind<'static>)>) -> Vec<TrackEvent<'static>> {
    let mut out = Vec::with_capacity(events.len() + 1);
    let mut last = 0u64;
    for (tick, kind) in events {
        out.push(TrackEvent { delta: delta(tick - last), kind });
        last = tick;
    }
    out.push(TrackEvent { delta: u28::new(0), kind: TrackEventKind::Meta(MetaMessage::EndOfTrack) });
    out
}

fn delta(ticks: u64) -> u28 {
    u28::try_from(u32::try_from(ticks).unwrap_or(u32::MAX)).unwrap_or(u28::max_value())
}

/// Share of a track's onset instants at which at least three of its notes
/// sound together.
pub fn polyphony_ratio<'a>(notes: impl IntoIterator<Item = &'a Note>) -> f64 {
    let notes: Vec<&Note> = notes.into_iter().collect();
    let mut onsets: Vec<u64> = notes.iter().map(|n| n.onset).collect();
    onsets.sort_unstable();
    onsets.dedup();
    if onsets.is_empty() {
        return 0.0;
    }
    let chordal = onsets
        .iter()
        .filter(|&&t| notes.iter().filter(|n| n.onset <= t && n.end() > t).count() >= 3)
        .count();
    chordal as f64 / onsets.len() as f64
}

/// Tracks whose polyphony ratio reaches `min_ratio`, ascending. Percussion is
/// never retained.
pub fn chord_tracks(piece: &Piece, min_ratio: f64) -> Vec<usize> {
    let mut by_track: BTreeMap<usize, Vec<&Note>> = BTreeMap::new();
    for n in piece.notes().filter(|n| !n.drum) {
        by_track.entry(n.track).or_default().push(n);
    }
    by_track
        .into_iter()
        .filter(|(_, notes)| polyphony_ratio(notes.iter().copied()) >= min_ratio)
        .map(|(t, _)| t)
        .collect()
}

/// Keeps only chord-carrying tracks, or `None` when there are none. The bar
/// grid of the piece is left unchanged.
pub fn filter_chord_tracks(piece: &Piece, min_ratio: f64) -> Option<Piece> {
    let keep = chord_tracks(piece, min_ratio);
    if keep.is_empty() {
        return None;
    }
    let mut out = piece.clone();
    for bar in &mut out.bars {
        bar.notes.retain(|n| !n.drum && keep.binary_search(&n.track).is_ok());
    }
    Some(out)
}

pub const DEFAULT_MIN_POLYPHONY: f64 = 0.3;

/// One line of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bar_count: usize,
    pub key_estimate: Option<String>,
    pub retained_tracks: Vec<usize>,
}

impl ManifestEntry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest entries serialize")
    }
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| e.to_json_line() + "\n").collect()
}

pub fn read_manifest(text: &str) -> Result<Vec<ManifestEntry>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled SMF bytes, independent of the writer.
    fn smf(format: u16, tpq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend(6u32.to_be_bytes());
        out.extend(format.to_be_bytes());
        out.extend((tracks.len() as u16).to_be_bytes());
        out.extend(tpq.to_be_bytes());
        for t in tracks {
            out.extend(b"MTrk");
            out.extend((t.len() as u32 + 4).to_be_bytes());
            out.extend(t);
            out.extend([0x00, 0xFF, 0x2F, 0x00]);
        }
        out
    }

    fn vlq(mut v: u32) -> Vec<u8> {
        let mut bytes = vec![(v & 0x7F) as u8];
        v >>= 7;
        while v > 0 {
            bytes.push(((v & 0x7F) as u8) | 0x80);
            v >>= 7;
        }
        bytes.reverse();
        bytes
    }

    fn ev(delta: u32, data: &[u8]) -> Vec<u8> {
        let mut out = vlq(delta);
        out.extend(data);
        out
    }

    #[test]
    fn single_quarter_note() {
        let track = [ev(0, &[0x90, 60, 100]), ev(480, &[0x80, 60, 0])].concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        let notes: Vec<&Note> = parsed.piece.notes().collect();
        assert_eq!(notes.len(), 1);
        assert_eq!((notes[0].pitch, notes[0].duration, notes[0].velocity), (60, 480, 100));
        assert_eq!(parsed.piece.bars[0].time_signature, TimeSignature::COMMON);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn velocity_zero_is_release_and_ticks_rescale() {
        let track = [ev(0, &[0x90, 64, 90]), ev(96, &[0x90, 64, 0])].concat();
        let parsed = parse_midi(&smf(0, 96, &[track])).unwrap();
        let n = parsed.piece.notes().next().unwrap();
        assert_eq!((n.duration, parsed.piece.ticks_per_quarter), (480, 480));
    }

    #[test]
    fn unmatched_note_closes_at_track_end() {
        let track = [ev(0, &[0x90, 60, 100]), ev(960, &[0xFF, 0x01, 0x00])].concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(parsed.piece.notes().next().unwrap().duration, 960);
        assert!(matches!(parsed.warnings[0], MidiWarning::UnmatchedNoteOn { pitch: 60, .. }));
    }

    #[test]
    fn overlapping_same_pitch_notes_merge() {
        let track =
            [ev(0, &[0x90, 60, 100]), ev(240, &[0x90, 60, 80]), ev(240, &[0x80, 60, 0]), ev(480, &[0x80, 60, 0])].concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        let notes: Vec<&Note> = parsed.piece.notes().collect();
        assert_eq!(notes.len(), 1);
        assert_eq!((notes[0].onset, notes[0].duration), (0, 960));
    }

    #[test]
    fn programs_drums_and_meta() {
        let meta = [ev(0, &[0xFF, 0x58, 0x04, 3, 2, 24, 8]), ev(0, &[0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20])].concat();
        let keys = [ev(0, &[0xC0, 33]), ev(0, &[0x90, 40, 70]), ev(480, &[0x80, 40, 0])].concat();
        let drums = [ev(0, &[0x99, 36, 110]), ev(120, &[0x89, 36, 0])].concat();
        let parsed = parse_midi(&smf(1, 480, &[meta, keys, drums])).unwrap();
        let p = &parsed.piece;
        assert_eq!(p.bars[0].time_signature, TimeSignature::new(3, 4).unwrap());
        assert_eq!(p.tempo_events, vec![TempoEvent { tick: 0, micros_per_quarter: 500_000 }]);
        let notes: Vec<&Note> = p.notes().collect();
        assert_eq!(notes.len(), 2);
        let bass = notes.iter().find(|n| n.pitch == 40).unwrap();
        assert_eq!((bass.instrument, bass.track, bass.drum), (33, 1, false));
        let kick = notes.iter().find(|n| n.pitch == 36).unwrap();
        assert!(kick.drum);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_midi(b"RIFF0000000000"), Err(MidiError::Header(_))));
        assert!(matches!(parse_midi(b""), Err(MidiError::Header(_))));
        let mut bytes = smf(0, 480, &[[ev(0, &[0x90, 60, 100]), ev(480, &[0x80, 60, 0])].concat()]);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(parse_midi(&bytes), Err(MidiError::Truncated { .. })));
        let two = smf(2, 480, &[vec![]]);
        assert_eq!(parse_midi(&two), Err(MidiError::UnsupportedFormat(2)));
    }

    #[test]
    fn empty_piece_writes_meta_track_only() {
        let bytes = write_midi(&Piece::empty(480)).unwrap();
        assert_eq!(&bytes[..4], b"MThd");
        let raw = read_events(&bytes).unwrap();
        assert_eq!(raw.tracks.len(), 1);
        assert_eq!(parse_midi(&bytes).unwrap().piece.note_count(), 0);
    }

    #[test]
    fn two_instruments_two_tracks() {
        let mut a = Note::new(0, 480, 60, 90, 0).unwrap();
        a.track = 0;
        let b = Note::new(0, 960, 36, 70, 33).unwrap();
        let piece = Piece::from_notes(vec![a, b], &[(0, TimeSignature::COMMON)], 480).unwrap();
        let raw = read_events(&write_midi(&piece).unwrap()).unwrap();
        assert_eq!(raw.tracks.len(), 3);
        let programs: Vec<u8> = raw.tracks[1..]
            .iter()
            .map(|(evs, _)| match evs[0].kind {
                RawEventKind::ProgramChange { program } => program,
                _ => panic!("program change first"),
            })
            .collect();
        assert_eq!(programs, vec![0, 33]);
    }

    fn pad_and_melody() -> Piece {
        let mut notes = Vec::new();
        for bar in 0..2u64 {
            for p in [60, 64, 67] {
                let mut n = Note::new(bar * 1920, 1920, p, 80, 48).unwrap();
                n.track = 1;
                notes.push(n);
            }
            for i in 0..4 {
                let mut n = Note::new(bar * 1920 + i * 480, 480, 72 + i as u8, 90, 73).unwrap();
                n.track = 2;
                notes.push(n);
            }
        }
        Piece::from_notes(notes, &[(0, TimeSignature::COMMON)], 480).unwrap()
    }

    #[test]
    fn pad_kept_melody_dropped() {
        let p = pad_and_melody();
        let f = filter_chord_tracks(&p, 0.3).unwrap();
        assert!(f.notes().all(|n| n.track == 1));
        assert_eq!(f.bars.len(), p.bars.len());
        assert_eq!(filter_chord_tracks(&f, 0.3).unwrap(), f);
    }

    #[test]
    fn monophonic_has_no_chord_tracks() {
        let p = pad_and_melody().retain_tracks(|t| t == 2);
        assert!(filter_chord_tracks(&p, 0.3).is_none());
        assert_eq!(chord_tracks(&pad_and_melody(), 0.0), vec![1, 2]);
    }

    #[test]
    fn manifest_lines() {
        let e = ManifestEntry { path: "a.mid".into(), bar_count: 4, key_estimate: Some("C major".into()), retained_tracks: vec![1] };
        let text = write_manifest(&[e.clone(), e.clone()]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_manifest(&text).unwrap(), vec![e.clone(), e]);
    }
}
