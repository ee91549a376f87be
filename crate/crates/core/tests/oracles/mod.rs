#![allow(dead_code)]
//! Independent reference implementations shared by the integration tests
//! and the acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tension_core::music::{Note, Piece, TempoEvent, TimeSignature};
use tension_core::voiceleading::interval_class;

/// Perceptual weights of the six DFT coefficients.
pub const WEIGHTS: [f64; 6] = [2.0, 11.0, 17.0, 16.0, 19.0, 7.0];

/// Weighted DFT coefficients 1..=6 of the unit-sum chroma, summed term by
/// term with `cos`/`sin` of the unreduced phase.
pub fn dft_tiv(chroma: &[f64; 12], weights: &[f64; 6]) -> [(f64, f64); 6] {
    let total: f64 = chroma.iter().sum();
    let mut out = [(0.0, 0.0); 6];
    for (k, slot) in out.iter_mut().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, c) in chroma.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * ((k + 1) * n) as f64 / 12.0;
            re += c / total * phase.cos();
            im += c / total * phase.sin();
        }
        *slot = (weights[k] * re, weights[k] * im);
    }
    out
}

/// `1 - |T| / |w|` from the oracle coefficients.
pub fn dft_dissonance(chroma: &[f64; 12], weights: &[f64; 6]) -> f64 {
    let norm = dft_tiv(chroma, weights).iter().map(|(re, im)| re * re + im * im).sum::<f64>().sqrt();
    let max = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    1.0 - norm / max
}

pub fn chroma_of(pcs: &[u8]) -> [f64; 12] {
    let mut c = [0.0; 12];
    for &p in pcs {
        c[p as usize % 12] += 1.0;
    }
    c
}

/// Minimum over every edge subset of the complete bipartite graph that
/// touches each source and each target note.
pub fn brute_force_vl(source: &[u8], target: &[u8]) -> u32 {
    let (n, m) = (source.len(), target.len());
    let edges: Vec<(usize, usize, u32)> =
        (0..n).flat_map(|i| (0..m).map(move |j| (i, j, interval_class(source[i], target[j])))).collect();
    let mut best = u32::MAX;
    for mask in 1u32..(1 << edges.len()) {
        let (mut rows, mut cols, mut cost) = (0u32, 0u32, 0u32);
        for (e, &(i, j, c)) in edges.iter().enumerate() {
            if mask >> e & 1 == 1 {
                rows |= 1 << i;
                cols |= 1 << j;
                cost += c;
            }
        }
        if rows == (1 << n) - 1 && cols == (1 << m) - 1 {
            best = best.min(cost);
        }
    }
    best
}

/// Every pitch-class multiset of the given size, as sorted vectors.
pub fn multisets(size: usize) -> Vec<Vec<u8>> {
    fn go(start: u8, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for pc in start..12 {
            cur.push(pc);
            go(pc, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, size, &mut Vec::new(), &mut out);
    out
}

const METERS: [(u32, u32); 6] = [(4, 4), (3, 4), (2, 4), (6, 8), (5, 4), (7, 8)];

/// A random piece on the 16th-note grid: up to three meters, several
/// instruments, drums, and tempo changes.
pub fn random_grid_piece(rng: &mut ChaCha8Rng) -> Piece {
    let tpq = 480u64;
    let unit = tpq / 4;
    let bars = rng.gen_range(1..7);
    let mut signatures = Vec::new();
    let mut bar_starts = Vec::new();
    let mut tick = 0u64;
    let mut ts = TimeSignature::COMMON;
    for b in 0..bars {
        if b == 0 || rng.gen_bool(0.25) {
            let (n, d) = METERS[rng.gen_range(0..METERS.len())];
            ts = TimeSignature::new(n, d).unwrap();
            signatures.push((tick, ts));
        }
        bar_starts.push((tick, ts.bar_ticks(tpq as u32)));
        tick += ts.bar_ticks(tpq as u32);
    }
    let programs = [0u8, 24, 33, 40, 73];
    let mut notes = Vec::new();
    for _ in 0..rng.gen_range(0..40) {
        let (start, len) = bar_starts[rng.gen_range(0..bar_starts.len())];
        let onset = start + rng.gen_range(0..len / unit) * unit;
        let duration = rng.gen_range(1..=64) * unit;
        let mut note = Note::new(onset, duration, rng.gen_range(21..=108), rng.gen_range(1..=127), programs[rng.gen_range(0..programs.len())]).unwrap();
        if rng.gen_bool(0.1) {
            note.drum = true;
            note.pitch = rng.gen_range(35..=81);
        }
        notes.push(note);
    }
    let mut piece = Piece::from_notes(notes, &signatures, tpq as u32).unwrap();
    let end = piece.end_tick();
    let mut tempi: Vec<TempoEvent> = (0..rng.gen_range(0..4))
        .map(|_| TempoEvent { tick: rng.gen_range(0..=end / unit) * unit, micros_per_quarter: rng.gen_range(250_000..1_500_000) })
        .collect();
    tempi.sort_by_key(|t| t.tick);
    tempi.dedup_by_key(|t| t.tick);
    piece.tempo_events = tempi;
    piece
}
