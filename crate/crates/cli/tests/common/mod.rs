#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tension_core::music::{Note, Piece, TimeSignature};

/// Chord pools from consonant to harsh, voiced around middle C.
const POOLS: [&[&[u8]]; 3] = [
    &[&[60, 64, 67], &[65, 69, 72], &[67, 71, 74], &[57, 60, 64]],
    &[&[62, 65, 69, 72], &[67, 71, 74, 77], &[64, 67, 71], &[59, 62, 65]],
    &[&[60, 61, 66], &[61, 66, 67, 70], &[63, 66, 69, 72], &[60, 61, 62, 66], &[66, 70, 73]],
];

/// Rising, falling or arch-shaped curve of `bars` values between `lo` and
/// `hi`.
pub fn shaped_target(shape: usize, bars: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..bars)
        .map(|i| {
            let x = i as f64 / (bars - 1).max(1) as f64;
            let y = match shape % 3 {
                0 => x,
                1 => 1.0 - x,
                _ => 1.0 - (2.0 * x - 1.0).abs(),
            };
            lo + (hi - lo) * y
        })
        .collect()
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

/// A 4/4 piano piece in C: a three-note chord on each half bar at one
/// velocity. Harmonic harshness follows a random walk over the chord pools.
pub fn chord_piece(seed: u64, bars: usize) -> Piece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level: i32 = rng.gen_range(0..3);
    let mut notes = Vec::new();
    for bar in 0..bars as u64 {
        if rng.gen_bool(0.5) {
            level = (level + if rng.gen_bool(0.5) { 1 } else { -1 }).clamp(0, 2);
        }
        let pool = POOLS[level as usize];
        for half in 0..2u64 {
            let chord = pool[rng.gen_range(0..pool.len())];
            for &p in chord.iter().take(3) {
                notes.push(Note::new(bar * 1920 + half * 960, 960, p, 80, 0).unwrap());
            }
        }
    }
    Piece::from_notes(notes, &[(0, TimeSignature::COMMON)], 480).unwrap()
}
