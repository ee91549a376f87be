//! Minimal voice leading between chords of any cardinality and the
//! voice-leading tension built on it.
//!
//! A voice leading pairs every note of the source chord with at least one
//! note of the target chord and vice versa, so chords of different sizes are
//! handled by doubling voices. The minimum is a minimum-cost edge cover of the
//! complete bipartite graph, solved exactly as an assignment problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::PitchClass;
use crate::scalar::Scalar;
use crate::tiv::{euclidean_distance, pitch_class_tiv, WeightProfile};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoiceLeadingError {
    #[error("voice leading needs two non-empty chords")]
    EmptyChord,
}

/// How voice displacement is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PitchSpace {
    /// Pitch classes, shortest distance around the octave (0..=6).
    #[default]
    PitchClass,
    /// Concrete MIDI pitches, absolute semitone difference.
    Midi,
}

impl PitchSpace {
    pub fn displacement(self, a: u8, b: u8) -> u32 {
        match self {
            Self::PitchClass => interval_class(a, b),
            Self::Midi => (a as i32 - b as i32).unsigned_abs(),
        }
    }
}

/// Shortest distance between two pitch classes, in semitones.
pub fn interval_class(a: u8, b: u8) -> u32 {
    let d = (a as i32 - b as i32).rem_euclid(12) as u32;
    d.min(12 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoicePair {
    pub source: u8,
    pub target: u8,
    pub displacement: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceAssignment {
    /// Sorted by (source, target).
    pub pairs: Vec<VoicePair>,
    pub total_displacement: u32,
}

impl VoiceAssignment {
    /// Number of voices, counted as pairs in the covering.
    pub fn voices(&self) -> usize {
        self.pairs.len()
    }
}

/// Minimal voice leading between two pitch-class multisets.
pub fn minimal_vl(source: &[u8], target: &[u8]) -> Result<VoiceAssignment, VoiceLeadingError> {
    let s: Vec<u8> = source.iter().map(|p| p % 12).collect();
    let t: Vec<u8> = target.iter().map(|p| p % 12).collect();
    minimal_vl_with(&s, &t, PitchSpace::PitchClass)
}

/// Minimal voice leading with an explicit displacement measure.
///
/// Ties are resolved deterministically: inputs are sorted first, and among
/// equal-cost coverings the assignment solver keeps the first it reaches in
/// index order, and a doubled voice takes its lowest-index cheapest partner.
pub fn minimal_vl_with(source: &[u8], target: &[u8], space: PitchSpace) -> Result<VoiceAssignment, VoiceLeadingError> {
    if source.is_empty() || target.is_empty() {
        return Err(VoiceLeadingError::EmptyChord);
    }
    let mut src = source.to_vec();
    let mut tgt = target.to_vec();
    src.sort_unstable();
    tgt.sort_unstable();
    let (n, m) = (src.len(), tgt.len());
    let cost = |i: usize, j: usize| space.displacement(src[i], tgt[j]) as i64;

    let cheapest_target: Vec<usize> = (0..n).map(|i| (0..m).min_by_key(|&j| (cost(i, j), j)).unwrap()).collect();
    let cheapest_source: Vec<usize> = (0..m).map(|j| (0..n).min_by_key(|&i| (cost(i, j), i)).unwrap()).collect();

    // Rows: sources then one dummy per target. Columns: targets then one
    // dummy per source. Taking a dummy means "covered by its cheapest edge".
    let size = n + m;
    let forbidden = i64::MAX / 4;
    let mut matrix = vec![vec![0i64; size]; size];
    for (r, row) in matrix.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = match (r < n, c < m) {
                (true, true) => cost(r, c),
                (true, false) => {
                    if c - m == r {
                        cost(r, cheapest_target[r])
                    } else {
                        forbidden
                    }
                }
                (false, true) => {
                    if r - n == c {
                        cost(cheapest_source[c], c)
                    } else {
                        forbidden
                    }
                }
                (false, false) => 0,
            };
        }
    }
    let assignment = hungarian(&matrix);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(size);
    for (r, &c) in assignment.iter().enumerate() {
        match (r < n, c < m) {
            (true, true) => edges.push((r, c)),
            (true, false) => edges.push((r, cheapest_target[r])),
            (false, true) => edges.push((cheapest_source[c], c)),
            (false, false) => {}
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let pairs: Vec<VoicePair> = edges
        .into_iter()
        .map(|(i, j)| VoicePair { source: src[i], target: tgt[j], displacement: cost(i, j) as u32 })
        .collect();
    let total_displacement = pairs.iter().map(|p| p.displacement).sum();
    Ok(VoiceAssignment { pairs, total_displacement })
}

/// Square assignment problem, minimizing total cost. Returns the column chosen
/// for each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 2;
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Euclidean TIS distance between two single pitch classes.
pub fn perceptual_note_distance<T: Scalar>(a: PitchClass, b: PitchClass, weights: &WeightProfile<T>) -> T {
    euclidean_distance(&pitch_class_tiv(a.value(), weights), &pitch_class_tiv(b.value(), weights))
        .expect("same profile")
}

/// Precomputed pitch-class distance table for one weight profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualTable<T> {
    table: [[T; 12]; 12],
}

impl<T: Scalar> PerceptualTable<T> {
    pub fn new(weights: &WeightProfile<T>) -> Self {
        let mut table = [[T::zero(); 12]; 12];
        for (a, row) in table.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = perceptual_note_distance(PitchClass::wrapping(a as i64), PitchClass::wrapping(b as i64), weights);
            }
        }
        Self { table }
    }

    pub fn get(&self, a: u8, b: u8) -> T {
        self.table[(a % 12) as usize][(b % 12) as usize]
    }
}

/// Which form of the voice-leading tension to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VlVariant {
    /// `exp(0.05 * s * mu) - 1`: zero for common tones, growing with motion.
    #[default]
    Monotone,
    /// `exp(1 / (0.05 * s * mu))`, with common tones contributing zero.
    Printed,
}

impl std::str::FromStr for VlVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monotone" => Ok(Self::Monotone),
            "printed" => Ok(Self::Printed),
            other => Err(format!("unknown voice-leading variant {other:?}")),
        }
    }
}

/// Tension contributed by one voice moving `semitones` with perceptual
/// distance `mu`.
pub fn voice_pair_tension<T: Scalar>(semitones: T, mu: T, variant: VlVariant) -> T {
    let rate = T::lit(0.05);
    match variant {
        VlVariant::Monotone => (rate * semitones * mu).exp() - T::one(),
        VlVariant::Printed => {
            let x = rate * semitones * mu;
            if x > T::zero() {
                (T::one() / x).exp()
            } else {
                T::zero()
            }
        }
    }
}

/// Voice-leading tension between consecutive chords.
pub fn vl_tension<T: Scalar>(
    prev: &[u8],
    cur: &[u8],
    variant: VlVariant,
    space: PitchSpace,
    table: &PerceptualTable<T>,
) -> Result<T, VoiceLeadingError> {
    let vl = minimal_vl_with(prev, cur, space)?;
    Ok(vl
        .pairs
        .iter()
        .map(|p| {
            let s = T::from_u32(p.displacement).unwrap_or_else(T::zero);
            voice_pair_tension(s, table.get(p.source, p.target), variant)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Enumerates every edge subset; only usable for tiny chords.
    fn brute_force_cover(src: &[u8], tgt: &[u8]) -> u32 {
        let (n, m) = (src.len(), tgt.len());
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
        let mut best = u32::MAX;
        for mask in 1u32..(1 << edges.len()) {
            let mut s_cov = vec![false; n];
            let mut t_cov = vec![false; m];
            let mut cost = 0;
            for (e, &(i, j)) in edges.iter().enumerate() {
                if mask & (1 << e) != 0 {
                    s_cov[i] = true;
                    t_cov[j] = true;
                    let d = (src[i] as i32 - tgt[j] as i32).rem_euclid(12) as u32;
                    cost += d.min(12 - d);
                }
            }
            if s_cov.iter().all(|&c| c) && t_cov.iter().all(|&c| c) {
                best = best.min(cost);
            }
        }
        best
    }

    fn table() -> PerceptualTable<f64> {
        PerceptualTable::new(&WeightProfile::default())
    }

    #[test]
    fn identical_chords_cost_nothing() {
        assert_eq!(minimal_vl(&[0, 4, 7], &[0, 4, 7]).unwrap().total_displacement, 0);
    }

    #[test]
    fn c_major_to_f_major_second_inversion() {
        let vl = minimal_vl(&[0, 4, 7], &[0, 5, 9]).unwrap();
        assert_eq!(vl.total_displacement, 3);
        assert_eq!(brute_force_cover(&[0, 4, 7], &[0, 5, 9]), 3);
        let moves: Vec<(u8, u8)> = vl.pairs.iter().map(|p| (p.source, p.target)).collect();
        assert_eq!(moves, vec![(0, 0), (4, 5), (7, 9)]);
    }

    #[test]
    fn doubling_to_reach_a_seventh() {
        let vl = minimal_vl(&[0, 4, 7], &[0, 4, 7, 10]).unwrap();
        assert_eq!(vl.total_displacement, 2);
        assert_eq!(brute_force_cover(&[0, 4, 7], &[0, 4, 7, 10]), 2);
        assert_eq!(vl.voices(), 4);
        let covers = |s: u8, t: u8| vl.pairs.iter().any(|p| p.source == s && p.target == t);
        assert!(covers(0, 0) && covers(4, 4) && covers(7, 7));
        assert!(covers(0, 10));
    }

    #[test]
    fn empty_chords_rejected() {
        assert_eq!(minimal_vl(&[], &[0]), Err(VoiceLeadingError::EmptyChord));
        assert_eq!(minimal_vl(&[0], &[]), Err(VoiceLeadingError::EmptyChord));
    }

    #[test]
    fn matches_edge_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let n = rng.gen_range(1..=3);
            let m = rng.gen_range(1..=3);
            let s: Vec<u8> = (0..n).map(|_| rng.gen_range(0..12)).collect();
            let t: Vec<u8> = (0..m).map(|_| rng.gen_range(0..12)).collect();
            assert_eq!(minimal_vl(&s, &t).unwrap().total_displacement, brute_force_cover(&s, &t), "{s:?} -> {t:?}");
        }
    }

    #[test]
    fn every_voice_is_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let s: Vec<u8> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..12)).collect();
            let t: Vec<u8> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..12)).collect();
            let vl = minimal_vl(&s, &t).unwrap();
            for pc in &s {
                assert!(vl.pairs.iter().any(|p| p.source == *pc));
            }
            for pc in &t {
                assert!(vl.pairs.iter().any(|p| p.target == *pc));
            }
            let sum: u32 = vl.pairs.iter().map(|p| interval_class(p.source, p.target)).sum();
            assert_eq!(sum, vl.total_displacement);
        }
    }

    #[test]
    fn midi_space_counts_octaves() {
        let vl = minimal_vl_with(&[48, 64], &[60, 64], PitchSpace::Midi).unwrap();
        assert_eq!(vl.total_displacement, 12);
        let pcs = minimal_vl(&[48, 64], &[60, 64]).unwrap();
        assert_eq!(pcs.total_displacement, 0);
    }

    #[test]
    fn perceptual_distance_properties() {
        let w = WeightProfile::<f64>::default();
        let pc = |v| PitchClass::new(v).unwrap();
        assert_eq!(perceptual_note_distance(pc(0), pc(0), &w), 0.0);
        assert_abs_diff_eq!(
            perceptual_note_distance(pc(0), pc(7), &w),
            perceptual_note_distance(pc(7), pc(2), &w),
            epsilon = 1e-9
        );
        assert!(perceptual_note_distance(pc(0), pc(7), &w) < perceptual_note_distance(pc(0), pc(1), &w));
        // closed form: |w_k (1 - e^{-i pi k s / 6})| summed in quadrature
        let oracle = |s: f64| {
            w.values()
                .iter()
                .enumerate()
                .map(|(k, wk)| {
                    let half = std::f64::consts::PI * (k + 1) as f64 * s / 12.0;
                    (2.0 * wk * half.sin()).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        };
        for s in 0..12u8 {
            assert_abs_diff_eq!(perceptual_note_distance(pc(0), pc(s), &w), oracle(s as f64), epsilon = 1e-9);
        }
    }

    #[test]
    fn tension_of_identical_chords_is_zero() {
        let t = vl_tension(&[0, 4, 7], &[0, 4, 7], VlVariant::Monotone, PitchSpace::PitchClass, &table()).unwrap();
        assert_eq!(t, 0.0);
        let p = vl_tension(&[0, 4, 7], &[0, 4, 7], VlVariant::Printed, PitchSpace::PitchClass, &table()).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn single_semitone_step() {
        let w = WeightProfile::<f64>::default();
        let mu = perceptual_note_distance(PitchClass::new(0).unwrap(), PitchClass::new(1).unwrap(), &w);
        let t = vl_tension(&[0], &[1], VlVariant::Monotone, PitchSpace::PitchClass, &table()).unwrap();
        assert_abs_diff_eq!(t, (0.05 * mu).exp() - 1.0, epsilon = 1e-9);
        let p = vl_tension(&[0], &[1], VlVariant::Printed, PitchSpace::PitchClass, &table()).unwrap();
        assert_abs_diff_eq!(p, (1.0 / (0.05 * mu)).exp(), epsilon = 1e-9);
    }

    #[test]
    fn motion_raises_tension_in_both_variants() {
        for v in [VlVariant::Monotone, VlVariant::Printed] {
            let moved = vl_tension(&[0, 4, 7], &[0, 5, 9], v, PitchSpace::PitchClass, &table()).unwrap();
            let still = vl_tension(&[0, 4, 7], &[0, 4, 7], v, PitchSpace::PitchClass, &table()).unwrap();
            assert!(moved > still);
        }
    }

    #[test]
    fn monotone_pair_tension_grows_with_interval() {
        let t = table();
        let mut last = -1.0;
        for s in 0..=6u8 {
            let v = voice_pair_tension(s as f64, t.get(0, s), VlVariant::Monotone);
            assert!(v >= last);
            last = v;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn chord() -> impl Strategy<Value = Vec<u8>> {
            prop::collection::vec(0u8..12, 1..6)
        }

        proptest! {
            #[test]
            fn symmetric_cost(a in chord(), b in chord()) {
                prop_assert_eq!(
                    minimal_vl(&a, &b).unwrap().total_displacement,
                    minimal_vl(&b, &a).unwrap().total_displacement
                );
            }

            #[test]
            fn transposition_invariant(a in chord(), b in chord(), k in 0u8..12) {
                let up = |c: &[u8]| c.iter().map(|p| (p + k) % 12).collect::<Vec<_>>();
                prop_assert_eq!(
                    minimal_vl(&a, &b).unwrap().total_displacement,
                    minimal_vl(&up(&a), &up(&b)).unwrap().total_displacement
                );
            }

            #[test]
            fn self_tension_zero(a in chord()) {
                let t = vl_tension(&a, &a, VlVariant::Monotone, PitchSpace::PitchClass, &table()).unwrap();
                prop_assert_eq!(t, 0.0);
            }
        }
    }
}
