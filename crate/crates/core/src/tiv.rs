//! Tonal Interval Vectors: weighted DFT coefficients 1..=6 of a normalized
//! chroma vector, plus the distances and dissonance defined on them.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{Key, Mode};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum TivError {
    #[error("empty sonority: chroma has no positive weight")]
    EmptySonority,
    #[error("chroma weights must be finite and non-negative")]
    NegativeChroma,
    #[error("weight profile components must be positive")]
    InvalidWeights,
    #[error("tonal interval vectors were built with different weight profiles")]
    WeightMismatch,
    #[error("undefined angle: zero-norm tonal interval vector")]
    UndefinedAngle,
    #[error("maximum norm must be positive")]
    NonPositiveMaxNorm,
}

/// Pitch-class weights, index 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaVector<T>([T; 12]);

impl<T: Scalar> ChromaVector<T> {
    pub fn new(bins: [T; 12]) -> Self {
        Self(bins)
    }

    /// Counts of the given pitch classes (taken mod 12).
    pub fn from_pitch_classes(pcs: &[u8]) -> Self {
        let mut bins = [T::zero(); 12];
        for &pc in pcs {
            let i = (pc % 12) as usize;
            bins[i] = bins[i] + T::one();
        }
        Self(bins)
    }

    pub fn uniform() -> Self {
        Self([T::one(); 12])
    }

    pub fn bins(&self) -> &[T; 12] {
        &self.0
    }

    pub fn total(&self) -> T {
        self.0.iter().copied().sum()
    }

    /// Rotates upward by `k` semitones: bin `n` moves to `n + k`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut bins = [T::zero(); 12];
        for (n, &v) in self.0.iter().enumerate() {
            bins[(n + k) % 12] = v;
        }
        Self(bins)
    }
}

/// DFT coefficient weights w1..w6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile<T>([T; 6]);

impl<T: Scalar> WeightProfile<T> {
    pub fn new(w: [T; 6]) -> Result<Self, TivError> {
        if w.iter().all(|&x| x > T::zero() && x.is_finite()) {
            Ok(Self(w))
        } else {
            Err(TivError::InvalidWeights)
        }
    }

    pub fn values(&self) -> &[T; 6] {
        &self.0
    }

    /// Euclidean norm of the weights.
    pub fn norm(&self) -> T {
        self.0.iter().map(|&w| w * w).sum::<T>().sqrt()
    }
}

impl<T: Scalar> Default for WeightProfile<T> {
    /// (2, 11, 17, 16, 19, 7).
    fn default() -> Self {
        Self([2.0, 11.0, 17.0, 16.0, 19.0, 7.0].map(T::lit))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TonalIntervalVector<T> {
    coeffs: [Complex<T>; 6],
    weights: WeightProfile<T>,
}

impl<T: Scalar> TonalIntervalVector<T> {
    pub fn coeffs(&self) -> &[Complex<T>; 6] {
        &self.coeffs
    }

    pub fn weights(&self) -> &WeightProfile<T> {
        &self.weights
    }

    /// The coefficients as 12 real numbers: (re1, im1, ..., re6, im6).
    pub fn real_components(&self) -> [T; 12] {
        let mut out = [T::zero(); 12];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[2 * k] = c.re;
            out[2 * k + 1] = c.im;
        }
        out
    }

    pub fn norm(&self) -> T {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { coeffs: self.coeffs.map(|c| c * factor), weights: self.weights }
    }

    fn check_same_profile(&self, other: &Self) -> Result<(), TivError> {
        if self.weights == other.weights {
            Ok(())
        } else {
            Err(TivError::WeightMismatch)
        }
    }
}

/// `T(k) = w_k * sum_n c(n) exp(-2 pi i k n / 12)` for k = 1..=6 with the chroma
/// normalized to unit sum.
pub fn compute_tiv<T: Scalar>(chroma: &ChromaVector<T>, weights: &WeightProfile<T>) -> Result<TonalIntervalVector<T>, TivError> {
    if chroma.0.iter().any(|&c| c < T::zero() || !c.is_finite()) {
        return Err(TivError::NegativeChroma);
    }
    let total = chroma.total();
    if total <= T::zero() {
        return Err(TivError::EmptySonority);
    }
    let twelve = T::lit(12.0);
    let mut coeffs = [Complex::new(T::zero(), T::zero()); 6];
    for (slot, k) in coeffs.iter_mut().zip(1..=6usize) {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (n, &c) in chroma.0.iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            // Reduce k*n mod 12 so the phase stays exact for small integers.
            let phase = -T::TAU() * T::from_usize_lossy((k * n) % 12) / twelve;
            acc = acc + Complex::from_polar(c / total, phase);
        }
        // Exact cancellations (uniform or symmetric chromas) leave round-off
        // of a few ulps on a unit-mass sum; snap that to zero.
        if acc.norm() <= T::epsilon() * T::lit(32.0) {
            acc = Complex::new(T::zero(), T::zero());
        }
        *slot = acc * weights.0[k - 1];
    }
    Ok(TonalIntervalVector { coeffs, weights: *weights })
}

/// TIV of a single pitch class.
pub fn pitch_class_tiv<T: Scalar>(pc: u8, weights: &WeightProfile<T>) -> TonalIntervalVector<T> {
    compute_tiv(&ChromaVector::from_pitch_classes(&[pc]), weights).expect("single pitch class is non-empty")
}

/// Euclidean distance over the 12 real components.
pub fn euclidean_distance<T: Scalar>(a: &TonalIntervalVector<T>, b: &TonalIntervalVector<T>) -> Result<T, TivError> {
    a.check_same_profile(b)?;
    Ok(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (*x - *y).norm_sqr()).sum::<T>().sqrt())
}

/// Angle between two TIVs using the real inner product of the 12-component
/// embedding, clamped into `[0, pi]`.
pub fn angular_distance<T: Scalar>(a: &TonalIntervalVector<T>, b: &TonalIntervalVector<T>) -> Result<T, TivError> {
    a.check_same_profile(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na <= T::zero() || nb <= T::zero() {
        return Err(TivError::UndefinedAngle);
    }
    let dot: T = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
    let cos = (dot / (na * nb)).max(-T::one()).min(T::one());
    Ok(cos.acos())
}

/// `1 - |T| / max_norm`, clamped to `[0, 1]`.
pub fn dissonance<T: Scalar>(t: &TonalIntervalVector<T>, max_norm: T) -> Result<T, TivError> {
    if !(max_norm > T::zero()) {
        return Err(TivError::NonPositiveMaxNorm);
    }
    Ok((T::one() - t.norm() / max_norm).max(T::zero()).min(T::one()))
}

/// Largest attainable TIV norm for a profile: the norm of any single pitch
/// class, which equals the norm of the weights.
pub fn max_norm<T: Scalar>(weights: &WeightProfile<T>) -> T {
    weights.norm()
}

/// Largest norm among the given TIVs, for the corpus-observed normalizer.
pub fn observed_max_norm<'a, T: Scalar>(tivs: impl IntoIterator<Item = &'a TonalIntervalVector<T>>) -> Option<T> {
    tivs.into_iter().map(|t| t.norm()).fold(None, |acc, n| Some(acc.map_or(n, |a: T| a.max(n))))
}

/// Where the normalizer for dissonance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxNormMode<T> {
    Analytic,
    Observed(T),
}

impl<T: Scalar> MaxNormMode<T> {
    pub fn resolve(&self, weights: &WeightProfile<T>) -> T {
        match *self {
            Self::Analytic => max_norm(weights),
            Self::Observed(v) => v,
        }
    }
}

/// How a key is turned into a chroma vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyProfile {
    /// Binary diatonic set (natural minor for minor keys).
    #[default]
    Diatonic,
    /// Krumhansl-Kessler probe-tone ratings.
    ProbeTone,
}

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR_SCALE: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];

pub(crate) const KK_MAJOR: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
pub(crate) const KK_MINOR: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

pub fn key_chroma<T: Scalar>(key: Key, profile: KeyProfile) -> ChromaVector<T> {
    let tonic = key.tonic.index();
    match profile {
        KeyProfile::Diatonic => {
            let scale = match key.mode {
                Mode::Major => MAJOR_SCALE,
                Mode::Minor => NATURAL_MINOR_SCALE,
            };
            ChromaVector::from_pitch_classes(&scale).rotated(tonic)
        }
        KeyProfile::ProbeTone => {
            let ratings = match key.mode {
                Mode::Major => KK_MAJOR,
                Mode::Minor => KK_MINOR,
            };
            ChromaVector::new(ratings.map(T::lit)).rotated(tonic)
        }
    }
}

pub fn key_tiv<T: Scalar>(key: Key, weights: &WeightProfile<T>) -> TonalIntervalVector<T> {
    key_tiv_with(key, weights, KeyProfile::Diatonic)
}

pub fn key_tiv_with<T: Scalar>(key: Key, weights: &WeightProfile<T>, profile: KeyProfile) -> TonalIntervalVector<T> {
    compute_tiv(&key_chroma(key, profile), weights).expect("key chroma is non-empty")
}

/// Pitch classes of the I, IV and V triads. Minor keys use minor i and iv
/// with the harmonic-minor (major) dominant.
pub fn function_triads(key: Key) -> [[u8; 3]; 3] {
    let t = key.tonic.value();
    let at = |offsets: [u8; 3]| offsets.map(|o| (t + o) % 12);
    match key.mode {
        Mode::Major => [at([0, 4, 7]), at([5, 9, 0]), at([7, 11, 2])],
        Mode::Minor => [at([0, 3, 7]), at([5, 8, 0]), at([7, 11, 2])],
    }
}

/// TIVs of the tonic, subdominant and dominant triads, in that order.
pub fn function_tivs<T: Scalar>(key: Key, weights: &WeightProfile<T>) -> [TonalIntervalVector<T>; 3] {
    function_triads(key).map(|pcs| {
        compute_tiv(&ChromaVector::from_pitch_classes(&pcs), weights).expect("triad chroma is non-empty")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    type Cx = Complex<f64>;

    // Direct double-loop DFT with fresh exponentials, no shared helpers.
    fn dft_oracle(chroma: &[f64; 12], w: &[f64; 6]) -> [Cx; 6] {
        let total: f64 = chroma.iter().sum();
        let mut out = [Cx::new(0.0, 0.0); 6];
        for k in 1..=6 {
            let mut acc = Cx::new(0.0, 0.0);
            for (n, c) in chroma.iter().enumerate() {
                let theta = -2.0 * PI * (k * n) as f64 / 12.0;
                acc += Cx::new(theta.cos(), theta.sin()) * (c / total);
            }
            out[k - 1] = acc * w[k - 1];
        }
        out
    }

    fn oracle_norm(c: &[Cx; 6]) -> f64 {
        c.iter().map(|z| z.re * z.re + z.im * z.im).sum::<f64>().sqrt()
    }

    fn chroma(pcs: &[u8]) -> ChromaVector<f64> {
        ChromaVector::from_pitch_classes(pcs)
    }

    fn tiv(pcs: &[u8]) -> TonalIntervalVector<f64> {
        compute_tiv(&chroma(pcs), &WeightProfile::default()).unwrap()
    }

    fn random_chroma(rng: &mut ChaCha8Rng) -> ChromaVector<f64> {
        let mut bins = [0.0; 12];
        for b in &mut bins {
            if rng.gen_bool(0.5) {
                *b = rng.gen_range(0.0..10.0);
            }
        }
        bins[rng.gen_range(0..12)] += 1.0;
        ChromaVector::new(bins)
    }

    #[test]
    fn unit_mass_gives_the_weights() {
        let w = WeightProfile::<f64>::default();
        let t = compute_tiv(&chroma(&[0]), &w).unwrap();
        for (c, &wk) in t.coeffs().iter().zip(w.values()) {
            assert_abs_diff_eq!(c.re, wk, epsilon = 1e-12);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_chroma_vanishes() {
        let t = compute_tiv(&ChromaVector::<f64>::uniform(), &WeightProfile::default()).unwrap();
        assert!(t.coeffs().iter().all(|c| c.norm() <= 1e-12));
        assert_eq!(dissonance(&t, max_norm(t.weights())).unwrap(), 1.0);
    }

    #[test]
    fn triad_matches_oracle() {
        let w = WeightProfile::<f64>::default();
        let t = tiv(&[0, 4, 7]);
        let o = dft_oracle(chroma(&[0, 4, 7]).bins(), w.values());
        for (a, b) in t.coeffs().iter().zip(&o) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-9);
        }
    }

    #[test]
    fn random_chromas_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WeightProfile::<f64>::default();
        for _ in 0..1000 {
            let c = random_chroma(&mut rng);
            let t = compute_tiv(&c, &w).unwrap();
            let o = dft_oracle(c.bins(), w.values());
            for (a, b) in t.coeffs().iter().zip(&o) {
                assert!((a - b).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn empty_sonority_is_rejected() {
        let err = compute_tiv(&ChromaVector::<f64>::new([0.0; 12]), &WeightProfile::default()).unwrap_err();
        assert_eq!(err, TivError::EmptySonority);
    }

    #[test]
    fn relative_minor_is_closer_than_tritone_major() {
        let c = dft_oracle(chroma(&[0, 4, 7]).bins(), WeightProfile::default().values());
        let am = dft_oracle(chroma(&[9, 0, 4]).bins(), WeightProfile::default().values());
        let fs = dft_oracle(chroma(&[6, 10, 1]).bins(), WeightProfile::default().values());
        let d = |a: &[Cx; 6], b: &[Cx; 6]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(d(&c, &am) < d(&c, &fs));
        let got_am = euclidean_distance(&tiv(&[0, 4, 7]), &tiv(&[9, 0, 4])).unwrap();
        let got_fs = euclidean_distance(&tiv(&[0, 4, 7]), &tiv(&[6, 10, 1])).unwrap();
        assert_abs_diff_eq!(got_am, d(&c, &am), epsilon = 1e-9);
        assert!(got_am < got_fs);
    }

    #[test]
    fn distance_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = WeightProfile::default();
        for _ in 0..100 {
            let a = compute_tiv(&random_chroma(&mut rng), &w).unwrap();
            let b = compute_tiv(&random_chroma(&mut rng), &w).unwrap();
            assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
            assert_eq!(euclidean_distance(&a, &b).unwrap(), euclidean_distance(&b, &a).unwrap());
        }
    }

    #[test]
    fn mismatched_profiles() {
        let other = WeightProfile::new([1.0; 6]).unwrap();
        let a = tiv(&[0]);
        let b = compute_tiv(&chroma(&[0]), &other).unwrap();
        assert_eq!(euclidean_distance(&a, &b), Err(TivError::WeightMismatch));
        assert_eq!(angular_distance(&a, &b), Err(TivError::WeightMismatch));
    }

    #[test]
    fn angle_basics() {
        let t = tiv(&[0, 4, 7]);
        assert_abs_diff_eq!(angular_distance(&t, &t).unwrap(), 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(angular_distance(&t, &t.scaled(3.5)).unwrap(), 0.0, epsilon = 1e-7);
        let zero = compute_tiv(&ChromaVector::uniform(), &WeightProfile::default()).unwrap().scaled(0.0);
        assert_eq!(angular_distance(&t, &zero), Err(TivError::UndefinedAngle));
    }

    #[test]
    fn chord_to_key_angle_ordering() {
        let w = WeightProfile::default();
        let t = tiv(&[0, 4, 7]);
        let near = angular_distance(&t, &key_tiv(Key::major(0), &w)).unwrap();
        let far = angular_distance(&t, &key_tiv(Key::major(6), &w)).unwrap();
        assert!(near < far);
        // oracle: the same angles from raw DFT sums
        let o = |pcs: &[u8]| dft_oracle(chroma(pcs).bins(), w.values());
        let ang = |a: &[Cx; 6], b: &[Cx; 6]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
            (dot / (oracle_norm(a) * oracle_norm(b))).clamp(-1.0, 1.0).acos()
        };
        assert_abs_diff_eq!(near, ang(&o(&[0, 4, 7]), &o(&[0, 2, 4, 5, 7, 9, 11])), epsilon = 1e-9);
        assert_abs_diff_eq!(far, ang(&o(&[0, 4, 7]), &o(&[6, 8, 10, 11, 1, 3, 5])), epsilon = 1e-9);
    }

    #[test]
    fn key_vectors() {
        let w = WeightProfile::<f64>::default();
        assert_eq!(key_tiv(Key::major(0), &w), compute_tiv(&chroma(&[0, 2, 4, 5, 7, 9, 11]), &w).unwrap());
        let c = key_tiv(Key::major(0), &w);
        let am = key_tiv(Key::minor(9), &w);
        for (x, y) in c.coeffs().iter().zip(am.coeffs()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
        let g = angular_distance(&c, &key_tiv(Key::major(7), &w)).unwrap();
        let fs = angular_distance(&c, &key_tiv(Key::major(6), &w)).unwrap();
        assert!(g < fs);
    }

    #[test]
    fn function_triad_spelling() {
        assert_eq!(function_triads(Key::major(0)), [[0, 4, 7], [5, 9, 0], [7, 11, 2]]);
        assert_eq!(function_triads(Key::minor(9)), [[9, 0, 4], [2, 5, 9], [4, 8, 11]]);
        let w = WeightProfile::default();
        assert_eq!(function_tivs(Key::major(0), &w)[0], tiv(&[0, 4, 7]));
    }

    #[test]
    fn dissonance_extremes_and_ordering() {
        let w = WeightProfile::<f64>::default();
        let m = max_norm(&w);
        assert_abs_diff_eq!(m, 1080f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(dissonance(&tiv(&[3]), m).unwrap(), 0.0, epsilon = 1e-12);
        let oracle_diss = |pcs: &[u8]| 1.0 - oracle_norm(&dft_oracle(chroma(pcs).bins(), w.values())) / 1080f64.sqrt();
        assert!(oracle_diss(&[0, 7]) < oracle_diss(&[0, 6]));
        assert!(dissonance(&tiv(&[0, 7]), m).unwrap() < dissonance(&tiv(&[0, 6]), m).unwrap());
        assert_eq!(dissonance(&tiv(&[0]), -1.0), Err(TivError::NonPositiveMaxNorm));
        // norms above the normalizer clamp to zero dissonance
        assert_eq!(dissonance(&tiv(&[0]), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_profile_max_norm() {
        assert_abs_diff_eq!(max_norm(&WeightProfile::new([1.0f64; 6]).unwrap()), 6f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn single_pitch_class_attains_the_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = WeightProfile::<f64>::default();
        let m = max_norm(&w);
        for pc in 0..12 {
            assert_abs_diff_eq!(pitch_class_tiv(pc, &w).norm(), m, epsilon = 1e-9);
        }
        for _ in 0..100_000 {
            let t = compute_tiv(&random_chroma(&mut rng), &w).unwrap();
            assert!(t.norm() <= m + 1e-9);
        }
        let obs = observed_max_norm([tiv(&[0, 4, 7]), tiv(&[0])].iter()).unwrap();
        assert_abs_diff_eq!(obs, m, epsilon = 1e-9);
        assert_eq!(MaxNormMode::Observed(5.0).resolve(&w), 5.0);
    }

    #[test]
    fn single_precision_instantiation() {
        let t = compute_tiv(&ChromaVector::<f32>::from_pitch_classes(&[0, 4, 7]), &WeightProfile::default()).unwrap();
        let d = dissonance(&t, max_norm(t.weights())).unwrap();
        assert!((d - 0.380_417).abs() < 1e-4);
    }

    #[test]
    fn invalid_profiles() {
        assert_eq!(WeightProfile::new([1.0, 0.0, 1.0, 1.0, 1.0, 1.0]), Err(TivError::InvalidWeights));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_chroma() -> impl Strategy<Value = [f64; 12]> {
            prop::array::uniform12(0.0f64..5.0).prop_filter("non-empty", |c| c.iter().sum::<f64>() > 1e-3)
        }

        proptest! {
            #[test]
            fn transposition_rotates_phase(c in arb_chroma(), r in 0usize..12) {
                let w = WeightProfile::<f64>::default();
                let a = compute_tiv(&ChromaVector::new(c), &w).unwrap();
                let b = compute_tiv(&ChromaVector::new(c).rotated(r), &w).unwrap();
                for k in 1..=6 {
                    let phase = Cx::from_polar(1.0, -2.0 * PI * (k * r) as f64 / 12.0);
                    prop_assert!((a.coeffs()[k - 1] * phase - b.coeffs()[k - 1]).norm() < 1e-9);
                }
                prop_assert!((a.norm() - b.norm()).abs() < 1e-9);
                let m = max_norm(&w);
                prop_assert!((dissonance(&a, m).unwrap() - dissonance(&b, m).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn triangle_inequality(x in arb_chroma(), y in arb_chroma(), z in arb_chroma()) {
                let w = WeightProfile::<f64>::default();
                let [a, b, c] = [x, y, z].map(|v| compute_tiv(&ChromaVector::new(v), &w).unwrap());
                let ab = euclidean_distance(&a, &b).unwrap();
                let bc = euclidean_distance(&b, &c).unwrap();
                let ac = euclidean_distance(&a, &c).unwrap();
                prop_assert!(ac <= ab + bc + 1e-9);
            }

            #[test]
            fn angle_scale_invariant(x in arb_chroma(), y in arb_chroma(), s in 0.01f64..100.0) {
                let w = WeightProfile::<f64>::default();
                let a = compute_tiv(&ChromaVector::new(x), &w).unwrap();
                let b = compute_tiv(&ChromaVector::new(y), &w).unwrap();
                prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
                let base = angular_distance(&a, &b).unwrap();
                prop_assert!((angular_distance(&a.scaled(s), &b).unwrap() - base).abs() < 1e-7);
                prop_assert!((0.0..=PI).contains(&base));
            }

            #[test]
            fn dissonance_in_unit_interval(x in arb_chroma()) {
                let w = WeightProfile::<f64>::default();
                let d = dissonance(&compute_tiv(&ChromaVector::new(x), &w).unwrap(), max_norm(&w)).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }
        }
    }
}
