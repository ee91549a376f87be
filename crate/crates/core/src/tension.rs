//! Per-chord tonal tension, bar averaging, key estimation and curve
//! similarity.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{chroma_of, piece_chord_windows, ChordWindow, ChromaWeighting, Key, Mode, MusicError, Piece, PitchClass, WindowPolicy};
use crate::scalar::Scalar;
use crate::tiv::{
    angular_distance, compute_tiv, dissonance, euclidean_distance, function_tivs, key_tiv_with, KeyProfile, MaxNormMode,
    TivError, TonalIntervalVector, WeightProfile, KK_MAJOR, KK_MINOR,
};
use crate::voiceleading::{vl_tension, PerceptualTable, PitchSpace, VlVariant, VoiceLeadingError};

#[derive(Debug, Error, PartialEq)]
pub enum TensionError {
    #[error("piece has no bars")]
    NoBars,
    #[error("piece has no pitched notes")]
    NoNotes,
    #[error("chord window is empty")]
    EmptyWindow,
    #[error("curves differ in length: {cand} vs {target}")]
    LengthMismatch { cand: usize, target: usize },
    #[error("curves are empty")]
    EmptyCurve,
    #[error("tension weight {0} must be finite and non-negative")]
    InvalidWeight(&'static str),
    #[error("similarity scale reference must be positive, got {0}")]
    InvalidScaleRef(f64),
    #[error("key window must cover at least one bar")]
    InvalidKeyScope,
    #[error("curve file: {0}")]
    CurveFormat(String),
    #[error(transparent)]
    Tiv(#[from] TivError),
    #[error(transparent)]
    VoiceLeading(#[from] VoiceLeadingError),
    #[error(transparent)]
    Music(#[from] MusicError),
}

/// Weights of the five tension components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct TensionWeights<T> {
    pub prev: T,
    pub key: T,
    pub func: T,
    pub dissonance: T,
    pub voice_leading: T,
}

impl<T: Scalar> Default for TensionWeights<T> {
    fn default() -> Self {
        Self { prev: T::one(), key: T::one(), func: T::one(), dissonance: T::lit(30.3), voice_leading: T::lit(2.71) }
    }
}

impl<T: Scalar> TensionWeights<T> {
    pub fn zero() -> Self {
        Self { prev: T::zero(), key: T::zero(), func: T::zero(), dissonance: T::zero(), voice_leading: T::zero() }
    }

    pub fn validate(&self) -> Result<(), TensionError> {
        let fields =
            [("prev", self.prev), ("key", self.key), ("func", self.func), ("dissonance", self.dissonance), ("voice_leading", self.voice_leading)];
        for (name, v) in fields {
            if !v.is_finite() || v < T::zero() {
                return Err(TensionError::InvalidWeight(name));
            }
        }
        Ok(())
    }

    pub fn combine(&self, d_prev: T, d_key: T, d_func: T, diss: T, vl: T) -> T {
        self.prev * d_prev + self.key * d_key + self.func * d_func + self.dissonance * diss + self.voice_leading * vl
    }
}

/// Tension breakdown of one chord.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensionComponents<T> {
    /// Distance to the previous chord.
    pub d_prev: T,
    /// Angle to the key.
    pub d_key: T,
    /// Smallest angle to the I, IV and V triads.
    pub d_func: T,
    pub dissonance: T,
    pub voice_leading: T,
    pub combined: T,
}

impl<T: Scalar> TensionComponents<T> {
    /// Same components, recombined under other weights.
    pub fn reweighted(&self, weights: &TensionWeights<T>) -> Self {
        Self { combined: weights.combine(self.d_prev, self.d_key, self.d_func, self.dissonance, self.voice_leading), ..*self }
    }
}

/// Mean combined tension of a bar's chords; zero for a bar without chords.
pub fn bar_tension<T: Scalar>(chords: &[TensionComponents<T>]) -> T {
    if chords.is_empty() {
        return T::zero();
    }
    chords.iter().map(|c| c.combined).sum::<T>() / T::from_usize_lossy(chords.len())
}

/// One tension value per bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionCurve<T> {
    pub values: Vec<T>,
    /// Bars without any chord; their value is zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub silent: Vec<bool>,
}

impl<T: Scalar> TensionCurve<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values, silent: Vec::new() }
    }

    pub fn bar_count(&self) -> usize {
        self.values.len()
    }

    pub fn is_silent(&self, bar: usize) -> bool {
        self.silent.get(bar).copied().unwrap_or(false)
    }

    pub fn prefix(&self, len: usize) -> Self {
        let silent = if self.silent.is_empty() { Vec::new() } else { self.silent[..len.min(self.silent.len())].to_vec() };
        Self { values: self.values[..len.min(self.values.len())].to_vec(), silent }
    }

    /// CSV with header `bar_index,tension`, values at 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bar_index,tension\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", format_sig9(v.to_f64_lossy()));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TensionError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(h) if h.replace(' ', "") == "bar_index,tension" => {}
            _ => return Err(TensionError::CurveFormat("missing header \"bar_index,tension\"".into())),
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| TensionError::CurveFormat(format!("row {row}: expected two columns")))?;
            let idx: usize =
                idx.trim().parse().map_err(|_| TensionError::CurveFormat(format!("row {row}: bad bar index {idx:?}")))?;
            if idx != row {
                return Err(TensionError::CurveFormat(format!("row {row}: bar index {idx} out of order")));
            }
            let v: f64 =
                val.trim().parse().map_err(|_| TensionError::CurveFormat(format!("row {row}: bad tension {val:?}")))?;
            if !v.is_finite() {
                return Err(TensionError::CurveFormat(format!("row {row}: tension must be finite")));
            }
            values.push(T::lit(v));
        }
        Ok(Self::new(values))
    }

    /// Values rounded to 9 significant digits, as written to files.
    pub fn rounded(&self) -> Vec<f64> {
        self.values.iter().map(|v| round_sig9(v.to_f64_lossy())).collect()
    }
}

/// Decimal rendering with 9 significant digits and trailing zeros removed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    let mut s = if (-6..16).contains(&exp) {
        format!("{:.*}", (8 - exp).max(0) as usize, x)
    } else {
        return sci;
    };
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub fn round_sig9(x: f64) -> f64 {
    format_sig9(x).parse().unwrap_or(x)
}

/// Whether the key is estimated once for the piece or per group of bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyScope {
    #[default]
    Global,
    PerBars(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct TensionConfig<T> {
    pub weights: TensionWeights<T>,
    pub profile: WeightProfile<T>,
    pub vl_variant: VlVariant,
    pub pitch_space: PitchSpace,
    pub window: WindowPolicy,
    pub chroma: ChromaWeighting,
    pub max_norm: MaxNormMode<T>,
    pub key_profile: KeyProfile,
    pub key_scope: KeyScope,
}

impl<T: Scalar> Default for TensionConfig<T> {
    fn default() -> Self {
        Self {
            weights: TensionWeights::default(),
            profile: WeightProfile::default(),
            vl_variant: VlVariant::default(),
            pitch_space: PitchSpace::default(),
            window: WindowPolicy::default(),
            chroma: ChromaWeighting::default(),
            max_norm: MaxNormMode::Analytic,
            key_profile: KeyProfile::default(),
            key_scope: KeyScope::default(),
        }
    }
}

/// Key-dependent reference vectors, computed once per key.
#[derive(Debug, Clone)]
pub struct KeyContext<T> {
    pub key: Key,
    key_tiv: TonalIntervalVector<T>,
    functions: [TonalIntervalVector<T>; 3],
}

/// A scored chord inside a piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordTension<T> {
    pub bar: usize,
    pub start: u64,
    pub end: u64,
    pub key: Key,
    pub components: TensionComponents<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceTension<T> {
    /// Key of the first bar (the only key under a global scope).
    pub key: Key,
    pub curve: TensionCurve<T>,
    pub chords: Vec<ChordTension<T>>,
}

/// Tension model bound to one configuration.
#[derive(Debug, Clone)]
pub struct TensionModel<T> {
    config: TensionConfig<T>,
    table: PerceptualTable<T>,
    max_norm: T,
}

impl<T: Scalar> Default for TensionModel<T> {
    fn default() -> Self {
        Self::new(TensionConfig::default()).expect("default config is valid")
    }
}

impl<T: Scalar> TensionModel<T> {
    pub fn new(config: TensionConfig<T>) -> Result<Self, TensionError> {
        config.weights.validate()?;
        if let KeyScope::PerBars(0) = config.key_scope {
            return Err(TensionError::InvalidKeyScope);
        }
        let max_norm = config.max_norm.resolve(&config.profile);
        if !(max_norm > T::zero()) {
            return Err(TivError::NonPositiveMaxNorm.into());
        }
        let table = PerceptualTable::new(&config.profile);
        Ok(Self { config, table, max_norm })
    }

    pub fn config(&self) -> &TensionConfig<T> {
        &self.config
    }

    pub fn key_context(&self, key: Key) -> KeyContext<T> {
        KeyContext {
            key,
            key_tiv: key_tiv_with(key, &self.config.profile, self.config.key_profile),
            functions: function_tivs(key, &self.config.profile),
        }
    }

    fn tiv_of(&self, window: &ChordWindow) -> Result<TonalIntervalVector<T>, TensionError> {
        if window.is_empty() {
            return Err(TensionError::EmptyWindow);
        }
        Ok(compute_tiv(&chroma_of::<T>(window, self.config.chroma)?, &self.config.profile)?)
    }

    fn voices(&self, window: &ChordWindow) -> Vec<u8> {
        match self.config.pitch_space {
            PitchSpace::PitchClass => window.pitch_classes(),
            PitchSpace::Midi => window.midi_pitches(),
        }
    }

    /// Angles from a chord to the I, IV and V triads.
    pub fn function_angles(&self, cur: &ChordWindow, ctx: &KeyContext<T>) -> Result<[T; 3], TensionError> {
        let t = self.tiv_of(cur)?;
        let mut out = [T::zero(); 3];
        for (o, f) in out.iter_mut().zip(&ctx.functions) {
            *o = angular_distance(&t, f)?;
        }
        Ok(out)
    }

    pub fn chord_tension(
        &self,
        prev: Option<&ChordWindow>,
        cur: &ChordWindow,
        ctx: &KeyContext<T>,
    ) -> Result<TensionComponents<T>, TensionError> {
        let t = self.tiv_of(cur)?;
        let (d_prev, vl) = match prev {
            Some(p) if !p.is_empty() => {
                let pt = self.tiv_of(p)?;
                let vl = vl_tension(&self.voices(p), &self.voices(cur), self.config.vl_variant, self.config.pitch_space, &self.table)?;
                (euclidean_distance(&pt, &t)?, vl)
            }
            _ => (T::zero(), T::zero()),
        };
        let d_key = angular_distance(&t, &ctx.key_tiv)?;
        let mut d_func = T::infinity();
        for f in &ctx.functions {
            d_func = d_func.min(angular_distance(&t, f)?);
        }
        let diss = dissonance(&t, self.max_norm)?;
        let combined = self.config.weights.combine(d_prev, d_key, d_func, diss, vl);
        Ok(TensionComponents { d_prev, d_key, d_func, dissonance: diss, voice_leading: vl, combined })
    }

    fn bar_keys(&self, piece: &Piece) -> Result<Vec<Key>, TensionError> {
        let global = match piece.key_estimate {
            Some(k) => k,
            None => estimate_key(piece)?,
        };
        Ok(match self.config.key_scope {
            KeyScope::Global => vec![global; piece.bars.len()],
            KeyScope::PerBars(n) => piece
                .bars
                .chunks(n)
                .flat_map(|group| {
                    let key = estimate_key_of(group.iter().flat_map(|b| b.notes.iter())).unwrap_or(global);
                    std::iter::repeat_n(key, group.len())
                })
                .collect(),
        })
    }

    /// Full analysis: per-bar curve plus every chord's components.
    pub fn analyze(&self, piece: &Piece) -> Result<PieceTension<T>, TensionError> {
        if piece.bars.is_empty() {
            return Err(TensionError::NoBars);
        }
        let keys = self.bar_keys(piece)?;
        let windows = piece_chord_windows(piece, self.config.window);
        let mut contexts: Vec<KeyContext<T>> = Vec::new();
        let mut values = Vec::with_capacity(windows.len());
        let mut silent = Vec::with_capacity(windows.len());
        let mut chords = Vec::new();
        let mut prev: Option<&ChordWindow> = None;
        for (bar, bar_windows) in windows.iter().enumerate() {
            let key = keys[bar];
            if contexts.last().is_none_or(|c| c.key != key) {
                contexts.push(self.key_context(key));
            }
            let ctx = contexts.last().expect("pushed above");
            let mut comps = Vec::with_capacity(bar_windows.len());
            for w in bar_windows {
                let c = self.chord_tension(prev, w, ctx)?;
                chords.push(ChordTension { bar, start: w.start, end: w.end, key, components: c });
                comps.push(c);
                prev = Some(w);
            }
            values.push(bar_tension(&comps));
            silent.push(comps.is_empty());
        }
        Ok(PieceTension { key: keys[0], curve: TensionCurve { values, silent }, chords })
    }

    pub fn piece_curve(&self, piece: &Piece) -> Result<TensionCurve<T>, TensionError> {
        Ok(self.analyze(piece)?.curve)
    }
}

/// Tension curve of a piece under the default configuration.
pub fn piece_tension_curve(piece: &Piece, weights: &TensionWeights<f64>) -> Result<TensionCurve<f64>, TensionError> {
    TensionModel::new(TensionConfig { weights: *weights, ..TensionConfig::default() })?.piece_curve(piece)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Key-finding by correlation against the Krumhansl-Kessler profiles,
/// over the duration-weighted chroma of all pitched notes.
pub fn estimate_key(piece: &Piece) -> Result<Key, TensionError> {
    estimate_key_of(piece.notes())
}

fn estimate_key_of<'a>(notes: impl Iterator<Item = &'a crate::music::Note>) -> Result<Key, TensionError> {
    let mut chroma = [0.0f64; 12];
    let mut any = false;
    for n in notes.filter(|n| !n.drum) {
        chroma[n.pitch_class().index()] += n.duration as f64;
        any = true;
    }
    if !any {
        return Err(TensionError::NoNotes);
    }
    Ok(key_from_chroma(&chroma))
}

/// Best-correlated key for a chroma. Ties go to the lower tonic, then major.
pub fn key_from_chroma(chroma: &[f64; 12]) -> Key {
    let mut best = (f64::NEG_INFINITY, Key::major(0));
    for tonic in 0..12u8 {
        for (mode, profile) in [(Mode::Major, &KK_MAJOR), (Mode::Minor, &KK_MINOR)] {
            let rotated: Vec<f64> = (0..12).map(|i| profile[(i + 12 - tonic as usize) % 12]).collect();
            let r = pearson(chroma, &rotated);
            if r > best.0 {
                best = (r, Key::new(PitchClass::wrapping(tonic as i64), mode));
            }
        }
    }
    best.1
}

/// Which formula produced a similarity value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityBranch {
    Pearson,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub value: f64,
    pub branch: SimilarityBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Target variance at or below which the absolute-difference form is used.
    pub variance_threshold: f64,
    /// Mean absolute difference mapped to similarity -1.
    pub scale_ref: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { variance_threshold: 0.001, scale_ref: 1.0 }
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Similarity of a candidate curve to a target in [-1, 1]: Pearson
/// correlation when the target varies enough, otherwise
/// `1 - 2 * clamp(mean |cand - target| / scale_ref, 0, 1)`.
pub fn curve_similarity(cand: &[f64], target: &[f64], config: &SimilarityConfig) -> Result<Similarity, TensionError> {
    if cand.len() != target.len() {
        return Err(TensionError::LengthMismatch { cand: cand.len(), target: target.len() });
    }
    if cand.is_empty() {
        return Err(TensionError::EmptyCurve);
    }
    if !(config.scale_ref > 0.0) || !config.scale_ref.is_finite() {
        return Err(TensionError::InvalidScaleRef(config.scale_ref));
    }
    if cand.len() >= 2 && variance(target) > config.variance_threshold && variance(cand) > 0.0 {
        return Ok(Similarity { value: pearson(cand, target), branch: SimilarityBranch::Pearson });
    }
    let mad = cand.iter().zip(target).map(|(c, t)| (c - t).abs()).sum::<f64>() / cand.len() as f64;
    let value = 1.0 - 2.0 * (mad / config.scale_ref).clamp(0.0, 1.0);
    Ok(Similarity { value, branch: SimilarityBranch::Fallback })
}

/// Interquartile range of a set of bar tensions (linear interpolation), the
/// default scale for the absolute-difference similarity. Falls back to twice
/// the standard deviation, then to 1, when the quartiles coincide.
pub fn default_scale_ref(bar_tensions: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = bar_tensions.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = if sorted.is_empty() { 0.0 } else { quantile(0.75) - quantile(0.25) };
    if iqr > 0.0 {
        return iqr;
    }
    let s = 2.0 * variance(&sorted).sqrt();
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}
