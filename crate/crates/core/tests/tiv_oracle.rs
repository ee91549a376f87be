use proptest::prelude::*;
use tension_core::tiv::{angular_distance, compute_tiv, dissonance, euclidean_distance, max_norm, ChromaVector, TonalIntervalVector, WeightProfile};

mod oracles;

use oracles::{chroma_of, dft_dissonance, dft_tiv, WEIGHTS};

fn chroma() -> impl Strategy<Value = [f64; 12]> {
    prop::array::uniform12(prop_oneof![Just(0.0), 0.0f64..4.0]).prop_filter("non-empty", |c| c.iter().sum::<f64>() > 1e-3)
}

fn tiv(c: [f64; 12]) -> TonalIntervalVector<f64> {
    compute_tiv(&ChromaVector::new(c), &WeightProfile::default()).unwrap()
}

#[test]
fn default_profile_is_the_perceptual_weighting() {
    assert_eq!(WeightProfile::<f64>::default().values(), &WEIGHTS);
}

#[test]
fn uniform_chroma_is_maximally_dissonant() {
    let t = tiv([1.0; 12]);
    assert!(t.coeffs().iter().all(|c| c.norm() <= 1e-12));
    assert_eq!(dissonance(&t, max_norm(&WeightProfile::default())).unwrap(), 1.0);
}

#[test]
fn dissonance_of_named_sonorities_matches_the_oracle() {
    let w = WeightProfile::default();
    for pcs in [&[0u8][..], &[0, 7], &[0, 4, 7], &[0, 6], &[0, 1, 2], &[0, 3, 6, 9]] {
        let lib = dissonance(&tiv(chroma_of(pcs)), max_norm(&w)).unwrap();
        assert!((lib - dft_dissonance(&chroma_of(pcs), &WEIGHTS).clamp(0.0, 1.0)).abs() < 1e-12, "{pcs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coefficients_match_direct_dft(c in chroma()) {
        let t = tiv(c);
        for (got, want) in t.coeffs().iter().zip(dft_tiv(&c, &WEIGHTS)) {
            prop_assert!((got.re - want.0).abs() < 1e-9 && (got.im - want.1).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_is_a_metric(a in chroma(), b in chroma(), c in chroma()) {
        let (a, b, c) = (tiv(a), tiv(b), tiv(c));
        let d = |x, y| euclidean_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn angle_ignores_positive_scale(a in chroma(), b in chroma(), s in 1e-3f64..1e3) {
        let (a, b) = (tiv(a), tiv(b));
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        let base = angular_distance(&a, &b).unwrap();
        prop_assert!((angular_distance(&a.scaled(s), &b).unwrap() - base).abs() < 1e-9);
        prop_assert!((angular_distance(&a, &b.scaled(s)).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn dissonance_is_transposition_invariant(c in chroma(), k in 0usize..12) {
        let w = WeightProfile::default();
        let rotated = compute_tiv(&ChromaVector::new(c).rotated(k), &w).unwrap();
        prop_assert!((dissonance(&tiv(c), max_norm(&w)).unwrap() - dissonance(&rotated, max_norm(&w)).unwrap()).abs() < 1e-12);
    }
}
