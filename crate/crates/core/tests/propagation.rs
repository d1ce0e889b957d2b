use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holocolor::field::ComplexField;
use holocolor::propagation::{propagate, PropagationParams, Propagator};

fn random_field(n: usize, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ComplexField::new(n, n, 1.0, 540.0, data).unwrap()
}

#[test]
fn distances_compose() {
    // pitch 1 µm keeps every frequency propagating at 540 nm
    let u = random_field(32, 1);
    let a = propagate(&propagate(&u, PropagationParams::new(30.0, 1.0)).unwrap(), PropagationParams::new(45.0, 1.0))
        .unwrap();
    let b = propagate(&u, PropagationParams::new(75.0, 1.0)).unwrap();
    let err = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn zero_distance_is_identity() {
    let u = random_field(16, 2);
    let v = propagate(&u, PropagationParams::new(0.0, 1.0)).unwrap();
    let err = u.data().iter().zip(v.data()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(err < 1e-14);
}

#[test]
fn plane_wave_only_gains_phase() {
    let u = ComplexField::filled(16, 16, 0.5, 540.0, Complex64::new(1.0, 0.0)).unwrap();
    let z = 12.0;
    let v = propagate(&u, PropagationParams::new(z, 1.33)).unwrap();
    let expected = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 1.33 * z / 0.54);
    for p in v.data() {
        assert!((p - expected).norm() < 1e-12);
    }
}

#[test]
fn reusable_propagator_matches_one_shot() {
    let u = random_field(24, 3);
    let params = PropagationParams::new(-40.0, 1.0);
    let p = Propagator::for_field(&u, params).unwrap();
    let a = p.apply(&u).unwrap();
    let b = propagate(&u, params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evanescent_components_are_removed() {
    // pitch below λ/2: the highest frequencies cannot propagate
    let mut data = vec![Complex64::new(0.0, 0.0); 64];
    for (i, v) in data.iter_mut().enumerate() {
        *v = Complex64::new(if (i % 8 + i / 8) % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
    }
    let checker = ComplexField::new(8, 8, 0.2, 540.0, data).unwrap();
    let v = propagate(&checker, PropagationParams::new(5.0, 1.0)).unwrap();
    assert!(v.l2_norm() < 1e-12);
}
