mod common;

use common::{brute_symplectic, entropy_oracle, random_physical, random_symplectic};
use nalgebra::DMatrix;
use proptest::prelude::*;
use ptmp_core::gaussian::{
    apply_symplectic, heterodyne_condition, is_physical, symplectic_eigenvalues, von_neumann_entropy, CovMatrix,
    ModeLabel, SymplecticOp,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn labels(n: usize) -> Vec<ModeLabel> {
    let mut l = vec![ModeLabel::Alice];
    l.extend((1..n as u32).map(ModeLabel::Bob));
    l
}

#[test]
fn symplectic_eigenvalues_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..500 {
        let n = 1 + i % 4;
        let (g, _) = random_physical(&mut rng, n);
        let cm = CovMatrix::new(g.clone(), labels(n)).unwrap();
        let mut ours = symplectic_eigenvalues(&cm).unwrap();
        ours.sort_by(|a, b| a.total_cmp(b));
        let oracle = brute_symplectic(&g);
        for (a, b) in ours.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn known_spectrum_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=4 {
        let (g, nus) = random_physical(&mut rng, n);
        let cm = CovMatrix::new(g, labels(n)).unwrap();
        let mut ours = symplectic_eigenvalues(&cm).unwrap();
        ours.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in ours.iter().zip(&nus) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn entropy_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 1..=4 {
        let (g, _) = random_physical(&mut rng, n);
        let cm = CovMatrix::new(g.clone(), labels(n)).unwrap();
        let ours = von_neumann_entropy(&cm).unwrap();
        assert!((ours - entropy_oracle(&g)).abs() < 1e-9);
    }
}

#[test]
fn heterodyne_conditioning_matches_schur_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (g, _) = random_physical(&mut rng, 3);
    let cm = CovMatrix::new(g.clone(), labels(3)).unwrap();
    let cond = heterodyne_condition(&cm, ModeLabel::Bob(2)).unwrap();
    let a = g.view((0, 0), (4, 4)).into_owned();
    let c = g.view((0, 4), (4, 2)).into_owned();
    let b = g.view((4, 4), (2, 2)).into_owned() + DMatrix::identity(2, 2);
    let expect = a - &c * b.try_inverse().unwrap() * c.transpose();
    assert!((cond.entries() - expect).amax() < 1e-12);
    assert!(is_physical(&cond).physical);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symplectic_action_keeps_spectrum_and_physicality(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_physical(&mut rng, n);
        let cm = CovMatrix::new(g, labels(n)).unwrap();
        let s = random_symplectic(&mut rng, n, 6);
        let op = SymplecticOp::new(s, "random").unwrap();
        let out = apply_symplectic(&cm, &op).unwrap();
        prop_assert!(is_physical(&out).physical);
        let mut a = symplectic_eigenvalues(&cm).unwrap();
        let mut b = symplectic_eigenvalues(&out).unwrap();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8 * x.max(1.0));
        }
        let ds = von_neumann_entropy(&cm).unwrap() - von_neumann_entropy(&out).unwrap();
        prop_assert!(ds.abs() < 1e-8);
    }

    #[test]
    fn conditioning_keeps_physicality(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_physical(&mut rng, n);
        let cm = CovMatrix::new(g, labels(n)).unwrap();
        let cond = heterodyne_condition(&cm, ModeLabel::Bob(1)).unwrap();
        prop_assert!(is_physical(&cond).physical);
        prop_assert_eq!(cond.n_modes(), n - 1);
    }

    #[test]
    fn shrunk_spectrum_is_unphysical(seed in any::<u64>(), n in 1usize..=3, shrink in 0.05f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_symplectic(&mut rng, n, 4);
        let mut d = DMatrix::<f64>::identity(2 * n, 2 * n);
        d[(0, 0)] = 1.0 - shrink;
        d[(1, 1)] = 1.0 - shrink;
        let g = &s * d * s.transpose();
        let g = (&g + g.transpose()) * 0.5;
        let cm = CovMatrix::new(g, labels(n)).unwrap();
        prop_assert!(!is_physical(&cm).physical);
    }
}
