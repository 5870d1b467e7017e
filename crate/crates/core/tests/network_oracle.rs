mod common;

use common::random_topology;
use nalgebra::DMatrix;
use ptmp_core::gaussian::{is_physical, CovMatrix, ModeLabel};
use ptmp_core::network::{build_network_cov, ChannelParams, NetworkTopology};
use ptmp_core::reduction::{equivalent_one_way, pairwise_eta_s_channels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each Bob's annihilation operator written as `c * A' + sum_e a_e E_e`,
/// where `A'` is Alice's EPR partner and the `E_e` are independent thermal
/// inputs. Passive optics act identically on x and p, so the covariance
/// matrix follows from the coefficients alone.
struct ModeMap {
    signal: f64,
    env: Vec<f64>,
}

fn oracle_cov(topo: &NetworkTopology, v_m: f64) -> DMatrix<f64> {
    let n = topo.n_bobs();
    // Environment slots: 0 feeder, 1..n splitter vacua, then one per drop.
    let n_env = 1 + (n - 1) + n;
    let mut env_var = vec![1.0; n_env];
    let thermal = |ch: &ChannelParams| 1.0 + ch.transmittance * ch.excess_noise / (1.0 - ch.transmittance);

    let f = topo.feeder.channel;
    env_var[0] = thermal(&f);
    let mut trunk = ModeMap {
        signal: f.transmittance.sqrt(),
        env: vec![0.0; n_env],
    };
    trunk.env[0] = (1.0 - f.transmittance).sqrt();

    let mut outputs: Vec<(u32, ModeMap)> = Vec::new();
    for (s, step) in topo.splitter.steps.iter().enumerate() {
        let (a, b) = (step.eta.sqrt(), (1.0 - step.eta).sqrt());
        let mut peeled = ModeMap {
            signal: a * trunk.signal,
            env: trunk.env.iter().map(|x| a * x).collect(),
        };
        peeled.env[1 + s] -= b;
        let mut next = ModeMap {
            signal: b * trunk.signal,
            env: trunk.env.iter().map(|x| b * x).collect(),
        };
        next.env[1 + s] += a;
        outputs.push((step.bob, peeled));
        trunk = next;
    }
    outputs.push((topo.splitter.last_bob, trunk));

    let mut bobs: Vec<ModeMap> = (0..n).map(|_| ModeMap { signal: 0.0, env: vec![] }).collect();
    for (bob, m) in outputs {
        let ch = topo.drop(bob).channel;
        let slot = n + bob as usize - 1;
        env_var[slot] = thermal(&ch);
        let t = ch.transmittance.sqrt();
        let mut env: Vec<f64> = m.env.iter().map(|x| t * x).collect();
        env[slot] += (1.0 - ch.transmittance).sqrt();
        bobs[bob as usize - 1] = ModeMap {
            signal: t * m.signal,
            env,
        };
    }

    let v = v_m + 1.0;
    let c = (v * v - 1.0).sqrt();
    let d = 2 * (n + 1);
    let mut g = DMatrix::zeros(d, d);
    let mut put = |i: usize, j: usize, x: f64, p: f64| {
        g[(2 * i, 2 * j)] = x;
        g[(2 * j, 2 * i)] = x;
        g[(2 * i + 1, 2 * j + 1)] = p;
        g[(2 * j + 1, 2 * i + 1)] = p;
    };
    put(0, 0, v, v);
    for k in 0..n {
        put(0, k + 1, bobs[k].signal * c, -bobs[k].signal * c);
        for l in k..n {
            let mut cov = bobs[k].signal * bobs[l].signal * v;
            for e in 0..n_env {
                cov += bobs[k].env[e] * bobs[l].env[e] * env_var[e];
            }
            put(k + 1, l + 1, cov, cov);
        }
    }
    g
}

#[test]
fn network_matches_explicit_mode_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..60 {
        let n = 2 + trial % 3;
        let topo = random_topology(&mut rng, n);
        let v_m = rng.random_range(0.5..8.0);
        let g = build_network_cov(&topo, v_m).unwrap();
        let oracle = oracle_cov(&topo, v_m);
        let dev = (g.entries() - &oracle).amax();
        assert!(dev < 1e-12, "trial {trial}: deviation {dev:e}");
        assert!(is_physical(&g).physical);
    }
}

#[test]
fn lossless_split_conserves_signal_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for n in 2..=6 {
        let mut topo = random_topology(&mut rng, n);
        topo.feeder.channel = ChannelParams::ideal();
        for d in &mut topo.drops {
            d.channel = ChannelParams::ideal();
        }
        let v_m = 4.0;
        let g = build_network_cov(&topo, v_m).unwrap();
        let mut excess = 0.0;
        let mut coupling = 0.0;
        for k in 1..=n as u32 {
            let b = g.block_of(ModeLabel::Bob(k), ModeLabel::Bob(k)).unwrap();
            excess += b[(0, 0)] - 1.0;
            coupling += g.block_of(ModeLabel::Alice, ModeLabel::Bob(k)).unwrap()[(0, 0)].powi(2);
        }
        assert!((excess - v_m).abs() < 1e-12);
        assert!((coupling - ((v_m + 1.0).powi(2) - 1.0)).abs() < 1e-11);
    }
}

/// Covariance of `(A, S1, S2)` for a signal of variance `v` split at `eta`
/// and sent through two channels, built with dense matrices.
fn two_channel_cov(v: f64, eta: f64, ch1: &ChannelParams, ch2: &ChannelParams) -> DMatrix<f64> {
    let c = (v * v - 1.0).sqrt();
    let mut g = DMatrix::<f64>::identity(6, 6);
    for q in 0..2 {
        let s = if q == 0 { 1.0 } else { -1.0 };
        g[(q, q)] = v;
        g[(2 + q, 2 + q)] = v;
        g[(q, 2 + q)] = s * c;
        g[(2 + q, q)] = s * c;
    }
    let mut bs = DMatrix::<f64>::identity(6, 6);
    let (a, b) = (eta.sqrt(), (1.0 - eta).sqrt());
    for q in 0..2 {
        bs[(2 + q, 2 + q)] = a;
        bs[(2 + q, 4 + q)] = -b;
        bs[(4 + q, 2 + q)] = b;
        bs[(4 + q, 4 + q)] = a;
    }
    let g = &bs * g * bs.transpose();
    let mut scale = DMatrix::<f64>::identity(6, 6);
    let mut add = DMatrix::<f64>::zeros(6, 6);
    for (m, ch) in [(1, ch1), (2, ch2)] {
        for q in 0..2 {
            scale[(2 * m + q, 2 * m + q)] = ch.transmittance.sqrt();
            add[(2 * m + q, 2 * m + q)] = 1.0 - ch.transmittance + ch.transmittance * ch.excess_noise;
        }
    }
    &scale * g * &scale + add
}

#[test]
fn equivalent_one_way_matches_explicit_fold() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v = rng.random_range(1.5..10.0);
        let eta = rng.random_range(0.02..0.98);
        let ch1 = ChannelParams::new(rng.random_range(0.01..1.0), rng.random_range(0.0..0.2)).unwrap();
        let ch2 = ChannelParams::new(rng.random_range(0.01..1.0), rng.random_range(0.0..0.2)).unwrap();
        let g = two_channel_cov(v, eta, &ch1, &ch2);
        let eta_s = pairwise_eta_s_channels(eta, ch1.transmittance, ch2.transmittance).unwrap();
        let (a, b) = (eta_s.sqrt(), (1.0 - eta_s).sqrt());
        // Kept port sqrt(eta_S) S2 + sqrt(1 - eta_S) S1, dropped port orthogonal.
        let mut bs = DMatrix::<f64>::identity(6, 6);
        for q in 0..2 {
            bs[(4 + q, 4 + q)] = a;
            bs[(4 + q, 2 + q)] = b;
            bs[(2 + q, 4 + q)] = -b;
            bs[(2 + q, 2 + q)] = a;
        }
        let out = &bs * g * bs.transpose();
        let (kept, dropped) = if out[(0, 2)].abs() > out[(0, 4)].abs() { (2, 4) } else { (4, 2) };
        assert!(out[(0, dropped)].abs() < 1e-12);
        let e = equivalent_one_way(eta, &ch1, &ch2).unwrap();
        let expect = e.t_t * v + 1.0 - e.t_t + e.t_t * e.eps_t;
        worst = worst.max((out[(kept, kept)] - expect).abs());
        worst = worst.max((out[(kept + 1, kept + 1)] - expect).abs());
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
}

#[test]
fn random_networks_are_physical() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let topo = random_topology(&mut rng, n);
        let g = build_network_cov(&topo, 4.0).unwrap();
        let check = CovMatrix::new(g.entries().clone(), g.labels().to_vec()).unwrap();
        assert!(is_physical(&check).physical);
    }
}
