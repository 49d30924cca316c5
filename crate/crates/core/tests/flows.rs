//! Flow oracles: exact inverses, log-determinants against a numerical
//! Jacobian, and parameter gradients against central finite differences.

use isodr_core::flows::{FlowArch, FlowModel, FlowTrainConfig, GlowConfig, NiceConfig};
use isodr_core::rng::SplitMix64;
use isodr_core::EmbeddingMatrix;

fn small_nice() -> FlowArch {
    FlowArch::Nice(NiceConfig { couplings: 4, hidden_layers: 2, hidden_width: 8 })
}

fn small_glow() -> FlowArch {
    FlowArch::Glow(GlowConfig { levels: 2, depth: 3, hidden_layers: 2, hidden_width: 8 })
}

/// Model with every parameter replaced by a scaled Gaussian draw.
fn randomized(arch: FlowArch, dim: usize, seed: u64, scale: f64) -> FlowModel {
    let mut rng = SplitMix64::new(seed);
    let mut model = arch.build(dim, &mut rng).unwrap();
    let p: Vec<f64> = (0..model.param_count()).map(|_| scale * rng.gaussian()).collect();
    model.set_flat_params(&p).unwrap();
    model
}

fn random_batch(rows: usize, dim: usize, seed: u64, amp: f64) -> EmbeddingMatrix {
    let mut rng = SplitMix64::new(seed);
    EmbeddingMatrix::new(dim, (0..rows * dim).map(|_| amp * (2.0 * rng.uniform() - 1.0)).collect()).unwrap()
}

/// log|det| by Gaussian elimination with partial pivoting.
fn log_abs_det(mut a: Vec<f64>, n: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
        if p != c {
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
            }
        }
        let piv = a[c * n + c];
        acc += piv.abs().ln();
        for r in (c + 1)..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    acc
}

fn numerical_logdet(model: &FlowModel, x: &[f64]) -> f64 {
    let n = x.len();
    let h = 1e-5;
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let zp = model.apply(&EmbeddingMatrix::new(n, xp).unwrap()).unwrap();
        let zm = model.apply(&EmbeddingMatrix::new(n, xm).unwrap()).unwrap();
        for i in 0..n {
            jac[i * n + j] = (zp.values()[i] - zm.values()[i]) / (2.0 * h);
        }
    }
    log_abs_det(jac, n)
}

fn close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff <= rel * analytic.abs().max(numeric.abs())
}

#[test]
fn round_trip_nice_and_glow() {
    let x = random_batch(1024, 8, 1, 10.0);
    let nice = randomized(small_nice(), 8, 2, 0.1);
    let glow = randomized(small_glow(), 8, 3, 0.1);
    for (model, tol) in [(&nice, 1e-9), (&glow, 1e-6)] {
        let z = model.apply(&x).unwrap();
        let back = model.inverse(&z).unwrap();
        let err = x.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= tol, "round-trip error {err}");
    }
}

#[test]
fn logdet_matches_numerical_jacobian() {
    for arch in [small_nice(), small_glow()] {
        for seed in 0..20 {
            let model = randomized(arch, 6, 100 + seed, 0.1);
            let x = random_batch(1, 6, 200 + seed, 2.0);
            let (_, ld) = model.forward(&x).unwrap();
            let num = numerical_logdet(&model, x.values());
            assert!(close(ld[0], num, 1e-4, 1e-8), "{arch:?} seed {seed}: {} vs {num}", ld[0]);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let h = 1e-5;
    for arch in [small_nice(), small_glow()] {
        let model = randomized(arch, 6, 7, 0.1);
        let batch = random_batch(5, 6, 8, 2.0);
        let analytic = model.nll_gradient(&batch).unwrap();
        let base = model.flat_params();
        let mut probe = model.clone();
        let mut worst = 0.0f64;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            probe.set_flat_params(&p).unwrap();
            let up = probe.nll(&batch).unwrap();
            p[i] -= 2.0 * h;
            probe.set_flat_params(&p).unwrap();
            let down = probe.nll(&batch).unwrap();
            let fd = (up - down) / (2.0 * h);
            let a = analytic.grad[i];
            assert!(close(a, fd, 1e-4, 1e-8), "{arch:?} param {i}: analytic {a}, fd {fd}");
            worst = worst.max((a - fd).abs());
        }
        assert!(worst.is_finite());
    }
}

#[test]
fn duplicated_batch_gives_same_gradient() {
    let model = randomized(small_glow(), 6, 9, 0.1);
    let batch = random_batch(4, 6, 10, 1.0);
    let doubled = EmbeddingMatrix::vstack(&[&batch, &batch]).unwrap();
    let a = model.nll_gradient(&batch).unwrap();
    let b = model.nll_gradient(&doubled).unwrap();
    assert!((a.nll - b.nll).abs() < 1e-12);
    for (x, y) in a.grad.iter().zip(&b.grad) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn nll_is_permutation_invariant() {
    let model = randomized(small_nice(), 6, 11, 0.1);
    let batch = random_batch(9, 6, 12, 1.0);
    let rev: Vec<usize> = (0..9).rev().collect();
    let a = model.nll(&batch).unwrap();
    let b = model.nll(&batch.select_rows(&rev)).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn identity_nll_matches_monte_carlo_expectation() {
    // E[D/2 log 2pi + |x|^2/2] = D/2 (log 2pi + 1) for standard normal x.
    let dim = 16;
    let rows = 4000;
    let mut rng = SplitMix64::new(21);
    let x = EmbeddingMatrix::new(dim, (0..rows * dim).map(|_| rng.gaussian()).collect()).unwrap();
    let model = small_nice().build(dim, &mut SplitMix64::new(0)).unwrap();
    let nll = model.nll(&x).unwrap();
    let expected = dim as f64 / 2.0 * ((2.0 * std::f64::consts::PI).ln() + 1.0);
    // per-row sd of |x|^2/2 is sqrt(2D)/2
    let sigma = (2.0 * dim as f64).sqrt() / 2.0 / (rows as f64).sqrt();
    assert!((nll - expected).abs() <= 3.0 * sigma, "{nll} vs {expected}");
    assert!((expected - 22.703).abs() < 1e-3);
}

#[test]
fn training_is_deterministic_and_reports_each_epoch() {
    let x = random_batch(64, 6, 30, 3.0);
    let cfg = FlowTrainConfig { epochs: 2, batch_size: 16, seed: 4, learning_rate: 1e-3, ..Default::default() };
    for arch in [small_nice(), small_glow()] {
        let (m1, r1) = isodr_core::flows::train_flow(&x, &arch, &cfg).unwrap();
        let (m2, r2) = isodr_core::flows::train_flow(&x, &arch, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert_eq!(r1.epoch_nll.len(), 2);
        assert_eq!(r1.steps, 8);
    }
    let bad = FlowTrainConfig { epochs: 0, ..cfg };
    assert!(isodr_core::flows::train_flow(&x, &small_nice(), &bad).is_err());
}

#[test]
fn untrained_nll_equals_standard_normal_nll_of_data() {
    let x = random_batch(50, 8, 40, 4.0);
    let cfg = FlowTrainConfig { epochs: 1, batch_size: 50, ..Default::default() };
    let analytic = x
        .rows()
        .map(|r| 4.0 * (2.0 * std::f64::consts::PI).ln() + 0.5 * r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / 50.0;
    for arch in [small_nice(), small_glow()] {
        let (_, report) = isodr_core::flows::train_flow(&x, &arch, &cfg).unwrap();
        assert!((report.initial_nll - analytic).abs() < 1e-10);
    }
}
