//! Shared fixtures for the integration and acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-8 {
            return g / norm;
        }
    }
}

pub fn random_tangent(base: &DVector<f64>, norm: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(base.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let proj = &g - base * base.dot(&g);
        let pnorm = proj.norm();
        if pnorm > 1e-8 {
            return proj * (norm / pnorm);
        }
    }
}

/// Synthetic problem with a known two-template cone and a skewed point
/// distribution. Returns `(X, epsilon)` with `X = W* H*`, `H* >= 0` and
/// `S(W*) <= epsilon`.
///
/// The skew matters: most points cluster at one cone edge, a few sit mid
/// cone, one sits at the far edge. The Karcher mean then lands near the
/// dense edge and the greedy farthest-point initialization picks the far
/// edge plus a mid-cone point, leaving the dense cluster outside the initial
/// cone. The initial fit is therefore genuinely suboptimal while a perfect
/// fit stays feasible within epsilon, which is what makes the decrease
/// regression meaningful.
pub fn skewed_cone_instance(seed: u64) -> (DMatrix<f64>, f64) {
    let n = 5;
    let m = 40;
    let omega = 1.2_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_unit(n, &mut rng);
    let u = random_tangent(&c, 1.0, &mut rng);

    let mut phis = Vec::with_capacity(m);
    for _ in 0..30 {
        phis.push(omega * 0.05 * rng.random::<f64>());
    }
    for _ in 0..9 {
        phis.push(omega * (0.45 + 0.15 * rng.random::<f64>()));
    }
    phis.push(omega);

    let mut x = DMatrix::zeros(n, m);
    for (j, &phi) in phis.iter().enumerate() {
        let r = 0.5 + 1.5 * rng.random::<f64>();
        let col = (&c * phi.cos() + &u * phi.sin()) * r;
        x.set_column(j, &col);
    }

    // The realized spread of [c | exp(omega u)] as floating point sees it.
    let w2 = &c * omega.cos() + &u * omega.sin();
    let spread = c.dot(&w2).clamp(-1.0, 1.0).acos();
    (x, spread + 1e-9)
}

/// Deterministic ionosphere-shaped fixture: 351 points, 34 attributes plus a
/// b/g label, first attribute a 0/1 flag where 0 always means class b,
/// second attribute identically zero.
///
/// Class counts mirror the published dataset (225 g / 126 b); 64 of the b
/// points carry the zero flag, so the preprocessing pipeline retains 287
/// points with 32 attributes. Those two golden numbers are properties of
/// this generator, not of the real file.
pub const SYNTHETIC_RETAINED: usize = 287;
pub const SYNTHETIC_ZERO_FLAG: usize = 64;

pub fn synthetic_ionosphere_csv(seed: u64) -> String {
    let dim = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = {
        let g = DVector::from_fn(dim, |_, _| 0.3 + rng.sample::<f64, _>(StandardNormal).abs());
        let norm = g.norm();
        g / norm
    };

    // (is_good, zero_flag)
    let mut kinds: Vec<(bool, bool)> = Vec::with_capacity(351);
    for _ in 0..225 {
        kinds.push((true, false));
    }
    for i in 0..126 {
        kinds.push((false, i < SYNTHETIC_ZERO_FLAG));
    }
    // Deterministic shuffle so classes interleave like the real file.
    for i in (1..kinds.len()).rev() {
        let j = rng.random_range(0..=i);
        kinds.swap(i, j);
    }

    let mut out = String::new();
    for &(good, zero_flag) in &kinds {
        let t = if good {
            0.1 + 0.4 * rng.random::<f64>()
        } else {
            0.4 + 0.5 * rng.random::<f64>()
        };
        let dir = random_tangent(&center, t, &mut rng);
        let tnorm = dir.norm();
        let point = &center * tnorm.cos() + &dir * (tnorm.sin() / tnorm);
        let flag = if zero_flag { 0 } else { 1 };
        let mut cells: Vec<String> = vec![flag.to_string(), "0".to_string()];
        for i in 0..dim {
            cells.push(format!("{:.5}", point[i]));
        }
        cells.push(if good { "g" } else { "b" }.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// The ionosphere bytes to test against: an explicit path from the
/// environment, the conventional `data/ionosphere.data` in the workspace
/// root, or the synthetic fixture.
pub fn resolve_ionosphere() -> (Vec<u8>, &'static str) {
    if let Ok(path) = std::env::var("TSNMF_IONOSPHERE") {
        if let Ok(bytes) = std::fs::read(&path) {
            return (bytes, "env");
        }
    }
    let conventional = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ionosphere.data");
    if let Ok(bytes) = std::fs::read(conventional) {
        return (bytes, "file");
    }
    (synthetic_ionosphere_csv(20240001).into_bytes(), "synthetic")
}
