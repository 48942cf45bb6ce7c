//! Built-in oracle checks run by `ldg selftest`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::psi::manufactured_poisson_error;
use crate::tensor::{
    antisym_rep, eigen_sym3, geodesic_length, grad_wbeta, potential_wbeta, sample_gamma0,
    simplex_project, sym_inner, SymTensor3,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Euclidean projection onto the probability simplex by enumerating the
/// supports and keeping the closest feasible candidate.
pub fn simplex_projection_by_supports(x: [f64; 3]) -> [f64; 3] {
    let mut best = ([0.0; 3], f64::INFINITY);
    for support in 1u8..8 {
        let idx: Vec<usize> = (0..3).filter(|i| support & (1 << i) != 0).collect();
        let shift = (idx.iter().map(|&i| x[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut y = [0.0; 3];
        for &i in &idx {
            y[i] = x[i] - shift;
        }
        if y.iter().all(|v| *v >= -1e-15) {
            let d: f64 = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum();
            if d < best.1 {
                best = (y, d);
            }
        }
    }
    best.0
}

fn random_sym(rng: &mut ChaCha8Rng) -> SymTensor3 {
    SymTensor3::from_array([(); 6].map(|_| rng.gen_range(-1.0..1.0)))
}

/// Runs the oracle suite; `tol_scale` multiplies every tolerance.
pub fn run_checks(tol_scale: f64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let mut push = |name, value: f64, tol: f64| {
        let tolerance = tol * tol_scale;
        out.push(CheckResult {
            name,
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        });
    };

    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let mut l: [f64; 3] = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), 0.0];
        l[2] = 1.0 - l[0] - l[1];
        l.sort_by(|a, b| b.total_cmp(a));
        if let Ok(p) = simplex_project(l) {
            let q = simplex_projection_by_supports(l);
            worst = worst.max((0..3).map(|i| (p[i] - q[i]).abs()).fold(0.0, f64::max));
        } else {
            worst = f64::INFINITY;
        }
    }
    push("simplex projection vs support enumeration", worst, 1e-8);

    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let u = random_sym(&mut rng);
        worst = worst.max((eigen_sym3(&u).reconstruct() - u).max_abs());
    }
    push("eigen reconstruction", worst, 1e-10);

    let mut worst: f64 = 0.0;
    for beta in [2.0, 3.0, 5.5] {
        for _ in 0..300 {
            let u = random_sym(&mut rng).with_unit_trace();
            let d = random_sym(&mut rng).traceless();
            let s = 1e-5;
            let fd = (potential_wbeta(&(u + d * s), beta) - potential_wbeta(&(u - d * s), beta))
                / (2.0 * s);
            let an = sym_inner(&grad_wbeta(&u, beta), &d);
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    push("potential gradient vs central differences", worst, 1e-6);

    let l0 = geodesic_length(&sample_gamma0(4096));
    push(
        "geodesic length of the boundary loop",
        (l0 - 2f64.sqrt() * PI).abs(),
        1e-3,
    );

    let rep = antisym_rep(&sample_gamma0(512));
    let want = 1.0 / (4.0 * PI);
    let dev = (rep.mean.a12 - want)
        .abs()
        .max(rep.mean.a13.abs())
        .max(rep.mean.a23.abs());
    push("antisymmetric representative of the loop", dev, 1e-3);

    let ratio = match (
        manufactured_poisson_error(32),
        manufactured_poisson_error(64),
    ) {
        (Ok(a), Ok(b)) => a / b,
        _ => f64::NAN,
    };
    push(
        "Poisson solver order (|ratio - 4|)",
        (ratio - 4.0).abs(),
        0.5,
    );

    out
}

/// Geodesic length estimate printed alongside the table.
pub fn loop_length_estimate() -> f64 {
    geodesic_length(&sample_gamma0(4096))
}
