//! Regular part of the current and its stream function.
//!
//! Away from the core the current splits as
//! `j(u) = theta_hat Lambda / (2 pi r) + perp_grad psi` with
//! `perp_grad psi = (psi_y, -psi_x)`. The stream function solves a Neumann
//! problem `Lap psi = -curl V`, `-grad psi . nu = V . tau`, where
//! `V = j - theta_hat Lambda / (2 pi r)`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::AnalysisError;
use crate::field::{
    current_field, div_and_curl, make_disk_domain, partial, CellTag, DomainMask, GridSpec,
    ScalarField, TensorField, VectorField,
};
use crate::tensor::{AntiSymTensor3, Linear};

/// Radius of the disk about the core excluded from residual norms.
pub const GUARD_RADIUS: f64 = 0.1;
/// Relative residual target of the conjugate gradient iteration.
pub const CG_TOL: f64 = 1e-9;

pub type AntiSymField = ScalarField<AntiSymTensor3>;

/// `V = j - theta_hat Lambda / (2 pi r)` about `center`. The cell containing
/// `center` is marked invalid.
pub fn regular_part(
    current: &VectorField<AntiSymTensor3>,
    center: [f64; 2],
    lam: AntiSymTensor3,
) -> VectorField<AntiSymTensor3> {
    let mut out = subtract_vortex(current, center, lam);
    if let Some(idx) = current.grid.locate(center) {
        out.valid[idx] = false;
    }
    out
}

/// Like [`regular_part`] but keeps the singular cell, so that the centered
/// curl telescopes to the face circulation on the boundary.
fn subtract_vortex(
    current: &VectorField<AntiSymTensor3>,
    center: [f64; 2],
    lam: AntiSymTensor3,
) -> VectorField<AntiSymTensor3> {
    let grid = current.grid;
    let mut out = current.clone();
    for idx in 0..grid.len() {
        let c = grid.center(idx);
        let (dx, dy) = (c[0] - center[0], c[1] - center[1]);
        let r2 = dx * dx + dy * dy;
        if !out.valid[idx] || r2 == 0.0 {
            continue;
        }
        let k = 1.0 / (2.0 * PI * r2);
        // theta_hat / r = (-dy, dx) / r^2
        out.f1[idx] += lam * (dy * k);
        out.f2[idx] = out.f2[idx] - lam * (dx * k);
    }
    out
}

/// Interior-cell numbering and interior-neighbour lists.
struct InteriorGraph {
    cells: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl InteriorGraph {
    fn new(mask: &DomainMask) -> Self {
        let grid = mask.grid();
        let cells: Vec<usize> = (0..grid.len()).filter(|&i| mask.is_interior(i)).collect();
        let mut slot = vec![usize::MAX; grid.len()];
        for (k, &c) in cells.iter().enumerate() {
            slot[c] = k;
        }
        let neighbors = cells
            .iter()
            .map(|&c| {
                grid.neighbors(c)
                    .into_iter()
                    .flatten()
                    .filter(|q| mask.is_interior(*q))
                    .map(|q| slot[q])
                    .collect()
            })
            .collect();
        InteriorGraph { cells, neighbors }
    }

    /// `(L x)_p = sum_q (x_p - x_q)` over interior neighbours.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (p, nb) in self.neighbors.iter().enumerate() {
            let mut s = nb.len() as f64 * x[p];
            for &q in nb {
                s -= x[q];
            }
            out[p] = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Conjugate gradients for the semidefinite graph Laplacian with a
/// mean-zero right-hand side.
fn cg(graph: &InteriorGraph, f: &[f64]) -> Result<(Vec<f64>, usize), AnalysisError> {
    let n = f.len();
    let mut x = vec![0.0; n];
    let fnorm = dot(f, f).sqrt();
    if fnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = CG_TOL * fnorm;
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let budget = 20 * n + 100;
    for it in 1..=budget {
        graph.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        remove_mean(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            remove_mean(&mut x);
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(AnalysisError::SolverDiverged {
        residual: rr.sqrt() / fnorm,
        iterations: budget,
    })
}

/// Sum over the boundary faces of each cell of `flux(p, q, nu)`, where `q`
/// is the boundary neighbour and `nu` the outward unit normal of the face.
pub fn face_flux_sum<T: Linear>(
    mask: &DomainMask,
    flux: impl Fn(usize, usize, [f64; 2]) -> T,
) -> Vec<T> {
    const NORMALS: [[f64; 2]; 4] = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let grid = mask.grid();
    (0..grid.len())
        .map(|p| {
            let mut acc = T::default();
            if mask.is_interior(p) {
                for (q, nu) in grid.neighbors(p).into_iter().zip(NORMALS) {
                    let q = q.expect("interior cells have four neighbours");
                    if mask.tag(q) == CellTag::Boundary {
                        acc = acc + flux(p, q, nu);
                    }
                }
            }
            acc
        })
        .collect()
}

/// Solution of a scalar Neumann problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarNeumann {
    /// Values at every grid cell; zero off the interior.
    pub psi: Vec<f64>,
    /// `int rhs + oint b` before correction.
    pub mismatch: f64,
    pub iterations: usize,
}

/// Cell-centered finite volumes for `Lap psi = rhs` on interior cells with
/// face data `b = -grad psi . nu` summed per cell in `flux_sum`. The pair is
/// made compatible by shifting `rhs` by a constant; the result has zero mean.
pub fn solve_neumann_scalar(
    mask: &DomainMask,
    rhs: &[f64],
    flux_sum: &[f64],
) -> Result<ScalarNeumann, AnalysisError> {
    let graph = InteriorGraph::new(mask);
    solve_on(&graph, mask.grid(), rhs, flux_sum)
}

fn solve_on(
    graph: &InteriorGraph,
    grid: &GridSpec,
    rhs: &[f64],
    flux_sum: &[f64],
) -> Result<ScalarNeumann, AnalysisError> {
    let h = grid.h;
    let h2 = h * h;
    let area = graph.cells.len() as f64 * h2;
    let mismatch: f64 = graph
        .cells
        .iter()
        .map(|&c| h2 * rhs[c] + h * flux_sum[c])
        .sum();
    let shift = mismatch / area;
    // L psi = -h^2 (rhs - shift) - h b
    let f: Vec<f64> = graph
        .cells
        .iter()
        .map(|&c| -h2 * (rhs[c] - shift) - h * flux_sum[c])
        .collect();
    let (x, iterations) = cg(graph, &f)?;
    let mut psi = vec![0.0; grid.len()];
    for (k, &c) in graph.cells.iter().enumerate() {
        psi[c] = x[k];
    }
    Ok(ScalarNeumann {
        psi,
        mismatch,
        iterations,
    })
}

/// Componentwise Neumann solve for antisymmetric data.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannSolution {
    pub psi: AntiSymField,
    pub mismatch: AntiSymTensor3,
}

pub fn solve_neumann_poisson(
    mask: &DomainMask,
    rhs: &[AntiSymTensor3],
    flux_sum: &[AntiSymTensor3],
) -> Result<NeumannSolution, AnalysisError> {
    let graph = InteriorGraph::new(mask);
    let grid = *mask.grid();
    let mut psi = vec![AntiSymTensor3::ZERO; grid.len()];
    let mut mismatch = [0.0; 3];
    for comp in 0..3 {
        let r: Vec<f64> = rhs.iter().map(|a| a.to_array()[comp]).collect();
        let b: Vec<f64> = flux_sum.iter().map(|a| a.to_array()[comp]).collect();
        let sol = solve_on(&graph, &grid, &r, &b)?;
        mismatch[comp] = sol.mismatch;
        for (slot, v) in psi.iter_mut().zip(sol.psi) {
            let mut a = slot.to_array();
            a[comp] = v;
            *slot = AntiSymTensor3::from_array(a);
        }
    }
    let valid = (0..grid.len()).map(|i| mask.is_interior(i)).collect();
    Ok(NeumannSolution {
        psi: ScalarField {
            grid,
            values: psi,
            valid,
        },
        mismatch: AntiSymTensor3::from_array(mismatch),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiReport {
    pub psi: AntiSymField,
    /// `L^2` norm of the discrete divergence of `V` off the guard disk.
    pub div_residual: f64,
    /// `L^1` norm of the stream-function equation residual off the guard disk.
    pub cmc_residual_l1: f64,
    /// Largest cell norm of `psi` off the guard disk.
    pub sup_norm: f64,
    /// `L^2` norm of `(Lambda - u Lambda - Lambda u) / (2 pi r)`.
    pub z_l2: f64,
    pub compat_mismatch: f64,
    /// Largest `|grad psi|` on the ring `GUARD_RADIUS <= r < 2 GUARD_RADIUS`.
    pub core_gradient: f64,
    pub center: [f64; 2],
}

fn dist(grid: &GridSpec, idx: usize, center: [f64; 2]) -> f64 {
    let c = grid.center(idx);
    (c[0] - center[0]).hypot(c[1] - center[1])
}

/// Splits off the singular current about `center`, solves for `psi` and
/// evaluates the residuals.
pub fn recover_psi(
    field: &TensorField,
    center: [f64; 2],
    lam: AntiSymTensor3,
) -> Result<PsiReport, AnalysisError> {
    let mask = field.mask();
    let grid = *mask.grid();
    let h2 = grid.h * grid.h;
    let v = subtract_vortex(&current_field(field), center, lam);
    let (_, curl) = div_and_curl(&v);
    let (div, _) = div_and_curl(&regular_part(&current_field(field), center, lam));
    let rhs: Vec<AntiSymTensor3> = (0..grid.len())
        .map(|i| {
            if mask.is_interior(i) && curl.valid[i] {
                -curl.values[i]
            } else {
                AntiSymTensor3::ZERO
            }
        })
        .collect();
    let flux = face_flux_sum(mask, |p, q, nu| {
        let tau = [-nu[1], nu[0]];
        let v1 = (v.f1[p] + v.f1[q]) * 0.5;
        let v2 = (v.f2[p] + v.f2[q]) * 0.5;
        v1 * tau[0] + v2 * tau[1]
    });
    let sol = solve_neumann_poisson(mask, &rhs, &flux)?;
    let psi = sol.psi;

    let outside = |i: usize| dist(&grid, i, center) >= GUARD_RADIUS;
    let div_residual = div.l2_norm_where(|i| mask.is_interior(i) && outside(i));
    let cmc_residual_l1 = (0..grid.len())
        .filter(|&i| outside(i))
        .filter_map(|i| cmc_residual_at(&psi, i, center, lam))
        .map(|r| r.norm() * h2)
        .sum();
    let sup_norm = sup_norm_where(&psi, outside);
    let singular = grid.locate(center);
    let z_l2 = (0..grid.len())
        .filter(|&i| mask.is_interior(i) && Some(i) != singular)
        .map(|i| {
            let u = field.get(i).to_mat();
            let l = lam.to_mat();
            let z = (l - u * l - l * u) * (1.0 / (2.0 * PI * dist(&grid, i, center)));
            z.norm_sq() * h2
        })
        .sum::<f64>()
        .sqrt();
    let core_gradient = ring_gradient(&psi, center, GUARD_RADIUS);
    Ok(PsiReport {
        psi,
        div_residual,
        cmc_residual_l1,
        sup_norm,
        z_l2,
        compat_mismatch: sol.mismatch.norm(),
        core_gradient,
        center,
    })
}

fn ring_gradient(psi: &AntiSymField, center: [f64; 2], delta: f64) -> f64 {
    (0..psi.values.len())
        .filter(|&i| {
            let r = dist(&psi.grid, i, center);
            psi.valid[i] && r >= delta && r < 2.0 * delta
        })
        .filter_map(|i| {
            let gx = partial(&psi.grid, &psi.valid, &psi.values, i, 0, true)?;
            let gy = partial(&psi.grid, &psi.valid, &psi.values, i, 1, true)?;
            Some((gx.norm_sq() + gy.norm_sq()).sqrt())
        })
        .fold(0.0, f64::max)
}

/// `Lap psi - 2 [psi_x; psi_y] - [grad psi . theta_hat; Lambda] / (pi r)`
/// where all four neighbours carry `psi`.
pub fn cmc_residual_at(
    psi: &AntiSymField,
    idx: usize,
    center: [f64; 2],
    lam: AntiSymTensor3,
) -> Option<AntiSymTensor3> {
    let grid = &psi.grid;
    if !psi.valid[idx] {
        return None;
    }
    let px = partial(grid, &psi.valid, &psi.values, idx, 0, true)?;
    let py = partial(grid, &psi.valid, &psi.values, idx, 1, true)?;
    let nb = grid.neighbors(idx);
    let mut lap = psi.values[idx] * -4.0;
    for q in nb.into_iter().flatten() {
        lap += psi.values[q];
    }
    let lap = lap * (1.0 / (grid.h * grid.h));
    let c = grid.center(idx);
    let (dx, dy) = (c[0] - center[0], c[1] - center[1]);
    let r = dx.hypot(dy);
    let dtheta = (px * -dy + py * dx) * (1.0 / r);
    Some(lap - px.commutator(&py) * 2.0 - dtheta.commutator(&lam) * (1.0 / (PI * r)))
}

pub fn sup_norm_where(psi: &AntiSymField, keep: impl Fn(usize) -> bool) -> f64 {
    (0..psi.values.len())
        .filter(|&i| psi.valid[i] && keep(i))
        .map(|i| psi.values[i].norm())
        .fold(0.0, f64::max)
}

/// Largest cell norm of `psi` on the annulus `delta <= r < 2 delta`.
pub fn annulus_sup(psi: &AntiSymField, center: [f64; 2], delta: f64) -> f64 {
    sup_norm_where(psi, |i| {
        let r = dist(&psi.grid, i, center);
        r >= delta && r < 2.0 * delta
    })
}

pub const PSI_REPORT_HEADER: &str =
    "eps,h,div_residual,cmc_residual_l1,sup_norm,z_l2,compat_mismatch";
pub const PSI_FIELD_HEADER: &str = "x,y,psi_12,psi_13,psi_23";

pub fn write_psi_report(
    rows: &[(f64, &PsiReport)],
    h: f64,
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{PSI_REPORT_HEADER}")?;
    for (eps, r) in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            eps, h, r.div_residual, r.cmc_residual_l1, r.sup_norm, r.z_l2, r.compat_mismatch
        )?;
    }
    Ok(())
}

pub fn write_psi_field(psi: &AntiSymField, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{PSI_FIELD_HEADER}")?;
    for idx in 0..psi.values.len() {
        if psi.valid[idx] {
            let c = psi.grid.center(idx);
            let a = psi.values[idx];
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                c[0], c[1], a.a12, a.a13, a.a23
            )?;
        }
    }
    Ok(())
}

/// Max error of the Neumann solver against a smooth manufactured solution
/// on the unit disk with `n` cells per side.
pub fn manufactured_poisson_error(n: usize) -> Result<f64, AnalysisError> {
    let mask = make_disk_domain(n, 1.0).expect("disk grid");
    let grid = *mask.grid();
    let psi = |p: [f64; 2]| (1.3 * p[0]).sin() * (0.7 * p[1] + 0.2).cos() + p[0] * p[1];
    let grad = |p: [f64; 2]| {
        [
            1.3 * (1.3 * p[0]).cos() * (0.7 * p[1] + 0.2).cos() + p[1],
            -0.7 * (1.3 * p[0]).sin() * (0.7 * p[1] + 0.2).sin() + p[0],
        ]
    };
    let lap = |p: [f64; 2]| -(1.69 + 0.49) * (1.3 * p[0]).sin() * (0.7 * p[1] + 0.2).cos();
    let rhs: Vec<f64> = (0..grid.len()).map(|i| lap(grid.center(i))).collect();
    let flux = face_flux_sum(&mask, |p, _, nu| {
        let c = grid.center(p);
        let face = [c[0] + 0.5 * grid.h * nu[0], c[1] + 0.5 * grid.h * nu[1]];
        let g = grad(face);
        -(g[0] * nu[0] + g[1] * nu[1])
    });
    let sol = solve_neumann_scalar(&mask, &rhs, &flux)?;
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| mask.is_interior(i)).collect();
    let mean = interior.iter().map(|&i| psi(grid.center(i))).sum::<f64>() / interior.len() as f64;
    Ok(interior
        .iter()
        .map(|&i| (sol.psi[i] - (psi(grid.center(i)) - mean)).abs())
        .fold(0.0, f64::max))
}
