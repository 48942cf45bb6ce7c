//! Defect location, circulation, Pohozaev function and energy scaling.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::AnalysisError;
use crate::field::{current_field, gradient_field, ScalarField, TensorField, VectorField};
use crate::tensor::{eigen_sym3, AntiSymTensor3, Linear, Potential, SymTensor3};

/// Quadrature nodes on each circle.
pub const CIRCLE_NODES: usize = 256;
/// Peak distance to P below which a field counts as defect-free.
pub const NO_DEFECT_THRESHOLD: f64 = 0.1;
/// Relative height of a secondary peak that flags a second defect.
pub const SECONDARY_RATIO: f64 = 0.5;
/// Separation, in cells, beyond which a secondary peak counts.
pub const SECONDARY_SEPARATION: f64 = 10.0;
/// Default radii as fractions of the domain radius.
pub const DEFAULT_RADII: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// `sqrt((1 - l1)^2 + l2^2 + l3^2)`, the distance from `u` to the nearest
/// rank-one projection.
pub fn dist_to_p(u: &SymTensor3) -> f64 {
    let l = eigen_sym3(u).values;
    ((1.0 - l[0]).powi(2) + l[1] * l[1] + l[2] * l[2]).sqrt()
}

pub fn dist_to_p_field(field: &TensorField) -> ScalarField<f64> {
    let grid = *field.grid();
    let valid: Vec<bool> = (0..grid.len()).map(|i| field.mask().is_active(i)).collect();
    let values = (0..grid.len())
        .map(|i| {
            if valid[i] {
                dist_to_p(&field.get(i))
            } else {
                0.0
            }
        })
        .collect();
    ScalarField {
        grid,
        values,
        valid,
    }
}

/// Refined core position and peak height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectCore {
    pub position: [f64; 2],
    pub peak: f64,
    pub cell: usize,
}

/// Offset of the stationary point of the least-squares quadratic through a
/// 3x3 stencil `f[dy + 1][dx + 1]`, in cell units, clamped to the stencil.
fn quadratic_peak(f: [[f64; 3]; 3]) -> [f64; 2] {
    let (mut b, mut c, mut e, mut d, mut g) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (jy, row) in f.iter().enumerate() {
        for (jx, v) in row.iter().enumerate() {
            let x = jx as f64 - 1.0;
            let y = jy as f64 - 1.0;
            b += x * v / 6.0;
            c += y * v / 6.0;
            e += x * y * v / 4.0;
            d += (x * x - 2.0 / 3.0) * v / 2.0;
            g += (y * y - 2.0 / 3.0) * v / 2.0;
        }
    }
    // Hessian [[2d, e], [e, 2g]] must be negative definite.
    let det = 4.0 * d * g - e * e;
    if !(d < 0.0 && det > 0.0) {
        return [0.0, 0.0];
    }
    let x = (-2.0 * g * b + e * c) / det;
    let y = (e * b - 2.0 * d * c) / det;
    [x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)]
}

/// Peak of the distance to P, refined by a quadratic fit over the 3x3
/// neighbourhood of the maximal cell.
pub fn locate_defect(field: &TensorField) -> Result<DefectCore, AnalysisError> {
    let dist = dist_to_p_field(field);
    locate_defect_in(&dist)
}

pub fn locate_defect_in(dist: &ScalarField<f64>) -> Result<DefectCore, AnalysisError> {
    let grid = dist.grid;
    let mut best: Option<(usize, f64)> = None;
    for idx in 0..grid.len() {
        if dist.valid[idx] && best.is_none_or(|(_, v)| dist.values[idx] > v) {
            best = Some((idx, dist.values[idx]));
        }
    }
    let (cell, peak) = best.ok_or(AnalysisError::NoDefect(0.0))?;
    if peak < NO_DEFECT_THRESHOLD {
        return Err(AnalysisError::NoDefect(peak));
    }
    let (ci, cj) = grid.coords(cell);
    let at = |i: isize, j: isize| -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < grid.nx && (j as usize) < grid.ny)
            .then(|| grid.index(i as usize, j as usize))
            .filter(|q| dist.valid[*q])
    };
    let c0 = grid.center(cell);
    for idx in 0..grid.len() {
        if !dist.valid[idx] || idx == cell {
            continue;
        }
        let v = dist.values[idx];
        if v <= SECONDARY_RATIO * peak {
            continue;
        }
        let c = grid.center(idx);
        if (c[0] - c0[0]).hypot(c[1] - c0[1]) <= SECONDARY_SEPARATION * grid.h {
            continue;
        }
        let (i, j) = grid.coords(idx);
        let is_local_max = (-1..=1).all(|dj| {
            (-1..=1)
                .all(|di| at(i as isize + di, j as isize + dj).is_none_or(|q| dist.values[q] <= v))
        });
        if is_local_max {
            return Err(AnalysisError::MultipleDefects {
                global: peak,
                secondary: v,
                x: c[0],
                y: c[1],
            });
        }
    }
    let mut stencil = [[0.0; 3]; 3];
    let mut complete = true;
    for (dy, row) in stencil.iter_mut().enumerate() {
        for (dx, s) in row.iter_mut().enumerate() {
            match at(ci as isize + dx as isize - 1, cj as isize + dy as isize - 1) {
                Some(q) => *s = dist.values[q],
                None => complete = false,
            }
        }
    }
    let off = if complete {
        quadratic_peak(stencil)
    } else {
        [0.0, 0.0]
    };
    Ok(DefectCore {
        position: [c0[0] + off[0] * grid.h, c0[1] + off[1] * grid.h],
        peak,
        cell,
    })
}

fn circle_nodes(center: [f64; 2], r: f64) -> impl Iterator<Item = ([f64; 2], f64, f64)> {
    (0..CIRCLE_NODES).map(move |k| {
        let t = 2.0 * PI * k as f64 / CIRCLE_NODES as f64;
        let (s, c) = t.sin_cos();
        ([center[0] + r * c, center[1] + r * s], c, s)
    })
}

/// `oint j . tau ds` over the circle of radius `r` about `center`.
pub fn circulation_of(
    current: &VectorField<AntiSymTensor3>,
    center: [f64; 2],
    r: f64,
) -> Result<AntiSymTensor3, AnalysisError> {
    let ds = 2.0 * PI * r / CIRCLE_NODES as f64;
    let mut acc = AntiSymTensor3::ZERO;
    for (p, c, s) in circle_nodes(center, r) {
        let (j1, j2) = current.sample(p).ok_or(AnalysisError::CircleOutside(r))?;
        acc += (j2 * c - j1 * s) * ds;
    }
    Ok(acc)
}

pub fn circulation(
    field: &TensorField,
    center: [f64; 2],
    r: f64,
) -> Result<AntiSymTensor3, AnalysisError> {
    circulation_of(&current_field(field), center, r)
}

/// `r oint (|grad u|^2 / 2 - |d_nu u|^2) ds` over the circle of radius `r`.
pub fn pohozaev_xi_of(
    grad: &VectorField<SymTensor3>,
    center: [f64; 2],
    r: f64,
) -> Result<f64, AnalysisError> {
    let ds = 2.0 * PI * r / CIRCLE_NODES as f64;
    let mut acc = 0.0;
    for (p, c, s) in circle_nodes(center, r) {
        let (ux, uy) = grad.sample(p).ok_or(AnalysisError::CircleOutside(r))?;
        let normal = ux * c + uy * s;
        acc += (0.5 * (ux.norm_sq() + uy.norm_sq()) - normal.norm_sq()) * ds;
    }
    Ok(r * acc)
}

pub fn pohozaev_xi(field: &TensorField, center: [f64; 2], r: f64) -> Result<f64, AnalysisError> {
    pohozaev_xi_of(&gradient_field(field), center, r)
}

/// `(1 / eps^2) h^2 sum W` over interior cells.
pub fn potential_mass(field: &TensorField, eps: f64, potential: Potential) -> f64 {
    let mask = field.mask();
    let h2 = mask.grid().h.powi(2);
    let sum: f64 = (0..mask.grid().len())
        .filter(|&i| mask.is_interior(i))
        .map(|i| potential.value(&field.get(i)))
        .sum();
    sum * h2 / (eps * eps)
}

/// Least-squares line `E = slope ln(1/eps) + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn scaling_fit(samples: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    if samples.len() < 3 {
        return Err(AnalysisError::DegenerateFit(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(e, en)| e.is_nan() || *e <= 0.0 || !en.is_finite())
    {
        return Err(AnalysisError::DegenerateFit(
            "eps must be positive and energies finite".into(),
        ));
    }
    let mut eps: Vec<f64> = samples.iter().map(|s| s.0).collect();
    eps.sort_by(f64::total_cmp);
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(AnalysisError::DegenerateFit("repeated eps value".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| (1.0 / s.0).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, s)| (x - mx) * (s.1 - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, s)| (s.1 - slope * x - intercept).powi(2))
        .sum();
    Ok(ScalingFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectReport {
    pub eps: f64,
    pub core: [f64; 2],
    pub peak_dist_to_p: f64,
    pub circulation_by_radius: Vec<(f64, AntiSymTensor3)>,
    pub xi_by_radius: Vec<(f64, f64)>,
    pub energy: f64,
}

/// Locates the defect and evaluates circulation and `xi` on circles of the
/// given radii about it.
pub fn analyze_defect(
    field: &TensorField,
    eps: f64,
    energy: f64,
    radii: &[f64],
) -> Result<DefectReport, AnalysisError> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::DegenerateFit(
            "radii must be strictly increasing".into(),
        ));
    }
    let core = locate_defect(field)?;
    let current = current_field(field);
    let grad = gradient_field(field);
    let mut circ = Vec::with_capacity(radii.len());
    let mut xi = Vec::with_capacity(radii.len());
    for &r in radii {
        circ.push((r, circulation_of(&current, core.position, r)?));
        xi.push((r, pohozaev_xi_of(&grad, core.position, r)?));
    }
    Ok(DefectReport {
        eps,
        core: core.position,
        peak_dist_to_p: core.peak,
        circulation_by_radius: circ,
        xi_by_radius: xi,
        energy,
    })
}

pub const DEFECT_HEADER: &str = "eps,core_x,core_y,peak_dist,r,xi,lam_12,lam_13,lam_23,lam_norm";

pub fn write_defect_report(reports: &[DefectReport], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{DEFECT_HEADER}")?;
    for rep in reports {
        for ((r, lam), (_, xi)) in rep.circulation_by_radius.iter().zip(&rep.xi_by_radius) {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                rep.eps,
                rep.core[0],
                rep.core[1],
                rep.peak_dist_to_p,
                r,
                xi,
                lam.a12,
                lam.a13,
                lam.a23,
                lam.norm()
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_disk_domain;
    use crate::tensor::{geodesic_gamma0, Rotation3};
    use std::f64::consts::FRAC_PI_2;
    use std::sync::Arc;

    fn synthetic(n: usize, f: impl Fn([f64; 2]) -> SymTensor3 + Copy) -> TensorField {
        let mask = Arc::new(make_disk_domain(n, 1.0).unwrap().with_boundary_fn(f));
        TensorField::from_fn(mask, f).unwrap()
    }

    fn melt_at(core: [f64; 2], width: f64) -> impl Fn([f64; 2]) -> SymTensor3 + Copy {
        move |p: [f64; 2]| {
            let (dx, dy) = (p[0] - core[0], p[1] - core[1]);
            let s = 1.0 - (-(dx * dx + dy * dy) / (width * width)).exp();
            geodesic_gamma0(dy.atan2(dx)) * s + SymTensor3::ISOTROPIC * (1.0 - s)
        }
    }

    #[test]
    fn distance_examples() {
        assert!(dist_to_p(&geodesic_gamma0(0.3)) < 1e-12);
        assert!((dist_to_p(&SymTensor3::ISOTROPIC) - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let u = SymTensor3::diag(0.6, 0.4, 0.0);
        assert!((dist_to_p(&u) - 0.4 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_no_defect() {
        let p = geodesic_gamma0(0.2);
        let f = synthetic(32, move |_| p);
        assert!(matches!(locate_defect(&f), Err(AnalysisError::NoDefect(_))));
        assert_eq!(circulation(&f, [0.0, 0.0], 0.5).unwrap().norm(), 0.0);
        assert_eq!(pohozaev_xi(&f, [0.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(potential_mass(&f, 0.1, Potential::Standard) < 1e-28);
    }

    #[test]
    fn synthetic_core_is_found_and_translates() {
        let n = 96;
        let h = 2.0 / (n - 4) as f64;
        let base = [0.1234, -0.2061];
        let found = |c: [f64; 2]| {
            locate_defect(&synthetic(n, melt_at(c, 0.15)))
                .unwrap()
                .position
        };
        let p0 = found(base);
        assert!((p0[0] - base[0]).hypot(p0[1] - base[1]) < 0.5 * h);
        for delta in [[0.037, 0.0], [0.0, -0.052], [0.081, 0.04]] {
            let p = found([base[0] + delta[0], base[1] + delta[1]]);
            let moved = [p[0] - p0[0], p[1] - p0[1]];
            assert!(
                (moved[0] - delta[0]).hypot(moved[1] - delta[1]) < 0.5 * h,
                "{delta:?}"
            );
        }
    }

    #[test]
    fn two_cores_are_flagged() {
        let a = melt_at([-0.4, 0.0], 0.1);
        let b = melt_at([0.4, 0.0], 0.1);
        let f = synthetic(64, move |p| if p[0] < 0.0 { a(p) } else { b(p) });
        assert!(matches!(
            locate_defect(&f),
            Err(AnalysisError::MultipleDefects { .. })
        ));
    }

    #[test]
    fn gamma_field_circulation_and_xi() {
        let f = synthetic(128, |p| geodesic_gamma0(p[1].atan2(p[0])));
        for r in [0.3, 0.5, 0.7] {
            let lam = circulation(&f, [0.0, 0.0], r).unwrap();
            assert!((lam.a12 - PI).abs() < 1e-2, "{lam:?}");
            assert!(lam.a13.abs() < 1e-2 && lam.a23.abs() < 1e-2);
            assert!((lam.norm() - PI * 2f64.sqrt()).abs() < 1e-2);
            let xi = pohozaev_xi(&f, [0.0, 0.0], r).unwrap();
            assert!((xi - PI / 2.0).abs() < 0.02 * PI / 2.0, "{xi}");
        }
        assert!(matches!(
            circulation(&f, [0.0, 0.0], 1.2),
            Err(AnalysisError::CircleOutside(_))
        ));
    }

    #[test]
    fn circulation_conjugates_with_the_field() {
        let r = Rotation3::from_euler_zyz(0.4, 1.2, -0.3);
        let f = synthetic(96, melt_at([0.05, 0.02], 0.2));
        let g = f.conjugated(&r);
        let a = circulation(&f, [0.05, 0.02], 0.5).unwrap();
        let b = circulation(&g, [0.05, 0.02], 0.5).unwrap();
        assert!((b - a.conjugate(&r.0)).norm() < 1e-12);
        assert!((a.norm() - b.norm()).abs() < 1e-12);
    }

    #[test]
    fn xi_quadrature_is_second_order_in_h() {
        let err = |n: usize| {
            let f = synthetic(n, |p| geodesic_gamma0(p[1].atan2(p[0])));
            (pohozaev_xi(&f, [0.0, 0.0], 0.5).unwrap() - PI / 2.0).abs()
        };
        let (e1, e2) = (err(48), err(96));
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn potential_mass_scales_with_eps() {
        let f = synthetic(32, melt_at([0.0, 0.0], 0.3));
        let a = potential_mass(&f, 0.2, Potential::Standard);
        let b = potential_mass(&f, 0.1, Potential::Standard);
        assert!(a > 0.0);
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_fit_cases() {
        let data: Vec<(f64, f64)> = [0.25, 0.125, 0.0625, 0.03125]
            .iter()
            .map(|e: &f64| (*e, FRAC_PI_2 * (1.0 / e).ln() + 0.3))
            .collect();
        let fit = scaling_fit(&data).unwrap();
        assert!((fit.slope - FRAC_PI_2).abs() < 1e-12);
        assert!((fit.intercept - 0.3).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(matches!(
            scaling_fit(&[(0.1, 1.0), (0.1, 2.0), (0.2, 0.5)]),
            Err(AnalysisError::DegenerateFit(_))
        ));
        assert!(scaling_fit(&data[..2]).is_err());
    }

    #[test]
    fn report_rows() {
        let f = synthetic(64, melt_at([0.0, 0.0], 0.2));
        let rep = analyze_defect(&f, 0.1, 3.0, &DEFAULT_RADII).unwrap();
        let mut buf = Vec::new();
        write_defect_report(&[rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with(DEFECT_HEADER));
    }
}
