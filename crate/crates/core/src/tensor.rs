//! Matrix geometry of the order-parameter space.
//!
//! `F1` is the affine space of symmetric 3x3 matrices with unit trace, `P` the
//! rank-one orthogonal projections inside it and `Sigma` their convex hull.
//! Everything here is a pure function on small `Copy` values.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::TensorError;

/// Default eigenvalue gap below which `Q(u)` is treated as undefined.
pub const DEFAULT_GAP: f64 = 1e-8;

/// Smallest `<a,b>` accepted by [`minimal_rotation`].
pub const PERPENDICULAR_THRESHOLD: f64 = 1e-6;

/// Vector-space operations shared by the per-cell value types of a field.
pub trait Linear:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    /// Squared Frobenius norm.
    fn norm_sq(&self) -> f64;

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl Linear for f64 {
    fn norm_sq(&self) -> f64 {
        self * self
    }
}

/// General 3x3 real matrix, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Symmetric part, `(M + M^T)/2`.
    pub fn sym_part(&self) -> SymTensor3 {
        let m = &self.0;
        SymTensor3 {
            xx: m[0][0],
            xy: 0.5 * (m[0][1] + m[1][0]),
            xz: 0.5 * (m[0][2] + m[2][0]),
            yy: m[1][1],
            yz: 0.5 * (m[1][2] + m[2][1]),
            zz: m[2][2],
        }
    }

    /// Antisymmetric part, `(M - M^T)/2`.
    pub fn antisym_part(&self) -> AntiSymTensor3 {
        let m = &self.0;
        AntiSymTensor3 {
            a12: 0.5 * (m[0][1] - m[1][0]),
            a13: 0.5 * (m[0][2] - m[2][0]),
            a23: 0.5 * (m[1][2] - m[2][1]),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        self + rhs * -1.0
    }
}

impl Neg for Mat3 {
    type Output = Mat3;
    fn neg(self) -> Mat3 {
        self * -1.0
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut out = self;
        out.0.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        out
    }
}

impl Linear for Mat3 {
    fn norm_sq(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum()
    }
}

/// Symmetric 3x3 tensor stored by its six independent components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymTensor3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: SymTensor3 = SymTensor3::new(1.0, 0.0, 0.0, 1.0, 0.0, 1.0);
    /// The isotropic state `I/3`.
    pub const ISOTROPIC: SymTensor3 =
        SymTensor3::new(1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0);

    pub const fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        SymTensor3 {
            xx,
            xy,
            xz,
            yy,
            yz,
            zz,
        }
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor3::new(a, 0.0, 0.0, b, 0.0, c)
    }

    /// `n n^T`.
    pub fn outer(n: [f64; 3]) -> Self {
        SymTensor3::new(
            n[0] * n[0],
            n[0] * n[1],
            n[0] * n[2],
            n[1] * n[1],
            n[1] * n[2],
            n[2] * n[2],
        )
    }

    /// Components in the order `xx, xy, xz, yy, yz, zz`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    pub fn from_array(c: [f64; 6]) -> Self {
        SymTensor3::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    pub fn to_mat(&self) -> Mat3 {
        Mat3([
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `u^2`, computed so that the result is exactly symmetric.
    pub fn square(&self) -> SymTensor3 {
        let SymTensor3 {
            xx,
            xy,
            xz,
            yy,
            yz,
            zz,
        } = *self;
        SymTensor3 {
            xx: xx * xx + xy * xy + xz * xz,
            xy: xx * xy + xy * yy + xz * yz,
            xz: xx * xz + xy * yz + xz * zz,
            yy: xy * xy + yy * yy + yz * yz,
            yz: xy * xz + yy * yz + yz * zz,
            zz: xz * xz + yz * yz + zz * zz,
        }
    }

    /// Anticommutator `ab + ba`, which is symmetric.
    pub fn anticommutator(&self, other: &SymTensor3) -> SymTensor3 {
        let ab = self.to_mat() * other.to_mat();
        let m = &ab.0;
        SymTensor3 {
            xx: 2.0 * m[0][0],
            xy: m[0][1] + m[1][0],
            xz: m[0][2] + m[2][0],
            yy: 2.0 * m[1][1],
            yz: m[1][2] + m[2][1],
            zz: 2.0 * m[2][2],
        }
    }

    /// Commutator `[a;b] = ab - ba` of two symmetric tensors.
    pub fn commutator(&self, other: &SymTensor3) -> AntiSymTensor3 {
        let ab = self.to_mat() * other.to_mat();
        let m = &ab.0;
        AntiSymTensor3 {
            a12: m[0][1] - m[1][0],
            a13: m[0][2] - m[2][0],
            a23: m[1][2] - m[2][1],
        }
    }

    /// Removes the trace: `a - (tr a / 3) I`.
    pub fn traceless(&self) -> SymTensor3 {
        let t = self.trace() / 3.0;
        SymTensor3 {
            xx: self.xx - t,
            yy: self.yy - t,
            zz: self.zz - t,
            ..*self
        }
    }

    /// Re-derives `zz` from `xx` and `yy` so the trace is exactly one.
    pub fn with_unit_trace(&self) -> SymTensor3 {
        SymTensor3 {
            zz: 1.0 - self.xx - self.yy,
            ..*self
        }
    }

    /// `R u R^T`.
    pub fn conjugate(&self, r: &Mat3) -> SymTensor3 {
        (*r * self.to_mat() * r.transpose()).sym_part()
    }
}

impl Add for SymTensor3 {
    type Output = SymTensor3;
    fn add(self, o: SymTensor3) -> SymTensor3 {
        SymTensor3::new(
            self.xx + o.xx,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yy + o.yy,
            self.yz + o.yz,
            self.zz + o.zz,
        )
    }
}

impl Sub for SymTensor3 {
    type Output = SymTensor3;
    fn sub(self, o: SymTensor3) -> SymTensor3 {
        SymTensor3::new(
            self.xx - o.xx,
            self.xy - o.xy,
            self.xz - o.xz,
            self.yy - o.yy,
            self.yz - o.yz,
            self.zz - o.zz,
        )
    }
}

impl AddAssign for SymTensor3 {
    fn add_assign(&mut self, o: SymTensor3) {
        *self = *self + o;
    }
}

impl SubAssign for SymTensor3 {
    fn sub_assign(&mut self, o: SymTensor3) {
        *self = *self - o;
    }
}

impl Neg for SymTensor3 {
    type Output = SymTensor3;
    fn neg(self) -> SymTensor3 {
        self * -1.0
    }
}

impl Mul<f64> for SymTensor3 {
    type Output = SymTensor3;
    fn mul(self, s: f64) -> SymTensor3 {
        SymTensor3::new(
            self.xx * s,
            self.xy * s,
            self.xz * s,
            self.yy * s,
            self.yz * s,
            self.zz * s,
        )
    }
}

impl Linear for SymTensor3 {
    fn norm_sq(&self) -> f64 {
        self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz)
    }
}

/// Antisymmetric 3x3 tensor; `a12` is the (1,2) entry, the (2,1) entry is `-a12`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AntiSymTensor3 {
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
}

impl AntiSymTensor3 {
    pub const ZERO: AntiSymTensor3 = AntiSymTensor3 {
        a12: 0.0,
        a13: 0.0,
        a23: 0.0,
    };

    pub const fn new(a12: f64, a13: f64, a23: f64) -> Self {
        AntiSymTensor3 { a12, a13, a23 }
    }

    pub fn to_mat(&self) -> Mat3 {
        Mat3([
            [0.0, self.a12, self.a13],
            [-self.a12, 0.0, self.a23],
            [-self.a13, -self.a23, 0.0],
        ])
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.a12, self.a13, self.a23]
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        AntiSymTensor3::new(c[0], c[1], c[2])
    }

    /// Commutator of two antisymmetric tensors (again antisymmetric).
    pub fn commutator(&self, other: &AntiSymTensor3) -> AntiSymTensor3 {
        commutator(&self.to_mat(), &other.to_mat()).antisym_part()
    }

    /// `R A R^T`.
    pub fn conjugate(&self, r: &Mat3) -> AntiSymTensor3 {
        (*r * self.to_mat() * r.transpose()).antisym_part()
    }
}

impl Add for AntiSymTensor3 {
    type Output = AntiSymTensor3;
    fn add(self, o: AntiSymTensor3) -> AntiSymTensor3 {
        AntiSymTensor3::new(self.a12 + o.a12, self.a13 + o.a13, self.a23 + o.a23)
    }
}

impl Sub for AntiSymTensor3 {
    type Output = AntiSymTensor3;
    fn sub(self, o: AntiSymTensor3) -> AntiSymTensor3 {
        AntiSymTensor3::new(self.a12 - o.a12, self.a13 - o.a13, self.a23 - o.a23)
    }
}

impl AddAssign for AntiSymTensor3 {
    fn add_assign(&mut self, o: AntiSymTensor3) {
        *self = *self + o;
    }
}

impl Neg for AntiSymTensor3 {
    type Output = AntiSymTensor3;
    fn neg(self) -> AntiSymTensor3 {
        self * -1.0
    }
}

impl Mul<f64> for AntiSymTensor3 {
    type Output = AntiSymTensor3;
    fn mul(self, s: f64) -> AntiSymTensor3 {
        AntiSymTensor3::new(self.a12 * s, self.a13 * s, self.a23 * s)
    }
}

impl Linear for AntiSymTensor3 {
    fn norm_sq(&self) -> f64 {
        2.0 * (self.a12 * self.a12 + self.a13 * self.a13 + self.a23 * self.a23)
    }
}

/// `<A,B> = tr(A^T B)`.
pub fn frobenius_inner(a: &Mat3, b: &Mat3) -> f64 {
    (a.transpose() * *b).trace()
}

/// Frobenius inner product of two symmetric tensors.
pub fn sym_inner(a: &SymTensor3, b: &SymTensor3) -> f64 {
    a.xx * b.xx + a.yy * b.yy + a.zz * b.zz + 2.0 * (a.xy * b.xy + a.xz * b.xz + a.yz * b.yz)
}

/// `[A;B] = AB - BA`.
pub fn commutator(a: &Mat3, b: &Mat3) -> Mat3 {
    *a * *b - *b * *a
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    scale(a, 1.0 / n)
}

/// Spectral decomposition of a symmetric tensor, eigenvalues descending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenSystem {
    pub values: [f64; 3],
    /// Unit eigenvectors; `vectors[i]` belongs to `values[i]`.
    pub vectors: [[f64; 3]; 3],
}

impl EigenSystem {
    pub fn lambda1(&self) -> f64 {
        self.values[0]
    }

    /// Spectral projector `e_i e_i^T`.
    pub fn projector(&self, i: usize) -> SymTensor3 {
        SymTensor3::outer(self.vectors[i])
    }

    /// `sum_i w_i e_i e_i^T`.
    pub fn reconstruct_with(&self, w: [f64; 3]) -> SymTensor3 {
        (0..3).fold(SymTensor3::ZERO, |acc, i| acc + self.projector(i) * w[i])
    }

    pub fn reconstruct(&self) -> SymTensor3 {
        self.reconstruct_with(self.values)
    }
}

/// Unit vector maximizing the cross product of two rows of `a - lambda I`.
fn null_vector(a: &SymTensor3, lambda: f64) -> Option<[f64; 3]> {
    let m = (*a - SymTensor3::IDENTITY * lambda).to_mat();
    let rows = m.0;
    let candidates = [
        cross(rows[0], rows[1]),
        cross(rows[0], rows[2]),
        cross(rows[1], rows[2]),
    ];
    let (best, norm2) = candidates
        .iter()
        .map(|c| (*c, dot(*c, *c)))
        .fold(([0.0; 3], 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
    let scale = a.max_abs().max(lambda.abs()).max(f64::MIN_POSITIVE);
    if norm2.sqrt() <= 1e-12 * scale * scale {
        None
    } else {
        Some(normalize(best))
    }
}

/// Any orthonormal pair completing `v` to a basis.
fn complement(v: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let u = if v[0].abs() > v[1].abs() {
        normalize([-v[2], 0.0, v[0]])
    } else {
        normalize([0.0, v[2], -v[1]])
    };
    (u, cross(v, u))
}

fn rayleigh(a: &SymTensor3, v: [f64; 3]) -> f64 {
    dot(v, a.to_mat().mul_vec(v))
}

fn sorted_system(a: &SymTensor3, mut vectors: [[f64; 3]; 3]) -> EigenSystem {
    let mut pairs: Vec<(f64, [f64; 3])> = vectors.iter().map(|v| (rayleigh(a, *v), *v)).collect();
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0));
    for (slot, pair) in vectors.iter_mut().zip(&pairs) {
        *slot = pair.1;
    }
    // Right-handed frame.
    vectors[2] = cross(vectors[0], vectors[1]);
    EigenSystem {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors,
    }
}

fn closed_form(a: &SymTensor3) -> Option<EigenSystem> {
    let off = a.xy * a.xy + a.xz * a.xz + a.yz * a.yz;
    let q = a.trace() / 3.0;
    let p2 = (a.xx - q).powi(2) + (a.yy - q).powi(2) + (a.zz - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    if p <= 1e-14 * a.max_abs().max(f64::MIN_POSITIVE) {
        return Some(EigenSystem {
            values: [q; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        });
    }
    let b = (*a - SymTensor3::IDENTITY * q) * (1.0 / p);
    let r = (0.5 * b.det()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;

    // Start from the best separated eigenvalue, then diagonalize the 2x2 block
    // on its orthogonal complement.
    let isolated = if l1 - l2 >= l2 - l3 { l1 } else { l3 };
    let v = null_vector(a, isolated)?;
    let (u, w) = complement(v);
    let am = a.to_mat();
    let au = am.mul_vec(u);
    let aw = am.mul_vec(w);
    let (m00, m01, m11) = (dot(u, au), dot(u, aw), dot(w, aw));
    let theta = 0.5 * (2.0 * m01).atan2(m00 - m11);
    let (s, c) = theta.sin_cos();
    let e_a = normalize([
        c * u[0] + s * w[0],
        c * u[1] + s * w[1],
        c * u[2] + s * w[2],
    ]);
    let e_b = cross(v, e_a);
    Some(sorted_system(a, [v, e_a, e_b]))
}

/// Cyclic Jacobi iteration; slow but unconditionally accurate.
#[allow(clippy::needless_range_loop)]
fn jacobi(a: &SymTensor3) -> EigenSystem {
    let mut m = a.to_mat().0;
    let mut v = Mat3::IDENTITY.0;
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for _ in 0..64 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        if off <= 1e-18 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q].abs() <= 1e-300 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let cols = [
        [v[0][0], v[1][0], v[2][0]],
        [v[0][1], v[1][1], v[2][1]],
        [v[0][2], v[1][2], v[2][2]],
    ];
    sorted_system(a, cols.map(normalize))
}

fn reconstruction_error(a: &SymTensor3, sys: &EigenSystem) -> f64 {
    (sys.reconstruct() - *a).norm()
}

/// Sorted spectral decomposition of a symmetric tensor.
///
/// Uses the trigonometric closed form for the eigenvalues, falling back to
/// Jacobi rotations whenever the closed-form reconstruction is not accurate
/// to near machine precision.
pub fn eigen_sym3(u: &SymTensor3) -> EigenSystem {
    let scale = u.max_abs().max(1.0);
    match closed_form(u) {
        Some(sys) if reconstruction_error(u, &sys) <= 1e-13 * scale => sys,
        _ => jacobi(u),
    }
}

/// `I2(u) = (1 - tr u^2)/2` for unit-trace `u`.
pub fn invariant_i2(u: &SymTensor3) -> f64 {
    0.5 * (1.0 - u.norm_sq())
}

/// `I3(u) = det u`.
pub fn invariant_i3(u: &SymTensor3) -> f64 {
    u.det()
}

/// Bulk potential `W(u) = tr((u - u^2)^2)/2`.
pub fn potential_w(u: &SymTensor3) -> f64 {
    0.5 * (*u - u.square()).norm_sq()
}

/// Frobenius gradient of [`potential_w`]: `(u - u^2)(I - 2u)`.
pub fn grad_w(u: &SymTensor3) -> SymTensor3 {
    let m = *u - u.square();
    m - u.anticommutator(&m)
}

/// `W_beta(u) = 2 I2(u)^2 - beta I3(u)`.
pub fn potential_wbeta(u: &SymTensor3, beta: f64) -> f64 {
    let i2 = invariant_i2(u);
    2.0 * i2 * i2 - beta * invariant_i3(u)
}

/// Unconstrained gradient `2(|u|^2 - 1)u + beta(u - u^2)` of `W_beta`
/// written in its trace-one form.
pub fn grad_wbeta(u: &SymTensor3, beta: f64) -> SymTensor3 {
    *u * (2.0 * (u.norm_sq() - 1.0)) + (*u - u.square()) * beta
}

/// Choice of bulk potential for the energy functional.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Potential {
    /// `tr((u - u^2)^2)/2`.
    #[default]
    Standard,
    /// `2 I2^2 - beta I3`.
    Beta(f64),
}

impl Potential {
    pub fn value(&self, u: &SymTensor3) -> f64 {
        match *self {
            Potential::Standard => potential_w(u),
            Potential::Beta(beta) => potential_wbeta(u, beta),
        }
    }

    pub fn gradient(&self, u: &SymTensor3) -> SymTensor3 {
        match *self {
            Potential::Standard => grad_w(u),
            Potential::Beta(beta) => grad_wbeta(u, beta),
        }
    }
}

fn check_spectrum(lambda: [f64; 3]) -> Result<(), TensorError> {
    let tol = 1e-12 * lambda.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if lambda[0] + tol < lambda[1] || lambda[1] + tol < lambda[2] {
        return Err(TensorError::Unsorted(lambda));
    }
    let sum = lambda.iter().sum::<f64>();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TensorError::NotUnitSum(sum));
    }
    Ok(())
}

/// Euclidean projection of a sorted unit-sum triple onto the standard simplex.
pub fn simplex_project(lambda: [f64; 3]) -> Result<[f64; 3], TensorError> {
    check_spectrum(lambda)?;
    let [l1, l2, l3] = lambda;
    if l3 >= 0.0 {
        return Ok(lambda);
    }
    if l2 + 0.5 * l3 >= 0.0 {
        Ok([l1 + 0.5 * l3, l2 + 0.5 * l3, 0.0])
    } else {
        Ok([1.0, 0.0, 0.0])
    }
}

/// Nearest point of `Sigma` (the convex hull of `P`) to a unit-trace tensor.
pub fn project_sigma(u: &SymTensor3) -> SymTensor3 {
    let sys = eigen_sym3(u);
    let mut lambda = sys.values;
    // Re-normalize the sum against rounding in the eigenvalues.
    let drift = (lambda.iter().sum::<f64>() - 1.0) / 3.0;
    lambda.iter_mut().for_each(|l| *l -= drift);
    let mu = simplex_project(lambda).expect("eigen_sym3 returns sorted eigenvalues");
    if mu == lambda && drift.abs() < 1e-15 {
        return *u;
    }
    sys.reconstruct_with(mu)
}

/// Nearest rank-one projection `Q(u) = e1 e1^T`.
pub fn nearest_projection_q(u: &SymTensor3, gap: f64) -> Result<SymTensor3, TensorError> {
    let sys = eigen_sym3(u);
    let g = sys.values[0] - sys.values[1];
    if g <= gap {
        return Err(TensorError::DegenerateTop {
            gap: g,
            threshold: gap,
        });
    }
    Ok(sys.projector(0))
}

/// Derivative of `Q` at `u` applied to the direction `a`:
/// `-(u - l1 I)^+ a v - v a (u - l1 I)^+` with `v = Q(u)`.
pub fn dq_apply(u: &SymTensor3, a: &SymTensor3, gap: f64) -> Result<SymTensor3, TensorError> {
    let sys = eigen_sym3(u);
    let g = sys.values[0] - sys.values[1];
    if g <= gap {
        return Err(TensorError::DegenerateTop {
            gap: g,
            threshold: gap,
        });
    }
    let l1 = sys.values[0];
    // Moore-Penrose inverse of u - l1 I: the kernel is span(e1).
    let pinv = (1..3).fold(SymTensor3::ZERO, |acc, i| {
        acc + sys.projector(i) * (1.0 / (sys.values[i] - l1))
    });
    let v = sys.projector(0);
    let left = pinv.to_mat() * a.to_mat() * v.to_mat();
    // v a pinv = (pinv a v)^T
    Ok((left + left.transpose()).sym_part() * -1.0)
}

/// Proper orthogonal 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(pub Mat3);

impl Default for Rotation3 {
    fn default() -> Self {
        Rotation3::IDENTITY
    }
}

impl Rotation3 {
    pub const IDENTITY: Rotation3 = Rotation3(Mat3::IDENTITY);

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Rotation3 {
        let k = normalize(axis);
        let kx = Mat3([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]);
        Rotation3(Mat3::IDENTITY + kx * angle.sin() + kx * kx * (1.0 - angle.cos()))
    }

    /// `Rz(alpha) Ry(beta) Rz(gamma)`.
    pub fn from_euler_zyz(alpha: f64, beta: f64, gamma: f64) -> Rotation3 {
        let z = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 0.0];
        Rotation3(
            Rotation3::from_axis_angle(z, alpha).0
                * Rotation3::from_axis_angle(y, beta).0
                * Rotation3::from_axis_angle(z, gamma).0,
        )
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation3 {
        Rotation3(self.0.transpose())
    }

    /// `max |R^T R - I|` and `|det R - 1|`, for invariant checks.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = (self.0.transpose() * self.0 - Mat3::IDENTITY).max_abs();
        d.max((self.0.det() - 1.0).abs())
    }
}

/// Principal square root of a rotation, via its axis-angle form.
fn rotation_sqrt(x: &Mat3) -> Mat3 {
    let w = x.antisym_part();
    // vee of the skew part: (x32 - x23, x13 - x31, x21 - x12) / 2
    let axis_sin = [-w.a23, w.a13, -w.a12];
    let s = dot(axis_sin, axis_sin).sqrt();
    let c = 0.5 * (x.trace() - 1.0);
    let phi = s.atan2(c);
    if s <= 1e-300 {
        return Mat3::IDENTITY;
    }
    Rotation3::from_axis_angle(axis_sin, 0.5 * phi).0
}

/// Minimal rotation `R` with `R a R^T = b` fixing the common annihilator of
/// `a, b` in `P`.
pub fn minimal_rotation(a: &SymTensor3, b: &SymTensor3) -> Result<Rotation3, TensorError> {
    let ip = sym_inner(a, b);
    if ip <= PERPENDICULAR_THRESHOLD {
        return Err(TensorError::PerpendicularPair(ip));
    }
    if (*a - *b).norm() <= 1e-15 {
        return Ok(Rotation3::IDENTITY);
    }
    let c = a.commutator(b).to_mat();
    // X = I + (2/<a,b>)[a;b]^2 - 2[a;b] is the rotation by twice the angle
    // carrying a onto b; R is its principal square root.
    let x = Mat3::IDENTITY + c * c * (2.0 / ip) - c * 2.0;
    Ok(Rotation3(rotation_sqrt(&x)))
}

/// Canonical closed geodesic of `P`, period `2 pi`.
pub fn geodesic_gamma0(t: f64) -> SymTensor3 {
    let (s, c) = t.sin_cos();
    SymTensor3::new(0.5 * (1.0 + c), 0.5 * s, 0.0, 0.5 * (1.0 - c), 0.0, 0.0)
}

/// `d gamma0 / dt`.
pub fn geodesic_gamma0_dt(t: f64) -> SymTensor3 {
    let (s, c) = t.sin_cos();
    SymTensor3::new(-0.5 * s, 0.5 * c, 0.0, 0.5 * s, 0.0, 0.0)
}

/// Result of [`antisym_rep`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntiSymRep {
    pub mean: AntiSymTensor3,
    /// Largest Frobenius distance of a per-sample value from the mean.
    pub max_deviation: f64,
}

/// Period of a closed sampled curve, assuming the wrap-around gap equals the
/// first gap.
fn closed_curve_period(samples: &[(f64, SymTensor3)]) -> f64 {
    let n = samples.len();
    samples[n - 1].0 - samples[0].0 + (samples[1].0 - samples[0].0)
}

/// `(1/2pi)[gamma; gamma']` averaged over a sampled closed curve,
/// with centered differences for `gamma'`.
pub fn antisym_rep(samples: &[(f64, SymTensor3)]) -> AntiSymRep {
    assert!(samples.len() >= 8, "antisym_rep needs at least 8 samples");
    let n = samples.len();
    let period = closed_curve_period(samples);
    let values: Vec<AntiSymTensor3> = (0..n)
        .map(|i| {
            let (tp, up) = samples[(i + n - 1) % n];
            let (tn, un) = samples[(i + 1) % n];
            let mut span = tn - tp;
            if i == 0 || i == n - 1 {
                span += period;
            }
            let deriv = (un - up) * (1.0 / span);
            samples[i].1.commutator(&deriv) * (1.0 / (2.0 * PI))
        })
        .collect();
    let mean = values.iter().fold(AntiSymTensor3::ZERO, |acc, v| acc + *v) * (1.0 / n as f64);
    let max_deviation = values
        .iter()
        .map(|v| (*v - mean).norm())
        .fold(0.0, f64::max);
    AntiSymRep {
        mean,
        max_deviation,
    }
}

/// Length of a uniformly sampled closed curve: trapezoid rule on the
/// difference-quotient speed between consecutive samples.
pub fn geodesic_length(samples: &[(f64, SymTensor3)]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let period = closed_curve_period(samples);
    (0..n)
        .map(|i| {
            let (t0, u0) = samples[i];
            let (t1, u1) = samples[(i + 1) % n];
            let dt = if i == n - 1 {
                t1 + period - t0
            } else {
                t1 - t0
            };
            // |gamma'| at the interval midpoint times the interval width
            ((u1 - u0) * (1.0 / dt)).norm() * dt
        })
        .sum()
}

/// `n` uniform samples of `gamma0` over one period.
pub fn sample_gamma0(n: usize) -> Vec<(f64, SymTensor3)> {
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            (t, geodesic_gamma0(t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng) -> SymTensor3 {
        SymTensor3::from_array([(); 6].map(|_| rng.gen_range(-1.0..1.0)))
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3 {
        let axis = [(); 3].map(|_| rng.gen_range(-1.0..1.0));
        Rotation3::from_axis_angle(axis, rng.gen_range(0.0..PI))
    }

    fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        normalize([(); 3].map(|_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn inner_and_commutator_basics() {
        assert_eq!(frobenius_inner(&Mat3::IDENTITY, &Mat3::IDENTITY), 3.0);
        let p = geodesic_gamma0(0.7).to_mat();
        assert!((frobenius_inner(&p, &p) - 1.0).abs() < 1e-14);
        let c = commutator(&p, &p);
        assert_eq!(c.max_abs(), 0.0);
        let br = geodesic_gamma0(0.0).commutator(&geodesic_gamma0_dt(0.0));
        assert!((br.a12 - 0.5).abs() < 1e-15 && br.a13 == 0.0 && br.a23 == 0.0);
    }

    #[test]
    fn inner_matches_component_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Mat3([(); 3].map(|_| [(); 3].map(|_| rng.gen_range(-1.0..1.0))));
            let b = Mat3([(); 3].map(|_| [(); 3].map(|_| rng.gen_range(-1.0..1.0))));
            let direct: f64 = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| a.0[i][j] * b.0[i][j])
                .sum();
            assert!((frobenius_inner(&a, &b) - direct).abs() < 1e-13);
            let ab = commutator(&a, &b);
            let ba = commutator(&b, &a);
            assert!((ab + ba).max_abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_examples() {
        let iso = eigen_sym3(&SymTensor3::ISOTROPIC);
        for v in iso.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let g = eigen_sym3(&geodesic_gamma0(0.0));
        assert_eq!(g.values, [1.0, 0.0, 0.0]);
        assert!((g.vectors[0][0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_degenerate_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cases = [
            SymTensor3::diag(0.5, 0.5, 0.0),
            SymTensor3::diag(0.2, 0.4, 0.4),
            SymTensor3::outer([0.6, 0.8, 0.0]),
            SymTensor3::ZERO,
        ];
        for u in cases
            .iter()
            .copied()
            .chain((0..2000).map(|_| random_sym(&mut rng)))
        {
            let sys = eigen_sym3(&u);
            assert!(sys.values[0] >= sys.values[1] && sys.values[1] >= sys.values[2]);
            assert!(reconstruction_error(&u, &sys) <= 1e-10);
            for i in 0..3 {
                for j in 0..3 {
                    let d = dot(sys.vectors[i], sys.vectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn potential_values() {
        let p = geodesic_gamma0(1.3);
        assert!(potential_w(&p).abs() < 1e-15);
        assert!((potential_w(&SymTensor3::ISOTROPIC) - 2.0 / 27.0).abs() < 1e-15);
        for beta in [2.0, 3.0, 5.5] {
            assert!(potential_wbeta(&p, beta).abs() < 1e-15);
            let want = 2.0 / 9.0 - beta / 27.0;
            assert!((potential_wbeta(&SymTensor3::ISOTROPIC, beta) - want).abs() < 1e-15);
            let g = grad_wbeta(&SymTensor3::ISOTROPIC, beta);
            let want = (2.0 * beta - 4.0) / 9.0;
            assert!((g - SymTensor3::IDENTITY * want).max_abs() < 1e-15);
            assert!(g.traceless().max_abs() < 1e-15);
        }
    }

    #[test]
    fn w_is_half_of_w2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = random_sym(&mut rng).with_unit_trace();
            let w = potential_w(&u);
            let i2 = invariant_i2(&u);
            assert!((w - (i2 * i2 - invariant_i3(&u))).abs() < 1e-12);
            assert!((potential_wbeta(&u, 2.0) - 2.0 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let u = random_sym(&mut rng).with_unit_trace();
            let beta = rng.gen_range(0.0..8.0);
            let tr = grad_wbeta(&u, beta).trace();
            assert!((tr - (beta - 2.0) * (1.0 - u.norm_sq())).abs() < 1e-12);
            // grad W differs from grad W_2 / 2 only by a multiple of I.
            let d = grad_w(&u) - grad_wbeta(&u, 2.0) * 0.5;
            assert!(d.traceless().max_abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_cases() {
        let mu = simplex_project([0.7, 0.5, -0.2]).unwrap();
        for (m, w) in mu.iter().zip([0.6, 0.4, 0.0]) {
            assert!((m - w).abs() < 1e-15);
        }
        assert_eq!(simplex_project([0.5, 0.3, 0.2]).unwrap(), [0.5, 0.3, 0.2]);
        assert_eq!(simplex_project([1.4, -0.1, -0.3]).unwrap(), [1.0, 0.0, 0.0]);
        assert!(matches!(
            simplex_project([0.2, 0.5, 0.3]),
            Err(TensorError::Unsorted(_))
        ));
        assert!(matches!(
            simplex_project([0.9, 0.5, 0.3]),
            Err(TensorError::NotUnitSum(_))
        ));
    }

    #[test]
    fn project_sigma_examples() {
        let u = SymTensor3::diag(0.7, 0.5, -0.2);
        let v = project_sigma(&u);
        assert!((v - SymTensor3::diag(0.6, 0.4, 0.0)).max_abs() < 1e-12);
        let inside = SymTensor3::diag(0.5, 0.3, 0.2);
        assert!((project_sigma(&inside) - inside).max_abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let u = (random_sym(&mut rng) * 2.0).with_unit_trace();
            let p = project_sigma(&u);
            assert!((project_sigma(&p) - p).max_abs() < 1e-10);
            assert!((p.trace() - 1.0).abs() < 1e-12);
            assert!(eigen_sym3(&p).values[2] >= -1e-12);
        }
    }

    #[test]
    fn nearest_projection_examples() {
        let p = geodesic_gamma0(2.1);
        assert!((nearest_projection_q(&p, DEFAULT_GAP).unwrap() - p).max_abs() < 1e-12);
        let q = nearest_projection_q(&SymTensor3::diag(0.6, 0.4, 0.0), DEFAULT_GAP).unwrap();
        assert!((q - SymTensor3::diag(1.0, 0.0, 0.0)).max_abs() < 1e-14);
        assert!(matches!(
            nearest_projection_q(&SymTensor3::ISOTROPIC, DEFAULT_GAP),
            Err(TensorError::DegenerateTop { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let u = random_sym(&mut rng).with_unit_trace();
            let r = random_rotation(&mut rng);
            let lhs = nearest_projection_q(&u.conjugate(&r.0), DEFAULT_GAP).unwrap();
            let rhs = nearest_projection_q(&u, DEFAULT_GAP)
                .unwrap()
                .conjugate(&r.0);
            assert!((lhs - rhs).max_abs() < 1e-9);
        }
    }

    #[test]
    fn dq_examples() {
        let v = SymTensor3::diag(1.0, 0.0, 0.0);
        let a = SymTensor3::new(0.0, 0.5, 0.0, 0.0, 0.0, 0.0);
        assert!((dq_apply(&v, &a, DEFAULT_GAP).unwrap() - a).max_abs() < 1e-15);
        let n = SymTensor3::diag(0.0, 1.0, -1.0);
        assert!(dq_apply(&v, &n, DEFAULT_GAP).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn dq_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = SymTensor3::outer(unit(&mut rng));
            let u = (p + random_sym(&mut rng).traceless() * 0.1).with_unit_trace();
            let a = random_sym(&mut rng);
            let h = 1e-6;
            let fd = (nearest_projection_q(&(u + a * h), DEFAULT_GAP).unwrap()
                - nearest_projection_q(&(u - a * h), DEFAULT_GAP).unwrap())
                * (0.5 / h);
            let an = dq_apply(&u, &a, DEFAULT_GAP).unwrap();
            assert!((fd - an).norm() <= 1e-5 * an.norm().max(1e-3));
        }
    }

    #[test]
    fn minimal_rotation_examples() {
        let a = geodesic_gamma0(0.0);
        assert_eq!(minimal_rotation(&a, &a).unwrap(), Rotation3::IDENTITY);
        let b = geodesic_gamma0(0.3);
        let r = minimal_rotation(&a, &b).unwrap();
        assert!((a.conjugate(&r.0) - b).max_abs() < 1e-8);
        assert!(r.orthogonality_defect() < 1e-10);
        // The common annihilator e_z e_z^T is fixed.
        let c = SymTensor3::diag(0.0, 0.0, 1.0);
        assert!((c.conjugate(&r.0) - c).max_abs() < 1e-12);
        let perp = geodesic_gamma0(PI);
        assert!(matches!(
            minimal_rotation(&a, &perp),
            Err(TensorError::PerpendicularPair(_))
        ));
    }

    #[test]
    fn minimal_rotation_is_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = unit(&mut rng);
            let a = SymTensor3::outer(n);
            let mut worst: f64 = 0.0;
            for k in 1..6 {
                let d = 10f64.powi(-k);
                let m = normalize([n[0] + d * rng.gen::<f64>(), n[1] + d, n[2] - d]);
                let b = SymTensor3::outer(m);
                let r = minimal_rotation(&a, &b).unwrap();
                let ratio = (r.0 - Mat3::IDENTITY).norm() / (a - b).norm();
                worst = worst.max(ratio);
            }
            assert!(worst < 2.0, "ratio {worst}");
        }
    }

    #[test]
    fn geodesic_properties() {
        assert_eq!(geodesic_gamma0(0.0), SymTensor3::diag(1.0, 0.0, 0.0));
        for i in 0..100 {
            let g = geodesic_gamma0(0.0731 * i as f64);
            assert!((g.square() - g).max_abs() < 1e-15);
            assert!((g.trace() - 1.0).abs() < 1e-15);
        }
        assert!((geodesic_gamma0(2.0 * PI) - geodesic_gamma0(0.0)).max_abs() < 1e-15);
    }

    #[test]
    fn antisym_rep_of_gamma0() {
        let rep = antisym_rep(&sample_gamma0(256));
        let q = 1.0 / (4.0 * PI);
        assert!((rep.mean.a12 - q).abs() < 1e-3);
        assert!(rep.mean.a13.abs() < 1e-12 && rep.mean.a23.abs() < 1e-12);
        assert!(rep.max_deviation < 1e-3);
        assert!((rep.mean.norm_sq() - 1.0 / (8.0 * PI * PI)).abs() < 1e-5);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_rotation(&mut rng);
        let rotated: Vec<_> = sample_gamma0(256)
            .into_iter()
            .map(|(t, g)| (t, g.conjugate(&r.0)))
            .collect();
        let rep_r = antisym_rep(&rotated);
        assert!((rep_r.mean - rep.mean.conjugate(&r.0)).norm() < 1e-12);
        assert!((rep_r.mean.norm() - rep.mean.norm()).abs() < 1e-12);
    }

    #[test]
    fn antisym_rep_deviation_shrinks() {
        // Non-uniform sample times: the centered differences are only
        // consistent, so the spread around the constant must fall with n.
        let dev = |n: usize| {
            let s: Vec<_> = (0..n)
                .map(|i| {
                    let s = 2.0 * PI * i as f64 / n as f64;
                    let t = s + 0.3 * s.sin();
                    (t, geodesic_gamma0(t))
                })
                .collect();
            antisym_rep(&s).max_deviation
        };
        let (d1, d2) = (dev(64), dev(128));
        assert!(d2 < d1);
    }

    #[test]
    fn geodesic_length_values() {
        let l = geodesic_length(&sample_gamma0(512));
        let exact = 2.0_f64.sqrt() * PI;
        assert!((l - exact).abs() < 1e-4);
        let constant: Vec<_> = (0..16).map(|i| (i as f64, geodesic_gamma0(0.4))).collect();
        assert_eq!(geodesic_length(&constant), 0.0);
        let e1 = (geodesic_length(&sample_gamma0(64)) - exact).abs();
        let e2 = (geodesic_length(&sample_gamma0(128)) - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}
