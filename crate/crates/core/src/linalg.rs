//! Jones calculus, Stokes parameters and small dense complex matrices.
//!
//! Jones matrices act on column vectors `(ex, ey)`. Retarders use the
//! symmetric phase convention `diag(e^{+iδ/2}, e^{-iδ/2})` in their own
//! frame, so a retarder is in SU(2) and carries no excess global phase.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Index, IndexMut, Mul};

use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type C64 = Complex<f64>;

/// `e^{i phase}`
#[inline]
pub fn cis(phase: f64) -> C64 {
    let (s, c) = phase.sin_cos();
    C64::new(c, s)
}

/// `e^{i 2π x}` evaluated on the fractional part of `x` so that large
/// arguments (optical frequency times delay) keep full phase precision.
#[inline]
pub fn cis_cycles(x: f64) -> C64 {
    cis(2.0 * PI * (x - x.round()))
}

/// Polarization state as a pair of complex field amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesVector {
    pub ex: C64,
    pub ey: C64,
}

impl JonesVector {
    pub const fn new(ex: C64, ey: C64) -> Self {
        Self { ex, ey }
    }

    pub fn from_real(ex: f64, ey: f64) -> Self {
        Self::new(C64::new(ex, 0.0), C64::new(ey, 0.0))
    }

    pub fn horizontal() -> Self {
        Self::from_real(1.0, 0.0)
    }

    pub fn vertical() -> Self {
        Self::from_real(0.0, 1.0)
    }

    pub fn diagonal() -> Self {
        let a = core::f64::consts::FRAC_1_SQRT_2;
        Self::from_real(a, a)
    }

    pub fn circular() -> Self {
        let a = core::f64::consts::FRAC_1_SQRT_2;
        Self::new(C64::new(a, 0.0), C64::new(0.0, a))
    }

    pub fn power(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    pub fn normalized(&self) -> Result<Self> {
        let p = self.power();
        if !(p > 0.0) || !p.is_finite() {
            return Err(invalid("cannot normalize a zero-power Jones vector"));
        }
        let s = 1.0 / p.sqrt();
        Ok(Self::new(self.ex * s, self.ey * s))
    }

    /// Hermitian inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &JonesVector) -> C64 {
        self.ex.conj() * other.ex + self.ey.conj() * other.ey
    }

    /// The state orthogonal to `self` with the same power.
    pub fn orthogonal(&self) -> Self {
        Self::new(-self.ey.conj(), self.ex.conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.ex * s, self.ey * s)
    }

    pub fn is_finite(&self) -> bool {
        self.ex.is_finite() && self.ey.is_finite()
    }
}

/// 2×2 complex transfer matrix of a polarization element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[C64; 2]; 2]);

impl JonesMatrix {
    pub fn identity() -> Self {
        Self::diag(C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn zero() -> Self {
        Self([[C64::zero(); 2]; 2])
    }

    pub fn diag(a: C64, b: C64) -> Self {
        Self([[a, C64::zero()], [C64::zero(), b]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        let m = &self.0;
        JonesVector::new(
            m[0][0] * v.ex + m[0][1] * v.ey,
            m[1][0] * v.ex + m[1][1] * v.ey,
        )
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖J†J − I‖_F`
    pub fn unitarity_error(&self) -> f64 {
        (self.adjoint() * *self - Self::identity()).frobenius_norm()
    }

    /// Unitary matrix taking the normalized state `from` onto `to`.
    pub fn mapping(from: &JonesVector, to: &JonesVector) -> Result<Self> {
        let a = from.normalized()?;
        let b = to.normalized()?;
        let (ao, bo) = (a.orthogonal(), b.orthogonal());
        // |b⟩⟨a| + |b⊥⟩⟨a⊥|
        let outer = |u: &JonesVector, v: &JonesVector| {
            JonesMatrix([
                [u.ex * v.ex.conj(), u.ex * v.ey.conj()],
                [u.ey * v.ex.conj(), u.ey * v.ey.conj()],
            ])
        };
        Ok(outer(&b, &a) + outer(&bo, &ao))
    }

    /// Haar-distributed element of SU(2).
    pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut q = [0.0f64; 4];
        loop {
            for x in q.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                for x in q.iter_mut() {
                    *x /= n;
                }
                break;
            }
        }
        let [a, b, c, d] = q;
        Self([
            [C64::new(a, b), C64::new(c, d)],
            [C64::new(-c, d), C64::new(a, -b)],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|e| e.is_finite())
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        let (a, b) = (&self.0, &rhs.0);
        JonesMatrix([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl core::ops::Add for JonesMatrix {
    type Output = JonesMatrix;

    fn add(mut self, rhs: JonesMatrix) -> JonesMatrix {
        for r in 0..2 {
            for c in 0..2 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
        self
    }
}

impl core::ops::Sub for JonesMatrix {
    type Output = JonesMatrix;

    fn sub(mut self, rhs: JonesMatrix) -> JonesMatrix {
        for r in 0..2 {
            for c in 0..2 {
                self.0[r][c] -= rhs.0[r][c];
            }
        }
        self
    }
}

/// Real rotation of the field axes by `angle` (a circular-birefringence rotator).
pub fn rotator(angle: f64) -> JonesMatrix {
    let (s, c) = angle.sin_cos();
    JonesMatrix([
        [C64::new(c, 0.0), C64::new(-s, 0.0)],
        [C64::new(s, 0.0), C64::new(c, 0.0)],
    ])
}

/// Linear retarder with the given retardance and fast-axis orientation.
pub fn waveplate(retardance: f64, orientation: f64) -> JonesMatrix {
    let half = 0.5 * retardance;
    let core = JonesMatrix::diag(cis(half), cis(-half));
    if orientation == 0.0 {
        return core;
    }
    rotator(orientation) * core * rotator(-orientation)
}

/// `a·b` as an unevaluated sum `hi + lo` (Dekker).
fn two_product(a: f64, b: f64) -> (f64, f64) {
    const SPLIT: f64 = 134_217_729.0;
    let split = |x: f64| {
        let c = SPLIT * x;
        let h = c - (c - x);
        (h, x - h)
    };
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// Fractional cycles of `a·b`, exact up to the final rounding.
fn product_cycles(a: f64, b: f64) -> f64 {
    let (hi, lo) = two_product(a, b);
    (hi - hi.round()) + lo
}

/// Differential-group-delay element: `diag(e^{+iπντ}, e^{-iπντ})`.
pub fn dgd_element(tau: f64, nu: f64) -> JonesMatrix {
    let x = product_cycles(0.5 * nu, tau);
    JonesMatrix::diag(cis_cycles(x), cis_cycles(-x))
}

/// Stokes parameters of a fully or partially polarized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        Self { s0, s1, s2, s3 }
    }

    pub fn polarized_norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }
}

pub fn jones_to_stokes(v: &JonesVector) -> StokesVector {
    let (px, py) = (v.ex.norm_sqr(), v.ey.norm_sqr());
    let cross = v.ex.conj() * v.ey;
    StokesVector::new(px + py, px - py, 2.0 * cross.re, 2.0 * cross.im)
}

/// Angle on the Poincaré sphere between two polarization states, in `[0, π]`.
pub fn stokes_angle(a: &StokesVector, b: &StokesVector) -> Result<f64> {
    let (na, nb) = (a.polarized_norm(), b.polarized_norm());
    if !(a.s0 > 0.0 && b.s0 > 0.0 && na > 0.0 && nb > 0.0) {
        return Err(invalid(
            "stokes_angle needs two polarized, nonzero-power states",
        ));
    }
    let u = [a.s1 / na, a.s2 / na, a.s3 / na];
    let w = [b.s1 / nb, b.s2 / nb, b.s3 / nb];
    let dot = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
    let cross = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    Ok(sin.atan2(dot))
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid("matrix data length does not match its shape"));
        }
        Ok(Self {
            rows,
            cols,
            data: data.to_vec(),
        })
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(invalid("matrix product with incompatible shapes"));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.data[k * rhs.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|e| e.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|e| e.is_finite())
    }

    /// Copy of the 2×2 sub-block whose top-left corner is `(row, col)`.
    pub fn jones_block(&self, row: usize, col: usize) -> JonesMatrix {
        JonesMatrix([
            [self[(row, col)], self[(row, col + 1)]],
            [self[(row + 1, col)], self[(row + 1, col + 1)]],
        ])
    }

    pub fn set_jones_block(&mut self, row: usize, col: usize, j: &JonesMatrix) {
        for r in 0..2 {
            for c in 0..2 {
                self[(row + r, col + c)] = j.0[r][c];
            }
        }
    }

    /// Squared Frobenius norm of a rectangular sub-block.
    pub fn block_power(&self, row: usize, col: usize, height: usize, width: usize) -> f64 {
        let mut acc = 0.0;
        for r in row..row + height {
            for c in col..col + width {
                acc += self[(r, c)].norm_sqr();
            }
        }
        acc
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl From<JonesMatrix> for CMatrix {
    fn from(j: JonesMatrix) -> Self {
        CMatrix::from_fn(2, 2, |r, c| j.0[r][c])
    }
}

/// Frobenius distance between `a` and `b` after removing the global phase of
/// `a` relative to `b`, referenced on the largest-magnitude entry of `b`.
pub fn phase_aligned_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(invalid(
            "phase-aligned distance between differently shaped matrices",
        ));
    }
    let (idx, _) = b
        .data
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bm), (i, e)| {
            let m = e.norm_sqr();
            if m > bm {
                (i, m)
            } else {
                (bi, bm)
            }
        });
    let rot = if a.data[idx].norm() > 0.0 && b.data[idx].norm() > 0.0 {
        cis(b.data[idx].arg() - a.data[idx].arg())
    } else {
        C64::new(1.0, 0.0)
    };
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x * rot - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Convergence threshold of the Jacobi sweeps, relative to column norms.
pub const SVD_TOLERANCE: f64 = 1e-12;
const SVD_MAX_SWEEPS: usize = 80;

/// Singular values in descending order (`min(rows, cols)` of them).
pub fn svd_singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(invalid(
            "singular values of a matrix with non-finite entries",
        ));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(Vec::new());
    }
    if m.rows == 2 && m.cols == 2 {
        return Ok(singular_values_2x2(&m.jones_block(0, 0)));
    }
    // Work on columns of a tall matrix.
    let work = if m.rows >= m.cols {
        m.clone()
    } else {
        m.adjoint()
    };
    let mut sv = one_sided_jacobi(work);
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    Ok(sv)
}

/// Closed form for 2×2: `σ₁² + σ₂² = ‖M‖²_F`, `σ₁σ₂ = |det M|`.
pub fn singular_values_2x2(j: &JonesMatrix) -> Vec<f64> {
    let f = j.0.iter().flatten().map(|e| e.norm_sqr()).sum::<f64>();
    let d = j.det().norm();
    let disc = (f * f - 4.0 * d * d).max(0.0).sqrt();
    let s1 = (0.5 * (f + disc)).sqrt();
    let s2 = if s1 > 0.0 { d / s1 } else { 0.0 };
    vec![s1, s2]
}

fn one_sided_jacobi(mut a: CMatrix) -> Vec<f64> {
    let (rows, cols) = (a.rows, a.cols);
    let col_dot = |a: &CMatrix, p: usize, q: usize| -> C64 {
        let mut acc = C64::zero();
        for r in 0..rows {
            acc += a.data[r * cols + p].conj() * a.data[r * cols + q];
        }
        acc
    };
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = col_dot(&a, p, p).re;
                let beta = col_dot(&a, q, q).re;
                let gamma = col_dot(&a, p, q);
                let g = gamma.norm();
                if g == 0.0 || g <= SVD_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let ap = a.data[r * cols + p];
                    let aq = a.data[r * cols + q];
                    a.data[r * cols + p] = ap * c - aq * phase.conj() * s;
                    a.data[r * cols + q] = ap * phase * s + aq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..cols)
        .map(|c| col_dot(&a, c, c).re.max(0.0).sqrt())
        .collect()
}

/// The 2N×2N linear response of an N-channel device at one optical frequency.
///
/// Rows and columns are ordered `(channel, polarization)` with polarization
/// fastest: index `2·channel + pol`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTransferMatrix {
    pub n_channels: usize,
    pub frequency: f64,
    pub entries: CMatrix,
}

impl BlockTransferMatrix {
    pub fn new(n_channels: usize, frequency: f64, entries: CMatrix) -> Result<Self> {
        if n_channels == 0 || entries.rows != 2 * n_channels || entries.cols != 2 * n_channels {
            return Err(invalid("block transfer matrix must be 2N×2N with N ≥ 1"));
        }
        Ok(Self {
            n_channels,
            frequency,
            entries,
        })
    }

    pub fn identity(n_channels: usize, frequency: f64) -> Self {
        Self {
            n_channels,
            frequency,
            entries: CMatrix::identity(2 * n_channels),
        }
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        svd_singular_values(&self.entries)
    }

    /// Jones block from input channel `from` to output channel `to`.
    pub fn block(&self, to: usize, from: usize) -> JonesMatrix {
        self.entries.jones_block(2 * to, 2 * from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FRAC: f64 = core::f64::consts::FRAC_1_SQRT_2;

    fn close(a: &JonesMatrix, b: &JonesMatrix, tol: f64) -> bool {
        (*a - *b).frobenius_norm() < tol
    }

    #[test]
    fn identity_and_scaled_identity_singular_values() {
        let sv = svd_singular_values(&CMatrix::identity(2)).unwrap();
        assert_eq!(sv, vec![1.0, 1.0]);
        let sv = svd_singular_values(&CMatrix::diag_real(&[0.5, 0.5])).unwrap();
        assert!((sv[0] - 0.5).abs() < 1e-15 && (sv[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_matrix_is_rejected() {
        let mut m = CMatrix::identity(4);
        m[(1, 2)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(
            svd_singular_values(&m),
            Err(crate::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn jacobi_handles_rank_deficient_and_rectangular() {
        let m = CMatrix::diag_real(&[1.0, 1.0, 1.0, 0.0]);
        let sv = svd_singular_values(&m).unwrap();
        assert_eq!(sv.len(), 4);
        assert_eq!(sv[3], 0.0);
        let wide = CMatrix::from_fn(2, 3, |r, c| C64::new((r + c) as f64, r as f64));
        assert_eq!(svd_singular_values(&wide).unwrap().len(), 2);
    }

    #[test]
    fn waveplate_zero_retardance_is_identity() {
        for theta in [0.0, 0.3, -1.2, 2.9] {
            assert!(close(
                &waveplate(0.0, theta),
                &JonesMatrix::identity(),
                1e-15
            ));
        }
    }

    #[test]
    fn half_wave_plate_on_axis() {
        let hwp = waveplate(PI, 0.0);
        let expected = JonesMatrix::diag(C64::new(0.0, 1.0), C64::new(0.0, -1.0));
        assert!(close(&hwp, &expected, 1e-15));
    }

    #[test]
    fn two_quarter_wave_plates_make_a_half_wave_plate() {
        for theta in [0.0, 0.4, 1.1] {
            let q = waveplate(PI / 2.0, theta);
            assert!(close(&(q * q), &waveplate(PI, theta), 1e-12));
        }
    }

    #[test]
    fn retarder_determinant_has_unit_modulus() {
        let w = waveplate(1.234, 0.77);
        assert!((w.det().norm() - 1.0).abs() < 1e-10);
        assert!(w.unitarity_error() < 1e-10);
    }

    #[test]
    fn dgd_element_examples() {
        assert!(close(
            &dgd_element(0.0, 193.4e12),
            &JonesMatrix::identity(),
            1e-15
        ));
        let tau = 1e-12;
        let nu = 193.4e12;
        let a = dgd_element(tau, nu);
        // One period of 1/τ flips the global sign; two restore the matrix.
        let b = dgd_element(tau, nu + 1.0 / tau);
        assert!(close(&a, &b.scale(C64::new(-1.0, 0.0)), 1e-9));
        let d = phase_aligned_distance(&CMatrix::from(a), &CMatrix::from(b)).unwrap();
        assert!(d < 1e-9);
        assert!(close(&a, &dgd_element(tau, nu + 2.0 / tau), 1e-9));
        // phase difference between the diagonal entries is 2πντ mod 2π
        let diff = (a.0[0][0] / a.0[1][1]).arg();
        let expected = {
            let x = nu * tau;
            let f = x - x.round();
            2.0 * PI * f
        };
        let wrapped = (diff - expected + PI).rem_euclid(2.0 * PI) - PI;
        assert!(wrapped.abs() < 1e-9, "diff {diff} expected {expected}");
    }

    #[test]
    fn dgd_elements_on_same_axis_add() {
        let nu = 192.1e12;
        let (t1, t2) = (0.37e-12, 1.91e-12);
        let combined = dgd_element(t1, nu) * dgd_element(t2, nu);
        assert!(close(&combined, &dgd_element(t1 + t2, nu), 1e-12));
    }

    #[test]
    fn stokes_examples() {
        let s = jones_to_stokes(&JonesVector::horizontal());
        assert_eq!((s.s0, s.s1, s.s2, s.s3), (1.0, 1.0, 0.0, 0.0));
        let s = jones_to_stokes(&JonesVector::from_real(FRAC, FRAC));
        assert!((s.s0 - 1.0).abs() < 1e-15 && s.s1.abs() < 1e-15);
        assert!((s.s2 - 1.0).abs() < 1e-15 && s.s3.abs() < 1e-15);
        let s = jones_to_stokes(&JonesVector::circular());
        assert!((s.s3 - 1.0).abs() < 1e-15 && s.s1.abs() < 1e-15 && s.s2.abs() < 1e-15);
    }

    #[test]
    fn stokes_angle_examples() {
        let h = jones_to_stokes(&JonesVector::horizontal());
        let v = jones_to_stokes(&JonesVector::vertical());
        let d = jones_to_stokes(&JonesVector::diagonal());
        assert_eq!(stokes_angle(&h, &h).unwrap(), 0.0);
        assert!((stokes_angle(&h, &v).unwrap() - PI).abs() < 1e-15);
        assert!((stokes_angle(&h, &d).unwrap() - PI / 2.0).abs() < 1e-15);
        let dark = StokesVector::new(0.0, 0.0, 0.0, 0.0);
        assert!(stokes_angle(&h, &dark).is_err());
    }

    #[test]
    fn mapping_takes_state_to_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let u = JonesMatrix::random_unitary(&mut rng);
            let from = u.apply(&JonesVector::horizontal());
            let to = JonesVector::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8));
            let m = JonesMatrix::mapping(&from, &to).unwrap();
            assert!(m.unitarity_error() < 1e-12);
            let out = m.apply(&from);
            assert!((to.inner(&out).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn long_retarder_chains_stay_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = JonesMatrix::identity();
        for _ in 0..10_000 {
            let d: f64 = rng.random::<f64>() * 2.0 * PI;
            let o: f64 = rng.random::<f64>() * PI;
            acc = waveplate(d, o) * rotator(rng.random::<f64>()) * acc;
        }
        assert!(acc.unitarity_error() < 1e-9);
    }

    #[test]
    fn phase_alignment_removes_global_phase() {
        let a = CMatrix::from(waveplate(0.7, 0.2));
        let b = a.scale(cis(1.3));
        assert!(phase_aligned_distance(&a, &b).unwrap() < 1e-14);
    }
}
