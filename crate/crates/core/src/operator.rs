//! The discrete Wentzell-Laplacian, its spectral calculus and damping.
//!
//! The continuous Wentzell-Laplacian `Δ_W` is negative; everything here works with the
//! positive operator `A = K_Ω + M_Ω + K_Γ + M_Γ` acting against the coupled
//! bulk/boundary mass `M = M_Ω + M_Γ`. Constants lie in the kernel of both
//! stiffness blocks, so the smallest generalized eigenvalue of `(A, M)` is 1.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Layout, Mesh};
use crate::linalg::{dot, generalized_symmetric_eigen, norm2, BandedLdl, CsrMatrix, Mat};
use crate::scalar::Real;

/// Weak-form blocks of the four constituent operators, all on the bulk index set.
#[derive(Debug, Clone)]
pub struct OperatorBlocks<T> {
    pub bulk_mass: CsrMatrix<T>,
    pub bulk_stiffness: CsrMatrix<T>,
    pub boundary_mass: CsrMatrix<T>,
    pub boundary_stiffness: CsrMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// `M`-orthonormal eigenvectors as columns (`nodes × modes`).
    pub vectors: Mat<T>,
}

impl<T: Real> EigenDecomposition<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> Vec<T> {
        self.vectors.column(j)
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            values: self.values[..n].to_vec(),
            vectors: self.vectors.leading_columns(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WentzellOperator<T> {
    pub blocks: OperatorBlocks<T>,
    /// `A = K_Ω + M_Ω + K_Γ + M_Γ`.
    pub stiffness: CsrMatrix<T>,
    /// `M = M_Ω + M_Γ`.
    pub mass: CsrMatrix<T>,
    pub eig: Option<EigenDecomposition<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    /// `ω·A^θ + (1 − ω)·M`; requires `α = 1`.
    SpectralR1,
    /// `ω·B^θ + αω·K_Γ + M` with `B = K_Ω` powered in the `M` geometry.
    #[default]
    BlockR2,
}

/// Which exponent the spectral power applies to `Λ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExponentConvention {
    #[default]
    Theta,
    TwoTheta,
}

impl ExponentConvention {
    pub fn exponent(self, theta: f64) -> f64 {
        match self {
            ExponentConvention::Theta => theta,
            ExponentConvention::TwoTheta => 2.0 * theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalParams {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub realization: Realization,
    #[serde(default)]
    pub exponent_convention: ExponentConvention,
}

fn default_theta() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

impl Default for FractionalParams {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            alpha: 1.0,
            omega: 1.0,
            realization: Realization::default(),
            exponent_convention: ExponentConvention::default(),
        }
    }
}

impl FractionalParams {
    pub fn new(theta: f64, alpha: f64, omega: f64, realization: Realization) -> Self {
        Self {
            theta,
            alpha,
            omega,
            realization,
            exponent_convention: ExponentConvention::Theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::config(
                "fractional.theta",
                format!("θ = {} outside the admissible range [1/2, 1]", self.theta),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(
                "fractional.alpha",
                format!("α = {} outside the admissible range (0, 1]", self.alpha),
            ));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::config(
                "fractional.omega",
                format!("ω = {} outside the admissible range (0, 1]", self.omega),
            ));
        }
        if self.realization == Realization::SpectralR1 && self.alpha != 1.0 {
            return Err(Error::config(
                "fractional.alpha",
                "the spectral_r1 realization requires α = 1",
            ));
        }
        Ok(())
    }
}

/// Damping matrix together with the three quadratic forms that make up the
/// dissipation integrand: fractional bulk part, boundary Laplace–Beltrami
/// part and the plain `𝕏²` mass.
#[derive(Debug, Clone)]
pub struct Damping<T> {
    pub matrix: Mat<T>,
    pub fractional: Mat<T>,
    pub boundary: Mat<T>,
    pub mass: Mat<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsomorphismReport<T> {
    pub ratio_low: T,
    pub ratio_high: T,
    pub c_star: T,
    pub ratios: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteNorms<T> {
    pub norm_x2_sq: T,
    pub norm_v1_sq: T,
    pub energy_pairing: T,
}

fn element_matrices<T: Real>(h: T) -> ([[T; 2]; 2], [[T; 2]; 2]) {
    // two-point Gauss on the reference element, exact for these integrands
    let gauss = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
    let mut k = [[T::zero(); 2]; 2];
    let mut m = [[T::zero(); 2]; 2];
    let grad = [-T::one() / h, T::one() / h];
    let w = h * T::lit(0.5);
    for xi in gauss {
        let phi = [T::lit(0.5 * (1.0 - xi)), T::lit(0.5 * (1.0 + xi))];
        for a in 0..2 {
            for b in 0..2 {
                k[a][b] += w * grad[a] * grad[b];
                m[a][b] += w * phi[a] * phi[b];
            }
        }
    }
    (k, m)
}

fn line_matrices<T: Real>(elements: usize, h: T) -> (CsrMatrix<T>, CsrMatrix<T>) {
    let (ke, me) = element_matrices(h);
    let mut kt = Vec::with_capacity(4 * elements);
    let mut mt = Vec::with_capacity(4 * elements);
    for e in 0..elements {
        let dofs = [e, e + 1];
        for a in 0..2 {
            for b in 0..2 {
                kt.push((dofs[a], dofs[b], ke[a][b]));
                mt.push((dofs[a], dofs[b], me[a][b]));
            }
        }
    }
    (
        CsrMatrix::from_triplets(elements + 1, elements + 1, kt),
        CsrMatrix::from_triplets(elements + 1, elements + 1, mt),
    )
}

/// Stiffness of the trigonometric interpolant on a circle:
/// `uᵀ S v = ∫ u′ v′` for `P` equispaced samples.
pub fn circle_stiffness<T: Real>(points: usize, circumference: T) -> Mat<T> {
    let p = points;
    let dx = circumference / T::lit(p as f64);
    let tau = T::TAU();
    let kappa_sq: Vec<T> = (0..p)
        .map(|k| {
            let kk = tau * T::lit(k.min(p - k) as f64) / circumference;
            kk * kk
        })
        .collect();
    let row: Vec<T> = (0..p)
        .map(|d| {
            let s = (0..p).fold(T::zero(), |acc, k| {
                let phase = tau * T::lit(((k * d) % p) as f64) / T::lit(p as f64);
                acc + kappa_sq[k] * phase.cos()
            });
            dx * s / T::lit(p as f64)
        })
        .collect();
    Mat::from_fn(p, p, |i, j| row[(i + p - j) % p])
}

pub fn assemble_blocks<T: Real>(mesh: &Mesh<T>) -> OperatorBlocks<T> {
    let n = mesh.node_count();
    match mesh.layout {
        Layout::Interval { h } => {
            let (bulk_stiffness, bulk_mass) = line_matrices(mesh.elements.len(), h);
            let boundary_mass = CsrMatrix::from_triplets(
                n,
                n,
                mesh.boundary_nodes.iter().zip(&mesh.boundary_quadrature.weights).map(|(&b, &w)| (b, b, w)),
            );
            OperatorBlocks {
                bulk_mass,
                bulk_stiffness,
                boundary_mass,
                boundary_stiffness: CsrMatrix::zeros(n, n),
            }
        }
        Layout::Slab {
            h,
            rings,
            points,
            circumference,
        } => {
            let (ky, my) = line_matrices(rings - 1, h);
            let s = circle_stiffness(points, circumference);
            let dx = circumference / T::lit(points as f64);
            let node = |ring: usize, i: usize| ring * points + i;

            let mut mass_t = Vec::new();
            let mut stiff_t = Vec::new();
            for (r1, r2, myv) in my.triplets() {
                for i in 0..points {
                    mass_t.push((node(r1, i), node(r2, i), myv * dx));
                    for j in 0..points {
                        stiff_t.push((node(r1, i), node(r2, j), myv * s[(i, j)]));
                    }
                }
            }
            for (r1, r2, kyv) in ky.triplets() {
                for i in 0..points {
                    stiff_t.push((node(r1, i), node(r2, i), kyv * dx));
                }
            }
            let mut bmass_t = Vec::new();
            let mut bstiff_t = Vec::new();
            for ring in [0, rings - 1] {
                for i in 0..points {
                    bmass_t.push((node(ring, i), node(ring, i), dx));
                    for j in 0..points {
                        bstiff_t.push((node(ring, i), node(ring, j), s[(i, j)]));
                    }
                }
            }
            OperatorBlocks {
                bulk_mass: CsrMatrix::from_triplets(n, n, mass_t),
                bulk_stiffness: CsrMatrix::from_triplets(n, n, stiff_t),
                boundary_mass: CsrMatrix::from_triplets(n, n, bmass_t),
                boundary_stiffness: CsrMatrix::from_triplets(n, n, bstiff_t),
            }
        }
    }
}

fn sym_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

pub fn assemble_wentzell<T: Real>(blocks: OperatorBlocks<T>) -> Result<WentzellOperator<T>> {
    let named = [
        ("bulk mass", &blocks.bulk_mass),
        ("bulk stiffness", &blocks.bulk_stiffness),
        ("boundary mass", &blocks.boundary_mass),
        ("boundary stiffness", &blocks.boundary_stiffness),
    ];
    let n = blocks.bulk_mass.rows();
    for (name, m) in named {
        if m.rows() != n || m.cols() != n {
            return Err(Error::Assembly(format!("{name} block has the wrong shape")));
        }
        let asym = m.asymmetry();
        if asym > sym_tol() {
            return Err(Error::Assembly(format!("{name} block is not symmetric (relative asymmetry {asym})")));
        }
    }
    let one = T::one();
    let mass = CsrMatrix::linear_combination(&[(one, &blocks.bulk_mass), (one, &blocks.boundary_mass)]);
    let stiffness = CsrMatrix::linear_combination(&[
        (one, &blocks.bulk_stiffness),
        (one, &blocks.bulk_mass),
        (one, &blocks.boundary_stiffness),
        (one, &blocks.boundary_mass),
    ]);
    for (name, m) in [("mass", &mass), ("stiffness", &stiffness)] {
        let floor = T::epsilon() * T::lit(100.0) * m.max_abs();
        let ldl = BandedLdl::factor(m);
        if ldl.pivots().iter().any(|&d| d <= floor) {
            return Err(Error::Assembly(format!("composite {name} matrix is not positive definite")));
        }
    }
    Ok(WentzellOperator {
        blocks,
        stiffness,
        mass,
        eig: None,
    })
}

/// Flips each column so its first clearly nonzero entry is positive.
fn normalize_signs<T: Real>(vectors: &mut Mat<T>) {
    for j in 0..vectors.cols() {
        let col = vectors.column(j);
        let scale = col.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let floor = scale * T::epsilon() * T::lit(1e3);
        if let Some(&first) = col.iter().find(|v| v.abs() > floor) {
            if first < T::zero() {
                let flipped: Vec<T> = col.iter().map(|&v| -v).collect();
                vectors.set_column(j, &flipped);
            }
        }
    }
}

pub fn solve_eigenproblem<T: Real>(op: &WentzellOperator<T>, n: usize) -> Result<EigenDecomposition<T>> {
    let total = op.mass.rows();
    if n == 0 || n > total {
        return Err(Error::Parameter(format!("requested {n} eigenpairs from a {total}-node operator")));
    }
    if let Some(eig) = &op.eig {
        if eig.len() >= n {
            return Ok(eig.truncated(n));
        }
    }
    let (values, mut vectors) = generalized_symmetric_eigen(&op.stiffness.to_dense(), &op.mass.to_dense())?;
    normalize_signs(&mut vectors);
    let full = EigenDecomposition { values, vectors };
    Ok(if n == total { full } else { full.truncated(n) })
}

impl<T: Real> WentzellOperator<T> {
    /// Computes and stores the full decomposition if not already present.
    pub fn ensure_full_eigen(&mut self) -> Result<&EigenDecomposition<T>> {
        let total = self.mass.rows();
        if self.eig.as_ref().is_none_or(|e| e.len() < total) {
            self.eig = Some(solve_eigenproblem(self, total)?);
        }
        Ok(self.eig.as_ref().unwrap())
    }

    pub fn node_count(&self) -> usize {
        self.mass.rows()
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!("fractional exponent θ = {theta} outside [0, 1]")));
    }
    Ok(())
}

/// Weak-form action of `A^θ`: `M W diag(Λ^e) Wᵀ M x`, with `e` set by the convention.
pub fn apply_fractional_power<T: Real>(
    eig: &EigenDecomposition<T>,
    mass: &CsrMatrix<T>,
    theta: f64,
    x: &[T],
    convention: ExponentConvention,
) -> Result<Vec<T>> {
    check_theta(theta)?;
    if x.len() != mass.rows() {
        return Err(Error::dim(mass.rows(), x.len()));
    }
    let e = T::lit(convention.exponent(theta));
    let mut coeffs = eig.vectors.tr_mul_vec(&mass.mul_vec(x));
    for (c, &lam) in coeffs.iter_mut().zip(&eig.values) {
        *c *= lam.powf(e);
    }
    Ok(mass.mul_vec(&eig.vectors.mul_vec(&coeffs)))
}

/// Dense `M W diag(f(Λ)) Wᵀ M`.
fn spectral_matrix<T: Real>(vectors: &Mat<T>, mass: &CsrMatrix<T>, weights: &[T]) -> Mat<T> {
    let n = vectors.rows();
    let k = vectors.cols();
    let mut mw = Mat::zeros(n, k);
    for j in 0..k {
        mw.set_column(j, &mass.mul_vec(&vectors.column(j)));
    }
    let mut scaled = mw.clone();
    for i in 0..n {
        for (v, &w) in scaled.row_mut(i).iter_mut().zip(weights) {
            *v *= w;
        }
    }
    let mut out = scaled.matmul(&mw.transpose());
    out.symmetrize();
    out
}

/// Dense matrix of `A^θ` in weak form.
pub fn fractional_power_matrix<T: Real>(
    eig: &EigenDecomposition<T>,
    mass: &CsrMatrix<T>,
    theta: f64,
    convention: ExponentConvention,
) -> Result<Mat<T>> {
    check_theta(theta)?;
    let e = T::lit(convention.exponent(theta));
    let weights: Vec<T> = eig.values.iter().map(|&l| l.powf(e)).collect();
    Ok(spectral_matrix(&eig.vectors, mass, &weights))
}

pub fn build_damping_matrix<T: Real>(op: &WentzellOperator<T>, params: &FractionalParams) -> Result<Damping<T>> {
    params.validate().map_err(|e| Error::Parameter(e.to_string()))?;
    let omega = T::lit(params.omega);
    let mass = op.mass.to_dense();
    let n = op.node_count();
    match params.realization {
        Realization::SpectralR1 => {
            let owned;
            let eig = match &op.eig {
                Some(e) if e.len() == n => e,
                _ => {
                    owned = solve_eigenproblem(op, n)?;
                    &owned
                }
            };
            let power = fractional_power_matrix(eig, &op.mass, params.theta, params.exponent_convention)?;
            let fractional = power.add_scaled(-T::one(), &mass).scale(omega);
            Ok(Damping {
                matrix: fractional.add_scaled(T::one(), &mass),
                fractional,
                boundary: Mat::zeros(n, n),
                mass,
            })
        }
        Realization::BlockR2 => {
            let (mu, mut z) = generalized_symmetric_eigen(&op.blocks.bulk_stiffness.to_dense(), &mass)?;
            normalize_signs(&mut z);
            let e = T::lit(params.exponent_convention.exponent(params.theta));
            let weights: Vec<T> = mu.iter().map(|&m| m.max(T::zero()).powf(e)).collect();
            let fractional = spectral_matrix(&z, &op.mass, &weights).scale(omega);
            let boundary = op.blocks.boundary_stiffness.to_dense().scale(T::lit(params.alpha) * omega);
            let matrix = fractional.add_scaled(T::one(), &boundary).add_scaled(T::one(), &mass);
            Ok(Damping {
                matrix,
                fractional,
                boundary,
                mass,
            })
        }
    }
}

/// Solves `−Δu = p₁` in Ω, `−Δ_Γu + ∂ₙu + u = p₂` on Γ in weak form.
///
/// `p1` is a bulk nodal field, `p2` a boundary-local field.
pub fn solve_wentzell_bvp<T: Real>(mesh: &Mesh<T>, blocks: &OperatorBlocks<T>, p1: &[T], p2: &[T]) -> Result<Vec<T>> {
    if p1.len() != mesh.node_count() {
        return Err(Error::dim(mesh.node_count(), p1.len()));
    }
    let p2_lifted = mesh.lift(p2)?;
    let load: Vec<T> = blocks
        .bulk_mass
        .mul_vec(p1)
        .into_iter()
        .zip(blocks.boundary_mass.mul_vec(&p2_lifted))
        .map(|(a, b)| a + b)
        .collect();
    let one = T::one();
    let system = CsrMatrix::linear_combination(&[
        (one, &blocks.bulk_stiffness),
        (one, &blocks.boundary_stiffness),
        (one, &blocks.boundary_mass),
    ]);
    let ldl = BandedLdl::factor(&system);
    if !ldl.is_positive_definite() {
        return Err(Error::Numeric("boundary value problem matrix is singular".into()));
    }
    let u = ldl.solve(&load);
    let residual: Vec<T> = system.mul_vec(&u).iter().zip(&load).map(|(&a, &b)| a - b).collect();
    let scale = norm2(&load).max(T::min_positive_value());
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e4));
    let rel = norm2(&residual) / scale;
    if norm2(&load) > T::zero() && rel > tol {
        return Err(Error::Numeric(format!("boundary value solve residual {rel} above tolerance")));
    }
    Ok(u)
}

/// Ratios `‖M⁻¹AU‖_M / (‖U‖²_M + ‖M⁻¹AU‖²_M)^{1/2}` over a deterministic
/// probe family: the constant vector first, then uniform random vectors.
pub fn estimate_isomorphism_constant<T: Real>(
    op: &WentzellOperator<T>,
    probes: usize,
    seed: u64,
) -> Result<IsomorphismReport<T>> {
    if probes == 0 {
        return Err(Error::Parameter("at least one probe is required".into()));
    }
    let n = op.node_count();
    let mass_ldl = BandedLdl::factor(&op.mass);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(probes);
    for k in 0..probes {
        let u: Vec<T> = if k == 0 {
            vec![T::one(); n]
        } else {
            (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
        };
        let au = op.stiffness.mul_vec(&u);
        let image_sq = dot(&au, &mass_ldl.solve(&au));
        let base_sq = op.mass.quad_form(&u);
        ratios.push((image_sq / (base_sq + image_sq)).sqrt());
    }
    let ratio_low = ratios.iter().copied().fold(T::infinity(), T::min);
    let ratio_high = ratios.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(IsomorphismReport {
        ratio_low,
        ratio_high,
        c_star: ratio_high.max(T::one() / ratio_low),
        ratios,
    })
}

pub fn discrete_norms<T: Real>(op: &WentzellOperator<T>, u: &[T], v: &[T]) -> Result<DiscreteNorms<T>> {
    let n = op.node_count();
    for x in [u, v] {
        if x.len() != n {
            return Err(Error::dim(n, x.len()));
        }
    }
    let av = op.stiffness.mul_vec(v);
    Ok(DiscreteNorms {
        norm_x2_sq: op.mass.quad_form(v),
        norm_v1_sq: op.stiffness.quad_form(u),
        energy_pairing: dot(u, &av),
    })
}

/// `index,lambda,node_0,…` with one row per eigenpair, index starting at 1.
pub fn write_eigen_csv<T: Real, W: Write + ?Sized>(out: &mut W, eig: &EigenDecomposition<T>) -> io::Result<()> {
    let nodes = eig.vectors.rows();
    write!(out, "index,lambda")?;
    for i in 0..nodes {
        write!(out, ",node_{i}")?;
    }
    writeln!(out)?;
    for j in 0..eig.len() {
        write!(out, "{},{}", j + 1, eig.values[j])?;
        for i in 0..nodes {
            write!(out, ",{}", eig.vectors[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Coordinate text format: a header line with the shape, then `row col value`
/// (zero-based) per stored entry.
pub fn write_coordinate<T: Real, W: Write + ?Sized>(out: &mut W, m: &CsrMatrix<T>) -> io::Result<()> {
    writeln!(out, "% rows={} cols={} nnz={}", m.rows(), m.cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(out, "{i} {j} {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometrySpec};

    fn interval_op(n: usize) -> (Mesh<f64>, WentzellOperator<f64>) {
        let mesh = build_geometry(&GeometrySpec::interval(1.0, n)).unwrap();
        let op = assemble_wentzell(assemble_blocks(&mesh)).unwrap();
        (mesh, op)
    }

    #[test]
    fn interval_two_element_blocks() {
        let mesh = build_geometry::<f64>(&GeometrySpec::interval(1.0, 2)).unwrap();
        let b = assemble_blocks(&mesh);
        let k = b.bulk_stiffness.to_dense();
        let expected_k = [[2.0, -2.0, 0.0], [-2.0, 4.0, -2.0], [0.0, -2.0, 2.0]];
        let expected_m = [[2.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 2.0]];
        let m = b.bulk_mass.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - expected_k[i][j]).abs() < 1e-14);
                assert!((m[(i, j)] - expected_m[i][j] / 12.0).abs() < 1e-15);
            }
        }
        assert_eq!(b.boundary_mass.nnz(), 2);
        assert_eq!(b.boundary_mass.get(0, 0), 1.0);
        assert_eq!(b.boundary_mass.get(2, 2), 1.0);
        assert_eq!(b.boundary_stiffness.nnz(), 0);
    }

    #[test]
    fn circle_stiffness_spectrum() {
        let p = 8;
        let circ = 3.0;
        let s = circle_stiffness::<f64>(p, circ);
        assert!(s.mul_vec(&vec![1.0; p]).iter().all(|v| v.abs() < 1e-12));
        // cos(2πx/ℓ) sampled: ∫ u'² = (2π/ℓ)² · ℓ/2
        let u: Vec<f64> = (0..p).map(|i| (std::f64::consts::TAU * i as f64 / p as f64).cos()).collect();
        let k = std::f64::consts::TAU / circ;
        assert!((s.quad_form(&u) - k * k * circ / 2.0).abs() < 1e-12);
    }

    #[test]
    fn composite_operator_properties() {
        for mesh in [
            build_geometry::<f64>(&GeometrySpec::interval(1.3, 9)).unwrap(),
            build_geometry::<f64>(&GeometrySpec::slab(0.7, 2.0, 4, 8)).unwrap(),
        ] {
            let blocks = assemble_blocks(&mesh);
            let n = mesh.node_count();
            let ones = vec![1.0; n];
            for k in [&blocks.bulk_stiffness, &blocks.boundary_stiffness] {
                assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
            }
            let op = assemble_wentzell(blocks).unwrap();
            let a1 = op.stiffness.mul_vec(&ones);
            let m1 = op.mass.mul_vec(&ones);
            for (a, m) in a1.iter().zip(&m1) {
                assert!((a - m).abs() < 1e-12);
            }
            assert!(op.stiffness.asymmetry() < 1e-12);
            let mass_total: f64 = m1.iter().sum();
            assert!((mass_total - mesh.measure_bulk - mesh.measure_boundary).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_blocks_are_rejected() {
        let (_, op) = interval_op(4);
        let mut blocks = op.blocks.clone();
        blocks.boundary_mass = blocks.boundary_mass.scale(-10.0);
        assert!(matches!(assemble_wentzell(blocks), Err(Error::Assembly(_))));
        let mut blocks = op.blocks.clone();
        blocks.bulk_stiffness = CsrMatrix::linear_combination(&[
            (1.0, &blocks.bulk_stiffness),
            (1.0, &CsrMatrix::from_triplets(5, 5, [(0, 1, 0.5)])),
        ]);
        assert!(matches!(assemble_wentzell(blocks), Err(Error::Assembly(_))));
    }

    #[test]
    fn constant_mode_and_sign_convention() {
        let (_, op) = interval_op(16);
        let eig = solve_eigenproblem(&op, 17).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        let w1 = eig.vector(0);
        let c = 1.0 / 3.0f64.sqrt(); // ‖𝟙‖²_M = |Ω| + |Γ| = 3
        assert!(w1.iter().all(|v| (v - c).abs() < 1e-10));
        for j in 0..eig.len() {
            let col = eig.vector(j);
            let first = col.iter().find(|v| v.abs() > 1e-10).unwrap();
            assert!(*first > 0.0);
        }
        assert!(solve_eigenproblem(&op, 18).is_err());
        assert!(solve_eigenproblem(&op, 0).is_err());
    }

    #[test]
    fn fractional_power_edge_cases() {
        let (_, mut op) = interval_op(6);
        let eig = op.ensure_full_eigen().unwrap().clone();
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        assert!(apply_fractional_power(&eig, &op.mass, 1.2, &x, ExponentConvention::Theta).is_err());
        assert!(apply_fractional_power(&eig, &op.mass, -0.1, &x, ExponentConvention::Theta).is_err());
        let a0 = apply_fractional_power(&eig, &op.mass, 0.0, &x, ExponentConvention::Theta).unwrap();
        let mx = op.mass.mul_vec(&x);
        for (a, b) in a0.iter().zip(&mx) {
            assert!((a - b).abs() < 1e-12);
        }
        // two_theta at θ = ½ is the integer power
        let a_half2 = apply_fractional_power(&eig, &op.mass, 0.5, &x, ExponentConvention::TwoTheta).unwrap();
        let ax = op.stiffness.mul_vec(&x);
        for (a, b) in a_half2.iter().zip(&ax) {
            assert!((a - b).abs() < 1e-9 * norm2(&ax));
        }
    }

    #[test]
    fn params_validation() {
        assert!(FractionalParams::default().validate().is_ok());
        let bad = FractionalParams::new(0.3, 1.0, 1.0, Realization::BlockR2);
        assert!(matches!(bad.validate(), Err(Error::Config { ref field, .. }) if field == "fractional.theta"));
        let bad = FractionalParams::new(0.75, 0.5, 1.0, Realization::SpectralR1);
        assert!(matches!(bad.validate(), Err(Error::Config { ref field, .. }) if field == "fractional.alpha"));
        let bad = FractionalParams::new(0.75, 0.5, 0.0, Realization::BlockR2);
        assert!(bad.validate().is_err());
        let (_, op) = interval_op(4);
        assert!(matches!(
            build_damping_matrix(&op, &FractionalParams::new(0.75, 0.5, 1.0, Realization::SpectralR1)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn bvp_examples() {
        let (mesh, op) = interval_op(10);
        let n = mesh.node_count();
        let u = solve_wentzell_bvp(&mesh, &op.blocks, &vec![0.0; n], &[1.0, 1.0]).unwrap();
        assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let u = solve_wentzell_bvp(&mesh, &op.blocks, &vec![0.0; n], &[0.0, 0.0]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert!(solve_wentzell_bvp(&mesh, &op.blocks, &[0.0; 3], &[0.0, 0.0]).is_err());
        // nonnegative data stay nonnegative
        let p1: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let u = solve_wentzell_bvp(&mesh, &op.blocks, &p1, &[0.0, 2.0]).unwrap();
        assert!(u.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn isomorphism_report_contract() {
        let (_, op) = interval_op(12);
        let one = estimate_isomorphism_constant(&op, 1, 7).unwrap();
        assert!((one.ratio_low - 0.5f64.sqrt()).abs() < 1e-10);
        assert!(one.c_star >= 1.0);
        let ten = estimate_isomorphism_constant(&op, 10, 7).unwrap();
        let hundred = estimate_isomorphism_constant(&op, 100, 7).unwrap();
        assert!(hundred.ratio_low <= ten.ratio_low && hundred.ratio_high >= ten.ratio_high);
        assert_eq!(&hundred.ratios[..10], &ten.ratios[..]);
        for &r in &hundred.ratios {
            assert!(hundred.ratio_low <= r && r <= hundred.ratio_high);
        }
        assert!(estimate_isomorphism_constant(&op, 0, 7).is_err());
    }

    #[test]
    fn discrete_norms_examples() {
        let (_, op) = interval_op(8);
        let ones = vec![1.0; 9];
        let n = discrete_norms(&op, &ones, &ones).unwrap();
        assert!((n.norm_x2_sq - 3.0).abs() < 1e-12);
        assert!((n.norm_v1_sq - 3.0).abs() < 1e-12);
        let z = vec![0.0; 9];
        let n0 = discrete_norms(&op, &z, &z).unwrap();
        assert_eq!((n0.norm_x2_sq, n0.norm_v1_sq, n0.energy_pairing), (0.0, 0.0, 0.0));
        let u: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let a = discrete_norms(&op, &u, &u).unwrap();
        let b = discrete_norms(&op, &u2, &u2).unwrap();
        assert!((b.norm_x2_sq - 4.0 * a.norm_x2_sq).abs() < 1e-12);
        assert!((b.norm_v1_sq - 4.0 * a.norm_v1_sq).abs() < 1e-10);
        assert!(discrete_norms(&op, &u[..3], &u).is_err());
    }

    #[test]
    fn csv_and_coordinate_exports() {
        let (_, op) = interval_op(2);
        let eig = solve_eigenproblem(&op, 3).unwrap();
        let mut buf = Vec::new();
        write_eigen_csv(&mut buf, &eig).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,lambda,node_0,node_1,node_2");
        assert!(lines.next().unwrap().starts_with("1,"));
        let mut buf = Vec::new();
        write_coordinate(&mut buf, &op.blocks.boundary_mass).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "% rows=3 cols=3 nnz=2\n0 0 1\n2 2 1\n");
    }
}
