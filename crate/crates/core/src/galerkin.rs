//! Truncated modal system, implicit midpoint integration and the energy,
//! bound and weak-residual monitors built on it.
//!
//! The Galerkin space is spanned by the first `n` eigenmodes of `(A, M)`. In
//! those coordinates the semi-discrete problem reads
//! `ä + D̃ȧ + Λa + Ñ(a) = 0` with `D̃ = WᵀDW` (generally not diagonal).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::linalg::{dot, lu_solve, norm_inf, CsrMatrix, Mat};
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::{Damping, WentzellOperator};
use crate::scalar::Real;

/// Quadratic forms whose sum is `D̃`, kept apart for dissipation reporting.
#[derive(Debug, Clone)]
pub struct DissipationSplit<T> {
    pub fractional: Mat<T>,
    pub boundary: Mat<T>,
    pub mass: Mat<T>,
}

#[derive(Debug, Clone)]
pub struct ModalSystem<T> {
    pub n: usize,
    pub lambda: Vec<T>,
    pub damping: Mat<T>,
    pub modes: Mat<T>,
    pub split: DissipationSplit<T>,
    pub spec: NonlinearitySpec,
    /// Mode values at the bulk quadrature points (`points × n`).
    pub bulk_table: Mat<T>,
    pub bulk_weights: Vec<T>,
    pub boundary_table: Mat<T>,
    pub boundary_weights: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub a: Vec<T>,
    pub a_dot: Vec<T>,
    pub t: T,
}

impl<T: Real> State<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            a: vec![T::zero(); n],
            a_dot: vec![T::zero(); n],
            t: T::zero(),
        }
    }

    pub fn amplitude(&self) -> T {
        norm_inf(&self.a).max(norm_inf(&self.a_dot))
    }

    fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.a_dot).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport<T> {
    pub t: T,
    pub energy: T,
    pub kinetic: T,
    pub elastic: T,
    pub potential_bulk: T,
    pub potential_boundary: T,
    /// `2ȧᵀD̃ȧ` split into its fractional, boundary and mass parts.
    pub rate_fractional: T,
    pub rate_boundary: T,
    pub rate_mass: T,
    pub dissipation_accumulated: T,
    pub identity_residual: T,
    pub initial_energy: T,
}

impl<T: Real> EnergyReport<T> {
    pub fn dissipation_rate(&self) -> T {
        self.rate_fractional + self.rate_boundary + self.rate_mass
    }

    pub fn kinetic_elastic(&self) -> T {
        self.kinetic + self.elastic
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub max_newton_iterations: usize,
    pub step_rejections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions<T> {
    pub sample_stride: usize,
    /// Offset `C_δ` in the bound `kinetic + elastic ≤ E(0) + 2C_δ t`.
    pub bound_offset: T,
    pub monotone_tolerance: T,
    pub bound_tolerance: T,
}

impl<T: Real> Default for IntegrateOptions<T> {
    fn default() -> Self {
        Self {
            sample_stride: 1,
            bound_offset: T::zero(),
            monotone_tolerance: T::lit(1e-10),
            bound_tolerance: T::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord<T> {
    pub times: Vec<T>,
    pub states: Vec<State<T>>,
    pub reports: Vec<EnergyReport<T>>,
    pub stats: SolverStats,
    /// Over every step, not just the samples.
    pub max_identity_residual: T,
    pub energy_monotone: bool,
    pub energy_bounded: bool,
    pub a_priori_bound_holds: bool,
    /// `max_t [kinetic + elastic − E(0) − 2C_δ t]` over the samples.
    pub max_bound_excess: T,
}

const BLOW_UP: f64 = 1e8;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: u32 = 3;

fn newton_tolerance<T: Real>() -> T {
    T::lit(1e-11).max(T::epsilon() * T::lit(100.0))
}

fn modal_form<T: Real>(modes: &Mat<T>, d: &Mat<T>) -> Mat<T> {
    let mut out = modes.tr_matmul(&d.matmul(modes));
    out.symmetrize();
    out
}

fn csr_times_dense<T: Real>(s: &CsrMatrix<T>, d: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(s.rows(), d.cols());
    for i in 0..s.rows() {
        for (k, v) in s.row(i) {
            let src = d.row(k).to_vec();
            for (o, x) in out.row_mut(i).iter_mut().zip(src) {
                *o += v * x;
            }
        }
    }
    out
}

pub fn build_modal_system<T: Real>(
    mesh: &Mesh<T>,
    op: &WentzellOperator<T>,
    damping: &Damping<T>,
    spec: &NonlinearitySpec,
    n: usize,
) -> Result<ModalSystem<T>> {
    let eig = op
        .eig
        .as_ref()
        .ok_or_else(|| Error::Parameter("operator has no eigendecomposition".into()))?;
    if n == 0 || n > eig.len() {
        return Err(Error::Parameter(format!(
            "Galerkin dimension {n} exceeds the {} available eigenpairs",
            eig.len()
        )));
    }
    let nodes = op.node_count();
    if damping.matrix.rows() != nodes {
        return Err(Error::dim(nodes, damping.matrix.rows()));
    }
    let modes = eig.vectors.leading_columns(n);
    let boundary_modes = Mat::from_fn(mesh.boundary_count(), n, |b, j| modes[(mesh.boundary_nodes[b], j)]);
    Ok(ModalSystem {
        n,
        lambda: eig.values[..n].to_vec(),
        damping: modal_form(&modes, &damping.matrix),
        split: DissipationSplit {
            fractional: modal_form(&modes, &damping.fractional),
            boundary: modal_form(&modes, &damping.boundary),
            mass: modal_form(&modes, &damping.mass),
        },
        spec: spec.clone(),
        bulk_table: csr_times_dense(&mesh.bulk_quadrature.interp, &modes),
        bulk_weights: mesh.bulk_quadrature.weights.clone(),
        boundary_table: csr_times_dense(&mesh.boundary_quadrature.interp, &boundary_modes),
        boundary_weights: mesh.boundary_quadrature.weights.clone(),
        modes,
    })
}

/// `M`-orthogonal projection of nodal data onto the first `n` modes.
pub fn project_initial_data<T: Real>(op: &WentzellOperator<T>, u0: &[T], v0: &[T], n: usize) -> Result<State<T>> {
    let eig = op
        .eig
        .as_ref()
        .ok_or_else(|| Error::Parameter("operator has no eigendecomposition".into()))?;
    if n == 0 || n > eig.len() {
        return Err(Error::Parameter(format!("cannot project onto {n} of {} modes", eig.len())));
    }
    let nodes = op.node_count();
    for x in [u0, v0] {
        if x.len() != nodes {
            return Err(Error::dim(nodes, x.len()));
        }
    }
    let w = eig.vectors.leading_columns(n);
    Ok(State {
        a: w.tr_mul_vec(&op.mass.mul_vec(u0)),
        a_dot: w.tr_mul_vec(&op.mass.mul_vec(v0)),
        t: T::zero(),
    })
}

impl<T: Real> ModalSystem<T> {
    /// Nodal field `Wa`.
    pub fn reconstruct(&self, a: &[T]) -> Vec<T> {
        self.modes.mul_vec(a)
    }

    fn check_len(&self, a: &[T]) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::dim(self.n, a.len()));
        }
        Ok(())
    }

    /// `(∫F̃(u), ∫G̃(γ))` for `u = Wa`.
    pub fn potential(&self, a: &[T]) -> (T, T) {
        let bulk = self
            .bulk_table
            .mul_vec(a)
            .iter()
            .zip(&self.bulk_weights)
            .map(|(&u, &w)| w * self.spec.f.antiderivative(u))
            .sum();
        let boundary = self
            .boundary_table
            .mul_vec(a)
            .iter()
            .zip(&self.boundary_weights)
            .map(|(&u, &w)| w * self.spec.g.antiderivative(u))
            .sum();
        (bulk, boundary)
    }

    pub fn nonlinear_force(&self, a: &[T]) -> Result<Vec<T>> {
        self.check_len(a)?;
        if self.spec.is_linear() {
            return Ok(vec![T::zero(); self.n]);
        }
        let mut out = vec![T::zero(); self.n];
        for (table, weights, poly) in [
            (&self.bulk_table, &self.bulk_weights, &self.spec.f),
            (&self.boundary_table, &self.boundary_weights, &self.spec.g),
        ] {
            if poly.is_zero() {
                continue;
            }
            let u = table.mul_vec(a);
            for (q, (&uq, &wq)) in u.iter().zip(weights).enumerate() {
                let val = wq * poly.value(uq);
                if !val.is_finite() {
                    return Err(Error::NonFinite { amplitude: uq.as_f64() });
                }
                for (o, &phi) in out.iter_mut().zip(table.row(q)) {
                    *o += val * phi;
                }
            }
        }
        Ok(out)
    }

    /// Jacobian of [`Self::nonlinear_force`].
    pub fn nonlinear_jacobian(&self, a: &[T]) -> Result<Mat<T>> {
        self.check_len(a)?;
        let mut jac = Mat::zeros(self.n, self.n);
        for (table, weights, poly) in [
            (&self.bulk_table, &self.bulk_weights, &self.spec.f),
            (&self.boundary_table, &self.boundary_weights, &self.spec.g),
        ] {
            if poly.is_zero() {
                continue;
            }
            let u = table.mul_vec(a);
            for (q, (&uq, &wq)) in u.iter().zip(weights).enumerate() {
                let d = wq * poly.derivative(uq);
                if !d.is_finite() {
                    return Err(Error::NonFinite { amplitude: uq.as_f64() });
                }
                let row = table.row(q);
                for i in 0..self.n {
                    let di = d * row[i];
                    for (j, &rj) in row.iter().enumerate() {
                        jac[(i, j)] += di * rj;
                    }
                }
            }
        }
        Ok(jac)
    }

    fn midpoint_residual(&self, state: &State<T>, v: &[T], half: T) -> Result<Vec<T>> {
        let am: Vec<T> = state.a.iter().zip(v).map(|(&a, &v)| a + half * v).collect();
        let force = self.nonlinear_force(&am)?;
        let dv = self.damping.mul_vec(v);
        Ok((0..self.n)
            .map(|i| v[i] - state.a_dot[i] + half * (dv[i] + self.lambda[i] * am[i] + force[i]))
            .collect())
    }
}

/// One implicit midpoint step; returns the new state and the Newton iteration count.
///
/// A negative `dt` runs the scheme backwards, which inverts a forward step.
pub fn step_with_stats<T: Real>(system: &ModalSystem<T>, state: &State<T>, dt: T) -> Result<(State<T>, usize)> {
    system.check_len(&state.a)?;
    system.check_len(&state.a_dot)?;
    if dt == T::zero() || !dt.is_finite() {
        return Err(Error::Parameter(format!("time step {dt} must be nonzero and finite")));
    }
    let n = system.n;
    let half = dt * T::lit(0.5);
    let tol = newton_tolerance::<T>();
    let mut v = state.a_dot.clone();
    let base = {
        let mut m = system.damping.scale(half);
        for i in 0..n {
            m[(i, i)] += T::one() + half * half * system.lambda[i];
        }
        m
    };
    let fail = |residual: T| Error::Step {
        t: state.t.as_f64(),
        dt: dt.as_f64(),
        residual: residual.as_f64(),
    };
    let mut residual = system.midpoint_residual(state, &v, half).map_err(|_| fail(T::infinity()))?;
    let mut iterations = 0;
    loop {
        let rnorm = norm_inf(&residual);
        if !rnorm.is_finite() {
            return Err(fail(rnorm));
        }
        if rnorm <= tol * (T::one() + norm_inf(&v)) {
            break;
        }
        if iterations == MAX_NEWTON {
            return Err(fail(rnorm));
        }
        let jac = if system.spec.is_linear() {
            base.clone()
        } else {
            let am: Vec<T> = state.a.iter().zip(&v).map(|(&a, &v)| a + half * v).collect();
            let jn = system.nonlinear_jacobian(&am).map_err(|_| fail(rnorm))?;
            base.add_scaled(half * half, &jn)
        };
        let delta = lu_solve(&jac, &residual).map_err(|_| fail(rnorm))?;
        for (vi, di) in v.iter_mut().zip(&delta) {
            *vi -= *di;
        }
        iterations += 1;
        residual = system.midpoint_residual(state, &v, half).map_err(|_| fail(rnorm))?;
    }
    let next = State {
        a: state.a.iter().zip(&v).map(|(&a, &v)| a + dt * v).collect(),
        a_dot: state.a_dot.iter().zip(&v).map(|(&a, &v)| T::lit(2.0) * v - a).collect(),
        t: state.t + dt,
    };
    Ok((next, iterations))
}

pub fn step<T: Real>(system: &ModalSystem<T>, state: &State<T>, dt: T) -> Result<State<T>> {
    step_with_stats(system, state, dt).map(|(s, _)| s)
}

pub fn compute_energy<T: Real>(
    system: &ModalSystem<T>,
    state: &State<T>,
    previous: Option<&EnergyReport<T>>,
) -> EnergyReport<T> {
    let two = T::lit(2.0);
    let v = &state.a_dot;
    let kinetic = dot(v, v);
    let elastic = state
        .a
        .iter()
        .zip(&system.lambda)
        .map(|(&a, &l)| l * a * a)
        .sum::<T>();
    let (pb, pg) = system.potential(&state.a);
    let (potential_bulk, potential_boundary) = (two * pb, two * pg);
    let energy = kinetic + elastic + potential_bulk + potential_boundary;
    let rate_fractional = two * system.split.fractional.quad_form(v);
    let rate_boundary = two * system.split.boundary.quad_form(v);
    let rate_mass = two * system.split.mass.quad_form(v);
    let rate = rate_fractional + rate_boundary + rate_mass;
    let (dissipation_accumulated, initial_energy) = match previous {
        Some(p) => {
            let dt = state.t - p.t;
            (p.dissipation_accumulated + dt * T::lit(0.5) * (p.dissipation_rate() + rate), p.initial_energy)
        }
        None => (T::zero(), energy),
    };
    EnergyReport {
        t: state.t,
        energy,
        kinetic,
        elastic,
        potential_bulk,
        potential_boundary,
        rate_fractional,
        rate_boundary,
        rate_mass,
        dissipation_accumulated,
        identity_residual: (energy + dissipation_accumulated - initial_energy).abs(),
        initial_energy,
    }
}

/// Advances one macro step, retrying with up to three halvings of `dt` when
/// Newton fails. Every accepted sub-step contributes to the dissipation sum.
fn advance<T: Real>(
    system: &ModalSystem<T>,
    state: &State<T>,
    report: &EnergyReport<T>,
    dt: T,
    stats: &mut SolverStats,
) -> Result<(State<T>, EnergyReport<T>)> {
    let mut last_err = None;
    for halvings in 0..=MAX_HALVINGS {
        let pieces = 1usize << halvings;
        let sub = dt / T::lit(pieces as f64);
        let mut s = state.clone();
        let mut r = *report;
        let mut iters = Vec::with_capacity(pieces);
        let mut ok = true;
        for _ in 0..pieces {
            match step_with_stats(system, &s, sub) {
                Ok((next, it)) => {
                    r = compute_energy(system, &next, Some(&r));
                    s = next;
                    iters.push(it);
                }
                Err(e) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            stats.steps += pieces;
            stats.newton_iterations += iters.iter().sum::<usize>();
            stats.max_newton_iterations = stats.max_newton_iterations.max(iters.into_iter().max().unwrap_or(0));
            return Ok((s, r));
        }
        stats.step_rejections += 1;
    }
    Err(last_err.expect("at least one attempt"))
}

impl<T: Real> TrajectoryRecord<T> {
    fn push_sample(&mut self, state: &State<T>, report: EnergyReport<T>, t0: T, options: &IntegrateOptions<T>) {
        if let Some(prev) = self.reports.last() {
            if report.energy > prev.energy + options.monotone_tolerance {
                self.energy_monotone = false;
            }
        }
        if report.energy > report.initial_energy + options.monotone_tolerance {
            self.energy_bounded = false;
        }
        let excess =
            report.kinetic_elastic() - report.initial_energy - T::lit(2.0) * options.bound_offset * (report.t - t0);
        self.max_bound_excess = self.max_bound_excess.max(excess);
        if excess > options.bound_tolerance {
            self.a_priori_bound_holds = false;
        }
        self.times.push(state.t);
        self.states.push(state.clone());
        self.reports.push(report);
    }
}

pub fn integrate<T: Real>(
    system: &ModalSystem<T>,
    state0: &State<T>,
    t_end: T,
    dt: T,
    options: &IntegrateOptions<T>,
) -> Result<TrajectoryRecord<T>> {
    if !(t_end > T::zero()) || !(dt > T::zero()) {
        return Err(Error::Parameter(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    if options.sample_stride == 0 {
        return Err(Error::Parameter("sample stride must be at least 1".into()));
    }
    system.check_len(&state0.a)?;
    system.check_len(&state0.a_dot)?;
    if !state0.is_finite() {
        return Err(Error::NonFinite {
            amplitude: state0.amplitude().as_f64(),
        });
    }
    let steps = (t_end / dt).round().to_usize().unwrap_or(0).max(1);
    let t0 = state0.t;

    let mut stats = SolverStats::default();
    let mut state = state0.clone();
    let mut report = compute_energy(system, &state, None);
    let mut record = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        reports: Vec::new(),
        stats,
        max_identity_residual: report.identity_residual,
        energy_monotone: true,
        energy_bounded: true,
        a_priori_bound_holds: true,
        max_bound_excess: T::neg_infinity(),
    };
    record.push_sample(&state, report, t0, options);

    for k in 1..=steps {
        let target = t0 + dt * T::lit(k as f64);
        let h = target - state.t;
        let (next, next_report) = advance(system, &state, &report, h, &mut stats).map_err(|e| Error::Integration {
            t: state.t.as_f64(),
            source: Box::new(e),
        })?;
        let amp = next.amplitude();
        if !(amp <= T::lit(BLOW_UP)) {
            return Err(Error::Integration {
                t: next.t.as_f64(),
                source: Box::new(Error::BlowUp {
                    t: next.t.as_f64(),
                    amplitude: amp.as_f64(),
                }),
            });
        }
        state = next;
        report = next_report;
        record.max_identity_residual = record.max_identity_residual.max(report.identity_residual);
        if k % options.sample_stride == 0 || k == steps {
            record.push_sample(&state, report, t0, options);
        }
    }
    record.stats = stats;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual<T> {
    /// Interior sample times at which the stencil is centred.
    pub times: Vec<T>,
    /// `series[k][j]`: residual of test mode `j` at `times[k]`.
    pub series: Vec<Vec<T>>,
    pub max_per_mode: Vec<T>,
    pub max: T,
}

/// Weak-form defect against the first `m` modes.
///
/// At every interior sample the centred difference of `(a, ȧ)` over the two
/// adjacent sample intervals is compared with the right-hand side of the
/// first-order system evaluated at the centre sample.
pub fn verify_weak_residual<T: Real>(
    trajectory: &TrajectoryRecord<T>,
    system: &ModalSystem<T>,
    m: usize,
) -> Result<WeakResidual<T>> {
    if m > system.n {
        return Err(Error::Parameter(format!(
            "test modes {m} exceed the Galerkin dimension {}",
            system.n
        )));
    }
    let states = &trajectory.states;
    let mut times = Vec::new();
    let mut series = Vec::new();
    let mut max_per_mode = vec![T::zero(); m];
    for k in 1..states.len().saturating_sub(1) {
        let (prev, cur, next) = (&states[k - 1], &states[k], &states[k + 1]);
        let span = next.t - prev.t;
        let force = system.nonlinear_force(&cur.a)?;
        let dv = system.damping.mul_vec(&cur.a_dot);
        let row: Vec<T> = (0..m)
            .map(|j| {
                let ra = (next.a[j] - prev.a[j]) / span - cur.a_dot[j];
                let rhs = -(dv[j] + system.lambda[j] * cur.a[j] + force[j]);
                let rv = (next.a_dot[j] - prev.a_dot[j]) / span - rhs;
                ra.abs().max(rv.abs())
            })
            .collect();
        for (mx, &r) in max_per_mode.iter_mut().zip(&row) {
            *mx = mx.max(r);
        }
        times.push(cur.t);
        series.push(row);
    }
    let max = max_per_mode.iter().copied().fold(T::zero(), T::max);
    Ok(WeakResidual {
        times,
        series,
        max_per_mode,
        max,
    })
}

/// `sup_t ‖𝒳⁽ᵖ⁾(t) − 𝒳⁽q⁾(t)‖` in the discrete `ℋ₀` norm, padding the shorter
/// coefficient vector with zeros.
pub fn trajectory_distance<T: Real>(lambda: &[T], x: &TrajectoryRecord<T>, y: &TrajectoryRecord<T>) -> Result<T> {
    if x.states.len() != y.states.len() {
        return Err(Error::dim(x.states.len(), y.states.len()));
    }
    let mut sup = T::zero();
    for (s, r) in x.states.iter().zip(&y.states) {
        let n = s.a.len().max(r.a.len());
        if n > lambda.len() {
            return Err(Error::dim(n, lambda.len()));
        }
        let at = |v: &[T], i: usize| v.get(i).copied().unwrap_or(T::zero());
        let mut sq = T::zero();
        for i in 0..n {
            let da = at(&s.a, i) - at(&r.a, i);
            let dv = at(&s.a_dot, i) - at(&r.a_dot, i);
            sq += lambda[i] * da * da + dv * dv;
        }
        sup = sup.max(sq.sqrt());
    }
    Ok(sup)
}

#[derive(Debug, Clone)]
pub struct ConvergenceSetup<'a, T> {
    pub mesh: &'a Mesh<T>,
    pub op: &'a WentzellOperator<T>,
    pub damping: &'a Damping<T>,
    pub spec: &'a NonlinearitySpec,
    pub u0: &'a [T],
    pub v0: &'a [T],
    pub t_end: T,
    pub dt: T,
    pub sample_stride: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable<T> {
    pub dimensions: Vec<usize>,
    /// Distance of each run to the last (largest) one.
    pub distances: Vec<T>,
    pub times: Vec<T>,
    pub energy_curves: Vec<Vec<T>>,
}

/// Runs one trajectory per Galerkin dimension in parallel and compares each
/// with the largest. Results are assembled in input order.
pub fn convergence_study<T: Real>(setup: &ConvergenceSetup<'_, T>, dimensions: &[usize]) -> Result<ConvergenceTable<T>> {
    if dimensions.is_empty() {
        return Err(Error::Precondition("empty list of Galerkin dimensions".into()));
    }
    if dimensions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition(format!(
            "Galerkin dimensions must be nondecreasing, got {dimensions:?}"
        )));
    }
    let options = IntegrateOptions {
        sample_stride: setup.sample_stride,
        ..IntegrateOptions::default()
    };
    let runs: Vec<Result<TrajectoryRecord<T>>> = dimensions
        .par_iter()
        .map(|&n| {
            let system = build_modal_system(setup.mesh, setup.op, setup.damping, setup.spec, n)?;
            let state = project_initial_data(setup.op, setup.u0, setup.v0, n)?;
            integrate(&system, &state, setup.t_end, setup.dt, &options)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let lambda = &setup.op.eig.as_ref().expect("checked by build_modal_system").values;
    let reference = runs.last().expect("nonempty");
    let distances = runs
        .iter()
        .map(|r| trajectory_distance(lambda, r, reference))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        dimensions: dimensions.to_vec(),
        distances,
        times: reference.times.clone(),
        energy_curves: runs.iter().map(|r| r.reports.iter().map(|e| e.energy).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometrySpec};
    use crate::nonlinearity::Polynomial;
    use crate::operator::{assemble_blocks, assemble_wentzell, build_damping_matrix, FractionalParams, Realization};

    fn setup(n_el: usize, params: FractionalParams) -> (Mesh<f64>, WentzellOperator<f64>, Damping<f64>) {
        let mesh = build_geometry(&GeometrySpec::interval(1.0, n_el)).unwrap();
        let mut op = assemble_wentzell(assemble_blocks(&mesh)).unwrap();
        op.ensure_full_eigen().unwrap();
        let d = build_damping_matrix(&op, &params).unwrap();
        (mesh, op, d)
    }

    #[test]
    fn scalar_system_and_damping_floor() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let sys = build_modal_system(&mesh, &op, &d, &NonlinearitySpec::default(), 1).unwrap();
        assert!((sys.lambda[0] - 1.0).abs() < 1e-12);
        assert!(sys.damping[(0, 0)] >= 1.0 - 1e-12);
        assert_eq!(sys.nonlinear_force(&[3.0]).unwrap(), vec![0.0]);
        assert!(build_modal_system(&mesh, &op, &d, &NonlinearitySpec::default(), 10).is_err());
    }

    #[test]
    fn full_strength_damping_is_modal_stiffness() {
        let (mesh, op, d) = setup(8, FractionalParams::new(1.0, 1.0, 1.0, Realization::BlockR2));
        let sys = build_modal_system(&mesh, &op, &d, &NonlinearitySpec::default(), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { sys.lambda[i] } else { 0.0 };
                assert!((sys.damping[(i, j)] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let (_, op, _) = setup(8, FractionalParams::default());
        let w3 = op.eig.as_ref().unwrap().vector(2);
        let s = project_initial_data(&op, &w3, &[0.0; 9], 5).unwrap();
        for (i, v) in s.a.iter().enumerate() {
            assert!((v - if i == 2 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        assert!(project_initial_data(&op, &w3[..3], &w3, 5).is_err());
    }

    #[test]
    fn cubic_force_on_constant_mode() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let spec = NonlinearitySpec::new(Polynomial::power(1.0, 4.0), Polynomial::zero());
        let sys = build_modal_system(&mesh, &op, &d, &spec, 1).unwrap();
        let c = 1.0 / 3f64.sqrt();
        let a = 1.7;
        let f = sys.nonlinear_force(&[a]).unwrap()[0];
        assert!((f - c.powi(4) * a.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let sys = build_modal_system(&mesh, &op, &d, &NonlinearitySpec::default(), 3).unwrap();
        let z = compute_energy(&sys, &State::zero(3), None);
        assert_eq!(z.energy, 0.0);
        let mut s = State::zero(3);
        s.a_dot[0] = 1.0;
        let r = compute_energy(&sys, &s, None);
        assert!((r.kinetic - 1.0).abs() < 1e-15 && r.elastic == 0.0);
        let mut s = State::zero(3);
        s.a[0] = 1.0;
        assert!((compute_energy(&sys, &s, None).energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let spec = NonlinearitySpec::new(Polynomial::power(1.0, 4.0), Polynomial::power(-0.5, 2.0));
        let sys = build_modal_system(&mesh, &op, &d, &spec, 4).unwrap();
        let s = step(&sys, &State::zero(4), 1e-2).unwrap();
        assert!(s.a.iter().chain(&s.a_dot).all(|&v| v == 0.0));
        assert!(step(&sys, &State::zero(4), 0.0).is_err());
        let rec = integrate(&sys, &State::zero(4), 0.5, 1e-2, &IntegrateOptions::default()).unwrap();
        assert_eq!(rec.max_identity_residual, 0.0);
        assert!(rec.states.iter().all(|s| s.amplitude() == 0.0));
    }

    #[test]
    fn weak_residual_rejects_too_many_test_modes() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let sys = build_modal_system(&mesh, &op, &d, &NonlinearitySpec::default(), 3).unwrap();
        let rec = integrate(&sys, &State::zero(3), 0.1, 1e-2, &IntegrateOptions::default()).unwrap();
        assert!(verify_weak_residual(&rec, &sys, 4).is_err());
        assert_eq!(verify_weak_residual(&rec, &sys, 3).unwrap().max, 0.0);
    }

    #[test]
    fn blow_up_is_reported() {
        let (mesh, op, d) = setup(8, FractionalParams::default());
        let spec = NonlinearitySpec::new(Polynomial::zero(), Polynomial::power(-50.0, 2.0));
        let sys = build_modal_system(&mesh, &op, &d, &spec, 2).unwrap();
        let mut s = State::zero(2);
        s.a[0] = 1.0;
        let err = integrate(&sys, &s, 50.0, 1e-2, &IntegrateOptions::default()).unwrap_err();
        match err {
            Error::Integration { source, .. } => assert!(matches!(*source, Error::BlowUp { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }
}
