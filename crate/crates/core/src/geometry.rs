//! Desk-scale geometries with coupled bulk/boundary quadrature.
//!
//! Two layouts are supported: a 1-D interval whose boundary is its two end
//! points (counting measure), and a 2-D slab `(0, L) × circle(ℓ)` whose
//! boundary is two circles. Slab nodes are numbered ring by ring along the
//! thickness direction, so node `(ring j, position i)` has index `j·P + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Interval,
    PeriodicSlab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    /// Interval extent or slab thickness.
    pub length: f64,
    /// Periodic circumference (slab only).
    #[serde(default = "default_circumference")]
    pub circumference: f64,
    pub bulk_elements: usize,
    /// Points per ring (slab only); a power of two, at least 4.
    #[serde(default = "default_periodic_points")]
    pub periodic_points: usize,
}

fn default_circumference() -> f64 {
    std::f64::consts::TAU
}

fn default_periodic_points() -> usize {
    8
}

impl GeometrySpec {
    pub fn interval(length: f64, bulk_elements: usize) -> Self {
        Self {
            kind: GeometryKind::Interval,
            length,
            circumference: default_circumference(),
            bulk_elements,
            periodic_points: default_periodic_points(),
        }
    }

    pub fn slab(length: f64, circumference: f64, bulk_elements: usize, periodic_points: usize) -> Self {
        Self {
            kind: GeometryKind::PeriodicSlab,
            length,
            circumference,
            bulk_elements,
            periodic_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config("geometry.length", "must be a positive finite number"));
        }
        if self.bulk_elements < 2 {
            return Err(Error::config("geometry.bulk_elements", "must be at least 2"));
        }
        if self.kind == GeometryKind::PeriodicSlab {
            if !(self.circumference > 0.0 && self.circumference.is_finite()) {
                return Err(Error::config(
                    "geometry.circumference",
                    "must be a positive finite number",
                ));
            }
            if self.periodic_points < 4 || !self.periodic_points.is_power_of_two() {
                return Err(Error::config(
                    "geometry.periodic_points",
                    "must be a power of two and at least 4",
                ));
            }
        }
        Ok(())
    }
}

/// Which measure an integral is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Bulk,
    Boundary,
}

/// Quadrature points as rows of an interpolation matrix.
///
/// Row `q` of `interp` holds the basis-function values at point `q`, so the
/// field values at all points are `interp · nodal`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub weights: Vec<T>,
    pub interp: CsrMatrix<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn values_at_points(&self, field: &[T]) -> Vec<T> {
        self.interp.mul_vec(field)
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

/// Layout data the assembler needs beyond the generic mesh description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout<T> {
    Interval { h: T },
    Slab { h: T, rings: usize, points: usize, circumference: T },
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub kind: GeometryKind,
    pub layout: Layout<T>,
    /// `(x, y)`; `y = 0` on the interval.
    pub coords: Vec<[T; 2]>,
    pub elements: Vec<[usize; 2]>,
    /// Bulk node index of each boundary node (the trace map).
    pub boundary_nodes: Vec<usize>,
    pub bulk_quadrature: QuadratureRule<T>,
    /// Interpolates boundary-local fields.
    pub boundary_quadrature: QuadratureRule<T>,
    pub measure_bulk: T,
    pub measure_boundary: T,
}

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

pub fn build_geometry<T: Real>(spec: &GeometrySpec) -> Result<Mesh<T>> {
    spec.validate()?;
    match spec.kind {
        GeometryKind::Interval => Ok(build_interval(spec)),
        GeometryKind::PeriodicSlab => Ok(build_slab(spec)),
    }
}

fn gauss_shape<T: Real>() -> [(T, T); 2] {
    GAUSS_2.map(|xi| {
        let phi_left = T::lit(0.5 * (1.0 - xi));
        (phi_left, T::one() - phi_left)
    })
}

fn build_interval<T: Real>(spec: &GeometrySpec) -> Mesh<T> {
    let ne = spec.bulk_elements;
    let length = T::lit(spec.length);
    let h = length / T::lit(ne as f64);
    let coords = (0..=ne)
        .map(|j| [T::lit(j as f64) * h, T::zero()])
        .collect();
    let elements: Vec<[usize; 2]> = (0..ne).map(|e| [e, e + 1]).collect();

    let half_h = h * T::lit(0.5);
    let mut weights = Vec::with_capacity(2 * ne);
    let mut trip = Vec::with_capacity(4 * ne);
    for (e, &[a, b]) in elements.iter().enumerate() {
        for (g, (pa, pb)) in gauss_shape::<T>().into_iter().enumerate() {
            let q = 2 * e + g;
            weights.push(half_h);
            trip.push((q, a, pa));
            trip.push((q, b, pb));
        }
    }
    let bulk_quadrature = QuadratureRule {
        interp: CsrMatrix::from_triplets(weights.len(), ne + 1, trip),
        weights,
    };
    let boundary_quadrature = QuadratureRule {
        weights: vec![T::one(); 2],
        interp: CsrMatrix::from_triplets(2, 2, [(0, 0, T::one()), (1, 1, T::one())]),
    };
    Mesh {
        kind: GeometryKind::Interval,
        layout: Layout::Interval { h },
        coords,
        elements,
        boundary_nodes: vec![0, ne],
        bulk_quadrature,
        boundary_quadrature,
        measure_bulk: length,
        measure_boundary: T::lit(2.0),
    }
}

fn build_slab<T: Real>(spec: &GeometrySpec) -> Mesh<T> {
    let ne = spec.bulk_elements;
    let p = spec.periodic_points;
    let rings = ne + 1;
    let length = T::lit(spec.length);
    let circ = T::lit(spec.circumference);
    let h = length / T::lit(ne as f64);
    let dx = circ / T::lit(p as f64);
    let node = |ring: usize, i: usize| ring * p + i;

    let mut coords = Vec::with_capacity(rings * p);
    for ring in 0..rings {
        for i in 0..p {
            coords.push([T::lit(i as f64) * dx, T::lit(ring as f64) * h]);
        }
    }
    let mut elements = Vec::with_capacity(ne * p);
    for ring in 0..ne {
        for i in 0..p {
            elements.push([node(ring, i), node(ring + 1, i)]);
        }
    }

    let w = dx * h * T::lit(0.5);
    let mut weights = Vec::with_capacity(2 * elements.len());
    let mut trip = Vec::with_capacity(4 * elements.len());
    for (e, &[a, b]) in elements.iter().enumerate() {
        for (g, (pa, pb)) in gauss_shape::<T>().into_iter().enumerate() {
            let q = 2 * e + g;
            weights.push(w);
            trip.push((q, a, pa));
            trip.push((q, b, pb));
        }
    }
    let bulk_quadrature = QuadratureRule {
        interp: CsrMatrix::from_triplets(weights.len(), rings * p, trip),
        weights,
    };
    let nb = 2 * p;
    let boundary_nodes: Vec<usize> = (0..p).map(|i| node(0, i)).chain((0..p).map(|i| node(ne, i))).collect();
    let boundary_quadrature = QuadratureRule {
        weights: vec![dx; nb],
        interp: CsrMatrix::from_triplets(nb, nb, (0..nb).map(|k| (k, k, T::one()))),
    };
    Mesh {
        kind: GeometryKind::PeriodicSlab,
        layout: Layout::Slab {
            h,
            rings,
            points: p,
            circumference: circ,
        },
        coords,
        elements,
        boundary_nodes,
        bulk_quadrature,
        boundary_quadrature,
        measure_bulk: length * circ,
        measure_boundary: T::lit(2.0) * circ,
    }
}

impl<T: Real> Mesh<T> {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// Restriction of a bulk nodal field to the boundary.
    pub fn trace(&self, field: &[T]) -> Result<Vec<T>> {
        check_len(field, self.node_count())?;
        Ok(self.boundary_nodes.iter().map(|&n| field[n]).collect())
    }

    /// Embeds a boundary field into the bulk index set, zero elsewhere.
    pub fn lift(&self, boundary_field: &[T]) -> Result<Vec<T>> {
        check_len(boundary_field, self.boundary_count())?;
        let mut out = vec![T::zero(); self.node_count()];
        for (&n, &v) in self.boundary_nodes.iter().zip(boundary_field) {
            out[n] = v;
        }
        Ok(out)
    }

    /// Boundary quadrature weights scattered onto bulk nodes: `bᵢ = ∫_Γ φᵢ dσ`.
    pub fn boundary_weight_vector(&self) -> Vec<T> {
        let per_node = self
            .boundary_quadrature
            .interp
            .tr_mul_vec(&self.boundary_quadrature.weights);
        self.lift(&per_node).expect("boundary rule matches boundary nodes")
    }

    /// Samples a closed-form field `f(x, y)` at the nodes.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.coords.iter().map(|&[x, y]| f(x, y)).collect()
    }
}

fn check_len<T>(field: &[T], expected: usize) -> Result<()> {
    if field.len() != expected {
        return Err(Error::dim(expected, field.len()));
    }
    Ok(())
}

/// `(|Ω|, |Γ|)` by summing quadrature weights.
pub fn compute_measures<T: Real>(mesh: &Mesh<T>) -> (T, T) {
    (
        mesh.bulk_quadrature.total_weight(),
        mesh.boundary_quadrature.total_weight(),
    )
}

/// Quadrature of the nodal interpolant over the bulk or the boundary.
///
/// Bulk fields have one value per node, boundary fields one per boundary node.
pub fn quadrature_integrate<T: Real>(mesh: &Mesh<T>, field: &[T], region: Region) -> Result<T> {
    let rule = match region {
        Region::Bulk => {
            check_len(field, mesh.node_count())?;
            &mesh.bulk_quadrature
        }
        Region::Boundary => {
            check_len(field, mesh.boundary_count())?;
            &mesh.boundary_quadrature
        }
    };
    let values = rule.values_at_points(field);
    Ok(rule
        .weights
        .iter()
        .zip(&values)
        .fold(T::zero(), |s, (&w, &v)| s + w * v))
}
