//! Unit-domain grids, the Neumann cosine eigenbasis, and the spectral heat
//! semigroup.
//!
//! The domain is `[0,1]` or `[0,1]^2` (measure one). Fields live on a
//! vertex-centred uniform grid with spacing `1/(N-1)`; every spatial
//! integral in the crate uses the trapezoidal rule on that grid.
//!
//! Along one axis the basis is the discrete cosine family
//!
//! ```text
//! e_0(x) = 1,   e_k(x) = sqrt(2) cos(k pi x)   (0 < k < N-1),
//! e_{N-1}(x) = cos((N-1) pi x)
//! ```
//!
//! with eigenvalues `lambda_k = (k pi)^2`. The last (Nyquist) mode only takes
//! the values `+-1` on the nodes, so it is normalised without the `sqrt(2)`.
//! Under trapezoidal quadrature the first `N` modes are exactly orthonormal
//! and complete, so a basis with all modes reproduces any grid field. In 2D
//! the basis is the tensor product ordered by eigenvalue.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("a grid needs at least 2 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    Dimension(usize),
    #[error("a basis needs at least one mode")]
    NoModes,
    #[error("{requested} modes requested but the grid resolves only {available} (aliasing)")]
    Aliasing { requested: usize, available: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficient vector has {got} entries but the basis has {expected} modes")]
    ModeMismatch { expected: usize, got: usize },
    #[error("non-finite field value at node {0}")]
    NonFinite(usize),
    #[error("semigroup time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("diffusivity must be positive, got {0}")]
    Diffusivity(f64),
}

/// Uniform vertex-centred grid on the unit interval or unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    dimension: usize,
    points: usize,
    axis: Vec<f64>,
    axis_weights: Vec<f64>,
    weights: Vec<f64>,
}

impl DomainGrid {
    pub fn new(dimension: usize, points: usize) -> Result<Self, SpectralError> {
        if !(1..=2).contains(&dimension) {
            return Err(SpectralError::Dimension(dimension));
        }
        if points < 2 {
            return Err(SpectralError::TooFewPoints(points));
        }
        let h = 1.0 / (points - 1) as f64;
        let axis: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
        let axis_weights: Vec<f64> = (0..points)
            .map(|i| if i == 0 || i == points - 1 { 0.5 * h } else { h })
            .collect();
        let weights = if dimension == 1 {
            axis_weights.clone()
        } else {
            let mut w = Vec::with_capacity(points * points);
            for wy in &axis_weights {
                for wx in &axis_weights {
                    w.push(wx * wy);
                }
            }
            w
        };
        Ok(Self {
            dimension,
            points,
            axis,
            axis_weights,
            weights,
        })
    }

    pub fn interval(points: usize) -> Result<Self, SpectralError> {
        Self::new(1, points)
    }

    pub fn square(points: usize) -> Result<Self, SpectralError> {
        Self::new(2, points)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points - 1) as f64
    }

    pub fn axis_coordinates(&self) -> &[f64] {
        &self.axis
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    /// Trapezoidal quadrature weights, one per node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinates `(x, y)` of a node; `y` is 0 in 1D. In 2D nodes are
    /// stored row by row with `x` varying fastest.
    pub fn node(&self, index: usize) -> (f64, f64) {
        if self.dimension == 1 {
            (self.axis[index], 0.0)
        } else {
            (self.axis[index % self.points], self.axis[index / self.points])
        }
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Number of independent cosine modes the grid resolves.
    pub fn max_modes(&self) -> usize {
        self.num_nodes()
    }
}

/// Scalar field sampled at the nodes of a [`DomainGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn from_values(grid: &DomainGrid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.num_nodes() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(bad));
        }
        Ok(Self(values))
    }

    pub fn constant(grid: &DomainGrid, value: f64) -> Self {
        Self(vec![value; grid.num_nodes()])
    }

    pub fn zeros(grid: &DomainGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: &DomainGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(
            (0..grid.num_nodes())
                .map(|i| {
                    let (x, y) = grid.node(i);
                    f(x, y)
                })
                .collect(),
        )
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }
}

/// Value of the one-dimensional cosine mode `k` on an axis with `points` nodes.
fn axis_mode(k: usize, points: usize, x: f64) -> f64 {
    if k == 0 {
        1.0
    } else if k == points - 1 {
        (k as f64 * PI * x).cos()
    } else {
        SQRT_2 * (k as f64 * PI * x).cos()
    }
}

/// Truncated Neumann eigenbasis sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    grid: DomainGrid,
    /// `axis_table[k * N + i]` = axis mode `k` at axis node `i`.
    axis_table: Vec<f64>,
    modes: Vec<[usize; 2]>,
    eigenvalues: Vec<f64>,
}

impl SpectralBasis {
    /// Builds the first `num_modes` eigenfunctions, ordered by eigenvalue.
    pub fn build(grid: &DomainGrid, num_modes: usize) -> Result<Self, SpectralError> {
        if num_modes == 0 {
            return Err(SpectralError::NoModes);
        }
        if num_modes > grid.max_modes() {
            return Err(SpectralError::Aliasing {
                requested: num_modes,
                available: grid.max_modes(),
            });
        }
        let n = grid.points_per_axis();
        let mut axis_table = Vec::with_capacity(n * n);
        for k in 0..n {
            for &x in grid.axis_coordinates() {
                axis_table.push(axis_mode(k, n, x));
            }
        }
        let mut modes: Vec<[usize; 2]> = if grid.dimension() == 1 {
            (0..num_modes).map(|k| [k, 0]).collect()
        } else {
            let mut all: Vec<[usize; 2]> = (0..n)
                .flat_map(|ky| (0..n).map(move |kx| [kx, ky]))
                .collect();
            all.sort_by_key(|&[kx, ky]| (kx * kx + ky * ky, kx, ky));
            all.truncate(num_modes);
            all
        };
        modes.shrink_to_fit();
        let eigenvalues = modes
            .iter()
            .map(|&[kx, ky]| PI * PI * ((kx * kx + ky * ky) as f64))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            axis_table,
            modes,
            eigenvalues,
        })
    }

    /// Basis with every mode the grid resolves.
    pub fn complete(grid: &DomainGrid) -> Self {
        Self::build(grid, grid.max_modes()).expect("complete basis is always valid")
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn is_complete(&self) -> bool {
        self.modes.len() == self.grid.max_modes()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Axis wavenumbers `(kx, ky)` of mode `m`; `ky` is 0 in 1D.
    pub fn wavenumbers(&self, m: usize) -> [usize; 2] {
        self.modes[m]
    }

    fn axis_value(&self, k: usize, i: usize) -> f64 {
        self.axis_table[k * self.grid.points_per_axis() + i]
    }

    /// Eigenfunction `m` evaluated at grid node `node`.
    pub fn value(&self, m: usize, node: usize) -> f64 {
        let [kx, ky] = self.modes[m];
        if self.grid.dimension() == 1 {
            self.axis_value(kx, node)
        } else {
            let n = self.grid.points_per_axis();
            self.axis_value(kx, node % n) * self.axis_value(ky, node / n)
        }
    }

    pub fn mode_field(&self, m: usize) -> Field {
        Field((0..self.grid.num_nodes()).map(|j| self.value(m, j)).collect())
    }

    /// `C_0 = sup_k sup_x |e_k(x)|` over the modes of this basis.
    pub fn sup_bound(&self) -> f64 {
        (0..self.num_modes())
            .flat_map(|m| (0..self.grid.num_nodes()).map(move |j| (m, j)))
            .fold(0.0, |c, (m, j)| c.max(self.value(m, j).abs()))
    }

    fn check_field(&self, field: &Field) -> Result<(), SpectralError> {
        if field.len() != self.grid.num_nodes() {
            return Err(SpectralError::LengthMismatch {
                expected: self.grid.num_nodes(),
                got: field.len(),
            });
        }
        Ok(())
    }

    /// Quadrature inner products `<u, e_m>` for every mode.
    pub fn forward_transform(&self, field: &Field) -> Result<Vec<f64>, SpectralError> {
        self.check_field(field)?;
        Ok(self.forward_raw(field.values()))
    }

    fn forward_raw(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        let wx = self.grid.axis_weights();
        if self.grid.dimension() == 1 {
            return self
                .modes
                .iter()
                .map(|&[k, _]| {
                    let row = &self.axis_table[k * n..(k + 1) * n];
                    row.iter().zip(wx).zip(u).map(|((e, w), v)| e * w * v).sum()
                })
                .collect();
        }
        let kx_max = self.modes.iter().map(|m| m[0]).max().unwrap_or(0);
        // partial[kx * n + j] = sum_i w_i e_kx(x_i) u(x_i, y_j)
        let mut partial = vec![0.0; (kx_max + 1) * n];
        for kx in 0..=kx_max {
            let row = &self.axis_table[kx * n..(kx + 1) * n];
            for j in 0..n {
                let line = &u[j * n..(j + 1) * n];
                partial[kx * n + j] = row.iter().zip(wx).zip(line).map(|((e, w), v)| e * w * v).sum();
            }
        }
        self.modes
            .iter()
            .map(|&[kx, ky]| {
                let row = &self.axis_table[ky * n..(ky + 1) * n];
                (0..n).map(|j| wx[j] * row[j] * partial[kx * n + j]).sum()
            })
            .collect()
    }

    /// Synthesises `sum_m c_m e_m` on the grid.
    pub fn inverse_transform(&self, coefficients: &[f64]) -> Result<Field, SpectralError> {
        if coefficients.len() != self.num_modes() {
            return Err(SpectralError::ModeMismatch {
                expected: self.num_modes(),
                got: coefficients.len(),
            });
        }
        Ok(Field(self.inverse_raw(coefficients)))
    }

    fn inverse_raw(&self, c: &[f64]) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        if self.grid.dimension() == 1 {
            let mut out = vec![0.0; n];
            for (&[k, _], &ck) in self.modes.iter().zip(c) {
                let row = &self.axis_table[k * n..(k + 1) * n];
                for (o, e) in out.iter_mut().zip(row) {
                    *o += ck * e;
                }
            }
            return out;
        }
        let ky_max = self.modes.iter().map(|m| m[1]).max().unwrap_or(0);
        // lines[ky * n + i] = sum over modes with this ky of c_m e_kx(x_i)
        let mut lines = vec![0.0; (ky_max + 1) * n];
        for (&[kx, ky], &cm) in self.modes.iter().zip(c) {
            let row = &self.axis_table[kx * n..(kx + 1) * n];
            for i in 0..n {
                lines[ky * n + i] += cm * row[i];
            }
        }
        let mut out = vec![0.0; n * n];
        for ky in 0..=ky_max {
            let row = &self.axis_table[ky * n..(ky + 1) * n];
            for j in 0..n {
                let ey = row[j];
                if ey == 0.0 {
                    continue;
                }
                for i in 0..n {
                    out[j * n + i] += ey * lines[ky * n + i];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum PropagatorKind {
    /// 1D: full `N x N` matrix.
    Dense(Vec<f64>),
    /// 2D with a complete basis: the same `N x N` axis matrix along x then y.
    Separable(Vec<f64>),
    /// 2D with a truncated basis: project, damp, synthesise.
    Modal(Vec<f64>),
}

/// `e^{t k Delta}` restricted to a basis, precomputed for one `(k, t)` pair.
///
/// Modes outside the basis are dropped, so with a truncated basis the map is
/// the semigroup composed with the orthogonal projection onto the basis span.
#[derive(Debug, Clone)]
pub struct Propagator {
    basis: SpectralBasis,
    kind: PropagatorKind,
}

impl Propagator {
    pub fn new(basis: &SpectralBasis, diffusivity: f64, t: f64) -> Result<Self, SpectralError> {
        if !(t >= 0.0) {
            return Err(SpectralError::NegativeTime(t));
        }
        if !(diffusivity > 0.0) || !diffusivity.is_finite() {
            return Err(SpectralError::Diffusivity(diffusivity));
        }
        let grid = basis.grid();
        let n = grid.points_per_axis();
        let axis_matrix = |ks: &mut dyn Iterator<Item = usize>| {
            let w = grid.axis_weights();
            let mut p = vec![0.0; n * n];
            for k in ks {
                let d = (-diffusivity * PI * PI * (k * k) as f64 * t).exp();
                if d == 0.0 {
                    continue;
                }
                let row = &basis.axis_table[k * n..(k + 1) * n];
                for i in 0..n {
                    let di = d * row[i];
                    for j in 0..n {
                        p[i * n + j] += di * row[j] * w[j];
                    }
                }
            }
            p
        };
        let kind = if grid.dimension() == 1 {
            PropagatorKind::Dense(axis_matrix(&mut basis.modes.iter().map(|m| m[0])))
        } else if basis.is_complete() {
            PropagatorKind::Separable(axis_matrix(&mut (0..n)))
        } else {
            PropagatorKind::Modal(
                basis
                    .eigenvalues
                    .iter()
                    .map(|l| (-diffusivity * l * t).exp())
                    .collect(),
            )
        };
        Ok(Self {
            basis: basis.clone(),
            kind,
        })
    }

    pub fn apply(&self, field: &Field) -> Result<Field, SpectralError> {
        self.basis.check_field(field)?;
        let mut out = vec![0.0; field.len()];
        self.apply_into(field.values(), &mut out);
        Ok(Field(out))
    }

    /// Applies the propagator to `src`, writing into `dst` (same length).
    pub(crate) fn apply_into(&self, src: &[f64], dst: &mut [f64]) {
        let n = self.basis.grid.points_per_axis();
        match &self.kind {
            PropagatorKind::Dense(p) => {
                for (i, d) in dst.iter_mut().enumerate() {
                    let row = &p[i * n..(i + 1) * n];
                    *d = row.iter().zip(src).map(|(a, b)| a * b).sum();
                }
            }
            PropagatorKind::Separable(p) => {
                let mut tmp = vec![0.0; n * n];
                for j in 0..n {
                    let line = &src[j * n..(j + 1) * n];
                    for i in 0..n {
                        let row = &p[i * n..(i + 1) * n];
                        tmp[j * n + i] = row.iter().zip(line).map(|(a, b)| a * b).sum();
                    }
                }
                for j in 0..n {
                    let row = &p[j * n..(j + 1) * n];
                    for i in 0..n {
                        dst[j * n + i] = (0..n).map(|l| row[l] * tmp[l * n + i]).sum();
                    }
                }
            }
            PropagatorKind::Modal(damping) => {
                let mut c = self.basis.forward_raw(src);
                for (ck, d) in c.iter_mut().zip(damping) {
                    *ck *= d;
                }
                dst.copy_from_slice(&self.basis.inverse_raw(&c));
            }
        }
    }
}

/// Applies `e^{t A}` with `A` the Neumann realisation of `diffusivity * Laplacian`.
pub fn apply_semigroup(
    field: &Field,
    diffusivity: f64,
    t: f64,
    basis: &SpectralBasis,
) -> Result<Field, SpectralError> {
    Propagator::new(basis, diffusivity, t)?.apply(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn inner(grid: &DomainGrid, a: &Field, b: &Field) -> f64 {
        let prod: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
        grid.integrate(&prod)
    }

    #[test]
    fn grid_spacing_and_measure() {
        let g = DomainGrid::interval(64).unwrap();
        assert_eq!(g.spacing(), 1.0 / 63.0);
        assert_abs_diff_eq!(g.measure(), 1.0, epsilon = 1e-14);
        let g2 = DomainGrid::square(9).unwrap();
        assert_eq!(g2.num_nodes(), 81);
        assert_abs_diff_eq!(g2.measure(), 1.0, epsilon = 1e-14);
        assert_eq!(g2.node(10), (0.125, 0.125));
        assert!(matches!(DomainGrid::interval(1), Err(SpectralError::TooFewPoints(1))));
        assert!(matches!(DomainGrid::new(3, 8), Err(SpectralError::Dimension(3))));
    }

    #[test]
    fn single_mode_is_constant() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::build(&g, 1).unwrap();
        assert_eq!(b.eigenvalues(), &[0.0]);
        assert!(b.mode_field(0).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn orthonormal_modes() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::build(&g, 8).unwrap();
        let (e3, e5) = (b.mode_field(3), b.mode_field(5));
        assert_abs_diff_eq!(inner(&g, &e3, &e5), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(inner(&g, &e3, &e3), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn complete_basis_is_orthonormal_including_nyquist() {
        for g in [DomainGrid::interval(17).unwrap(), DomainGrid::square(5).unwrap()] {
            let b = SpectralBasis::complete(&g);
            for j in 0..b.num_modes() {
                for k in 0..b.num_modes() {
                    let ip = inner(&g, &b.mode_field(j), &b.mode_field(k));
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(ip, want, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn sup_bound_is_sqrt_two() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::build(&g, 8).unwrap();
        // direct max over the sampled values
        let direct = (0..8)
            .flat_map(|m| b.mode_field(m).into_values())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert_abs_diff_eq!(direct, SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(b.sup_bound(), 1.414_21, epsilon = 1e-5);
        let b2 = SpectralBasis::build(&DomainGrid::square(16).unwrap(), 20).unwrap();
        assert_abs_diff_eq!(b2.sup_bound(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_strictly_increase_in_1d() {
        let g = DomainGrid::interval(32).unwrap();
        let b = SpectralBasis::complete(&g);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] < w[1]));
        assert_abs_diff_eq!(b.eigenvalues()[3], 9.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn aliasing_rejected() {
        let g = DomainGrid::interval(16).unwrap();
        assert!(SpectralBasis::build(&g, 16).is_ok());
        assert_eq!(
            SpectralBasis::build(&g, 17),
            Err(SpectralError::Aliasing { requested: 17, available: 16 })
        );
        assert_eq!(SpectralBasis::build(&g, 0), Err(SpectralError::NoModes));
    }

    #[test]
    fn transform_of_basis_element() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::build(&g, 8).unwrap();
        let c = b.forward_transform(&b.mode_field(3)).unwrap();
        for (k, ck) in c.iter().enumerate() {
            assert_abs_diff_eq!(*ck, if k == 3 { 1.0 } else { 0.0 }, epsilon = 1e-10);
        }
    }

    #[test]
    fn transform_dimension_mismatch() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::build(&g, 8).unwrap();
        let other = Field::zeros(&DomainGrid::interval(32).unwrap());
        assert_eq!(
            b.forward_transform(&other),
            Err(SpectralError::LengthMismatch { expected: 64, got: 32 })
        );
        assert!(matches!(b.inverse_transform(&[1.0; 3]), Err(SpectralError::ModeMismatch { .. })));
    }

    #[test]
    fn parseval_for_x_squared() {
        // the 32-mode tail of x^2 is ~8.8e-7; aliasing on coarse grids adds to it
        let g = DomainGrid::interval(256).unwrap();
        let b = SpectralBasis::build(&g, 32).unwrap();
        let f = Field::from_fn(&g, |x, _| x * x);
        let c = b.forward_transform(&f).unwrap();
        let norm2 = inner(&g, &f, &f);
        let coeff2: f64 = c.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm2, coeff2, epsilon = 1e-6);
    }

    #[test]
    fn two_dimensional_roundtrip() {
        let g = DomainGrid::square(8).unwrap();
        let b = SpectralBasis::build(&g, 10).unwrap();
        let c: Vec<f64> = (0..10).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let f = b.inverse_transform(&c).unwrap();
        let back = b.forward_transform(&f).unwrap();
        for (a, z) in c.iter().zip(&back) {
            assert_abs_diff_eq!(a, z, epsilon = 1e-12);
        }
    }

    #[test]
    fn semigroup_identity_and_constants() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::complete(&g);
        let f = Field::from_fn(&g, |x, _| (3.0 * x).sin() + x * x);
        let same = apply_semigroup(&f, 0.3, 0.0, &b).unwrap();
        for (a, z) in f.values().iter().zip(same.values()) {
            assert_abs_diff_eq!(a, z, epsilon = 1e-12);
        }
        let c = Field::constant(&g, 2.5);
        let out = apply_semigroup(&c, 0.7, 3.0, &b).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn first_mode_decay() {
        let g = DomainGrid::interval(64).unwrap();
        let b = SpectralBasis::complete(&g);
        let e1 = b.mode_field(1);
        let out = apply_semigroup(&e1, 0.1, 1.0, &b).unwrap();
        let factor = (-0.1 * PI * PI).exp();
        assert_abs_diff_eq!(factor, 0.372_708, epsilon = 1e-6);
        for (a, z) in out.values().iter().zip(e1.values()) {
            assert_abs_diff_eq!(*a, factor * z, epsilon = 1e-12);
        }
    }

    #[test]
    fn semigroup_rejects_bad_arguments() {
        let g = DomainGrid::interval(8).unwrap();
        let b = SpectralBasis::complete(&g);
        let f = Field::zeros(&g);
        assert_eq!(apply_semigroup(&f, 1.0, -0.1, &b).unwrap_err(), SpectralError::NegativeTime(-0.1));
        assert_eq!(apply_semigroup(&f, 0.0, 1.0, &b).unwrap_err(), SpectralError::Diffusivity(0.0));
    }

    #[test]
    fn two_dimensional_separable_matches_modal() {
        let g = DomainGrid::square(6).unwrap();
        let full = SpectralBasis::complete(&g);
        let f = Field::from_fn(&g, |x, y| 1.0 + x * y + (2.0 * y).cos());
        let sep = apply_semigroup(&f, 0.05, 0.2, &full).unwrap();
        // same result through the spectral path
        let c = full.forward_transform(&f).unwrap();
        let damped: Vec<f64> = c
            .iter()
            .zip(full.eigenvalues())
            .map(|(ck, l)| ck * (-0.05 * l * 0.2).exp())
            .collect();
        let modal = full.inverse_transform(&damped).unwrap();
        for (a, z) in sep.values().iter().zip(modal.values()) {
            assert_abs_diff_eq!(a, z, epsilon = 1e-12);
        }
    }
}
