//! Chart-based Riemannian models and vector-field machinery.
//!
//! Each model is a single chart with an explicit validity region and
//! analytic first derivatives of the metric components; second-derivative
//! objects (curvature) use central finite differences of the Christoffel
//! symbols. The catalog covers the flat plane and space, the flat cylinder
//! and torus charts, the `S^3` chart in Hopf-adapted coordinates, and the
//! odd sphere in projective coordinates.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, SkewMatrix, SymMatrix};

/// Identifies which chart a point lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartTag {
    Euclidean,
    Flat,
    SphereEast,
    SphereWest,
    S3,
    Cylinder,
    Torus,
    Custom,
}

/// Hemisphere selector for the projective sphere chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    East,
    West,
}

/// A point in a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub chart: ChartTag,
    pub coords: DVector<f64>,
}

impl ChartPoint {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Margin excluding the degenerate `S^3` chart boundary.
const S3_BOUNDARY_MARGIN: f64 = 1e-6;

/// A Riemannian metric presented in a single chart, with analytic first
/// derivatives of its components.
#[derive(Debug, Clone)]
pub enum RiemannianModel {
    /// Standard flat metric on `R^n`.
    Euclidean { dim: usize },
    /// Constant-coefficient metric on `R^n` (conversion outputs land here).
    Flat { h: SymMatrix },
    /// `1/K` times the standard round metric on the unit sphere `S^{2m-1}`,
    /// written in projective coordinates from one pole. The chart covers
    /// the open hemisphere; the equator sits at coordinate infinity.
    SphereProjective { m: usize, curvature: f64, hemisphere: Hemisphere },
    /// `S^3` in the parametrization `ds^2 = cos^2(u^3) (du^1)^2 +
    /// sin^2(u^3) (du^2)^2 + (du^3)^2`, valid for `0 < u^3 < pi/2`.
    S3Chart,
    /// Flat chart `(theta, k)` on the cylinder.
    Cylinder,
    /// Flat angular chart `(theta^1, theta^2)` on the torus.
    Torus,
}

impl RiemannianModel {
    pub fn euclidean(dim: usize) -> Self {
        RiemannianModel::Euclidean { dim }
    }

    pub fn flat(h: SymMatrix) -> Result<Self> {
        if !cholesky_pd(&h)?.is_pd() {
            return Err(Error::Validation("flat metric must be positive definite".into()));
        }
        Ok(RiemannianModel::Flat { h })
    }

    pub fn sphere_projective(m: usize, curvature: f64, hemisphere: Hemisphere) -> Result<Self> {
        if m < 2 {
            return Err(Error::Validation("sphere model needs m >= 2".into()));
        }
        if !curvature.is_finite() || curvature <= 0.0 {
            return Err(Error::Validation("sphere curvature must be positive".into()));
        }
        Ok(RiemannianModel::SphereProjective { m, curvature, hemisphere })
    }

    pub fn s3_chart() -> Self {
        RiemannianModel::S3Chart
    }

    pub fn cylinder() -> Self {
        RiemannianModel::Cylinder
    }

    pub fn torus() -> Self {
        RiemannianModel::Torus
    }

    pub fn dim(&self) -> usize {
        match self {
            RiemannianModel::Euclidean { dim } => *dim,
            RiemannianModel::Flat { h } => h.dim(),
            RiemannianModel::SphereProjective { m, .. } => 2 * m - 1,
            RiemannianModel::S3Chart => 3,
            RiemannianModel::Cylinder | RiemannianModel::Torus => 2,
        }
    }

    pub fn chart(&self) -> ChartTag {
        match self {
            RiemannianModel::Euclidean { .. } => ChartTag::Euclidean,
            RiemannianModel::Flat { .. } => ChartTag::Flat,
            RiemannianModel::SphereProjective { hemisphere: Hemisphere::East, .. } => {
                ChartTag::SphereEast
            }
            RiemannianModel::SphereProjective { hemisphere: Hemisphere::West, .. } => {
                ChartTag::SphereWest
            }
            RiemannianModel::S3Chart => ChartTag::S3,
            RiemannianModel::Cylinder => ChartTag::Cylinder,
            RiemannianModel::Torus => ChartTag::Torus,
        }
    }

    /// True when `coords` lies in the chart's validity region.
    pub fn contains(&self, coords: &DVector<f64>) -> bool {
        if coords.len() != self.dim() || coords.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            RiemannianModel::S3Chart => {
                let u3 = coords[2];
                u3 > S3_BOUNDARY_MARGIN && u3 < std::f64::consts::FRAC_PI_2 - S3_BOUNDARY_MARGIN
            }
            _ => true,
        }
    }

    /// Tags and validates a coordinate tuple.
    pub fn point(&self, coords: DVector<f64>) -> Result<ChartPoint> {
        if !self.contains(&coords) {
            return Err(Error::OutsideChart(format!(
                "coords {:?} invalid for chart {:?}",
                coords.as_slice(),
                self.chart()
            )));
        }
        Ok(ChartPoint { chart: self.chart(), coords })
    }

    pub(crate) fn check_point(&self, x: &ChartPoint) -> Result<()> {
        if x.chart != self.chart() {
            return Err(Error::InvalidInput(format!(
                "point of chart {:?} used with a {:?} model",
                x.chart,
                self.chart()
            )));
        }
        if !self.contains(&x.coords) {
            return Err(Error::OutsideChart(format!(
                "coords {:?} left chart {:?}",
                x.coords.as_slice(),
                self.chart()
            )));
        }
        Ok(())
    }

    /// Metric components `h_ij(x)`.
    pub fn metric(&self, x: &ChartPoint) -> Result<SymMatrix> {
        self.check_point(x)?;
        Ok(self.metric_raw(&x.coords))
    }

    /// Analytic partials, indexed `[k][(i,j)] = dh_ij/dx^k`.
    pub fn metric_dx(&self, x: &ChartPoint) -> Result<Vec<SymMatrix>> {
        self.check_point(x)?;
        Ok(self.metric_dx_raw(&x.coords))
    }

    pub(crate) fn metric_raw(&self, x: &DVector<f64>) -> SymMatrix {
        let n = self.dim();
        match self {
            RiemannianModel::Euclidean { .. }
            | RiemannianModel::Cylinder
            | RiemannianModel::Torus => SymMatrix::identity(n),
            RiemannianModel::Flat { h } => h.clone(),
            RiemannianModel::SphereProjective { curvature, .. } => {
                let s = 1.0 + x.dot(x);
                let k = *curvature;
                SymMatrix::from_fn(n, |i, j| {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    (kron / s - x[i] * x[j] / (s * s)) / k
                })
            }
            RiemannianModel::S3Chart => {
                let u3 = x[2];
                SymMatrix::from_fn(3, |i, j| {
                    if i != j {
                        0.0
                    } else {
                        match i {
                            0 => u3.cos() * u3.cos(),
                            1 => u3.sin() * u3.sin(),
                            _ => 1.0,
                        }
                    }
                })
            }
        }
    }

    pub(crate) fn metric_dx_raw(&self, x: &DVector<f64>) -> Vec<SymMatrix> {
        let n = self.dim();
        match self {
            RiemannianModel::Euclidean { .. }
            | RiemannianModel::Flat { .. }
            | RiemannianModel::Cylinder
            | RiemannianModel::Torus => vec![SymMatrix::from_fn(n, |_, _| 0.0); n],
            RiemannianModel::SphereProjective { curvature, .. } => {
                let s = 1.0 + x.dot(x);
                let (s2, s3) = (s * s, s * s * s);
                let k = *curvature;
                (0..n)
                    .map(|kk| {
                        SymMatrix::from_fn(n, |i, j| {
                            let d_ij = if i == j { 1.0 } else { 0.0 };
                            let d_ik = if i == kk { 1.0 } else { 0.0 };
                            let d_jk = if j == kk { 1.0 } else { 0.0 };
                            (-2.0 * x[kk] * d_ij / s2 - (d_ik * x[j] + d_jk * x[i]) / s2
                                + 4.0 * x[i] * x[j] * x[kk] / s3)
                                / k
                        })
                    })
                    .collect()
            }
            RiemannianModel::S3Chart => {
                let u3 = x[2];
                let s2 = (2.0 * u3).sin();
                (0..3)
                    .map(|kk| {
                        SymMatrix::from_fn(3, |i, j| {
                            if kk == 2 && i == j {
                                match i {
                                    0 => -s2,
                                    1 => s2,
                                    _ => 0.0,
                                }
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            }
        }
    }

    /// The wind the catalog pairs with this chart, when it is fixed by the
    /// construction instead of being a parameter.
    pub fn canonical_wind(&self) -> Option<VectorFieldModel> {
        match self {
            RiemannianModel::Cylinder => {
                Some(VectorFieldModel::constant(DVector::from_vec(vec![1.0, 0.0])))
            }
            RiemannianModel::Torus => {
                let c = std::f64::consts::FRAC_1_SQRT_2;
                Some(VectorFieldModel::constant(DVector::from_vec(vec![c, c])))
            }
            RiemannianModel::S3Chart => {
                Some(VectorFieldModel::constant(DVector::from_vec(vec![1.0, 1.0, 0.0])))
            }
            _ => None,
        }
    }
}

type FieldFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type FieldJacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A vector field `W = W^i d/dx^i` with analytic partials of its
/// components.
#[derive(Clone)]
pub enum VectorFieldModel {
    Constant { components: DVector<f64> },
    /// The sphere Killing family `W^i = Q^i_r x^r + C^i + (x.C) x^i` on the
    /// eastern chart; the western extension flips the sign of `C`:
    /// `W = Qx - C - (x.C) x`.
    SphereKilling { q: SkewMatrix, c: DVector<f64>, curvature: f64, western: bool },
    Custom {
        dim: usize,
        components: Arc<FieldFn>,
        components_dx: Arc<FieldJacFn>,
    },
}

impl fmt::Debug for VectorFieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorFieldModel::Constant { components } => {
                f.debug_struct("Constant").field("components", components).finish()
            }
            VectorFieldModel::SphereKilling { q, c, curvature, western } => f
                .debug_struct("SphereKilling")
                .field("q", q)
                .field("c", c)
                .field("curvature", curvature)
                .field("western", western)
                .finish(),
            VectorFieldModel::Custom { dim, .. } => {
                f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl VectorFieldModel {
    pub fn constant(components: DVector<f64>) -> Self {
        VectorFieldModel::Constant { components }
    }

    pub fn custom(
        dim: usize,
        components: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        components_dx: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        VectorFieldModel::Custom {
            dim,
            components: Arc::new(components),
            components_dx: Arc::new(components_dx),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorFieldModel::Constant { components } => components.len(),
            VectorFieldModel::SphereKilling { c, .. } => c.len(),
            VectorFieldModel::Custom { dim, .. } => *dim,
        }
    }

    /// Contravariant components `W^i(x)`.
    pub fn components(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            VectorFieldModel::Constant { components } => components.clone(),
            VectorFieldModel::SphereKilling { q, c, western, .. } => {
                let qx = q.matrix() * x;
                let xc = x.dot(c);
                if *western {
                    qx - c - x * xc
                } else {
                    qx + c + x * xc
                }
            }
            VectorFieldModel::Custom { components, .. } => components(x),
        }
    }

    /// Analytic partials `dW^i/dx^j`, indexed `(i, j)`.
    pub fn components_dx(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        match self {
            VectorFieldModel::Constant { .. } => DMatrix::zeros(n, n),
            VectorFieldModel::SphereKilling { q, c, western, .. } => {
                let sign = if *western { -1.0 } else { 1.0 };
                let xc = x.dot(c);
                DMatrix::from_fn(n, n, |i, j| {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    q[(i, j)] + sign * (c[j] * x[i] + xc * kron)
                })
            }
            VectorFieldModel::Custom { components_dx, .. } => components_dx(x),
        }
    }
}

/// Christoffel symbols of the second kind, `gamma^i_{jk}`, indexed
/// `[i][(j,k)]`; exactly symmetric in `(j, k)`.
pub fn christoffel(model: &RiemannianModel, x: &ChartPoint) -> Result<Vec<DMatrix<f64>>> {
    model.check_point(x)?;
    Ok(christoffel_raw(model, &x.coords))
}

pub(crate) fn christoffel_raw(model: &RiemannianModel, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let n = model.dim();
    let h = model.metric_raw(x);
    let dh = model.metric_dx_raw(x);
    let h_inv = h
        .matrix()
        .clone()
        .try_inverse()
        .expect("catalog metrics are positive definite inside their charts");

    let mut gamma = vec![DMatrix::zeros(n, n); n];
    for j in 0..n {
        for k in j..n {
            // First-kind symbol gamma_{sjk}, then raise with h^{is}.
            let mut first = DVector::zeros(n);
            for s in 0..n {
                first[s] = 0.5 * (dh[k][(s, j)] + dh[j][(s, k)] - dh[s][(j, k)]);
            }
            let raised = &h_inv * first;
            for i in 0..n {
                gamma[i][(j, k)] = raised[i];
                gamma[i][(k, j)] = raised[i];
            }
        }
    }
    gamma
}

/// Lowered covariant derivative `W_{i||j}` with respect to the model's
/// Levi-Civita connection, indexed `(i, j)`.
pub fn covariant_derivative(
    model: &RiemannianModel,
    field: &VectorFieldModel,
    x: &ChartPoint,
) -> Result<DMatrix<f64>> {
    model.check_point(x)?;
    if field.dim() != model.dim() {
        return Err(Error::InvalidInput("field/model dimension mismatch".into()));
    }
    Ok(covariant_derivative_raw(model, field, &x.coords))
}

pub(crate) fn covariant_derivative_raw(
    model: &RiemannianModel,
    field: &VectorFieldModel,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let n = model.dim();
    let h = model.metric_raw(x);
    let dh = model.metric_dx_raw(x);
    let gamma = christoffel_raw(model, x);
    let w_up = field.components(x);
    let dw_up = field.components_dx(x);
    let w_low = h.matrix() * &w_up;

    DMatrix::from_fn(n, n, |i, j| {
        // d(W_i)/dx^j = d(h_is)/dx^j W^s + h_is d(W^s)/dx^j
        let mut dwi = 0.0;
        for s in 0..n {
            dwi += dh[j][(i, s)] * w_up[s] + h[(i, s)] * dw_up[(s, j)];
        }
        let mut conn = 0.0;
        for r in 0..n {
            conn += w_low[r] * gamma[r][(i, j)];
        }
        dwi - conn
    })
}

/// Killing / unit-length / parallelism residuals over a point sample.
#[derive(Debug, Clone)]
pub struct KillingReport {
    /// Max over the sample of `|(W_{i||j} + W_{j||i}) / 2|`.
    pub max_killing_residual: f64,
    /// Max over the sample of `|h(W, W) - 1|`.
    pub max_unit_residual: f64,
    /// Max over the sample of `|W_{i||j}|`.
    pub max_parallel_residual: f64,
    pub sample_points: Vec<ChartPoint>,
}

pub fn killing_report(
    model: &RiemannianModel,
    field: &VectorFieldModel,
    points: &[ChartPoint],
) -> Result<KillingReport> {
    if points.is_empty() {
        return Err(Error::InvalidInput("killing_report needs at least one point".into()));
    }
    let mut killing: f64 = 0.0;
    let mut unit: f64 = 0.0;
    let mut parallel: f64 = 0.0;
    for x in points {
        model.check_point(x)?;
        let grad = covariant_derivative_raw(model, field, &x.coords);
        let n = model.dim();
        for i in 0..n {
            for j in 0..n {
                killing = killing.max(0.5 * (grad[(i, j)] + grad[(j, i)]).abs());
                parallel = parallel.max(grad[(i, j)].abs());
            }
        }
        let h = model.metric_raw(&x.coords);
        let w = field.components(&x.coords);
        let norm2 = (h.matrix() * &w).dot(&w);
        unit = unit.max((norm2 - 1.0).abs());
    }
    Ok(KillingReport {
        max_killing_residual: killing,
        max_unit_residual: unit,
        max_parallel_residual: parallel,
        sample_points: points.to_vec(),
    })
}

/// Curvature tensor `R^i_{jkl}` of the model metric, from central finite
/// differences of the Christoffel symbols; the component layout is
/// `(R(d_k, d_l) d_j)^i`.
pub(crate) fn riemann_raw(model: &RiemannianModel, x: &DVector<f64>) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let n = model.dim();
    let gamma = christoffel_raw(model, x);
    let step = 1e-4 * (1.0 + x.norm());

    // dgamma[m][i][(j,k)] = d gamma^i_{jk} / dx^m
    let mut dgamma = Vec::with_capacity(n);
    for m in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[m] += step;
        xm[m] -= step;
        if !model.contains(&xp) || !model.contains(&xm) {
            return Err(Error::OutsideChart(
                "finite-difference stencil for curvature left the chart".into(),
            ));
        }
        let gp = christoffel_raw(model, &xp);
        let gm = christoffel_raw(model, &xm);
        let diffs: Vec<DMatrix<f64>> =
            (0..n).map(|i| (&gp[i] - &gm[i]) / (2.0 * step)).collect();
        dgamma.push(diffs);
    }

    let mut riemann = vec![vec![DMatrix::zeros(n, n); n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = dgamma[k][i][(l, j)] - dgamma[l][i][(k, j)];
                    for m in 0..n {
                        v += gamma[i][(k, m)] * gamma[m][(l, j)]
                            - gamma[i][(l, m)] * gamma[m][(k, j)];
                    }
                    riemann[i][j][(k, l)] = v;
                }
            }
        }
    }
    Ok(riemann)
}

/// Sectional curvature of the plane spanned by `u` and `v`.
pub fn sectional_curvature(
    model: &RiemannianModel,
    x: &ChartPoint,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    model.check_point(x)?;
    let n = model.dim();
    if u.len() != n || v.len() != n {
        return Err(Error::InvalidInput("tangent vector dimension mismatch".into()));
    }
    let h = model.metric_raw(&x.coords);
    let hu = h.matrix() * u;
    let hv = h.matrix() * v;
    let den = hu.dot(u) * hv.dot(v) - hu.dot(v) * hu.dot(v);
    if den < 1e-12 {
        return Err(Error::DegenerateFlag(format!("plane denominator {den:.3e}")));
    }

    let riemann = riemann_raw(model, &x.coords)?;
    // w = R(u, v) v
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    acc += riemann[i][j][(k, l)] * v[j] * u[k] * v[l];
                }
            }
        }
        w[i] = acc;
    }
    let num = (h.matrix() * &w).dot(u);
    Ok(num / den)
}
