//! Zermelo navigation with a critical (unit-length) wind.
//!
//! A sea `(M, h)` and a wind `W` with `h(W, W) = 1` induce the conic norm
//! `F(x, y) = |y|_h^2 / (2 h(y, W))`, which in the `(a, b)` presentation
//! is the Kropina metric `alpha^2 / beta` with
//!
//! ```text
//! a_ij = e^{-k} h_ij,      b_i = 2 e^{-k} W_i,      b^2 = 4 e^{-k},
//! ```
//!
//! for an arbitrary conformal exponent `k`. This module holds both
//! directions of that dictionary plus the indicatrix-translation picture
//! (the `F`-unit sphere is the `W`-translate of the `h`-unit sphere).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, SkewMatrix, SymMatrix};
use crate::riemannian::{ChartPoint, ChartTag, Hemisphere, RiemannianModel, VectorFieldModel};
use crate::sample::probe_points;

/// How far `h(W, W)` may deviate from 1 before navigation data is rejected.
pub const WIND_UNIT_GATE: f64 = 1e-6;

/// Navigation data: a chart metric, a critical wind, and a constant
/// conformal exponent.
#[derive(Debug, Clone)]
pub struct NavigationData {
    pub model: RiemannianModel,
    pub wind: VectorFieldModel,
    /// The constant `k` in `a = e^{-k} h`; spatially varying exponents are
    /// only reachable through custom Kropina data.
    pub conformal_exponent: f64,
}

impl NavigationData {
    pub fn new(
        model: RiemannianModel,
        wind: VectorFieldModel,
        conformal_exponent: f64,
    ) -> Result<Self> {
        if wind.dim() != model.dim() {
            return Err(Error::InvalidInput("wind/model dimension mismatch".into()));
        }
        if !conformal_exponent.is_finite() {
            return Err(Error::InvalidInput("conformal exponent must be finite".into()));
        }
        let nav = NavigationData { model, wind, conformal_exponent };
        let residual = nav.wind_unit_residual();
        if residual > WIND_UNIT_GATE {
            return Err(Error::Validation(format!(
                "wind is not unit length: max |h(W,W) - 1| = {residual:.3e}"
            )));
        }
        Ok(nav)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Max of `|h(W, W) - 1|` over the standard probe points.
    pub fn wind_unit_residual(&self) -> f64 {
        probe_points(&self.model, 12)
            .iter()
            .map(|x| {
                let h = self.model.metric_raw(&x.coords);
                let w = self.wind.components(&x.coords);
                ((h.matrix() * &w).dot(&w) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// One-point conversion from navigation data to Kropina data.
pub fn nav_to_kropina_at(h: &SymMatrix, w_up: &DVector<f64>, k: f64) -> (SymMatrix, DVector<f64>) {
    let e = (-k).exp();
    let a = SymMatrix::from_fn(h.dim(), |i, j| e * h[(i, j)]);
    let b = (h.matrix() * w_up) * (2.0 * e);
    (a, b)
}

/// One-point conversion from Kropina data back to navigation data;
/// returns `(h, W^i, k)` with `k = log(4 / b^2)`.
pub fn kropina_to_nav_at(a: &SymMatrix, b: &DVector<f64>) -> Result<(SymMatrix, DVector<f64>, f64)> {
    let a_inv = a
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Validation("a(x) is singular".into()))?;
    let b_norm2 = (&a_inv * b).dot(b);
    if b_norm2 <= 1e-300 {
        return Err(Error::Validation(format!("b^2 = {b_norm2:.3e} must be positive")));
    }
    let k = (4.0 / b_norm2).ln();
    let e = k.exp();
    let h = SymMatrix::from_fn(a.dim(), |i, j| e * a[(i, j)]);
    let w_up = (a_inv * b) * 0.5;
    Ok((h, w_up, k))
}

type MatrixFieldFn = dyn Fn(&DVector<f64>) -> SymMatrix + Send + Sync;
type MatrixFieldDxFn = dyn Fn(&DVector<f64>) -> Vec<SymMatrix> + Send + Sync;
type CovectorFieldFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type CovectorFieldDxFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type RegionFn = dyn Fn(&DVector<f64>) -> bool + Send + Sync;

#[derive(Clone)]
enum KropinaSource {
    Nav(NavigationData),
    Constant { a: SymMatrix, b: DVector<f64> },
    Custom {
        dim: usize,
        a: Arc<MatrixFieldFn>,
        a_dx: Arc<MatrixFieldDxFn>,
        b: Arc<CovectorFieldFn>,
        b_dx: Arc<CovectorFieldDxFn>,
        contains: Arc<RegionFn>,
    },
}

/// The pair `(a_ij(x), b_i(x))` defining `F = alpha^2 / beta` on the conic
/// domain `{beta > 0}`, with analytic first partials of both fields.
#[derive(Clone)]
pub struct KropinaData {
    source: KropinaSource,
}

impl fmt::Debug for KropinaData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            KropinaSource::Nav(nav) => f.debug_tuple("KropinaData::Nav").field(nav).finish(),
            KropinaSource::Constant { a, b } => {
                f.debug_struct("KropinaData::Constant").field("a", a).field("b", b).finish()
            }
            KropinaSource::Custom { dim, .. } => {
                f.debug_struct("KropinaData::Custom").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl KropinaData {
    pub fn from_nav(nav: &NavigationData) -> Result<Self> {
        nav_to_kropina(nav)
    }

    /// Constant-coefficient data on `R^n`.
    pub fn constant(a: SymMatrix, b: DVector<f64>) -> Result<Self> {
        if a.dim() != b.len() {
            return Err(Error::InvalidInput("a/b dimension mismatch".into()));
        }
        if !cholesky_pd(&a)?.is_pd() {
            return Err(Error::Validation("a must be positive definite".into()));
        }
        if b.norm() == 0.0 {
            return Err(Error::Validation("b must be nonzero (empty conic domain)".into()));
        }
        Ok(KropinaData { source: KropinaSource::Constant { a, b } })
    }

    /// Fully general data from closures; this is the only route to a
    /// spatially varying conformal factor.
    pub fn custom(
        dim: usize,
        a: impl Fn(&DVector<f64>) -> SymMatrix + Send + Sync + 'static,
        a_dx: impl Fn(&DVector<f64>) -> Vec<SymMatrix> + Send + Sync + 'static,
        b: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        b_dx: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        contains: impl Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    ) -> Self {
        KropinaData {
            source: KropinaSource::Custom {
                dim,
                a: Arc::new(a),
                a_dx: Arc::new(a_dx),
                b: Arc::new(b),
                b_dx: Arc::new(b_dx),
                contains: Arc::new(contains),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            KropinaSource::Nav(nav) => nav.dim(),
            KropinaSource::Constant { b, .. } => b.len(),
            KropinaSource::Custom { dim, .. } => *dim,
        }
    }

    pub fn chart(&self) -> ChartTag {
        match &self.source {
            KropinaSource::Nav(nav) => nav.model.chart(),
            _ => ChartTag::Custom,
        }
    }

    /// The underlying navigation data when this was built from one.
    pub fn nav(&self) -> Option<&NavigationData> {
        match &self.source {
            KropinaSource::Nav(nav) => Some(nav),
            _ => None,
        }
    }

    pub fn contains_coords(&self, coords: &DVector<f64>) -> bool {
        if coords.len() != self.dim() || coords.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.source {
            KropinaSource::Nav(nav) => nav.model.contains(coords),
            KropinaSource::Constant { .. } => true,
            KropinaSource::Custom { contains, .. } => contains(coords),
        }
    }

    pub fn point(&self, coords: DVector<f64>) -> Result<ChartPoint> {
        match &self.source {
            KropinaSource::Nav(nav) => nav.model.point(coords),
            _ => {
                if !self.contains_coords(&coords) {
                    return Err(Error::OutsideChart(format!(
                        "coords {:?} invalid for this Kropina data",
                        coords.as_slice()
                    )));
                }
                Ok(ChartPoint { chart: ChartTag::Custom, coords })
            }
        }
    }

    pub(crate) fn check_point(&self, x: &ChartPoint) -> Result<()> {
        if x.chart != self.chart() {
            return Err(Error::InvalidInput(format!(
                "point of chart {:?} used with Kropina data on chart {:?}",
                x.chart,
                self.chart()
            )));
        }
        if !self.contains_coords(&x.coords) {
            return Err(Error::OutsideChart("point left the chart".into()));
        }
        Ok(())
    }

    pub fn a(&self, coords: &DVector<f64>) -> SymMatrix {
        match &self.source {
            KropinaSource::Nav(nav) => {
                let h = nav.model.metric_raw(coords);
                let e = (-nav.conformal_exponent).exp();
                SymMatrix::from_fn(h.dim(), |i, j| e * h[(i, j)])
            }
            KropinaSource::Constant { a, .. } => a.clone(),
            KropinaSource::Custom { a, .. } => a(coords),
        }
    }

    pub fn a_dx(&self, coords: &DVector<f64>) -> Vec<SymMatrix> {
        let n = self.dim();
        match &self.source {
            KropinaSource::Nav(nav) => {
                let dh = nav.model.metric_dx_raw(coords);
                let e = (-nav.conformal_exponent).exp();
                dh.into_iter()
                    .map(|m| SymMatrix::from_fn(n, |i, j| e * m[(i, j)]))
                    .collect()
            }
            KropinaSource::Constant { .. } => vec![SymMatrix::from_fn(n, |_, _| 0.0); n],
            KropinaSource::Custom { a_dx, .. } => a_dx(coords),
        }
    }

    pub fn b(&self, coords: &DVector<f64>) -> DVector<f64> {
        match &self.source {
            KropinaSource::Nav(nav) => {
                let h = nav.model.metric_raw(coords);
                let w = nav.wind.components(coords);
                (h.matrix() * w) * (2.0 * (-nav.conformal_exponent).exp())
            }
            KropinaSource::Constant { b, .. } => b.clone(),
            KropinaSource::Custom { b, .. } => b(coords),
        }
    }

    /// Partials `db_i/dx^j`, indexed `(i, j)`.
    pub fn b_dx(&self, coords: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        match &self.source {
            KropinaSource::Nav(nav) => {
                let h = nav.model.metric_raw(coords);
                let dh = nav.model.metric_dx_raw(coords);
                let w = nav.wind.components(coords);
                let dw = nav.wind.components_dx(coords);
                let e2 = 2.0 * (-nav.conformal_exponent).exp();
                DMatrix::from_fn(n, n, |i, j| {
                    let mut v = 0.0;
                    for s in 0..n {
                        v += dh[j][(i, s)] * w[s] + h[(i, s)] * dw[(s, j)];
                    }
                    e2 * v
                })
            }
            KropinaSource::Constant { .. } => DMatrix::zeros(n, n),
            KropinaSource::Custom { b_dx, .. } => b_dx(coords),
        }
    }

    /// Riemannian length `b^2(x) = a^{ij} b_i b_j`.
    pub fn b_norm2(&self, coords: &DVector<f64>) -> Result<f64> {
        let a_inv = self
            .a(coords)
            .into_matrix()
            .try_inverse()
            .ok_or_else(|| Error::Validation("a(x) is singular".into()))?;
        let b = self.b(coords);
        Ok((a_inv * &b).dot(&b))
    }
}

/// Builds the Kropina data `a = e^{-k} h`, `b = 2 e^{-k} W^flat` of a
/// navigation pair.
pub fn nav_to_kropina(nav: &NavigationData) -> Result<KropinaData> {
    let residual = nav.wind_unit_residual();
    if residual > WIND_UNIT_GATE {
        return Err(Error::Validation(format!(
            "wind is not unit length: max |h(W,W) - 1| = {residual:.3e}"
        )));
    }
    Ok(KropinaData { source: KropinaSource::Nav(nav.clone()) })
}

/// Recovers navigation data from Kropina data via `k = log(4 / b^2)`,
/// `h = e^k a`, `W_i = e^k b_i / 2`.
pub fn kropina_to_nav(kd: &KropinaData) -> Result<NavigationData> {
    match &kd.source {
        KropinaSource::Nav(nav) => {
            // The reconstruction is the identity on navigation-backed data;
            // verify it pointwise before handing the structure back.
            let mut max_dev: f64 = 0.0;
            for x in probe_points(&nav.model, 8) {
                let (h, w, k) = kropina_to_nav_at(&kd.a(&x.coords), &kd.b(&x.coords))?;
                let h0 = nav.model.metric_raw(&x.coords);
                let w0 = nav.wind.components(&x.coords);
                max_dev = max_dev
                    .max((h.matrix() - h0.matrix()).amax())
                    .max((&w - &w0).amax())
                    .max((k - nav.conformal_exponent).abs());
            }
            if max_dev > 1e-10 {
                return Err(Error::Validation(format!(
                    "navigation roundtrip deviates by {max_dev:.3e}"
                )));
            }
            Ok(nav.clone())
        }
        KropinaSource::Constant { a, b } => {
            let (h, w_up, k) = kropina_to_nav_at(a, b)?;
            NavigationData::new(
                RiemannianModel::flat(h)?,
                VectorFieldModel::constant(w_up),
                k,
            )
        }
        KropinaSource::Custom { .. } => Err(Error::InvalidInput(
            "custom Kropina data has no chart model; use kropina_to_nav_at pointwise".into(),
        )),
    }
}

/// The navigation form of the metric, `F = |y|_h^2 / (2 h(y, W))`.
pub fn nav_f(nav: &NavigationData, x: &ChartPoint, y: &DVector<f64>) -> Result<f64> {
    nav.model.check_point(x)?;
    if y.len() != nav.dim() {
        return Err(Error::InvalidInput("direction dimension mismatch".into()));
    }
    let h = nav.model.metric_raw(&x.coords);
    let w = nav.wind.components(&x.coords);
    let hy = h.matrix() * y;
    let y2 = hy.dot(y);
    let yw = hy.dot(&w);
    if yw <= 0.0 {
        return Err(Error::OutsideDomain { beta: yw, alpha: y2.max(0.0).sqrt() });
    }
    Ok(y2 / (2.0 * yw))
}

/// Translates an `h`-unit vector `u` to the indicatrix point `y = W + u`.
///
/// Errors when `u` is not `h`-unit or when `y` falls outside the conic
/// domain (the limit `u = -W`, where the indicatrix meets the origin).
pub fn indicatrix_point(
    nav: &NavigationData,
    x: &ChartPoint,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    nav.model.check_point(x)?;
    let h = nav.model.metric_raw(&x.coords);
    let w = nav.wind.components(&x.coords);
    let unit_dev = ((h.matrix() * u).dot(u) - 1.0).abs();
    if unit_dev > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "u is not h-unit: |h(u,u) - 1| = {unit_dev:.3e}"
        )));
    }
    let y = &w + u;
    let hy = h.matrix() * &y;
    let yw = hy.dot(&w);
    if yw <= 1e-9 {
        return Err(Error::OutsideDomain { beta: yw, alpha: hy.dot(&y).max(0.0).sqrt() });
    }
    Ok(y)
}

/// Draws `count` indicatrix samples `y = W + u`, `|u|_h = 1`, rejecting the
/// upwind limit.
pub fn indicatrix_samples(
    nav: &NavigationData,
    x: &ChartPoint,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    nav.model.check_point(x)?;
    let h = nav.model.metric_raw(&x.coords);
    let mut rng = crate::sample::rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count {
            return Err(Error::SamplingFailure("indicatrix rejection loop stalled".into()));
        }
        let v = crate::sample::sample_direction(nav.dim(), &mut rng);
        let norm = (h.matrix() * &v).dot(&v).sqrt();
        let u = v / norm;
        match indicatrix_point(nav, x, &u) {
            Ok(y) => out.push(y),
            Err(Error::OutsideDomain { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn default_hemisphere() -> Hemisphere {
    Hemisphere::East
}

/// Serializable description of catalog navigation data: the model tag plus
/// its constant parameters. This is the JSON surface for navigation data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NavSpec {
    Euclidean {
        n: usize,
        /// Wind direction; must be a unit vector.
        c: Vec<f64>,
        #[serde(default)]
        k_exponent: f64,
    },
    SphereProjective {
        m: usize,
        curvature: f64,
        #[serde(default = "default_hemisphere")]
        hemisphere: Hemisphere,
        /// Skew matrix `Q`, row-major, of dimension `2m - 1`.
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        #[serde(default)]
        k_exponent: f64,
    },
    S3Chart {
        #[serde(default)]
        k_exponent: f64,
    },
    Cylinder {
        #[serde(default)]
        k_exponent: f64,
    },
    Torus {
        #[serde(default)]
        k_exponent: f64,
    },
}

impl NavSpec {
    pub fn build(&self) -> Result<NavigationData> {
        match self {
            NavSpec::Euclidean { n, c, k_exponent } => {
                if c.len() != *n {
                    return Err(Error::InvalidInput("c must have length n".into()));
                }
                NavigationData::new(
                    RiemannianModel::euclidean(*n),
                    VectorFieldModel::constant(DVector::from_vec(c.clone())),
                    *k_exponent,
                )
            }
            NavSpec::SphereProjective { m, curvature, hemisphere, q, c, k_exponent } => {
                let dim = 2 * m - 1;
                if q.len() != dim || q.iter().any(|row| row.len() != dim) || c.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "sphere parameters must have dimension {dim}"
                    )));
                }
                let qm = DMatrix::from_fn(dim, dim, |i, j| q[i][j]);
                let q = SkewMatrix::from_matrix(qm)
                    .map_err(|_| Error::Validation("Q must be exactly skew-symmetric".into()))?;
                let model = RiemannianModel::sphere_projective(*m, *curvature, *hemisphere)?;
                let wind = VectorFieldModel::SphereKilling {
                    q,
                    c: DVector::from_vec(c.clone()),
                    curvature: *curvature,
                    western: matches!(hemisphere, Hemisphere::West),
                };
                NavigationData::new(model, wind, *k_exponent)
            }
            NavSpec::S3Chart { k_exponent } => {
                let model = RiemannianModel::s3_chart();
                let wind = model.canonical_wind().expect("catalog wind");
                NavigationData::new(model, wind, *k_exponent)
            }
            NavSpec::Cylinder { k_exponent } => {
                let model = RiemannianModel::cylinder();
                let wind = model.canonical_wind().expect("catalog wind");
                NavigationData::new(model, wind, *k_exponent)
            }
            NavSpec::Torus { k_exponent } => {
                let model = RiemannianModel::torus();
                let wind = model.canonical_wind().expect("catalog wind");
                NavigationData::new(model, wind, *k_exponent)
            }
        }
    }
}
