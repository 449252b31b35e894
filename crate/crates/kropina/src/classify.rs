//! Constructors and verifiers for the classification of constant-flag-
//! curvature Kropina structures.
//!
//! The two model families are the flat space with a constant unit wind and
//! the odd sphere `S^{2m-1}` with the Killing family
//! `W^i = Q^i_r x^r + C^i + (x.C) x^i` constrained by
//!
//! ```text
//! Q_jr Q^j_s + C_r C_s = K delta_rs,   Q_jr C^j = 0,   C.C = K.
//! ```
//!
//! Moduli classes are read off the block normal form of the assembled
//! skew matrix `Omega = [0 C^t; -C -Q]`, and projective flatness reduces
//! to parallelism of the wind.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::conic::{ConicKropinaMetric, FdConfig, FlagFrame};
use crate::error::{Error, Result};
use crate::linalg::{skew_normal_form, SkewMatrix, SkewNormalForm};
use crate::navigation::{kropina_to_nav_at, nav_to_kropina, KropinaData, NavigationData};
use crate::riemannian::{
    covariant_derivative, killing_report, sectional_curvature, Hemisphere, RiemannianModel,
    VectorFieldModel,
};
use crate::sample::{rng_from_seed, sample_direction, sample_point};

/// The data of a unit Killing field on `S^{2m-1}` of curvature `K`, plus
/// the assembled `2m x 2m` skew matrix `Omega`.
#[derive(Debug, Clone)]
pub struct SphereKillingParams {
    pub m: usize,
    pub curvature: f64,
    pub q: SkewMatrix,
    pub c: DVector<f64>,
    omega: SkewMatrix,
}

const PARAM_TOL: f64 = 1e-10;

impl SphereKillingParams {
    pub fn new(m: usize, curvature: f64, q: SkewMatrix, c: DVector<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::Validation("sphere family needs m >= 2".into()));
        }
        if !curvature.is_finite() || curvature <= 0.0 {
            return Err(Error::Validation("curvature must be positive".into()));
        }
        let n = 2 * m - 1;
        if q.dim() != n || c.len() != n {
            return Err(Error::InvalidInput(format!("Q and C must have dimension {n}")));
        }

        // C.C = K
        let cc = c.dot(&c);
        if (cc - curvature).abs() > PARAM_TOL * curvature.max(1.0) {
            return Err(Error::Validation(format!(
                "C.C = {cc:.12} violates C.C = K = {curvature:.12}"
            )));
        }
        // Q_jr C^j = 0
        let qc = (q.matrix().transpose() * &c).amax();
        if qc > PARAM_TOL * curvature.max(1.0) {
            return Err(Error::Validation(format!("Q_jr C^j = 0 violated by {qc:.3e}")));
        }
        // Q_jr Q^j_s + C_r C_s = K delta_rs
        let lhs = q.matrix().transpose() * q.matrix() + &c * c.transpose();
        let dev = (&lhs - DMatrix::identity(n, n) * curvature).amax();
        if dev > PARAM_TOL * curvature.max(1.0) {
            return Err(Error::Validation(format!(
                "Q_jr Q^j_s + C_r C_s = K delta_rs violated by {dev:.3e}"
            )));
        }

        let omega = assemble_omega(&q, &c);
        Ok(SphereKillingParams { m, curvature, q, c, omega })
    }

    /// The canonical representative: `C = sqrt(K) e_1`,
    /// `Q = sqrt(K) (0 (+) J (+) ... (+) J)`.
    pub fn canonical(m: usize, curvature: f64) -> Result<Self> {
        let n = 2 * m - 1;
        let root = curvature.sqrt();
        let q = SkewMatrix::from_fn(n, |i, j| {
            // J blocks on indices (1,2), (3,4), ... of the Q slot.
            if i >= 1 && j == i + 1 && (i % 2 == 1) {
                root
            } else {
                0.0
            }
        });
        let mut c = DVector::zeros(n);
        c[0] = root;
        SphereKillingParams::new(m, curvature, q, c)
    }

    /// Reads `(Q, C)` off an assembled `Omega` and validates.
    pub fn from_omega(m: usize, curvature: f64, omega: &SkewMatrix) -> Result<Self> {
        if omega.dim() != 2 * m {
            return Err(Error::InvalidInput(format!("Omega must have dimension {}", 2 * m)));
        }
        let n = 2 * m - 1;
        let c = DVector::from_fn(n, |i, _| omega[(0, i + 1)]);
        let q = SkewMatrix::from_fn(n, |i, j| -omega[(i + 1, j + 1)]);
        SphereKillingParams::new(m, curvature, q, c)
    }

    /// The assembled block matrix `Omega = [0 C^t; -C -Q]`.
    pub fn omega(&self) -> &SkewMatrix {
        &self.omega
    }

    pub fn dim(&self) -> usize {
        2 * self.m - 1
    }

    /// A fresh valid parameter set from the adjoint action of a random
    /// orthogonal matrix on `Omega`.
    pub fn random_conjugate(&self, rng: &mut impl Rng) -> Result<Self> {
        let g = crate::sample::random_orthogonal(2 * self.m, rng);
        let omega = self.omega.conjugate(&g);
        SphereKillingParams::from_omega(self.m, self.curvature, &omega)
    }

    pub fn model(&self, hemisphere: Hemisphere) -> Result<RiemannianModel> {
        RiemannianModel::sphere_projective(self.m, self.curvature, hemisphere)
    }
}

fn assemble_omega(q: &SkewMatrix, c: &DVector<f64>) -> SkewMatrix {
    let n = q.dim();
    SkewMatrix::from_fn(n + 1, |i, j| {
        if i == 0 {
            c[j - 1]
        } else {
            -q[(i - 1, j - 1)]
        }
    })
}

/// Unit constant wind on flat space; rejects non-unit directions.
pub fn euclidean_killing(c: &DVector<f64>) -> Result<VectorFieldModel> {
    let dev = (c.norm() - 1.0).abs();
    if dev > 1e-12 {
        return Err(Error::Validation(format!(
            "C must be a unit vector: | |C| - 1 | = {dev:.3e}"
        )));
    }
    Ok(VectorFieldModel::constant(c.clone()))
}

/// The eastern-chart Killing field of a validated parameter set.
pub fn sphere_killing(params: &SphereKillingParams) -> VectorFieldModel {
    VectorFieldModel::SphereKilling {
        q: params.q.clone(),
        c: params.c.clone(),
        curvature: params.curvature,
        western: false,
    }
}

/// The western-hemisphere extension `W = Qx - C - (x.C) x` as a field.
pub fn western_field(params: &SphereKillingParams) -> VectorFieldModel {
    VectorFieldModel::SphereKilling {
        q: params.q.clone(),
        c: params.c.clone(),
        curvature: params.curvature,
        western: true,
    }
}

/// Evaluates the western extension at one chart point.
pub fn western_extension(params: &SphereKillingParams, x: &DVector<f64>) -> DVector<f64> {
    western_field(params).components(x)
}

/// Navigation data of the eastern sphere family.
pub fn sphere_navigation(params: &SphereKillingParams) -> Result<NavigationData> {
    NavigationData::new(params.model(Hemisphere::East)?, sphere_killing(params), 0.0)
}

/// Moduli representative of a sphere parameter set: the block normal form
/// of its `Omega`; on valid parameters every block equals `sqrt(K)`.
pub fn moduli_normal_form(params: &SphereKillingParams) -> Result<SkewNormalForm> {
    skew_normal_form(params.omega())
}

/// Max deviation of the normal-form blocks from `sqrt(K)`.
pub fn moduli_deviation(params: &SphereKillingParams) -> Result<f64> {
    let form = moduli_normal_form(params)?;
    let root = params.curvature.sqrt();
    Ok(form
        .blocks
        .iter()
        .map(|a| (a - root).abs())
        .fold(0.0, f64::max))
}

/// Moduli representative of the flat family: rotates the unit wind onto
/// `e_1` with an explicit special-orthogonal witness, landing on the
/// single point `(1, 0, ..., 0)`.
pub fn euclidean_moduli(c: &DVector<f64>) -> Result<Vec<f64>> {
    euclidean_killing(c)?;
    let n = c.len();
    let mut e1 = DVector::zeros(n);
    e1[0] = 1.0;
    if n < 2 {
        return Err(Error::InvalidInput("the flat family needs dimension >= 2".into()));
    }
    let v = c - &e1;
    let rot = if v.norm() < 1e-14 {
        DMatrix::identity(n, n)
    } else {
        // Householder reflection swapping C and e_1; flipping an output
        // axis orthogonal to e_1 restores det = +1 without moving the
        // image of C.
        let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
        let mut r = h;
        for col in 0..n {
            r[(n - 1, col)] = -r[(n - 1, col)];
        }
        r
    };
    let ortho = (rot.transpose() * &rot - DMatrix::identity(n, n)).amax();
    let maps = (&rot * c - &e1).amax();
    if ortho > 1e-12 || maps > 1e-12 || (n > 1 && rot.determinant() < 0.0) {
        return Err(Error::Validation(format!(
            "orbit witness failed: orthogonality {ortho:.3e}, image deviation {maps:.3e}"
        )));
    }
    let mut point = vec![0.0; n];
    point[0] = 1.0;
    Ok(point)
}

/// Tolerances of the constant-flag-curvature checker.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CcTolerances {
    pub killing: f64,
    pub sectional: f64,
    /// Relative flag tolerance for `K != 0`.
    pub flag_rel: f64,
    /// Absolute flag tolerance for `K = 0`.
    pub flag_abs_flat: f64,
}

impl Default for CcTolerances {
    fn default() -> Self {
        CcTolerances { killing: 1e-8, sectional: 1e-4, flag_rel: 1e-3, flag_abs_flat: 1e-5 }
    }
}

impl CcTolerances {
    pub fn flag_tolerance(&self, curvature: f64) -> f64 {
        if curvature == 0.0 {
            self.flag_abs_flat
        } else {
            self.flag_rel * curvature.abs()
        }
    }
}

/// Outcome of [`cc_check`].
#[derive(Debug, Clone, Serialize)]
pub struct CcReport {
    pub expected_curvature: f64,
    pub killing_residual: f64,
    pub unit_residual: f64,
    pub sectional_max_dev: f64,
    pub flag_max_dev: f64,
    /// Killing + constant sectional curvature: the theorem's hypotheses.
    pub is_cc: bool,
    /// Flag curvature equals `K` at the sampled flags: the conclusion.
    pub flag_confirmed: bool,
    pub seed: u64,
    pub n_samples: usize,
    pub tolerances: CcTolerances,
}

impl CcReport {
    pub fn passed(&self) -> bool {
        self.is_cc && self.flag_confirmed
    }

    pub fn check_report(&self) -> CheckReport {
        let mut residuals = BTreeMap::new();
        residuals.insert("killing_residual".into(), self.killing_residual);
        residuals.insert("unit_residual".into(), self.unit_residual);
        residuals.insert("sectional_max_dev".into(), self.sectional_max_dev);
        residuals.insert("flag_curvature_max_dev".into(), self.flag_max_dev);
        let mut tolerances = BTreeMap::new();
        tolerances.insert("killing".into(), self.tolerances.killing);
        tolerances.insert("sectional".into(), self.tolerances.sectional);
        tolerances.insert("flag".into(), self.tolerances.flag_tolerance(self.expected_curvature));
        CheckReport {
            check: "cc".into(),
            residuals,
            decision: self.passed(),
            seed: self.seed,
            n_samples: self.n_samples,
            tolerances,
        }
    }
}

/// The JSON report schema shared by the verifiers.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub residuals: BTreeMap<String, f64>,
    pub decision: bool,
    pub seed: u64,
    pub n_samples: usize,
    pub tolerances: BTreeMap<String, f64>,
}

/// Samples an admissible flag of the metric at `x`, with a relative margin
/// that keeps the curvature stencils comfortably inside the cone.
fn sample_admissible_flag(
    metric: &ConicKropinaMetric,
    x: &crate::riemannian::ChartPoint,
    rng: &mut impl Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = metric.dim();
    for _ in 0..100 {
        let y = crate::sample::admissible_direction(metric.data(), &x.coords, 0.05, rng, 10_000)?;
        let t = sample_direction(n, rng);
        let gram = y.norm_squared() * t.norm_squared() - y.dot(&t).powi(2);
        if gram <= 1e-6 * y.norm_squared() * t.norm_squared() {
            continue;
        }
        return Ok((y, t));
    }
    Err(Error::SamplingFailure("no usable transverse edge found".into()))
}

/// Verifies the constant-flag-curvature characterization on navigation
/// data: the wind must be a unit Killing field, the base of constant
/// sectional curvature `K`, and then the flag curvature equals `K`.
pub fn cc_check(
    nav: &NavigationData,
    expected_curvature: f64,
    n_samples: usize,
    seed: u64,
) -> Result<CcReport> {
    cc_check_with(
        nav,
        expected_curvature,
        n_samples,
        seed,
        CcTolerances::default(),
        FdConfig::default(),
    )
}

pub fn cc_check_with(
    nav: &NavigationData,
    expected_curvature: f64,
    n_samples: usize,
    seed: u64,
    tolerances: CcTolerances,
    fd: FdConfig,
) -> Result<CcReport> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = nav.dim();

    // (i) Killing and unit residuals.
    let points: Vec<_> = (0..n_samples).map(|_| sample_point(&nav.model, &mut rng)).collect();
    let killing = killing_report(&nav.model, &nav.wind, &points)?;

    // (ii) Sectional curvature across random planes.
    let mut sectional_dev: f64 = 0.0;
    for x in &points {
        loop {
            let u = sample_direction(n, &mut rng);
            let v = sample_direction(n, &mut rng);
            match sectional_curvature(&nav.model, x, &u, &v) {
                Ok(k) => {
                    sectional_dev = sectional_dev.max((k - expected_curvature).abs());
                    break;
                }
                Err(Error::DegenerateFlag(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    // (iii) Flag curvature across random admissible flags.
    let metric = ConicKropinaMetric::with_fd(nav_to_kropina(nav)?, fd);
    let mut flag_dev: f64 = 0.0;
    for x in &points {
        let (y, t) = sample_admissible_flag(&metric, x, &mut rng)?;
        let frame = FlagFrame::new(&metric, x.clone(), y, t)?;
        let k = metric.flag_curvature(&frame)?;
        flag_dev = flag_dev.max((k - expected_curvature).abs());
    }

    let is_cc = killing.max_killing_residual < tolerances.killing
        && killing.max_unit_residual < tolerances.killing.max(1e-8)
        && sectional_dev < tolerances.sectional;
    let flag_confirmed = flag_dev < tolerances.flag_tolerance(expected_curvature);
    Ok(CcReport {
        expected_curvature,
        killing_residual: killing.max_killing_residual,
        unit_residual: killing.max_unit_residual,
        sectional_max_dev: sectional_dev,
        flag_max_dev: flag_dev,
        is_cc,
        flag_confirmed,
        seed,
        n_samples,
        tolerances,
    })
}

type CoordMapFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type ScalarFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A candidate conic isometry: a coordinate map with its analytic
/// Jacobian and the conformal bookkeeping function `tau`.
pub struct IsometryWitness {
    dim: usize,
    map: Box<CoordMapFn>,
    jacobian: Box<JacobianFn>,
    tau: Box<ScalarFn>,
}

impl fmt::Debug for IsometryWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IsometryWitness").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl IsometryWitness {
    pub fn new(
        dim: usize,
        map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        tau: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        IsometryWitness { dim, map: Box::new(map), jacobian: Box::new(jacobian), tau: Box::new(tau) }
    }

    pub fn identity(dim: usize) -> Self {
        IsometryWitness::new(
            dim,
            |x| x.clone(),
            move |x| DMatrix::identity(x.len(), x.len()),
            |_| 0.0,
        )
    }

    /// A linear map with constant `tau`.
    pub fn linear_with_tau(matrix: DMatrix<f64>, tau: f64) -> Self {
        let dim = matrix.nrows();
        let jac = matrix.clone();
        IsometryWitness::new(dim, move |x| &matrix * x, move |_| jac.clone(), move |_| tau)
    }

    pub fn linear(matrix: DMatrix<f64>) -> Self {
        IsometryWitness::linear_with_tau(matrix, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(x)
    }

    pub fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian)(x)
    }

    pub fn tau_at(&self, x: &DVector<f64>) -> f64 {
        (self.tau)(x)
    }
}

/// Residuals of the three equivalent formulations of a conic isometry.
#[derive(Debug, Clone, Serialize)]
pub struct IsometryCheckReport {
    /// (i) `F_2(phi(x), Dphi y) = F_1(x, y)`.
    pub f_pullback_residual: f64,
    /// (ii) `phi* alpha_2 = e^{tau/2} alpha_1`.
    pub alpha_residual: f64,
    /// (ii) `phi* beta_2 = e^{tau} beta_1`.
    pub beta_residual: f64,
    /// `tau = log(phi*(b_2)^2 / (b_1)^2)`.
    pub tau_residual: f64,
    /// (iii) `phi* h_2 = h_1`.
    pub metric_residual: f64,
    /// (iii) `phi_* W_1 = W_2`.
    pub wind_residual: f64,
    /// Every admissible sampled direction maps into the target cone.
    pub domain_preserved: bool,
    pub passes: bool,
}

pub const ISOMETRY_TOL: f64 = 1e-8;

impl IsometryCheckReport {
    /// Pass flags of the three equivalent conditions at `tol`.
    pub fn condition_flags(&self, tol: f64) -> (bool, bool, bool) {
        (
            self.f_pullback_residual < tol && self.domain_preserved,
            self.alpha_residual < tol && self.beta_residual < tol && self.tau_residual < tol,
            self.metric_residual < tol && self.wind_residual < tol,
        )
    }
}

/// Checks a witness map between two Kropina structures against all three
/// equivalent isometry conditions at the sampled base points.
pub fn conic_isometry_check(
    witness: &IsometryWitness,
    kd1: &KropinaData,
    kd2: &KropinaData,
    points: &[DVector<f64>],
    seed: u64,
) -> Result<IsometryCheckReport> {
    if points.is_empty() {
        return Err(Error::InvalidInput("need at least one sample point".into()));
    }
    let n = kd1.dim();
    if witness.dim() != n || kd2.dim() != n {
        return Err(Error::InvalidInput("witness/data dimension mismatch".into()));
    }
    let mut rng = rng_from_seed(seed);

    let mut f_res: f64 = 0.0;
    let mut alpha_res: f64 = 0.0;
    let mut beta_res: f64 = 0.0;
    let mut tau_res: f64 = 0.0;
    let mut metric_res: f64 = 0.0;
    let mut wind_res: f64 = 0.0;
    let mut domain_preserved = true;

    for x in points {
        if !kd1.contains_coords(x) {
            return Err(Error::OutsideChart("sample point invalid for the source data".into()));
        }
        let phi_x = witness.apply(x);
        if !kd2.contains_coords(&phi_x) {
            return Err(Error::OutsideChart("mapped point invalid for the target data".into()));
        }
        let jac = witness.jacobian_at(x);
        let det = jac.determinant();
        if det.abs() < 1e-12 {
            return Err(Error::InvalidInput(format!("singular Jacobian, det = {det:.3e}")));
        }
        let tau = witness.tau_at(x);

        let a1 = kd1.a(x).into_matrix();
        let b1 = kd1.b(x);
        let a2 = kd2.a(&phi_x).into_matrix();
        let b2 = kd2.b(&phi_x);

        // tau bookkeeping from the b-lengths.
        let b1sq = kd1.b_norm2(x)?;
        let b2sq = kd2.b_norm2(&phi_x)?;
        tau_res = tau_res.max((tau - (b2sq / b1sq).ln()).abs());

        // (iii) pulled-back navigation data.
        let (h1, w1, _k1) = kropina_to_nav_at(&crate::linalg::SymMatrix::symmetrize(&a1), &b1)?;
        let (h2, w2, _k2) = kropina_to_nav_at(&crate::linalg::SymMatrix::symmetrize(&a2), &b2)?;
        let pulled = jac.transpose() * h2.matrix() * &jac;
        metric_res = metric_res.max((&pulled - h1.matrix()).amax() / (1.0 + h1.matrix().amax()));
        let pushed = &jac * &w1;
        wind_res = wind_res.max((&pushed - &w2).amax() / (1.0 + w2.amax()));

        // (i) and (ii) along sampled directions admissible for kd1.
        let e_tau = tau.exp();
        for _ in 0..8 {
            let y = {
                let mut y;
                loop {
                    y = sample_direction(n, &mut rng);
                    let alpha = (&a1 * &y).dot(&y).max(0.0).sqrt();
                    if b1.dot(&y) > 0.05 * alpha {
                        break;
                    }
                }
                y
            };
            let dy = &jac * &y;
            let alpha1_sq = (&a1 * &y).dot(&y);
            let beta1 = b1.dot(&y);
            let alpha2_sq = (&a2 * &dy).dot(&dy);
            let beta2 = b2.dot(&dy);
            if beta2 <= 0.0 {
                domain_preserved = false;
                continue;
            }
            let f1 = alpha1_sq / beta1;
            let f2 = alpha2_sq / beta2;
            f_res = f_res.max((f2 - f1).abs() / (1.0 + f1.abs()));
            alpha_res = alpha_res
                .max((alpha2_sq.sqrt() - e_tau.sqrt() * alpha1_sq.sqrt()).abs()
                    / (1.0 + alpha1_sq.sqrt()));
            beta_res = beta_res.max((beta2 - e_tau * beta1).abs() / (1.0 + beta1.abs()));
        }
    }

    let passes = domain_preserved
        && f_res < ISOMETRY_TOL
        && alpha_res < ISOMETRY_TOL
        && beta_res < ISOMETRY_TOL
        && tau_res < ISOMETRY_TOL
        && metric_res < ISOMETRY_TOL
        && wind_res < ISOMETRY_TOL;
    Ok(IsometryCheckReport {
        f_pullback_residual: f_res,
        alpha_residual: alpha_res,
        beta_residual: beta_res,
        tau_residual: tau_res,
        metric_residual: metric_res,
        wind_residual: wind_res,
        domain_preserved,
        passes,
    })
}

/// Projective-flatness decision data for navigation input.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectiveFlatnessReport {
    /// Max `|W_{i||j}|` over the sample.
    pub parallel_residual: f64,
    /// Whether the base metric is projectively flat (true for the whole
    /// constant-curvature catalog, by the classical Beltrami theorem).
    pub riemann_proj_flat: bool,
    /// Max `|S_ij - (W_i S_j - W_j S_i)|` over the sample.
    pub s_condition_residual: f64,
    /// Max Hamel defect over sampled admissible directions.
    pub hamel_residual: f64,
    pub decision: bool,
    pub seed: u64,
    pub n_samples: usize,
}

pub const PARALLEL_TOL: f64 = 1e-8;

impl ProjectiveFlatnessReport {
    pub fn check_report(&self) -> CheckReport {
        let mut residuals = BTreeMap::new();
        residuals.insert("parallel_residual".into(), self.parallel_residual);
        residuals.insert("s_condition_residual".into(), self.s_condition_residual);
        residuals.insert("hamel_residual".into(), self.hamel_residual);
        let mut tolerances = BTreeMap::new();
        tolerances.insert("parallel".into(), PARALLEL_TOL);
        CheckReport {
            check: "projective_flatness".into(),
            residuals,
            decision: self.decision,
            seed: self.seed,
            n_samples: self.n_samples,
            tolerances,
        }
    }
}

/// Decides projective flatness of a UK-Kropina structure: the wind must be
/// parallel and the base projectively flat. The Lemma-style quantities
/// (`S_ij` condition, Hamel defect) are reported as diagnostics.
pub fn projective_flatness_decision(
    nav: &NavigationData,
    n_samples: usize,
    seed: u64,
) -> Result<ProjectiveFlatnessReport> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = nav.dim();
    let metric = ConicKropinaMetric::new(nav_to_kropina(nav)?);

    let mut parallel: f64 = 0.0;
    let mut s_cond: f64 = 0.0;
    let mut hamel: f64 = 0.0;
    for _ in 0..n_samples {
        let x = sample_point(&nav.model, &mut rng);
        let grad = covariant_derivative(&nav.model, &nav.wind, &x)?;
        parallel = parallel.max(grad.amax());

        let h = nav.model.metric_raw(&x.coords);
        let w_up = nav.wind.components(&x.coords);
        let w_low = h.matrix() * &w_up;
        let s_ij = DMatrix::from_fn(n, n, |i, j| 0.5 * (grad[(i, j)] - grad[(j, i)]));
        let s_i = DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for r in 0..n {
                acc += w_up[r] * s_ij[(r, i)];
            }
            acc
        });
        for i in 0..n {
            for j in 0..n {
                let target = w_low[i] * s_i[j] - w_low[j] * s_i[i];
                s_cond = s_cond.max((s_ij[(i, j)] - target).abs());
            }
        }

        let (y, _) = sample_admissible_flag(&metric, &x, &mut rng)?;
        hamel = hamel.max(metric.hamel_residual(&x, &y)?);
    }

    // Every catalog base is a constant-curvature chart, hence projectively
    // flat as a Riemannian space.
    let riemann_proj_flat = true;
    let decision = riemann_proj_flat && parallel < PARALLEL_TOL;
    Ok(ProjectiveFlatnessReport {
        parallel_residual: parallel,
        riemann_proj_flat,
        s_condition_residual: s_cond,
        hamel_residual: hamel,
        decision,
        seed,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::NavSpec;
    use approx::assert_abs_diff_eq;

    fn seed_params(curvature: f64) -> SphereKillingParams {
        SphereKillingParams::canonical(2, curvature).unwrap()
    }

    #[test]
    fn euclidean_killing_gate() {
        assert!(euclidean_killing(&DVector::from_vec(vec![1.0, 0.0])).is_ok());
        assert!(euclidean_killing(&DVector::from_vec(vec![0.0, 0.0, 1.0])).is_ok());
        assert!(euclidean_killing(&DVector::from_vec(vec![0.6, 0.8])).is_ok());
        assert!(euclidean_killing(&DVector::from_vec(vec![3.0, 4.0])).is_err());
    }

    #[test]
    fn sphere_params_validation() {
        // The canonical m = 2 seed satisfies the three constraints.
        let p = seed_params(1.0);
        assert_abs_diff_eq!(p.c.dot(&p.c), 1.0, epsilon = 1e-14);

        // C.C = 4 != K = 1 is rejected with the named identity.
        let bad = SphereKillingParams::new(
            2,
            1.0,
            p.q.clone(),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
        );
        match bad {
            Err(Error::Validation(msg)) => assert!(msg.contains("C.C"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }

        // The scaled seed is valid for K = 4.
        let p4 = seed_params(4.0);
        assert_abs_diff_eq!(p4.c[0], 2.0, epsilon = 1e-14);

        // Omega block layout.
        let om = p.omega();
        assert_abs_diff_eq!(om[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(om[(1, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(om[(2, 3)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn sphere_killing_field_residuals_and_lowered_form() {
        let p = seed_params(1.0);
        let model = p.model(Hemisphere::East).unwrap();
        let field = sphere_killing(&p);
        let mut rng = rng_from_seed(2);
        let pts: Vec<_> = (0..30).map(|_| sample_point(&model, &mut rng)).collect();
        let rep = killing_report(&model, &field, &pts).unwrap();
        assert!(rep.max_killing_residual < 1e-9);
        assert!(rep.max_unit_residual < 1e-9);

        // W_i = (Q_ir x^r + C_i) / (K (1 + x.x)).
        for x in &pts {
            let h = model.metric_raw(&x.coords);
            let w_low = h.matrix() * field.components(&x.coords);
            let s = 1.0 + x.coords.dot(&x.coords);
            let qx = p.q.matrix() * &x.coords;
            for i in 0..3 {
                let expected = (qx[i] + p.c[i]) / (p.curvature * s);
                assert_abs_diff_eq!(w_low[i], expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn western_extension_values() {
        let p = seed_params(1.0);
        let w0 = western_extension(&p, &DVector::zeros(3));
        assert_abs_diff_eq!(w0[0], -1.0, epsilon = 1e-15);

        let model = p.model(Hemisphere::West).unwrap();
        let field = western_field(&p);
        let mut rng = rng_from_seed(3);
        let pts: Vec<_> = (0..25).map(|_| sample_point(&model, &mut rng)).collect();
        let rep = killing_report(&model, &field, &pts).unwrap();
        assert!(rep.max_killing_residual < 1e-9);
        assert!(rep.max_unit_residual < 1e-9);
    }

    #[test]
    fn cc_check_flat_and_sphere() {
        let nav = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let rep = cc_check(&nav, 0.0, 20, 7).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.flag_max_dev < 1e-5);

        let nav = sphere_navigation(&seed_params(1.0)).unwrap();
        let rep = cc_check(&nav, 1.0, 15, 7).unwrap();
        assert!(rep.passed(), "{rep:?}");

        let nav = NavSpec::Cylinder { k_exponent: 0.0 }.build().unwrap();
        let rep = cc_check(&nav, 0.0, 20, 7).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.flag_max_dev < 1e-5);

        // The S^3 chart with the rotation wind is the unit-curvature
        // case; its angular coordinates inflate the x-scaled step, so the
        // extrapolated differences are needed to hit the flag tolerance.
        let nav = NavSpec::S3Chart { k_exponent: 0.0 }.build().unwrap();
        let fd = FdConfig { richardson: true, ..FdConfig::default() };
        let rep = cc_check_with(&nav, 1.0, 10, 7, CcTolerances::default(), fd).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn cc_check_wrong_curvature_fails() {
        let nav = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let rep = cc_check(&nav, 1.0, 10, 7).unwrap();
        assert!(!rep.passed());
        assert!(rep.sectional_max_dev > 0.5);
    }

    #[test]
    fn moduli_single_point() {
        for curvature in [1.0, 4.0] {
            let p = seed_params(curvature);
            assert!(moduli_deviation(&p).unwrap() < 1e-10);

            let mut rng = rng_from_seed(11);
            for _ in 0..20 {
                let conj = p.random_conjugate(&mut rng).unwrap();
                assert!(moduli_deviation(&conj).unwrap() < 1e-9);
            }
        }
        // m = 3 family.
        let p = SphereKillingParams::canonical(3, 1.0).unwrap();
        let mut rng = rng_from_seed(13);
        for _ in 0..10 {
            let conj = p.random_conjugate(&mut rng).unwrap();
            let form = moduli_normal_form(&conj).unwrap();
            assert_eq!(form.blocks.len(), 3);
            assert!(moduli_deviation(&conj).unwrap() < 1e-9);
        }
    }

    #[test]
    fn euclidean_moduli_orbit() {
        let p = euclidean_moduli(&DVector::from_vec(vec![0.6, 0.8])).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        let p = euclidean_moduli(&DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert!(euclidean_moduli(&DVector::from_vec(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn isometry_identity_and_rotation() {
        let nav1 = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let kd1 = nav_to_kropina(&nav1).unwrap();

        let rep = conic_isometry_check(
            &IsometryWitness::identity(2),
            &kd1,
            &kd1,
            &[DVector::zeros(2), DVector::from_vec(vec![0.4, -1.0])],
            5,
        )
        .unwrap();
        assert!(rep.passes, "{rep:?}");
        assert!(rep.f_pullback_residual < 1e-14);

        // Rotation by pi/4 carries W = (1,0) to (1,1)/sqrt 2.
        let r = std::f64::consts::FRAC_PI_4;
        let rot = DMatrix::from_row_slice(2, 2, &[r.cos(), -r.sin(), r.sin(), r.cos()]);
        let c2 = vec![r.cos(), r.sin()];
        let nav2 =
            NavSpec::Euclidean { n: 2, c: c2, k_exponent: 0.0 }.build().unwrap();
        let kd2 = nav_to_kropina(&nav2).unwrap();
        let rep = conic_isometry_check(
            &IsometryWitness::linear(rot),
            &kd1,
            &kd2,
            &[DVector::zeros(2), DVector::from_vec(vec![1.0, 0.3])],
            5,
        )
        .unwrap();
        assert!(rep.passes, "{rep:?}");
    }

    #[test]
    fn isometry_conformal_rescaling() {
        // Same (h, W) presented with exponents k1 = 0 and k2 = log 4; the
        // identity lifts to a conic isometry with tau = k1 - k2.
        let nav1 = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let nav2 = NavSpec::Euclidean {
            n: 2,
            c: vec![1.0, 0.0],
            k_exponent: 4.0_f64.ln(),
        }
        .build()
        .unwrap();
        let kd1 = nav_to_kropina(&nav1).unwrap();
        let kd2 = nav_to_kropina(&nav2).unwrap();
        let tau = -(4.0_f64.ln());
        let witness = IsometryWitness::linear_with_tau(DMatrix::identity(2, 2), tau);
        let rep = conic_isometry_check(
            &witness,
            &kd1,
            &kd2,
            &[DVector::zeros(2), DVector::from_vec(vec![0.9, 0.1])],
            5,
        )
        .unwrap();
        assert!(rep.passes, "{rep:?}");
    }

    #[test]
    fn isometry_conditions_fail_together() {
        // A rotation applied to mismatched winds: all three formulations
        // must fail.
        let nav1 = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let nav2 = NavSpec::Euclidean { n: 2, c: vec![0.0, 1.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let kd1 = nav_to_kropina(&nav1).unwrap();
        let kd2 = nav_to_kropina(&nav2).unwrap();
        let rep = conic_isometry_check(
            &IsometryWitness::identity(2),
            &kd1,
            &kd2,
            &[DVector::from_vec(vec![0.2, 0.2])],
            5,
        )
        .unwrap();
        let (c1, c2, c3) = rep.condition_flags(ISOMETRY_TOL);
        assert!(!c1 && !c2 && !c3, "{rep:?}");
    }

    #[test]
    fn singular_jacobian_witness_is_rejected() {
        let nav = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let kd = nav_to_kropina(&nav).unwrap();
        let witness = IsometryWitness::linear(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 4.0],
        ));
        let res = conic_isometry_check(&witness, &kd, &kd, &[DVector::zeros(2)], 5);
        assert!(matches!(res, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn projective_flatness_dichotomy() {
        let nav = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let rep = projective_flatness_decision(&nav, 20, 3).unwrap();
        assert!(rep.decision);
        assert!(rep.hamel_residual < 1e-6);
        assert!(rep.s_condition_residual < 1e-9);

        let nav = sphere_navigation(&seed_params(1.0)).unwrap();
        let rep = projective_flatness_decision(&nav, 20, 3).unwrap();
        assert!(!rep.decision);
        assert!(rep.parallel_residual > 0.1);
        assert!(rep.hamel_residual > 1e-2);

        let nav = NavSpec::Torus { k_exponent: 0.0 }.build().unwrap();
        let rep = projective_flatness_decision(&nav, 20, 3).unwrap();
        assert!(rep.decision);
        assert!(rep.hamel_residual < 1e-6);
    }

    #[test]
    fn cc_verdicts_transport_along_verified_isometries() {
        // Rotated flat winds give the same CC verdict and curvature.
        let nav1 = NavSpec::Euclidean { n: 2, c: vec![1.0, 0.0], k_exponent: 0.0 }
            .build()
            .unwrap();
        let r = 0.9_f64;
        let rot = DMatrix::from_row_slice(2, 2, &[r.cos(), -r.sin(), r.sin(), r.cos()]);
        let nav2 = NavSpec::Euclidean {
            n: 2,
            c: vec![r.cos(), r.sin()],
            k_exponent: 0.0,
        }
        .build()
        .unwrap();
        let rep = conic_isometry_check(
            &IsometryWitness::linear(rot),
            &nav_to_kropina(&nav1).unwrap(),
            &nav_to_kropina(&nav2).unwrap(),
            &[DVector::zeros(2)],
            6,
        )
        .unwrap();
        assert!(rep.passes);
        let r1 = cc_check(&nav1, 0.0, 10, 21).unwrap();
        let r2 = cc_check(&nav2, 0.0, 10, 21).unwrap();
        assert_eq!(r1.passed(), r2.passed());
        assert!(r1.passed());
    }
}
