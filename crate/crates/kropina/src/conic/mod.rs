//! The conic Finsler evaluation engine for Kropina metrics.
//!
//! All operators live on the conic domain `A_x = { y : b_i(x) y^i > 0 }`.
//! The fundamental tensor and its `x`-partials are closed-form; `y`-
//! derivatives of the spray (nonlinear connection, Berwald coefficients)
//! come from second-order dual numbers, and the `h`-curvature takes
//! central differences of the Berwald coefficients in `x`.

mod generator;
mod scal;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::navigation::KropinaData;
use crate::riemannian::{ChartPoint, RiemannianModel};

pub(crate) use generator::{KropinaGenerator, MetricGenerator, RiemannGenerator};
pub use generator::{CURVATURE_MARGIN, DOMAIN_EPS};

/// Finite-difference configuration for the curvature operators.
///
/// `step_x` scales with `1 + |x|` and drives the `x`-derivatives of the
/// Berwald coefficients; `step_y` scales with `1 + |y|` and drives the
/// first-order `y`-derivatives (the adapted-basis correction and the Hamel
/// mixed term). `richardson` switches on one level of step extrapolation.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub step_x: f64,
    pub step_y: f64,
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step_x: 1e-4, step_y: 1e-5, richardson: false }
    }
}

/// Spray, connection and curvature data at one `(x, y)`.
#[derive(Debug, Clone)]
pub struct CurvatureTensors {
    /// Spray coefficients `G^i`.
    pub spray: DVector<f64>,
    /// Nonlinear connection `N^i_j = dG^i/dy^j`, indexed `(i, j)`.
    pub nonlinear: DMatrix<f64>,
    /// Berwald coefficients `Gamma^i_{jk}`, indexed `[i][(j,k)]`.
    pub berwald: Vec<DMatrix<f64>>,
    /// Berwald `h`-curvature `R_j{}^i{}_{kl}`, indexed `[j][i][(k,l)]`.
    pub curvature: Vec<Vec<DMatrix<f64>>>,
}

impl CurvatureTensors {
    /// Max relative defect of the homogeneity chain
    /// `N^i_j = Gamma^i_{jk} y^k` and `G^i = Gamma^i_{jk} y^j y^k / 2`.
    pub fn consistency_residual(&self, y: &DVector<f64>) -> f64 {
        let n = y.len();
        let scale = 1.0 + self.nonlinear.amax().max(self.spray.amax());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let gy = &self.berwald[i] * y;
            for j in 0..n {
                worst = worst.max((self.nonlinear[(i, j)] - gy[j]).abs() / scale);
            }
            worst = worst.max((self.spray[i] - 0.5 * gy.dot(y)).abs() / scale);
        }
        worst
    }
}

/// A flag: base point, flagpole `y` in the cone, transverse edge, and the
/// derived unit covector/vector pair `l_i = dF/dy^i`, `l^i = y^i / F`.
#[derive(Debug, Clone)]
pub struct FlagFrame {
    pub x: ChartPoint,
    pub flagpole: DVector<f64>,
    pub transverse: DVector<f64>,
    pub l_lower: DVector<f64>,
    pub l_upper: DVector<f64>,
}

impl FlagFrame {
    pub fn new(
        metric: &ConicKropinaMetric,
        x: ChartPoint,
        flagpole: DVector<f64>,
        transverse: DVector<f64>,
    ) -> Result<Self> {
        metric.data.check_point(&x)?;
        let n = metric.dim();
        if flagpole.len() != n || transverse.len() != n {
            return Err(Error::InvalidInput("flag vector dimension mismatch".into()));
        }
        let f = metric.f(&x, &flagpole)?;
        let l_lower = metric.f_gradient_y(&x, &flagpole)?;
        let l_upper = &flagpole / f;
        let euler = (l_lower.dot(&l_upper) - 1.0).abs();
        if euler > 1e-10 {
            return Err(Error::Validation(format!(
                "Euler identity l_i l^i = 1 violated by {euler:.3e}"
            )));
        }
        // Plain linear independence; the g-orthogonality check happens in
        // flag_curvature where the fundamental tensor is available.
        let gram = flagpole.norm_squared() * transverse.norm_squared()
            - flagpole.dot(&transverse).powi(2);
        if gram <= 1e-12 * flagpole.norm_squared() * transverse.norm_squared() {
            return Err(Error::DegenerateFlag("flagpole and edge are collinear".into()));
        }
        Ok(FlagFrame { x, flagpole, transverse, l_lower, l_upper })
    }

    /// Angular projector `h^i_l = delta^i_l - l^i l_l`.
    pub fn angular_projector(&self) -> DMatrix<f64> {
        let n = self.flagpole.len();
        DMatrix::from_fn(n, n, |i, l| {
            let kron = if i == l { 1.0 } else { 0.0 };
            kron - self.l_upper[i] * self.l_lower[l]
        })
    }
}

/// Residual of the scalar-flag-curvature equation
/// `R_0{}^i{}_{0l} = K F^2 h^i_l`, together with the max-norm of the
/// right-hand side for relative comparisons.
#[derive(Debug, Clone, Copy)]
pub struct ScalarFlagResidual {
    pub residual: f64,
    pub scale: f64,
}

/// Evaluation engine for one Kropina structure.
#[derive(Debug, Clone)]
pub struct ConicKropinaMetric {
    data: KropinaData,
    fd: FdConfig,
}

impl ConicKropinaMetric {
    pub fn new(data: KropinaData) -> Self {
        ConicKropinaMetric { data, fd: FdConfig::default() }
    }

    pub fn with_fd(data: KropinaData, fd: FdConfig) -> Self {
        ConicKropinaMetric { data, fd }
    }

    pub fn data(&self) -> &KropinaData {
        &self.data
    }

    pub fn fd(&self) -> &FdConfig {
        &self.fd
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn point(&self, coords: DVector<f64>) -> Result<ChartPoint> {
        self.data.point(coords)
    }

    fn generator(&self) -> KropinaGenerator<'_> {
        KropinaGenerator { data: &self.data }
    }

    /// Strict conic-domain membership, `beta > 1e-10 |y|_a`.
    pub fn domain_contains(&self, x: &ChartPoint, y: &DVector<f64>) -> bool {
        if self.data.check_point(x).is_err() || y.len() != self.dim() {
            return false;
        }
        self.generator().domain_ok(&x.coords, y, DOMAIN_EPS)
    }

    /// `F(x, y) = alpha^2 / beta`.
    pub fn f(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<f64> {
        self.data.check_point(x)?;
        self.generator().f_value(&x.coords, y)
    }

    /// `l_i = dF/dy^i`.
    pub fn f_gradient_y(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.data.check_point(x)?;
        self.generator().f_grad_y(&x.coords, y)
    }

    /// Fundamental tensor
    /// `g_ij = (2 alpha^2/beta^2) a_ij + (3 alpha^4/beta^4) b_i b_j
    ///  - (4 alpha^2/beta^3)(a_0i b_j + a_0j b_i) + (4/beta^2) a_0i a_0j`.
    pub fn fundamental_tensor(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<SymMatrix> {
        self.data.check_point(x)?;
        let n = self.dim();
        let ys: Vec<f64> = y.iter().copied().collect();
        let (g, _) = self.generator().g_and_dg::<f64>(&x.coords, &ys)?;
        Ok(SymMatrix::from_fn(n, |i, j| g[i * n + j]))
    }

    /// Spray coefficients via the Christoffel route of the fundamental
    /// tensor.
    pub fn spray(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.data.check_point(x)?;
        generator::spray(&self.generator(), &x.coords, y)
    }

    /// Spray coefficients via the energy route
    /// `G^i = 1/4 g^{il} (y^m d^2(F^2)/dy^l dx^m - d(F^2)/dx^l)`,
    /// an independent closed form used for cross-validation.
    pub fn spray_energy_route(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.data.check_point(x)?;
        let n = self.dim();
        let coords = &x.coords;
        let a = self.data.a(coords).into_matrix();
        let b = self.data.b(coords);
        let a_dx: Vec<DMatrix<f64>> =
            self.data.a_dx(coords).into_iter().map(|m| m.into_matrix()).collect();
        let b_dx = self.data.b_dx(coords);

        let a0 = &a * y;
        let big_a = a0.dot(y);
        let big_b = b.dot(y);
        let alpha = big_a.max(0.0).sqrt();
        if big_b <= DOMAIN_EPS * alpha {
            return Err(Error::OutsideDomain { beta: big_b, alpha });
        }
        let b2 = big_b * big_b;
        let b3 = b2 * big_b;
        let b4 = b2 * b2;

        // Per x-direction m: A'_m, B'_m, a0'_m = (d_m a) y.
        let mut ap = DVector::zeros(n);
        let mut bp = DVector::zeros(n);
        let mut a0p: Vec<DVector<f64>> = Vec::with_capacity(n);
        for m in 0..n {
            let da_y = &a_dx[m] * y;
            ap[m] = da_y.dot(y);
            bp[m] = b_dx.column(m).dot(y);
            a0p.push(da_y);
        }

        // d(F^2)/dx^l
        let fx = DVector::from_fn(n, |l, _| {
            2.0 * big_a * ap[l] / b2 - 2.0 * big_a * big_a * bp[l] / b3
        });

        // y^m d^2(F^2)/dy^l dx^m
        let mut mixed = DVector::zeros(n);
        for l in 0..n {
            let mut acc = 0.0;
            for m in 0..n {
                acc += (4.0 * (ap[m] * a0[l] + big_a * a0p[m][l]) / b2
                    - 8.0 * big_a * a0[l] * bp[m] / b3
                    - (4.0 * big_a * ap[m] * b[l] + 2.0 * big_a * big_a * b_dx[(l, m)]) / b3
                    + 6.0 * big_a * big_a * b[l] * bp[m] / b4)
                    * y[m];
            }
            mixed[l] = acc;
        }

        let ys: Vec<f64> = y.iter().copied().collect();
        let (g, _) = self.generator().g_and_dg::<f64>(coords, &ys)?;
        let ginv = scal::invert::<f64>(n, &g)
            .ok_or_else(|| Error::Validation("fundamental tensor is singular".into()))?;
        Ok(DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for l in 0..n {
                acc += ginv[i * n + l] * (mixed[l] - fx[l]);
            }
            0.25 * acc
        }))
    }

    fn require_margin(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<()> {
        self.data.check_point(x)?;
        let a = self.data.a(&x.coords).into_matrix();
        let b = self.data.b(&x.coords);
        let alpha = (&a * y).dot(y).max(0.0).sqrt();
        let beta = b.dot(y);
        if beta <= CURVATURE_MARGIN * alpha {
            return Err(Error::NearBoundary { beta, required: CURVATURE_MARGIN * alpha });
        }
        Ok(())
    }

    /// Spray, nonlinear connection, Berwald coefficients and `h`-curvature
    /// at `(x, y)`; requires margin inside the cone for the stencils.
    pub fn curvature_tensors(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<CurvatureTensors> {
        self.require_margin(x, y)?;
        let gen = self.generator();
        let spray = generator::spray(&gen, &x.coords, y)?;
        let (curvature, berwald, nonlinear) = generator::h_curvature(&gen, &x.coords, y, &self.fd)?;
        Ok(CurvatureTensors { spray, nonlinear, berwald, curvature })
    }

    /// Flag curvature of a frame.
    pub fn flag_curvature(&self, frame: &FlagFrame) -> Result<f64> {
        self.require_margin(&frame.x, &frame.flagpole)?;
        generator::flag_curvature_impl(
            &self.generator(),
            &frame.x.coords,
            &frame.flagpole,
            &frame.transverse,
            &self.fd,
        )
    }

    /// Max-norm residual of `R_0{}^i{}_{0l} = K F^2 h^i_l` at `(x, y)`.
    pub fn scalar_flag_residual(
        &self,
        x: &ChartPoint,
        y: &DVector<f64>,
        curvature_constant: f64,
    ) -> Result<ScalarFlagResidual> {
        let ct = self.curvature_tensors(x, y)?;
        let n = self.dim();
        let f = self.f(x, y)?;
        let l_lower = self.f_gradient_y(x, y)?;
        let l_upper = y / f;

        let mut residual: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for l in 0..n {
                let mut r0 = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        r0 += y[j] * y[k] * ct.curvature[j][i][(k, l)];
                    }
                }
                let kron = if i == l { 1.0 } else { 0.0 };
                let target = curvature_constant * f * f * (kron - l_upper[i] * l_lower[l]);
                residual = residual.max((r0 - target).abs());
                scale = scale.max(target.abs());
            }
        }
        Ok(ScalarFlagResidual { residual, scale })
    }

    /// Max over `j` of the Hamel defect `|F_{x^r y^j} y^r - F_{x^j}|`;
    /// zero exactly on projectively flat metrics.
    pub fn hamel_residual(&self, x: &ChartPoint, y: &DVector<f64>) -> Result<f64> {
        self.require_margin(x, y)?;
        let n = self.dim();
        let coords = &x.coords;

        // dF/dx^j is closed-form; the mixed derivative is a central
        // difference in y of the contraction S(y) = F_{x^r} y^r, using
        // F_{x^r y^j} y^r = dS/dy^j - F_{x^j}.
        let f_x = |y: &DVector<f64>| -> Result<DVector<f64>> {
            let a = self.data.a(coords).into_matrix();
            let b = self.data.b(coords);
            let big_a = (&a * y).dot(y);
            let big_b = b.dot(y);
            let alpha = big_a.max(0.0).sqrt();
            if big_b <= DOMAIN_EPS * alpha {
                return Err(Error::OutsideDomain { beta: big_b, alpha });
            }
            let a_dx = self.data.a_dx(coords);
            let b_dx = self.data.b_dx(coords);
            Ok(DVector::from_fn(n, |j, _| {
                let apj = (a_dx[j].matrix() * y).dot(y);
                let bpj = b_dx.column(j).dot(y);
                (apj * big_b - big_a * bpj) / (big_b * big_b)
            }))
        };
        let s_of = |y: &DVector<f64>| -> Result<f64> { Ok(f_x(y)?.dot(y)) };

        let fxj = f_x(y)?;
        let hy = self.fd.step_y * (1.0 + y.norm());
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += hy;
            ym[j] -= hy;
            let (sp, sm) = match (s_of(&yp), s_of(&ym)) {
                (Ok(p), Ok(m)) => (p, m),
                _ => {
                    return Err(Error::NearBoundary {
                        beta: self.data.b(coords).dot(y),
                        required: CURVATURE_MARGIN,
                    })
                }
            };
            let ds = (sp - sm) / (2.0 * hy);
            worst = worst.max((ds - 2.0 * fxj[j]).abs());
        }
        Ok(worst)
    }
}

/// Flag curvature of the plain quadratic generator `F^2 = h_ij y^i y^j`
/// run through the identical curvature pipeline; on a constant-curvature
/// model this must return the sectional curvature, which pins the sign
/// convention of the whole chain.
pub fn riemannian_flag_curvature(
    model: &RiemannianModel,
    x: &ChartPoint,
    y: &DVector<f64>,
    transverse: &DVector<f64>,
    fd: &FdConfig,
) -> Result<f64> {
    model.check_point(x)?;
    let gen = RiemannGenerator { model };
    generator::flag_curvature_impl(&gen, &x.coords, y, transverse, fd)
}
