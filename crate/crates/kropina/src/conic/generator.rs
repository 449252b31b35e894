//! The curvature pipeline, shared between the Kropina generator and the
//! plain Riemannian quadratic generator.
//!
//! Both generators expose the fundamental tensor and its analytic
//! `x`-partials for an arbitrary scalar type; everything downstream
//! (spray, nonlinear connection, Berwald coefficients, `h`-curvature,
//! flag curvature) is generator-agnostic. Running the identical pipeline
//! on the quadratic generator `F^2 = h_ij y^i y^j` is the sanity harness
//! that pins the curvature sign convention.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::navigation::KropinaData;
use crate::riemannian::RiemannianModel;

use super::scal::{invert, HyperDual, Scal};
use super::FdConfig;

/// Relative guard for strict positivity of `beta`.
pub const DOMAIN_EPS: f64 = 1e-10;
/// Relative margin required of curvature evaluations, so the
/// finite-difference stencils have room inside the cone.
pub const CURVATURE_MARGIN: f64 = 1e-6;

pub(crate) trait MetricGenerator {
    fn dim(&self) -> usize;

    /// Fundamental tensor `g_ij` (row-major) and its analytic partials
    /// `dg[k] = dg_ij/dx^k` at `(x, y)`, for generic `y`-scalar.
    fn g_and_dg<S: Scal>(&self, x: &DVector<f64>, y: &[S]) -> Result<(Vec<S>, Vec<Vec<S>>)>;

    fn f_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64>;

    /// `l_i = dF/dy^i`.
    fn f_grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Admissibility of `(x, y)` with a relative margin on `beta`.
    fn domain_ok(&self, x: &DVector<f64>, y: &DVector<f64>, margin: f64) -> bool;
}

/// Kropina generator: closed-form fundamental tensor of `F = alpha^2/beta`.
pub(crate) struct KropinaGenerator<'a> {
    pub data: &'a KropinaData,
}

/// Scalars entering the Kropina closed form at one `(x, y)`.
struct KropinaCore<S: Scal> {
    alpha2: S,
    beta: S,
    /// `a_{0i} = a_{ij} y^j`.
    a0: Vec<S>,
}

impl<'a> KropinaGenerator<'a> {
    fn core<S: Scal>(&self, a: &DMatrix<f64>, b: &DVector<f64>, y: &[S]) -> KropinaCore<S> {
        let n = y.len();
        let mut a0 = vec![S::zero(); n];
        let mut alpha2 = S::zero();
        for i in 0..n {
            let mut acc = S::zero();
            for j in 0..n {
                acc += y[j] * S::from_f64(a[(i, j)]);
            }
            a0[i] = acc;
            alpha2 += y[i] * acc;
        }
        let mut beta = S::zero();
        for i in 0..n {
            beta += y[i] * S::from_f64(b[i]);
        }
        KropinaCore { alpha2, beta, a0 }
    }
}

impl MetricGenerator for KropinaGenerator<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn g_and_dg<S: Scal>(&self, x: &DVector<f64>, y: &[S]) -> Result<(Vec<S>, Vec<Vec<S>>)> {
        let n = self.dim();
        if !self.data.contains_coords(x) {
            return Err(Error::OutsideChart("stencil point left the chart".into()));
        }
        let a = self.data.a(x).into_matrix();
        let b = self.data.b(x);
        let a_dx: Vec<DMatrix<f64>> =
            self.data.a_dx(x).into_iter().map(|m| m.into_matrix()).collect();
        let b_dx = self.data.b_dx(x);

        let core = self.core(&a, &b, y);
        let alpha = core.alpha2.value().max(0.0).sqrt();
        if !(core.beta.value().is_finite() && alpha.is_finite())
            || core.beta.value() <= DOMAIN_EPS * alpha
        {
            return Err(Error::OutsideDomain { beta: core.beta.value(), alpha });
        }

        let two = S::from_f64(2.0);
        let three = S::from_f64(3.0);
        let four = S::from_f64(4.0);

        let bb = core.beta * core.beta;
        let b3 = bb * core.beta;
        let b4 = bb * bb;
        let aa = core.alpha2 * core.alpha2;

        // g = c1 a + c2 b(x)b + c3 (a0(x)b + b(x)a0) + c4 a0(x)a0
        let c1 = two * core.alpha2 / bb;
        let c2 = three * aa / b4;
        let c3 = -(four * core.alpha2 / b3);
        let c4 = four / bb;

        let mut g = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let aij = S::from_f64(a[(i, j)]);
                let bi = S::from_f64(b[i]);
                let bj = S::from_f64(b[j]);
                g[i * n + j] = c1 * aij
                    + c2 * bi * bj
                    + c3 * (core.a0[i] * bj + core.a0[j] * bi)
                    + c4 * core.a0[i] * core.a0[j];
            }
        }

        // Chain rule for dg/dx^k from the partials of a and b.
        let six = S::from_f64(6.0);
        let eight = S::from_f64(8.0);
        let twelve = S::from_f64(12.0);
        let b5 = b4 * core.beta;
        let mut dg = Vec::with_capacity(n);
        for k in 0..n {
            let dak = &a_dx[k];
            // A'_k = y^i y^j da_ij, B'_k = y^i db_i, a0'_i = da_ij y^j.
            let mut a0p = vec![S::zero(); n];
            let mut ap = S::zero();
            for i in 0..n {
                let mut acc = S::zero();
                for j in 0..n {
                    acc += y[j] * S::from_f64(dak[(i, j)]);
                }
                a0p[i] = acc;
                ap += y[i] * acc;
            }
            let mut bp = S::zero();
            for i in 0..n {
                bp += y[i] * S::from_f64(b_dx[(i, k)]);
            }

            let c1p = two * ap / bb - four * core.alpha2 * bp / b3;
            let c2p = six * core.alpha2 * ap / b4 - twelve * aa * bp / b5;
            let c3p = -(four * ap / b3) + twelve * core.alpha2 * bp / b4;
            let c4p = -(eight * bp / b3);

            let mut dgk = vec![S::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    let aij = S::from_f64(a[(i, j)]);
                    let daij = S::from_f64(dak[(i, j)]);
                    let bi = S::from_f64(b[i]);
                    let bj = S::from_f64(b[j]);
                    let bpi = S::from_f64(b_dx[(i, k)]);
                    let bpj = S::from_f64(b_dx[(j, k)]);
                    dgk[i * n + j] = c1p * aij
                        + c1 * daij
                        + c2p * bi * bj
                        + c2 * (bpi * bj + bi * bpj)
                        + c3p * (core.a0[i] * bj + core.a0[j] * bi)
                        + c3 * (a0p[i] * bj + core.a0[i] * bpj + a0p[j] * bi + core.a0[j] * bpi)
                        + c4p * core.a0[i] * core.a0[j]
                        + c4 * (a0p[i] * core.a0[j] + core.a0[i] * a0p[j]);
                }
            }
            dg.push(dgk);
        }
        Ok((g, dg))
    }

    fn f_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let a = self.data.a(x).into_matrix();
        let b = self.data.b(x);
        let alpha2 = (&a * y).dot(y);
        let beta = b.dot(y);
        let alpha = alpha2.max(0.0).sqrt();
        if beta <= DOMAIN_EPS * alpha {
            return Err(Error::OutsideDomain { beta, alpha });
        }
        Ok(alpha2 / beta)
    }

    fn f_grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.data.a(x).into_matrix();
        let b = self.data.b(x);
        let a0 = &a * y;
        let alpha2 = a0.dot(y);
        let beta = b.dot(y);
        let alpha = alpha2.max(0.0).sqrt();
        if beta <= DOMAIN_EPS * alpha {
            return Err(Error::OutsideDomain { beta, alpha });
        }
        // l_i = (2 a0_i beta - alpha^2 b_i) / beta^2
        Ok(DVector::from_fn(y.len(), |i, _| {
            (2.0 * a0[i] * beta - alpha2 * b[i]) / (beta * beta)
        }))
    }

    fn domain_ok(&self, x: &DVector<f64>, y: &DVector<f64>, margin: f64) -> bool {
        if !self.data.contains_coords(x) {
            return false;
        }
        let a = self.data.a(x).into_matrix();
        let b = self.data.b(x);
        let alpha = (&a * y).dot(y).max(0.0).sqrt();
        b.dot(y) > margin.max(DOMAIN_EPS) * alpha
    }
}

/// Quadratic generator `F^2 = h_ij y^i y^j` of a Riemannian model; the
/// domain is the whole punctured tangent space.
pub(crate) struct RiemannGenerator<'a> {
    pub model: &'a RiemannianModel,
}

impl MetricGenerator for RiemannGenerator<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn g_and_dg<S: Scal>(&self, x: &DVector<f64>, y: &[S]) -> Result<(Vec<S>, Vec<Vec<S>>)> {
        let n = self.dim();
        if !self.model.contains(x) {
            return Err(Error::OutsideChart("stencil point left the chart".into()));
        }
        let _ = y;
        let h = self.model.metric_raw(x);
        let dh = self.model.metric_dx_raw(x);
        let g = (0..n * n).map(|idx| S::from_f64(h[(idx / n, idx % n)])).collect();
        let dg = dh
            .iter()
            .map(|m| (0..n * n).map(|idx| S::from_f64(m[(idx / n, idx % n)])).collect())
            .collect();
        Ok((g, dg))
    }

    fn f_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let h = self.model.metric_raw(x);
        Ok((h.matrix() * y).dot(y).max(0.0).sqrt())
    }

    fn f_grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.model.metric_raw(x);
        let f = (h.matrix() * y).dot(y).max(0.0).sqrt();
        if f <= 0.0 {
            return Err(Error::InvalidInput("flagpole must be nonzero".into()));
        }
        Ok((h.matrix() * y) / f)
    }

    fn domain_ok(&self, x: &DVector<f64>, y: &DVector<f64>, _margin: f64) -> bool {
        self.model.contains(x) && y.norm() > 1e-12
    }
}

/// `G^i = 1/4 g^{is} (2 m_s - w_s)` with `m_s = y^k (dg_k y)_s` and
/// `w_s = y^T dg_s y`; this is the gamma-route spray contracted with `y`.
fn spray_from_g_dg<S: Scal>(n: usize, g: &[S], dg: &[Vec<S>], y: &[S]) -> Result<Vec<S>> {
    let ginv = invert(n, g)
        .ok_or_else(|| Error::Validation("fundamental tensor is singular".into()))?;
    let mut bracket = vec![S::zero(); n];
    for s in 0..n {
        let mut m_s = S::zero();
        for k in 0..n {
            let dgk = &dg[k];
            let mut t = S::zero();
            for j in 0..n {
                t += dgk[s * n + j] * y[j];
            }
            m_s += y[k] * t;
        }
        let dgs = &dg[s];
        let mut w_s = S::zero();
        for j in 0..n {
            let mut t = S::zero();
            for k in 0..n {
                t += dgs[j * n + k] * y[k];
            }
            w_s += y[j] * t;
        }
        bracket[s] = m_s + m_s - w_s;
    }
    let quarter = S::from_f64(0.25);
    Ok((0..n)
        .map(|i| {
            let mut acc = S::zero();
            for s in 0..n {
                acc += ginv[i * n + s] * bracket[s];
            }
            acc * quarter
        })
        .collect())
}

pub(crate) fn spray<M: MetricGenerator>(
    gen: &M,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = gen.dim();
    let ys: Vec<f64> = y.iter().copied().collect();
    let (g, dg) = gen.g_and_dg(x, &ys)?;
    let out = spray_from_g_dg(n, &g, &dg, &ys)?;
    Ok(DVector::from_vec(out))
}

/// Exact `N^i_j = dG^i/dy^j` via dual seeding.
pub(crate) fn nonlinear_connection<M: MetricGenerator>(
    gen: &M,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = gen.dim();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let ys: Vec<HyperDual> = (0..n)
            .map(|i| HyperDual::variable(y[i], if i == j { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let (g, dg) = gen.g_and_dg(x, &ys)?;
        let gi = spray_from_g_dg(n, &g, &dg, &ys)?;
        for i in 0..n {
            out[(i, j)] = gi[i].d1;
        }
    }
    Ok(out)
}

/// Exact Berwald coefficients `Gamma^i_{jk} = d^2 G^i / dy^j dy^k` via
/// second-order dual seeding; exactly symmetric in `(j, k)`.
pub(crate) fn berwald_coefficients<M: MetricGenerator>(
    gen: &M,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = gen.dim();
    let mut out = vec![DMatrix::zeros(n, n); n];
    for j in 0..n {
        for k in j..n {
            let ys: Vec<HyperDual> = (0..n)
                .map(|i| {
                    HyperDual::variable(
                        y[i],
                        if i == j { 1.0 } else { 0.0 },
                        if i == k { 1.0 } else { 0.0 },
                    )
                })
                .collect();
            let (g, dg) = gen.g_and_dg(x, &ys)?;
            let gi = spray_from_g_dg(n, &g, &dg, &ys)?;
            for i in 0..n {
                out[i][(j, k)] = gi[i].d12;
                out[i][(k, j)] = gi[i].d12;
            }
        }
    }
    Ok(out)
}

fn central_difference<T>(
    plus: Result<T>,
    minus: Result<T>,
    step: f64,
    combine: impl Fn(T, T, f64) -> T,
) -> Result<T> {
    match (plus, minus) {
        (Ok(p), Ok(m)) => Ok(combine(p, m, step)),
        (Err(Error::OutsideDomain { beta, alpha }), _)
        | (_, Err(Error::OutsideDomain { beta, alpha })) => Err(Error::NearBoundary {
            beta,
            required: CURVATURE_MARGIN * alpha,
        }),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn diff_gamma(p: Vec<DMatrix<f64>>, m: Vec<DMatrix<f64>>, step: f64) -> Vec<DMatrix<f64>> {
    p.into_iter().zip(m).map(|(a, b)| (a - b) / (2.0 * step)).collect()
}

/// Berwald `h`-curvature `R_j{}^i{}_{kl}`, indexed `[j][i][(k,l)]`:
///
/// ```text
/// R_j^i_kl = delta Gamma^i_jk / delta x^l - delta Gamma^i_jl / delta x^k
///          + Gamma^r_jk Gamma^i_rl - Gamma^r_jl Gamma^i_rk,
/// delta/delta x^l = d/dx^l - N^m_l d/dy^m.
/// ```
pub(crate) type CurvatureParts = (Vec<Vec<DMatrix<f64>>>, Vec<DMatrix<f64>>, DMatrix<f64>);

pub(crate) fn h_curvature<M: MetricGenerator>(
    gen: &M,
    x: &DVector<f64>,
    y: &DVector<f64>,
    fd: &FdConfig,
) -> Result<CurvatureParts> {
    let n = gen.dim();
    let gamma = berwald_coefficients(gen, x, y)?;
    let n_conn = nonlinear_connection(gen, x, y)?;

    let hx = fd.step_x * (1.0 + x.norm());
    let hy = fd.step_y * (1.0 + y.norm());

    let gamma_at = |xx: &DVector<f64>, yy: &DVector<f64>| berwald_coefficients(gen, xx, yy);

    let dx_derivative = |l: usize, h: f64| -> Result<Vec<DMatrix<f64>>> {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[l] += h;
        xm[l] -= h;
        central_difference(gamma_at(&xp, y), gamma_at(&xm, y), h, diff_gamma)
    };
    let dy_derivative = |m: usize, h: f64| -> Result<Vec<DMatrix<f64>>> {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[m] += h;
        ym[m] -= h;
        central_difference(gamma_at(x, &yp), gamma_at(x, &ym), h, diff_gamma)
    };
    let richardson = |d2: Vec<DMatrix<f64>>, d1: Vec<DMatrix<f64>>| -> Vec<DMatrix<f64>> {
        d2.into_iter().zip(d1).map(|(fine, coarse)| (fine * 4.0 - coarse) / 3.0).collect()
    };

    // dgamma_dx[l][i][(j,k)], dgamma_dy[m][i][(j,k)]
    let mut dgamma_dx = Vec::with_capacity(n);
    let mut dgamma_dy = Vec::with_capacity(n);
    for l in 0..n {
        let d = if fd.richardson {
            richardson(dx_derivative(l, hx / 2.0)?, dx_derivative(l, hx)?)
        } else {
            dx_derivative(l, hx)?
        };
        dgamma_dx.push(d);
        let d = if fd.richardson {
            richardson(dy_derivative(l, hy / 2.0)?, dy_derivative(l, hy)?)
        } else {
            dy_derivative(l, hy)?
        };
        dgamma_dy.push(d);
    }

    // delta Gamma / delta x^l
    let mut delta_gamma = Vec::with_capacity(n);
    for l in 0..n {
        let mut per_i: Vec<DMatrix<f64>> = dgamma_dx[l].clone();
        for m in 0..n {
            let w = n_conn[(m, l)];
            for i in 0..n {
                per_i[i] -= &dgamma_dy[m][i] * w;
            }
        }
        delta_gamma.push(per_i);
    }

    let mut r = vec![vec![DMatrix::zeros(n, n); n]; n];
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = delta_gamma[l][i][(j, k)] - delta_gamma[k][i][(j, l)];
                    for m in 0..n {
                        v += gamma[m][(j, k)] * gamma[i][(m, l)]
                            - gamma[m][(j, l)] * gamma[i][(m, k)];
                    }
                    r[j][i][(k, l)] = v;
                }
            }
        }
    }
    Ok((r, gamma, n_conn))
}

/// Flag curvature of the flag `(y, x_trans)`:
/// `K = R_{hijk} y^h X^i y^j X^k / ((g_{hj} g_{ik} - g_{hk} g_{ij}) y^h X^i y^j X^k)`
/// with `R_{hijk} = g_{ri} R_h{}^r{}_{jk}`; the lowering convention is
/// pinned by the Riemannian harness returning `+K` on the round sphere.
pub(crate) fn flag_curvature_impl<M: MetricGenerator>(
    gen: &M,
    x: &DVector<f64>,
    y: &DVector<f64>,
    x_trans: &DVector<f64>,
    fd: &FdConfig,
) -> Result<f64> {
    let n = gen.dim();
    let ys: Vec<f64> = y.iter().copied().collect();
    let (gflat, _) = gen.g_and_dg::<f64>(x, &ys)?;
    let g = DMatrix::from_fn(n, n, |i, j| gflat[i * n + j]);

    let gy = &g * y;
    let gx = &g * x_trans;
    let den = gy.dot(y) * gx.dot(x_trans) - gy.dot(x_trans) * gy.dot(x_trans);
    if den <= 1e-10 {
        return Err(Error::DegenerateFlag(format!(
            "flag denominator {den:.3e}; transverse edge is g-parallel to the flagpole"
        )));
    }

    let (r, _, _) = h_curvature(gen, x, y, fd)?;
    let mut num = 0.0;
    for h in 0..n {
        for rr in 0..n {
            // lower the upper slot: R_{h i j k} = g_{r i} R_h{}^r{}_{jk}
            for i in 0..n {
                let gri = g[(rr, i)];
                if gri == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for k in 0..n {
                        num += gri * r[h][rr][(j, k)] * y[h] * x_trans[i] * y[j] * x_trans[k];
                    }
                }
            }
        }
    }
    Ok(num / den)
}
