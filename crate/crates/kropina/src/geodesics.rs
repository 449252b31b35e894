//! Geodesic integration on the conic domain.
//!
//! Geodesics are solutions of `x'' + 2 G(x, x') = 0`, integrated with a
//! fixed-step classical RK4 scheme. Admissibility is guarded at every
//! accepted step: when a step would leave the conic domain or the chart,
//! the step size is halved (up to ten times) and the exit parameter is
//! then located by bisection on the guard predicate.

use std::io::Write;

use nalgebra::DVector;

use crate::conic::ConicKropinaMetric;
use crate::error::{Error, Result};

/// Why an integration stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum GeodesicStatus {
    Completed,
    LeftDomain { t_exit: f64 },
    LeftChart { t_exit: f64 },
}

/// One recorded sample of the flow.
#[derive(Debug, Clone)]
pub struct GeodesicSample {
    pub t: f64,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub f_value: f64,
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub samples: Vec<GeodesicSample>,
    pub status: GeodesicStatus,
    /// Trapezoidal `F`-length of the recorded trajectory.
    pub f_length: f64,
    /// Max relative drift of `F` along the trajectory.
    pub f_drift: f64,
}

impl GeodesicResult {
    pub fn f_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f_value).collect()
    }
}

const MAX_HALVINGS: u32 = 10;
const EXIT_BISECTION_TOL: f64 = 1e-8;

struct SprayFlow<'a> {
    metric: &'a ConicKropinaMetric,
}

impl SprayFlow<'_> {
    /// One RK4 step of the first-order system `(x, y)' = (y, -2G)`.
    fn rk4_step(&self, x: &DVector<f64>, y: &DVector<f64>, dt: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let accel = |x: &DVector<f64>, y: &DVector<f64>| -> Result<DVector<f64>> {
            let xp = self.metric.point(x.clone())?;
            Ok(self.metric.spray(&xp, y)? * -2.0)
        };
        let k1x = y.clone();
        let k1y = accel(x, y)?;
        let k2x = y + &k1y * (dt / 2.0);
        let k2y = accel(&(x + &k1x * (dt / 2.0)), &k2x)?;
        let k3x = y + &k2y * (dt / 2.0);
        let k3y = accel(&(x + &k2x * (dt / 2.0)), &k3x)?;
        let k4x = y + &k3y * dt;
        let k4y = accel(&(x + &k3x * dt), &k4x)?;
        let xn = x + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (dt / 6.0);
        let yn = y + (k1y + &k2y * 2.0 + &k3y * 2.0 + k4y) * (dt / 6.0);
        Ok((xn, yn))
    }

    fn admissible(&self, x: &DVector<f64>, y: &DVector<f64>) -> bool {
        match self.metric.point(x.clone()) {
            Ok(xp) => self.metric.domain_contains(&xp, y),
            Err(_) => false,
        }
    }

    fn in_chart(&self, x: &DVector<f64>) -> bool {
        self.metric.data().contains_coords(x)
    }
}

/// Integrates the spray flow from `(x0, y0)` up to `t_max` with step `dt`.
pub fn integrate(
    metric: &ConicKropinaMetric,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    t_max: f64,
    dt: f64,
) -> Result<GeodesicResult> {
    if !dt.is_finite() || dt <= 0.0 || !t_max.is_finite() || t_max <= 0.0 {
        return Err(Error::InvalidInput("t_max and dt must be positive".into()));
    }
    let flow = SprayFlow { metric };
    let x0p = metric.point(x0.clone())?;
    if !metric.domain_contains(&x0p, y0) {
        let beta = metric.data().b(x0).dot(y0);
        return Err(Error::OutsideDomain { beta, alpha: y0.norm() });
    }
    // The spray is singular on the cone boundary; demand starting room.
    let alpha0 = (metric.data().a(x0).matrix() * y0).dot(y0).max(0.0).sqrt();
    let beta0 = metric.data().b(x0).dot(y0);
    if beta0 <= crate::conic::CURVATURE_MARGIN * alpha0 {
        return Err(Error::NearBoundary {
            beta: beta0,
            required: crate::conic::CURVATURE_MARGIN * alpha0,
        });
    }
    let f0 = metric.f(&x0p, y0)?;

    let mut samples = vec![GeodesicSample {
        t: 0.0,
        position: x0.clone(),
        velocity: y0.clone(),
        f_value: f0,
    }];
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut status = GeodesicStatus::Completed;

    'outer: while t < t_max - 1e-12 {
        let step = dt.min(t_max - t);
        match try_advance(&flow, &x, &y, step) {
            Some((xn, yn)) => {
                t += step;
                x = xn;
                y = yn;
                let xp = metric.point(x.clone())?;
                let f = metric.f(&xp, &y)?;
                samples.push(GeodesicSample { t, position: x.clone(), velocity: y.clone(), f_value: f });
            }
            None => {
                // Halve the step while progress is possible, then bisect
                // the exit parameter on the guard predicate.
                let mut sub = step / 2.0;
                let mut halvings = 1;
                loop {
                    if halvings > MAX_HALVINGS {
                        let t_exit = locate_exit(&flow, &x, &y, step);
                        status = classify_exit(&flow, &x, &y, t_exit, t);
                        break 'outer;
                    }
                    match try_advance(&flow, &x, &y, sub) {
                        Some((xn, yn)) => {
                            t += sub;
                            x = xn;
                            y = yn;
                            let xp = metric.point(x.clone())?;
                            let f = metric.f(&xp, &y)?;
                            samples.push(GeodesicSample {
                                t,
                                position: x.clone(),
                                velocity: y.clone(),
                                f_value: f,
                            });
                            break;
                        }
                        None => {
                            sub /= 2.0;
                            halvings += 1;
                        }
                    }
                }
            }
        }
    }

    let f_length = trapezoid(&samples);
    let f_drift = samples
        .iter()
        .map(|s| (s.f_value - f0).abs())
        .fold(0.0, f64::max)
        / f0.abs().max(1e-300);
    Ok(GeodesicResult { samples, status, f_length, f_drift })
}

fn try_advance(
    flow: &SprayFlow<'_>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (xn, yn) = flow.rk4_step(x, y, dt).ok()?;
    if flow.admissible(&xn, &yn) {
        Some((xn, yn))
    } else {
        None
    }
}

/// Bisects the largest admissible sub-step of `[0, step]` to the stated
/// tolerance in `t`.
fn locate_exit(flow: &SprayFlow<'_>, x: &DVector<f64>, y: &DVector<f64>, step: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = step;
    while hi - lo > EXIT_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        match try_advance(flow, x, y, mid) {
            Some(_) => lo = mid,
            None => hi = mid,
        }
    }
    lo
}

fn classify_exit(
    flow: &SprayFlow<'_>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t_local: f64,
    t_base: f64,
) -> GeodesicStatus {
    // Step just past the located exit to see which guard tripped.
    let probe = flow.rk4_step(x, y, t_local + 2.0 * EXIT_BISECTION_TOL);
    let t_exit = t_base + t_local;
    match probe {
        Ok((xn, _)) if !flow.in_chart(&xn) => GeodesicStatus::LeftChart { t_exit },
        Ok(_) => GeodesicStatus::LeftDomain { t_exit },
        Err(Error::OutsideChart(_)) => GeodesicStatus::LeftChart { t_exit },
        Err(_) => GeodesicStatus::LeftDomain { t_exit },
    }
}

fn trapezoid(samples: &[GeodesicSample]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[0].f_value + w[1].f_value) * (w[1].t - w[0].t))
        .sum()
}

/// `F`-length of a sampled admissible curve: the composite trapezoidal
/// value of `int F(c, c') dt` over the recorded nodes.
pub fn f_length(metric: &ConicKropinaMetric, samples: &[(f64, DVector<f64>, DVector<f64>)]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let mut values = Vec::with_capacity(samples.len());
    for (t, x, y) in samples {
        if !t.is_finite() {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        let xp = metric.point(x.clone())?;
        if !metric.domain_contains(&xp, y) {
            let beta = metric.data().b(x).dot(y);
            return Err(Error::OutsideDomain { beta, alpha: y.norm() });
        }
        values.push(metric.f(&xp, y)?);
    }
    Ok(samples
        .windows(2)
        .zip(values.windows(2))
        .map(|(s, f)| 0.5 * (f[0] + f[1]) * (s[1].0 - s[0].0))
        .sum())
}

/// Writes the CSV export of a trajectory: columns
/// `t, x^1..x^n, y^1..y^n, F`.
pub fn write_csv(result: &GeodesicResult, mut out: impl Write) -> std::io::Result<()> {
    let n = result.samples.first().map_or(0, |s| s.position.len());
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=n {
        header.push_str(&format!(",y{i}"));
    }
    header.push_str(",F");
    writeln!(out, "{header}")?;
    for s in &result.samples {
        let mut line = format!("{:.16e}", s.t);
        for v in s.position.iter() {
            line.push_str(&format!(",{v:.16e}"));
        }
        for v in s.velocity.iter() {
            line.push_str(&format!(",{v:.16e}"));
        }
        line.push_str(&format!(",{:.16e}", s.f_value));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::navigation::{nav_to_kropina, KropinaData, NavSpec, NavigationData};
    use crate::riemannian::{RiemannianModel, VectorFieldModel};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn euclid_metric() -> ConicKropinaMetric {
        let nav = NavigationData::new(
            RiemannianModel::euclidean(2),
            VectorFieldModel::constant(DVector::from_vec(vec![1.0, 0.0])),
            0.0,
        )
        .unwrap();
        ConicKropinaMetric::new(nav_to_kropina(&nav).unwrap())
    }

    #[test]
    fn flat_geodesics_are_rays() {
        let metric = euclid_metric();
        for dir in [[1.0, 0.0], [1.0, 1.0]] {
            let y0 = DVector::from_vec(dir.to_vec());
            let res = integrate(&metric, &DVector::zeros(2), &y0, 2.0, 1e-2).unwrap();
            assert_eq!(res.status, GeodesicStatus::Completed);
            for s in &res.samples {
                // Collinearity of x(t) with the initial direction.
                let cross = s.position[0] * y0[1] - s.position[1] * y0[0];
                assert!(cross.abs() < 1e-6, "cross {cross}");
                // Velocity stays put on flat data.
                assert!((&s.velocity - &y0).amax() < 1e-9);
            }
            assert!(res.f_drift < 1e-9);
        }
    }

    #[test]
    fn cylinder_wind_orbit_is_geodesic() {
        let nav = NavSpec::Cylinder { k_exponent: 0.0 }.build().unwrap();
        let metric = ConicKropinaMetric::new(nav_to_kropina(&nav).unwrap());
        let y0 = DVector::from_vec(vec![1.0, 0.0]); // the wind itself
        let res = integrate(&metric, &DVector::zeros(2), &y0, 3.0, 1e-2).unwrap();
        assert_eq!(res.status, GeodesicStatus::Completed);
        for s in &res.samples {
            // Stays on the theta-axis orbit of the rotation field.
            assert!(s.position[1].abs() < 1e-10);
            assert_abs_diff_eq!(s.f_value, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_upwind_start() {
        let metric = euclid_metric();
        let res = integrate(
            &metric,
            &DVector::zeros(2),
            &DVector::from_vec(vec![-1.0, 0.0]),
            1.0,
            1e-2,
        );
        assert!(matches!(res, Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn f_length_values_and_additivity() {
        let metric = euclid_metric();
        let seg = |y: [f64; 2], t0: f64, t1: f64, k: usize| -> Vec<(f64, DVector<f64>, DVector<f64>)> {
            (0..=k)
                .map(|i| {
                    let t = t0 + (t1 - t0) * i as f64 / k as f64;
                    (
                        t,
                        DVector::from_vec(vec![y[0] * t, y[1] * t]),
                        DVector::from_vec(y.to_vec()),
                    )
                })
                .collect()
        };

        // Downwind at combined speed 2: unit travel time.
        let total = f_length(&metric, &seg([2.0, 0.0], 0.0, 1.0, 16)).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);

        // Same segment in two halves: additive.
        let a = f_length(&metric, &seg([2.0, 0.0], 0.0, 0.5, 8)).unwrap();
        let b = f_length(&metric, &seg([2.0, 0.0], 0.5, 1.0, 8)).unwrap();
        assert_abs_diff_eq!(a + b, total, epsilon = 1e-12);

        // Engine speed equal to the wind: F = 1/2.
        let half = f_length(&metric, &seg([1.0, 0.0], 0.0, 1.0, 16)).unwrap();
        assert_abs_diff_eq!(half, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn f_length_is_reparametrization_invariant() {
        let metric = euclid_metric();
        let base: Vec<(f64, DVector<f64>, DVector<f64>)> = (0..=20)
            .map(|i| {
                let t = i as f64 / 20.0;
                (
                    t,
                    DVector::from_vec(vec![1.4 * t, 0.6 * t]),
                    DVector::from_vec(vec![1.4, 0.6]),
                )
            })
            .collect();
        // Same geometric nodes at doubled speed over half the interval.
        let fast: Vec<(f64, DVector<f64>, DVector<f64>)> = base
            .iter()
            .map(|(t, x, y)| (t / 2.0, x.clone(), y * 2.0))
            .collect();
        let l0 = f_length(&metric, &base).unwrap();
        let l1 = f_length(&metric, &fast).unwrap();
        assert!(((l1 - l0) / l0).abs() < 1e-10);
    }

    #[test]
    fn f_length_rejects_inadmissible_samples() {
        let metric = euclid_metric();
        let samples = vec![
            (0.0, DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0])),
            (1.0, DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0])),
        ];
        assert!(matches!(f_length(&metric, &samples), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn turning_wind_trips_the_domain_guard() {
        // U-Kropina data on the flat plane with a wind that rotates with
        // x^1 much faster than the chosen step can resolve: the halving
        // cascade exhausts and the run reports the domain exit.
        let omega = 1000.0;
        let kd = KropinaData::custom(
            2,
            |_| SymMatrix::identity(2),
            |_| vec![SymMatrix::from_fn(2, |_, _| 0.0); 2],
            move |x| {
                DVector::from_vec(vec![2.0 * (omega * x[0]).cos(), 2.0 * (omega * x[0]).sin()])
            },
            move |x| {
                DMatrix::from_fn(2, 2, |i, j| {
                    if j != 0 {
                        0.0
                    } else if i == 0 {
                        -2.0 * omega * (omega * x[0]).sin()
                    } else {
                        2.0 * omega * (omega * x[0]).cos()
                    }
                })
            },
            |_| true,
        );
        let metric = ConicKropinaMetric::new(kd);
        let res = integrate(
            &metric,
            &DVector::zeros(2),
            &DVector::from_vec(vec![1.0, 0.2]),
            3.0,
            0.25,
        )
        .unwrap();
        match res.status {
            GeodesicStatus::LeftDomain { t_exit } => {
                assert!((0.0..3.0).contains(&t_exit));
            }
            other => panic!("expected a domain exit, got {other:?}"),
        }
        // Every recorded sample is admissible.
        for s in &res.samples {
            let xp = metric.point(s.position.clone()).unwrap();
            assert!(metric.domain_contains(&xp, &s.velocity));
            assert!(s.f_value > 0.0);
        }
    }

    #[test]
    fn s3_chart_exit_is_reported() {
        let nav = NavSpec::S3Chart { k_exponent: 0.0 }.build().unwrap();
        let metric = ConicKropinaMetric::new(nav_to_kropina(&nav).unwrap());
        // Meridian launch y0 = W + d/du^3: the rotation flow preserves u^3,
        // so the chart coordinate grows linearly and meets the boundary at
        // t = pi/2 - u^3(0).
        let u3_start = 0.5;
        let x0 = DVector::from_vec(vec![0.0, 0.0, u3_start]);
        let y0 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let res = integrate(&metric, &x0, &y0, 3.0, 1e-2).unwrap();
        match res.status {
            GeodesicStatus::LeftChart { t_exit } => {
                let expected = std::f64::consts::FRAC_PI_2 - u3_start;
                assert!((t_exit - expected).abs() < 1e-2, "t_exit {t_exit} vs {expected}");
            }
            other => panic!("expected chart exit, got {other:?}"),
        }
        assert!(res.f_drift < 1e-9);
    }

    #[test]
    fn csv_schema() {
        let metric = euclid_metric();
        let res = integrate(
            &metric,
            &DVector::zeros(2),
            &DVector::from_vec(vec![1.0, 0.0]),
            0.1,
            0.05,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,y1,y2,F");
        assert_eq!(lines.count(), res.samples.len());
    }
}
