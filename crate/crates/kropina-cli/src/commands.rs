//! Command implementations. Each command reads the validated config,
//! produces its artifacts deterministically, and returns the process exit
//! code: 0 success, 1 check failure, 2 config error, 3 sampling failure.

use std::fs;
use std::path::Path;

use kropina::classify::{
    cc_check_with, euclidean_moduli, moduli_normal_form, SphereKillingParams,
};
use kropina::conic::ConicKropinaMetric;
use kropina::error::Error as KError;
use kropina::geodesics::{integrate, write_csv, GeodesicStatus};
use kropina::linalg::{SkewMatrix, SymMatrix};
use kropina::navigation::{
    indicatrix_samples, kropina_to_nav, kropina_to_nav_at, nav_to_kropina, nav_to_kropina_at,
    KropinaData, NavSpec, NavigationData,
};
use kropina::sample::{admissible_direction, rng_from_seed, sample_point};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::config::{CommandKind, RunConfig};
use crate::jsonfmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: unusable configuration or environment.
    Config(String),
    /// Exit 1: the requested check failed or the input data is
    /// inadmissible.
    Check(String),
    /// Exit 3: rejection sampling stalled.
    Sampling(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Check(_) => 1,
            CliError::Sampling(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Check(m) | CliError::Sampling(m) => m,
        }
    }
}

/// Errors raised while interpreting the config are config errors, except
/// sampling failures which keep their own exit code.
fn setup_err(e: KError) -> CliError {
    match e {
        KError::SamplingFailure(m) => CliError::Sampling(m),
        other => CliError::Config(other.to_string()),
    }
}

/// Errors raised by the computation on valid configs are check failures.
fn run_err(e: KError) -> CliError {
    match e {
        KError::SamplingFailure(m) => CliError::Sampling(m),
        other => CliError::Check(other.to_string()),
    }
}

pub fn run(config: &RunConfig) -> Result<u8, CliError> {
    config.sampling.tolerances.validate().map_err(CliError::Config)?;
    config.fd.validate().map_err(CliError::Config)?;
    match config.command {
        CommandKind::CheckCc => cmd_check_cc(config),
        CommandKind::Geodesic => cmd_geodesic(config),
        CommandKind::Convert => cmd_convert(config),
        CommandKind::Moduli => cmd_moduli(config),
        CommandKind::Hamel => cmd_hamel(config),
        CommandKind::Indicatrix => cmd_indicatrix(config),
    }
}

fn require_model(config: &RunConfig) -> Result<NavigationData, CliError> {
    let spec = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a `model` section".into()))?;
    spec.build().map_err(setup_err)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("cannot create {parent:?}: {e}")))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))
}

fn emit_report(config: &RunConfig, value: &Value) -> Result<(), CliError> {
    let text = jsonfmt::to_string(value);
    match &config.output.report {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn vec_value(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}

fn mat_value(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

fn cmd_check_cc(config: &RunConfig) -> Result<u8, CliError> {
    let nav = require_model(config)?;
    let expected = config
        .expected_curvature
        .ok_or_else(|| CliError::Config("check_cc needs `expected_curvature`".into()))?;
    let report = cc_check_with(
        &nav,
        expected,
        config.sampling.n_samples,
        config.sampling.seed,
        config.sampling.tolerances.cc(),
        config.fd.build(),
    )
    .map_err(run_err)?;
    let value = serde_json::to_value(report.check_report())
        .map_err(|e| CliError::Config(e.to_string()))?;
    emit_report(config, &value)?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_geodesic(config: &RunConfig) -> Result<u8, CliError> {
    let nav = require_model(config)?;
    let integ = config
        .integration
        .as_ref()
        .ok_or_else(|| CliError::Config("geodesic needs an `integration` section".into()))?;
    let metric =
        ConicKropinaMetric::with_fd(nav_to_kropina(&nav).map_err(setup_err)?, config.fd.build());
    let x0 = DVector::from_vec(integ.x0.clone());
    let y0 = DVector::from_vec(integ.y0.clone());
    if !integ.dt.is_finite() || integ.dt <= 0.0 || !integ.t_max.is_finite() || integ.t_max <= 0.0 {
        return Err(CliError::Config("t_max and dt must be positive".into()));
    }

    let result = match integrate(&metric, &x0, &y0, integ.t_max, integ.dt) {
        Ok(r) => r,
        Err(KError::OutsideDomain { beta, .. }) => {
            return Err(CliError::Check(format!(
                "initial velocity is outside the conic domain (beta = {beta:.3e})"
            )))
        }
        Err(e) => return Err(run_err(e)),
    };

    if let Some(csv_path) = &config.output.csv {
        let mut buf = Vec::new();
        write_csv(&result, &mut buf).map_err(|e| CliError::Config(e.to_string()))?;
        write_text(csv_path, &String::from_utf8(buf).expect("csv is utf8"))?;
    }

    let (status, t_exit) = match result.status {
        GeodesicStatus::Completed => ("completed", Value::Null),
        GeodesicStatus::LeftDomain { t_exit } => ("left_domain", json!(t_exit)),
        GeodesicStatus::LeftChart { t_exit } => ("left_chart", json!(t_exit)),
    };
    let last = result.samples.last().expect("at least the initial sample");
    let value = json!({
        "check": "geodesic",
        "status": status,
        "t_exit": t_exit,
        "t_end": last.t,
        "f_initial": result.samples[0].f_value,
        "f_drift": result.f_drift,
        "f_length": result.f_length,
        "n_recorded": result.samples.len(),
    });
    emit_report(config, &value)?;
    Ok(0)
}

fn cmd_convert(config: &RunConfig) -> Result<u8, CliError> {
    let at = config.convert.as_ref().and_then(|c| c.at.clone());
    match (&config.kropina, &config.model) {
        (Some(spec), None) => {
            let dim = spec.b.len();
            if spec.a.len() != dim || spec.a.iter().any(|row| row.len() != dim) {
                return Err(CliError::Config("`kropina.a` must be square and match b".into()));
            }
            let a = SymMatrix::symmetrize(&DMatrix::from_fn(dim, dim, |i, j| spec.a[i][j]));
            let b = DVector::from_vec(spec.b.clone());
            let kd = KropinaData::constant(a.clone(), b.clone()).map_err(setup_err)?;
            let nav = kropina_to_nav(&kd).map_err(run_err)?;

            let coords = DVector::from_vec(at.unwrap_or_else(|| vec![0.0; dim]));
            let x = nav.model.point(coords.clone()).map_err(setup_err)?;
            let h = nav.model.metric(&x).map_err(run_err)?;
            let w_up = nav.wind.components(&coords);
            let w_low = h.matrix() * &w_up;
            let (a2, b2) = nav_to_kropina_at(&h, &w_up, nav.conformal_exponent);
            let roundtrip = (a2.matrix() - a.matrix()).amax().max((&b2 - &b).amax());
            let b_norm2 = kd.b_norm2(&coords).map_err(run_err)?;
            let value = json!({
                "check": "convert",
                "direction": "kropina_to_nav",
                "at": vec_value(&coords),
                "a": mat_value(a.matrix()),
                "b": vec_value(&b),
                "b_norm2": b_norm2,
                "k_exponent": nav.conformal_exponent,
                "h": mat_value(h.matrix()),
                "w_upper": vec_value(&w_up),
                "w_lower": vec_value(&w_low),
                "roundtrip_max_dev": roundtrip,
            });
            emit_report(config, &value)?;
            Ok(0)
        }
        (None, Some(_)) => {
            let nav = require_model(config)?;
            let kd = nav_to_kropina(&nav).map_err(setup_err)?;
            let dim = nav.dim();
            let coords = DVector::from_vec(at.unwrap_or_else(|| vec![0.0; dim]));
            let x = nav.model.point(coords.clone()).map_err(setup_err)?;
            let h = nav.model.metric(&x).map_err(run_err)?;
            let w_up = nav.wind.components(&coords);
            let a = kd.a(&coords);
            let b = kd.b(&coords);
            let (h2, w2, k2) = kropina_to_nav_at(&a, &b).map_err(run_err)?;
            let roundtrip = (h2.matrix() - h.matrix())
                .amax()
                .max((&w2 - &w_up).amax())
                .max((k2 - nav.conformal_exponent).abs());
            let value = json!({
                "check": "convert",
                "direction": "nav_to_kropina",
                "at": vec_value(&coords),
                "a": mat_value(a.matrix()),
                "b": vec_value(&b),
                "b_norm2": kd.b_norm2(&coords).map_err(run_err)?,
                "k_exponent": nav.conformal_exponent,
                "h": mat_value(h.matrix()),
                "w_upper": vec_value(&w_up),
                "w_lower": vec_value(&(h.matrix() * &w_up)),
                "roundtrip_max_dev": roundtrip,
            });
            emit_report(config, &value)?;
            Ok(0)
        }
        (Some(_), Some(_)) => Err(CliError::Config(
            "convert takes either `kropina` or `model`, not both".into(),
        )),
        (None, None) => Err(CliError::Config(
            "convert needs a `kropina` or a `model` section".into(),
        )),
    }
}

fn cmd_moduli(config: &RunConfig) -> Result<u8, CliError> {
    let spec = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("moduli needs a `model` section".into()))?;
    match spec {
        NavSpec::SphereProjective { m, curvature, q, c, .. } => {
            let dim = 2 * m - 1;
            if q.len() != dim || c.len() != dim {
                return Err(CliError::Config(format!(
                    "sphere parameters must have dimension {dim}"
                )));
            }
            let qm = DMatrix::from_fn(dim, dim, |i, j| q[i][j]);
            let skew = SkewMatrix::from_matrix(qm)
                .map_err(|_| CliError::Config("Q must be exactly skew-symmetric".into()))?;
            let params =
                SphereKillingParams::new(*m, *curvature, skew, DVector::from_vec(c.clone()))
                    .map_err(setup_err)?;
            let form = moduli_normal_form(&params).map_err(run_err)?;
            let root = curvature.sqrt();
            let max_dev = form
                .blocks
                .iter()
                .map(|a| (a - root).abs())
                .fold(0.0_f64, f64::max);
            println!(
                "{}",
                form.blocks.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
            );
            let value = json!({
                "check": "moduli",
                "family": "sphere",
                "blocks": form.blocks,
                "expected_block": root,
                "max_deviation": max_dev,
                "residual_zero": form.residual_zero,
            });
            emit_report(config, &value)?;
            Ok(0)
        }
        NavSpec::Euclidean { c, .. } => {
            let point = euclidean_moduli(&DVector::from_vec(c.clone())).map_err(setup_err)?;
            println!(
                "{}",
                point.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
            );
            let value = json!({
                "check": "moduli",
                "family": "euclidean",
                "moduli_point": point,
            });
            emit_report(config, &value)?;
            Ok(0)
        }
        _ => Err(CliError::Config(
            "moduli applies to the euclidean and sphere_projective families".into(),
        )),
    }
}

fn cmd_hamel(config: &RunConfig) -> Result<u8, CliError> {
    let nav = require_model(config)?;
    let metric =
        ConicKropinaMetric::with_fd(nav_to_kropina(&nav).map_err(setup_err)?, config.fd.build());
    let mut rng = rng_from_seed(config.sampling.seed);
    let n_samples = config.sampling.n_samples.max(1);
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let x = sample_point(&nav.model, &mut rng);
        let y = admissible_direction(metric.data(), &x.coords, 0.05, &mut rng, 10_000)
            .map_err(run_err)?;
        let r = metric.hamel_residual(&x, &y).map_err(run_err)?;
        max = max.max(r);
        sum += r;
    }
    let value = json!({
        "check": "hamel",
        "max_residual": max,
        "mean_residual": sum / n_samples as f64,
        "n_samples": n_samples,
        "seed": config.sampling.seed,
    });
    emit_report(config, &value)?;
    Ok(0)
}

fn cmd_indicatrix(config: &RunConfig) -> Result<u8, CliError> {
    let nav = require_model(config)?;
    let spec = config
        .indicatrix
        .as_ref()
        .ok_or_else(|| CliError::Config("indicatrix needs an `indicatrix` section".into()))?;
    if spec.count == 0 {
        return Err(CliError::Config("indicatrix count must be at least 1".into()));
    }
    let dim = nav.dim();
    let coords = DVector::from_vec(spec.at.clone().unwrap_or_else(|| vec![0.0; dim]));
    let x = nav.model.point(coords.clone()).map_err(setup_err)?;
    let samples =
        indicatrix_samples(&nav, &x, spec.count, config.sampling.seed).map_err(run_err)?;

    let h = nav.model.metric(&x).map_err(run_err)?;
    let w = nav.wind.components(&coords);
    let mut max_f_dev: f64 = 0.0;
    let mut max_translate_dev: f64 = 0.0;
    let mut csv = String::new();
    let mut header: Vec<String> = (1..=dim).map(|i| format!("y{i}")).collect();
    header.push("F".into());
    header.push("h_dist".into());
    csv.push_str(&header.join(","));
    csv.push('\n');
    for y in &samples {
        let f = kropina::navigation::nav_f(&nav, &x, y).map_err(run_err)?;
        let u = y - &w;
        let dist = (h.matrix() * &u).dot(&u).sqrt();
        max_f_dev = max_f_dev.max((f - 1.0).abs());
        max_translate_dev = max_translate_dev.max((dist - 1.0).abs());
        let mut row: Vec<String> = y.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(format!("{f:.16e}"));
        row.push(format!("{dist:.16e}"));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    if let Some(path) = &config.output.csv {
        write_text(path, &csv)?;
    }
    let value = json!({
        "check": "indicatrix",
        "count": samples.len(),
        "max_f_dev": max_f_dev,
        "max_translate_dev": max_translate_dev,
        "seed": config.sampling.seed,
    });
    emit_report(config, &value)?;
    Ok(0)
}
