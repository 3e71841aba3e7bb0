//! Thickness ladders: finite-thickness solutions for decreasing `h` compared
//! with the one-dimensional stationary point, empirical log-log rates and
//! report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beam3d::{
    distance_to_axis, fit_rotations, minimize_from, outer_variation_residuals, strain_stress_moments, AxialQuadrature,
    BeamConfig, BeamProblem, DeformationField, MinimizeOutcome, Observables, SolverOptions,
};
use crate::cell_problem::{q1_matrix, ReducedStiffness};
use crate::config::sha256_hex;
use crate::cross_section::{CrossSection, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::material::StoredEnergy;
use crate::rod_model::{el_residuals, recover_u, solve_equilibrium, AlphaRegime, RodLoads, RodPoint, RodState};

/// Largest admissible relative Euler–Lagrange residual of the reference rod.
pub const REFERENCE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LadderSpec {
    pub alpha: f64,
    /// Strictly decreasing.
    pub h_values: Vec<f64>,
    pub axial_elems: Vec<usize>,
    pub length: f64,
    pub rod_nodes: usize,
    pub section: CrossSection,
    pub material: StoredEnergy,
    pub loads: RodLoads,
    pub quadrature: AxialQuadrature,
    pub solver: SolverOptions,
    /// Start each rung from the ansatz built on the previous rung's observables.
    pub warm_start: bool,
    /// Hash of the configuration the ladder was built from.
    pub config_hash: String,
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        AlphaRegime::from_alpha(self.alpha)?;
        if self.h_values.len() != self.axial_elems.len() {
            return Err(Error::Input(format!(
                "{} h values but {} axial resolutions",
                self.h_values.len(),
                self.axial_elems.len()
            )));
        }
        if self.h_values.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
            return Err(Error::Input("h values must lie in (0, 1]".into()));
        }
        if self.h_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Input("h values must be strictly decreasing".into()));
        }
        if self.axial_elems.contains(&0) {
            return Err(Error::Input("axial_elems must be positive".into()));
        }
        if self.rod_nodes < 4 {
            return Err(Error::Input("rod reference needs at least 4 nodes".into()));
        }
        self.loads.validate()?;
        self.material.validate()?;
        self.section.check_normalized(NORMALIZATION_TOL)?;
        self.solver.validate()
    }

    pub fn beam_config(&self, rung: usize) -> BeamConfig {
        BeamConfig {
            h: self.h_values[rung],
            alpha: self.alpha,
            length: self.length,
            axial_elems: self.axial_elems[rung],
            section: self.section.clone(),
            material: self.material,
            loads: self.loads.clone(),
            quadrature: self.quadrature,
            solver: self.solver,
        }
    }

    pub fn rung_hash(&self, rung: usize) -> String {
        sha256_hex(
            format!(
                "{}:{:e}:{}",
                self.config_hash, self.h_values[rung], self.axial_elems[rung]
            )
            .as_bytes(),
        )
    }
}

/// The one-dimensional stationary point the ladder is compared with.
#[derive(Debug, Clone)]
pub struct RodReference {
    pub regime: AlphaRegime,
    pub stiffness: ReducedStiffness,
    pub state: RodState,
    pub max_residual: f64,
}

pub fn rod_reference(spec: &LadderSpec) -> Result<RodReference> {
    let regime = AlphaRegime::from_alpha(spec.alpha)?;
    let stiffness = q1_matrix(&spec.section, &spec.material.linearized())?;
    let state = solve_equilibrium(&regime, &stiffness, &spec.loads, spec.length, spec.rod_nodes)?;
    let state = recover_u(&state, &regime);
    let max_residual = el_residuals(&state, &regime, &stiffness, &spec.loads).max_relative();
    if !(max_residual <= REFERENCE_RESIDUAL_TOL) {
        return Err(Error::Convergence {
            iterations: 0,
            reason: "reference rod solution does not satisfy its equilibrium equations".into(),
            gradient_norm: max_residual,
            energy: f64::NAN,
        });
    }
    Ok(RodReference {
        regime,
        stiffness,
        state,
        max_residual,
    })
}

/// Metrics of a converged rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungMetrics {
    /// Discrete `W^{1,2}(0,L)` distances to the reference on the common grid.
    pub error_u: f64,
    pub error_v2: f64,
    pub error_v3: f64,
    pub error_w: f64,
    pub energy: f64,
    /// `∫W(∇_h y)/h^{2α−2}`
    pub scaling_ratio: f64,
    /// `‖∇_h y − R‖_{L²}`
    pub rotation_distance: f64,
    pub rotation_derivative: f64,
    pub rotation_deviation: f64,
    pub rotation_orthogonality: f64,
    /// `‖⟨E⟩‖_{L²}`
    pub mean_stress: f64,
    pub stress_asymmetry: f64,
    /// `‖y − x₁e₁‖_{W^{1,2}(Ω)}`
    pub axis_distance: f64,
    pub stationarity: f64,
    /// Largest relative outer-variation residual over the test maps.
    pub outer_variation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungRecord {
    pub h: f64,
    pub axial_elems: usize,
    pub config_hash: String,
    pub metrics: Option<RungMetrics>,
    /// Failure message of a rung that did not converge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub alpha: f64,
    pub config_hash: String,
    pub reference_nodes: usize,
    pub reference_residual: f64,
    pub reference_tip: [f64; 2],
    /// Common grid the observable errors are measured on.
    pub common_elems: usize,
    pub rungs: Vec<RungRecord>,
}

impl ConvergenceReport {
    pub fn successful(&self) -> impl Iterator<Item = (f64, &RungMetrics)> {
        self.rungs.iter().filter_map(|r| r.metrics.as_ref().map(|m| (r.h, m)))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Piecewise linear interpolation of station values on a uniform grid.
fn interp(x1: &[f64], values: &[f64], x: f64) -> f64 {
    let n = x1.len() - 1;
    let len = x1[n];
    let e = ((x / len * n as f64).floor() as usize).min(n - 1);
    let s = (x - x1[e]) / (x1[e + 1] - x1[e]);
    (1.0 - s) * values[e] + s * values[e + 1]
}

/// `‖f‖² = ∫ f² + ∫ (f′)²` for the piecewise linear interpolant of nodal
/// values on a uniform grid, the first integral by the trapezoidal rule.
pub fn discrete_w12(values: &[f64], length: f64) -> f64 {
    let n = values.len() - 1;
    let dx = length / n as f64;
    let mut acc = 0.0;
    for e in 0..n {
        let (a, b) = (values[e], values[e + 1]);
        acc += 0.5 * dx * (a * a + b * b) + (b - a) * (b - a) / dx;
    }
    acc.sqrt()
}

fn observable_errors(obs: &Observables, reference: &RodState, common: usize, length: f64) -> [f64; 4] {
    let grid: Vec<f64> = (0..=common).map(|i| length * i as f64 / common as f64).collect();
    let mut diff = vec![vec![0.0; grid.len()]; 4];
    for (i, &x) in grid.iter().enumerate() {
        let r = reference.eval(x);
        diff[0][i] = interp(&obs.x1, &obs.u, x) - r.u;
        diff[1][i] = interp(&obs.x1, &obs.v2, x) - r.v[0];
        diff[2][i] = interp(&obs.x1, &obs.v3, x) - r.v[1];
        diff[3][i] = interp(&obs.x1, &obs.w, x) - r.w;
    }
    [0, 1, 2, 3].map(|k| discrete_w12(&diff[k], length))
}

/// Rod fields reconstructed from observables: values interpolated linearly,
/// `v′` from neighbouring differences.
fn rod_from_observables(obs: &Observables) -> impl Fn(f64) -> RodPoint + '_ {
    move |x| {
        let n = obs.x1.len() - 1;
        let dx = obs.x1[n] / n as f64;
        let slope = |v: &[f64]| {
            let i = ((x / dx).round() as usize).min(n);
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n));
            (v[b] - v[a]) / ((b - a) as f64 * dx)
        };
        RodPoint {
            u: interp(&obs.x1, &obs.u, x),
            v: [interp(&obs.x1, &obs.v2, x), interp(&obs.x1, &obs.v3, x)],
            dv: [slope(&obs.v2), slope(&obs.v3)],
            w: interp(&obs.x1, &obs.w, x),
            ..RodPoint::default()
        }
    }
}

fn rung_metrics(
    problem: &BeamProblem,
    out: &MinimizeOutcome,
    reference: &RodReference,
    common: usize,
) -> RungMetrics {
    let fit = fit_rotations(problem, &out.field);
    let moments = strain_stress_moments(problem, &out.field, &fit);
    let ov = outer_variation_residuals(problem, &out.field);
    let [eu, ev2, ev3, ew] = observable_errors(&out.observables, &reference.state, common, problem.mesh.length);
    RungMetrics {
        error_u: eu,
        error_v2: ev2,
        error_v3: ev3,
        error_w: ew,
        energy: out.observables.energy,
        scaling_ratio: out.observables.scaling_ratio,
        rotation_distance: fit.distance_l2,
        rotation_derivative: fit.derivative_l2,
        rotation_deviation: fit.deviation_linf,
        rotation_orthogonality: fit.orthogonality_error.max(fit.det_error),
        mean_stress: moments.mean_l2,
        stress_asymmetry: moments.asymmetry,
        axis_distance: distance_to_axis(problem, &out.field),
        stationarity: out.observables.stationarity_residual,
        outer_variation: ov.max_relative(),
        iterations: out.report.iterations,
    }
}

/// Runs every rung; `on_rung` sees each converged state (for per-rung output).
pub fn run_ladder_with<F>(spec: &LadderSpec, mut on_rung: F) -> Result<ConvergenceReport>
where
    F: FnMut(usize, &BeamProblem, &MinimizeOutcome) -> Result<()>,
{
    spec.validate()?;
    let reference = rod_reference(spec)?;
    let common = spec.axial_elems.iter().copied().min().unwrap_or(1);
    let tip = reference.state.eval(spec.length);
    let mut report = ConvergenceReport {
        alpha: spec.alpha,
        config_hash: spec.config_hash.clone(),
        reference_nodes: spec.rod_nodes,
        reference_residual: reference.max_residual,
        reference_tip: tip.v,
        common_elems: common,
        rungs: Vec::new(),
    };
    let mut previous: Option<Observables> = None;
    for rung in 0..spec.h_values.len() {
        let config = spec.beam_config(rung);
        let problem = BeamProblem::new(&config)?;
        let start = match (&previous, spec.warm_start) {
            (Some(obs), true) => {
                let f = DeformationField::from_rod_ansatz(&problem.mesh, spec.alpha, rod_from_observables(obs));
                if problem.energy(&f).is_finite() {
                    f
                } else {
                    DeformationField::reference(&problem.mesh, spec.alpha)
                }
            }
            _ => DeformationField::reference(&problem.mesh, spec.alpha),
        };
        let mut record = RungRecord {
            h: config.h,
            axial_elems: config.axial_elems,
            config_hash: spec.rung_hash(rung),
            metrics: None,
            failure: None,
        };
        match minimize_from(&problem, start, &spec.solver) {
            Ok(out) => {
                record.metrics = Some(rung_metrics(&problem, &out, &reference, common));
                on_rung(rung, &problem, &out)?;
                previous = Some(out.observables);
            }
            Err(e) if e.is_numerical() => {
                record.failure = Some(e.to_string());
                previous = None;
            }
            Err(e) => return Err(e),
        }
        report.rungs.push(record);
    }
    Ok(report)
}

pub fn run_ladder(spec: &LadderSpec) -> Result<ConvergenceReport> {
    run_ladder_with(spec, |_, _, _| Ok(()))
}

/// Least-squares fit of `log e = c + p log h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub observable: String,
    pub points: usize,
    /// `None` when some value is not positive.
    pub slope: Option<f64>,
    pub std_error: Option<f64>,
    pub intercept: Option<f64>,
    /// Values strictly decreasing along the ladder.
    pub decreasing: bool,
}

pub fn fit_loglog(observable: &str, h: &[f64], e: &[f64]) -> Result<RateEstimate> {
    let n = h.len().min(e.len());
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let mut est = RateEstimate {
        observable: observable.to_string(),
        points: n,
        slope: None,
        std_error: None,
        intercept: None,
        decreasing,
    };
    if e.iter().chain(h).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Ok(est);
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Ok(est);
    }
    let p = sxy / sxx;
    let c = my - p * mx;
    let ssr: f64 = x.iter().zip(&y).map(|(a, b)| (b - c - p * a).powi(2)).sum();
    est.slope = Some(p);
    est.intercept = Some(c);
    est.std_error = Some((ssr / (n as f64 - 2.0) / sxx).sqrt());
    Ok(est)
}

type Series = (&'static str, fn(&RungMetrics) -> f64);

/// Ladder quantities that get a rate and a plot.
pub const SERIES: [Series; 9] = [
    ("error_u", |m| m.error_u),
    ("error_v2", |m| m.error_v2),
    ("error_v3", |m| m.error_v3),
    ("error_w", |m| m.error_w),
    ("scaling_ratio", |m| m.scaling_ratio),
    ("rotation_distance", |m| m.rotation_distance),
    ("rotation_derivative", |m| m.rotation_derivative),
    ("mean_stress", |m| m.mean_stress),
    ("axis_distance", |m| m.axis_distance),
];

pub fn series(report: &ConvergenceReport, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
    let (_, get) = SERIES.iter().find(|(n, _)| *n == name)?;
    Some(report.successful().map(|(h, m)| (h, get(m))).unzip())
}

pub fn estimate_rates(report: &ConvergenceReport) -> Result<Vec<RateEstimate>> {
    SERIES
        .iter()
        .map(|(name, _)| {
            let (h, e) = series(report, name).unwrap_or_default();
            fit_loglog(name, &h, &e)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct EmitSummary {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const CSV_HEADER: &str = "h,axial_elems,status,error_u,error_v2,error_v3,error_w,energy,scaling_ratio,rotation_distance,rotation_derivative,rotation_deviation,rotation_orthogonality,mean_stress,stress_asymmetry,axis_distance,stationarity,outer_variation,iterations,config_hash";

pub fn ladder_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rungs {
        let _ = write!(s, "{:e},{},", r.h, r.axial_elems);
        match &r.metrics {
            Some(m) => {
                let _ = write!(
                    s,
                    "ok,{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},",
                    m.error_u,
                    m.error_v2,
                    m.error_v3,
                    m.error_w,
                    m.energy,
                    m.scaling_ratio,
                    m.rotation_distance,
                    m.rotation_derivative,
                    m.rotation_deviation,
                    m.rotation_orthogonality,
                    m.mean_stress,
                    m.stress_asymmetry,
                    m.axis_distance,
                    m.stationarity,
                    m.outer_variation,
                    m.iterations
                );
            }
            None => s.push_str("failed,,,,,,,,,,,,,,,,,"),
        }
        s.push_str(&r.config_hash);
        s.push('\n');
    }
    s
}

fn write(path: PathBuf, contents: &[u8], summary: &mut EmitSummary) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    summary.files.push(path);
    Ok(())
}

/// Writes `ladder.csv`, `report.json`, `rates.json` and `plots/<series>.svg`.
pub fn emit_report(report: &ConvergenceReport, out_dir: &Path) -> Result<EmitSummary> {
    let mut summary = EmitSummary::default();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir.join("ladder.csv"), ladder_csv(report).as_bytes(), &mut summary)?;
    write(out_dir.join("report.json"), report.to_json_string()?.as_bytes(), &mut summary)?;
    let rates = match estimate_rates(report) {
        Ok(r) => r,
        Err(e @ Error::InsufficientData { .. }) => {
            summary.warnings.push(format!("no rates: {e}"));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let rates_json = serde_json::to_string_pretty(&rates).map_err(|e| Error::Serialization(e.to_string()))?;
    write(out_dir.join("rates.json"), rates_json.as_bytes(), &mut summary)?;
    if report.successful().next().is_none() {
        summary.warnings.push("no successful rungs, no plots written".into());
        return Ok(summary);
    }
    let plots = out_dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for (name, _) in SERIES {
        let (h, e) = series(report, name).unwrap_or_default();
        let fit = rates.iter().find(|r| r.observable == name);
        if let Some(svg) = loglog_svg(name, &h, &e, fit) {
            write(plots.join(format!("{name}.svg")), svg.as_bytes(), &mut summary)?;
        } else {
            summary.warnings.push(format!("{name}: no positive values, plot skipped"));
        }
    }
    Ok(summary)
}

/// Log-log plot of `e` against `h` with the fitted line, as SVG text.
pub fn loglog_svg(title: &str, h: &[f64], e: &[f64], fit: Option<&RateEstimate>) -> Option<String> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (w, ht, m) = (480.0, 360.0, 60.0);
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = (lo.floor(), hi.ceil());
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| ht - m - (y - y0) / (y1 - y0) * (ht - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        ht - 2.0 * m
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"##,
            m,
            ht - m,
            ht - m + 16.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{m}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            w - m,
            m - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">h</text>"#, w / 2.0, ht - 12.0);
    if let Some(RateEstimate {
        slope: Some(p),
        intercept: Some(c),
        std_error,
        ..
    }) = fit
    {
        let (a, b) = (x0.max(pts.iter().map(|q| q.0).fold(f64::INFINITY, f64::min)), x1.min(pts.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max)));
        let l10 = std::f64::consts::LN_10;
        let line = |x: f64| (c / l10) + p * x;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue" stroke-dasharray="4 3"/>"#,
            sx(a),
            sy(line(a)),
            sx(b),
            sy(line(b))
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="steelblue">slope {p:.3} ± {:.3}</text>"#,
            m + 8.0,
            m + 16.0,
            std_error.unwrap_or(f64::NAN)
        );
    }
    let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black"/>"#, path.join(" "));
    for p in &pts {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="crimson"/>"#, sx(p.0), sy(p.1));
    }
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law_has_exact_slope() {
        let h = [0.2, 0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v| v * v).collect();
        let r = fit_loglog("e", &h, &e).unwrap();
        assert!((r.slope.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.std_error.unwrap() < 1e-12);
        assert!(r.decreasing);
    }

    #[test]
    fn noisy_power_law_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];
        let e: Vec<f64> = h
            .iter()
            .map(|v| 3.0 * v.powf(1.5) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            .collect();
        let r = fit_loglog("e", &h, &e).unwrap();
        assert!((r.slope.unwrap() - 1.5).abs() < 0.1);
    }

    #[test]
    fn constant_errors_are_flagged() {
        let r = fit_loglog("e", &[0.2, 0.1, 0.05], &[1.0, 1.0, 1.0]).unwrap();
        assert!(r.slope.unwrap().abs() < 1e-14);
        assert!(!r.decreasing);
        assert!(matches!(
            fit_loglog("e", &[0.2, 0.1], &[1.0, 0.5]),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn w12_of_linear_function() {
        // f = x on (0,1): ∫f² = 1/3 (trapezoid gives 1/3 + 1/(6n²)), ∫f′² = 1
        let n = 10;
        let v: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let expect = (1.0 / 3.0 + 1.0 / (6.0 * (n * n) as f64) + 1.0_f64).sqrt();
        assert!((discrete_w12(&v, 1.0) - expect).abs() < 1e-14);
    }

    fn empty_report() -> ConvergenceReport {
        ConvergenceReport {
            alpha: 3.0,
            config_hash: "x".into(),
            reference_nodes: 5,
            reference_residual: 0.0,
            reference_tip: [0.0, 0.0],
            common_elems: 4,
            rungs: Vec::new(),
        }
    }

    #[test]
    fn empty_ladder_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let s = emit_report(&empty_report(), dir.path()).unwrap();
        assert!(!s.warnings.is_empty());
        let csv = std::fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(!dir.path().join("plots").exists());
    }

    #[test]
    fn failed_rungs_keep_the_row_shape() {
        let mut r = empty_report();
        r.rungs.push(RungRecord {
            h: 0.1,
            axial_elems: 8,
            config_hash: "abc".into(),
            metrics: None,
            failure: Some("line search failed".into()),
        });
        let csv = ladder_csv(&r);
        let cols = |l: &str| l.split(',').count();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(cols(lines[0]), cols(lines[1]));
    }

    #[test]
    fn invalid_ladders_are_rejected() {
        use crate::cross_section::unit_disc;
        let mut spec = LadderSpec {
            alpha: 3.0,
            h_values: vec![0.1, 0.2],
            axial_elems: vec![4, 8],
            length: 1.0,
            rod_nodes: 17,
            section: unit_disc(2).unwrap(),
            material: StoredEnergy::neo_hookean(1.0, 1.0).unwrap(),
            loads: RodLoads::zero(),
            quadrature: AxialQuadrature::Midpoint,
            solver: SolverOptions::default(),
            warm_start: true,
            config_hash: String::new(),
        };
        assert!(spec.validate().is_err());
        spec.h_values = vec![0.2, 0.1];
        spec.axial_elems = vec![4];
        assert!(spec.validate().is_err());
        spec.axial_elems = vec![4, 8];
        spec.validate().unwrap();
        // zero loads: every error vanishes identically
        let report = run_ladder(&spec).unwrap();
        for (_, m) in report.successful() {
            assert_eq!(m.error_v2, 0.0);
            assert_eq!(m.error_u, 0.0);
            assert_eq!(m.energy, 0.0);
        }
    }
}
