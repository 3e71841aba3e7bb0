use std::path::{Path, PathBuf};

use serde::Serialize;
use thinrod_core::beam3d::{
    self, fit_rotations, outer_variation_residuals, strain_stress_moments, BeamProblem, OuterVariation, SolverReport,
};
use thinrod_core::cell_problem::{q1_matrix, young_modulus};
use thinrod_core::config::{ProbeBlock, RodSpec, SectionSpec};
use thinrod_core::convergence::{emit_report, run_ladder_with, ConvergenceReport};
use thinrod_core::cross_section::{MeshStats, SectionMoments};
use thinrod_core::error::{Error, Result};
use thinrod_core::material::{probe_hypotheses, EnergyFamily, ProbeReport};
use thinrod_core::rod_model::{el_residuals, recover_u, solve_equilibrium, stress_moments_1d, ElResiduals, Regime};
use thinrod_core::{CrossSection, LoadFn, ReducedStiffness, RunConfig, StoredEnergy};

use crate::run_dir::RunDir;
use crate::{BeamArgs, CellArgs, Common, LadderArgs, MaterialArgs, MaterialFlags, PlotArgs, RodArgs, SectionArgs, SectionFlags};

const DEFAULT_PROBE_SAMPLES: usize = 2000;

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key `{key}`"))
}

fn absolute(p: &Path) -> Result<String> {
    let abs = std::path::absolute(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(abs.to_string_lossy().into_owned())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(out: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match (out, &cfg.output_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(cfg.resolve(d)),
        (None, None) => Err(Error::Config("missing key `output_dir` (or pass --out)".into())),
    }
}

fn apply_material(cfg: &mut RunConfig, flags: &MaterialFlags) -> Result<()> {
    if flags.family.is_none() && flags.mu.is_none() && flags.lambda.is_none() {
        return Ok(());
    }
    let base = cfg.material;
    let family = match &flags.family {
        Some(f) => f.parse::<EnergyFamily>()?,
        None => base.map(|m| m.family).unwrap_or(EnergyFamily::CompressibleNeoHookean),
    };
    let mu = flags.mu.or(base.map(|m| m.mu)).ok_or_else(|| missing("material.mu"))?;
    let lambda = flags
        .lambda
        .or(base.map(|m| m.lambda))
        .ok_or_else(|| missing("material.lambda"))?;
    cfg.material = Some(StoredEnergy { family, mu, lambda });
    Ok(())
}

fn apply_section(cfg: &mut RunConfig, flags: &SectionFlags) -> Result<()> {
    let generator = match (&flags.generator, &flags.mesh) {
        (Some(g), _) => g.as_str(),
        (None, Some(_)) => "file",
        (None, None) => return Ok(()),
    };
    cfg.section = Some(match generator {
        "disc" => SectionSpec::Disc {
            rings: flags.rings.ok_or_else(|| missing("section.rings"))?,
        },
        "square" => SectionSpec::Square {
            n: flags.n.ok_or_else(|| missing("section.n"))?,
        },
        "file" => SectionSpec::File {
            path: absolute(flags.mesh.as_deref().ok_or_else(|| missing("section.path"))?)?,
        },
        other => {
            return Err(Error::Input(format!(
                "unknown section generator `{other}` (disc, square or file; rectangles and polygons via --config)"
            )))
        }
    });
    Ok(())
}

#[derive(Serialize)]
struct SectionInfo {
    moments: SectionMoments,
    stats: MeshStats,
}

fn section_info_of(s: &CrossSection) -> SectionInfo {
    SectionInfo {
        moments: s.moments(),
        stats: s.stats(),
    }
}

#[derive(Serialize)]
struct MaterialReport {
    family: EnergyFamily,
    mu: f64,
    lambda: f64,
    /// Relaxed axial stiffness from the linearization.
    young_modulus: f64,
    /// `mu (3 lambda + 2 mu) / (lambda + mu)`
    young_closed_form: f64,
    probes: ProbeReport,
}

pub fn material_check(a: MaterialArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_material(&mut cfg, &a.material)?;
    let samples = a
        .samples
        .or(cfg.probe.as_ref().map(|p| p.samples))
        .unwrap_or(DEFAULT_PROBE_SAMPLES);
    cfg.probe = Some(ProbeBlock { samples });
    let m = cfg.material()?;
    let out = out_dir(&a.common.out, &cfg)?;
    let mut dir = RunDir::create(&out, "material check", &cfg)?;
    let report = MaterialReport {
        family: m.family,
        mu: m.mu,
        lambda: m.lambda,
        young_modulus: young_modulus(&m.linearized())?,
        young_closed_form: m.moduli().young(),
        probes: probe_hypotheses(&m, samples, cfg.seed)?,
    };
    dir.write_json("material_check.json", &report)?;
    println!(
        "E = {:.12} (closed form {:.12})",
        report.young_modulus, report.young_closed_form
    );
    dir.finish()
}

pub fn section_info(a: SectionArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_section(&mut cfg, &a.section)?;
    let s = cfg.section()?;
    let out = out_dir(&a.common.out, &cfg)?;
    let mut dir = RunDir::create(&out, "section info", &cfg)?;
    dir.write("section.json", s.to_json_string().as_bytes())?;
    let info = section_info_of(&s);
    dir.write_json("section_info.json", &info)?;
    let csv = format!("{}\n{}\n", SectionMoments::csv_header(), info.moments.csv_row());
    dir.write("moments.csv", csv.as_bytes())?;
    println!("{}\n{}", SectionMoments::csv_header(), info.moments.csv_row());
    dir.finish()
}

pub fn cell_solve(a: CellArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_material(&mut cfg, &a.material)?;
    apply_section(&mut cfg, &a.section)?;
    let m = cfg.material()?;
    let s = cfg.section()?;
    let out = out_dir(&a.common.out, &cfg)?;
    let mut dir = RunDir::create(&out, "cell solve", &cfg)?;
    let stiffness = q1_matrix(&s, &m.linearized())?;
    dir.write("reduced_stiffness.json", stiffness.to_json_string().as_bytes())?;
    dir.write_json("section_info.json", &section_info_of(&s))?;
    println!("E = {:.12}", stiffness.e_mod);
    for row in stiffness.q1 {
        println!("Q1 {:>20.12e} {:>20.12e} {:>20.12e}", row[0], row[1], row[2]);
    }
    dir.finish()
}

#[derive(Serialize)]
struct RodReport {
    regime: Regime,
    alpha: f64,
    nodes: usize,
    tip_v2: f64,
    tip_v3: f64,
    tip_w: f64,
    residuals: ElResiduals,
}

pub fn rod_solve(a: RodArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let stiffness_path = match (&a.stiffness, cfg.rod.as_ref().and_then(|r| r.stiffness.clone())) {
        (Some(p), _) => absolute(p)?,
        (None, Some(p)) => cfg.resolve(&p).to_string_lossy().into_owned(),
        (None, None) => {
            return Err(Error::Config(
                "missing key `stiffness` (pass --stiffness or set rod.stiffness)".into(),
            ))
        }
    };
    if cfg.rod.is_none() {
        cfg.rod = Some(RodSpec {
            alpha: a.alpha.ok_or_else(|| missing("rod.alpha"))?,
            regime: None,
            length: 1.0,
            nodes: 129,
            f2: LoadFn::zero(),
            f3: LoadFn::zero(),
            stiffness: None,
        });
    }
    {
        let rod = cfg.rod.as_mut().expect("set above");
        rod.stiffness = Some(stiffness_path.clone());
        if let Some(v) = a.alpha {
            rod.alpha = v;
        }
        if let Some(f) = &a.f2 {
            rod.f2 = f.parse()?;
        }
        if let Some(f) = &a.f3 {
            rod.f3 = f.parse()?;
        }
        if let Some(l) = a.length {
            rod.length = l;
        }
        if let Some(n) = a.nodes {
            rod.nodes = n;
        }
    }
    let rod = cfg.rod()?.clone();
    let regime = rod.regime()?;
    let text = std::fs::read_to_string(&stiffness_path).map_err(|e| Error::Io {
        path: stiffness_path.clone().into(),
        source: e,
    })?;
    let stiffness = ReducedStiffness::from_json_str(&text)?;
    let loads = rod.loads();
    loads.validate()?;
    let out = out_dir(&a.common.out, &cfg)?;
    let mut dir = RunDir::create(&out, "rod solve", &cfg)?;
    let state = recover_u(
        &solve_equilibrium(&regime, &stiffness, &loads, rod.length, rod.nodes)?,
        &regime,
    );
    let residuals = el_residuals(&state, &regime, &stiffness, &loads);
    dir.write("rod_solution.csv", state.to_csv().as_bytes())?;
    let tip = state.eval(rod.length);
    let report = RodReport {
        regime: regime.regime,
        alpha: regime.alpha,
        nodes: rod.nodes,
        tip_v2: tip.v[0],
        tip_v3: tip.v[1],
        tip_w: tip.w,
        residuals,
    };
    dir.write_json("rod_residuals.json", &report)?;
    if let Ok(curves) = stress_moments_1d(&state, &stiffness) {
        let mut csv = String::from("x1,E11_tilde,E11_hat,E12_tilde,E12_hat,E13_tilde,E13_hat,torque\n");
        for &x in &state.x {
            let m = curves.at(x);
            csv.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                x,
                m.e11_tilde,
                m.e11_hat,
                m.e12_tilde,
                m.e12_hat,
                m.e13_tilde,
                m.e13_hat,
                m.torque()
            ));
        }
        dir.write("rod_moments.csv", csv.as_bytes())?;
    }
    println!(
        "v2(L) = {:.12e}  v3(L) = {:.12e}  max relative EL residual = {:.3e}",
        report.tip_v2,
        report.tip_v3,
        report.residuals.max_relative()
    );
    dir.finish()
}

#[derive(Serialize)]
struct RotationDiagnostics {
    distance_l2: f64,
    derivative_l2: f64,
    deviation_linf: f64,
    orthogonality_error: f64,
    det_error: f64,
    flagged_elements: Vec<usize>,
}

#[derive(Serialize)]
struct MomentDiagnostics {
    mean_l2: f64,
    tilde_l2: f64,
    hat_l2: f64,
    stress_l2: f64,
    strain_l2: f64,
    asymmetry: f64,
}

#[derive(Serialize)]
struct Stationarity {
    gradient_relative: f64,
    outer_variation: OuterVariation,
}

#[derive(Serialize)]
struct BeamDiagnostics {
    energy: f64,
    elastic_energy: f64,
    scaling_ratio: f64,
    solver: SolverReport,
    rotations: RotationDiagnostics,
    moments: MomentDiagnostics,
    stationarity: Stationarity,
}

fn beam_diagnostics(problem: &BeamProblem, out: &beam3d::MinimizeOutcome) -> BeamDiagnostics {
    let fit = fit_rotations(problem, &out.field);
    let sm = strain_stress_moments(problem, &out.field, &fit);
    BeamDiagnostics {
        energy: out.observables.energy,
        elastic_energy: out.observables.elastic_energy,
        scaling_ratio: out.observables.scaling_ratio,
        solver: out.report.clone(),
        rotations: RotationDiagnostics {
            distance_l2: fit.distance_l2,
            derivative_l2: fit.derivative_l2,
            deviation_linf: fit.deviation_linf,
            orthogonality_error: fit.orthogonality_error,
            det_error: fit.det_error,
            flagged_elements: fit.flagged.clone(),
        },
        moments: MomentDiagnostics {
            mean_l2: sm.mean_l2,
            tilde_l2: sm.tilde_l2,
            hat_l2: sm.hat_l2,
            stress_l2: sm.stress_l2,
            strain_l2: sm.strain_l2,
            asymmetry: sm.asymmetry,
        },
        stationarity: Stationarity {
            gradient_relative: out.observables.stationarity_residual,
            outer_variation: outer_variation_residuals(problem, &out.field),
        },
    }
}

fn write_beam_outputs(dir: &mut RunDir, prefix: &str, problem: &BeamProblem, out: &beam3d::MinimizeOutcome) -> Result<()> {
    let bin = beam3d::encode_deformation(&problem.mesh, &out.field);
    dir.write(&format!("{prefix}deformation.bin"), &bin)?;
    dir.write(&format!("{prefix}observables.csv"), out.observables.csv().as_bytes())?;
    dir.write_json(&format!("{prefix}diagnostics.json"), &beam_diagnostics(problem, out))
}

pub fn beam_minimize(a: BeamArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let config = cfg.beam_config()?;
    let out = out_dir(&a.common.out, &cfg)?;
    let mut dir = RunDir::create(&out, "beam3d minimize", &cfg)?;
    let problem = BeamProblem::new(&config)?;
    let start = thinrod_core::DeformationField::reference(&problem.mesh, config.alpha);
    let outcome = beam3d::minimize_from(&problem, start, &config.solver)?;
    write_beam_outputs(&mut dir, "", &problem, &outcome)?;
    println!(
        "energy = {:.12e}  scaling ratio = {:.6e}  iterations = {}",
        outcome.report.energy, outcome.observables.scaling_ratio, outcome.report.iterations
    );
    dir.finish()
}

fn write_report(dir: &mut RunDir, root: &Path, report: &ConvergenceReport) -> Result<()> {
    let summary = emit_report(report, root)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for f in &summary.files {
        dir.record(f)?;
    }
    Ok(())
}

pub fn converge_run(a: LadderArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.spec)?;
    let spec = cfg.ladder_spec()?;
    let out = out_dir(&a.out, &cfg)?;
    let mut dir = RunDir::create(&out, "converge run", &cfg)?;
    let report = run_ladder_with(&spec, |rung, problem, outcome| {
        write_beam_outputs(&mut dir, &format!("rung_{rung:02}/"), problem, outcome)
    })?;
    write_report(&mut dir, &out, &report)?;
    for r in &report.rungs {
        match &r.metrics {
            Some(m) => println!(
                "h = {:<6} N = {:<4} |v2 - v2*| = {:.4e}  ratio = {:.4e}  |grad y - R| = {:.4e}",
                r.h, r.axial_elems, m.error_v2, m.scaling_ratio, m.rotation_distance
            ),
            None => println!("h = {:<6} N = {:<4} failed", r.h, r.axial_elems),
        }
    }
    dir.finish()?;
    let failed = report.rungs.iter().filter(|r| r.metrics.is_none()).count();
    if failed > 0 {
        return Err(Error::Convergence {
            iterations: 0,
            reason: format!("{failed} of {} rungs failed (see report.json)", report.rungs.len()),
            gradient_norm: f64::NAN,
            energy: f64::NAN,
        });
    }
    Ok(())
}

pub fn report_plot(a: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| Error::Io {
        path: a.report.clone(),
        source: e,
    })?;
    let report = ConvergenceReport::from_json_str(&text)?;
    let snapshot = a.report.with_file_name("config_snapshot.toml");
    let cfg = if snapshot.exists() {
        RunConfig::load(&snapshot)?
    } else {
        RunConfig::new()
    };
    let mut dir = RunDir::create(&a.out, "report plot", &cfg)?;
    write_report(&mut dir, &a.out, &report)?;
    dir.finish()
}
