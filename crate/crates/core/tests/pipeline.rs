use thinrod_core::beam3d::{self, build_mesh, read_deformation, write_deformation, AxialQuadrature, SolverKind, SolverOptions};
use thinrod_core::cell_problem::q1_matrix;
use thinrod_core::convergence::{discrete_w12, rod_reference, run_ladder_with};
use thinrod_core::cross_section::{unit_disc, unit_square};
use thinrod_core::rod_model::{el_residuals, solve_equilibrium};
use thinrod_core::{AlphaRegime, BeamConfig, LoadFn, ReducedStiffness, RodLoads, RunConfig, StoredEnergy};

fn small_beam(h: f64, f2: f64) -> BeamConfig {
    BeamConfig {
        h,
        alpha: 3.0,
        length: 1.0,
        axial_elems: 16,
        section: unit_disc(3).unwrap().normalize().unwrap(),
        material: StoredEnergy::neo_hookean(1.0, 1.0).unwrap(),
        loads: RodLoads::new(LoadFn::Const(f2), LoadFn::zero()),
        quadrature: AxialQuadrature::Midpoint,
        solver: SolverOptions::default(),
    }
}

#[test]
fn cell_stiffness_survives_json_and_drives_rod() {
    let section = unit_square(12).unwrap().normalize().unwrap();
    let l = StoredEnergy::neo_hookean(1.0, 0.5).unwrap().linearized();
    let st = q1_matrix(&section, &l).unwrap();
    let back = ReducedStiffness::from_json_str(&st.to_json_string()).unwrap();
    assert_eq!(back.q1, st.q1);
    assert_eq!(back.e_mod, st.e_mod);

    let regime = AlphaRegime::from_alpha(3.0).unwrap();
    let loads = RodLoads::new(LoadFn::Sin { amp: 0.1, k: 2.0 }, LoadFn::Const(0.05));
    let rod = solve_equilibrium(&regime, &back, &loads, 1.0, 33).unwrap();
    assert!(el_residuals(&rod, &regime, &back, &loads).max_relative() < 1e-8);
    assert!(rod.v2.last().unwrap()[0] > 0.0);
    assert!(rod.v3.last().unwrap()[0] > 0.0);
}

#[test]
fn beam_tracks_rod_as_thickness_shrinks() {
    let rod_tip = |cfg: &BeamConfig| {
        let l = cfg.material.linearized();
        let st = q1_matrix(&cfg.section, &l).unwrap();
        let regime = AlphaRegime::from_alpha(cfg.alpha).unwrap();
        let s = solve_equilibrium(&regime, &st, &cfg.loads, cfg.length, 65).unwrap();
        s.v2.last().unwrap()[0]
    };
    let mut prev = f64::INFINITY;
    for h in [0.2, 0.1, 0.05] {
        let cfg = small_beam(h, 0.01);
        let out = beam3d::minimize(&cfg).unwrap();
        let tip = *out.observables.v2.last().unwrap();
        let err = (tip - rod_tip(&cfg)).abs() / rod_tip(&cfg);
        assert!(err < prev, "h={h}: {err} vs {prev}");
        prev = err;
    }
    assert!(prev < 0.05);
}

#[test]
fn newton_and_lbfgs_agree() {
    let mut cfg = small_beam(0.2, 0.01);
    let newton = beam3d::minimize(&cfg).unwrap();
    cfg.solver.kind = SolverKind::Lbfgs;
    cfg.solver.max_iterations = 5000;
    let lbfgs = beam3d::minimize(&cfg).unwrap();
    let d: Vec<f64> = newton.observables.v2.iter().zip(&lbfgs.observables.v2).map(|(a, b)| a - b).collect();
    let scale = discrete_w12(&newton.observables.v2, 1.0);
    assert!(discrete_w12(&d, 1.0) < 1e-4 * scale);
}

#[test]
fn deformation_file_round_trip() {
    let cfg = small_beam(0.1, 0.02);
    let out = beam3d::minimize(&cfg).unwrap();
    let (mesh, _) = build_mesh(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deformation.bin");
    write_deformation(&path, &mesh, &out.field).unwrap();
    // the file stores positions, so d = y − y⁰ comes back up to rounding
    let back = read_deformation(&path, &mesh).unwrap();
    for (n, (a, b)) in back.disp.iter().zip(&out.field.disp).enumerate() {
        let r = mesh.reference_position(n);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 4.0 * f64::EPSILON * (r[k].abs() + b[k].abs()));
        }
    }

    let mut coarser = cfg.clone();
    coarser.axial_elems = 8;
    let (other, _) = build_mesh(&coarser).unwrap();
    assert!(read_deformation(&path, &other).is_err());
}

#[test]
fn config_drives_a_ladder() {
    let toml = r#"
schema_version = 1
[material]
family = "neo-hookean"
mu = 1.0
lambda = 1.0
[section]
generator = "disc"
rings = 2
[rod]
alpha = 3.0
nodes = 33
f2 = "const:0.01"
[ladder]
h_values = [0.2, 0.1]
axial_elems = [8, 16]
"#;
    let cfg = RunConfig::from_toml_str(toml).unwrap();
    let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());

    let spec = cfg.ladder_spec().unwrap();
    assert!(rod_reference(&spec).unwrap().max_residual < 1e-8);
    let mut seen = Vec::new();
    let report = run_ladder_with(&spec, |rung, _, out| {
        seen.push((rung, out.report.iterations));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(report.rungs.len(), 2);
    assert_eq!(report.config_hash, cfg.hash().unwrap());
    let e: Vec<f64> = report.successful().map(|(_, m)| m.error_v2).collect();
    assert!(e[1] < e[0]);
}

#[test]
fn config_errors_are_reported() {
    assert!(RunConfig::from_toml_str("schema_version = 1\nbogus = 3\n").is_err());
    assert!(RunConfig::from_toml_str("schema_version = 7\n").is_err());
    let cfg = RunConfig::from_toml_str("schema_version = 1\n").unwrap();
    let msg = cfg.ladder_spec().unwrap_err().to_string();
    assert!(msg.contains("missing key"), "{msg}");
}
