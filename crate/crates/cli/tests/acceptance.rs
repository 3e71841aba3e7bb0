//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinrod_core::beam3d::{self, AxialQuadrature, BeamProblem, SolverOptions};
use thinrod_core::cell_problem::{q1_matrix, young_modulus};
use thinrod_core::convergence::{estimate_rates, run_ladder, series, ConvergenceReport};
use thinrod_core::cross_section::{unit_disc, unit_square};
use thinrod_core::material::{ElasticTensor, StoredEnergy};
use thinrod_core::rod_model::{el_residuals, recover_u, solve_equilibrium};
use thinrod_core::{AlphaRegime, BeamConfig, DeformationField, LoadFn, ReducedStiffness, RodLoads, RodState, RunConfig};

/// Finest-rung `v₂` error of the canonical ladder, frozen from a reference run.
const GOLDEN_ERROR_V2: f64 = 9.707071215378445e-6;
const GOLDEN_REL_TOL: f64 = 0.10;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    /// Every computed number, formatted exactly; compared across reruns.
    digest: String,
}

fn outcome(id: usize, name: &'static str, checks: &[(bool, String)], digest: String) -> Outcome {
    let pass = checks.iter().all(|c| c.0);
    let detail = checks
        .iter()
        .map(|(ok, msg)| if *ok { msg.clone() } else { format!("[fail] {msg}") })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        id,
        name,
        pass,
        detail,
        digest,
    }
}

fn failed(id: usize, name: &'static str, e: impl std::fmt::Display) -> Outcome {
    Outcome {
        id,
        name,
        pass: false,
        detail: format!("error: {e}"),
        digest: String::new(),
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn canonical_config() -> RunConfig {
    RunConfig::load(&workspace_root().join("configs/ladder_alpha3.toml")).expect("canonical ladder config")
}

// ---------------------------------------------------------------------------
// 1. relaxed Young's modulus

/// `Q₃(sym G)` for `G = [e₁ | b | c]`, written out by hand.
fn q3_columns(mu: f64, lambda: f64, p: &[f64; 6]) -> f64 {
    let g = [[1.0, p[0], p[3]], [0.0, p[1], p[4]], [0.0, p[2], p[5]]];
    let mut sym2 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let s = 0.5 * (g[i][j] + g[j][i]);
            sym2 += s * s;
        }
    }
    let tr = g[0][0] + g[1][1] + g[2][2];
    2.0 * mu * sym2 + lambda * tr * tr
}

/// Minimizes the quadratic over the six free column entries by steepest
/// descent with exact line search; derivatives by central differences, which
/// are exact for quadratics up to rounding.
fn young_oracle(mu: f64, lambda: f64) -> f64 {
    let f = |p: &[f64; 6]| q3_columns(mu, lambda, p);
    let grad = |p: &[f64; 6]| {
        let mut g = [0.0; 6];
        for k in 0..6 {
            let (mut a, mut b) = (*p, *p);
            a[k] += 0.5;
            b[k] -= 0.5;
            g[k] = f(&a) - f(&b);
        }
        g
    };
    let mut p = [0.0; 6];
    for _ in 0..10_000 {
        let g = grad(&p);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg < 1e-28 {
            break;
        }
        // curvature along g: f(p + g) − 2f(p) + f(p − g) = gᵀAg
        let mut a = p;
        let mut b = p;
        for k in 0..6 {
            a[k] += g[k];
            b[k] -= g[k];
        }
        let curv = f(&a) - 2.0 * f(&p) + f(&b);
        if !(curv > 0.0) {
            break;
        }
        let t = gg / curv;
        for k in 0..6 {
            p[k] -= t * g[k];
        }
    }
    f(&p)
}

fn criterion_1() -> Outcome {
    let name = "relaxed Young's modulus";
    let mut checks = Vec::new();
    let mut digest = String::new();
    for (mu, lambda) in [(1.0, 1.0), (1.0, 0.0)] {
        let l = ElasticTensor { mu, lambda };
        let e = match young_modulus(&l) {
            Ok(e) => e,
            Err(e) => return failed(1, name, e),
        };
        let closed = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
        let oracle = young_oracle(mu, lambda);
        checks.push((
            (e - closed).abs() <= 1e-10 && (e - oracle).abs() <= 1e-10,
            format!("mu={mu} lambda={lambda}: E={e:.12} closed={closed:.12} oracle={oracle:.12}"),
        ));
        digest += &format!("{e:e},{oracle:e};");
    }
    outcome(1, name, &checks, digest)
}

// ---------------------------------------------------------------------------
// 2 and 3. cell problem

fn cell_stiffness(section: thinrod_core::Result<thinrod_core::CrossSection>, mu: f64, lambda: f64) -> thinrod_core::Result<ReducedStiffness> {
    let section = section?.normalize()?;
    q1_matrix(&section, &ElasticTensor { mu, lambda })
}

fn criterion_2() -> Outcome {
    let name = "bending stiffness of the disc";
    let fine = match cell_stiffness(unit_disc(41), 1.0, 1.0) {
        Ok(s) => s,
        Err(e) => return failed(2, name, e),
    };
    let coarse = match cell_stiffness(unit_disc(20), 1.0, 1.0) {
        Ok(s) => s,
        Err(e) => return failed(2, name, e),
    };
    let target = 2.5 / (4.0 * std::f64::consts::PI);
    let rel = |s: &ReducedStiffness, i: usize| (s.q1[i][i] - target).abs() / target;
    let mut checks = Vec::new();
    for i in 0..2 {
        checks.push((
            rel(&fine, i) <= 0.01,
            format!("Q{0}{0}={1:.6} target={target:.6} rel={2:.2e}", i + 1, fine.q1[i][i], rel(&fine, i)),
        ));
        let ratio = rel(&coarse, i) / rel(&fine, i);
        checks.push((ratio >= 2.0, format!("refinement gain {ratio:.2}")));
    }
    let digest = format!("{:?}{:?}", fine.q1, coarse.q1);
    outcome(2, name, &checks, digest)
}

/// Torsion constant of the unit square from the Saint-Venant series
/// `J = (1/3)(1 − (192/π⁵) Σ_{n odd} tanh(nπ/2)/n⁵)`.
fn square_torsion_series() -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    let mut n = 1.0_f64;
    while n < 200.0 {
        s += (n * pi / 2.0).tanh() / n.powi(5);
        n += 2.0;
    }
    (1.0 - 192.0 / pi.powi(5) * s) / 3.0
}

fn criterion_3() -> Outcome {
    let name = "torsional stiffness";
    let mu = 1.0;
    let disc = match cell_stiffness(unit_disc(41), mu, 1.0) {
        Ok(s) => s,
        Err(e) => return failed(3, name, e),
    };
    let square = match cell_stiffness(unit_square(64), mu, 1.0) {
        Ok(s) => s,
        Err(e) => return failed(3, name, e),
    };
    let disc_target = mu / (2.0 * std::f64::consts::PI);
    let j = square_torsion_series();
    let disc_rel = (disc.q1[2][2] - disc_target).abs() / disc_target;
    let square_rel = (square.q1[2][2] - mu * 0.140577).abs() / (mu * 0.140577);
    let checks = [
        (disc_rel <= 0.01, format!("disc Q33={:.6} target={disc_target:.6} rel={disc_rel:.2e}", disc.q1[2][2])),
        ((j - 0.140577).abs() <= 1e-6, format!("series oracle J={j:.7}")),
        (square_rel <= 0.01, format!("square Q33={:.6} rel={square_rel:.2e}", square.q1[2][2])),
    ];
    outcome(3, name, &checks, format!("{:e},{:e}", disc.q1[2][2], square.q1[2][2]))
}

// ---------------------------------------------------------------------------
// 4 and 5. rod model

fn criterion_4() -> Outcome {
    let name = "rod cantilever";
    let st = match ReducedStiffness::synthetic(1.0, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]) {
        Ok(s) => s,
        Err(e) => return failed(4, name, e),
    };
    let regime = AlphaRegime::from_alpha(3.0).unwrap();
    let loads = RodLoads::new(LoadFn::Const(1.0), LoadFn::zero());
    let s = match solve_equilibrium(&regime, &st, &loads, 1.0, 64) {
        Ok(s) => s,
        Err(e) => return failed(4, name, e),
    };
    let tip = s.v2.last().unwrap()[0];
    let r = el_residuals(&s, &regime, &st, &loads);
    let w_max = s.w.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let checks = [
        ((tip - 0.125).abs() <= 1e-6, format!("v2(1)={tip:.12}")),
        (r.max_relative() <= 1e-8, format!("residual={:.2e}", r.max_relative())),
        (w_max <= 1e-10, format!("max|w|={w_max:.1e}")),
    ];
    outcome(4, name, &checks, format!("{tip:e},{:e},{w_max:e}", r.max_relative()))
}

fn criterion_5() -> Outcome {
    let name = "stretching recovery";
    let s = match RodState::from_fns(1.0, 33, |_| 0.0, |x| [0.5 * x * x, x], |_| [0.0, 0.0], |_| 0.0) {
        Ok(s) => s,
        Err(e) => return failed(5, name, e),
    };
    let crit = recover_u(&s, &AlphaRegime::from_alpha(3.0).unwrap());
    let err = crit
        .x
        .iter()
        .zip(&crit.u)
        .fold(0.0_f64, |m, (x, u)| m.max((u + x.powi(3) / 6.0).abs()));
    let sup = recover_u(&s, &AlphaRegime::from_alpha(4.0).unwrap());
    let sup_max = sup.u.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    let checks = [
        (err <= 1e-8, format!("max|u + x^3/6|={err:.1e}")),
        (sup_max == 0.0, format!("alpha=4 max|u|={sup_max:e}")),
    ];
    outcome(5, name, &checks, format!("{err:e},{sup_max:e}"))
}

// ---------------------------------------------------------------------------
// 6 and 7. three-dimensional energy

fn beam_config(h: f64, alpha: f64, f2: f64) -> BeamConfig {
    BeamConfig {
        h,
        alpha,
        length: 1.0,
        axial_elems: 8,
        section: unit_disc(2).unwrap().normalize().unwrap(),
        material: StoredEnergy::neo_hookean(1.0, 1.0).unwrap(),
        loads: RodLoads::new(LoadFn::Const(f2), LoadFn::zero()),
        quadrature: AxialQuadrature::Midpoint,
        solver: SolverOptions::default(),
    }
}

fn criterion_6() -> Outcome {
    let name = "3D energy gradient";
    let h = 0.1;
    let alpha = 3.0;
    let cfg = beam_config(h, alpha, 0.5);
    let problem = match BeamProblem::new(&cfg) {
        Ok(p) => p,
        Err(e) => return failed(6, name, e),
    };
    let mesh = &problem.mesh;
    let amp = 0.05 * h.powf(alpha - 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let clamped: Vec<usize> = (0..mesh.section_nodes()).map(|j| mesh.node(0, j)).collect();
    let random_disp = |rng: &mut ChaCha8Rng| {
        let mut d: Vec<[f64; 3]> = (0..mesh.node_count())
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        for &n in &clamped {
            d[n] = [0.0; 3];
        }
        d
    };
    let mut worst = 0.0_f64;
    let mut digest = String::new();
    for _state in 0..3 {
        let mut field = DeformationField::reference(mesh, alpha);
        for (d, r) in field.disp.iter_mut().zip(random_disp(&mut rng)) {
            *d = [amp * r[0], amp * r[1], amp * r[2]];
        }
        let (_, grad) = problem.energy_and_gradient(&field);
        let Some(grad) = grad else {
            return failed(6, name, "random state left the admissible set");
        };
        for _dir in 0..20 {
            let dir = random_disp(&mut rng);
            let at = |t: f64| {
                let mut f = field.clone();
                for (d, v) in f.disp.iter_mut().zip(&dir) {
                    for k in 0..3 {
                        d[k] += t * v[k];
                    }
                }
                problem.energy(&f).to_f64()
            };
            let eps = 1e-4 * amp;
            let fd = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
            let exact: f64 = grad.chunks_exact(3).zip(&dir).map(|(g, v)| g[0] * v[0] + g[1] * v[1] + g[2] * v[2]).sum();
            let rel = (fd - exact).abs() / exact.abs().max(1e-300);
            worst = worst.max(rel);
            digest += &format!("{exact:e};");
        }
    }
    let checks = [(worst <= 1e-6, format!("60 directions on 3 states at h={h}, worst rel err {worst:.2e}"))];
    outcome(6, name, &checks, digest)
}

fn criterion_7() -> Outcome {
    let name = "zero load";
    let mut checks = Vec::new();
    let mut digest = String::new();
    for alpha in [2.5, 3.0, 4.0] {
        let cfg = beam_config(0.1, alpha, 0.0);
        match beam3d::minimize(&cfg) {
            Ok(out) => {
                let e = out.report.energy.abs();
                let obs = out.observables;
                let m = [&obs.u, &obs.v2, &obs.v3, &obs.w]
                    .iter()
                    .flat_map(|v| v.iter())
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
                checks.push((e <= 1e-12 && m <= 1e-8, format!("alpha={alpha}: |J|={e:.1e} max obs={m:.1e}")));
                digest += &format!("{e:e},{m:e};");
            }
            Err(e) => return failed(7, name, e),
        }
    }
    outcome(7, name, &checks, digest)
}

// ---------------------------------------------------------------------------
// 8 and 9. thickness ladders

fn ladder(alpha: f64) -> thinrod_core::Result<ConvergenceReport> {
    let mut cfg = canonical_config();
    if let Some(rod) = cfg.rod.as_mut() {
        rod.alpha = alpha;
    }
    run_ladder(&cfg.ladder_spec()?)
}

fn values(report: &ConvergenceReport, name: &str) -> Vec<f64> {
    series(report, name).map(|(_, e)| e).unwrap_or_default()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn decreasing_with_slack(e: &[f64], slack: f64) -> bool {
    e.windows(2).all(|w| w[1] < (1.0 + slack) * w[0])
}

fn criterion_8(report: &ConvergenceReport) -> Outcome {
    let name = "canonical ladder";
    let rates = match estimate_rates(report) {
        Ok(r) => r,
        Err(e) => return failed(8, name, e),
    };
    let all_ok = report.rungs.iter().all(|r| r.metrics.is_some());
    let v2 = values(report, "error_v2");
    let ratio = values(report, "scaling_ratio");
    let stress = values(report, "mean_stress");
    let slope = rates
        .iter()
        .find(|r| r.observable == "error_v2")
        .and_then(|r| r.slope)
        .unwrap_or(f64::NAN);
    let (lo, hi) = ratio.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let finest = v2.last().copied().unwrap_or(f64::NAN);
    let golden_rel = (finest - GOLDEN_ERROR_V2).abs() / GOLDEN_ERROR_V2;
    let checks = [
        (all_ok, format!("{} rungs converged", report.successful().count())),
        (decreasing_with_slack(&v2, 0.10), format!("error_v2 {}", sci(&v2))),
        (lo > 0.0 && hi / lo <= 10.0, format!("scaling ratio in [{lo:.3e}, {hi:.3e}]")),
        (slope >= 3.0 - 1.0 - 0.3, format!("error_v2 slope {slope:.3}")),
        (stress.windows(2).all(|w| w[1] < w[0]), format!("mean stress {}", sci(&stress))),
        (golden_rel <= GOLDEN_REL_TOL, format!("finest error_v2 vs golden rel {golden_rel:.2e}")),
    ];
    outcome(8, name, &checks, report.to_json_string().unwrap_or_default())
}

fn criterion_9(base: &ConvergenceReport, others: &[(f64, thinrod_core::Result<ConvergenceReport>)]) -> Outcome {
    let name = "other thickness exponents";
    let mut checks = Vec::new();
    let mut digest = String::new();
    for (alpha, report) in others {
        let report = match report {
            Ok(r) => r,
            Err(e) => return failed(9, name, format!("alpha={alpha}: {e}")),
        };
        // Gate on the error of the triple (v₂, v₃, w); per-component ratios
        // are reported. The twist error sits near rounding level and scales
        // like h^{α−2}, so its ratio alone is not meaningful.
        let triple = |r: &ConvergenceReport| -> Vec<f64> {
            let (a, b, c) = (values(r, "error_v2"), values(r, "error_v3"), values(r, "error_w"));
            a.iter().zip(&b).zip(&c).map(|((x, y), z)| (x * x + y * y + z * z).sqrt()).collect()
        };
        let (t, t0) = (triple(report), triple(base));
        let ok = t.len() == report.rungs.len() && t.len() == t0.len() && t.iter().zip(&t0).all(|(x, y)| *x <= 2.0 * y);
        let ratios: Vec<f64> = t.iter().zip(&t0).map(|(x, y)| x / y).collect();
        checks.push((ok, format!("alpha={alpha} (v2,v3,w) error {} ratio to alpha=3 {}", sci(&t), sci(&ratios))));
        for obs in ["error_v2", "error_v3", "error_w"] {
            let r: Vec<f64> = values(report, obs).iter().zip(values(base, obs)).map(|(x, y)| x / y).collect();
            checks.push((true, format!("info {obs} ratio {}", sci(&r))));
        }
        let u = values(report, "error_u");
        let u_slope = estimate_rates(report)
            .ok()
            .and_then(|r| r.into_iter().find(|r| r.observable == "error_u"))
            .and_then(|r| r.slope)
            .unwrap_or(f64::NAN);
        checks.push((
            decreasing_with_slack(&u, 0.10) && u_slope > 0.5,
            format!("alpha={alpha} error_u {} slope {u_slope:.2}", sci(&u)),
        ));
        digest += &report.to_json_string().unwrap_or_default();
    }
    outcome(9, name, &checks, digest)
}

// ---------------------------------------------------------------------------
// 10. reproducibility

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_run(args: &[&str], out: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_thinrod"))
        .args(["--threads", "1"])
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)));
    }
    Ok(read_tree(out))
}

fn criterion_10(first: &[Outcome], second: &[Outcome]) -> Outcome {
    let name = "reproducibility";
    let mut checks = Vec::new();
    let same = first.len() == second.len() && first.iter().zip(second).all(|(a, b)| a.digest == b.digest && !a.digest.is_empty());
    checks.push((same, "criteria 1-9 recomputed with identical outputs".to_string()));

    let tmp = tempfile::tempdir().unwrap();
    let ladder = workspace_root().join("configs/ladder_alpha3.toml");
    let ladder = ladder.to_string_lossy().into_owned();
    let beam = workspace_root().join("configs/beam.toml");
    let beam = beam.to_string_lossy().into_owned();
    let runs: [(&str, Vec<&str>); 4] = [
        ("converge run", vec!["converge", "run", "--spec", &ladder]),
        ("beam3d minimize", vec!["beam3d", "minimize", "--config", &beam]),
        ("cell solve", vec!["cell", "solve", "--generator", "disc", "--rings", "12", "--family", "neo-hookean", "--mu", "1", "--lambda", "1"]),
        ("material check", vec!["material", "check", "--samples", "200", "--family", "neo-hookean", "--mu", "1", "--lambda", "1"]),
    ];
    for (i, (label, args)) in runs.iter().enumerate() {
        let a = cli_run(args, &tmp.path().join(format!("{i}a")));
        let b = cli_run(args, &tmp.path().join(format!("{i}b")));
        match (a, b) {
            (Ok(a), Ok(b)) => checks.push((a == b && !a.is_empty(), format!("{label}: {} files byte-identical", a.len()))),
            (Err(e), _) | (_, Err(e)) => checks.push((false, e)),
        }
    }
    outcome(10, name, &checks, String::new())
}

fn evaluate() -> Vec<Outcome> {
    let base = ladder(3.0);
    let others = vec![(2.5, ladder(2.5)), (4.0, ladder(4.0))];
    let mut out = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(), criterion_7()];
    match &base {
        Ok(report) => {
            out.push(criterion_8(report));
            out.push(criterion_9(report, &others));
        }
        Err(e) => {
            out.push(failed(8, "canonical ladder", e));
            out.push(failed(9, "other thickness exponents", e));
        }
    }
    out
}

fn main() {
    // libtest-style flags (e.g. from `cargo test -- --nocapture`) are ignored.
    let first = evaluate();
    let second = evaluate();
    let tenth = criterion_10(&first, &second);
    let mut all = first;
    all.push(tenth);
    let mut failures = 0;
    println!();
    for o in &all {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("criterion {:>2} {tag}  {}: {}", o.id, o.name, o.detail);
    }
    println!("\nacceptance: {} passed, {failures} failed", all.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
