//! Post-processing of a finite-thickness state: scaled observables, rotation
//! fits, strain/stress moments and the outer-variation residual.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{u_scale, BeamProblem, DeformationField};
use crate::material::Mat3;
use crate::quadrature::{gauss_legendre_unit, TRIANGLE_DEGREE2};
use crate::sparse::norm2;

/// Scaled section averages at the mesh stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub x1: Vec<f64>,
    pub u: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
    pub w: Vec<f64>,
    pub energy: f64,
    pub elastic_energy: f64,
    /// `∫W(∇_h y)/h^{2α−2}`
    pub scaling_ratio: f64,
    /// `‖∇𝒥^h‖` over free dofs divided by `h^{2α−2} + |𝒥^h|`.
    pub stationarity_residual: f64,
}

impl Observables {
    pub fn csv(&self) -> String {
        let mut s = String::from("x1,u_h,v2_h,v3_h,w_h\n");
        for i in 0..self.x1.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                self.x1[i], self.u[i], self.v2[i], self.v3[i], self.w[i]
            ));
        }
        s
    }

    /// Largest absolute value among the four observable curves.
    pub fn max_abs(&self) -> f64 {
        [&self.u, &self.v2, &self.v3, &self.w]
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `u^h = s_u⁻¹ ∫_S (y₁ − x₁)`, `v^h_k = h^{−(α−2)} ∫_S y_k`,
/// `w^h = (μ(S) h^{α−1})⁻¹ ∫_S (x₂y₃ − x₃y₂)` at every station.
///
/// The integrals are exact for the piecewise linear field. Terms of `y⁰`
/// drop out because the section is centered.
pub fn extract_observables(problem: &BeamProblem, field: &DeformationField) -> Observables {
    let mesh = &problem.mesh;
    let (h, alpha) = (mesh.h, problem.alpha);
    let su = u_scale(h, alpha);
    let sv = h.powf(alpha - 2.0);
    let mu_s = mesh.section.moments().mu_s;
    let sw = mu_s * h.powf(alpha - 1.0);
    let ns = mesh.section_nodes();
    let mut obs = Observables {
        x1: Vec::with_capacity(mesh.station_count()),
        u: Vec::new(),
        v2: Vec::new(),
        v3: Vec::new(),
        w: Vec::new(),
        energy: 0.0,
        elastic_energy: 0.0,
        scaling_ratio: 0.0,
        stationarity_residual: 0.0,
    };
    for i in 0..mesh.station_count() {
        let d = &field.disp[i * ns..(i + 1) * ns];
        let mut m = [0.0; 4];
        for j in 0..ns {
            let wj = mesh.node_weights[j];
            m[0] += wj * d[j][0];
            m[1] += wj * d[j][1];
            m[2] += wj * d[j][2];
            m[3] += mesh.moment_weights[0][j] * d[j][2] - mesh.moment_weights[1][j] * d[j][1];
        }
        obs.x1.push(mesh.station(i));
        obs.u.push(m[0] / su);
        obs.v2.push(m[1] / sv);
        obs.v3.push(m[2] / sv);
        obs.w.push(m[3] / sw);
    }
    let (e, g) = problem.energy_and_gradient(field);
    let scale = h.powf(2.0 * alpha - 2.0);
    obs.energy = e.to_f64();
    obs.elastic_energy = problem.elastic_energy(field).to_f64();
    obs.scaling_ratio = obs.elastic_energy / scale;
    obs.stationarity_residual = match g {
        Some(g) => {
            let gf = &g[3 * ns..];
            norm2(gf) / (scale + obs.energy.abs())
        }
        None => f64::INFINITY,
    };
    obs
}

/// Piecewise constant rotations fitted per axial element.
#[derive(Debug, Clone)]
pub struct RotationFit {
    /// Element midpoints.
    pub x1: Vec<f64>,
    pub rotations: Vec<Mat3>,
    /// Elements whose averaged gradient is numerically rank deficient;
    /// their rotation is `Id` and they are left out of every norm.
    pub flagged: Vec<usize>,
    /// `‖∇_h y − R‖_{L²(Ω)}`
    pub distance_l2: f64,
    /// `‖R′‖_{L²}` by differences between neighbouring elements.
    pub derivative_l2: f64,
    /// `max ‖R − Id‖`
    pub deviation_linf: f64,
    pub orthogonality_error: f64,
    pub det_error: f64,
}

/// `R(x₁)` := polar factor of `∇_h y` averaged over the axial element
/// containing `x₁`, with the determinant corrected to `+1`.
pub fn fit_rotations(problem: &BeamProblem, field: &DeformationField) -> RotationFit {
    let mesh = &problem.mesh;
    let nt = mesh.section.triangle_count();
    let le = mesh.element_length();
    let mut fit = RotationFit {
        x1: Vec::new(),
        rotations: Vec::new(),
        flagged: Vec::new(),
        distance_l2: 0.0,
        derivative_l2: 0.0,
        deviation_linf: 0.0,
        orthogonality_error: 0.0,
        det_error: 0.0,
    };
    let mut grads: Vec<Vec<(f64, Mat3)>> = Vec::with_capacity(mesh.axial_elems);
    for i in 0..mesh.axial_elems {
        let mut avg = Mat3::zeros();
        let mut vol = 0.0;
        let mut pts = Vec::new();
        for e in i * nt..(i + 1) * nt {
            let nodes = mesh.prism_nodes(e);
            for q in problem.quad_points(e) {
                let hm = BeamProblem::disp_gradient(&q, &nodes, &field.disp);
                avg += q.weight * hm;
                vol += q.weight;
                pts.push((q.weight, hm));
            }
        }
        avg /= vol;
        let f = Mat3::identity() + avg;
        let svd = f.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let r = if smin < 1e-8 * smax || !smin.is_finite() {
            fit.flagged.push(i);
            Mat3::identity()
        } else {
            let mut c = Mat3::identity();
            c[(2, 2)] = (u * vt).determinant().signum();
            u * c * vt
        };
        fit.x1.push(mesh.station(i) + 0.5 * le);
        fit.rotations.push(r);
        grads.push(pts);
    }
    let mut dist2 = 0.0;
    for (i, pts) in grads.iter().enumerate() {
        if fit.flagged.contains(&i) {
            continue;
        }
        let r = fit.rotations[i];
        // ∇_h y − R = H − (R − Id)
        let rmi = r - Mat3::identity();
        for (w, hm) in pts {
            dist2 += w * (hm - rmi).norm_squared();
        }
        fit.deviation_linf = fit.deviation_linf.max(rmi.norm());
        fit.orthogonality_error = fit
            .orthogonality_error
            .max((r.transpose() * r - Mat3::identity()).amax());
        fit.det_error = fit.det_error.max((r.determinant() - 1.0).abs());
    }
    fit.distance_l2 = dist2.sqrt();
    let mut der2 = 0.0;
    for i in 1..mesh.axial_elems {
        if fit.flagged.contains(&i) || fit.flagged.contains(&(i - 1)) {
            continue;
        }
        der2 += le * ((fit.rotations[i] - fit.rotations[i - 1]) / le).norm_squared();
    }
    fit.derivative_l2 = der2.sqrt();
    fit
}

/// Zeroth and first section moments of the scaled stress
/// `E^h = DW(Id + h^{α−1}G)(Id + h^{α−1}G)ᵀ / h^{α−1}`,
/// `G = (Rᵀ∇_h y − Id)/h^{α−1}`, averaged over each axial element.
#[derive(Debug, Clone)]
pub struct StressMoments3d {
    pub x1: Vec<f64>,
    /// `⟨E⟩ = ∫_S E`
    pub mean: Vec<Mat3>,
    /// `Ẽ = ∫_S x₂E`
    pub tilde: Vec<Mat3>,
    /// `Ê = ∫_S x₃E`
    pub hat: Vec<Mat3>,
    pub mean_l2: f64,
    pub tilde_l2: f64,
    pub hat_l2: f64,
    /// `‖E‖_{L²(Ω)}`
    pub stress_l2: f64,
    /// `‖G‖_{L²(Ω)}`
    pub strain_l2: f64,
    /// `‖E − Eᵀ‖_{L²} / ‖E‖_{L²}`
    pub asymmetry: f64,
}

pub fn strain_stress_moments(problem: &BeamProblem, field: &DeformationField, fit: &RotationFit) -> StressMoments3d {
    let mesh = &problem.mesh;
    let nt = mesh.section.triangle_count();
    let le = mesh.element_length();
    let scale = mesh.h.powf(problem.alpha - 1.0);
    let mut out = StressMoments3d {
        x1: fit.x1.clone(),
        mean: Vec::new(),
        tilde: Vec::new(),
        hat: Vec::new(),
        mean_l2: 0.0,
        tilde_l2: 0.0,
        hat_l2: 0.0,
        stress_l2: 0.0,
        strain_l2: 0.0,
        asymmetry: 0.0,
    };
    let mut skew2 = 0.0;
    for i in 0..mesh.axial_elems {
        let r = fit.rotations[i];
        let rt_mi = r.transpose() - Mat3::identity();
        let mut m = [Mat3::zeros(); 3];
        for e in i * nt..(i + 1) * nt {
            let nodes = mesh.prism_nodes(e);
            for q in problem.quad_points(e) {
                let hm = BeamProblem::disp_gradient(&q, &nodes, &field.disp);
                // Rᵀ(Id + H) − Id
                let ht = r.transpose() * hm + rt_mi;
                let ev = match problem.material.stress_disp(&ht) {
                    Ok(p) => p * (Mat3::identity() + ht).transpose() / scale,
                    Err(_) => continue,
                };
                let x = problem.position(e, q.s, &q.bary);
                m[0] += q.weight * ev;
                m[1] += q.weight * x[1] * ev;
                m[2] += q.weight * x[2] * ev;
                out.stress_l2 += q.weight * ev.norm_squared();
                out.strain_l2 += q.weight * (ht / scale).norm_squared();
                skew2 += q.weight * (ev - ev.transpose()).norm_squared();
            }
        }
        for mk in m.iter_mut() {
            *mk /= le;
        }
        out.mean_l2 += le * m[0].norm_squared();
        out.tilde_l2 += le * m[1].norm_squared();
        out.hat_l2 += le * m[2].norm_squared();
        out.mean.push(m[0]);
        out.tilde.push(m[1]);
        out.hat.push(m[2]);
    }
    out.mean_l2 = out.mean_l2.sqrt();
    out.tilde_l2 = out.tilde_l2.sqrt();
    out.hat_l2 = out.hat_l2.sqrt();
    out.stress_l2 = out.stress_l2.sqrt();
    out.strain_l2 = out.strain_l2.sqrt();
    out.asymmetry = if out.stress_l2 > 0.0 {
        skew2.sqrt() / out.stress_l2
    } else {
        0.0
    };
    out
}

/// `‖y − x₁e₁‖_{W^{1,2}(Ω)}` with the ordinary gradient.
pub fn distance_to_axis(problem: &BeamProblem, field: &DeformationField) -> f64 {
    let h = problem.mesh.h;
    let mut acc = 0.0;
    for e in 0..problem.mesh.prism_count() {
        let nodes = problem.mesh.prism_nodes(e);
        for q in problem.quad_points(e) {
            let x = problem.position(e, q.s, &q.bary);
            let d = problem.disp_at(e, q.s, &q.bary, &field.disp);
            let z = [d[0], h * x[1] + d[1], h * x[2] + d[2]];
            // ∇y − e₁⊗e₁: columns 2 and 3 of ∇_h y carry a factor 1/h
            let mut g = BeamProblem::disp_gradient(&q, &nodes, &field.disp);
            g[(1, 1)] += 1.0;
            g[(2, 2)] += 1.0;
            for r in 0..3 {
                g[(r, 1)] *= h;
                g[(r, 2)] *= h;
            }
            acc += q.weight * (z.iter().map(|v| v * v).sum::<f64>() + g.norm_squared());
        }
    }
    acc.sqrt()
}

/// Test maps `φ` with `φ(0, ·, ·) = 0` used for the outer-variation residual.
pub const OUTER_TEST_MAPS: [&str; 5] = ["(z1,0,0)", "(0,z1,0)", "(0,0,z1)", "(z1^2,0,0)", "(0,-z1*z3,z1*z2)"];

fn test_map(k: usize, z: &[f64; 3]) -> (Vector3<f64>, Mat3) {
    let mut dphi = Mat3::zeros();
    let phi = match k {
        0 => {
            dphi[(0, 0)] = 1.0;
            Vector3::new(z[0], 0.0, 0.0)
        }
        1 => {
            dphi[(1, 0)] = 1.0;
            Vector3::new(0.0, z[0], 0.0)
        }
        2 => {
            dphi[(2, 0)] = 1.0;
            Vector3::new(0.0, 0.0, z[0])
        }
        3 => {
            dphi[(0, 0)] = 2.0 * z[0];
            Vector3::new(z[0] * z[0], 0.0, 0.0)
        }
        _ => {
            dphi[(1, 0)] = -z[2];
            dphi[(1, 2)] = -z[0];
            dphi[(2, 0)] = z[1];
            dphi[(2, 1)] = z[0];
            Vector3::new(0.0, -z[0] * z[2], z[0] * z[1])
        }
    };
    (phi, dphi)
}

/// `∫ DW(∇_h y)(∇_h y)ᵀ : (∇φ)∘y − ∫ f^h·φ∘y` for each test map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterVariation {
    pub maps: Vec<String>,
    pub absolute: Vec<f64>,
    /// Absolute residual over the sum of the magnitudes of both integrals.
    pub relative: Vec<f64>,
}

impl OuterVariation {
    pub fn max_relative(&self) -> f64 {
        self.relative.iter().fold(0.0_f64, |m, v| m.max(*v))
    }
}

pub fn outer_variation_residuals(problem: &BeamProblem, field: &DeformationField) -> OuterVariation {
    let n = OUTER_TEST_MAPS.len();
    let mut stress = vec![0.0; n];
    let mut stress_abs = vec![0.0; n];
    let mut work = vec![0.0; n];
    let mut work_abs = vec![0.0; n];
    let h = problem.mesh.h;
    let y_at = |e: usize, s: f64, bary: &[f64; 3]| {
        let x = problem.position(e, s, bary);
        let d = problem.disp_at(e, s, bary, &field.disp);
        [x[0] + d[0], h * x[1] + d[1], h * x[2] + d[2]]
    };
    for e in 0..problem.mesh.prism_count() {
        let nodes = problem.mesh.prism_nodes(e);
        for q in problem.quad_points(e) {
            let hm = BeamProblem::disp_gradient(&q, &nodes, &field.disp);
            let Ok(p) = problem.material.stress_disp(&hm) else {
                continue;
            };
            let k = p * (Mat3::identity() + hm).transpose();
            let z = y_at(e, q.s, &q.bary);
            for (m, (sv, sa)) in stress.iter_mut().zip(stress_abs.iter_mut()).enumerate() {
                let (_, dphi) = test_map(m, &z);
                let c = q.weight * k.dot(&dphi);
                *sv += c;
                *sa += c.abs();
            }
        }
        // loads with the same axial rule as the load vector
        let (i, tri) = problem.mesh.prism(e);
        let le = problem.mesh.element_length();
        let load_scale = h.powf(problem.alpha);
        for (s, ws) in gauss_legendre_unit(3) {
            let f = problem.loads.eval(problem.mesh.station(i) + s * le);
            let fv = Vector3::new(0.0, load_scale * f[0], load_scale * f[1]);
            for (bary, wt) in TRIANGLE_DEGREE2.iter() {
                let wq = ws * wt * tri.area * le;
                let z = y_at(e, s, bary);
                for (m, (wv, wa)) in work.iter_mut().zip(work_abs.iter_mut()).enumerate() {
                    let (phi, _) = test_map(m, &z);
                    let c = wq * fv.dot(&phi);
                    *wv += c;
                    *wa += c.abs();
                }
            }
        }
    }
    let absolute: Vec<f64> = (0..n).map(|m| stress[m] - work[m]).collect();
    let relative = (0..n)
        .map(|m| {
            let den = stress_abs[m] + work_abs[m];
            if den > 0.0 {
                absolute[m].abs() / den
            } else {
                0.0
            }
        })
        .collect();
    OuterVariation {
        maps: OUTER_TEST_MAPS.iter().map(|s| s.to_string()).collect(),
        absolute,
        relative,
    }
}
