//! Finite-thickness rod: the rescaled three-dimensional energy on
//! `Ω = (0, L) × S`,
//!
//! ```text
//! 𝒥^h(y) = ∫_Ω W(∇_h y) − ∫_Ω h^α (f₂y₂ + f₃y₃),   ∇_h y = (∂₁y | ∂₂y/h | ∂₃y/h),
//! ```
//!
//! with `y(0, x₂, x₃) = (0, h x₂, h x₃)`.
//!
//! The mesh is the tensor product of a uniform axial grid and the section
//! triangulation (prisms, trilinear in the sense P1 × P1). The unknown is the
//! displacement `d = y − y⁰` from the reference map `y⁰ = (x₁, h x₂, h x₃)`,
//! so `∇_h y = Id + ∇_h d` and small strains are computed without
//! cancellation.

mod diagnostics;
mod io;
mod solver;

pub use diagnostics::{
    distance_to_axis, extract_observables, fit_rotations, outer_variation_residuals, strain_stress_moments, Observables,
    OuterVariation, RotationFit, StressMoments3d,
};
pub use io::{decode_deformation, encode_deformation, read_deformation, write_deformation, DEFORMATION_MAGIC, DEFORMATION_VERSION};
pub use solver::{minimize, minimize_from, MinimizeOutcome, SolverKind, SolverOptions, SolverReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross_section::{CrossSection, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::material::{ExtendedReal, Mat3, StoredEnergy};
use crate::quadrature::{gauss_legendre_unit, TRIANGLE_DEGREE2};
use crate::rod_model::{RodLoads, RodPoint};
use crate::sparse::CsrMatrix;

/// Axial quadrature of the prism elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AxialQuadrature {
    /// Two Gauss points per axial element.
    Gauss2,
    /// One point at the element midpoint. Removes the parasitic transverse
    /// shear of linear elements in bending.
    #[default]
    Midpoint,
}

impl AxialQuadrature {
    fn rule(self) -> Vec<(f64, f64)> {
        match self {
            AxialQuadrature::Gauss2 => gauss_legendre_unit(2),
            AxialQuadrature::Midpoint => gauss_legendre_unit(1),
        }
    }
}

/// Everything that defines one finite-thickness problem.
#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub h: f64,
    pub alpha: f64,
    pub length: f64,
    pub axial_elems: usize,
    pub section: CrossSection,
    pub material: StoredEnergy,
    pub loads: RodLoads,
    pub quadrature: AxialQuadrature,
    pub solver: SolverOptions,
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::Input(format!("thickness h must lie in (0, 1], got {}", self.h)));
        }
        if !(self.alpha > 2.0) || !self.alpha.is_finite() {
            return Err(Error::Input(format!("alpha must be > 2, got {}", self.alpha)));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::Input(format!("length must be positive, got {}", self.length)));
        }
        if self.axial_elems == 0 {
            return Err(Error::Input("axial_elems must be at least 1".into()));
        }
        self.material.validate()?;
        self.loads.validate()?;
        self.section.check_normalized(NORMALIZATION_TOL)?;
        self.solver.validate()
    }

    /// Energy scale `h^{2α−2}` of stationary points.
    pub fn energy_scale(&self) -> f64 {
        self.h.powf(2.0 * self.alpha - 2.0)
    }
}

/// Per-triangle geometry reused by every prism of a section layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TriData {
    nodes: [usize; 3],
    area: f64,
    grads: [[f64; 2]; 3],
}

/// Tensor-product prism mesh of `(0, L) × S`.
#[derive(Debug, Clone)]
pub struct BeamMesh {
    pub section: CrossSection,
    pub length: f64,
    pub axial_elems: usize,
    pub h: f64,
    tris: Vec<TriData>,
    /// `∫_S φ_j`
    pub(crate) node_weights: Vec<f64>,
    /// `∫_S x₂φ_j`, `∫_S x₃φ_j`
    pub(crate) moment_weights: [Vec<f64>; 2],
}

impl BeamMesh {
    pub fn new(section: &CrossSection, length: f64, axial_elems: usize, h: f64) -> Result<Self> {
        if axial_elems == 0 || !(length > 0.0) {
            return Err(Error::Input("mesh needs axial_elems >= 1 and length > 0".into()));
        }
        let tris = (0..section.triangle_count())
            .map(|t| {
                let g = section.geometry(t);
                TriData {
                    nodes: section.triangles[t],
                    area: g.area,
                    grads: g.grads,
                }
            })
            .collect();
        Ok(BeamMesh {
            section: section.clone(),
            length,
            axial_elems,
            h,
            tris,
            node_weights: section.lumped_weights(),
            moment_weights: section.first_moment_weights(),
        })
    }

    pub fn station_count(&self) -> usize {
        self.axial_elems + 1
    }

    pub fn section_nodes(&self) -> usize {
        self.section.node_count()
    }

    pub fn node_count(&self) -> usize {
        self.station_count() * self.section_nodes()
    }

    pub fn dof_count(&self) -> usize {
        3 * self.node_count()
    }

    pub fn element_length(&self) -> f64 {
        self.length / self.axial_elems as f64
    }

    pub fn station(&self, i: usize) -> f64 {
        self.length * i as f64 / self.axial_elems as f64
    }

    /// Node index of section node `j` at station `i` (station-major).
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.section_nodes() + j
    }

    pub fn reference_position(&self, node: usize) -> [f64; 3] {
        let i = node / self.section_nodes();
        let p = self.section.vertices[node % self.section_nodes()];
        [self.station(i), self.h * p[0], self.h * p[1]]
    }

    pub(crate) fn prism_count(&self) -> usize {
        self.axial_elems * self.tris.len()
    }

    /// `(axial element, triangle)` of prism `e`.
    pub(crate) fn prism(&self, e: usize) -> (usize, &TriData) {
        (e / self.tris.len(), &self.tris[e % self.tris.len()])
    }

    /// Global node indices of a prism: bottom triangle then top triangle.
    pub(crate) fn prism_nodes(&self, e: usize) -> [usize; 6] {
        let (i, t) = self.prism(e);
        let mut n = [0; 6];
        for a in 0..2 {
            for j in 0..3 {
                n[3 * a + j] = self.node(i + a, t.nodes[j]);
            }
        }
        n
    }
}

/// Nodal displacement `d = y − y⁰` on a [`BeamMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub stations: usize,
    pub section_nodes: usize,
    pub h: f64,
    pub alpha: f64,
    pub length: f64,
    pub disp: Vec<[f64; 3]>,
}

impl DeformationField {
    /// The reference map `y⁰`, with `∇_h y⁰ = Id`.
    pub fn reference(mesh: &BeamMesh, alpha: f64) -> Self {
        DeformationField {
            stations: mesh.station_count(),
            section_nodes: mesh.section_nodes(),
            h: mesh.h,
            alpha,
            length: mesh.length,
            disp: vec![[0.0; 3]; mesh.node_count()],
        }
    }

    pub fn positions(&self, mesh: &BeamMesh) -> Vec<[f64; 3]> {
        self.disp
            .iter()
            .enumerate()
            .map(|(n, d)| {
                let r = mesh.reference_position(n);
                [r[0] + d[0], r[1] + d[1], r[2] + d[2]]
            })
            .collect()
    }

    pub fn from_positions(mesh: &BeamMesh, alpha: f64, y: &[[f64; 3]]) -> Result<Self> {
        if y.len() != mesh.node_count() {
            return Err(Error::Input(format!(
                "expected {} nodal positions, got {}",
                mesh.node_count(),
                y.len()
            )));
        }
        let mut f = Self::reference(mesh, alpha);
        for (n, (d, p)) in f.disp.iter_mut().zip(y).enumerate() {
            let r = mesh.reference_position(n);
            *d = [p[0] - r[0], p[1] - r[1], p[2] - r[2]];
        }
        Ok(f)
    }

    /// Displacement built from rod fields through the ansatz
    ///
    /// ```text
    /// y₁ = x₁ + s_u u − h^{α−1}(x₂v₂′ + x₃v₃′)
    /// y₂ = h x₂ + h^{α−2} v₂ − h^{α−1} x₃ w
    /// y₃ = h x₃ + h^{α−2} v₃ + h^{α−1} x₂ w
    /// ```
    ///
    /// with `s_u = h^{α−1}` for `α ≥ 3` and `h^{2(α−2)}` otherwise. Its
    /// observables are exactly the given rod fields at the stations.
    pub fn from_rod_ansatz(mesh: &BeamMesh, alpha: f64, rod: impl Fn(f64) -> RodPoint) -> Self {
        let h = mesh.h;
        let su = u_scale(h, alpha);
        let sv = h.powf(alpha - 2.0);
        let sw = h.powf(alpha - 1.0);
        let mut f = Self::reference(mesh, alpha);
        for i in 0..mesh.station_count() {
            let p = rod(mesh.station(i));
            for j in 0..mesh.section_nodes() {
                let [x2, x3] = mesh.section.vertices[j];
                f.disp[mesh.node(i, j)] = [
                    su * p.u - sw * (x2 * p.dv[0] + x3 * p.dv[1]),
                    sv * p.v[0] - sw * x3 * p.w,
                    sv * p.v[1] + sw * x2 * p.w,
                ];
            }
        }
        f
    }

    pub fn clamp_violation(&self) -> f64 {
        self.disp[..self.section_nodes]
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn as_flat(&self) -> Vec<f64> {
        self.disp.iter().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, x: &[f64]) {
        for (d, c) in self.disp.iter_mut().zip(x.chunks_exact(3)) {
            *d = [c[0], c[1], c[2]];
        }
    }
}

/// `h^{α−1}` for `α ≥ 3`, `h^{2(α−2)}` below: the scale of axial displacements.
pub fn u_scale(h: f64, alpha: f64) -> f64 {
    if alpha >= 3.0 {
        h.powf(alpha - 1.0)
    } else {
        h.powf(2.0 * (alpha - 2.0))
    }
}

/// A quadrature point of a prism: weight (including volume), scaled shape
/// gradients `(∂₁N, ∂₂N/h, ∂₃N/h)` and shape values of the six nodes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadPoint {
    pub weight: f64,
    pub grads: [[f64; 3]; 6],
    pub values: [f64; 6],
    /// axial local coordinate and barycentric section coordinates
    pub s: f64,
    pub bary: [f64; 3],
}

/// Discrete energy functional for one configuration.
#[derive(Debug, Clone)]
pub struct BeamProblem {
    pub mesh: BeamMesh,
    pub material: StoredEnergy,
    pub alpha: f64,
    pub quadrature: AxialQuadrature,
    pub loads: RodLoads,
    /// `∫ f^h · N` per dof
    load: Vec<f64>,
}

pub(crate) struct ElementEval {
    pub energy: f64,
    pub grad: [f64; 18],
    pub min_det: f64,
}

impl BeamProblem {
    pub fn new(config: &BeamConfig) -> Result<Self> {
        config.validate()?;
        let mesh = BeamMesh::new(&config.section, config.length, config.axial_elems, config.h)?;
        Ok(Self::with_mesh(mesh, config))
    }

    pub fn with_mesh(mesh: BeamMesh, config: &BeamConfig) -> Self {
        let load = load_vector(&mesh, &config.loads, config.h.powf(config.alpha));
        BeamProblem {
            mesh,
            material: config.material,
            alpha: config.alpha,
            quadrature: config.quadrature,
            loads: config.loads.clone(),
            load,
        }
    }

    pub fn load_vector(&self) -> &[f64] {
        &self.load
    }

    pub(crate) fn quad_points(&self, e: usize) -> Vec<QuadPoint> {
        let (_, tri) = self.mesh.prism(e);
        let le = self.mesh.element_length();
        let h = self.mesh.h;
        let mut out = Vec::with_capacity(6);
        for (s, ws) in self.quadrature.rule() {
            let psi = [1.0 - s, s];
            let dpsi = [-1.0 / le, 1.0 / le];
            for (bary, wt) in TRIANGLE_DEGREE2.iter() {
                let mut q = QuadPoint {
                    weight: ws * wt * tri.area * le,
                    grads: [[0.0; 3]; 6],
                    values: [0.0; 6],
                    s,
                    bary: *bary,
                };
                for a in 0..2 {
                    for j in 0..3 {
                        let n = 3 * a + j;
                        q.values[n] = psi[a] * bary[j];
                        q.grads[n] = [
                            dpsi[a] * bary[j],
                            psi[a] * tri.grads[j][0] / h,
                            psi[a] * tri.grads[j][1] / h,
                        ];
                    }
                }
                out.push(q);
            }
        }
        out
    }

    /// Point of `Ω` (section coordinates unscaled) at local prism coordinates.
    pub(crate) fn position(&self, e: usize, s: f64, bary: &[f64; 3]) -> [f64; 3] {
        let (i, tri) = self.mesh.prism(e);
        let mut p = [self.mesh.station(i) + s * self.mesh.element_length(), 0.0, 0.0];
        for j in 0..3 {
            let v = self.mesh.section.vertices[tri.nodes[j]];
            p[1] += bary[j] * v[0];
            p[2] += bary[j] * v[1];
        }
        p
    }

    /// Nodal interpolation of the displacement.
    pub(crate) fn disp_at(&self, e: usize, s: f64, bary: &[f64; 3], d: &[[f64; 3]]) -> [f64; 3] {
        let nodes = self.mesh.prism_nodes(e);
        let mut out = [0.0; 3];
        for a in 0..2 {
            let psi = if a == 0 { 1.0 - s } else { s };
            for j in 0..3 {
                let dn = d[nodes[3 * a + j]];
                for k in 0..3 {
                    out[k] += psi * bary[j] * dn[k];
                }
            }
        }
        out
    }

    /// `∇_h d` at a quadrature point.
    pub(crate) fn disp_gradient(q: &QuadPoint, nodes: &[usize; 6], d: &[[f64; 3]]) -> Mat3 {
        let mut hm = Mat3::zeros();
        for n in 0..6 {
            let dn = d[nodes[n]];
            for k in 0..3 {
                for c in 0..3 {
                    hm[(k, c)] += dn[k] * q.grads[n][c];
                }
            }
        }
        hm
    }

    fn element_eval(&self, e: usize, d: &[[f64; 3]], want_grad: bool) -> Option<ElementEval> {
        let nodes = self.mesh.prism_nodes(e);
        let mut out = ElementEval {
            energy: 0.0,
            grad: [0.0; 18],
            min_det: f64::INFINITY,
        };
        for q in self.quad_points(e) {
            let hm = Self::disp_gradient(&q, &nodes, d);
            out.min_det = out.min_det.min((Mat3::identity() + hm).determinant());
            match self.material.energy_disp(&hm) {
                ExtendedReal::Finite(w) => out.energy += q.weight * w,
                ExtendedReal::PosInfinity => return None,
            }
            if want_grad {
                let p = self.material.stress_disp(&hm).ok()?;
                for n in 0..6 {
                    for k in 0..3 {
                        let mut v = 0.0;
                        for c in 0..3 {
                            v += p[(k, c)] * q.grads[n][c];
                        }
                        out.grad[3 * n + k] += q.weight * v;
                    }
                }
            }
        }
        Some(out)
    }

    fn evaluate(&self, d: &[[f64; 3]], want_grad: bool) -> (ExtendedReal, ExtendedReal, Option<Vec<f64>>, f64) {
        let evals: Vec<Option<ElementEval>> = (0..self.mesh.prism_count())
            .into_par_iter()
            .map(|e| self.element_eval(e, d, want_grad))
            .collect();
        let mut elastic = 0.0;
        let mut min_det = f64::INFINITY;
        let mut grad = want_grad.then(|| vec![0.0; self.mesh.dof_count()]);
        for (e, ev) in evals.iter().enumerate() {
            let Some(ev) = ev else {
                return (ExtendedReal::PosInfinity, ExtendedReal::PosInfinity, None, 0.0);
            };
            elastic += ev.energy;
            min_det = min_det.min(ev.min_det);
            if let Some(g) = grad.as_mut() {
                let nodes = self.mesh.prism_nodes(e);
                for n in 0..6 {
                    for k in 0..3 {
                        g[3 * nodes[n] + k] += ev.grad[3 * n + k];
                    }
                }
            }
        }
        // ∫f^h·y⁰ vanishes on a centered section, so only the displacement works
        let work: f64 = d.iter().flatten().zip(&self.load).map(|(a, b)| a * b).sum();
        if let Some(g) = grad.as_mut() {
            g.iter_mut().zip(&self.load).for_each(|(gi, bi)| *gi -= bi);
        }
        (
            ExtendedReal::Finite(elastic - work),
            ExtendedReal::Finite(elastic),
            grad,
            min_det,
        )
    }

    /// `𝒥^h` (`+∞` if `det ∇_h y ≤ 0` at a quadrature point).
    pub fn energy(&self, field: &DeformationField) -> ExtendedReal {
        self.evaluate(&field.disp, false).0
    }

    /// `∫_Ω W(∇_h y)` alone; no boundary condition is assumed.
    pub fn elastic_energy(&self, field: &DeformationField) -> ExtendedReal {
        self.evaluate(&field.disp, false).1
    }

    /// `𝒥^h` and its gradient with respect to all nodal displacements
    /// (clamped ones included). The gradient is `None` on infeasible states.
    pub fn energy_and_gradient(&self, field: &DeformationField) -> (ExtendedReal, Option<Vec<f64>>) {
        let (e, _, g, _) = self.evaluate(&field.disp, true);
        (e, g)
    }

    /// Smallest `det ∇_h y` over quadrature points.
    pub fn min_det(&self, field: &DeformationField) -> f64 {
        self.evaluate(&field.disp, false).3
    }

    /// Sparsity pattern of the Hessian (all dofs).
    pub fn hessian_pattern(&self) -> CsrMatrix {
        CsrMatrix::from_pattern(
            self.mesh.dof_count(),
            (0..self.mesh.prism_count()).flat_map(|e| {
                let nodes = self.mesh.prism_nodes(e);
                nodes.into_iter().flat_map(move |a| {
                    nodes.into_iter().flat_map(move |b| {
                        (0..3).flat_map(move |k| (0..3).map(move |l| (3 * a + k, 3 * b + l)))
                    })
                })
            }),
        )
    }

    /// Exact Hessian of `𝒥^h`, assembled into `pattern`.
    pub fn hessian_into(&self, field: &DeformationField, pattern: &mut CsrMatrix) -> Result<()> {
        let d = &field.disp;
        let blocks: Vec<Result<Box<[[f64; 18]; 18]>>> = (0..self.mesh.prism_count())
            .into_par_iter()
            .map(|e| {
                let nodes = self.mesh.prism_nodes(e);
                let mut ke = Box::new([[0.0; 18]; 18]);
                for q in self.quad_points(e) {
                    let hm = Self::disp_gradient(&q, &nodes, d);
                    let kernel = self.material.hessian_kernel(&hm)?;
                    for n in 0..6 {
                        for k in 0..3 {
                            let mut df = Mat3::zeros();
                            for c in 0..3 {
                                df[(k, c)] = q.grads[n][c];
                            }
                            let a = kernel.apply(&df);
                            for m in 0..6 {
                                for l in 0..3 {
                                    let mut v = 0.0;
                                    for c in 0..3 {
                                        v += a[(l, c)] * q.grads[m][c];
                                    }
                                    ke[3 * n + k][3 * m + l] += q.weight * v;
                                }
                            }
                        }
                    }
                }
                Ok(ke)
            })
            .collect();
        pattern.clear_values();
        for (e, ke) in blocks.into_iter().enumerate() {
            let ke = ke?;
            let nodes = self.mesh.prism_nodes(e);
            for p in 0..18 {
                for r in 0..18 {
                    pattern.add(3 * nodes[p / 3] + p % 3, 3 * nodes[r / 3] + r % 3, ke[p][r]);
                }
            }
        }
        Ok(())
    }
}

/// `∫ h^α (f₂ e₂ + f₃ e₃) · N` with 3-point Gauss in `x₁` and exact section
/// integration (`∫_S φ_j`).
fn load_vector(mesh: &BeamMesh, loads: &RodLoads, scale: f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.dof_count()];
    let le = mesh.element_length();
    let rule = gauss_legendre_unit(3);
    for i in 0..mesh.axial_elems {
        let mut fa = [[0.0; 2]; 2];
        for &(s, w) in &rule {
            let f = loads.eval(mesh.station(i) + s * le);
            for (a, psi) in [1.0 - s, s].into_iter().enumerate() {
                fa[a][0] += le * w * psi * f[0];
                fa[a][1] += le * w * psi * f[1];
            }
        }
        for a in 0..2 {
            for j in 0..mesh.section_nodes() {
                let n = mesh.node(i + a, j);
                b[3 * n + 1] += scale * fa[a][0] * mesh.node_weights[j];
                b[3 * n + 2] += scale * fa[a][1] * mesh.node_weights[j];
            }
        }
    }
    b
}

/// Mesh and the initial field `y⁰`.
pub fn build_mesh(config: &BeamConfig) -> Result<(BeamMesh, DeformationField)> {
    config.validate()?;
    let mesh = BeamMesh::new(&config.section, config.length, config.axial_elems, config.h)?;
    let field = DeformationField::reference(&mesh, config.alpha);
    Ok((mesh, field))
}

/// `𝒥^h(y)` and its gradient for a field on the configuration's mesh.
pub fn total_energy(field: &DeformationField, config: &BeamConfig) -> Result<(ExtendedReal, Option<Vec<f64>>)> {
    let problem = BeamProblem::new(config)?;
    if field.disp.len() != problem.mesh.node_count() {
        return Err(Error::Input("field does not match the configuration's mesh".into()));
    }
    Ok(problem.energy_and_gradient(field))
}
