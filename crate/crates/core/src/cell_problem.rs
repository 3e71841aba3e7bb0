//! Relaxed stiffness constants of a rod cross-section.
//!
//! [`young_modulus`] minimizes `Q₃(e₁|a|b)` over the two free columns.
//! [`CellProblem`] solves the cross-sectional warping problem
//!
//! ```text
//! min_β ∫_S Q₃( x₂Fe₂ + x₃Fe₃ | ∂₂β | ∂₃β )
//! ```
//!
//! for skew `F` with P1 elements, and [`q1_matrix`] assembles the resulting
//! 3×3 quadratic form.
//!
//! # Convention
//!
//! A skew matrix is parametrized as
//!
//! ```text
//!       | 0  -a  -b |
//! F  =  | a   0  -c |
//!       | b   c   0 |
//! ```
//!
//! so the first column of the cell integrand is
//! `x₂Fe₂ + x₃Fe₃ = (-a x₂ - b x₃, -c x₃, c x₂)`. With curvature
//! `κ = (v₂″, v₃″, w′)` and `E = 𝓛(...)` the stress moments obey
//!
//! ```text
//! (Q1 κ)₁ = -∫x₂E₁₁,   (Q1 κ)₂ = -∫x₃E₁₁,   (Q1 κ)₃ = ∫x₂E₁₃ - ∫x₃E₁₂.
//! ```
//!
//! # Constraints
//!
//! The energy has a four dimensional kernel (three translations and the
//! in-plane rotation `(0, -x₃, x₂)`). The discrete system is made definite by
//! pinning four degrees of freedom; the solution is then shifted to zero mean
//! and stripped of its rotation component. Because affine fields belong to the
//! P1 space and `∫x₂ = ∫x₃ = 0`, the minimizer already has a vanishing
//! symmetric part of `∫∇β`, so this lands exactly on the constrained class.

use nalgebra::{Matrix3, SMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross_section::{CrossSection, MeshStats, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::material::{ElasticTensor, Mat3};
use crate::quadrature::TRIANGLE_DEGREE2;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Skew matrix parameters; see the module documentation for the layout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SkewParam {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SkewParam {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        SkewParam { a, b, c }
    }

    pub fn unit(i: usize) -> Self {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        Self::from_array(v)
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        SkewParam {
            a: v[0],
            b: v[1],
            c: v[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn to_matrix(self) -> Mat3 {
        Matrix3::new(
            0.0, -self.a, -self.b, //
            self.a, 0.0, -self.c, //
            self.b, self.c, 0.0,
        )
    }

    /// Reads `(a, b, c) = (F₂₁, F₃₁, F₃₂)`; the upper triangle is ignored.
    pub fn from_matrix(f: &Mat3) -> Self {
        SkewParam {
            a: f[(1, 0)],
            b: f[(2, 0)],
            c: f[(2, 1)],
        }
    }

    /// Cell integrand with `β = 0`: first column `x₂Fe₂ + x₃Fe₃`.
    pub fn first_column(self, x2: f64, x3: f64) -> Mat3 {
        let mut m = Mat3::zeros();
        m[(0, 0)] = -self.a * x2 - self.b * x3;
        m[(1, 0)] = -self.c * x3;
        m[(2, 0)] = self.c * x2;
        m
    }
}

/// Nodal values of a P1 warping field `β : S → ℝ³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpField {
    pub values: Vec<[f64; 3]>,
}

impl WarpField {
    pub fn zeros(n: usize) -> Self {
        WarpField {
            values: vec![[0.0; 3]; n],
        }
    }

    /// Linear combination `Σ cᵢ βᵢ`.
    pub fn combine(fields: &[&WarpField], coeffs: &[f64]) -> WarpField {
        let n = fields[0].values.len();
        let mut out = WarpField::zeros(n);
        for (f, &c) in fields.iter().zip(coeffs) {
            for (o, v) in out.values.iter_mut().zip(&f.values) {
                for k in 0..3 {
                    o[k] += c * v[k];
                }
            }
        }
        out
    }

    /// Piecewise-constant gradient on triangle `t`: columns 2 and 3 of the
    /// cell integrand.
    pub fn gradient_block(&self, section: &CrossSection, t: usize) -> Mat3 {
        let g = section.geometry(t);
        let mut m = Mat3::zeros();
        for (a, &i) in section.triangles[t].iter().enumerate() {
            for k in 0..3 {
                m[(k, 1)] += self.values[i][k] * g.grads[a][0];
                m[(k, 2)] += self.values[i][k] * g.grads[a][1];
            }
        }
        m
    }

    /// `(∫β, ∫∂₂β, ∫∂₃β)` as nine numbers.
    pub fn class_constraints(&self, section: &CrossSection) -> [f64; 9] {
        let mut out = [0.0; 9];
        let w = section.lumped_weights();
        for (v, wi) in self.values.iter().zip(&w) {
            for k in 0..3 {
                out[k] += wi * v[k];
            }
        }
        for t in 0..section.triangle_count() {
            let area = section.geometry(t).area;
            let g = self.gradient_block(section, t);
            for k in 0..3 {
                out[3 + k] += area * g[(k, 1)];
                out[6 + k] += area * g[(k, 2)];
            }
        }
        out
    }

    pub fn max_constraint_violation(&self, section: &CrossSection) -> f64 {
        self.class_constraints(section)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `𝔼 = min_{a,b ∈ ℝ³} Q₃(e₁ | a | b)`.
///
/// The six free entries form a Gram system whose kernel is the skew 2–3
/// rotation; the minimum is taken with the pseudo-inverse.
pub fn young_modulus(l: &ElasticTensor) -> Result<f64> {
    let basis: Vec<Mat3> = (0..6)
        .map(|p| {
            let mut m = Mat3::zeros();
            m[(p % 3, 1 + p / 3)] = 1.0;
            m
        })
        .collect();
    let mut e11 = Mat3::zeros();
    e11[(0, 0)] = 1.0;
    let mut gram = SMatrix::<f64, 6, 6>::zeros();
    let mut r = SVector::<f64, 6>::zeros();
    for p in 0..6 {
        r[p] = l.bilinear(&e11, &basis[p]);
        for q in 0..6 {
            gram[(p, q)] = l.bilinear(&basis[p], &basis[q]);
        }
    }
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    if !(top > 0.0) {
        return Err(Error::Config("elastic tensor vanishes on the free columns".into()));
    }
    let mut reduction = 0.0;
    let mut rank = 0;
    for k in 0..6 {
        let lam = eig.eigenvalues[k];
        if lam > 1e-12 * top {
            let proj = eig.eigenvectors.column(k).dot(&r);
            reduction += proj * proj / lam;
            rank += 1;
        }
    }
    if rank < 5 {
        return Err(Error::Config(format!(
            "reduced Gram system has rank {rank} < 5; elastic tensor not positive on symmetric matrices"
        )));
    }
    let e = l.q3(&e11) - reduction;
    if !(e > 0.0) {
        return Err(Error::Config(format!("relaxed axial stiffness {e} is not positive")));
    }
    Ok(e)
}

/// Factored warping problem on a fixed section and elastic tensor.
pub struct CellProblem {
    section: CrossSection,
    tensor: ElasticTensor,
    stiffness: CsrMatrix,
    factor: EnvelopeCholesky,
    /// free dof index → global dof index
    free: Vec<usize>,
    /// right-hand sides for unit a, b, c (global numbering)
    loads: [Vec<f64>; 3],
}

fn dof(node: usize, comp: usize) -> usize {
    3 * node + comp
}

impl CellProblem {
    /// Assembles and factors the pinned stiffness matrix. Fails with
    /// [`Error::NotNormalized`] unless the section satisfies the centering
    /// conditions.
    pub fn new(section: &CrossSection, tensor: &ElasticTensor) -> Result<Self> {
        section.check_normalized(NORMALIZATION_TOL)?;
        let n = section.node_count();
        let nt = section.triangle_count();

        // 𝓛 applied to unit gradient matrices e_k ⊗ (0, g₂, g₃)
        let elements: Vec<([usize; 9], [[f64; 9]; 9], [[f64; 9]; 3])> = (0..nt)
            .into_par_iter()
            .map(|t| {
                let geo = section.geometry(t);
                let tri = section.triangles[t];
                let mut idx = [0; 9];
                let mut basis = [Mat3::zeros(); 9];
                for (a, &i) in tri.iter().enumerate() {
                    for k in 0..3 {
                        idx[3 * a + k] = dof(i, k);
                        basis[3 * a + k][(k, 1)] = geo.grads[a][0];
                        basis[3 * a + k][(k, 2)] = geo.grads[a][1];
                    }
                }
                let stress: Vec<Mat3> = basis.iter().map(|b| tensor.apply(b)).collect();
                let mut ke = [[0.0; 9]; 9];
                for p in 0..9 {
                    for q in 0..9 {
                        ke[p][q] = geo.area * stress[p].dot(&basis[q]);
                    }
                }
                // ∫ 𝓛M : B with M linear: exact at the centroid
                let xc = section.point(t, &[1.0 / 3.0; 3]);
                let mut fe = [[0.0; 9]; 3];
                for (u, fu) in fe.iter_mut().enumerate() {
                    let m = SkewParam::unit(u).first_column(xc[0], xc[1]);
                    let lm = tensor.apply(&m);
                    for p in 0..9 {
                        fu[p] = -geo.area * lm.dot(&basis[p]);
                    }
                }
                (idx, ke, fe)
            })
            .collect();

        let mut stiffness = CsrMatrix::from_pattern(
            3 * n,
            elements
                .iter()
                .flat_map(|(idx, _, _)| idx.iter().flat_map(move |&i| idx.iter().map(move |&j| (i, j)))),
        );
        let mut loads = [vec![0.0; 3 * n], vec![0.0; 3 * n], vec![0.0; 3 * n]];
        for (idx, ke, fe) in &elements {
            for p in 0..9 {
                for q in 0..9 {
                    stiffness.add(idx[p], idx[q], ke[p][q]);
                }
                for u in 0..3 {
                    loads[u][idx[p]] += fe[u][p];
                }
            }
        }

        let pinned = pinned_dofs(section);
        let mut keep = vec![true; 3 * n];
        for &d in &pinned {
            keep[d] = false;
        }
        let (reduced, free) = stiffness.submatrix(&keep);
        let factor = EnvelopeCholesky::factor(&reduced).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => Error::Mesh(format!(
                "singular cell system at dof {} (pivot {value:e}); check for degenerate or disconnected triangles",
                free[pivot]
            )),
            other => other,
        })?;

        Ok(CellProblem {
            section: section.clone(),
            tensor: *tensor,
            stiffness: reduced,
            factor,
            free,
            loads,
        })
    }

    pub fn section(&self) -> &CrossSection {
        &self.section
    }

    pub fn tensor(&self) -> &ElasticTensor {
        &self.tensor
    }

    /// Minimizer in the constrained class and its energy.
    pub fn solve(&self, f: SkewParam) -> (WarpField, f64) {
        let coeffs = f.to_array();
        let rhs: Vec<f64> = self
            .free
            .iter()
            .map(|&g| (0..3).map(|u| coeffs[u] * self.loads[u][g]).sum())
            .collect();
        let x = self.factor.solve_refined(&self.stiffness, &rhs, 3);
        let mut beta = WarpField::zeros(self.section.node_count());
        for (&g, &v) in self.free.iter().zip(&x) {
            beta.values[g / 3][g % 3] = v;
        }
        project_to_class(&self.section, &mut beta);
        let energy = cell_energy(&self.section, &self.tensor, f, &beta);
        (beta, energy)
    }
}

/// Four pinned dofs removing translations and the in-plane rotation: all
/// components at the node closest to the centroid, and the rotation-sensitive
/// component at the node farthest from it.
fn pinned_dofs(section: &CrossSection) -> [usize; 4] {
    let r2 = |p: &[f64; 2]| p[0] * p[0] + p[1] * p[1];
    let (mut near, mut far) = (0, 0);
    for (i, p) in section.vertices.iter().enumerate() {
        if r2(p) < r2(&section.vertices[near]) {
            near = i;
        }
        if r2(p) > r2(&section.vertices[far]) {
            far = i;
        }
    }
    let d = [
        section.vertices[far][0] - section.vertices[near][0],
        section.vertices[far][1] - section.vertices[near][1],
    ];
    // the rotation moves β₂ by -d₃ and β₃ by d₂
    let comp = if d[1].abs() >= d[0].abs() { 1 } else { 2 };
    [dof(near, 0), dof(near, 1), dof(near, 2), dof(far, comp)]
}

/// Removes the mean and the in-plane rotation `(0, -x₃, x₂)` component.
fn project_to_class(section: &CrossSection, beta: &mut WarpField) {
    let c = beta.class_constraints(section);
    let area = section.moments().area;
    // skew part of ∫∇β: ∫∂₂β₃ - ∫∂₃β₂; the rotation mode contributes 2·area
    let theta = (c[3 + 2] - c[6 + 1]) / (2.0 * area);
    for (v, p) in beta.values.iter_mut().zip(&section.vertices) {
        v[0] -= c[0] / area;
        v[1] -= c[1] / area - theta * p[1];
        v[2] -= c[2] / area + theta * p[0];
    }
    // the rotation mode has zero mean on a centered section, but recentre
    // once more to absorb roundoff
    let c = beta.class_constraints(section);
    for v in &mut beta.values {
        for k in 0..3 {
            v[k] -= c[k] / area;
        }
    }
}

/// Full cell integrand `G = (x₂Fe₂ + x₃Fe₃ | ∂₂β | ∂₃β)` at a point of triangle `t`.
pub fn cell_integrand(section: &CrossSection, f: SkewParam, beta: &WarpField, t: usize, x: [f64; 2]) -> Mat3 {
    f.first_column(x[0], x[1]) + beta.gradient_block(section, t)
}

/// `𝒢_F(β) = ∫_S Q₃(G)`, exact for P1 fields.
pub fn cell_energy(section: &CrossSection, l: &ElasticTensor, f: SkewParam, beta: &WarpField) -> f64 {
    let mut e = 0.0;
    for t in 0..section.triangle_count() {
        let area = section.geometry(t).area;
        let gb = beta.gradient_block(section, t);
        for (bary, w) in TRIANGLE_DEGREE2.iter() {
            let x = section.point(t, bary);
            e += area * w * l.q3(&(f.first_column(x[0], x[1]) + gb));
        }
    }
    e
}

/// Element-mean stress `E = 𝓛G` per triangle. The integrand is affine on each
/// triangle, so the mean is its centroid value.
pub fn element_stress(section: &CrossSection, l: &ElasticTensor, f: SkewParam, beta: &WarpField) -> Vec<Mat3> {
    (0..section.triangle_count())
        .map(|t| {
            let xc = section.point(t, &[1.0 / 3.0; 3]);
            l.apply(&cell_integrand(section, f, beta, t, xc))
        })
        .collect()
}

/// Relative residual of the weak Neumann problem `div(Ee₂|Ee₃) = 0`,
/// `(Ee₂|Ee₃)ν = 0` tested against every P1 field. `e_field` holds the mean
/// stress of each triangle.
///
/// The residual vector is normalized by the same sum taken with absolute
/// values, so an exactly balanced stress gives zero and cancellation-free
/// noise gives values near machine precision.
pub fn verify_neumann(section: &CrossSection, e_field: &[Mat3]) -> f64 {
    let n = section.node_count();
    let mut res = vec![[0.0; 3]; n];
    let mut mag = vec![[0.0; 3]; n];
    for (t, e) in e_field.iter().enumerate() {
        let geo = section.geometry(t);
        for (a, &i) in section.triangles[t].iter().enumerate() {
            for k in 0..3 {
                let p = geo.area * e[(k, 1)] * geo.grads[a][0];
                let q = geo.area * e[(k, 2)] * geo.grads[a][1];
                res[i][k] += p + q;
                mag[i][k] += p.abs() + q.abs();
            }
        }
    }
    let num: f64 = res.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = mag.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Section integrals of the unit-curvature stress fields.
///
/// Row order: `∫x₂E₁₁, ∫x₃E₁₁, ∫x₂E₁₂, ∫x₃E₁₂, ∫x₂E₁₃, ∫x₃E₁₃`; column `j` is
/// the response to unit `(a, b, c)[j]`. By linearity the moments at curvature
/// `κ` are `M κ`.
pub type MomentMatrix = [[f64; 3]; 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResiduals {
    /// largest |∫β|, |∫∂₂β|, |∫∂₃β| over the three unit solutions
    pub constraint: f64,
    /// largest relative weak Neumann residual
    pub neumann: f64,
    /// relative asymmetry of the assembled Q1 before symmetrization
    pub asymmetry: f64,
}

/// The warping fields for unit `a`, `b`, `c` on their section.
#[derive(Debug, Clone)]
pub struct WarpBasis {
    pub section: CrossSection,
    pub fields: [WarpField; 3],
}

/// Relaxed stiffness: `𝔼`, the matrix of `Q₁` over `(a, b, c)` and, when it
/// comes from a cell solve, the stress moments and warp basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedStiffness {
    #[serde(rename = "E_mod")]
    pub e_mod: f64,
    #[serde(rename = "Q1")]
    pub q1: [[f64; 3]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_matrix: Option<MomentMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_stats: Option<MeshStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<CellResiduals>,
    #[serde(skip)]
    pub warp_basis: Option<WarpBasis>,
}

impl ReducedStiffness {
    /// Stiffness without a cell solve behind it, e.g. for manufactured tests.
    pub fn synthetic(e_mod: f64, q1: [[f64; 3]; 3]) -> Result<Self> {
        let s = ReducedStiffness {
            e_mod,
            q1,
            moment_matrix: None,
            mesh_stats: None,
            residuals: None,
            warp_basis: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn q1_matrix(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.q1[i][j])
    }

    /// `Q₁(F) = κ·Q1·κ`.
    pub fn q1_form(&self, f: SkewParam) -> f64 {
        let k = f.to_array();
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += k[i] * self.q1[i][j] * k[j];
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_mod > 0.0) || !self.e_mod.is_finite() {
            return Err(Error::Input(format!("E_mod must be positive, got {}", self.e_mod)));
        }
        let q = self.q1_matrix();
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("Q1 has non-finite entries".into()));
        }
        if (q - q.transpose()).amax() > 1e-12 * q.amax() {
            return Err(Error::Input("Q1 is not symmetric".into()));
        }
        if q.cholesky().is_none() {
            return Err(Error::Input("Q1 is not positive definite".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let r: ReducedStiffness =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("stiffness JSON: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("stiffness serializes")
    }
}

/// Assembles `Q1` from the three unit warping solutions.
pub fn q1_matrix(section: &CrossSection, l: &ElasticTensor) -> Result<ReducedStiffness> {
    let problem = CellProblem::new(section, l)?;
    q1_from_problem(&problem)
}

pub fn q1_from_problem(problem: &CellProblem) -> Result<ReducedStiffness> {
    let section = problem.section();
    let l = problem.tensor();
    let e_mod = young_modulus(l)?;
    let sols: Vec<WarpField> = (0..3).map(|u| problem.solve(SkewParam::unit(u)).0).collect();

    let mut q = [[0.0; 3]; 3];
    let mut moments = [[0.0; 3]; 6];
    let mut neumann: f64 = 0.0;
    for i in 0..3 {
        let fi = SkewParam::unit(i);
        let stress = element_stress(section, l, fi, &sols[i]);
        neumann = neumann.max(verify_neumann(section, &stress));
        for t in 0..section.triangle_count() {
            let area = section.geometry(t).area;
            let gi = sols[i].gradient_block(section, t);
            for (bary, w) in TRIANGLE_DEGREE2.iter() {
                let x = section.point(t, bary);
                let ei = l.apply(&(fi.first_column(x[0], x[1]) + gi));
                for j in 0..3 {
                    let gj = SkewParam::unit(j).first_column(x[0], x[1]) + sols[j].gradient_block(section, t);
                    q[i][j] += area * w * ei.dot(&gj);
                }
                for (r, (row, col)) in [(0, 0), (0, 0), (0, 1), (0, 1), (0, 2), (0, 2)].into_iter().enumerate() {
                    let xw = x[r % 2];
                    moments[r][i] += area * w * xw * ei[(row, col)];
                }
            }
        }
    }
    let mut asym: f64 = 0.0;
    let scale = q.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..3 {
        for j in 0..i {
            asym = asym.max((q[i][j] - q[j][i]).abs() / scale);
            let s = 0.5 * (q[i][j] + q[j][i]);
            q[i][j] = s;
            q[j][i] = s;
        }
    }
    let constraint = sols
        .iter()
        .map(|b| b.max_constraint_violation(section))
        .fold(0.0_f64, f64::max);
    let [b0, b1, b2] = <[WarpField; 3]>::try_from(sols).expect("three solutions");
    let out = ReducedStiffness {
        e_mod,
        q1: q,
        moment_matrix: Some(moments),
        mesh_stats: Some(section.stats()),
        residuals: Some(CellResiduals {
            constraint,
            neumann,
            asymmetry: asym,
        }),
        warp_basis: Some(WarpBasis {
            section: section.clone(),
            fields: [b0, b1, b2],
        }),
    };
    out.validate().map_err(|e| match e {
        Error::Input(m) => Error::Mesh(format!("cell solve produced invalid stiffness: {m}")),
        other => other,
    })?;
    Ok(out)
}

/// Convenience wrapper: factor, solve once.
pub fn solve_cell(f: SkewParam, section: &CrossSection, l: &ElasticTensor) -> Result<(WarpField, f64)> {
    if f.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("skew parameters must be finite".into()));
    }
    Ok(CellProblem::new(section, l)?.solve(f))
}
