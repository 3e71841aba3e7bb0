//! One-dimensional limit rod models and their equilibrium.
//!
//! Unknowns are the axial displacement `u`, the normal displacements `v₂, v₃`
//! and the twist `w` on `(0, L)`, clamped at `x₁ = 0` and free at `x₁ = L`.
//! `v₂, v₃` use cubic Hermite elements, `u` and `w` continuous piecewise
//! linear ones.
//!
//! The limit energy is
//!
//! ```text
//! ½∫ κ·Q1 κ − ∫(f₂v₂ + f₃v₃)  (+ stretching term depending on the regime),
//! κ = (v₂″, v₃″, w′).
//! ```
//!
//! Stretching is measured with the element mean of `½[(v₂′)² + (v₃′)²]`,
//! which is the exact derivative space of piecewise linear `u`. With that
//! choice the recovered `u` satisfies the inextensibility constraint exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cell_problem::{MomentMatrix, ReducedStiffness, SkewParam};
use crate::error::{Error, Result};
use crate::material::{ExtendedReal, Mat3};
use crate::quadrature::gauss_legendre_unit;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Constraint residual (L²) above which a sub-critical state is infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubCritical,
    Critical,
    SuperCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRegime {
    pub regime: Regime,
    pub alpha: f64,
}

impl AlphaRegime {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        let regime = if !(alpha > 2.0) || !alpha.is_finite() {
            return Err(Error::Input(format!("alpha must be a finite number > 2, got {alpha}")));
        } else if alpha < 3.0 {
            Regime::SubCritical
        } else if alpha == 3.0 {
            Regime::Critical
        } else {
            Regime::SuperCritical
        };
        Ok(AlphaRegime { regime, alpha })
    }

    pub fn new(regime: Regime, alpha: f64) -> Result<Self> {
        let r = Self::from_alpha(alpha)?;
        if r.regime != regime {
            return Err(Error::Input(format!("alpha = {alpha} does not belong to regime {regime:?}")));
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.regime, self.alpha).map(|_| ())
    }
}

/// A load density on `(0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadFn {
    Const(f64),
    /// `a + b x₁`
    Linear { a: f64, b: f64 },
    /// `amp · sin(k x₁)`
    Sin { amp: f64, k: f64 },
    /// Piecewise linear interpolation of samples, constant beyond the ends.
    Sampled { x: Vec<f64>, y: Vec<f64> },
}

impl LoadFn {
    pub fn zero() -> Self {
        LoadFn::Const(0.0)
    }

    pub fn eval(&self, x1: f64) -> f64 {
        match self {
            LoadFn::Const(c) => *c,
            LoadFn::Linear { a, b } => a + b * x1,
            LoadFn::Sin { amp, k } => amp * (k * x1).sin(),
            LoadFn::Sampled { x, y } => {
                if x1 <= x[0] {
                    return y[0];
                }
                let n = x.len();
                if x1 >= x[n - 1] {
                    return y[n - 1];
                }
                let j = x.partition_point(|&xi| xi <= x1) - 1;
                let t = (x1 - x[j]) / (x[j + 1] - x[j]);
                y[j] + t * (y[j + 1] - y[j])
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            LoadFn::Const(c) => LoadFn::Const(s * c),
            LoadFn::Linear { a, b } => LoadFn::Linear { a: s * a, b: s * b },
            LoadFn::Sin { amp, k } => LoadFn::Sin { amp: s * amp, k: *k },
            LoadFn::Sampled { x, y } => LoadFn::Sampled {
                x: x.clone(),
                y: y.iter().map(|v| s * v).collect(),
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LoadFn::Const(c) => *c == 0.0,
            LoadFn::Linear { a, b } => *a == 0.0 && *b == 0.0,
            LoadFn::Sin { amp, .. } => *amp == 0.0,
            LoadFn::Sampled { y, .. } => y.iter().all(|v| *v == 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LoadFn::Const(c) => c.is_finite(),
            LoadFn::Linear { a, b } => a.is_finite() && b.is_finite(),
            LoadFn::Sin { amp, k } => amp.is_finite() && k.is_finite(),
            LoadFn::Sampled { x, y } => {
                !x.is_empty()
                    && x.len() == y.len()
                    && x.iter().chain(y).all(|v| v.is_finite())
                    && x.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid load {self}")))
        }
    }

    /// `‖f‖_{L²(0,L)}` by composite Gauss quadrature.
    pub fn l2_norm(&self, length: f64) -> f64 {
        let n = 256;
        let he = length / n as f64;
        let rule = gauss_legendre_unit(5);
        let mut s = 0.0;
        for e in 0..n {
            for &(t, w) in &rule {
                let v = self.eval((e as f64 + t) * he);
                s += he * w * v * v;
            }
        }
        s.sqrt()
    }
}

impl fmt::Display for LoadFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadFn::Const(c) => write!(f, "const:{c}"),
            LoadFn::Linear { a, b } => write!(f, "linear:{a},{b}"),
            LoadFn::Sin { amp, k } => write!(f, "sin:{amp},{k}"),
            LoadFn::Sampled { x, .. } => write!(f, "sampled[{}]", x.len()),
        }
    }
}

impl FromStr for LoadFn {
    type Err = Error;

    /// Parses `const:c`, `linear:a,b`, `sin:amp,k` or `zero`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" || s == "0" {
            return Ok(LoadFn::zero());
        }
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("load preset `{s}`: expected name:params")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("load preset `{s}`: {e}")))?;
        let load = match (name.trim(), nums.as_slice()) {
            ("const", [c]) => LoadFn::Const(*c),
            ("linear", [a, b]) => LoadFn::Linear { a: *a, b: *b },
            ("sin", [amp, k]) => LoadFn::Sin { amp: *amp, k: *k },
            _ => {
                return Err(Error::Input(format!(
                    "load preset `{s}`: expected const:c, linear:a,b or sin:amp,k"
                )))
            }
        };
        load.validate()?;
        Ok(load)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LoadRepr {
    Preset(String),
    Sampled { x: Vec<f64>, y: Vec<f64> },
}

impl Serialize for LoadFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LoadFn::Sampled { x, y } => LoadRepr::Sampled {
                x: x.clone(),
                y: y.clone(),
            },
            other => LoadRepr::Preset(other.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LoadFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let load = match LoadRepr::deserialize(d)? {
            LoadRepr::Preset(s) => s.parse().map_err(serde::de::Error::custom)?,
            LoadRepr::Sampled { x, y } => LoadFn::Sampled { x, y },
        };
        load.validate().map_err(serde::de::Error::custom)?;
        Ok(load)
    }
}

/// Normal loads `(f₂, f₃)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodLoads {
    #[serde(default = "LoadFn::zero")]
    pub f2: LoadFn,
    #[serde(default = "LoadFn::zero")]
    pub f3: LoadFn,
}

impl RodLoads {
    pub fn new(f2: LoadFn, f3: LoadFn) -> Self {
        RodLoads { f2, f3 }
    }

    pub fn zero() -> Self {
        Self::new(LoadFn::zero(), LoadFn::zero())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.f2.scaled(s), self.f3.scaled(s))
    }

    pub fn validate(&self) -> Result<()> {
        self.f2.validate()?;
        self.f3.validate()
    }

    pub fn eval(&self, x1: f64) -> [f64; 2] {
        [self.f2.eval(x1), self.f3.eval(x1)]
    }
}

/// Cubic Hermite shape functions on an element of length `he` at local
/// coordinate `s ∈ [0, 1]`: values, first and second derivatives for the dofs
/// `(v(a), v′(a), v(b), v′(b))`.
pub fn hermite(s: f64, he: f64) -> [[f64; 4]; 3] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        [1.0 - 3.0 * s2 + 2.0 * s3, he * (s - 2.0 * s2 + s3), 3.0 * s2 - 2.0 * s3, he * (s3 - s2)],
        [
            (6.0 * s2 - 6.0 * s) / he,
            1.0 - 4.0 * s + 3.0 * s2,
            (6.0 * s - 6.0 * s2) / he,
            3.0 * s2 - 2.0 * s,
        ],
        [
            (12.0 * s - 6.0) / (he * he),
            (6.0 * s - 4.0) / he,
            (6.0 - 12.0 * s) / (he * he),
            (6.0 * s - 2.0) / he,
        ],
    ]
}

/// Pointwise values of a rod state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RodPoint {
    pub u: f64,
    pub du: f64,
    pub v: [f64; 2],
    pub dv: [f64; 2],
    pub ddv: [f64; 2],
    pub w: f64,
    pub dw: f64,
}

impl RodPoint {
    /// `κ = (v₂″, v₃″, w′)`.
    pub fn curvature(&self) -> SkewParam {
        SkewParam::new(self.ddv[0], self.ddv[1], self.dw)
    }
}

/// Discrete rod fields on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodState {
    pub length: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `(value, derivative)` per node
    pub v2: Vec<[f64; 2]>,
    pub v3: Vec<[f64; 2]>,
    pub w: Vec<f64>,
}

impl RodState {
    pub fn zeros(length: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 || !(length > 0.0) || !length.is_finite() {
            return Err(Error::Input(format!(
                "rod grid needs length > 0 and at least 2 nodes (got L={length}, n={n_nodes})"
            )));
        }
        let x = (0..n_nodes)
            .map(|i| length * i as f64 / (n_nodes - 1) as f64)
            .collect();
        Ok(RodState {
            length,
            x,
            u: vec![0.0; n_nodes],
            v2: vec![[0.0; 2]; n_nodes],
            v3: vec![[0.0; 2]; n_nodes],
            w: vec![0.0; n_nodes],
        })
    }

    /// Nodal interpolation of given functions; `v2` and `v3` return
    /// `(value, derivative)`.
    pub fn from_fns(
        length: f64,
        n_nodes: usize,
        u: impl Fn(f64) -> f64,
        v2: impl Fn(f64) -> [f64; 2],
        v3: impl Fn(f64) -> [f64; 2],
        w: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mut s = Self::zeros(length, n_nodes)?;
        for i in 0..n_nodes {
            let x = s.x[i];
            s.u[i] = u(x);
            s.v2[i] = v2(x);
            s.v3[i] = v3(x);
            s.w[i] = w(x);
        }
        Ok(s)
    }

    pub fn node_count(&self) -> usize {
        self.x.len()
    }

    pub fn element_count(&self) -> usize {
        self.x.len() - 1
    }

    pub fn element_length(&self) -> f64 {
        self.length / self.element_count() as f64
    }

    /// Element containing `x1` (right-continuous, the last element includes `L`).
    pub fn element_of(&self, x1: f64) -> usize {
        let e = (x1 / self.element_length()).floor();
        (e.max(0.0) as usize).min(self.element_count() - 1)
    }

    /// Evaluation inside element `e` at local coordinate `s ∈ [0, 1]`.
    pub fn eval_local(&self, e: usize, s: f64) -> RodPoint {
        let he = self.element_length();
        let hb = hermite(s, he);
        let mut p = RodPoint {
            u: (1.0 - s) * self.u[e] + s * self.u[e + 1],
            du: (self.u[e + 1] - self.u[e]) / he,
            w: (1.0 - s) * self.w[e] + s * self.w[e + 1],
            dw: (self.w[e + 1] - self.w[e]) / he,
            ..Default::default()
        };
        for (k, v) in [&self.v2, &self.v3].into_iter().enumerate() {
            let d = [v[e][0], v[e][1], v[e + 1][0], v[e + 1][1]];
            let f = |row: &[f64; 4]| row.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            p.v[k] = f(&hb[0]);
            p.dv[k] = f(&hb[1]);
            p.ddv[k] = f(&hb[2]);
        }
        p
    }

    pub fn eval(&self, x1: f64) -> RodPoint {
        let e = self.element_of(x1);
        let s = (x1 / self.element_length() - e as f64).clamp(0.0, 1.0);
        self.eval_local(e, s)
    }

    /// Largest deviation from the clamped-end conditions.
    pub fn clamp_violation(&self) -> f64 {
        [self.u[0], self.v2[0][0], self.v2[0][1], self.v3[0][0], self.v3[0][1], self.w[0]]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Element mean of `½[(v₂′)² + (v₃′)²]`, exact (3-point Gauss on a quartic).
    pub fn stretch_mean(&self, e: usize) -> f64 {
        gauss_legendre_unit(3)
            .iter()
            .map(|&(s, w)| {
                let p = self.eval_local(e, s);
                w * 0.5 * (p.dv[0] * p.dv[0] + p.dv[1] * p.dv[1])
            })
            .sum()
    }

    /// `‖u′ + P₀(½[(v₂′)² + (v₃′)²])‖_{L²}`.
    pub fn constraint_residual(&self) -> f64 {
        let he = self.element_length();
        (0..self.element_count())
            .map(|e| {
                let r = (self.u[e + 1] - self.u[e]) / he + self.stretch_mean(e);
                he * r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,u,v2,v2p,v3,v3p,w\n");
        for i in 0..self.node_count() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.x[i], self.u[i], self.v2[i][0], self.v2[i][1], self.v3[i][0], self.v3[i][1], self.w[i]
            ));
        }
        s
    }
}

/// `A(x₁)` and `A′(x₁)` for the state.
pub fn curvature_matrix(state: &RodState, x1: f64) -> (Mat3, Mat3) {
    let p = state.eval(x1);
    let a = SkewParam::new(p.dv[0], p.dv[1], p.w).to_matrix();
    let da = p.curvature().to_matrix();
    (da, a)
}

/// The limit energy for the regime. Sub-critical states violating the
/// inextensibility constraint beyond [`FEASIBILITY_TOL`] have infinite energy.
pub fn energy_alpha(
    state: &RodState,
    regime: &AlphaRegime,
    stiffness: &ReducedStiffness,
    loads: &RodLoads,
) -> Result<ExtendedReal> {
    regime.validate()?;
    if state.clamp_violation() > 0.0 {
        return Err(Error::Input("state violates the clamped-end conditions".into()));
    }
    let he = state.element_length();
    let g3 = gauss_legendre_unit(3);
    let g5 = gauss_legendre_unit(5);
    let mut bending = 0.0;
    let mut work = 0.0;
    let mut stretch = 0.0;
    for e in 0..state.element_count() {
        for &(s, w) in &g3 {
            bending += he * w * 0.5 * stiffness.q1_form(state.eval_local(e, s).curvature());
        }
        for &(s, w) in &g5 {
            let p = state.eval_local(e, s);
            let f = loads.eval((e as f64 + s) * he);
            work += he * w * (f[0] * p.v[0] + f[1] * p.v[1]);
        }
        let du = (state.u[e + 1] - state.u[e]) / he;
        stretch += match regime.regime {
            Regime::Critical => {
                let r = du + state.stretch_mean(e);
                0.5 * he * stiffness.e_mod * r * r
            }
            Regime::SuperCritical => 0.5 * he * stiffness.e_mod * du * du,
            Regime::SubCritical => 0.0,
        };
    }
    if regime.regime == Regime::SubCritical && state.constraint_residual() > FEASIBILITY_TOL {
        return Ok(ExtendedReal::PosInfinity);
    }
    Ok(ExtendedReal::Finite(stretch + bending - work))
}

const DOFS_PER_NODE: usize = 5;

/// Global dof of node `i`: `v₂, v₂′, v₃, v₃′, w`.
fn rod_dofs(e: usize) -> [usize; 10] {
    let mut d = [0; 10];
    for k in 0..DOFS_PER_NODE {
        d[k] = DOFS_PER_NODE * e + k;
        d[DOFS_PER_NODE + k] = DOFS_PER_NODE * (e + 1) + k;
    }
    d
}

/// Curvature of each element dof at local coordinate `s`: rows of `∂κ/∂d`.
fn element_strain_rows(s: f64, he: f64) -> [[f64; 3]; 10] {
    let hb = hermite(s, he);
    let mut b = [[0.0; 3]; 10];
    // node-local order within each end: v₂, v₂′, v₃, v₃′, w
    for end in 0..2 {
        let o = DOFS_PER_NODE * end;
        b[o][0] = hb[2][2 * end];
        b[o + 1][0] = hb[2][2 * end + 1];
        b[o + 2][1] = hb[2][2 * end];
        b[o + 3][1] = hb[2][2 * end + 1];
        b[o + 4][2] = if end == 0 { -1.0 / he } else { 1.0 / he };
    }
    b
}

/// Values of the element dofs' displacement basis: `(v₂, v₃)` contributions.
fn element_value_rows(s: f64, he: f64) -> [[f64; 2]; 10] {
    let hb = hermite(s, he);
    let mut n = [[0.0; 2]; 10];
    for end in 0..2 {
        let o = DOFS_PER_NODE * end;
        n[o][0] = hb[0][2 * end];
        n[o + 1][0] = hb[0][2 * end + 1];
        n[o + 2][1] = hb[0][2 * end];
        n[o + 3][1] = hb[0][2 * end + 1];
    }
    n
}

struct RodSystem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
}

fn assemble(stiffness: &ReducedStiffness, loads: &RodLoads, state: &RodState, order: &[usize]) -> RodSystem {
    let n_dof = DOFS_PER_NODE * state.node_count();
    let he = state.element_length();
    let q = stiffness.q1;
    let mut matrix = CsrMatrix::from_pattern(
        n_dof,
        (0..state.element_count()).flat_map(|e| {
            let d = rod_dofs(e);
            d.into_iter().flat_map(move |i| d.into_iter().map(move |j| (i, j)))
        }),
    );
    let mut rhs = vec![0.0; n_dof];
    let g3 = gauss_legendre_unit(3);
    let g5 = gauss_legendre_unit(5);
    for &e in order {
        let d = rod_dofs(e);
        let mut ke = [[0.0; 10]; 10];
        for &(s, w) in &g3 {
            let b = element_strain_rows(s, he);
            for p in 0..10 {
                for r in 0..10 {
                    let mut v = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            v += b[p][i] * q[i][j] * b[r][j];
                        }
                    }
                    ke[p][r] += he * w * v;
                }
            }
        }
        for &(s, w) in &g5 {
            let n = element_value_rows(s, he);
            let f = loads.eval((e as f64 + s) * he);
            for p in 0..10 {
                rhs[d[p]] += he * w * (n[p][0] * f[0] + n[p][1] * f[1]);
            }
        }
        for p in 0..10 {
            for r in 0..10 {
                matrix.add(d[p], d[r], ke[p][r]);
            }
        }
    }
    RodSystem { matrix, rhs }
}

/// Unique equilibrium of the limit model on `n_nodes` uniform nodes.
pub fn solve_equilibrium(
    regime: &AlphaRegime,
    stiffness: &ReducedStiffness,
    loads: &RodLoads,
    length: f64,
    n_nodes: usize,
) -> Result<RodState> {
    let order: Vec<usize> = (0..n_nodes.saturating_sub(1)).collect();
    solve_with_order(regime, stiffness, loads, length, n_nodes, &order)
}

fn solve_with_order(
    regime: &AlphaRegime,
    stiffness: &ReducedStiffness,
    loads: &RodLoads,
    length: f64,
    n_nodes: usize,
    order: &[usize],
) -> Result<RodState> {
    regime.validate()?;
    loads.validate()?;
    stiffness.validate()?;
    if n_nodes < 4 {
        return Err(Error::Input(format!("rod solve needs at least 4 nodes, got {n_nodes}")));
    }
    let mut state = RodState::zeros(length, n_nodes)?;
    let sys = assemble(stiffness, loads, &state, order);
    let mut keep = vec![true; sys.matrix.dim()];
    keep[..DOFS_PER_NODE].iter_mut().for_each(|k| *k = false);
    let (k, free) = sys.matrix.submatrix(&keep);
    let b: Vec<f64> = free.iter().map(|&g| sys.rhs[g]).collect();
    let factor = EnvelopeCholesky::factor(&k)
        .map_err(|e| Error::Input(format!("rod stiffness is singular: {e}")))?;
    let x = factor.solve_refined(&k, &b, 2);
    for (&g, &v) in free.iter().zip(&x) {
        let node = g / DOFS_PER_NODE;
        match g % DOFS_PER_NODE {
            0 => state.v2[node][0] = v,
            1 => state.v2[node][1] = v,
            2 => state.v3[node][0] = v,
            3 => state.v3[node][1] = v,
            _ => state.w[node] = v,
        }
    }
    Ok(recover_u(&state, regime))
}

/// Axial displacement implied by the regime: `u = −½∫₀^{x₁}[(v₂′)² + (v₃′)²]`
/// for `α ≤ 3`, `u ≡ 0` above.
pub fn recover_u(state: &RodState, regime: &AlphaRegime) -> RodState {
    let mut out = state.clone();
    out.u[0] = 0.0;
    match regime.regime {
        Regime::SuperCritical => out.u.iter_mut().for_each(|u| *u = 0.0),
        Regime::SubCritical | Regime::Critical => {
            let he = state.element_length();
            for e in 0..state.element_count() {
                out.u[e + 1] = out.u[e] - he * state.stretch_mean(e);
            }
        }
    }
    out
}

/// Stress moments at one point, in the row order of [`MomentMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentValues {
    /// `∫x₂E₁₁`
    pub e11_tilde: f64,
    /// `∫x₃E₁₁`
    pub e11_hat: f64,
    pub e12_tilde: f64,
    pub e12_hat: f64,
    pub e13_tilde: f64,
    pub e13_hat: f64,
}

impl MomentValues {
    pub fn from_matrix(m: &MomentMatrix, k: SkewParam) -> Self {
        let k = k.to_array();
        let r = |i: usize| (0..3).map(|j| m[i][j] * k[j]).sum::<f64>();
        MomentValues {
            e11_tilde: r(0),
            e11_hat: r(1),
            e12_tilde: r(2),
            e12_hat: r(3),
            e13_tilde: r(4),
            e13_hat: r(5),
        }
    }

    /// Twisting moment `∫x₂E₁₃ − ∫x₃E₁₂`.
    pub fn torque(&self) -> f64 {
        self.e13_tilde - self.e12_hat
    }
}

/// Stress moment curves of a rod state.
#[derive(Debug, Clone)]
pub struct MomentCurves<'a> {
    state: &'a RodState,
    matrix: MomentMatrix,
}

impl MomentCurves<'_> {
    pub fn at(&self, x1: f64) -> MomentValues {
        MomentValues::from_matrix(&self.matrix, self.state.eval(x1).curvature())
    }

    pub fn at_local(&self, e: usize, s: f64) -> MomentValues {
        MomentValues::from_matrix(&self.matrix, self.state.eval_local(e, s).curvature())
    }
}

/// Moment curves from the cell-problem stress fields (requires a stiffness
/// produced by a cell solve).
pub fn stress_moments_1d<'a>(state: &'a RodState, stiffness: &ReducedStiffness) -> Result<MomentCurves<'a>> {
    let matrix = stiffness.moment_matrix.ok_or_else(|| {
        Error::Input("stiffness carries no warp basis / stress moments; produce it with a cell solve".into())
    })?;
    Ok(MomentCurves { state, matrix })
}

/// Bending moments `(∫x₂E₁₁, ∫x₃E₁₁)` and torque at a curvature. Falls back to
/// `Q1` when no stress moments are attached, using
/// `∫x₂E₁₁ = −(Q1κ)₁`, `∫x₃E₁₁ = −(Q1κ)₂`, torque `= (Q1κ)₃`.
fn section_forces(stiffness: &ReducedStiffness, k: SkewParam) -> [f64; 3] {
    match &stiffness.moment_matrix {
        Some(m) => {
            let v = MomentValues::from_matrix(m, k);
            [v.e11_tilde, v.e11_hat, v.torque()]
        }
        None => {
            let k = k.to_array();
            let q = |i: usize| (0..3).map(|j| stiffness.q1[i][j] * k[j]).sum::<f64>();
            [-q(0), -q(1), q(2)]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residual {
    pub absolute: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElResiduals {
    /// `∫x₂E₁₁″ + f₂ = 0` with free-end conditions, weak form
    pub eq2a: Residual,
    /// `∫x₃E₁₁″ + f₃ = 0`
    pub eq2b: Residual,
    /// twisting moment balance, free end
    pub eq3: Residual,
    /// inextensibility (`α ≤ 3`) or `u′ = 0` (`α > 3`), L² norm
    pub constraint: f64,
    /// moments at the free end: `∫x₂E₁₁(L)`, `∫x₃E₁₁(L)`, torque`(L)`
    pub free_end: [f64; 3],
    /// nodal `(∫x₂E₁₁, ∫x₃E₁₁, torque)` L² norms, for scale
    pub moment_scale: f64,
}

impl ElResiduals {
    pub fn max_relative(&self) -> f64 {
        self.eq2a.relative.max(self.eq2b.relative).max(self.eq3.relative)
    }
}

/// Weak residuals of the equilibrium equations over all admissible test
/// functions (Hermite for the bending equations, P1 for the twist), which also
/// encode the free-end conditions.
pub fn el_residuals(
    state: &RodState,
    regime: &AlphaRegime,
    stiffness: &ReducedStiffness,
    loads: &RodLoads,
) -> ElResiduals {
    let he = state.element_length();
    let n = state.node_count();
    // contributions and their absolute magnitudes, per equation
    let mut res = [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; n]];
    let mut mag = [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; n]];
    let g3 = gauss_legendre_unit(3);
    let g5 = gauss_legendre_unit(5);
    for e in 0..state.element_count() {
        for &(s, w) in &g3 {
            let hb = hermite(s, he);
            let f = section_forces(stiffness, state.eval_local(e, s).curvature());
            for a in 0..4 {
                let g = 2 * e + a;
                for k in 0..2 {
                    let c = he * w * f[k] * hb[2][a];
                    res[k][g] += c;
                    mag[k][g] += c.abs();
                }
            }
            for (node, sign) in [(e, -1.0), (e + 1, 1.0)] {
                res[2][node] += sign * f[2] * w;
                mag[2][node] += (f[2] * w).abs();
            }
        }
        for &(s, w) in &g5 {
            let hb = hermite(s, he);
            let f = loads.eval((e as f64 + s) * he);
            for a in 0..4 {
                for k in 0..2 {
                    let c = he * w * f[k] * hb[0][a];
                    res[k][2 * e + a] += c;
                    mag[k][2 * e + a] += c.abs();
                }
            }
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    // tests at the clamped node are excluded
    let skip = [2, 2, 1];
    let abs: Vec<f64> = (0..3).map(|k| norm(&res[k][skip[k]..])).collect();
    let scales: Vec<f64> = (0..3).map(|k| norm(&mag[k][skip[k]..])).collect();
    let floor = scales.iter().fold(0.0_f64, |m, v| m.max(*v));
    let residual = |k: usize| Residual {
        absolute: abs[k],
        relative: if floor > 0.0 { abs[k] / scales[k].max(floor * 1e-3) } else { 0.0 },
    };

    let nodal: Vec<[f64; 3]> = (0..n)
        .map(|i| section_forces(stiffness, state.eval(state.x[i]).curvature()))
        .collect();
    let moment_scale = (0..3)
        .map(|k| nodal.iter().map(|f| he * f[k] * f[k]).sum::<f64>())
        .sum::<f64>()
        .sqrt();

    let constraint = match regime.regime {
        Regime::SuperCritical => {
            (0..state.element_count())
                .map(|e| {
                    let du = (state.u[e + 1] - state.u[e]) / he;
                    he * du * du
                })
                .sum::<f64>()
                .sqrt()
        }
        _ => state.constraint_residual(),
    };
    let tip = state.eval_local(state.element_count() - 1, 1.0);
    ElResiduals {
        eq2a: residual(0),
        eq2b: residual(1),
        eq3: residual(2),
        constraint,
        free_end: section_forces(stiffness, tip.curvature()),
        moment_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(e: f64, q: [f64; 3]) -> ReducedStiffness {
        ReducedStiffness::synthetic(e, [[q[0], 0.0, 0.0], [0.0, q[1], 0.0], [0.0, 0.0, q[2]]]).unwrap()
    }

    fn critical() -> AlphaRegime {
        AlphaRegime::from_alpha(3.0).unwrap()
    }

    /// Cantilever oracle: bending moment `M(x) = ∫_x^L (s − x) f(s) ds`,
    /// `v(x) = ∫_0^x (x − t) M(t)/EI dt`, both by composite Simpson.
    fn cantilever(f: impl Fn(f64) -> f64, ei: f64, length: f64, x: f64) -> f64 {
        let simpson = |g: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 400;
            let h = (b - a) / n as f64;
            let mut s = g(a) + g(b);
            for i in 1..n {
                s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let m = |t: f64| simpson(&|s| (s - t) * f(s), t, length);
        simpson(&|t| (x - t) * m(t) / ei, 0.0, x)
    }

    #[test]
    fn regimes_follow_alpha() {
        assert_eq!(AlphaRegime::from_alpha(2.5).unwrap().regime, Regime::SubCritical);
        assert_eq!(AlphaRegime::from_alpha(3.0).unwrap().regime, Regime::Critical);
        assert_eq!(AlphaRegime::from_alpha(4.0).unwrap().regime, Regime::SuperCritical);
        assert!(AlphaRegime::from_alpha(2.0).is_err());
        assert!(AlphaRegime::new(Regime::Critical, 3.5).is_err());
    }

    #[test]
    fn load_presets_parse() {
        assert_eq!("const:1".parse::<LoadFn>().unwrap(), LoadFn::Const(1.0));
        assert_eq!("linear:1,2".parse::<LoadFn>().unwrap().eval(0.5), 2.0);
        assert!(("sin:2,3".parse::<LoadFn>().unwrap().eval(0.5) - 2.0 * 1.5f64.sin()).abs() < 1e-15);
        assert!("cosh:1".parse::<LoadFn>().is_err());
        assert!("const:x".parse::<LoadFn>().is_err());
        let s = LoadFn::Sampled {
            x: vec![0.0, 1.0],
            y: vec![1.0, 3.0],
        };
        assert_eq!(s.eval(0.25), 1.5);
        assert!(("const:2".parse::<LoadFn>().unwrap().l2_norm(4.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_basis_reproduces_cubics() {
        let he = 0.3;
        let p = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x * x * x;
        let dp = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x;
        let d = [p(0.0), dp(0.0), p(he), dp(he)];
        for s in [0.0, 0.2, 0.7, 1.0] {
            let hb = hermite(s, he);
            let v: f64 = hb[0].iter().zip(&d).map(|(a, b)| a * b).sum();
            let dd: f64 = hb[2].iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((v - p(s * he)).abs() < 1e-14);
            assert!((dd - (-2.0 + 3.0 * s * he)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_load_cantilever() {
        let st = diag(1.0, [1.0, 1.0, 1.0]);
        let loads = RodLoads::new(LoadFn::Const(1.0), LoadFn::zero());
        let s = solve_equilibrium(&critical(), &st, &loads, 1.0, 64).unwrap();
        for (i, &x) in s.x.iter().enumerate() {
            let exact = (x.powi(4) - 4.0 * x.powi(3) + 6.0 * x * x) / 24.0;
            assert!((s.v2[i][0] - exact).abs() < 1e-8);
        }
        assert!((s.v2.last().unwrap()[0] - 0.125).abs() < 1e-10);
        assert!(s.w.iter().all(|w| w.abs() < 1e-12));
        assert!(s.v3.iter().flatten().all(|v| v.abs() < 1e-12));
        let r = el_residuals(&s, &critical(), &st, &loads);
        assert!(r.max_relative() < 1e-10, "{r:?}");
        assert!(r.constraint < 1e-12);
    }

    #[test]
    fn sinusoidal_load_matches_oracle_and_converges() {
        let st = diag(1.0, [2.0, 1.0, 1.0]);
        let f = LoadFn::Sin { amp: 1.0, k: 3.0 };
        let loads = RodLoads::new(f.clone(), LoadFn::zero());
        let exact = cantilever(|x| f.eval(x), 2.0, 1.5, 1.5);
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16, 32] {
            let s = solve_equilibrium(&critical(), &st, &loads, 1.5, n).unwrap();
            let err = (s.v2.last().unwrap()[0] - exact).abs();
            assert!(err <= (prev / 4.0).max(1e-9), "n={n}: {err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn zero_loads_give_zero_state() {
        let st = diag(2.5, [1.0, 1.0, 0.5]);
        for alpha in [2.5, 3.0, 4.0] {
            let r = AlphaRegime::from_alpha(alpha).unwrap();
            let s = solve_equilibrium(&r, &st, &RodLoads::zero(), 1.0, 10).unwrap();
            assert_eq!(s, RodState::zeros(1.0, 10).unwrap());
            assert_eq!(energy_alpha(&s, &r, &st, &RodLoads::zero()).unwrap(), ExtendedReal::Finite(0.0));
        }
    }

    #[test]
    fn bending_twist_coupling_drives_twist() {
        let q = [[1.0, 0.0, 0.3], [0.0, 1.0, 0.0], [0.3, 0.0, 0.5]];
        let st = ReducedStiffness::synthetic(2.0, q).unwrap();
        let loads = RodLoads::new(LoadFn::Const(1.0), LoadFn::zero());
        let s = solve_equilibrium(&critical(), &st, &loads, 1.0, 32).unwrap();
        assert!(s.w.last().unwrap().abs() > 1e-3);
        // torque vanishes pointwise: 0.3 v₂″ + 0.5 w′ = 0
        for e in 0..s.element_count() {
            let p = s.eval_local(e, 0.5);
            assert!((0.3 * p.ddv[0] + 0.5 * p.dw).abs() < 1e-3);
        }
        let r = el_residuals(&s, &critical(), &st, &loads);
        assert!(r.max_relative() < 1e-10, "{r:?}");
    }

    #[test]
    fn u_recovery() {
        let s = RodState::from_fns(1.0, 17, |_| 0.0, |x| [0.5 * x * x, x], |_| [0.0, 0.0], |_| 0.0).unwrap();
        let c = recover_u(&s, &critical());
        for (x, u) in c.x.iter().zip(&c.u) {
            assert!((u + x.powi(3) / 6.0).abs() < 1e-14);
        }
        assert!(c.constraint_residual() < 1e-14);
        let sup = recover_u(&s, &AlphaRegime::from_alpha(4.0).unwrap());
        assert!(sup.u.iter().all(|u| *u == 0.0));
        let zero = recover_u(&RodState::zeros(1.0, 5).unwrap(), &critical());
        assert!(zero.u.iter().all(|u| *u == 0.0));
    }

    #[test]
    fn energy_regimes() {
        let st = diag(2.0, [1.0, 1.0, 1.0]);
        let loads = RodLoads::new(LoadFn::Const(0.5), LoadFn::zero());
        let s = RodState::from_fns(1.0, 9, |_| 0.0, |x| [0.5 * x * x, x], |_| [0.0, 0.0], |_| 0.0).unwrap();
        // bending: ½∫1 = 0.5, work: 0.5·∫x²/2 = 1/12
        let sub = AlphaRegime::from_alpha(2.5).unwrap();
        assert_eq!(energy_alpha(&s, &sub, &st, &loads).unwrap(), ExtendedReal::PosInfinity);
        let rec = recover_u(&s, &critical());
        let e_sub = energy_alpha(&rec, &sub, &st, &loads).unwrap().to_f64();
        let e_crit = energy_alpha(&rec, &critical(), &st, &loads).unwrap().to_f64();
        assert!((e_sub - (0.5 - 1.0 / 12.0)).abs() < 1e-13);
        assert!((e_crit - e_sub).abs() < 1e-13);
        // α > 3 with u = 0: no stretching either
        let sup = AlphaRegime::from_alpha(4.0).unwrap();
        assert!((energy_alpha(&s, &sup, &st, &loads).unwrap().to_f64() - e_sub).abs() < 1e-13);
        // critical with u = 0 pays ½𝔼 Σ he·m², m the element mean of x²/2
        let e = energy_alpha(&s, &critical(), &st, &loads).unwrap().to_f64();
        let he = 1.0 / 8.0;
        let pay: f64 = (0..8)
            .map(|k| {
                let (a, b) = (k as f64 * he, (k + 1) as f64 * he);
                let m = (b.powi(3) - a.powi(3)) / 6.0 / he;
                0.5 * 2.0 * he * m * m
            })
            .sum();
        assert!((e - e_sub - pay).abs() < 1e-13);
    }

    #[test]
    fn regimes_share_the_load_response() {
        let st = ReducedStiffness::synthetic(2.5, [[1.0, 0.1, 0.0], [0.1, 0.8, 0.05], [0.0, 0.05, 0.4]]).unwrap();
        let loads = RodLoads::new(LoadFn::Sin { amp: 0.3, k: 2.0 }, LoadFn::Linear { a: 0.1, b: -0.2 });
        let states: Vec<RodState> = [2.5, 3.0, 4.0]
            .iter()
            .map(|&a| solve_equilibrium(&AlphaRegime::from_alpha(a).unwrap(), &st, &loads, 2.0, 20).unwrap())
            .collect();
        for s in &states[1..] {
            assert_eq!(s.v2, states[0].v2);
            assert_eq!(s.v3, states[0].v3);
            assert_eq!(s.w, states[0].w);
        }
        assert_eq!(states[0].u, states[1].u);
        assert!(states[2].u.iter().all(|u| *u == 0.0));
    }

    #[test]
    fn solution_is_a_local_minimum() {
        let st = ReducedStiffness::synthetic(2.5, [[1.0, 0.0, 0.2], [0.0, 0.8, 0.0], [0.2, 0.0, 0.4]]).unwrap();
        let loads = RodLoads::new(LoadFn::Const(1.0), LoadFn::Sin { amp: 0.5, k: 1.0 });
        let r = critical();
        let s = solve_equilibrium(&r, &st, &loads, 1.0, 12).unwrap();
        let e0 = energy_alpha(&s, &r, &st, &loads).unwrap().to_f64();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut p = s.clone();
            for i in 1..p.node_count() {
                for k in 0..2 {
                    p.v2[i][k] += 1e-2 * rng.random_range(-1.0..1.0);
                    p.v3[i][k] += 1e-2 * rng.random_range(-1.0..1.0);
                }
                p.w[i] += 1e-2 * rng.random_range(-1.0..1.0);
                p.u[i] += 1e-2 * rng.random_range(-1.0..1.0);
            }
            assert!(energy_alpha(&p, &r, &st, &loads).unwrap().to_f64() >= e0);
        }
    }

    #[test]
    fn assembly_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let m = nalgebra::Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let q = m * m.transpose() + Mat3::identity() * 0.5;
            let q1 = [[q[(0, 0)], q[(0, 1)], q[(0, 2)]], [q[(1, 0)], q[(1, 1)], q[(1, 2)]], [q[(2, 0)], q[(2, 1)], q[(2, 2)]]];
            let st = ReducedStiffness::synthetic(1.0, q1).unwrap();
            let loads = RodLoads::new(
                LoadFn::Const(rng.random_range(-1.0..1.0)),
                LoadFn::Sin { amp: rng.random_range(-1.0..1.0), k: 2.0 },
            );
            let a = solve_equilibrium(&critical(), &st, &loads, 1.0, 16).unwrap();
            let order: Vec<usize> = (0..15).rev().collect();
            let b = solve_with_order(&critical(), &st, &loads, 1.0, 16, &order).unwrap();
            for i in 0..16 {
                assert!((a.v2[i][0] - b.v2[i][0]).abs() < 1e-10);
                assert!((a.v3[i][0] - b.v3[i][0]).abs() < 1e-10);
                assert!((a.w[i] - b.w[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn perturbed_load_is_detected() {
        let st = diag(1.0, [1.0, 1.0, 1.0]);
        let loads = RodLoads::new(LoadFn::Const(1.0), LoadFn::zero());
        let s = solve_equilibrium(&critical(), &st, &loads, 1.0, 32).unwrap();
        let r = el_residuals(&s, &critical(), &st, &loads.scaled(1.1));
        let base = el_residuals(&s, &critical(), &st, &loads);
        let weak_f2 = el_residuals(&RodState::zeros(1.0, 32).unwrap(), &critical(), &st, &loads).eq2a.absolute;
        assert!(r.eq2a.absolute >= 0.099 * weak_f2);
        assert_eq!(r.eq2b, base.eq2b);
        assert_eq!(r.eq3, base.eq3);
    }

    #[test]
    fn curvature_matrix_layout() {
        let s = RodState::from_fns(1.0, 5, |_| 0.0, |x| [0.5 * x * x, x], |_| [0.0, 0.0], |_| 0.0).unwrap();
        let (da, a) = curvature_matrix(&s, 0.6);
        assert!((a[(1, 0)] - 0.6).abs() < 1e-14 && (da[(1, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(a + a.transpose(), Mat3::zeros());
        let z = RodState::zeros(1.0, 5).unwrap();
        let (da, a) = curvature_matrix(&z, 0.3);
        assert_eq!(da, Mat3::zeros());
        assert_eq!(a, Mat3::zeros());
    }

    #[test]
    fn moments_require_cell_data() {
        let st = diag(1.0, [1.0, 1.0, 1.0]);
        let s = RodState::zeros(1.0, 5).unwrap();
        assert!(matches!(stress_moments_1d(&s, &st), Err(Error::Input(_))));
    }
}
