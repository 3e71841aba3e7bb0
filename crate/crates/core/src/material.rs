//! Hyperelastic stored-energy densities and their linearization at the identity.
//!
//! Every density here is frame indifferent, vanishes exactly on rotations,
//! blows up as `det F → 0⁺` and is `+∞` for `det F ≤ 0`. Evaluation goes
//! through the displacement gradient `H = F - Id` so that values near the
//! identity do not suffer cancellation: the beam solver works with strains of
//! order `1e-6` and still needs relative accuracy in the energy.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;

/// Value of an energy that may be `+∞`.
///
/// `+∞` is a distinct state rather than `f64::INFINITY`, so an overflow in a
/// finite evaluation is never mistaken for an infeasible configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }

    /// Lossy conversion for reporting.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl std::ops::Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
            _ => ExtendedReal::PosInfinity,
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => a.partial_cmp(b),
            (ExtendedReal::PosInfinity, ExtendedReal::PosInfinity) => Some(Ordering::Equal),
            (ExtendedReal::PosInfinity, _) => Some(Ordering::Greater),
            (_, ExtendedReal::PosInfinity) => Some(Ordering::Less),
        }
    }
}

/// Lamé moduli of an isotropic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsotropicModuli {
    pub mu: f64,
    pub lambda: f64,
}

impl IsotropicModuli {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        let m = IsotropicModuli { mu, lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Input(format!("shear modulus mu must be > 0, got {}", self.mu)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Input(format!(
                "Lamé parameter lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Young's modulus `mu (3 lambda + 2 mu) / (lambda + mu)`.
    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyFamily {
    /// `(mu/2)(|F|² - 3) - mu log J + (lambda/2)(log J)²`
    #[serde(alias = "neo-hookean")]
    CompressibleNeoHookean,
    /// `mu |E|² + (lambda/2)(log J)²` with `E = (FᵀF - Id)/2`
    #[serde(alias = "stvk-logdet")]
    StVenantKirchhoffLogDet,
}

impl std::str::FromStr for EnergyFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CompressibleNeoHookean" | "neo-hookean" | "neohookean" => {
                Ok(EnergyFamily::CompressibleNeoHookean)
            }
            "StVenantKirchhoffLogDet" | "stvk-logdet" | "stvk" => {
                Ok(EnergyFamily::StVenantKirchhoffLogDet)
            }
            other => Err(Error::Input(format!("unknown energy family '{other}'"))),
        }
    }
}

/// A stored-energy density `W` together with its moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredEnergy {
    pub family: EnergyFamily,
    pub mu: f64,
    pub lambda: f64,
}

/// Invariants of `H` needed for an accurate `det(Id + H) - 1`.
fn det_minus_one(h: &Mat3) -> f64 {
    let tr = h.trace();
    let i2 = 0.5 * (tr * tr - (h * h).trace());
    tr + i2 + h.determinant()
}

/// `d - ln(1 + d)` without cancellation for small `d`.
fn d_minus_log1p(d: f64) -> f64 {
    if d.abs() < 1e-3 {
        // alternating series d²/2 - d³/3 + ...; 8 terms are plenty at |d| < 1e-3
        let mut term = d;
        let mut s = 0.0;
        for k in 2..10 {
            term *= -d;
            s -= term / k as f64;
        }
        s
    } else {
        d - d.ln_1p()
    }
}

fn check_finite(f: &Mat3) -> Result<()> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input("deformation gradient has non-finite entries".into()))
    }
}

impl StoredEnergy {
    pub fn new(family: EnergyFamily, moduli: IsotropicModuli) -> Result<Self> {
        moduli.validate()?;
        Ok(StoredEnergy {
            family,
            mu: moduli.mu,
            lambda: moduli.lambda,
        })
    }

    pub fn neo_hookean(mu: f64, lambda: f64) -> Result<Self> {
        Self::new(EnergyFamily::CompressibleNeoHookean, IsotropicModuli::new(mu, lambda)?)
    }

    pub fn moduli(&self) -> IsotropicModuli {
        IsotropicModuli {
            mu: self.mu,
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.moduli().validate()
    }

    /// `W(F)`; `+∞` when `det F ≤ 0`.
    pub fn energy(&self, f: &Mat3) -> Result<ExtendedReal> {
        check_finite(f)?;
        Ok(self.energy_disp(&(f - Mat3::identity())))
    }

    /// `W(Id + H)`, evaluated from the displacement gradient `H`.
    pub fn energy_disp(&self, h: &Mat3) -> ExtendedReal {
        let dm1 = det_minus_one(h);
        if !(dm1 > -1.0) {
            return ExtendedReal::PosInfinity;
        }
        let log_j = dm1.ln_1p();
        let (mu, lambda) = (self.mu, self.lambda);
        let w = match self.family {
            EnergyFamily::CompressibleNeoHookean => {
                // mu (tr H - log J) + mu/2 |H|² + lambda/2 log²J, with
                // tr H - log J = -(I2 + det H) + (d - log1p d)
                let tr = h.trace();
                let i2_plus_i3 = dm1 - tr;
                mu * (d_minus_log1p(dm1) - i2_plus_i3)
                    + 0.5 * mu * h.norm_squared()
                    + 0.5 * lambda * log_j * log_j
            }
            EnergyFamily::StVenantKirchhoffLogDet => {
                let e = green_strain(h);
                mu * e.norm_squared() + 0.5 * lambda * log_j * log_j
            }
        };
        ExtendedReal::Finite(w)
    }

    /// First Piola–Kirchhoff stress `DW(F)`.
    pub fn stress(&self, f: &Mat3) -> Result<Mat3> {
        check_finite(f)?;
        self.stress_disp(&(f - Mat3::identity()))
    }

    /// `DW(Id + H)`.
    pub fn stress_disp(&self, h: &Mat3) -> Result<Mat3> {
        let dm1 = det_minus_one(h);
        if !(dm1 > -1.0) {
            return Err(Error::Domain(format!("det F = {} <= 0", 1.0 + dm1)));
        }
        let f = Mat3::identity() + h;
        let inv = f
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular deformation gradient".into()))?;
        let log_j = dm1.ln_1p();
        let (mu, lambda) = (self.mu, self.lambda);
        Ok(match self.family {
            EnergyFamily::CompressibleNeoHookean => {
                // F - F⁻ᵀ = H + (H F⁻¹)ᵀ
                mu * (h + (h * inv).transpose()) + lambda * log_j * inv.transpose()
            }
            EnergyFamily::StVenantKirchhoffLogDet => {
                2.0 * mu * f * green_strain(h) + lambda * log_j * inv.transpose()
            }
        })
    }

    /// Kirchhoff-type stress `DW(F) Fᵀ`, symmetric by frame indifference.
    pub fn kirchhoff_disp(&self, h: &Mat3) -> Result<Mat3> {
        let dm1 = det_minus_one(h);
        if !(dm1 > -1.0) {
            return Err(Error::Domain(format!("det F = {} <= 0", 1.0 + dm1)));
        }
        let log_j = dm1.ln_1p();
        let (mu, lambda) = (self.mu, self.lambda);
        let f = Mat3::identity() + h;
        Ok(match self.family {
            // mu (F Fᵀ - Id) + lambda log J Id
            EnergyFamily::CompressibleNeoHookean => {
                mu * (h + h.transpose() + h * h.transpose()) + lambda * log_j * Mat3::identity()
            }
            EnergyFamily::StVenantKirchhoffLogDet => {
                2.0 * mu * f * green_strain(h) * f.transpose() + lambda * log_j * Mat3::identity()
            }
        })
    }

    /// Directional second derivative `D²W(F)[dF]` at `F = Id + H`.
    pub fn hessian_action_disp(&self, h: &Mat3, df: &Mat3) -> Result<Mat3> {
        Ok(self.hessian_kernel(h)?.apply(df))
    }

    /// Precomputes the quantities shared by all `D²W(F)[·]` at `F = Id + H`.
    pub fn hessian_kernel(&self, h: &Mat3) -> Result<HessianKernel> {
        let dm1 = det_minus_one(h);
        if !(dm1 > -1.0) {
            return Err(Error::Domain(format!("det F = {} <= 0", 1.0 + dm1)));
        }
        let f = Mat3::identity() + h;
        let inv = f
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular deformation gradient".into()))?;
        Ok(HessianKernel {
            energy: *self,
            f,
            inv_t: inv.transpose(),
            log_j: dm1.ln_1p(),
            green: green_strain(h),
        })
    }

    /// The linearized elasticity tensor `D²W(Id)`.
    pub fn linearized(&self) -> ElasticTensor {
        ElasticTensor {
            mu: self.mu,
            lambda: self.lambda,
        }
    }
}

fn green_strain(h: &Mat3) -> Mat3 {
    0.5 * (h + h.transpose() + h.transpose() * h)
}

/// Second derivative of `W` frozen at one deformation gradient.
#[derive(Debug, Clone, Copy)]
pub struct HessianKernel {
    energy: StoredEnergy,
    f: Mat3,
    inv_t: Mat3,
    log_j: f64,
    green: Mat3,
}

impl HessianKernel {
    /// `D²W(F)[dF]`.
    pub fn apply(&self, df: &Mat3) -> Mat3 {
        let inv_t = &self.inv_t;
        let tr_term = inv_t.dot(df);
        let cross = inv_t * df.transpose() * inv_t;
        let (mu, lambda) = (self.energy.mu, self.energy.lambda);
        match self.energy.family {
            EnergyFamily::CompressibleNeoHookean => {
                mu * df + (mu - lambda * self.log_j) * cross + lambda * tr_term * inv_t
            }
            EnergyFamily::StVenantKirchhoffLogDet => {
                let de = (self.f.transpose() * df).symmetric_part();
                2.0 * mu * (df * self.green + self.f * de) + lambda * tr_term * inv_t
                    - lambda * self.log_j * cross
            }
        }
    }
}

/// Isotropic linear map `H ↦ 2 mu sym H + lambda tr(H) Id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor {
    pub mu: f64,
    pub lambda: f64,
}

impl ElasticTensor {
    pub fn apply(&self, h: &Mat3) -> Mat3 {
        2.0 * self.mu * h.symmetric_part() + self.lambda * h.trace() * Mat3::identity()
    }

    /// `Q₃(H) = 𝓛H : H`.
    pub fn q3(&self, h: &Mat3) -> f64 {
        self.apply(h).dot(h)
    }

    /// Symmetric bilinear form `𝓛A : B`.
    pub fn bilinear(&self, a: &Mat3, b: &Mat3) -> f64 {
        self.apply(a).dot(b)
    }

    pub fn scaled(&self, s: f64) -> Self {
        ElasticTensor {
            mu: s * self.mu,
            lambda: s * self.lambda,
        }
    }
}

/// Uniformly distributed rotation (via a random unit quaternion).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    loop {
        let q = [
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
        ];
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                q[0], q[1], q[2], q[3],
            ));
            return *uq.to_rotation_matrix().matrix();
        }
    }
}

/// `dist(F, SO(3))` via the singular values, with the smallest one sign-flipped
/// when `det F < 0`.
pub fn dist_to_so3(f: &Mat3) -> f64 {
    let svd = f.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if f.determinant() < 0.0 {
        s[2] = -s[2];
    }
    s.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>().sqrt()
}

/// One line of a hypothesis probe report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub hypothesis: String,
    pub max_violation: f64,
    pub fitted_constant: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub records: Vec<ProbeRecord>,
}

impl ProbeReport {
    pub fn get(&self, hypothesis: &str) -> Option<&ProbeRecord> {
        self.records.iter().find(|r| r.hypothesis == hypothesis)
    }
}

fn sample_deformation<R: Rng>(rng: &mut R, near_identity: bool) -> Mat3 {
    if near_identity {
        let mut a = Mat3::zeros();
        a.iter_mut().for_each(|v| *v = rng.random_range(-0.05..0.05));
        random_rotation(rng) * (Mat3::identity() + a)
    } else {
        let s = Mat3::from_diagonal(&nalgebra::Vector3::new(
            rng.random_range(0.3..3.0),
            rng.random_range(0.3..3.0),
            rng.random_range(0.3..3.0),
        ));
        random_rotation(rng) * s * random_rotation(rng)
    }
}

/// Samples deformation gradients with positive determinant (half near
/// `SO(3)`, half with principal stretches in `[0.3, 3]`) and checks:
///
/// * `H3`: `|W(RF) - W(F)| / (1 + |W(F)|)`
/// * `H4`: `W` on random rotations
/// * `H5`: fitted `C = min W / dist²(F, SO(3))`; violation is `max(0, -C)`
/// * `H7`: fitted `k = max |DW(F)Fᵀ| / (W(F) + 1)`
/// * `Kirchhoff-symmetry`: `|DW Fᵀ - F DWᵀ| / (1 + |DW Fᵀ|)`
pub fn probe_hypotheses(w: &StoredEnergy, sample_count: usize, seed: u64) -> Result<ProbeReport> {
    if sample_count == 0 {
        return Err(Error::Input("sample_count must be >= 1".into()));
    }
    w.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h3 = 0.0f64;
    let mut h4 = 0.0f64;
    let mut c_fit = f64::INFINITY;
    let mut k_fit = 0.0f64;
    let mut sym = 0.0f64;
    for i in 0..sample_count {
        let f = sample_deformation(&mut rng, i % 2 == 0);
        let r = random_rotation(&mut rng);
        let wf = w.energy(&f)?.to_f64();
        let wrf = w.energy(&(r * f))?.to_f64();
        h3 = h3.max((wrf - wf).abs() / (1.0 + wf.abs()));

        let q = random_rotation(&mut rng);
        h4 = h4.max(w.energy(&q)?.to_f64().abs());

        let d = dist_to_so3(&f);
        if d > 1e-6 {
            c_fit = c_fit.min(wf / (d * d));
        }
        let p = w.stress(&f)?;
        let tau = p * f.transpose();
        k_fit = k_fit.max(tau.norm() / (wf + 1.0));
        sym = sym.max((tau - tau.transpose()).norm() / (1.0 + tau.norm()));
    }
    let rec = |name: &str, v: f64, c: Option<f64>| ProbeRecord {
        hypothesis: name.to_string(),
        max_violation: v,
        fitted_constant: c,
        samples: sample_count,
        seed,
    };
    let c_fit = if c_fit.is_finite() { c_fit } else { 0.0 };
    Ok(ProbeReport {
        records: vec![
            rec("H3", h3, None),
            rec("H4", h4, None),
            rec("H5", (-c_fit).max(0.0), Some(c_fit)),
            rec("H7", if k_fit.is_finite() { 0.0 } else { f64::INFINITY }, Some(k_fit)),
            rec("Kirchhoff-symmetry", sym, None),
        ],
    })
}
