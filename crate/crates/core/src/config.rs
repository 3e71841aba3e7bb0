//! Run configuration: a single TOML (or JSON) document with optional blocks
//! for each stage. Unknown keys are rejected and `schema_version` must match.
//!
//! ```toml
//! schema_version = 1
//!
//! [material]
//! family = "neo-hookean"
//! mu = 1.0
//! lambda = 1.0
//!
//! [section]
//! generator = "disc"
//! rings = 4
//!
//! [rod]
//! alpha = 3.0
//! f2 = "const:0.01"
//!
//! [beam]
//! h = 0.1
//! axial_elems = 32
//!
//! [ladder]
//! h_values = [0.2, 0.1, 0.05]
//! axial_elems = [16, 32, 64]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam3d::{AxialQuadrature, BeamConfig, SolverOptions};
use crate::convergence::LadderSpec;
use crate::cross_section::{self, CrossSection};
use crate::error::{Error, Result};
use crate::material::StoredEnergy;
use crate::rod_model::{AlphaRegime, LoadFn, Regime, RodLoads};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the cross-section comes from. Generated and loaded meshes are
/// normalized (centered, principal axes, unit area) before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SectionSpec {
    Disc { rings: usize },
    Square { n: usize },
    Rectangle { width: f64, height: f64, nx: usize, ny: usize },
    Polygon { corners: Vec<[f64; 2]>, rings: usize },
    File { path: String },
}

impl SectionSpec {
    pub fn build(&self, base: &Path) -> Result<CrossSection> {
        match self {
            SectionSpec::Disc { rings } => cross_section::unit_disc(*rings),
            SectionSpec::Square { n } => cross_section::unit_square(*n)?.normalize(),
            SectionSpec::Rectangle { width, height, nx, ny } => {
                cross_section::rectangle(*width, *height, *nx, *ny)?.normalize()
            }
            SectionSpec::Polygon { corners, rings } => cross_section::polygon(corners, *rings)?.normalize(),
            SectionSpec::File { path } => CrossSection::load(resolve(base, path))?.normalize(),
        }
    }
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_length() -> f64 {
    1.0
}

fn default_rod_nodes() -> usize {
    129
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodSpec {
    pub alpha: f64,
    /// Optional cross-check of `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_rod_nodes")]
    pub nodes: usize,
    #[serde(default = "LoadFn::zero")]
    pub f2: LoadFn,
    #[serde(default = "LoadFn::zero")]
    pub f3: LoadFn,
    /// Path of a `reduced_stiffness.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<String>,
}

impl RodSpec {
    pub fn regime(&self) -> Result<AlphaRegime> {
        match self.regime {
            Some(r) => AlphaRegime::new(r, self.alpha),
            None => AlphaRegime::from_alpha(self.alpha),
        }
    }

    pub fn loads(&self) -> RodLoads {
        RodLoads::new(self.f2.clone(), self.f3.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub h: f64,
    pub axial_elems: usize,
    #[serde(default)]
    pub quadrature: AxialQuadrature,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderBlock {
    pub h_values: Vec<f64>,
    pub axial_elems: Vec<usize>,
    #[serde(default)]
    pub quadrature: AxialQuadrature,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<StoredEnergy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rod: Option<RodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeBlock>,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key `{key}`"))
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: None,
            material: None,
            section: None,
            rod: None,
            beam: None,
            ladder: None,
            probe: None,
            solver: SolverOptions::default(),
            base_dir: PathBuf::from("."),
        }
    }

    fn check_version(self) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(self)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str::<RunConfig>(s)
            .map_err(|e| Error::Config(e.to_string()))?
            .check_version()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<RunConfig>(s)
            .map_err(|e| Error::Config(e.to_string()))?
            .check_version()
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Canonical TOML form; this is the config snapshot and what is hashed.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml_string()?.as_bytes()))
    }

    pub fn material(&self) -> Result<StoredEnergy> {
        let m = self.material.ok_or_else(|| missing("material"))?;
        m.validate()?;
        Ok(m)
    }

    pub fn section(&self) -> Result<CrossSection> {
        self.section
            .as_ref()
            .ok_or_else(|| missing("section"))?
            .build(&self.base_dir)
    }

    pub fn rod(&self) -> Result<&RodSpec> {
        self.rod.as_ref().ok_or_else(|| missing("rod"))
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        resolve(&self.base_dir, path)
    }

    pub fn beam_config(&self) -> Result<BeamConfig> {
        let beam = self.beam.as_ref().ok_or_else(|| missing("beam"))?;
        let rod = self.rod()?;
        rod.regime()?;
        let cfg = BeamConfig {
            h: beam.h,
            alpha: rod.alpha,
            length: rod.length,
            axial_elems: beam.axial_elems,
            section: self.section()?,
            material: self.material()?,
            loads: rod.loads(),
            quadrature: beam.quadrature,
            solver: self.solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ladder_spec(&self) -> Result<LadderSpec> {
        let ladder = self.ladder.as_ref().ok_or_else(|| missing("ladder"))?;
        let rod = self.rod()?;
        let spec = LadderSpec {
            alpha: rod.alpha,
            h_values: ladder.h_values.clone(),
            axial_elems: ladder.axial_elems.clone(),
            length: rod.length,
            rod_nodes: rod.nodes,
            section: self.section()?,
            material: self.material()?,
            loads: rod.loads(),
            quadrature: ladder.quadrature,
            solver: self.solver,
            warm_start: ladder.warm_start,
            config_hash: self.hash()?,
        };
        rod.regime()?;
        spec.validate()?;
        Ok(spec)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
