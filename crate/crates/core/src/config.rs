//! Run configuration: one TOML file with a table per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chem::{BondRules, Vocabulary};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::evaluator::AffinityModel;
use crate::generator::{FocalRule, GenConfig};
use crate::geometry::RbfBank;
use crate::model::ModelConfig;
use crate::pdb::DEFAULT_POCKET_CUTOFF;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChemSection {
    /// Element table file; the built-in ten-element table when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
    pub bond_tolerance: f64,
    pub clash_factor: f64,
}

impl Default for ChemSection {
    fn default() -> Self {
        let r = BondRules::default();
        Self {
            vocabulary: None,
            bond_tolerance: r.tolerance,
            clash_factor: r.clash_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub rbf_count: usize,
    pub rbf_start: f64,
    pub rbf_end: f64,
    /// Gaussian width; the center spacing when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbf_width: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            rbf_count: 16,
            rbf_start: 0.0,
            rbf_end: 8.0,
            rbf_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdbSection {
    pub pocket_cutoff: f64,
}

impl Default for PdbSection {
    fn default() -> Self {
        Self {
            pocket_cutoff: DEFAULT_POCKET_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub width: usize,
    pub hidden: usize,
    pub layers: usize,
    pub graph_cutoff: f64,
    pub bfactor_gating: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            width: e.width,
            hidden: e.hidden,
            layers: e.layers,
            graph_cutoff: e.cutoff,
            bfactor_gating: e.bfactor_gating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub type_layers: usize,
    pub coord_layers: usize,
    pub init_scale: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            type_layers: m.type_flow_layers,
            coord_layers: m.coord_flow_layers,
            init_scale: m.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub max_atoms: usize,
    pub focal_rule: FocalRule,
    pub valence_constrained: bool,
    pub max_resample: usize,
    /// Molecules written by `generate`.
    pub samples: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GenConfig::default();
        Self {
            max_atoms: g.max_atoms,
            focal_rule: g.focal_rule,
            valence_constrained: g.valence_constrained,
            max_resample: g.max_resample,
            samples: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub chem: ChemSection,
    pub geometry: GeometrySection,
    pub pdb: PdbSection,
    pub encoder: EncoderSection,
    pub flow: FlowSection,
    pub generator: GeneratorSection,
    pub trainer: TrainConfig,
    pub evaluator: AffinityModel,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

fn nonzero(name: &str, x: usize) -> Result<()> {
    if x > 0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("chem.bond_tolerance", self.chem.bond_tolerance)?;
        positive("chem.clash_factor", self.chem.clash_factor)?;
        if self.chem.clash_factor >= 1.0 {
            return Err(Error::Config("chem.clash_factor must be below 1".into()));
        }
        nonzero("geometry.rbf_count", self.geometry.rbf_count)?;
        if self.geometry.rbf_end.is_nan() || self.geometry.rbf_end <= self.geometry.rbf_start {
            return Err(Error::Config(
                "geometry.rbf_end must exceed rbf_start".into(),
            ));
        }
        if let Some(w) = self.geometry.rbf_width {
            positive("geometry.rbf_width", w)?;
        }
        positive("pdb.pocket_cutoff", self.pdb.pocket_cutoff)?;
        nonzero("encoder.width", self.encoder.width)?;
        nonzero("encoder.hidden", self.encoder.hidden)?;
        positive("encoder.graph_cutoff", self.encoder.graph_cutoff)?;
        nonzero("flow.type_layers", self.flow.type_layers)?;
        nonzero("flow.coord_layers", self.flow.coord_layers)?;
        positive("flow.init_scale", self.flow.init_scale)?;
        nonzero("generator.max_atoms", self.generator.max_atoms)?;
        self.trainer.validate()?;
        self.evaluator.validate()
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.chem.vocabulary {
            Some(p) => Vocabulary::load(p),
            None => Ok(Vocabulary::default()),
        }
    }

    pub fn bond_rules(&self) -> BondRules {
        BondRules {
            tolerance: self.chem.bond_tolerance,
            clash_factor: self.chem.clash_factor,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let g = &self.geometry;
        Ok(ModelConfig {
            encoder: EncoderConfig {
                width: self.encoder.width,
                hidden: self.encoder.hidden,
                layers: self.encoder.layers,
                rbf: RbfBank::evenly_spaced(g.rbf_count, g.rbf_start, g.rbf_end, g.rbf_width)?,
                cutoff: self.encoder.graph_cutoff,
                bfactor_gating: self.encoder.bfactor_gating,
            },
            type_flow_layers: self.flow.type_layers,
            coord_flow_layers: self.flow.coord_layers,
            init_scale: self.flow.init_scale,
        })
    }

    pub fn gen_config(&self) -> GenConfig {
        let g = &self.generator;
        GenConfig {
            max_atoms: g.max_atoms,
            focal_rule: g.focal_rule,
            valence_constrained: g.valence_constrained,
            max_resample: g.max_resample,
            bond_rules: self.bond_rules(),
        }
    }
}
