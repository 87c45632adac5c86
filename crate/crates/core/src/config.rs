//! TOML run configuration.
//!
//! ```toml
//! seed = 0
//!
//! [dataset]
//! kind = "citylearn"          # citylearn | canonical | synthetic
//! path = "data/citylearn"     # relative to the config file; defaults to $ALEX_DATASET_DIR
//!
//! [tariff]
//! grid_buy = 0.25
//! grid_sell = 0.05
//! market_min = 0.07
//! market_max = 0.23
//!
//! [solver]
//! n_quant = 40
//! engine = { kind = "backward_induction" }
//!
//! [equilibrium]
//! threshold = 0.01
//! max_outer_rounds = 100
//! init = "hold"
//!
//! [individual]
//! w_sq = 0.0
//! ```
//!
//! Every section and key is optional except `dataset.kind`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{BatterySpec, CommunityDataset, GridTariff};
use crate::equilibrium::{Engine, EquilibriumConfig, Init};
use crate::error::{Error, Result};
use crate::ingest::{generate_synthetic, load_citylearn, read_canonical, CityLearnMapping, Profile, SyntheticSpec};
use crate::mdp::MdpConfig;

/// Environment variable naming the dataset directory when the config omits it.
pub const DATASET_ENV: &str = "ALEX_DATASET_DIR";

// Parsed once per run, so the size spread between variants is irrelevant.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Citylearn {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default)]
        mapping: CityLearnMapping,
    },
    Canonical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    Synthetic {
        n_buildings: usize,
        steps: usize,
        /// Seed for the generator; the run seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        profile: Profile,
        battery: BatterySpec,
        #[serde(default = "default_start_month")]
        start_month: u8,
    },
}

fn default_start_month() -> u8 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_quant: usize,
    pub engine: Engine,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_quant: 40,
            engine: Engine::BackwardInduction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterLoopConfig {
    pub threshold: f64,
    pub max_outer_rounds: usize,
    pub init: Init,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        OuterLoopConfig {
            threshold: 0.01,
            max_outer_rounds: 100,
            init: Init::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndividualConfig {
    pub w_sq: f64,
}

impl Default for IndividualConfig {
    fn default() -> Self {
        IndividualConfig { w_sq: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub tariff: GridTariff,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub equilibrium: OuterLoopConfig,
    #[serde(default)]
    pub individual: IndividualConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Canonical TOML text of this config; parsing it yields the same value.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.solver.n_quant < 2 {
            return bad(format!("solver.n_quant {} must be at least 2", self.solver.n_quant));
        }
        if let Engine::ValueIteration { tol } = self.solver.engine {
            if tol.is_nan() || tol <= 0.0 {
                return bad(format!("solver.engine.tol {tol} must be positive"));
            }
        }
        if self.equilibrium.threshold.is_nan() || self.equilibrium.threshold <= 0.0 {
            return bad(format!(
                "equilibrium.threshold {} must be positive",
                self.equilibrium.threshold
            ));
        }
        if self.equilibrium.max_outer_rounds == 0 {
            return bad("equilibrium.max_outer_rounds must be positive".into());
        }
        if !(self.individual.w_sq.is_finite() && self.individual.w_sq >= 0.0) {
            return bad(format!("individual.w_sq {} must be non-negative", self.individual.w_sq));
        }
        Ok(())
    }

    /// Makes a relative dataset path relative to `base` (the config's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetConfig::Citylearn { path: Some(p), .. } | DatasetConfig::Canonical { path: Some(p) } =
            &mut self.dataset
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn equilibrium_config(&self) -> EquilibriumConfig {
        EquilibriumConfig {
            mdp: MdpConfig {
                n_quant: self.solver.n_quant,
                w_sq: self.individual.w_sq,
            },
            threshold: self.equilibrium.threshold,
            max_outer_rounds: self.equilibrium.max_outer_rounds,
            seed: self.seed,
            init: self.equilibrium.init,
            engine: self.solver.engine,
        }
    }

    /// Loads or generates the configured dataset. The config's tariff wins
    /// over any tariff stored with the data.
    pub fn load_dataset(&self) -> Result<CommunityDataset> {
        let dir = |path: &Option<PathBuf>| -> Result<PathBuf> {
            match path {
                Some(p) => Ok(p.clone()),
                None => std::env::var_os(DATASET_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("dataset.path is not set and {DATASET_ENV} is unset"))),
            }
        };
        let mut ds = match &self.dataset {
            DatasetConfig::Citylearn { path, mapping } => load_citylearn(&dir(path)?, mapping, self.tariff)?,
            DatasetConfig::Canonical { path } => read_canonical(&dir(path)?)?,
            DatasetConfig::Synthetic {
                n_buildings,
                steps,
                seed,
                profile,
                battery,
                start_month,
            } => {
                let spec = SyntheticSpec {
                    profile: profile.clone(),
                    battery: *battery,
                    tariff: self.tariff,
                    start_month: *start_month,
                };
                generate_synthetic(seed.unwrap_or(self.seed), *n_buildings, *steps, &spec)?
            }
        };
        ds.tariff = self.tariff;
        ds.validated()
    }
}
