use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::selection::{CohortMethod, SweepConfig};
use crate::solver::SolverOptions;
use crate::types::TagDerivationConfig;

/// Cross-validation settings as written in a manifest; solver options come
/// from the manifest's top-level `solver` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub k_values: Vec<usize>,
    pub folds: usize,
    pub rng_seed: u64,
    pub selection_tolerance: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let base = SweepConfig::default();
        Self {
            k_values: base.k_values,
            folds: base.folds,
            rng_seed: base.rng_seed,
            selection_tolerance: base.selection_tolerance,
        }
    }
}

/// One reproducible run. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub importances: PathBuf,
    pub descriptors: PathBuf,
    pub descriptor_rules: TagDerivationConfig,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub compare_baseline: bool,
    #[serde(default = "default_min_leaf")]
    pub baseline_min_leaf: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_min_leaf() -> usize {
    1
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut manifest: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        manifest.importances = base.join(&manifest.importances);
        manifest.descriptors = base.join(&manifest.descriptors);
        manifest.out = manifest.out.map(|o| base.join(o));
        Ok(manifest)
    }

    pub fn sweep_config(&self, method: CohortMethod) -> SweepConfig {
        SweepConfig {
            k_values: self.sweep.k_values.clone(),
            folds: self.sweep.folds,
            rng_seed: self.sweep.rng_seed,
            solver: self.solver.clone(),
            selection_tolerance: self.sweep.selection_tolerance,
            method,
        }
    }
}
