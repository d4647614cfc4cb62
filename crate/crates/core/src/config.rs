//! Experiment configuration file; command-line flags override it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{SelectionRules, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::select::GridSearchConfig;
use crate::svm::{DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub reviews: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub synth_dir: Option<PathBuf>,
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.reviews,
            &mut self.articles,
            &mut self.corpus,
            &mut self.model,
            &mut self.trace,
            &mut self.predictions,
            &mut self.gold,
            &mut self.report,
            &mut self.synth_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub beta: f64,
    pub min_match_floor: f64,
    pub element_kind: String,
    /// Seeds every random choice; overrides `grid.seed` and `synth.seed`.
    pub seed: u64,
    pub binary_features: bool,
    /// Class weighting scheme name.
    pub weighting: String,
    /// Fixed C for `train` without a grid search.
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub grid: GridSearchConfig,
    pub synth: SynthSpec,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            min_match_floor: 0.0,
            element_kind: "inclusion_criteria".into(),
            seed: 0,
            binary_features: false,
            weighting: "balanced".into(),
            c: 1.0,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            grid: GridSearchConfig::default(),
            synth: SynthSpec::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.resolve_against(base);
        Ok(config)
    }

    pub fn rules(&self) -> SelectionRules {
        SelectionRules {
            alpha: self.alpha,
            beta: self.beta,
            min_match_floor: self.min_match_floor,
        }
    }

    /// Grid settings with the shared seed applied.
    pub fn grid(&self) -> GridSearchConfig {
        GridSearchConfig {
            seed: self.seed,
            ..self.grid.clone()
        }
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            element_kind: self.element_kind.clone(),
            ..self.synth.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rules().validate()?;
        self.grid().validate()?;
        crate::svm::weighting_registry().get(&self.weighting)?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_selection_constants() {
        let c = PipelineConfig::default();
        assert_eq!((c.alpha, c.beta), (0.2, 0.005));
        assert_eq!((c.grid.c_high, c.grid.k, c.grid.refinement_decimals), (1000.0, 10, 4));
        assert!(!c.binary_features);
        c.validate().unwrap();
    }

    #[test]
    fn file_values_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 9\nalpha = 0.1\n[grid]\nk = 5\nmetric = \"accuracy\"\n\
             [paths]\nreviews = \"data/reviews.json\"\nmodel = \"/abs/model.json\"\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.beta, 0.005);
        assert_eq!(c.grid().seed, 9);
        assert_eq!(c.grid.k, 5);
        assert_eq!(c.paths.reviews.unwrap(), dir.path().join("data/reviews.json"));
        assert_eq!(c.paths.model.unwrap(), PathBuf::from("/abs/model.json"));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "alpah = 0.1\n").unwrap();
        let err = PipelineConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert_eq!(err.exit_code(), 1);
    }
}
