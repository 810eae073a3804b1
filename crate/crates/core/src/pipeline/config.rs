use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::HeatOptions;
use crate::ricci::SolverConfig;
use crate::spd::MatchMode;

/// Kernel bandwidth: a positive number or `"median"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSetting {
    Value(f64),
    Named(MedianTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianTag {
    Median,
}

impl SigmaSetting {
    pub const MEDIAN: SigmaSetting = SigmaSetting::Named(MedianTag::Median);
}

impl std::str::FromStr for SigmaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(SigmaSetting::MEDIAN);
        }
        s.parse::<f64>()
            .map(SigmaSetting::Value)
            .map_err(|_| Error::InvalidParameter(format!("sigma must be a number or \"median\", got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Curvature threshold for vertex selection.
    pub tau: f64,
    /// Number of sampled stages per subject.
    pub steps: usize,
    /// Heat kernel times in units of `1 / lambda_1`.
    pub hks_times: Vec<f64>,
    pub lambda_rel: f64,
    pub lumped_mass: bool,
    pub eigenpairs: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            tau: 0.05,
            steps: 20,
            hks_times: vec![1.0],
            lambda_rel: 1e-6,
            lumped_mass: false,
            eigenpairs: None,
        }
    }
}

impl FeatureConfig {
    pub fn heat_options(&self) -> HeatOptions {
        HeatOptions {
            times: self.hks_times.clone(),
            lumped_mass: self.lumped_mass,
            eigenpairs: self.eigenpairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub sigma: SigmaSetting,
    pub match_mode: MatchMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            sigma: SigmaSetting::MEDIAN,
            match_mode: MatchMode::BestMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub k: Vec<usize>,
    /// Manifest class treated as positive; the second declared class if unset.
    pub positive_class: Option<String>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            k: vec![3],
            positive_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k: Vec<usize>,
    pub steps: Vec<usize>,
    /// Curvature thresholds; empty means `features.tau` only.
    pub tau: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k: vec![1, 3, 5],
            steps: (1..=10).map(|i| 10 * i).collect(),
            tau: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Signature cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            cache_dir: Some(PathBuf::from(".ricci-cov-cache")),
            output_dir: PathBuf::from("ricci-cov-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads over subjects; 0 uses every core.
    pub jobs: usize,
    pub solver: SolverConfig,
    pub features: FeatureConfig,
    pub kernel: KernelConfig,
    pub classify: ClassifyConfig,
    pub sweep: SweepConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.solver.validate()?;
        let f = &self.features;
        if !(f.tau >= 0.0) {
            return bad(format!("features.tau must be >= 0, got {}", f.tau));
        }
        if f.steps == 0 {
            return bad("features.steps must be >= 1".into());
        }
        if f.hks_times.is_empty() || f.hks_times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return bad("features.hks_times must be a non-empty list of positive numbers".into());
        }
        if !(f.lambda_rel >= 0.0) {
            return bad(format!("features.lambda_rel must be >= 0, got {}", f.lambda_rel));
        }
        if f.eigenpairs == Some(0) {
            return bad("features.eigenpairs must be >= 1".into());
        }
        if let SigmaSetting::Value(s) = self.kernel.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return bad(format!("kernel.sigma must be > 0 or \"median\", got {s}"));
            }
        }
        for (name, ks) in [("classify.k", &self.classify.k), ("sweep.k", &self.sweep.k)] {
            if ks.is_empty() {
                return bad(format!("{name} must not be empty"));
            }
            if let Some(k) = ks.iter().find(|&&k| k % 2 == 0) {
                return bad(format!("{name} contains even K = {k}; K must be odd"));
            }
        }
        if self.sweep.steps.is_empty() || self.sweep.steps.contains(&0) {
            return bad("sweep.steps must be a non-empty list of positive counts".into());
        }
        if self.sweep.tau.iter().any(|t| !(*t >= 0.0)) {
            return bad("sweep.tau values must be >= 0".into());
        }
        Ok(())
    }

    pub fn sweep_taus(&self) -> Vec<f64> {
        if self.sweep.tau.is_empty() {
            vec![self.features.tau]
        } else {
            self.sweep.tau.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.features.steps, 20);
        assert_eq!(cfg.kernel.sigma, SigmaSetting::MEDIAN);

        let cfg = PipelineConfig::from_toml(
            "seed = 4\n[kernel]\nsigma = 0.5\nmatch_mode = \"worst-match\"\n[features]\ntau = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.kernel.sigma, SigmaSetting::Value(0.5));
        assert_eq!(cfg.kernel.match_mode, MatchMode::WorstMatch);
        assert_eq!(cfg.features.tau, 0.2);
        assert_eq!(cfg.features.steps, 20);

        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "[kernel]\nsigma = -1.0",
            "[kernel]\nsigma = \"mean\"",
            "[classify]\nk = [2]",
            "[features]\nsteps = 0",
            "[features]\nunknown = 1",
            "[solver]\nepsilon = 0.0",
            "[sweep]\nsteps = []",
        ] {
            assert!(matches!(PipelineConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn sigma_from_str() {
        assert_eq!("median".parse::<SigmaSetting>().unwrap(), SigmaSetting::MEDIAN);
        assert_eq!("0.25".parse::<SigmaSetting>().unwrap(), SigmaSetting::Value(0.25));
        assert!("x".parse::<SigmaSetting>().is_err());
    }
}
