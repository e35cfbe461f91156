//! Experiment configuration: one JSON document, paths relative to its own
//! directory. Command-line flags override the document.

use std::path::{Path, PathBuf};

use dalab::equilibrium::MarketSpec;
use dalab::markets::{PdaTraining, SingleShotTraining};
use dalab::strategies::StrategyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: u64,
    pub step: f64,
    /// Deviations gaining more than this many standard errors fail.
    pub threshold: f64,
    pub buyer_max: f64,
    pub seller_max: f64,
    /// Certify this profile (`a_b1, a_b2, a_s1, a_s2`) instead of the solved one.
    pub profile: Option<[f64; 4]>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { samples: 100_000, step: 0.01, threshold: 3.0, buyer_max: 1.0, seller_max: 2.0, profile: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub states: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { states: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    /// Paired-seed games per two-player pairing.
    pub two_player_games: u32,
    pub five_player_games: u32,
    /// Opponents of the learned agent; `None` uses ZI, ZIP, truthful and
    /// the case-1 equilibrium scale factors.
    pub opponents: Option<Vec<StrategyConfig>>,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig { two_player_games: 10, five_player_games: 10, opponents: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: Option<MarketSpec>,
    /// `1`..`4`, or `all` for solve and verify.
    pub case: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub verify: VerifyConfig,
    pub singleshot: SingleShotTraining,
    pub evaluate: EvaluateConfig,
    pub pda: PdaTraining,
    pub tournament: TournamentConfig,
}

impl ExperimentConfig {
    /// Reads a config and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out = cfg.out.map(|p| base.join(p));
        cfg.checkpoint = cfg.checkpoint.map(|p| base.join(p));
        cfg.resolve_strategy_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_strategy_paths(&mut self, base: &Path) {
        let fix = |s: &mut StrategyConfig| {
            if let StrategyConfig::Ddpg { checkpoint: Some(p) } = s {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        };
        if let Some(opps) = &mut self.tournament.opponents {
            opps.iter_mut().for_each(fix);
        }
        for g in &mut self.pda.market.supply {
            fix(&mut g.strategy);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(spec) = &self.spec {
            spec.validate()?;
        }
        if self.jobs == Some(0) {
            return Err(CliError::config("jobs must be at least 1"));
        }
        if let Some(p) = &self.checkpoint {
            if !p.is_file() {
                return Err(CliError::io(p, "checkpoint not found"));
            }
        }
        let v = &self.verify;
        if v.samples == 0 {
            return Err(CliError::config("verify.samples must be positive"));
        }
        if !(v.step > 0.0 && v.step.is_finite()) {
            return Err(CliError::config(format!("verify.step must be positive, got {}", v.step)));
        }
        if !(v.threshold >= 0.0) {
            return Err(CliError::config("verify.threshold must be non-negative"));
        }
        self.singleshot.ddpg.validate()?;
        self.pda.ddpg.validate()?;
        for g in &self.pda.market.supply {
            g.strategy.validate()?;
        }
        if let Some(opps) = &self.tournament.opponents {
            for o in opps {
                o.validate()?;
                if let StrategyConfig::Ddpg { checkpoint: Some(p) } = o {
                    if !Path::new(p).is_file() {
                        return Err(CliError::io(Path::new(p), "checkpoint not found"));
                    }
                }
            }
        }
        if self.evaluate.states == 0 || self.singleshot.eval_states == 0 {
            return Err(CliError::config("evaluation needs at least one state"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("agent.json"), "{}").unwrap();
        let cfg_path = dir.path().join("exp.json");
        std::fs::write(&cfg_path, r#"{"out": "results", "checkpoint": "agent.json", "seed": 4}"#).unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.out.unwrap(), dir.path().join("results"));
        assert_eq!(cfg.checkpoint.unwrap(), dir.path().join("agent.json"));
        assert_eq!(cfg.seed, Some(4));
    }

    #[test]
    fn bad_documents_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        for doc in [
            r#"{"unknown": 1}"#,
            r#"{"verify": {"samples": 0}}"#,
            r#"{"spec": {"l_b": 1, "h_b": 0, "l_s": 0, "h_s": 1}}"#,
            "not json",
        ] {
            std::fs::write(&p, doc).unwrap();
            assert_eq!(ExperimentConfig::load(&p).unwrap_err().exit_code(), 2, "{doc}");
        }
        std::fs::write(&p, r#"{"checkpoint": "missing.json"}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap_err().exit_code(), 4);
        assert_eq!(ExperimentConfig::load(&dir.path().join("none.json")).unwrap_err().exit_code(), 4);
    }
}
