//! Declarative run descriptions: a scenario file drives one world, an
//! experiment file drives the Monte-Carlo grids. Both are TOML with
//! unknown keys rejected, so a typo fails fast instead of silently
//! changing a run.

use serde::Deserialize;
use thiserror::Error;

use crate::adversary::AdversaryKind;
use crate::crypto::Backend;
use crate::experiments::{
    BandwidthGrid, LatencyGrid, LossGrid, ReliabilityGrid, ShutdownGrid, WindowGrid,
};
use crate::net::{ge_is_bursty, LossModel};
use crate::types::{ProcessId, Round, SystemParams, Value};
use crate::world::{
    AdversaryConfig, BroadcastScript, ForceDeadScript, JoinScript, LeaveScript, WorldConfig,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

// ---------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: ParamsSection,
    #[serde(default)]
    pub net: NetSection,
    pub sim: SimSection,
    #[serde(default)]
    pub crypto: CryptoSection,
    #[serde(default)]
    pub adversary: Option<AdversarySection>,
    #[serde(default)]
    pub membership: MembershipSection,
    #[serde(default, rename = "broadcast")]
    pub broadcasts: Vec<BroadcastSection>,
    #[serde(default, rename = "join")]
    pub joins: Vec<JoinSection>,
    #[serde(default, rename = "leave")]
    pub leaves: Vec<LeaveSection>,
    #[serde(default, rename = "force_dead")]
    pub force_dead: Vec<ForceDeadSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub n: usize,
    #[serde(default)]
    pub rep: usize,
    pub window: u64,
    /// Anticipated omission degree; defaults to the largest k with
    /// R >= 2k + 2.
    #[serde(default)]
    pub omission_degree: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub p_loss: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// Require the positive-correlation condition (1 - beta) > alpha.
    #[serde(default = "default_true")]
    pub bursty: bool,
    #[serde(default)]
    pub start_bad: bool,
}

fn default_model() -> String {
    "bernoulli".into()
}

fn default_true() -> bool {
    true
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            model: default_model(),
            p_loss: 0.0,
            alpha: 0.0,
            beta: 0.0,
            bursty: true,
            start_bad: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub seed: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CryptoSection {
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub kind: String,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub targets: Option<Vec<u64>>,
    /// Peers that hear the first value from an equivocating sender.
    #[serde(default)]
    pub split: Vec<u64>,
    #[serde(default)]
    pub suppress_forwarding: bool,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MembershipSection {
    /// Piggyback last-seen ledgers and run crash detection.
    #[serde(default)]
    pub ledger: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadcastSection {
    pub sender: u64,
    pub round: u64,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub value_hex: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinSection {
    pub id: u64,
    pub round: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaveSection {
    pub id: u64,
    pub round: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceDeadSection {
    pub id: u64,
    pub round: u64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Validate and lower to a world configuration.
    pub fn to_world_config(&self) -> Result<WorldConfig, ConfigError> {
        let k = self
            .params
            .omission_degree
            .unwrap_or_else(|| self.params.window.saturating_sub(2) / 2);
        let params = SystemParams::new(self.params.n, self.params.rep, self.params.window, k)
            .map_err(|e| invalid(e.to_string()))?;

        let loss = parse_loss(&self.net)?;
        let backend = match self.crypto.backend.as_deref() {
            None => Backend::Sim,
            Some(name) => Backend::parse(name)
                .ok_or_else(|| invalid(format!("unknown crypto.backend {name:?}")))?,
        };

        let mut cfg = WorldConfig::new(params, loss, self.sim.seed, self.sim.rounds);
        cfg.backend = backend;
        cfg.ledger_piggyback = self.membership.ledger;

        if let Some(adv) = &self.adversary {
            let kind = match adv.kind.as_str() {
                "silent" => AdversaryKind::Silent,
                "equivocate" => AdversaryKind::Equivocate {
                    split_a: adv.split.iter().map(|&i| ProcessId(i)).collect(),
                    suppress_forwarding: adv.suppress_forwarding,
                },
                "withhold" | "withhold_signatures" => AdversaryKind::WithholdSignatures,
                "random_noise" | "noise" => AdversaryKind::RandomNoise,
                other => return Err(invalid(format!("unknown adversary.kind {other:?}"))),
            };
            let targets: Vec<ProcessId> = match (&adv.targets, adv.count) {
                (Some(ids), _) => ids.iter().map(|&i| ProcessId(i)).collect(),
                (None, Some(count)) => (0..count as u64).map(ProcessId).collect(),
                (None, None) => (0..params.f() as u64).map(ProcessId).collect(),
            };
            if targets.len() > params.f() {
                return Err(invalid(format!(
                    "adversary.count {} exceeds f = {}",
                    targets.len(),
                    params.f()
                )));
            }
            if targets.iter().any(|t| t.0 >= params.n() as u64) {
                return Err(invalid("adversary.targets outside the process range"));
            }
            cfg.adversary = Some(AdversaryConfig { kind, targets });
        }

        for b in &self.broadcasts {
            let value = match (&b.value, &b.value_hex) {
                (Some(_), Some(_)) => {
                    return Err(invalid(
                        "broadcast entries take value or value_hex, not both",
                    ))
                }
                (Some(text), None) => Value::new(text.as_bytes().to_vec()),
                (None, Some(hexstr)) => Value::new(
                    hex::decode(hexstr).map_err(|e| invalid(format!("bad value_hex: {e}")))?,
                ),
                (None, None) => Value::new(Vec::new()),
            };
            cfg.broadcasts.push(BroadcastScript {
                sender: ProcessId(b.sender),
                round: Round(b.round),
                value,
            });
        }
        for j in &self.joins {
            if j.id < params.n() as u64 {
                return Err(invalid(
                    "join ids must lie beyond the initial process range",
                ));
            }
            cfg.joins.push(JoinScript {
                id: ProcessId(j.id),
                round: Round(j.round),
            });
        }
        for l in &self.leaves {
            cfg.leaves.push(LeaveScript {
                id: ProcessId(l.id),
                round: Round(l.round),
            });
        }
        for f in &self.force_dead {
            cfg.force_dead.push(ForceDeadScript {
                id: ProcessId(f.id),
                round: Round(f.round),
            });
        }
        Ok(cfg)
    }
}

fn parse_loss(net: &NetSection) -> Result<LossModel, ConfigError> {
    match net.model.as_str() {
        "bernoulli" => {
            if !(0.0..=1.0).contains(&net.p_loss) {
                return Err(invalid("net.p_loss must lie in [0, 1]"));
            }
            Ok(LossModel::Bernoulli { p_loss: net.p_loss })
        }
        "gilbert-elliot" | "gilbert-elliott" => {
            if !(0.0 < net.alpha && net.alpha < 1.0) || !(0.0 < net.beta && net.beta < 1.0) {
                return Err(invalid("net.alpha and net.beta must lie in (0, 1)"));
            }
            if net.bursty && !ge_is_bursty(net.alpha, net.beta) {
                return Err(invalid(format!(
                    "bursty gilbert-elliot requires (1 - beta) > alpha, got alpha = {}, beta = {}",
                    net.alpha, net.beta
                )));
            }
            Ok(LossModel::GilbertElliot {
                alpha: net.alpha,
                beta: net.beta,
                start_bad: net.start_bad,
            })
        }
        other => Err(invalid(format!("unknown net.model {other:?}"))),
    }
}

// ---------------------------------------------------------------------
// Experiment files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub reliability: Option<ReliabilitySection>,
    #[serde(default)]
    pub shutdown: Option<ShutdownSection>,
    #[serde(default)]
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub latency: Option<LatencySection>,
    #[serde(default)]
    pub bandwidth: Option<BandwidthSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default)]
    pub p_loss: Vec<f64>,
    /// Gilbert-Elliot cells as (alpha, beta) pairs.
    #[serde(default)]
    pub ge: Vec<[f64; 2]>,
    #[serde(default = "default_true")]
    pub bursty: bool,
}

impl LossSection {
    fn cells(&self) -> Result<Vec<LossGrid>, ConfigError> {
        let mut out = Vec::new();
        for &p in &self.p_loss {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("p_loss values must lie in [0, 1]"));
            }
            out.push(LossGrid::Bernoulli { p_loss: p });
        }
        for &[alpha, beta] in &self.ge {
            if !(0.0 < alpha && alpha < 1.0) || !(0.0 < beta && beta < 1.0) {
                return Err(invalid("ge alpha/beta must lie in (0, 1)"));
            }
            if self.bursty && !ge_is_bursty(alpha, beta) {
                return Err(invalid(format!(
                    "bursty gilbert-elliot requires (1 - beta) > alpha, got alpha = {alpha}, beta = {beta}"
                )));
            }
            out.push(LossGrid::GilbertElliot { alpha, beta });
        }
        if out.is_empty() {
            return Err(invalid("a loss grid needs at least one p_loss or ge cell"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilitySection {
    pub correct: Vec<usize>,
    #[serde(flatten)]
    pub loss: LossSection,
    pub windows: Vec<u64>,
    pub reps: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShutdownSection {
    pub p_crash: Vec<f64>,
    pub f: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub nodes: Vec<usize>,
    #[serde(flatten)]
    pub loss: LossSection,
    pub reps: u64,
    #[serde(default = "default_max_window")]
    pub max_window: u64,
}

fn default_max_window() -> u64 {
    128
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySection {
    pub nodes: Vec<usize>,
    #[serde(flatten)]
    pub loss: LossSection,
    pub window_reps: u64,
    #[serde(default = "default_max_window")]
    pub max_window: u64,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default = "default_payload")]
    pub payload_bytes: usize,
}

fn default_payload() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthSection {
    pub nodes: Vec<usize>,
    #[serde(flatten)]
    pub loss: LossSection,
    pub payload_bits: Vec<u64>,
    pub window: u64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn reliability_grid(
        &self,
        reps_override: Option<u64>,
    ) -> Result<Option<ReliabilityGrid>, ConfigError> {
        let Some(s) = &self.reliability else {
            return Ok(None);
        };
        Ok(Some(ReliabilityGrid {
            correct: s.correct.clone(),
            loss: s.loss.cells()?,
            windows: s.windows.clone(),
            reps: reps_override.unwrap_or(s.reps),
            seed: self.seed,
        }))
    }

    pub fn shutdown_grid(&self) -> Option<ShutdownGrid> {
        self.shutdown.as_ref().map(|s| ShutdownGrid {
            p_crash: s.p_crash.clone(),
            f: s.f.clone(),
        })
    }

    pub fn window_grid(
        &self,
        reps_override: Option<u64>,
    ) -> Result<Option<WindowGrid>, ConfigError> {
        let Some(s) = &self.window else {
            return Ok(None);
        };
        Ok(Some(WindowGrid {
            nodes: s.nodes.clone(),
            loss: s.loss.cells()?,
            reps: reps_override.unwrap_or(s.reps),
            seed: self.seed,
            max_window: s.max_window,
        }))
    }

    pub fn latency_grid(
        &self,
        reps_override: Option<u64>,
    ) -> Result<Option<LatencyGrid>, ConfigError> {
        let Some(s) = &self.latency else {
            return Ok(None);
        };
        let backend = match s.backend.as_deref() {
            None => Backend::EcdsaP256,
            Some(name) => Backend::parse(name)
                .ok_or_else(|| invalid(format!("unknown latency.backend {name:?}")))?,
        };
        Ok(Some(LatencyGrid {
            nodes: s.nodes.clone(),
            loss: s.loss.cells()?,
            window_reps: reps_override.unwrap_or(s.window_reps),
            max_window: s.max_window,
            seed: self.seed,
            backend,
            payload_bytes: s.payload_bytes,
        }))
    }

    pub fn bandwidth_grid(&self) -> Result<Option<BandwidthGrid>, ConfigError> {
        let Some(s) = &self.bandwidth else {
            return Ok(None);
        };
        Ok(Some(BandwidthGrid {
            nodes: s.nodes.clone(),
            loss: s.loss.cells()?,
            payload_bits: s.payload_bits.clone(),
            window: s.window,
            seed: self.seed,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = r#"
        [params]
        n = 4
        window = 5

        [sim]
        seed = 7
        rounds = 30

        [[broadcast]]
        sender = 3
        round = 2
        value = "hello"
    "#;

    #[test]
    fn scenario_parses_and_lowers() {
        let cfg = ScenarioConfig::parse(SCENARIO).unwrap();
        let world = cfg.to_world_config().unwrap();
        assert_eq!(world.params.n(), 4);
        assert_eq!(world.params.f(), 1);
        assert_eq!(world.horizon, 30);
        assert_eq!(world.broadcasts.len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SCENARIO.replace("[sim]", "[sim]\nspeed = 3");
        assert!(ScenarioConfig::parse(&bad).is_err());
    }

    #[test]
    fn non_bursty_ge_is_rejected_when_bursty_required() {
        let text = r#"
            [params]
            n = 4
            window = 5

            [net]
            model = "gilbert-elliot"
            alpha = 0.7
            beta = 0.5

            [sim]
            seed = 1
            rounds = 10
        "#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        let err = cfg.to_world_config().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));

        let relaxed = text.replace("beta = 0.5", "beta = 0.5\nbursty = false");
        let cfg = ScenarioConfig::parse(&relaxed).unwrap();
        assert!(cfg.to_world_config().is_ok());
    }

    #[test]
    fn adversary_count_cannot_exceed_f() {
        let text = r#"
            [params]
            n = 4
            window = 5

            [sim]
            seed = 1
            rounds = 10

            [adversary]
            kind = "silent"
            count = 2
        "#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert!(cfg.to_world_config().is_err());
    }

    #[test]
    fn experiment_grid_round_trips() {
        let text = r#"
            seed = 42

            [reliability]
            correct = [5, 10]
            p_loss = [0.3, 0.6]
            windows = [5, 10]
            reps = 100

            [shutdown]
            p_crash = [0.0001, 0.5]
            f = [1, 2]
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let grid = cfg.reliability_grid(None).unwrap().unwrap();
        assert_eq!(grid.correct, vec![5, 10]);
        assert_eq!(grid.loss.len(), 2);
        assert!(cfg.shutdown_grid().is_some());
        assert!(cfg.window_grid(None).unwrap().is_none());
    }
}
