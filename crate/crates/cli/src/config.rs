//! Experiment configuration: a strict TOML schema (unknown keys are
//! rejected) validated against the core types on load.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use vaoi_core::cmdp::MdpConfig;
use vaoi_core::cosrp::Scheme;
use vaoi_core::model::{ChannelModel, StreamConfig};
use vaoi_core::optimizer::SolverConfig;
use vaoi_core::sim::SimConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `noma` or `tdma`; the CLI `--scheme` flag overrides it.
    pub scheme: Option<String>,
    /// Average power budget.
    pub pbar: Option<f64>,
    pub streams: Vec<StreamSection>,
    pub channel: ChannelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub mdp: MdpSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub lambda: f64,
    pub r0: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Strictly increasing positive gains.
    pub levels: Vec<f64>,
    /// Shared probability vector over the levels…
    pub pmf: Option<Vec<f64>>,
    /// …or one per user (exactly one of the two must be present).
    pub pmfs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps_psi: Option<f64>,
    pub eps_power: Option<f64>,
    pub eps_inner: Option<f64>,
    pub max_newton: Option<usize>,
    pub max_bisect: Option<usize>,
    pub theta_hi_init: Option<f64>,
    pub max_inner: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub delta_max: Option<u32>,
    pub gamma: Option<f64>,
    pub vi_tol: Option<f64>,
    pub state_cap: Option<usize>,
    pub eps_power: Option<f64>,
    pub theta_hi_init: Option<f64>,
    pub max_bisect: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: Option<u64>,
    /// Defaults to 1% of the horizon.
    pub warmup: Option<u64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    /// Rows of per-slot trace to export (0 disables, capped at 10_000).
    pub trace: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.streams()?;
        self.channel_model()?;
        if let Some(s) = &self.scheme {
            let _: Scheme = s.parse()?;
        }
        if let Some(p) = self.pbar {
            if !(p >= 0.0) {
                bail!("pbar must be nonnegative, got {p}");
            }
        }
        let _ = self.solver_config()?;
        let _ = self.mdp_config();
        let _ = self.sim_config(None)?;
        Ok(())
    }

    pub fn streams(&self) -> Result<Vec<StreamConfig>> {
        if self.streams.is_empty() {
            bail!("at least one [[streams]] section is required");
        }
        self.streams
            .iter()
            .map(|s| Ok(StreamConfig::new(s.lambda, s.r0, s.weight)?))
            .collect()
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        let n = self.streams.len();
        let model = match (&self.channel.pmf, &self.channel.pmfs) {
            (Some(pmf), None) => ChannelModel::shared(self.channel.levels.clone(), pmf.clone(), n)?,
            (None, Some(pmfs)) => {
                if pmfs.len() != n {
                    bail!("channel.pmfs has {} rows but there are {} streams", pmfs.len(), n);
                }
                ChannelModel::new(self.channel.levels.clone(), pmfs.clone())?
            }
            (Some(_), Some(_)) => bail!("give either channel.pmf or channel.pmfs, not both"),
            (None, None) => bail!("channel needs a pmf (shared) or pmfs (per user)"),
        };
        Ok(model)
    }

    pub fn scheme(&self, flag: Option<Scheme>) -> Result<Scheme> {
        if let Some(s) = flag {
            return Ok(s);
        }
        match &self.scheme {
            Some(s) => Ok(s.parse()?),
            None => Ok(Scheme::Noma),
        }
    }

    pub fn pbar(&self) -> Result<f64> {
        self.pbar
            .filter(|p| *p > 0.0)
            .context("a positive pbar is required for this command")
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        Ok(SolverConfig {
            eps_psi: self.solver.eps_psi.unwrap_or(d.eps_psi),
            eps_power: self.solver.eps_power.or(d.eps_power),
            eps_inner: self.solver.eps_inner.unwrap_or(d.eps_inner),
            max_newton: self.solver.max_newton.unwrap_or(d.max_newton),
            max_bisect: self.solver.max_bisect.unwrap_or(d.max_bisect),
            theta_hi_init: self.solver.theta_hi_init.unwrap_or(d.theta_hi_init),
            max_inner: self.solver.max_inner.unwrap_or(d.max_inner),
        })
    }

    pub fn mdp_config(&self) -> MdpConfig {
        let d = MdpConfig::default();
        MdpConfig {
            delta_max: self.mdp.delta_max.unwrap_or(d.delta_max),
            gamma: self.mdp.gamma.unwrap_or(d.gamma),
            vi_tol: self.mdp.vi_tol.unwrap_or(d.vi_tol),
            state_cap: self.mdp.state_cap.unwrap_or(d.state_cap),
            eps_power: self.mdp.eps_power.or(d.eps_power),
            theta_hi_init: self.mdp.theta_hi_init.unwrap_or(d.theta_hi_init),
            max_bisect: self.mdp.max_bisect.unwrap_or(d.max_bisect),
            ..d
        }
    }

    pub fn sim_config(&self, seed_flag: Option<u64>) -> Result<SimConfig> {
        let horizon = self.sim.horizon.unwrap_or(1_000_000);
        let cfg = SimConfig {
            horizon,
            warmup: self.sim.warmup.unwrap_or(horizon / 100),
            seed: seed_flag.or(self.sim.seed).unwrap_or(1),
            replications: self.sim.replications.unwrap_or(4),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn trace_rows(&self) -> usize {
        self.sim.trace.unwrap_or(0).min(10_000)
    }

    /// Single-line rendering of the resolved configuration for CSV
    /// comment headers; reruns with identical configs stay byte-identical.
    pub fn comment_line(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        text.trim().replace('\n', "; ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
scheme = "noma"
pbar = 15.0

[[streams]]
lambda = 0.5
r0 = 2.0
weight = 0.5

[[streams]]
lambda = 0.5
r0 = 2.0
weight = 0.5

[channel]
levels = [0.1, 1.0]
pmf = [0.2, 0.8]

[solver]
eps_psi = 1e-8

[sim]
horizon = 100000
seed = 7
replications = 2
"#;

    #[test]
    fn parses_and_validates() {
        let cfg: ExperimentConfig = toml::from_str(GOOD).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.streams().unwrap().len(), 2);
        assert_eq!(cfg.channel_model().unwrap().n_users(), 2);
        assert_eq!(cfg.scheme(None).unwrap(), Scheme::Noma);
        assert_eq!(cfg.pbar().unwrap(), 15.0);
        let sim = cfg.sim_config(None).unwrap();
        assert_eq!(sim.warmup, 1000);
        assert_eq!(sim.seed, 7);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = GOOD.replace("eps_psi = 1e-8", "eps_psy = 1e-8");
        let err = toml::from_str::<ExperimentConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("eps_psy"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let bad = GOOD.replace("lambda = 0.5\nr0 = 2.0\nweight = 0.5\n\n[channel]", "lambda = 1.5\nr0 = 2.0\nweight = 0.5\n\n[channel]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());

        let bad = GOOD.replace("pmf = [0.2, 0.8]", "pmf = [0.3, 0.8]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comment_line_is_single_line() {
        let cfg: ExperimentConfig = toml::from_str(GOOD).unwrap();
        let line = cfg.comment_line();
        assert!(!line.contains('\n'));
        assert!(line.contains("pbar = 15.0"));
    }
}
