//! Run configuration files: TOML with a `[run]` section for the experiment
//! and one section per core parameter group.
//!
//! ```toml
//! [run]
//! architecture = "ALL"   # or CCD, CDR, DCR, DDR, DDD
//! seed = 7
//! duration_min = 60      # omit to run until stable
//!
//! [topology]
//! sources = 1000
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use taxonet_core::simnet::{DelayModel, SimConfig, Stop, TopologySpec, WorkloadSpec};
use taxonet_core::sources::Architecture;

/// One architecture or all five on the same network and workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchChoice {
    One(Architecture),
    All,
}

impl ArchChoice {
    pub fn architectures(self) -> Vec<Architecture> {
        match self {
            ArchChoice::One(a) => vec![a],
            ArchChoice::All => Architecture::ALL.to_vec(),
        }
    }
}

impl FromStr for ArchChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ALL" {
            return Ok(ArchChoice::All);
        }
        s.parse::<Architecture>()
            .map(ArchChoice::One)
            .map_err(|_| format!("unknown architecture {s:?}; expected CCD, CDR, DCR, DDR, DDD or ALL"))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub architecture: String,
    pub seed: u64,
    /// Fixed run length; absent means until stable.
    pub duration_min: Option<f64>,
    /// Cap of an until-stable run.
    pub max_minutes: f64,
    pub output: PathBuf,
    pub sweep_period_s: f64,
    pub ping_rate: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        let max_minutes = match sim.stop {
            Stop::UntilStable { max_minutes } => max_minutes,
            Stop::Duration { minutes } => minutes,
        };
        RunSection {
            architecture: "ALL".into(),
            seed: sim.seed,
            duration_min: None,
            max_minutes,
            output: PathBuf::from("taxonet-out"),
            sweep_period_s: sim.sweep_period_s,
            ping_rate: sim.ping_rate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    pub delay: DelayModel,
}

/// A configuration problem, with the offending line when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.arch().map_err(|message| ConfigError { line: None, message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        RunConfig::parse(&text)
    }

    pub fn arch(&self) -> Result<ArchChoice, String> {
        self.run.architecture.parse()
    }

    pub fn sim_config(&self) -> SimConfig {
        let stop = match self.run.duration_min {
            Some(minutes) => Stop::Duration { minutes },
            None => Stop::UntilStable { max_minutes: self.run.max_minutes },
        };
        SimConfig {
            seed: self.run.seed,
            topology: self.topology.clone(),
            workload: self.workload.clone(),
            delay: self.delay.clone(),
            stop,
            sweep_period_s: self.run.sweep_period_s,
            ping_rate: self.run.ping_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.arch(), Ok(ArchChoice::All));
        let sim = cfg.sim_config();
        assert_eq!(sim.topology, TopologySpec::default());
        assert_eq!(sim.stop, Stop::default());
    }

    #[test]
    fn sections_override_defaults() {
        let text = "[run]\narchitecture = \"CDR\"\nseed = 9\nduration_min = 30\n\n[topology]\nsources = 40\nservers = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.arch(), Ok(ArchChoice::One(Architecture::Cdr)));
        let sim = cfg.sim_config();
        assert_eq!((sim.seed, sim.topology.sources, sim.topology.servers), (9, 40, 2));
        assert_eq!(sim.stop, Stop::Duration { minutes: 30.0 });
        assert_eq!(sim.topology.terms_max, TopologySpec::default().terms_max);
    }

    #[test]
    fn errors_point_at_the_line() {
        let e = RunConfig::parse("[run]\nseed = 1\n\n[topology]\nsourcez = 4\n").unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
        let e = RunConfig::parse("[run]\nseed = \"x\"\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");
        let e = RunConfig::parse("[run\n").unwrap_err();
        assert_eq!(e.line, Some(1), "{e}");
        let e = RunConfig::parse("[run]\narchitecture = \"XYZ\"\n").unwrap_err();
        assert!(e.message.contains("XYZ"));
    }
}
