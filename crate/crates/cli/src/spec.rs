//! Experiment specification: a TOML file with one section per module, plus
//! command-line overrides applied before validation.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use platoon_core::scenarios::{BaselinePolicy, LeaderElection, LeaderProfile, PlatoonPolicy, RingSpec, ScenarioKind, SingleScenario};
use platoon_core::topology::enumerate_mixes;
use platoon_core::{parse_config, Controller, ControllerSet, DynamicsParams, PlatoonConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dynamics: DynamicsParams,
    pub controllers: ControllerSet,
    pub single: SingleSection,
    pub ring: RingSpec,
    pub grid: RingGrid,
    pub matrix: MatrixSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleSection {
    /// Configuration run by `single`.
    pub config: String,
    /// Scenario run by `single`.
    pub scenario: ScenarioKind,
    /// Scenarios covered by `sweep-single`.
    pub scenarios: Vec<ScenarioKind>,
    /// Platoon sizes covered by `sweep-single`.
    #[serde(rename = "N")]
    pub sizes: Vec<usize>,
    /// Mixes are enumerated exhaustively up to this size and sampled above it.
    pub exhaustive_max: usize,
    /// Number of distinct mixes sampled for larger platoons.
    pub samples: usize,
    pub sample_seed: u64,
    pub duration: Option<f64>,
    pub warmup: Option<f64>,
    pub profile_start: Option<f64>,
    pub profile: LeaderProfile,
    pub vehicle_length: f64,
    pub gap_offset: f64,
    pub election: LeaderElection,
    pub record_every: usize,
}

impl Default for SingleSection {
    fn default() -> Self {
        Self {
            config: "-PLPP".into(),
            scenario: ScenarioKind::Sinusoidal,
            scenarios: ScenarioKind::ALL.to_vec(),
            sizes: vec![4],
            exhaustive_max: 8,
            samples: 1000,
            sample_seed: 1,
            duration: None,
            warmup: None,
            profile_start: None,
            profile: LeaderProfile::default(),
            vehicle_length: 4.0,
            gap_offset: 0.0,
            election: LeaderElection::Nearest,
            record_every: 1,
        }
    }
}

impl SingleSection {
    pub fn scenario_for(&self, kind: ScenarioKind, cfg: PlatoonConfig) -> SingleScenario {
        let mut s = SingleScenario::new(kind, cfg);
        if let Some(d) = self.duration {
            s.duration = d;
        }
        if let Some(w) = self.warmup {
            s.warmup = w;
        }
        if let Some(p) = self.profile_start {
            s.profile_start = p;
        }
        s.profile = self.profile;
        s.vehicle_length = self.vehicle_length;
        s.gap_offset = self.gap_offset;
        s.election = self.election;
        s.record_every = self.record_every;
        s
    }

    /// Follower mixes swept for platoon size `n`, in lexicographic order.
    pub fn mixes(&self, n: usize) -> anyhow::Result<Vec<PlatoonConfig>> {
        if n < 2 {
            bail!("platoon size must be >= 2, got {n}");
        }
        let total = 3f64.powi(n as i32 - 1);
        if n <= self.exhaustive_max || total <= self.samples as f64 {
            return Ok(enumerate_mixes(n));
        }
        Ok(sample_mixes(n, self.samples, self.sample_seed))
    }
}

/// `count` distinct uniformly drawn mixes of size `n`, sorted.
pub fn sample_mixes(n: usize, count: usize, seed: u64) -> Vec<PlatoonConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < count {
        let mut v = vec![Controller::Independent];
        v.extend((1..n).map(|_| Controller::CACC[rng.random_range(0..3)]));
        seen.insert(PlatoonConfig::new(v).expect("independent head with CACC followers"));
    }
    seen.into_iter().collect()
}

/// Factorial grid of the ring experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingGrid {
    #[serde(rename = "D_v")]
    pub densities: Vec<f64>,
    /// Homogeneous non-platoon traffic runs, one per baseline and density.
    pub baselines: Vec<BaselinePolicy>,
    pub policies: Vec<PlatoonPolicy>,
    #[serde(rename = "N")]
    pub sizes: Vec<usize>,
    #[serde(rename = "R")]
    pub penetrations: Vec<f64>,
    /// Vehicles outside platoons in the platoon runs.
    pub platoon_traffic: BaselinePolicy,
    /// Seeds per cell, counted up from the ring seed.
    pub repetitions: usize,
}

impl Default for RingGrid {
    fn default() -> Self {
        Self {
            densities: vec![10.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 140.0, 160.0, 180.0],
            baselines: BaselinePolicy::ALL.to_vec(),
            policies: PlatoonPolicy::ALL.to_vec(),
            sizes: vec![4, 8, 16],
            penetrations: vec![0.25, 0.5, 0.75],
            platoon_traffic: BaselinePolicy::Acc,
            repetitions: 10,
        }
    }
}

/// Traffic composition of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "traffic")]
pub enum Traffic {
    Baseline { baseline: BaselinePolicy },
    Platoons { policy: PlatoonPolicy, size: usize, penetration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingCell {
    pub density: f64,
    #[serde(flatten)]
    pub traffic: Traffic,
}

impl RingCell {
    /// File-name friendly identifier.
    pub fn key(&self) -> String {
        match self.traffic {
            Traffic::Baseline { baseline } => format!("D{:03}_{}", self.density, baseline),
            Traffic::Platoons { policy, size, penetration } => {
                format!("D{:03}_{}_N{}_R{:.2}", self.density, policy, size, penetration)
            }
        }
    }

    /// Label used in tables and plots, e.g. `ACC`, `L.5` or `RandomMix.25`.
    pub fn label(&self) -> String {
        match self.traffic {
            Traffic::Baseline { baseline } => baseline.to_string(),
            Traffic::Platoons { policy, penetration, .. } => {
                let r = format!("{penetration:.2}");
                format!("{policy}{}", r.trim_start_matches('0').trim_end_matches('0'))
            }
        }
    }

    pub fn ring_spec(&self, base: &RingSpec, platoon_traffic: BaselinePolicy, seed: u64) -> RingSpec {
        let mut s = RingSpec { density: self.density, seed, ..base.clone() };
        match self.traffic {
            Traffic::Baseline { baseline } => {
                s.baseline = baseline;
                s.penetration = 0.0;
            }
            Traffic::Platoons { policy, size, penetration } => {
                s.baseline = platoon_traffic;
                s.policy = policy;
                s.platoon_size = size;
                s.penetration = penetration;
            }
        }
        s
    }
}

impl fmt::Display for RingCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl RingGrid {
    pub fn cells(&self) -> Vec<RingCell> {
        let mut out = Vec::new();
        for &density in &self.densities {
            for &baseline in &self.baselines {
                out.push(RingCell { density, traffic: Traffic::Baseline { baseline } });
            }
            for &policy in &self.policies {
                for &size in &self.sizes {
                    for &penetration in &self.penetrations {
                        out.push(RingCell { density, traffic: Traffic::Platoons { policy, size, penetration } });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSection {
    pub configs: Vec<String>,
}

impl Default for MatrixSection {
    fn default() -> Self {
        Self { configs: vec!["-PPPP".into(), "-PGGP".into(), "GGGGG".into(), "GGPPPL".into()] }
    }
}

impl ExperimentSpec {
    /// Parse a spec file, apply `key.path=value` overrides, then validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>().with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let spec: ExperimentSpec = table.try_into().context("invalid experiment spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.dynamics.validate()?;
        self.controllers.validate()?;
        self.ring.validate()?;
        parse_config(&self.single.config)?;
        for c in &self.matrix.configs {
            parse_config(c)?;
        }
        let g = &self.grid;
        if g.repetitions == 0 {
            bail!("grid.repetitions must be >= 1");
        }
        if g.penetrations.iter().any(|r| !(0.0..=1.0).contains(r)) {
            bail!("grid.R values must lie in [0, 1]");
        }
        if g.sizes.iter().chain(&self.single.sizes).any(|&n| n < 2) {
            bail!("platoon sizes must be >= 2");
        }
        if self.single.record_every == 0 {
            bail!("single.record_every must be >= 1");
        }
        Ok(())
    }

    /// Hex SHA-256 of the resolved spec, embedded in every output.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes to TOML")
    }
}

/// Set `a.b.c = value` in a TOML table; the value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment.split_once('=').with_context(|| format!("override {assignment:?} is not key=value"))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override {key:?}: {p:?} is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let spec = ExperimentSpec::default();
        let back: ExperimentSpec = toml::from_str(&spec.to_toml()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
    }

    #[test]
    fn parameter_names_match_the_usual_notation() {
        let text = ExperimentSpec::default().to_toml();
        for key in ["H = 1.2", "lambda = 0.1", "C1 = 0.5", "omega_n = 0.2", "xi = 1.0", "H = 0.5", "kp = 0.2", "kd = 0.7"] {
            assert!(text.contains(key), "{key} missing");
        }
        for key in ["k = 0.7", "h = 0.71", "r_max = 8.0", "M_L = 3", "tau = 0.5"] {
            assert!(text.contains(key), "{key} missing");
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let spec =
            ExperimentSpec::load(None, &["controllers.acc.H=1.5".into(), "single.config=-GGL".into(), "ring.D_v=80".into()]).unwrap();
        assert_eq!(spec.controllers.acc.headway, 1.5);
        assert_eq!(spec.single.config, "-GGL");
        assert_eq!(spec.ring.density, 80.0);
        assert_ne!(spec.hash(), ExperimentSpec::default().hash());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentSpec::load(None, &["controllers.acc.headway_s=1".into()]).is_err());
        assert!(ExperimentSpec::load(None, &["single.config=-P-L".into()]).is_err());
        assert!(ExperimentSpec::load(None, &["ring.R=1.5".into()]).is_err());
    }

    #[test]
    fn full_grid_has_380_cells() {
        let cells = RingGrid::default().cells();
        assert_eq!(cells.len(), 380);
        let keys: std::collections::BTreeSet<String> = cells.iter().map(RingCell::key).collect();
        assert_eq!(keys.len(), 380);
    }

    #[test]
    fn large_platoons_are_sampled_reproducibly() {
        let s = SingleSection::default();
        assert_eq!(s.mixes(4).unwrap().len(), 27);
        assert_eq!(s.mixes(8).unwrap().len(), 2187);
        let a = s.mixes(16).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, s.mixes(16).unwrap());
        assert_ne!(a, sample_mixes(16, 1000, 2));
    }

    #[test]
    fn cell_labels() {
        let c = RingCell { density: 60.0, traffic: Traffic::Platoons { policy: PlatoonPolicy::AllL, size: 8, penetration: 0.5 } };
        assert_eq!(c.label(), "L.5");
        assert_eq!(c.key(), "D060_L_N8_R0.50");
        let b = RingCell { density: 120.0, traffic: Traffic::Baseline { baseline: BaselinePolicy::Idm } };
        assert_eq!((b.label(), b.key()), ("IDM".to_string(), "D120_IDM".to_string()));
    }

    proptest::proptest! {
        #[test]
        fn stored_spec_reloads_to_the_same_hash(h in 0.1f64..3.0, seed in 0u64..1000, n in 2usize..9) {
            let o = [format!("controllers.acc.H={h:?}"), format!("ring.seed={seed}"), format!("single.N=[{n}]")];
            let spec = ExperimentSpec::load(None, &o).unwrap();
            proptest::prop_assert_eq!(spec.controllers.acc.headway, h);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("spec.toml");
            std::fs::write(&path, spec.to_toml()).unwrap();
            let back = ExperimentSpec::load(Some(&path), &[]).unwrap();
            proptest::prop_assert_eq!(back.hash(), spec.hash());
            proptest::prop_assert_ne!(spec.hash(), ExperimentSpec::default().hash());
        }

        #[test]
        fn sampled_mixes_are_distinct_and_well_formed(n in 2usize..12, count in 1usize..20, seed in 0u64..100) {
            let count = count.min(3usize.pow(n as u32 - 1));
            let mixes = sample_mixes(n, count, seed);
            proptest::prop_assert_eq!(mixes.len(), count);
            proptest::prop_assert!(mixes.iter().all(|c| c.len() == n && c.get(0) == Controller::Independent));
            proptest::prop_assert_eq!(&mixes, &sample_mixes(n, count, seed));
        }
    }
}
