//! Experiment configuration: a TOML file with one section per concern.
//! Every field has a default, so a config file only states what it changes;
//! sweep manifests serialize the fully resolved struct back out.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use regnn_core::channel::{dbm_to_linear, ChannelConfig};
use regnn_core::error::{Error, Result};
use regnn_core::topology::SizeRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FixedSize,
    DynamicSize,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::FixedSize => "fixed-size",
            Scenario::DynamicSize => "dynamic-size",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-size" => Ok(Scenario::FixedSize),
            "dynamic-size" => Ok(Scenario::DynamicSize),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            scenario: Scenario::DynamicSize,
            seed: 0,
            output_dir: "runs/out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Link count under the fixed-size scenario.
    pub num_links: usize,
    /// Size bounds under the dynamic-size scenario.
    pub size_min: usize,
    pub size_max: usize,
    pub interference_radius: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            num_links: 10,
            size_min: 4,
            size_max: 20,
            interference_radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub pathloss_exponent: f64,
    pub rayleigh_scale: f64,
    pub noise_dbm: f64,
    pub max_power_dbm: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            pathloss_exponent: 2.2,
            rayleigh_scale: 1.0,
            noise_dbm: -70.0,
            max_power_dbm: -35.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub order: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { layers: 2, order: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Meta-training periods.
    pub meta_tasks: usize,
    pub train_slots: usize,
    pub test_slots: usize,
    /// Held-out slots scoring adapted policies on the test task.
    pub eval_slots: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            meta_tasks: 50,
            train_slots: 200,
            test_slots: 200,
            eval_slots: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaSection {
    pub outer_steps: usize,
    pub outer_rate: f64,
    pub inner_rate: f64,
    pub inner_steps: usize,
    /// Inner-loop batch size; 0 means the full split.
    pub inner_batch: usize,
    pub meta_batch: usize,
    /// Output-layer step multiplier for both loops.
    pub output_scale: f64,
}

impl Default for MetaSection {
    fn default() -> Self {
        MetaSection {
            outer_steps: 100,
            outer_rate: 0.1,
            inner_rate: 0.1,
            inner_steps: 5,
            inner_batch: 0,
            meta_batch: 50,
            output_scale: 1.0,
        }
    }
}

impl MetaSection {
    fn reptile_default() -> Self {
        MetaSection {
            inner_steps: 2,
            ..MetaSection::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSection {
    pub steps: usize,
    pub rate: f64,
    pub batch: usize,
    /// Output-layer step multiplier.
    pub output_scale: f64,
}

impl Default for JointSection {
    fn default() -> Self {
        JointSection {
            steps: 500,
            rate: 0.1,
            batch: 100,
            output_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSection {
    pub rate: f64,
    pub fomaml_steps: usize,
    pub reptile_steps: usize,
    pub joint_steps: usize,
    /// Output-layer step multiplier.
    pub output_scale: f64,
    /// Extra steps per adaptation sample, so larger budgets train longer
    /// before scoring. 0 keeps the fixed per-method step counts.
    pub steps_per_sample: f64,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        AdaptationSection {
            rate: 0.1,
            fomaml_steps: 5,
            reptile_steps: 2,
            joint_steps: 5,
            output_scale: 1.0,
            steps_per_sample: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub repetitions: usize,
    /// Adaptation-sample grid for the sample sweep.
    pub samples: Vec<usize>,
    /// Radius grid for the radius sweep.
    pub radii: Vec<f64>,
    /// Adaptation samples used at every radius of the radius sweep.
    pub radius_samples: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            repetitions: 20,
            samples: vec![2, 4, 6, 10, 20, 50, 100, 200, 500, 1000],
            radii: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            radius_samples: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub network: NetworkSection,
    pub channel: ChannelSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub fomaml: MetaSection,
    #[serde(default = "MetaSection::reptile_default")]
    pub reptile: MetaSection,
    pub joint: JointSection,
    pub adaptation: AdaptationSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            network: NetworkSection::default(),
            channel: ChannelSection::default(),
            model: ModelSection::default(),
            data: DataSection::default(),
            fomaml: MetaSection::default(),
            reptile: MetaSection::reptile_default(),
            joint: JointSection::default(),
            adaptation: AdaptationSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{what} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn at_least_one(v: usize, what: &str) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{what} must be >= 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment.scenario {
            Scenario::FixedSize => at_least_one(self.network.num_links, "network.num_links")?,
            Scenario::DynamicSize => {
                at_least_one(self.network.size_min, "network.size_min")?;
                if self.network.size_min > self.network.size_max {
                    return Err(Error::Config(format!(
                        "network.size_min {} exceeds size_max {}",
                        self.network.size_min, self.network.size_max
                    )));
                }
            }
        }
        if !(self.network.interference_radius >= 0.0)
            || !self.network.interference_radius.is_finite()
        {
            return Err(Error::Config(format!(
                "network.interference_radius must be finite and >= 0, got {}",
                self.network.interference_radius
            )));
        }
        positive(self.channel.pathloss_exponent, "channel.pathloss_exponent")?;
        positive(self.channel.rayleigh_scale, "channel.rayleigh_scale")?;
        if !self.channel.noise_dbm.is_finite() || !self.channel.max_power_dbm.is_finite() {
            return Err(Error::Config("channel powers must be finite dBm".into()));
        }
        at_least_one(self.model.layers, "model.layers")?;
        at_least_one(self.model.order, "model.order")?;
        at_least_one(self.data.meta_tasks, "data.meta_tasks")?;
        at_least_one(self.data.train_slots, "data.train_slots")?;
        at_least_one(self.data.test_slots, "data.test_slots")?;
        at_least_one(self.data.eval_slots, "data.eval_slots")?;
        for (name, m) in [("fomaml", &self.fomaml), ("reptile", &self.reptile)] {
            positive(m.outer_rate, &format!("{name}.outer_rate"))?;
            if !(m.inner_rate >= 0.0) || !m.inner_rate.is_finite() {
                return Err(Error::Config(format!(
                    "{name}.inner_rate must be finite and >= 0, got {}",
                    m.inner_rate
                )));
            }
            at_least_one(m.meta_batch, &format!("{name}.meta_batch"))?;
        }
        positive(self.joint.rate, "joint.rate")?;
        at_least_one(self.joint.batch, "joint.batch")?;
        positive(self.adaptation.rate, "adaptation.rate")?;
        if !(self.adaptation.steps_per_sample >= 0.0)
            || !self.adaptation.steps_per_sample.is_finite()
        {
            return Err(Error::Config(format!(
                "adaptation.steps_per_sample must be finite and >= 0, got {}",
                self.adaptation.steps_per_sample
            )));
        }
        at_least_one(self.sweep.repetitions, "sweep.repetitions")?;
        at_least_one(self.sweep.radius_samples, "sweep.radius_samples")?;
        Ok(())
    }

    /// Extra checks for the sample sweep.
    pub fn validate_samples(&self) -> Result<()> {
        if self.experiment.scenario != Scenario::DynamicSize {
            return Err(Error::Config(
                "the sample sweep runs on the dynamic-size scenario".into(),
            ));
        }
        sorted_grid(&self.sweep.samples, "sweep.samples", |&n| n >= 1)
    }

    /// Extra checks for the radius sweep.
    pub fn validate_radii(&self) -> Result<()> {
        if self.experiment.scenario != Scenario::FixedSize {
            return Err(Error::Config(
                "the radius sweep runs on the fixed-size scenario".into(),
            ));
        }
        sorted_grid(&self.sweep.radii, "sweep.radii", |&r| r > 0.0 && r.is_finite())
    }

    pub fn size_rule(&self) -> SizeRule {
        match self.experiment.scenario {
            Scenario::FixedSize => SizeRule::Fixed(self.network.num_links),
            Scenario::DynamicSize => SizeRule::UniformInt {
                lo: self.network.size_min,
                hi: self.network.size_max,
            },
        }
    }

    /// Core channel settings with the dBm fields converted to linear mW.
    pub fn channel_config(&self, slots: usize, seed: u64) -> ChannelConfig {
        ChannelConfig {
            pathloss_exponent: self.channel.pathloss_exponent,
            rayleigh_scale: self.channel.rayleigh_scale,
            noise_power: dbm_to_linear(self.channel.noise_dbm),
            max_power: dbm_to_linear(self.channel.max_power_dbm),
            slots,
            seed,
        }
    }
}

fn sorted_grid<T: PartialOrd + fmt::Debug>(
    grid: &[T],
    what: &str,
    ok: impl Fn(&T) -> bool,
) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{what} must not be empty")));
    }
    for v in grid {
        if !ok(v) {
            return Err(Error::Config(format!("{what} has invalid entry {v:?}")));
        }
    }
    for pair in grid.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::Config(format!(
                "{what} must be strictly ascending, got {:?} then {:?}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_both_sweeps() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.validate_samples().unwrap();
        let mut fixed = cfg;
        fixed.experiment.scenario = Scenario::FixedSize;
        fixed.validate_radii().unwrap();
    }

    #[test]
    fn partial_toml_fills_in_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            "[experiment]\nseed = 9\n\n[sweep]\nsamples = [2, 5]\nrepetitions = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment.seed, 9);
        assert_eq!(cfg.sweep.samples, vec![2, 5]);
        assert_eq!(cfg.data.meta_tasks, 50);
        assert_eq!(cfg.fomaml.inner_steps, 5);
        assert_eq!(cfg.reptile.inner_steps, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[experiment]\nsed = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn grids_must_ascend() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.samples = vec![5, 2];
        assert!(cfg.validate_samples().is_err());
        cfg.sweep.samples = vec![];
        assert!(cfg.validate_samples().is_err());
        let mut radii = ExperimentConfig::default();
        radii.experiment.scenario = Scenario::FixedSize;
        radii.sweep.radii = vec![1.0, 1.0];
        assert!(radii.validate_radii().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn scenario_names_parse_back() {
        for s in [Scenario::FixedSize, Scenario::DynamicSize] {
            let text = s.to_string();
            assert_eq!(text.parse::<Scenario>().unwrap(), s);
        }
    }
}
