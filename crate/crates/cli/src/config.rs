//! Project configuration (TOML) and the bundled 600 L / 1100 L presets.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use slosh_core::architecture::{ActuationChain, ArchitectureConfig, EngageConfig, EngageMode, Limiter, OuterLoop};
use slosh_core::error::{Error, Result};
use slosh_core::plant::PlantParams;
use slosh_core::sim::{Excitation, PendulumParams, PlantKind, Scenario, DEFAULT_DT_PLANT, STROKE_STOP};
use slosh_core::synthesis::{ControllerParams, LoopModel, Requirement, TuneSpec, WeightSpec};
use slosh_core::uncertainty::{PlantSample, UncertaintySpec};

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Weight block; `omega_o` and `mass_scale` follow the plant when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsBlock {
    pub omega_o: Option<f64>,
    pub mass_scale: Option<f64>,
    pub d: f64,
    pub wd_dc: f64,
    pub wd_hf: f64,
    pub wc_dc: f64,
    pub wc_hf: f64,
    pub noise_scale: f64,
}

impl Default for WeightsBlock {
    fn default() -> Self {
        let w = WeightSpec::default();
        Self {
            omega_o: None,
            mass_scale: None,
            d: w.d,
            wd_dc: w.wd_dc,
            wd_hf: w.wd_hf,
            wc_dc: w.wc_dc,
            wc_hf: w.wc_hf,
            noise_scale: w.noise_scale,
        }
    }
}

impl WeightsBlock {
    pub fn resolve(&self, plant: &PlantParams<f64>) -> WeightSpec {
        let base = WeightSpec::for_plant(plant);
        WeightSpec {
            omega_o: self.omega_o.unwrap_or(base.omega_o),
            mass_scale: self.mass_scale.unwrap_or(base.mass_scale),
            d: self.d,
            wd_dc: self.wd_dc,
            wd_hf: self.wd_hf,
            wc_dc: self.wc_dc,
            wc_hf: self.wc_hf,
            noise_scale: self.noise_scale,
        }
    }
}

/// Tuning block; frequency-dependent entries follow the weights when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneBlock {
    /// Plant samples the worst case is taken over (vertices first).
    pub samples: usize,
    /// Starting point; the hand-tuned reference controller when absent.
    pub init: Option<ControllerParams>,
    pub crossover_band: Option<[f64; 2]>,
    pub slope_band: [f64; 2],
    pub pole_max_real: f64,
    pub pole_min_damping: f64,
    pub min_decay: f64,
    pub nominal_decay: f64,
    pub rolloff_freq: Option<f64>,
    pub decay: Requirement,
    pub crossover: Requirement,
    pub slope: Requirement,
    pub rolloff: Requirement,
    pub impulse: Requirement,
    pub starts: usize,
    pub max_evals: usize,
    pub initial_mesh: f64,
    pub min_mesh: f64,
}

impl Default for TuneBlock {
    fn default() -> Self {
        let t = TuneSpec::default();
        Self {
            samples: 20,
            init: None,
            crossover_band: None,
            slope_band: t.slope_band,
            pole_max_real: t.pole_max_real,
            pole_min_damping: t.pole_min_damping,
            min_decay: t.min_decay,
            nominal_decay: t.nominal_decay,
            rolloff_freq: None,
            decay: t.decay,
            crossover: t.crossover,
            slope: t.slope,
            rolloff: t.rolloff,
            impulse: t.impulse,
            starts: t.starts,
            max_evals: t.max_evals,
            initial_mesh: t.initial_mesh,
            min_mesh: t.min_mesh,
        }
    }
}

impl TuneBlock {
    pub fn resolve(&self, w: &WeightSpec, seed: u64) -> TuneSpec {
        let base = TuneSpec::for_weights(w);
        TuneSpec {
            crossover_band: self.crossover_band.unwrap_or(base.crossover_band),
            slope_band: self.slope_band,
            pole_max_real: self.pole_max_real,
            pole_min_damping: self.pole_min_damping,
            min_decay: self.min_decay,
            nominal_decay: self.nominal_decay,
            rolloff_freq: self.rolloff_freq.unwrap_or(base.rolloff_freq),
            decay: self.decay,
            crossover: self.crossover,
            slope: self.slope,
            rolloff: self.rolloff,
            impulse: self.impulse,
            starts: self.starts,
            max_evals: self.max_evals,
            initial_mesh: self.initial_mesh,
            min_mesh: self.min_mesh,
            seed,
            ..base
        }
    }

    pub fn initial(&self, w: &WeightSpec) -> ControllerParams {
        self.init.unwrap_or_else(|| ControllerParams::reference(w.omega_o, w.mass_scale))
    }
}

/// Architecture block; the outer-loop bandwidth follows `omega_o / 10`
/// when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureBlock {
    pub dt: f64,
    pub chain: ActuationChain,
    pub limiter: Limiter,
    pub outer_gain: f64,
    pub outer_bandwidth: Option<f64>,
    pub engage: EngageConfig,
}

impl Default for ArchitectureBlock {
    fn default() -> Self {
        let a = ArchitectureConfig::default();
        Self { dt: a.dt, chain: a.chain, limiter: a.limiter, outer_gain: a.outer.gain, outer_bandwidth: None, engage: a.engage }
    }
}

impl ArchitectureBlock {
    pub fn resolve(&self, omega_o: f64) -> ArchitectureConfig {
        let base = OuterLoop::for_frequency(omega_o);
        ArchitectureConfig {
            dt: self.dt,
            chain: self.chain,
            limiter: self.limiter,
            outer: OuterLoop { gain: self.outer_gain, bandwidth: self.outer_bandwidth.unwrap_or(base.bandwidth) },
            engage: self.engage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrogate {
    #[default]
    Linear,
    Pendulum,
}

fn default_start() -> f64 {
    0.5
}

fn default_stroke_stop() -> f64 {
    STROKE_STOP
}

fn default_engage() -> EngageMode {
    EngageMode::Auto
}

/// A named test run against the configured plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub excitation: Excitation,
    #[serde(default = "default_start")]
    pub start: f64,
    #[serde(default)]
    pub free_phase: f64,
    #[serde(default = "default_engage")]
    pub engage: EngageMode,
    /// Arm time plus 12 s when absent.
    #[serde(default)]
    pub total_time: Option<f64>,
    #[serde(default)]
    pub surrogate: Surrogate,
    /// Drive and sensor without lowpass or delay (identification tests).
    #[serde(default)]
    pub ideal_drive: bool,
    #[serde(default)]
    pub open_loop: bool,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Hard stroke stop (m); `inf` for an unbounded rig.
    #[serde(default = "default_stroke_stop")]
    pub stroke_stop: f64,
}

impl ScenarioSpec {
    fn new(name: &str, excitation: Excitation, free_phase: f64) -> Self {
        Self {
            name: name.to_string(),
            excitation,
            start: default_start(),
            free_phase,
            engage: EngageMode::Auto,
            total_time: None,
            surrogate: Surrogate::Linear,
            ideal_drive: false,
            open_loop: false,
            noise_std: 0.0,
            seed: 0,
            stroke_stop: STROKE_STOP,
        }
    }

    /// Scenario against the nominal plant of `cfg`.
    pub fn build(&self, cfg: &ProjectConfig) -> Result<Scenario> {
        let arch = cfg.architecture();
        let (actuation, delay) = if self.ideal_drive { (ActuationChain::ideal(), 0.0) } else { (arch.chain, arch.chain.delay_t) };
        let plant = match self.surrogate {
            Surrogate::Linear => PlantKind::Linear { sample: PlantSample::nominal(cfg.plant, delay) },
            Surrogate::Pendulum => PlantKind::Pendulum { params: PendulumParams::from_plant(&cfg.plant), delay_t: delay },
        };
        let arm = self.start + self.excitation.duration() + self.free_phase;
        let scn = Scenario {
            name: self.name.clone(),
            excitation: self.excitation,
            start: self.start,
            free_phase: self.free_phase,
            engage: if self.open_loop { EngageMode::Never } else { self.engage },
            total_time: self.total_time.unwrap_or(arm + 12.0),
            plant,
            actuation,
            dt_plant: DEFAULT_DT_PLANT,
            noise_std: self.noise_std,
            seed: self.seed,
            stroke_stop: self.stroke_stop,
        };
        scn.validate()?;
        Ok(scn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    /// Seed of the uncertainty sample set and the tuning starts.
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantParams<f64>,
    #[serde(default)]
    pub uncertainty: UncertaintySpec,
    #[serde(default)]
    pub weights: WeightsBlock,
    #[serde(default)]
    pub tune: TuneBlock,
    #[serde(default, rename = "architecture")]
    pub arch: ArchitectureBlock,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self::preset("600L").expect("built-in preset")
    }
}

impl ProjectConfig {
    pub const PRESETS: [&'static str; 2] = ["600L", "1100L"];

    /// Fill-level presets. The 1100 L masses and frequency are scaled
    /// estimates, not measurements.
    pub fn preset(name: &str) -> Result<Self> {
        let plant = match name {
            "600L" => PlantParams::reference(),
            "1100L" => PlantParams { m_s: 380.0, m_r: 1150.0, k: 380.0 * 4.6 * 4.6, c: 2.0 * 0.002 * (380.0f64 * 380.0 * 4.6 * 4.6).sqrt() },
            other => return Err(cfg_err(format!("unknown preset '{other}' (known: {:?})", Self::PRESETS))),
        };
        let omega = (plant.k / plant.m_s).sqrt();
        let period = 2.0 * PI / omega;
        let pulse = |n: &str| ScenarioSpec::new(n, Excitation::StepMove { amp: 0.1, duration: period / 2.0 }, 8.0);
        let sine = |n: &str| ScenarioSpec::new(n, Excitation::Sine { amp: 0.02, freq: 0.95 * omega, duration: 10.0 }, 1.0);
        let mut scenarios = vec![
            pulse(&format!("pulse-{name}")),
            ScenarioSpec { open_loop: true, ..pulse(&format!("pulse-{name}-open")) },
            ScenarioSpec { surrogate: Surrogate::Pendulum, ..pulse(&format!("pulse-{name}-pendulum")) },
            sine(&format!("sine-{name}")),
            ScenarioSpec { open_loop: true, ..sine(&format!("sine-{name}-open")) },
        ];
        scenarios.push(ScenarioSpec {
            engage: EngageMode::Never,
            ideal_drive: true,
            open_loop: true,
            total_time: Some(0.5 + 1.5 + 5.0 * period),
            stroke_stop: f64::INFINITY,
            ..ScenarioSpec::new(&format!("ident-{name}"), Excitation::Pulse { amp: 0.1, duration: 1.5 }, 0.0)
        });
        Ok(Self {
            name: name.to_string(),
            seed: 0,
            plant,
            uncertainty: UncertaintySpec::default(),
            weights: WeightsBlock::default(),
            tune: TuneBlock::default(),
            arch: ArchitectureBlock::default(),
            scenarios,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn weights(&self) -> WeightSpec {
        self.weights.resolve(&self.plant)
    }

    pub fn tune_spec(&self) -> TuneSpec {
        self.tune.resolve(&self.weights(), self.seed)
    }

    pub fn omega_o(&self) -> f64 {
        (self.plant.k / self.plant.m_s).sqrt()
    }

    pub fn architecture(&self) -> ArchitectureConfig {
        self.arch.resolve(self.omega_o())
    }

    /// Drive model, outer loop and rigid mass the controller is tuned against.
    pub fn loop_model(&self) -> LoopModel {
        LoopModel::from_architecture(&self.architecture(), self.plant.m_r)
    }

    pub fn scenario(&self, name: &str) -> Result<Scenario> {
        let spec = self.scenarios.iter().find(|s| s.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
            cfg_err(format!("unknown scenario '{name}' (known: {})", known.join(", ")))
        })?;
        spec.build(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.check_realizable()?;
        self.uncertainty.validate()?;
        let w = self.weights();
        w.validate()?;
        self.tune_spec().validate(w.omega_o, w.omega_c())?;
        if self.tune.samples == 0 {
            return Err(cfg_err("tune.samples must be at least 1"));
        }
        if let Some(p) = &self.tune.init {
            p.validate()?;
        }
        self.architecture().validate(self.omega_o())?;
        let mut names = BTreeSet::new();
        for s in &self.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(cfg_err(format!("duplicate scenario '{}'", s.name)));
            }
            s.build(self).map_err(|e| cfg_err(format!("scenario '{}': {e}", s.name)))?;
        }
        Ok(())
    }
}
