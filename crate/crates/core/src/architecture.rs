//! Layered controller: slosh-force estimation, engagement timing, the core
//! feedback law, an outer tank-velocity loop and command limiting.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::lti::{DiscreteSystem, StateSpace};
use crate::scalar::Scalar;
use crate::uncertainty::pade2;

pub const DEFAULT_DT: f64 = 0.005;
pub const GRAVITY: f64 = 9.81;

/// Drive and sensor dynamics. `None` corners are ideal (infinitely fast).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationChain {
    /// Drive lowpass (rad/s).
    pub lowpass_corner: Option<f64>,
    /// Force sensor lowpass (rad/s).
    pub sensor_corner: Option<f64>,
    /// Model dead time (s).
    pub delay_t: f64,
}

impl Default for ActuationChain {
    fn default() -> Self {
        Self { lowpass_corner: Some(40.0), sensor_corner: Some(150.0), delay_t: 0.035 }
    }
}

impl ActuationChain {
    pub fn ideal() -> Self {
        Self { lowpass_corner: None, sensor_corner: None, delay_t: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("lowpass_corner", self.lowpass_corner), ("sensor_corner", self.sensor_corner)] {
            if let Some(w) = w {
                if !(w > 0.0 && w.is_finite()) {
                    return Err(param(format!("{name} must be positive, got {w}")));
                }
            }
        }
        if !(self.delay_t >= 0.0 && self.delay_t.is_finite()) {
            return Err(param(format!("delay_t must be non-negative, got {}", self.delay_t)));
        }
        Ok(())
    }

    /// Model of command-to-measured-acceleration: drive lowpass, sensor
    /// lowpass and Pade delay in cascade.
    pub fn model<T: Scalar>(&self) -> Result<StateSpace<T>> {
        self.validate()?;
        StateSpace::lowpass_or_unity(self.lowpass_corner.map(T::of))?
            .series(&StateSpace::lowpass_or_unity(self.sensor_corner.map(T::of))?)?
            .series(&pade2(T::of(self.delay_t))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limiter {
    /// m/s^2
    pub accel_limit: f64,
    /// m/s^3
    pub rate_limit: f64,
}

impl Default for Limiter {
    fn default() -> Self {
        Self { accel_limit: 0.6 * GRAVITY, rate_limit: 50.0 }
    }
}

impl Limiter {
    pub fn validate(&self) -> Result<()> {
        if !(self.accel_limit > 0.0) || !(self.rate_limit > 0.0) {
            return Err(param("limiter bounds must be positive"));
        }
        Ok(())
    }
}

/// Magnitude clamp, then slew clamp around `prev_u`.
pub fn apply_limits<T: Scalar>(u: T, lim: &Limiter, prev_u: T, dt: T) -> T {
    let a = T::of(lim.accel_limit);
    let r = T::of(lim.rate_limit) * dt;
    let clamped = u.max(-a).min(a);
    clamped.max(prev_u - r).min(prev_u + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterLoop {
    /// 1/s
    pub gain: f64,
    /// rad/s
    pub bandwidth: f64,
}

impl Default for OuterLoop {
    fn default() -> Self {
        Self { gain: 0.8, bandwidth: 0.44 }
    }
}

impl OuterLoop {
    pub fn for_frequency(omega_o: f64) -> Self {
        Self { bandwidth: omega_o / 10.0, ..Self::default() }
    }

    pub fn validate(&self, omega_o: f64) -> Result<()> {
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(param(format!("outer loop gain must be non-negative, got {}", self.gain)));
        }
        if !(self.bandwidth > 0.0) || self.bandwidth > omega_o / 5.0 + 1e-12 {
            return Err(param(format!(
                "outer loop bandwidth {} must lie in (0, {}]",
                self.bandwidth,
                omega_o / 5.0
            )));
        }
        Ok(())
    }
}

/// Discrete first-order filter on `-gain * v`.
#[derive(Debug, Clone)]
pub struct OuterLoopFilter<T: Scalar> {
    gain: T,
    alpha: T,
    y: T,
}

impl<T: Scalar> OuterLoopFilter<T> {
    pub fn new(lp: &OuterLoop, dt: T) -> Self {
        let alpha = T::one() - (-T::of(lp.bandwidth) * dt).exp();
        Self { gain: T::of(lp.gain), alpha, y: T::zero() }
    }

    pub fn step(&mut self, v_tank: T) -> T {
        self.y += self.alpha * (-self.gain * v_tank - self.y);
        self.y
    }

    pub fn output(&self) -> T {
        self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum EngageMode {
    /// First qualifying maximum of the estimated slosh force after arming.
    Auto,
    /// First tick at or after `t`.
    At { t: f64 },
    /// Never engage (open loop).
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngageConfig {
    pub mode: EngageMode,
    /// Time at which the detector is armed (s).
    pub arm_time: f64,
    /// Fraction of the running peak a maximum must exceed.
    pub threshold: f64,
    /// Quiet window after arming (s).
    pub refractory: f64,
}

impl Default for EngageConfig {
    fn default() -> Self {
        Self { mode: EngageMode::Auto, arm_time: 10.0, threshold: 0.1, refractory: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngageState {
    Idle,
    Armed,
    Engaged,
}

/// Local-maximum detector on `|F_hat|`.
#[derive(Debug, Clone)]
pub struct EngageLogic<T: Scalar> {
    cfg: EngageConfig,
    state: EngageState,
    prev: [T; 2],
    seen: usize,
    peak: T,
    engaged_at: Option<T>,
}

impl<T: Scalar> EngageLogic<T> {
    pub fn new(cfg: EngageConfig) -> Self {
        Self { cfg, state: EngageState::Idle, prev: [T::zero(); 2], seen: 0, peak: T::zero(), engaged_at: None }
    }

    pub fn state(&self) -> EngageState {
        self.state
    }

    pub fn engaged_at(&self) -> Option<T> {
        self.engaged_at
    }

    /// Feeds one sample; returns true once engaged.
    pub fn update(&mut self, t: T, f_hat: T) -> bool {
        let mag = f_hat.abs();
        if self.state == EngageState::Engaged {
            return true;
        }
        if t >= T::of(self.cfg.arm_time) && self.state == EngageState::Idle {
            self.state = EngageState::Armed;
        }
        let fire = match self.cfg.mode {
            EngageMode::Never => false,
            EngageMode::At { t: at } => t >= T::of(at),
            EngageMode::Auto => {
                self.state == EngageState::Armed
                    && t >= T::of(self.cfg.arm_time + self.cfg.refractory)
                    && self.seen >= 2
                    && self.prev[1] >= self.prev[0]
                    && self.prev[1] > mag
                    && self.peak > T::zero()
                    && self.prev[1] >= T::of(self.cfg.threshold) * self.peak
            }
        };
        self.prev = [self.prev[1], mag];
        self.seen += 1;
        self.peak = self.peak.max(mag);
        if fire {
            self.state = EngageState::Engaged;
            self.engaged_at = Some(t);
        }
        fire
    }
}

/// Subtracts the modelled rigid-body force of the commanded motion from the
/// sensor reading.
#[derive(Debug, Clone)]
pub struct SloshForceEstimator<T: Scalar> {
    chain: DiscreteSystem<T>,
    m_r_model: T,
    last_cmd: T,
}

impl<T: Scalar> SloshForceEstimator<T> {
    pub fn new(chain: &ActuationChain, m_r_model: T, dt: T) -> Result<Self> {
        if !(m_r_model >= T::zero()) {
            return Err(param("model rigid mass must be non-negative"));
        }
        Ok(Self { chain: chain.model::<T>()?.discretize_zoh(dt)?, m_r_model, last_cmd: T::zero() })
    }

    /// Estimate for the current sample. The sample reflects the command held
    /// over the previous interval.
    pub fn estimate(&self, f_s_meas: T) -> T {
        let modelled = self.chain.state_output_siso() + self.chain.d()[(0, 0)] * self.last_cmd;
        f_s_meas - self.m_r_model * modelled
    }

    /// Advances the chain model by one tick under the total command.
    pub fn advance(&mut self, cmd: T) {
        self.chain.step_siso(cmd);
        self.last_cmd = cmd;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Control period (s).
    pub dt: f64,
    pub chain: ActuationChain,
    pub limiter: Limiter,
    pub outer: OuterLoop,
    pub engage: EngageConfig,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            chain: ActuationChain::default(),
            limiter: Limiter::default(),
            outer: OuterLoop::default(),
            engage: EngageConfig::default(),
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self, omega_o: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("control period must be positive"));
        }
        self.chain.validate()?;
        self.limiter.validate()?;
        self.outer.validate(omega_o)
    }
}

/// Telemetry for one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick<T: Scalar> {
    pub t: T,
    pub f_s: T,
    pub f_hat: T,
    pub xdd_cmd: T,
    pub xd_cmd: T,
    pub x_cmd: T,
    pub engaged: bool,
}

impl<T: Scalar> Tick<T> {
    pub const COLUMNS: [&'static str; 7] = ["t", "F_s", "F_hat", "xdd_cmd", "xd_cmd", "x_cmd", "engaged"];

    pub fn row(&self) -> [T; 7] {
        let flag = if self.engaged { T::one() } else { T::zero() };
        [self.t, self.f_s, self.f_hat, self.xdd_cmd, self.xd_cmd, self.x_cmd, flag]
    }
}

/// Drive command `(position, velocity, acceleration)` integrated trapezoidally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandTriple<T: Scalar> {
    pub pos: T,
    pub vel: T,
    pub acc: T,
}

impl<T: Scalar> CommandTriple<T> {
    pub fn zero() -> Self {
        Self { pos: T::zero(), vel: T::zero(), acc: T::zero() }
    }

    pub fn advance(&mut self, acc: T, dt: T) {
        let half = dt * T::of(0.5);
        let vel = self.vel + half * (self.acc + acc);
        self.pos += half * (self.vel + vel);
        self.vel = vel;
        self.acc = acc;
    }
}

/// The full per-tick pipeline.
#[derive(Debug, Clone)]
pub struct Architecture<T: Scalar> {
    cfg: ArchitectureConfig,
    dt: T,
    core: DiscreteSystem<T>,
    estimator: SloshForceEstimator<T>,
    engage: EngageLogic<T>,
    outer: OuterLoopFilter<T>,
    cmd: CommandTriple<T>,
    prev_u: T,
    ticks: u64,
}

impl<T: Scalar> Architecture<T> {
    pub fn new(cfg: ArchitectureConfig, controller: &StateSpace<T>, m_r_model: T) -> Result<Self> {
        if controller.n_inputs() != 1 || controller.n_outputs() != 1 {
            return Err(param("core controller must be single-input single-output"));
        }
        if !(cfg.dt > 0.0) {
            return Err(param("control period must be positive"));
        }
        cfg.chain.validate()?;
        cfg.limiter.validate()?;
        let dt = T::of(cfg.dt);
        Ok(Self {
            core: controller.discretize_bilinear(dt)?,
            estimator: SloshForceEstimator::new(&cfg.chain, m_r_model, dt)?,
            engage: EngageLogic::new(cfg.engage),
            outer: OuterLoopFilter::new(&cfg.outer, dt),
            cmd: CommandTriple::zero(),
            prev_u: T::zero(),
            ticks: 0,
            dt,
            cfg,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.cfg
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn time(&self) -> T {
        T::of(self.ticks as f64 * self.cfg.dt)
    }

    pub fn command(&self) -> CommandTriple<T> {
        self.cmd
    }

    pub fn engaged_at(&self) -> Option<T> {
        self.engage.engaged_at()
    }

    /// One control tick. `external` is an acceleration command added ahead
    /// of the drive (test excitation) and is not limited.
    pub fn step(&mut self, f_s_meas: T, external: T) -> Tick<T> {
        let t = self.time();
        let f_hat = self.estimator.estimate(f_s_meas);
        let engaged = self.engage.update(t, f_hat);
        let u = if engaged {
            let core = self.core.step_siso(f_hat);
            let outer = self.outer.step(self.cmd.vel);
            apply_limits(core + outer, &self.cfg.limiter, self.prev_u, self.dt)
        } else {
            T::zero()
        };
        self.prev_u = u;
        let total = u + external;
        self.cmd.advance(total, self.dt);
        self.estimator.advance(total);
        self.ticks += 1;
        Tick { t, f_s: f_s_meas, f_hat, xdd_cmd: total, xd_cmd: self.cmd.vel, x_cmd: self.cmd.pos, engaged }
    }
}
