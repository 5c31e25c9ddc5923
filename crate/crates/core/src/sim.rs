//! Two-rate time-domain simulation of the drive, the slosh plant (linear or
//! pendulum) and the controller architecture, plus damping metrics.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::architecture::{ActuationChain, Architecture, ArchitectureConfig, EngageMode, Tick, GRAVITY};
use crate::error::{param, Error, Result};
use crate::lti::StateSpace;
use crate::ode::rk4_step;
use crate::plant::PlantParams;
use crate::uncertainty::{pade2, PlantSample};

pub const DEFAULT_DT_PLANT: f64 = 0.001;
pub const STROKE_STOP: f64 = 0.2;
/// Residual envelope fraction that counts as damped.
pub const DAMPED_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Excitation {
    /// Constant acceleration for `duration`; leaves the tank moving.
    Pulse { amp: f64, duration: f64 },
    /// `+amp` for the first half of `duration`, `-amp` for the second: rest to rest.
    StepMove { amp: f64, duration: f64 },
    /// `amp cos(freq t)` over the whole cycles that fit in `duration`: rest to rest.
    Sine { amp: f64, freq: f64, duration: f64 },
    None,
}

impl Excitation {
    pub fn duration(&self) -> f64 {
        match *self {
            Excitation::Pulse { duration, .. } | Excitation::StepMove { duration, .. } => duration,
            Excitation::Sine { freq, duration, .. } => (duration * freq / (2.0 * PI)).floor() * 2.0 * PI / freq,
            Excitation::None => 0.0,
        }
    }

    /// Commanded acceleration at `tau` seconds after onset.
    pub fn accel(&self, tau: f64) -> f64 {
        if tau < 0.0 || tau >= self.duration() {
            return 0.0;
        }
        match *self {
            Excitation::Pulse { amp, .. } => amp,
            Excitation::StepMove { amp, duration } => {
                if tau < duration / 2.0 {
                    amp
                } else {
                    -amp
                }
            }
            Excitation::Sine { amp, freq, .. } => amp * (freq * tau).cos(),
            Excitation::None => 0.0,
        }
    }

    /// Velocity change accumulated from onset to `tau`.
    pub fn velocity(&self, tau: f64) -> f64 {
        let d = self.duration();
        let tau = tau.clamp(0.0, d);
        match *self {
            Excitation::Pulse { amp, .. } => amp * tau,
            Excitation::StepMove { amp, .. } => amp * (tau.min(d / 2.0) - (tau - d / 2.0).max(0.0)),
            Excitation::Sine { amp, freq, .. } => amp / freq * (freq * tau).sin(),
            Excitation::None => 0.0,
        }
    }

    /// Mean acceleration over `[tau, tau + dt)`, the value a zero-order hold
    /// needs to reproduce the velocity profile exactly at the sample instants.
    pub fn held(&self, tau: f64, dt: f64) -> f64 {
        (self.velocity(tau + dt) - self.velocity(tau)) / dt
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Excitation::Pulse { amp, duration } | Excitation::StepMove { amp, duration } => amp.is_finite() && duration > 0.0,
            Excitation::Sine { amp, freq, duration } => amp.is_finite() && freq > 0.0 && duration * freq >= 2.0 * PI,
            Excitation::None => true,
        };
        if ok {
            Ok(())
        } else {
            Err(param(format!("invalid excitation {self:?}")))
        }
    }
}

/// Point-mass pendulum hanging from the moving tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    /// m
    pub length: f64,
    pub m_s: f64,
    pub m_r: f64,
    /// Pivot damping (N m s).
    pub damping: f64,
    pub g: f64,
}

impl PendulumParams {
    /// Pendulum with the same first mode, masses and small-angle damping.
    pub fn from_plant(p: &PlantParams<f64>) -> Self {
        let omega = (p.k / p.m_s).sqrt();
        let length = GRAVITY / (omega * omega);
        Self { length, m_s: p.m_s, m_r: p.m_r, damping: p.c * length * length, g: GRAVITY }
    }

    pub fn omega(&self) -> f64 {
        (self.g / self.length).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.m_s > 0.0 && self.m_r > 0.0 && self.g > 0.0 && self.damping >= 0.0) {
            return Err(param(format!("invalid pendulum parameters {self:?}")));
        }
        Ok(())
    }
}

/// `[theta', theta'']` for a pendulum whose pivot accelerates at `xdd_h`.
pub fn pendulum_dynamics(theta: f64, theta_dot: f64, xdd_h: f64, p: &PendulumParams) -> Result<[f64; 2]> {
    if !(theta.abs() < PI / 2.0) {
        return Err(Error::Simulation { t: f64::NAN, message: format!("pendulum angle {theta} rad left (-pi/2, pi/2)") });
    }
    let l = p.length;
    let thdd = (-p.g * theta.sin() - xdd_h * theta.cos() - p.damping * theta_dot / (p.m_s * l)) / l;
    Ok([theta_dot, thdd])
}

/// Horizontal reaction of the pendulum on the pivot.
pub fn pendulum_reaction(theta: f64, theta_dot: f64, theta_ddot: f64, xdd_h: f64, p: &PendulumParams) -> f64 {
    -p.m_s * (xdd_h + p.length * (theta_ddot * theta.cos() - theta_dot * theta_dot * theta.sin()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantKind {
    Linear { sample: PlantSample },
    Pendulum { params: PendulumParams, delay_t: f64 },
}

impl PlantKind {
    pub fn omega(&self) -> f64 {
        match self {
            PlantKind::Linear { sample } => (sample.params.k / sample.params.m_s).sqrt(),
            PlantKind::Pendulum { params, .. } => params.omega(),
        }
    }

    pub fn m_r(&self) -> f64 {
        match self {
            PlantKind::Linear { sample } => sample.params.m_r,
            PlantKind::Pendulum { params, .. } => params.m_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub excitation: Excitation,
    /// Quiet time before the excitation starts (s).
    pub start: f64,
    /// Time after the excitation during which the controller stays disarmed (s).
    pub free_phase: f64,
    pub engage: EngageMode,
    pub total_time: f64,
    pub plant: PlantKind,
    /// True drive and sensor corners (the delay comes from the plant).
    pub actuation: ActuationChain,
    pub dt_plant: f64,
    /// Standard deviation of additive force sensor noise (N).
    pub noise_std: f64,
    pub seed: u64,
    pub stroke_stop: f64,
}

impl Scenario {
    pub fn arm_time(&self) -> f64 {
        self.start + self.excitation.duration() + self.free_phase
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.plant.omega()
    }

    pub fn validate(&self) -> Result<()> {
        self.excitation.validate()?;
        self.actuation.validate()?;
        if let PlantKind::Pendulum { params, delay_t } = &self.plant {
            params.validate()?;
            if !(*delay_t >= 0.0) {
                return Err(param("delay must be non-negative"));
            }
        }
        if let PlantKind::Linear { sample } = &self.plant {
            sample.params.check_realizable()?;
        }
        if !(self.start >= 0.0 && self.free_phase >= 0.0 && self.dt_plant > 0.0 && self.noise_std >= 0.0) {
            return Err(param("scenario times, step and noise level must be non-negative"));
        }
        if !(self.stroke_stop > 0.0) {
            return Err(param("stroke stop must be positive"));
        }
        let need = self.arm_time() + 4.0 * self.period();
        if !(self.total_time >= need) {
            return Err(param(format!("total_time {} must cover excitation, free phase and 4 periods ({need:.3} s)", self.total_time)));
        }
        Ok(())
    }

    fn rig(name: &str, plant: &PlantParams<f64>, excitation: Excitation, free_phase: f64, engage: EngageMode) -> Self {
        let start = 0.5;
        let arm = start + excitation.duration() + free_phase;
        Self {
            name: name.to_string(),
            excitation,
            start,
            free_phase,
            engage,
            total_time: arm + 12.0,
            plant: PlantKind::Linear { sample: PlantSample::nominal(*plant, ActuationChain::default().delay_t) },
            actuation: ActuationChain::default(),
            dt_plant: DEFAULT_DT_PLANT,
            noise_std: 0.0,
            seed: 0,
            stroke_stop: STROKE_STOP,
        }
    }

    /// Rest-to-rest move of one half slosh period, then a free phase.
    pub fn pulse(name: &str, plant: &PlantParams<f64>) -> Self {
        let period = 2.0 * PI / (plant.k / plant.m_s).sqrt();
        Self::rig(name, plant, Excitation::StepMove { amp: 0.1, duration: period / 2.0 }, 8.0, EngageMode::Auto)
    }

    /// Forced motion slightly below the first mode.
    pub fn sine(name: &str, plant: &PlantParams<f64>) -> Self {
        let omega = (plant.k / plant.m_s).sqrt();
        Self::rig(name, plant, Excitation::Sine { amp: 0.02, freq: 0.95 * omega, duration: 10.0 }, 1.0, EngageMode::Auto)
    }

    /// Identification test: single pulse, ideal drive and sensor, no stroke limit.
    pub fn identification(name: &str, plant: &PlantParams<f64>, amp: f64, duration: f64) -> Self {
        let period = 2.0 * PI / (plant.k / plant.m_s).sqrt();
        Self {
            name: name.to_string(),
            excitation: Excitation::Pulse { amp, duration },
            start: 0.5,
            free_phase: 0.0,
            engage: EngageMode::Never,
            total_time: 0.5 + duration + 5.0 * period,
            plant: PlantKind::Linear { sample: PlantSample::nominal(*plant, 0.0) },
            actuation: ActuationChain::ideal(),
            dt_plant: DEFAULT_DT_PLANT,
            noise_std: 0.0,
            seed: 0,
            stroke_stop: f64::INFINITY,
        }
    }

    /// Same scenario on the pendulum surrogate matched to `plant`.
    pub fn with_pendulum(mut self, plant: &PlantParams<f64>) -> Self {
        let delay_t = match &self.plant {
            PlantKind::Linear { sample } => sample.delay_t,
            PlantKind::Pendulum { delay_t, .. } => *delay_t,
        };
        self.plant = PlantKind::Pendulum { params: PendulumParams::from_plant(plant), delay_t };
        self
    }

    pub fn open_loop(mut self) -> Self {
        self.engage = EngageMode::Never;
        self
    }
}

/// Core controller plus architecture settings for a closed-loop run.
#[derive(Debug, Clone)]
pub struct ControllerSetup {
    pub config: ArchitectureConfig,
    pub controller: StateSpace<f64>,
    pub m_r_model: f64,
}

/// Uniform series sampled at the control rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimSeries {
    pub t: Vec<f64>,
    pub x_h: Vec<f64>,
    pub xd_h: Vec<f64>,
    pub xdd_h: Vec<f64>,
    /// Relative displacement (m) or pendulum angle (rad).
    pub slosh: Vec<f64>,
    pub f_sp: Vec<f64>,
    pub f_s: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub xdd_cmd: Vec<f64>,
    pub engaged: Vec<bool>,
}

impl SimSeries {
    pub const COLUMNS: [&'static str; 10] =
        ["t", "x_h", "xd_h", "xdd_h", "slosh", "F_sp", "F_s", "F_hat", "xdd_cmd", "engaged"];

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn row(&self, i: usize) -> [f64; 10] {
        [
            self.t[i],
            self.x_h[i],
            self.xd_h[i],
            self.xdd_h[i],
            self.slosh[i],
            self.f_sp[i],
            self.f_s[i],
            self.f_hat[i],
            self.xdd_cmd[i],
            if self.engaged[i] { 1.0 } else { 0.0 },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` without a reference time; `+inf` when never damped.
    pub cycles_to_damp: Option<f64>,
    pub envelope_ratio_per_cycle: Option<f64>,
    pub max_stroke: f64,
    pub terminal_tank_velocity: f64,
    pub reference_time: Option<f64>,
    pub reference_amplitude: f64,
    pub max_slosh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub series: SimSeries,
    pub metrics: Metrics,
    pub engaged_at: Option<f64>,
    pub stop_events: Vec<SimEvent>,
    /// Controller telemetry, one entry per control tick.
    pub telemetry: Vec<Tick<f64>>,
}

struct TruePlant<'a> {
    kind: &'a PlantKind,
    act: StateSpace<f64>,
    sens: StateSpace<f64>,
    na: usize,
}

impl TruePlant<'_> {
    fn new<'a>(scn: &'a Scenario) -> Result<TruePlant<'a>> {
        let (act_pert, sens_pert, delay) = match &scn.plant {
            PlantKind::Linear { sample } => (sample.act_gain_pert.system()?, sample.sens_gain_pert.system()?, sample.delay_t),
            PlantKind::Pendulum { delay_t, .. } => (StateSpace::identity(1), StateSpace::identity(1), *delay_t),
        };
        let act = StateSpace::lowpass_or_unity(scn.actuation.lowpass_corner)?.series(&act_pert)?;
        let sens = StateSpace::lowpass_or_unity(scn.actuation.sensor_corner)?
            .series(&pade2(delay)?)?
            .series(&sens_pert)?;
        Ok(TruePlant { kind: &scn.plant, na: act.n_states(), act, sens })
    }

    fn dim(&self) -> usize {
        4 + self.na + self.sens.n_states()
    }

    fn accel(&self, x: &DVector<f64>, u: f64) -> f64 {
        let mut a = self.act.d()[(0, 0)] * u;
        for j in 0..self.na {
            a += self.act.c()[(0, j)] * x[4 + j];
        }
        a
    }

    /// Spring (or pivot) reaction, slosh acceleration term and sensor force.
    fn forces(&self, x: &DVector<f64>, a: f64) -> Result<(f64, [f64; 2])> {
        match self.kind {
            PlantKind::Linear { sample } => {
                let p = &sample.params;
                let f_sp = p.k * x[0] + p.c * x[1];
                Ok((f_sp, [x[1], -f_sp / p.m_s - a]))
            }
            PlantKind::Pendulum { params, .. } => {
                let d = pendulum_dynamics(x[0], x[1], a, params)?;
                Ok((pendulum_reaction(x[0], x[1], d[1], a, params), d))
            }
        }
    }

    fn sensor_force(&self, f_sp: f64, a: f64) -> f64 {
        f_sp + self.kind.m_r() * a
    }

    fn deriv(&self, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let n = self.dim();
        let mut dx = DVector::zeros(n);
        let a = self.accel(x, u);
        let (f_sp, slosh) = self.forces(x, a)?;
        dx[0] = slosh[0];
        dx[1] = slosh[1];
        dx[2] = x[3];
        dx[3] = a;
        for i in 0..self.na {
            let mut v = self.act.b()[(i, 0)] * u;
            for j in 0..self.na {
                v += self.act.a()[(i, j)] * x[4 + j];
            }
            dx[4 + i] = v;
        }
        let fs = self.sensor_force(f_sp, a);
        let ns = self.sens.n_states();
        let off = 4 + self.na;
        for i in 0..ns {
            let mut v = self.sens.b()[(i, 0)] * fs;
            for j in 0..ns {
                v += self.sens.a()[(i, j)] * x[off + j];
            }
            dx[off + i] = v;
        }
        Ok(dx)
    }

    fn measured(&self, x: &DVector<f64>, u: f64) -> Result<(f64, f64, f64)> {
        let a = self.accel(x, u);
        let (f_sp, _) = self.forces(x, a)?;
        let fs = self.sensor_force(f_sp, a);
        let off = 4 + self.na;
        let mut y = self.sens.d()[(0, 0)] * fs;
        for j in 0..self.sens.n_states() {
            y += self.sens.c()[(0, j)] * x[off + j];
        }
        Ok((y, f_sp, a))
    }
}

/// Runs a scenario. Without a controller the architecture still runs (for
/// the force estimate) but never engages.
pub fn simulate(scn: &Scenario, ctrl: Option<&ControllerSetup>) -> Result<SimResult> {
    scn.validate()?;
    let plant = TruePlant::new(scn)?;
    let zero = StateSpace::gain(nalgebra::DMatrix::zeros(1, 1));
    let (mut cfg, controller, m_r_model) = match ctrl {
        Some(c) => (c.config, &c.controller, c.m_r_model),
        None => (ArchitectureConfig::default(), &zero, plant.kind.m_r()),
    };
    cfg.engage.mode = if ctrl.is_some() { scn.engage } else { EngageMode::Never };
    cfg.engage.arm_time = scn.arm_time();
    let mut arch = Architecture::new(cfg, controller, m_r_model)?;

    let ratio = (cfg.dt / scn.dt_plant).round();
    if ratio < 1.0 || ((ratio * scn.dt_plant) - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(param(format!("control period {} is not a multiple of the plant step {}", cfg.dt, scn.dt_plant)));
    }
    let substeps = ratio as usize;
    let h = cfg.dt / ratio;
    let n_ticks = (scn.total_time / cfg.dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let noise = Normal::new(0.0, scn.noise_std.max(0.0)).map_err(|e| param(e.to_string()))?;

    let mut x = DVector::zeros(plant.dim());
    let mut series = SimSeries::default();
    let mut stop_events = Vec::new();
    let mut telemetry = Vec::with_capacity(n_ticks);
    let mut u_prev = 0.0;
    for k in 0..n_ticks {
        let t = k as f64 * cfg.dt;
        let (clean, f_sp, a) = plant.measured(&x, u_prev).map_err(|e| at_time(e, t))?;
        let meas = if scn.noise_std > 0.0 { clean + noise.sample(&mut rng) } else { clean };
        let ext = scn.excitation.held(t - scn.start, cfg.dt);
        let tick = arch.step(meas, ext);
        let u = tick.xdd_cmd;

        series.t.push(t);
        series.x_h.push(x[2]);
        series.xd_h.push(x[3]);
        series.xdd_h.push(a);
        series.slosh.push(x[0]);
        series.f_sp.push(f_sp);
        series.f_s.push(meas);
        series.f_hat.push(tick.f_hat);
        series.xdd_cmd.push(u);
        series.engaged.push(tick.engaged);
        telemetry.push(tick);

        for s in 0..substeps {
            let ts = t + s as f64 * h;
            let mut err = None;
            let next = rk4_step(
                |_, y: &DVector<f64>| match plant.deriv(y, u) {
                    Ok(d) => d,
                    Err(e) => {
                        err.get_or_insert(e);
                        DVector::zeros(y.len())
                    }
                },
                ts,
                &x,
                h,
            );
            if let Some(e) = err {
                return Err(at_time(e, ts));
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation { t: ts, message: "state diverged".into() });
            }
            x = next;
            if x[2].abs() > scn.stroke_stop {
                x[2] = x[2].clamp(-scn.stroke_stop, scn.stroke_stop);
                x[3] = 0.0;
                stop_events.push(SimEvent { t: ts + h, position: x[2] });
            }
        }
        u_prev = u;
    }

    let engaged_at = arch.engaged_at();
    let reference = if ctrl.is_some() { engaged_at } else { Some(scn.arm_time()) };
    let mut metrics = compute_metrics(&series, scn.plant.omega(), reference);
    if let PlantKind::Pendulum { .. } = scn.plant {
        metrics.max_slosh = series.slosh.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    }
    Ok(SimResult { series, metrics, engaged_at, stop_events, telemetry })
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Simulation { message, .. } => Error::Simulation { t, message },
        other => other,
    }
}

fn local_peaks(t: &[f64], y: &[f64], from: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in from.max(1)..y.len().saturating_sub(1) {
        if y[i] >= y[i - 1] && y[i] > y[i + 1] {
            out.push((t[i], y[i]));
        }
    }
    out
}

/// Damping metrics from the force estimate.
///
/// The reference amplitude is the peak `|F_hat|` over the period before the
/// reference time; `cycles_to_damp` counts whole periods from the reference
/// time until the peak envelope (interpolated in log scale) first stays
/// below 15% of it.
pub fn compute_metrics(series: &SimSeries, omega: f64, reference: Option<f64>) -> Metrics {
    let n = series.len();
    let period = 2.0 * PI / omega;
    let tail_start = series.t.last().map(|&te| te - 1.0).unwrap_or(0.0);
    let tail: Vec<f64> = series.t.iter().zip(&series.xd_h).filter(|(t, _)| **t >= tail_start).map(|(_, v)| *v).collect();
    let terminal = if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    let max_slosh = series.slosh.iter().fold(0.0, |m: f64, v| m.max(v.abs()));

    let Some(t_ref) = reference else {
        return Metrics {
            cycles_to_damp: None,
            envelope_ratio_per_cycle: None,
            max_stroke: 0.0,
            terminal_tank_velocity: terminal,
            reference_time: None,
            reference_amplitude: 0.0,
            max_slosh,
        };
    };
    let i_ref = series.t.iter().position(|&t| t >= t_ref - 1e-12).unwrap_or(n);
    let mag: Vec<f64> = series.f_hat.iter().map(|v| v.abs()).collect();
    let e0 = series
        .t
        .iter()
        .zip(&mag)
        .filter(|(t, _)| **t >= t_ref - period && **t <= t_ref + 1e-12)
        .fold(0.0, |m: f64, (_, v)| m.max(*v));
    let x_ref = if i_ref < n { series.x_h[i_ref] } else { 0.0 };
    let max_stroke = series.x_h[i_ref.min(n)..].iter().fold(0.0, |m: f64, x| m.max((x - x_ref).abs()));

    let mut env = vec![(t_ref, e0)];
    env.extend(local_peaks(&series.t, &mag, i_ref + 1));
    let thr = DAMPED_FRACTION * e0;
    let cycles = if e0 <= 0.0 {
        Some(0.0)
    } else {
        match env.iter().rposition(|&(_, p)| p >= thr) {
            Some(j) if j + 1 < env.len() => {
                let (t0, p0) = env[j];
                let (t1, p1) = env[j + 1];
                let frac = if p1 > 0.0 { (p0.ln() - thr.ln()) / (p0.ln() - p1.ln()) } else { 0.0 };
                let t_cross = t0 + frac.clamp(0.0, 1.0) * (t1 - t0);
                Some(((t_cross - t_ref) / period).floor().max(0.0))
            }
            _ => Some(f64::INFINITY),
        }
    };
    let above: Vec<&(f64, f64)> = env[1..].iter().filter(|(_, p)| *p >= thr).collect();
    let ratio = match (above.first(), above.last()) {
        (Some(a), Some(b)) if b.0 > a.0 && a.1 > 0.0 => Some((b.1 / a.1).powf(period / (b.0 - a.0))),
        _ => None,
    };
    Metrics {
        cycles_to_damp: cycles,
        envelope_ratio_per_cycle: ratio,
        max_stroke,
        terminal_tank_velocity: terminal,
        reference_time: Some(t_ref),
        reference_amplitude: e0,
        max_slosh,
    }
}
