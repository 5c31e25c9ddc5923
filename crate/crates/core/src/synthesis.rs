//! Performance weights, the fixed-structure controller and its robust tuning.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architecture::{ActuationChain, ArchitectureConfig, OuterLoop};
use crate::error::{param, Error, Result};
use crate::freq::{close_loop, hinf_norm, spectral_abscissa, FreqGrid, FrequencyEvaluator, WeightedLoop};
use crate::lti::StateSpace;
use crate::plant::PlantParams;
use crate::scalar::Scalar;
use crate::uncertainty::{assemble_loop, PlantSample};

/// Objective offset marking an infeasible point.
pub const INFEASIBLE: f64 = 1e6;
pub const HINF_TOL: f64 = 1e-4;

/// First-order weight `(hf s + dc w)/(s + w)`.
pub fn first_order_weight<T: Scalar>(dc: f64, hf: f64, corner: f64) -> Result<StateSpace<T>> {
    if !(corner > 0.0) || !(dc > 0.0) || !(hf > 0.0) {
        return Err(param(format!("weight needs positive gains and corner (dc {dc}, hf {hf}, w {corner})")));
    }
    StateSpace::from_rows(1, 1, 1, &[-corner], &[1.0], &[(dc - hf) * corner], &[hf])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSpec {
    /// First slosh mode (rad/s).
    pub omega_o: f64,
    /// Roll-off distance of the control weight from the disturbance corner (rad/s).
    pub d: f64,
    pub wd_dc: f64,
    pub wd_hf: f64,
    pub wc_dc: f64,
    pub wc_hf: f64,
    /// Mass used to normalise relative velocity and acceleration to force units (kg).
    pub mass_scale: f64,
    /// Size of the sensor noise input relative to the disturbance input.
    pub noise_scale: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            omega_o: 4.4,
            d: 20.0,
            wd_dc: 0.25,
            wd_hf: 0.01,
            wc_dc: 0.05,
            wc_hf: 1.0,
            mass_scale: 250.0,
            noise_scale: 0.1,
        }
    }
}

impl WeightSpec {
    pub fn for_plant(p: &PlantParams<f64>) -> Self {
        Self { omega_o: (p.k / p.m_s).sqrt(), mass_scale: p.m_s, ..Self::default() }
    }

    pub fn omega_d(&self) -> f64 {
        self.omega_o / 2.0
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_d() + self.d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_o > 0.0 && self.omega_o.is_finite()) {
            return Err(param("omega_o must be positive"));
        }
        if !(self.omega_c() > self.omega_o) {
            return Err(param(format!("control corner {} must exceed omega_o {}", self.omega_c(), self.omega_o)));
        }
        for (name, v) in [
            ("wd_dc", self.wd_dc),
            ("wd_hf", self.wd_hf),
            ("wc_dc", self.wc_dc),
            ("wc_hf", self.wc_hf),
            ("mass_scale", self.mass_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_scale >= 0.0) {
            return Err(param("noise_scale must be non-negative"));
        }
        Ok(())
    }
}

/// `(W_d, W_c)`: disturbance weight with corner `omega_o/2` and control
/// weight with corner `omega_o/2 + d`.
pub fn make_weights<T: Scalar>(spec: &WeightSpec) -> Result<(StateSpace<T>, StateSpace<T>)> {
    spec.validate()?;
    Ok((
        first_order_weight(spec.wd_dc, spec.wd_hf, spec.omega_d())?,
        first_order_weight(spec.wc_dc, spec.wc_hf, spec.omega_c())?,
    ))
}

/// Generalized plant for one sample: inputs `[F_d, n, u]`, outputs
/// `[p, c, F_hat]`, where `F_hat` subtracts the modelled rigid force.
pub fn weighted_loop<T: Scalar>(samp: &PlantSample, model: &LoopModel, weights: &WeightSpec) -> Result<WeightedLoop<T>> {
    let lp = weighted_loop_inner(samp, &model.actuation, weights, model.m_r_model)?;
    match &model.outer {
        Some(o) => with_outer_loop(&lp, o),
        None => Ok(lp),
    }
}

/// What the controller is designed against besides the plant: the drive
/// model used by the estimator, the rigid mass it assumes and the optional
/// outer velocity loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopModel {
    pub actuation: ActuationChain,
    pub outer: Option<OuterLoop>,
    pub m_r_model: f64,
}

impl LoopModel {
    pub fn new(actuation: ActuationChain, outer: Option<OuterLoop>, m_r_model: f64) -> Self {
        Self { actuation, outer, m_r_model }
    }

    /// Estimator and outer loop from an architecture configuration.
    pub fn from_architecture(cfg: &ArchitectureConfig, m_r_model: f64) -> Self {
        let outer = (cfg.outer.gain != 0.0).then_some(cfg.outer);
        Self { actuation: cfg.chain, outer, m_r_model }
    }
}

fn weighted_loop_inner<T: Scalar>(
    samp: &PlantSample,
    actuation: &ActuationChain,
    weights: &WeightSpec,
    m_r_model: f64,
) -> Result<WeightedLoop<T>> {
    let (wd, wc) = make_weights::<T>(weights)?;
    let open = assemble_loop::<T>(samp, actuation)?; // [u, F_d, n] -> [F_s, dd, u]
    let model = actuation.model::<T>()?;
    let (z, o) = (T::zero(), T::one());
    // [F_d, n, u, u] -> [F_s, dd, u, model(u)]
    let stacked = open.select_inputs(&[1, 2, 0])?.append(&model);
    #[rustfmt::skip]
    let dup = DMatrix::from_row_slice(4, 3, &[
        o, z, z,
        z, T::of(weights.noise_scale), z,
        z, z, o,
        z, z, o,
    ]);
    let ms = T::of(weights.mass_scale);
    #[rustfmt::skip]
    let out = DMatrix::from_row_slice(3, 4, &[
        z, ms * T::of(weights.omega_o), z, z,
        z, z, ms, z,
        o, z, z, -T::of(m_r_model),
    ]);
    let shaped = stacked.map_inputs(&dup)?.map_outputs(&out)?;
    let gen = shaped
        .series(&wd.append(&wc).append(&StateSpace::identity(1)))?
        .with_labels(["F_d", "n", "u"], ["p", "c", "F_hat"])?;
    WeightedLoop::new(gen)
}

/// Adds the outer tank-velocity loop around the control input of `lp`: the
/// command reaching the plant becomes `u + y` with `v' = u + y` and
/// `y' = bw (-gain v - y)`.
pub fn with_outer_loop<T: Scalar>(lp: &WeightedLoop<T>, outer: &OuterLoop) -> Result<WeightedLoop<T>> {
    let gen = lp.generalized();
    let (m, p) = (gen.n_inputs(), gen.n_outputs());
    let (z, o) = (T::zero(), T::one());
    let bw = T::of(outer.bandwidth);
    let block = StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[z, z, -bw * T::of(outer.gain), -bw]),
        DMatrix::from_row_slice(2, 1, &[o, z]),
        DMatrix::from_row_slice(1, 2, &[z, o]),
        DMatrix::zeros(1, 1),
    )?;
    let mut k = DMatrix::zeros(m + 1, p + 1);
    k[(m - 1, p)] = o;
    k[(m, p)] = o;
    let mut e = DMatrix::zeros(m + 1, m);
    for i in 0..m {
        e[(i, i)] = o;
    }
    e[(m, m - 1)] = o;
    let closed = gen
        .append(&block)
        .feedback_static(&k)?
        .map_inputs(&e)?
        .select_outputs(&(0..p).collect::<Vec<_>>())?;
    WeightedLoop::new(closed)
}

/// Parameters of the notch-plus-two-lowpass controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    #[serde(rename = "V")]
    pub v: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub omega_n: f64,
    pub omega_1: f64,
    pub omega_2: f64,
}

/// Controller poles must have real part at most this (rad/s).
pub const POLE_EPS: f64 = 0.05;

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() {
            return Err(param("V must be finite"));
        }
        for (name, z) in [("zeta1", self.zeta1), ("zeta2", self.zeta2)] {
            if !(z > 0.0 && z <= 2.0) {
                return Err(param(format!("{name} = {z} must lie in (0, 2]")));
            }
        }
        for (name, w) in [("omega_n", self.omega_n), ("omega_1", self.omega_1), ("omega_2", self.omega_2)] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(param(format!("{name} must be positive, got {w}")));
            }
        }
        if self.max_pole_real() > -POLE_EPS {
            return Err(param(format!("controller pole real part {} exceeds -{POLE_EPS}", self.max_pole_real())));
        }
        Ok(())
    }

    /// Largest real part among the four controller poles.
    pub fn max_pole_real(&self) -> f64 {
        let wn = self.omega_n;
        let z = self.zeta2;
        let notch = if z < 1.0 { -z * wn } else { -wn * (z - (z * z - 1.0).sqrt()) };
        notch.max(-self.omega_1).max(-self.omega_2)
    }

    /// Smallest damping ratio among the controller poles.
    pub fn min_pole_damping(&self) -> f64 {
        self.zeta2.min(1.0)
    }

    pub fn to_vec(&self) -> [f64; 6] {
        [self.v, self.zeta1, self.zeta2, self.omega_n, self.omega_1, self.omega_2]
    }

    pub fn from_vec(v: &[f64; 6]) -> Self {
        Self { v: v[0], zeta1: v[1], zeta2: v[2], omega_n: v[3], omega_1: v[4], omega_2: v[5] }
    }

    /// Hand-tuned low-order reference controller for a slosh mode at `omega_o`
    /// with slosh mass `m_s`.
    pub fn reference(omega_o: f64, m_s: f64) -> Self {
        Self {
            v: -0.525 / m_s,
            zeta1: 1.0,
            zeta2: 1.0,
            omega_n: 0.375 * omega_o,
            omega_1: 0.952 * omega_o,
            omega_2: 8.52 * omega_o,
        }
    }
}

/// Realizes `V (s^2 + 2 z1 wn s + wn^2)/(s^2 + 2 z2 wn s + wn^2) * w1/(s+w1) * w2/(s+w2)`.
pub fn build_controller<T: Scalar>(p: &ControllerParams) -> Result<StateSpace<T>> {
    p.validate()?;
    let wn = p.omega_n;
    let notch = StateSpace::from_rows(
        2,
        1,
        1,
        &[0.0, 1.0, -wn * wn, -2.0 * p.zeta2 * wn],
        &[0.0, 1.0],
        &[0.0, 2.0 * (p.zeta1 - p.zeta2) * wn * p.v],
        &[p.v],
    )?;
    notch
        .series(&StateSpace::lowpass(T::of(p.omega_1))?)?
        .series(&StateSpace::lowpass(T::of(p.omega_2))?)?
        .with_labels(["F_hat"], ["xdd_cmd"])
}

/// Precomputed weighted loops for a sample list.
#[derive(Debug, Clone)]
pub struct CostEvaluator {
    loops: Vec<WeightedLoop<f64>>,
    grid: FreqGrid<f64>,
}

/// Per-controller outcome over all samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Worst weighted H-infinity norm (`+inf` if any closure is unstable).
    pub cost: f64,
    /// Largest spectral abscissa over all closures.
    pub abscissa: f64,
}

impl CostEvaluator {
    pub fn new(samples: &[PlantSample], weights: &WeightSpec, model: &LoopModel) -> Result<Self> {
        if samples.is_empty() {
            return Err(param("at least one plant sample is required"));
        }
        let loops = samples
            .iter()
            .map(|s| weighted_loop(s, model, weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { loops, grid: FreqGrid::around(weights.omega_o)? })
    }

    pub fn loops(&self) -> &[WeightedLoop<f64>] {
        &self.loops
    }

    pub fn evaluate(&self, ctrl: &StateSpace<f64>) -> CostReport {
        let per: Vec<(f64, f64)> = self
            .loops
            .par_iter()
            .map(|lp| match close_loop(lp, ctrl) {
                Ok(cl) => {
                    let sa = spectral_abscissa(&cl);
                    let h = if sa < 0.0 { hinf_norm(&cl, &self.grid, HINF_TOL) } else { f64::INFINITY };
                    (h, sa)
                }
                Err(_) => (f64::INFINITY, f64::INFINITY),
            })
            .collect();
        per.iter().fold(CostReport { cost: 0.0, abscissa: f64::NEG_INFINITY }, |acc, &(h, sa)| CostReport {
            cost: acc.cost.max(h),
            abscissa: acc.abscissa.max(sa),
        })
    }
}

/// Worst weighted closed-loop H-infinity norm over `samples`; `+inf` when a
/// closure is unstable or the controller is invalid.
pub fn worst_case_cost(
    p: &ControllerParams,
    samples: &[PlantSample],
    weights: &WeightSpec,
    model: &LoopModel,
) -> f64 {
    let Ok(ctrl) = build_controller::<f64>(p) else {
        return f64::INFINITY;
    };
    match CostEvaluator::new(samples, weights, model) {
        Ok(ev) => ev.evaluate(&ctrl).cost,
        Err(_) => f64::INFINITY,
    }
}

/// Weight and classification of one shaping requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub weight: f64,
    pub hard: bool,
}

impl Requirement {
    pub const fn soft(weight: f64) -> Self {
        Self { weight, hard: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSpec {
    /// Target interval for the nominal loop crossover (rad/s).
    pub crossover_band: [f64; 2],
    /// Allowed log-log slope of the loop gain at crossover.
    pub slope_band: [f64; 2],
    /// Controller poles: maximum real part and minimum damping ratio.
    pub pole_max_real: f64,
    pub pole_min_damping: f64,
    /// Every sampled closure must decay at least this fast (rad/s).
    pub min_decay: f64,
    /// Decay rate required of the nominal closure, relative to `omega_o`.
    pub nominal_decay: f64,
    /// Above this frequency the controller must fall by at least 40 dB/dec.
    pub rolloff_freq: f64,
    pub reference_impulse: Option<Vec<f64>>,
    pub impulse_dt: f64,
    pub decay: Requirement,
    pub crossover: Requirement,
    pub slope: Requirement,
    pub rolloff: Requirement,
    pub impulse: Requirement,
    pub starts: usize,
    pub max_evals: usize,
    pub initial_mesh: f64,
    pub min_mesh: f64,
    pub seed: u64,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self::for_weights(&WeightSpec::default())
    }
}

impl TuneSpec {
    pub fn for_weights(w: &WeightSpec) -> Self {
        let wo = w.omega_o;
        let impulse_dt = 0.01;
        let reference = ControllerParams::reference(wo, w.mass_scale);
        Self {
            crossover_band: [wo, 3.0 * wo],
            slope_band: [-3.0, -0.5],
            pole_max_real: -POLE_EPS,
            pole_min_damping: 0.1,
            min_decay: 0.05,
            nominal_decay: 0.15,
            rolloff_freq: w.omega_c(),
            reference_impulse: impulse_response(&reference, impulse_dt, 300).ok(),
            impulse_dt,
            decay: Requirement { weight: 1.0, hard: true },
            crossover: Requirement::soft(1.0),
            slope: Requirement::soft(0.01),
            rolloff: Requirement::soft(1.0),
            impulse: Requirement::soft(0.02),
            starts: 8,
            max_evals: 400,
            initial_mesh: 0.4,
            min_mesh: 2e-3,
            seed: 0,
        }
    }

    pub fn validate(&self, omega_o: f64, omega_c: f64) -> Result<()> {
        let [lo, hi] = self.crossover_band;
        if !(lo > omega_o / 4.0 && hi < omega_c && lo < hi) {
            return Err(param(format!(
                "crossover band [{lo}, {hi}] must lie inside ({}, {omega_c})",
                omega_o / 4.0
            )));
        }
        if self.starts == 0 || self.max_evals == 0 {
            return Err(param("tuning needs at least one start and one evaluation"));
        }
        if !(self.initial_mesh > self.min_mesh && self.min_mesh > 0.0) {
            return Err(param("mesh sizes must satisfy 0 < min_mesh < initial_mesh"));
        }
        if !(self.impulse_dt > 0.0) {
            return Err(param("impulse_dt must be positive"));
        }
        Ok(())
    }
}

/// Samples of the controller impulse response `C e^{A t} B` at `k dt`.
pub fn impulse_response(p: &ControllerParams, dt: f64, n: usize) -> Result<Vec<f64>> {
    let sys = build_controller::<f64>(p)?;
    let disc = sys.discretize_zoh(dt)?;
    let mut x = sys.b().column(0).into_owned();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push((sys.c() * &x)[(0, 0)]);
        x = disc.a() * x;
    }
    Ok(out)
}

/// Highest frequency at which the nominal loop gain crosses unity from
/// above, with the log-log slope there.
pub fn loop_crossover(lp: &WeightedLoop<f64>, ctrl: &StateSpace<f64>, grid: &FreqGrid<f64>) -> Option<(f64, f64)> {
    let g = lp.generalized();
    let n_in = g.n_inputs();
    let n_out = g.n_outputs();
    let pu = g.select_inputs(&[n_in - 1]).ok()?.select_outputs(&[n_out - 1]).ok()?;
    let ep = FrequencyEvaluator::new(&pu);
    let ec = FrequencyEvaluator::new(ctrl);
    let gain = |w: f64| -> Option<f64> {
        let a = ep.eval(w).ok()?[(0, 0)];
        let b = ec.eval(w).ok()?[(0, 0)];
        Some((a * b).norm())
    };
    let pts = grid.points();
    let vals: Vec<f64> = pts.iter().map(|&w| gain(w)).collect::<Option<Vec<_>>>()?;
    let i = (0..pts.len() - 1).rev().find(|&i| vals[i] >= 1.0 && vals[i + 1] < 1.0)?;
    let (l0, l1) = (vals[i].ln(), vals[i + 1].ln());
    let (w0, w1) = (pts[i].ln(), pts[i + 1].ln());
    let slope = (l1 - l0) / (w1 - w0);
    let wc = (w0 - l0 / slope).exp();
    Some((wc, slope))
}

/// Decomposed objective of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub cost: f64,
    pub feasible: bool,
}

struct Problem<'a> {
    eval: CostEvaluator,
    nominal: WeightedLoop<f64>,
    spec: &'a TuneSpec,
    grid: FreqGrid<f64>,
    omega_o: f64,
    v_scale: f64,
}

impl Problem<'_> {
    fn params(&self, x: &[f64; 6]) -> ControllerParams {
        ControllerParams {
            v: x[0] * self.v_scale,
            zeta1: x[1].exp(),
            zeta2: x[2].exp(),
            omega_n: x[3].exp(),
            omega_1: x[4].exp(),
            omega_2: x[5].exp(),
        }
    }

    fn coords(&self, p: &ControllerParams) -> [f64; 6] {
        [p.v / self.v_scale, p.zeta1.ln(), p.zeta2.ln(), p.omega_n.ln(), p.omega_1.ln(), p.omega_2.ln()]
    }

    fn project(&self, x: &mut [f64; 6]) {
        let (wlo, whi) = ((self.omega_o / 100.0).ln(), (self.omega_o * 100.0).ln());
        for z in &mut x[1..3] {
            *z = z.clamp(0.05f64.ln(), 2.0f64.ln());
        }
        for w in &mut x[3..6] {
            *w = w.clamp(wlo, whi);
        }
    }

    fn evaluate(&self, p: &ControllerParams) -> Evaluation {
        let spec = self.spec;
        let infeasible = |excess: f64| Evaluation { objective: INFEASIBLE + excess.min(1e5), cost: f64::INFINITY, feasible: false };
        let pole_excess = (p.max_pole_real() - spec.pole_max_real).max(0.0)
            + (spec.pole_min_damping - p.min_pole_damping()).max(0.0);
        if pole_excess > 0.0 {
            return infeasible(pole_excess);
        }
        let Ok(ctrl) = build_controller::<f64>(p) else {
            return infeasible(1e4);
        };
        let report = self.eval.evaluate(&ctrl);
        let decay_excess = report.abscissa + spec.min_decay;
        if decay_excess > 0.0 || !report.cost.is_finite() {
            return infeasible(decay_excess.max(0.0).min(1e4) + if report.cost.is_finite() { 0.0 } else { 1.0 });
        }

        let mut penalty = 0.0;
        let mut hard_violation = 0.0;
        let mut add = |req: &Requirement, v: f64| {
            if v > 0.0 {
                if req.hard {
                    hard_violation += v;
                } else {
                    penalty += req.weight * v;
                }
            }
        };
        if let Ok(cl) = close_loop(&self.nominal, &ctrl) {
            add(&spec.decay, (spectral_abscissa(&cl) + spec.nominal_decay * self.omega_o).max(0.0));
        }
        match loop_crossover(&self.nominal, &ctrl, &self.grid) {
            Some((wc, slope)) => {
                let [lo, hi] = spec.crossover_band;
                add(&spec.crossover, (lo / wc).ln().max(0.0) + (wc / hi).ln().max(0.0));
                let [slo, shi] = spec.slope_band;
                add(&spec.slope, (slo - slope).max(0.0) + (slope - shi).max(0.0));
            }
            None => add(&spec.crossover, 1.0),
        }
        // two lowpass corners below the roll-off frequency give -40 dB/dec above it
        let wr = spec.rolloff_freq;
        add(&spec.rolloff, (p.omega_1 / wr).ln().max(0.0) + (p.omega_2 / wr).ln().max(0.0));
        if let Some(reference) = &spec.reference_impulse {
            if let Ok(h) = impulse_response(p, spec.impulse_dt, reference.len()) {
                let num: f64 = h.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
                let den: f64 = reference.iter().map(|b| b * b).sum::<f64>().max(f64::MIN_POSITIVE);
                add(&spec.impulse, num / den);
            }
        }
        if hard_violation > 0.0 {
            return Evaluation { objective: INFEASIBLE + hard_violation, cost: report.cost, feasible: false };
        }
        Evaluation { objective: report.cost + penalty, cost: report.cost, feasible: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub start: usize,
    /// Best objective found so far over all starts up to this iteration.
    pub objective: f64,
    pub cost: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub params: ControllerParams,
    pub cost: f64,
    pub objective: f64,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
}

struct StartOutcome {
    x: [f64; 6],
    eval: Evaluation,
    trace: Vec<Evaluation>,
    evals: usize,
}

fn pattern_search(pb: &Problem, x0: [f64; 6]) -> StartOutcome {
    let spec = pb.spec;
    let mut x = x0;
    pb.project(&mut x);
    let mut fx = pb.evaluate(&pb.params(&x));
    let mut evals = 1;
    let mut h = spec.initial_mesh;
    let mut trace = vec![fx];
    while h > spec.min_mesh && evals < spec.max_evals {
        let mut improved = false;
        for i in 0..6 {
            for dir in [1.0, -1.0] {
                if evals >= spec.max_evals {
                    break;
                }
                let mut y = x;
                y[i] += dir * h;
                pb.project(&mut y);
                if y == x {
                    continue;
                }
                let fy = pb.evaluate(&pb.params(&y));
                evals += 1;
                if fy.objective < fx.objective {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
        trace.push(fx);
    }
    StartOutcome { x, eval: fx, trace, evals }
}

fn latin_hypercube(rng: &mut ChaCha8Rng, n: usize, lo: &[f64; 6], hi: &[f64; 6]) -> Vec<[f64; 6]> {
    let mut pts = vec![[0.0; 6]; n];
    for d in 0..6 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u = (s as f64 + rng.gen::<f64>()) / n as f64;
            pts[i][d] = lo[d] + u * (hi[d] - lo[d]);
        }
    }
    pts
}

/// Multi-start coordinate pattern search on the worst-case cost plus
/// requirement penalties. The first start is `init`; the others are a
/// seeded Latin hypercube around it. Loop-shape and nominal decay
/// requirements are checked on the inner loop (no outer velocity loop) of
/// `nominal` with the drive model's delay.
pub fn tune(
    init: &ControllerParams,
    spec: &TuneSpec,
    samples: &[PlantSample],
    weights: &WeightSpec,
    model: &LoopModel,
    nominal: &PlantParams<f64>,
) -> Result<TuneResult> {
    init.validate()?;
    weights.validate()?;
    spec.validate(weights.omega_o, weights.omega_c())?;
    let v_scale = if init.v != 0.0 { init.v.abs() } else { 1e-3 };
    let pb = Problem {
        eval: CostEvaluator::new(samples, weights, model)?,
        nominal: weighted_loop(&PlantSample::nominal(*nominal, model.actuation.delay_t), &LoopModel { outer: None, ..*model }, weights)?,
        spec,
        grid: FreqGrid::around(weights.omega_o)?,
        omega_o: weights.omega_o,
        v_scale,
    };

    let x0 = pb.coords(init);
    let mut starts = vec![x0];
    if spec.starts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let wo = weights.omega_o;
        let sgn = if init.v != 0.0 { init.v.signum() } else { -1.0 };
        let (vlo, vhi) = if sgn > 0.0 { (0.3, 3.0) } else { (-3.0, -0.3) };
        let lo = [vlo, 0.3f64.ln(), 0.5f64.ln(), (wo / 4.0).ln(), (wo / 2.0).ln(), (wo / 2.0).ln()];
        let hi = [vhi, 2.0f64.ln(), 2.0f64.ln(), (2.0 * wo).ln(), (4.0 * wo).ln(), (weights.omega_c() * 2.0).ln()];
        starts.extend(latin_hypercube(&mut rng, spec.starts - 1, &lo, &hi));
    }

    let outcomes: Vec<StartOutcome> = starts.par_iter().map(|&x| pattern_search(&pb, x)).collect();

    let mut history = Vec::new();
    let mut best_obj = f64::INFINITY;
    let mut best_cost = f64::INFINITY;
    let mut best_feasible = false;
    for (s, o) in outcomes.iter().enumerate() {
        for e in &o.trace {
            if e.objective < best_obj {
                best_obj = e.objective;
                best_cost = e.cost;
                best_feasible = e.feasible;
            }
            history.push(HistoryEntry {
                iteration: history.len(),
                start: s,
                objective: best_obj,
                cost: best_cost,
                feasible: best_feasible,
            });
        }
    }
    let evaluations = outcomes.iter().map(|o| o.evals).sum();

    let pick = |feasible_only: bool| {
        outcomes
            .iter()
            .filter(|o| !feasible_only || o.eval.feasible)
            .min_by(|a, b| {
                a.eval
                    .objective
                    .total_cmp(&b.eval.objective)
                    .then_with(|| a.x.iter().zip(&b.x).map(|(p, q)| p.total_cmp(q)).find(|c| c.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
            })
    };
    match pick(true) {
        Some(best) => Ok(TuneResult {
            params: pb.params(&best.x),
            cost: best.eval.cost,
            objective: best.eval.objective,
            history,
            evaluations,
        }),
        None => {
            let best = pick(false).expect("at least one start");
            Err(Error::Synthesis {
                message: "no start reached a point meeting the hard constraints".into(),
                best_objective: best.eval.objective,
                best_params: pb.params(&best.x).to_vec().to_vec(),
            })
        }
    }
}
