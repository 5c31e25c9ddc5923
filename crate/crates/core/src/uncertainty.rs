//! Structured uncertainty set and its sampled realizations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::ActuationChain;
use crate::error::{param, Error, Result};
use crate::lti::StateSpace;
use crate::plant::{build_plant, PlantOutput, PlantParams};
use crate::scalar::Scalar;

pub const PADE_ORDER: usize = 2;

/// Labels of the assembled open loop.
pub const LOOP_INPUTS: [&str; 3] = ["xdd_cmd", "F_d", "n"];
pub const LOOP_OUTPUTS: [&str; 3] = ["F_s_meas", "delta_dot", "xdd_cmd_out"];

/// Crossover range of the all-pass perturbations (rad/s).
const PERT_CROSSOVER: (f64, f64) = (1.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySpec {
    pub k_rel: f64,
    pub mr_rel: f64,
    pub act_mult_radius: f64,
    pub sens_mult_radius: f64,
    pub delay_range: [f64; 2],
    pub pade_order: usize,
}

impl Default for UncertaintySpec {
    fn default() -> Self {
        Self {
            k_rel: 0.2,
            mr_rel: 0.2,
            act_mult_radius: 0.1,
            sens_mult_radius: 0.1,
            delay_range: [0.01, 0.06],
            pade_order: PADE_ORDER,
        }
    }
}

impl UncertaintySpec {
    /// The nominal plant only: every bound collapsed onto `delay`.
    pub fn nominal(delay: f64) -> Self {
        Self {
            k_rel: 0.0,
            mr_rel: 0.0,
            act_mult_radius: 0.0,
            sens_mult_radius: 0.0,
            delay_range: [delay, delay],
            pade_order: PADE_ORDER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_rel", self.k_rel),
            ("mr_rel", self.mr_rel),
            ("act_mult_radius", self.act_mult_radius),
            ("sens_mult_radius", self.sens_mult_radius),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(param(format!("{name} = {v} must lie in [0, 1)")));
            }
        }
        let [lo, hi] = self.delay_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(param(format!("delay range [{lo}, {hi}] must satisfy 0 <= T_min <= T_max")));
        }
        if self.pade_order != PADE_ORDER {
            return Err(param(format!("pade_order must be {PADE_ORDER}, got {}", self.pade_order)));
        }
        Ok(())
    }

    /// Scales every bound by `x`; the delay interval is scaled about its midpoint.
    pub fn scaled(&self, x: f64) -> Result<Self> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(param(format!("uncertainty scale {x} must be finite and non-negative")));
        }
        let mid = 0.5 * (self.delay_range[0] + self.delay_range[1]);
        let half = 0.5 * (self.delay_range[1] - self.delay_range[0]) * x;
        let out = Self {
            k_rel: self.k_rel * x,
            mr_rel: self.mr_rel * x,
            act_mult_radius: self.act_mult_radius * x,
            sens_mult_radius: self.sens_mult_radius * x,
            delay_range: [(mid - half).max(0.0), mid + half],
            pade_order: self.pade_order,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Multiplicative perturbation `1 + r sgn (s - p)/(s + p)` with `|delta(jw)| = r`
/// at every frequency and a phase that sweeps through `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub radius: f64,
    /// `+1` or `-1`.
    pub sign: f64,
    pub crossover: f64,
}

impl Perturbation {
    pub fn none() -> Self {
        Self { radius: 0.0, sign: 1.0, crossover: 1.0 }
    }

    pub fn system<T: Scalar>(&self) -> Result<StateSpace<T>> {
        if self.radius == 0.0 {
            return Ok(StateSpace::identity(1));
        }
        if !(self.crossover > 0.0) {
            return Err(param("perturbation crossover must be positive"));
        }
        let g = self.radius * self.sign;
        let p = self.crossover;
        StateSpace::from_rows(1, 1, 1, &[-p], &[1.0], &[-2.0 * p * g], &[1.0 + g])
    }
}

/// One concrete plant and actuation realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    pub params: PlantParams<f64>,
    pub delay_t: f64,
    pub act_gain_pert: Perturbation,
    pub sens_gain_pert: Perturbation,
    pub seed_tag: u64,
}

impl PlantSample {
    pub fn nominal(params: PlantParams<f64>, delay_t: f64) -> Self {
        Self {
            params,
            delay_t,
            act_gain_pert: Perturbation::none(),
            sens_gain_pert: Perturbation::none(),
            seed_tag: 0,
        }
    }
}

/// Second-order Pade approximant of `exp(-sT)`.
pub fn pade2<T: Scalar>(delay: T) -> Result<StateSpace<T>> {
    if !(delay >= T::zero()) || !delay.is_finite() {
        return Err(param(format!("delay must be non-negative, got {delay}")));
    }
    if delay == T::zero() {
        return Ok(StateSpace::identity(1));
    }
    let a1 = T::of(6.0) / delay;
    let a0 = T::of(12.0) / (delay * delay);
    let z = T::zero();
    let o = T::one();
    StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[z, o, -a0, -a1]),
        DMatrix::from_row_slice(2, 1, &[z, o]),
        DMatrix::from_row_slice(1, 2, &[z, -(a1 + a1)]),
        DMatrix::from_element(1, 1, o),
    )
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn draw_perturbation(rng: &mut ChaCha8Rng, radius: f64) -> Perturbation {
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let (lo, hi) = PERT_CROSSOVER;
    let u: f64 = rng.gen();
    let crossover = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
    if radius == 0.0 {
        Perturbation::none()
    } else {
        Perturbation { radius, sign, crossover }
    }
}

/// Draws `n` realizations: the eight corners of the real-parameter box
/// first (k outermost, delay innermost), then Halton interior points with a
/// seeded rotation. Perturbations sit on their boundary circles.
pub fn sample(spec: &UncertaintySpec, nominal: &PlantParams<f64>, n: usize, seed: u64) -> Vec<PlantSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let [t_lo, t_hi] = spec.delay_range;
    let realize = |uk: f64, um: f64, ut: f64| {
        let k = nominal.k * (1.0 - spec.k_rel + 2.0 * spec.k_rel * uk);
        let m_r = nominal.m_r * (1.0 - spec.mr_rel + 2.0 * spec.mr_rel * um);
        let params = PlantParams { m_s: nominal.m_s, m_r, k, c: nominal.c };
        (params, t_lo + (t_hi - t_lo) * ut)
    };

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (params, delay_t) = if i < 8 {
            let bit = |b: usize| ((i >> b) & 1) as f64;
            realize(bit(2), bit(1), bit(0))
        } else {
            let j = (i - 7) as u64;
            let u = [radical_inverse(j, 2), radical_inverse(j, 3), radical_inverse(j, 5)];
            let w = |d: usize| (u[d] + shift[d]).fract();
            realize(w(0), w(1), w(2))
        };
        out.push(PlantSample {
            params,
            delay_t,
            act_gain_pert: draw_perturbation(&mut rng, spec.act_mult_radius),
            sens_gain_pert: draw_perturbation(&mut rng, spec.sens_mult_radius),
            seed_tag: i as u64,
        });
    }
    out
}

/// Open loop from `[xdd_cmd, F_d, n]` to `[F_s_meas, delta_dot, xdd_cmd_out]`.
///
/// The drive is kinematic: the platform force is whatever makes the tank
/// follow the delivered acceleration, so the rigid tank position and velocity
/// drop out and only the relative slosh coordinates remain.
pub fn assemble_loop<T: Scalar>(samp: &PlantSample, actuation: &ActuationChain) -> Result<StateSpace<T>> {
    actuation.validate()?;
    let p = &samp.params;
    let params = PlantParams { m_s: T::of(p.m_s), m_r: T::of(p.m_r), k: T::of(p.k), c: T::of(p.c) };
    let plant = build_plant(&params)?;
    let (z, o) = (T::zero(), T::one());
    let m_r = params.m_r;

    // inputs [F_d, a] with F_h = m_r a - F_sp; the loop closes in the a channel
    let drive_in = DMatrix::from_row_slice(2, 2, &[o, z, z, m_r]);
    let mut fb = DMatrix::zeros(2, 6);
    fb[(1, PlantOutput::SpringForce.index())] = -o / m_r;
    let driven = plant.map_inputs(&drive_in)?.feedback_static(&fb)?;

    #[rustfmt::skip]
    let to_delta = DMatrix::from_row_slice(4, 4, &[
        o, -o, z, z,
        z, o, z, z,
        z, z, o, -o,
        z, z, z, o,
    ]);
    let mut pick = DMatrix::zeros(2, 6);
    pick[(0, PlantOutput::SpringForce.index())] = o;
    pick[(0, PlantOutput::Acceleration.index())] = m_r;
    pick[(1, PlantOutput::RelVelocity.index())] = o;
    // outputs [F_s, delta_dot]
    let core = driven
        .map_outputs(&pick)?
        .transformed(&to_delta)?
        .pruned(T::of(1e-12));
    if core.n_states() != 2 {
        return Err(Error::Interconnection(format!(
            "kinematic reduction left {} states, expected 2",
            core.n_states()
        )));
    }

    let act = StateSpace::lowpass_or_unity(actuation.lowpass_corner.map(T::of))?.series(&samp.act_gain_pert.system()?)?;
    let sens = StateSpace::lowpass_or_unity(actuation.sensor_corner.map(T::of))?
        .series(&pade2(T::of(samp.delay_t))?)?
        .series(&samp.sens_gain_pert.system()?)?;

    // [xdd_cmd, F_d] -> [F_d, a] -> [F_s, delta_dot]
    let swap = DMatrix::from_row_slice(2, 2, &[z, o, o, z]);
    let front = act
        .append(&StateSpace::identity(1))
        .map_outputs(&swap)?
        .series(&core)?;

    // inputs [xdd_cmd, F_d, n, xdd_cmd]; outputs [F_s + n, delta_dot, xdd_cmd]
    let widened = front.append(&StateSpace::identity(2));
    #[rustfmt::skip]
    let dup = DMatrix::from_row_slice(4, 3, &[
        o, z, z,
        z, o, z,
        z, z, o,
        o, z, z,
    ]);
    #[rustfmt::skip]
    let sum = DMatrix::from_row_slice(3, 4, &[
        o, z, o, z,
        z, o, z, z,
        z, z, z, o,
    ]);
    let summed = widened.map_inputs(&dup)?.map_outputs(&sum)?;
    summed
        .series(&sens.append(&StateSpace::identity(2)))?
        .with_labels(LOOP_INPUTS, LOOP_OUTPUTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::evalfr;
    use crate::scalar::Complex;
    use approx::assert_relative_eq;

    type C = Complex<f64>;

    fn lp(w: f64, corner: Option<f64>) -> C {
        match corner {
            Some(g) => C::new(g, 0.0) / C::new(g, w),
            None => C::new(1.0, 0.0),
        }
    }

    fn pert(w: f64, p: &Perturbation) -> C {
        if p.radius == 0.0 {
            return C::new(1.0, 0.0);
        }
        let s = C::new(0.0, w);
        C::new(1.0, 0.0) + (s - p.crossover) / (s + p.crossover) * (p.radius * p.sign)
    }

    fn pade(w: f64, t: f64) -> C {
        let st = C::new(0.0, w * t);
        (C::new(1.0, 0.0) - st / 2.0 + st * st / 12.0) / (C::new(1.0, 0.0) + st / 2.0 + st * st / 12.0)
    }

    /// Transfer matrix written directly from the force balance in relative
    /// coordinates, independent of the state-space plumbing.
    fn oracle(s: &PlantSample, act: &ActuationChain, w: f64) -> [[C; 3]; 3] {
        let p = &s.params;
        let jw = C::new(0.0, w);
        let one = C::new(1.0, 0.0);
        let zero = C::new(0.0, 0.0);
        let a_per_cmd = lp(w, act.lowpass_corner) * pert(w, &s.act_gain_pert);
        let den = jw * jw + jw * (p.c / p.m_s) + p.k / p.m_s;
        // delta = (F_d / m_s - a) / den
        let delta_fd = one / den / p.m_s;
        let delta_a = -one / den;
        let fsp = |d: C| d * (jw * p.c + p.k);
        let sens = lp(w, act.sensor_corner) * pade(w, s.delay_t) * pert(w, &s.sens_gain_pert);
        let fs_cmd = (fsp(delta_a) + p.m_r) * a_per_cmd * sens;
        let fs_fd = fsp(delta_fd) * sens;
        [
            [fs_cmd, fs_fd, sens],
            [jw * delta_a * a_per_cmd, jw * delta_fd, zero],
            [one, zero, zero],
        ]
    }

    #[test]
    fn pade_is_all_pass_with_small_phase_error() {
        let sys = pade2::<f64>(0.05).unwrap();
        let g = evalfr(&sys, 4.4).unwrap()[(0, 0)];
        assert_relative_eq!(g.norm(), 1.0, epsilon = 1e-12);
        assert!((g.arg() + 0.22).abs() < 1e-4);
        for t in [0.01, 0.06, 0.5] {
            let sys = pade2::<f64>(t).unwrap();
            for wt in [0.05, 0.3, 0.7, 1.0] {
                let g = evalfr(&sys, wt / t).unwrap()[(0, 0)];
                assert_relative_eq!(g.norm(), 1.0, epsilon = 1e-12);
                assert!((g.arg() + wt).abs() < 0.01 * wt, "wT = {wt}");
            }
        }
        assert_eq!(pade2::<f64>(0.0).unwrap().n_states(), 0);
        assert!(pade2::<f64>(-0.01).is_err());
    }

    #[test]
    fn perturbation_has_constant_magnitude() {
        let p = Perturbation { radius: 0.1, sign: -1.0, crossover: 7.0 };
        let sys: StateSpace<f64> = p.system().unwrap();
        for w in [0.01, 1.0, 7.0, 50.0, 1e4] {
            let g = evalfr(&sys, w).unwrap()[(0, 0)] - 1.0;
            assert_relative_eq!(g.norm(), 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn vertices_come_first_in_fixed_order() {
        let spec = UncertaintySpec::default();
        let nom = PlantParams::reference();
        let s = sample(&spec, &nom, 8, 3);
        assert_eq!(s.len(), 8);
        assert_relative_eq!(s[0].params.k, 0.8 * nom.k);
        assert_relative_eq!(s[0].params.m_r, 0.8 * nom.m_r);
        assert_eq!(s[0].delay_t, 0.01);
        assert_eq!(s[1].delay_t, 0.06);
        assert_relative_eq!(s[2].params.m_r, 1.2 * nom.m_r);
        assert_relative_eq!(s[4].params.k, 1.2 * nom.k);
        let one = sample(&spec, &nom, 1, 99);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].params, s[0].params);
    }

    #[test]
    fn interior_points_respect_bounds_and_are_reproducible() {
        let spec = UncertaintySpec::default();
        let nom = PlantParams::reference();
        let a = sample(&spec, &nom, 58, 11);
        let b = sample(&spec, &nom, 58, 11);
        assert_eq!(a, b);
        for s in &a {
            assert!(s.params.k >= 0.8 * nom.k - 1e-9 && s.params.k <= 1.2 * nom.k + 1e-9);
            assert!(s.params.m_r >= 0.8 * nom.m_r - 1e-9 && s.params.m_r <= 1.2 * nom.m_r + 1e-9);
            assert!((0.01..=0.06).contains(&s.delay_t));
            assert_eq!(s.act_gain_pert.radius, 0.1);
        }
        assert_ne!(sample(&spec, &nom, 20, 12)[10], a[10]);
    }

    #[test]
    fn degenerate_set_repeats_the_nominal_plant() {
        let nom = PlantParams::reference();
        let s = sample(&UncertaintySpec::nominal(0.03), &nom, 12, 0);
        assert!(s.iter().all(|x| x.params == nom && x.delay_t == 0.03));
    }

    #[test]
    fn spec_validation() {
        assert!(UncertaintySpec::default().validate().is_ok());
        let mut s = UncertaintySpec::default();
        s.act_mult_radius = 1.0;
        assert!(s.validate().is_err());
        s = UncertaintySpec::default();
        s.delay_range = [0.05, 0.01];
        assert!(s.validate().is_err());
        s = UncertaintySpec::default();
        s.pade_order = 3;
        assert!(s.validate().is_err());
        assert!(UncertaintySpec::default().scaled(6.0).is_err());
        let half = UncertaintySpec::default().scaled(0.5).unwrap();
        assert_relative_eq!(half.k_rel, 0.1);
        assert_relative_eq!(half.delay_range[0], 0.0225);
    }

    #[test]
    fn assembled_loop_matches_direct_transfer_functions() {
        let spec = UncertaintySpec::default();
        let nom = PlantParams::reference();
        let chain = ActuationChain::default();
        let grid = crate::freq::FreqGrid::log(0.05, 500.0, 50).unwrap();
        for s in sample(&spec, &nom, 12, 5) {
            let sys = assemble_loop::<f64>(&s, &chain).unwrap();
            assert_eq!(sys.n_inputs(), 3);
            assert_eq!(sys.n_outputs(), 3);
            for &w in grid.points() {
                let g = evalfr(&sys, w).unwrap();
                let o = oracle(&s, &chain, w);
                for r in 0..3 {
                    for c in 0..3 {
                        let err = (g[(r, c)] - o[r][c]).norm();
                        assert!(err <= 1e-9 * (1.0 + o[r][c].norm()), "({r},{c}) at w = {w}: {err}");
                    }
                }
            }
        }
    }

    #[test]
    fn ideal_chain_passes_acceleration_through() {
        let s = PlantSample::nominal(PlantParams::reference(), 0.0);
        let sys = assemble_loop::<f64>(&s, &ActuationChain::ideal()).unwrap();
        assert_eq!(sys.n_states(), 2);
        // instantaneous sensor jump of m_r per unit commanded acceleration
        assert_relative_eq!(sys.d()[(0, 0)], 750.0, max_relative = 1e-12);
        assert_eq!(sys.d()[(2, 0)], 1.0);
    }

    #[test]
    fn static_deflection_is_inverse_stiffness() {
        let s = PlantSample::nominal(PlantParams::reference(), 0.035);
        let sys = assemble_loop::<f64>(&s, &ActuationChain::default()).unwrap();
        let w = 1e-5;
        let rate = evalfr(&sys, w).unwrap()[(1, 1)];
        let delta = rate / C::new(0.0, w);
        assert_relative_eq!(delta.re, 1.0 / 4840.0, max_relative = 1e-6);
    }
}
