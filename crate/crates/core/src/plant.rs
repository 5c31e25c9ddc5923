//! Linear slosh design model: a point mass on a spring/damper inside a
//! container that is driven by the motion platform.
//!
//! State `[x_s, x_h, x_s', x_h']`, inputs `[F_d, F_h]`, outputs
//! `[F_sp, delta, delta', x_h, x_h', x_h'']` (see [`PlantOutput`]).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::lti::StateSpace;
use crate::scalar::Scalar;

/// Damping ratio above which the slosh model no longer counts as lightly damped.
pub const MAX_DAMPING_RATIO: f64 = 0.05;

/// Physical parameters of the design model (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams<T: Scalar> {
    /// Sloshing mass (kg).
    pub m_s: T,
    /// Container + moving platform + non-sloshing fluid (kg).
    pub m_r: T,
    /// Spring stiffness (N/m).
    pub k: T,
    /// Damping coefficient (N s/m).
    pub c: T,
}

impl<T: Scalar> PlantParams<T> {
    pub fn new(m_s: T, m_r: T, k: T, c: T) -> Result<Self> {
        let p = Self { m_s, m_r, k, c };
        p.validate()?;
        Ok(p)
    }

    /// 600 liter reference set: `omega_o = 4.4 rad/s`, damping ratio 0.002.
    pub fn reference() -> Self {
        Self { m_s: T::of(250.0), m_r: T::of(750.0), k: T::of(4840.0), c: T::of(4.4) }
    }

    /// Full invariant check used for configured plants.
    pub fn validate(&self) -> Result<()> {
        self.check_realizable()?;
        if !(self.k > T::zero()) {
            return Err(param(format!("k must be positive, got {}", self.k)));
        }
        let zeta = self.damping_ratio();
        if !(zeta < T::of(MAX_DAMPING_RATIO)) {
            return Err(param(format!("damping ratio {zeta} is not below {MAX_DAMPING_RATIO}")));
        }
        Ok(())
    }

    /// Weaker check: masses positive, spring and damper non-negative, all finite.
    pub fn check_realizable(&self) -> Result<()> {
        let all_finite = [self.m_s, self.m_r, self.k, self.c].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(param("plant parameters must be finite"));
        }
        if !(self.m_s > T::zero()) || !(self.m_r > T::zero()) {
            return Err(param(format!("masses must be positive (m_s = {}, m_r = {})", self.m_s, self.m_r)));
        }
        if self.k < T::zero() || self.c < T::zero() {
            return Err(param(format!("k and c must be non-negative (k = {}, c = {})", self.k, self.c)));
        }
        Ok(())
    }

    pub fn damping_ratio(&self) -> T {
        self.c / (T::of(2.0) * (self.k * self.m_s).sqrt())
    }

    /// Frequency of the coupled mode with both masses free, `sqrt(k (1/m_s + 1/m_r))`.
    pub fn coupled_frequency(&self) -> T {
        (self.k * (T::one() / self.m_s + T::one() / self.m_r)).sqrt()
    }
}

/// Output channels of [`build_plant`], in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantOutput {
    SpringForce = 0,
    RelPosition = 1,
    RelVelocity = 2,
    Position = 3,
    Velocity = 4,
    Acceleration = 5,
}

impl PlantOutput {
    pub const ALL: [PlantOutput; 6] = [
        PlantOutput::SpringForce,
        PlantOutput::RelPosition,
        PlantOutput::RelVelocity,
        PlantOutput::Position,
        PlantOutput::Velocity,
        PlantOutput::Acceleration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PlantOutput::SpringForce => "F_sp",
            PlantOutput::RelPosition => "delta",
            PlantOutput::RelVelocity => "delta_dot",
            PlantOutput::Position => "x_h",
            PlantOutput::Velocity => "x_h_dot",
            PlantOutput::Acceleration => "x_h_ddot",
        }
    }
}

/// Input channels of [`build_plant`].
pub const PLANT_INPUTS: [&str; 2] = ["F_d", "F_h"];

/// Builds the 4-state design model.
///
/// The acceleration output row uses `m_r` as the rigid mass, the same
/// quantity that multiplies the platform acceleration in the force balance.
pub fn build_plant<T: Scalar>(p: &PlantParams<T>) -> Result<StateSpace<T>> {
    p.check_realizable()?;
    let (ms, mr, k, c) = (p.m_s, p.m_r, p.k, p.c);
    let z = T::zero();
    let o = T::one();
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        z, z, o, z,
        z, z, z, o,
        -k / ms, k / ms, -c / ms, c / ms,
        k / mr, -k / mr, c / mr, -c / mr,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(4, 2, &[
        z, z,
        z, z,
        o / ms, z,
        z, o / mr,
    ]);
    #[rustfmt::skip]
    let c_mat = DMatrix::from_row_slice(6, 4, &[
        k, -k, c, -c,
        o, -o, z, z,
        z, z, o, -o,
        z, o, z, z,
        z, z, z, o,
        k / mr, -k / mr, c / mr, -c / mr,
    ]);
    let mut d = DMatrix::zeros(6, 2);
    d[(5, 1)] = o / mr;
    StateSpace::new(a, b, c_mat, d)?.with_labels(PLANT_INPUTS, PlantOutput::ALL.iter().map(|o| o.label()))
}

/// Force sensor reading: spring reaction plus rigid-body inertia force.
pub fn sensor_force<T: Scalar>(f_sp: T, xdd_h: T, p: &PlantParams<T>) -> T {
    f_sp + p.m_r * xdd_h
}

/// First slosh mode `sqrt(k / m_s)` in rad/s.
pub fn slosh_frequency<T: Scalar>(p: &PlantParams<T>) -> T {
    (p.k / p.m_s).sqrt()
}

/// Total mechanical energy for a state `[x_s, x_h, x_s', x_h']`.
pub fn mechanical_energy<T: Scalar>(p: &PlantParams<T>, x: &[T]) -> T {
    let half = T::of(0.5);
    let rel = x[0] - x[1];
    half * p.m_s * x[2] * x[2] + half * p.m_r * x[3] * x[3] + half * p.k * rel * rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::rk4_step;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn eig_abs(sys: &StateSpace<f64>) -> Vec<nalgebra::Complex<f64>> {
        let schur = nalgebra::Schur::try_new(sys.a().clone(), 1e-14, 10_000).unwrap();
        schur.complex_eigenvalues().iter().copied().collect()
    }

    #[test]
    fn uncoupled_masses_are_double_integrators() {
        let p = PlantParams { m_s: 2.0, m_r: 3.0, k: 0.0, c: 0.0 };
        let sys = build_plant(&p).unwrap();
        for e in eig_abs(&sys) {
            assert!(e.norm() < 1e-12);
        }
        // no cross terms between the two masses
        assert_eq!(sys.a()[(2, 1)], 0.0);
        assert_eq!(sys.a()[(3, 0)], 0.0);
    }

    #[test]
    fn reference_eigenvalues_match_closed_form() {
        let p = PlantParams { c: 0.0, ..PlantParams::<f64>::reference() };
        let sys = build_plant(&p).unwrap();
        let w = (4840.0f64 * (1.0 / 250.0 + 1.0 / 750.0)).sqrt();
        assert_relative_eq!(w, 5.0806, epsilon = 1e-3);
        let mut im: Vec<f64> = eig_abs(&sys).iter().map(|e| e.im.abs()).collect();
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(im[0] < 1e-6 && im[1] < 1e-6);
        assert_relative_eq!(im[3], p.coupled_frequency(), max_relative = 1e-9);
        assert_relative_eq!(im[2], p.coupled_frequency(), max_relative = 1e-9);
    }

    #[test]
    fn acceleration_feedthrough_is_inverse_rigid_mass() {
        let p = PlantParams::<f64>::reference();
        let sys = build_plant(&p).unwrap();
        assert_eq!(sys.d()[(PlantOutput::Acceleration.index(), 1)], 1.0 / 750.0);
        assert_eq!(sys.d()[(PlantOutput::Acceleration.index(), 0)], 0.0);
        assert_eq!(sys.output_labels()[2], "delta_dot");
    }

    #[test]
    fn sensor_force_examples() {
        let p = PlantParams::<f64>::reference();
        assert_eq!(sensor_force(0.0, 0.0, &p), 0.0);
        assert_relative_eq!(sensor_force(0.0, 0.1, &p), 75.0, epsilon = 1e-12);
        assert_relative_eq!(sensor_force(-50.0, 0.1, &p), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn slosh_frequency_examples() {
        assert_relative_eq!(slosh_frequency(&PlantParams::<f64>::reference()), 4.4, epsilon = 1e-12);
        let unit = PlantParams { m_s: 7.0, m_r: 1.0, k: 7.0, c: 0.0 };
        assert_relative_eq!(slosh_frequency(&unit), 1.0);
        let small = PlantParams { m_s: 1.0, m_r: 1.0, k: 19.36, c: 0.0 };
        assert_relative_eq!(slosh_frequency(&small), 4.4, epsilon = 1e-12);
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(PlantParams::new(250.0, 750.0, 4840.0, 4.4).is_ok());
        assert!(PlantParams::new(0.0, 750.0, 4840.0, 4.4).is_err());
        assert!(PlantParams::new(250.0, -1.0, 4840.0, 4.4).is_err());
        assert!(PlantParams::new(250.0, 750.0, 0.0, 0.0).is_err());
        // damping ratio 0.1
        assert!(PlantParams::new(250.0, 750.0, 4840.0, 220.0).is_err());
        assert!(build_plant(&PlantParams { m_s: 1.0, m_r: 1.0, k: -1.0, c: 0.0 }).is_err());
    }

    #[test]
    fn undamped_energy_drift_is_small_over_100s() {
        let p = PlantParams { c: 0.0, ..PlantParams::<f64>::reference() };
        let sys = build_plant(&p).unwrap();
        let u = DVector::zeros(2);
        let mut x = DVector::from_vec(vec![0.05, 0.0, 0.0, 0.01]);
        let e0 = mechanical_energy(&p, x.as_slice());
        let dt = 1e-3;
        for i in 0..100_000 {
            x = rk4_step(|_, x| sys.derivative(x, &u), i as f64 * dt, &x, dt);
        }
        let e1 = mechanical_energy(&p, x.as_slice());
        assert!(((e1 - e0) / e0).abs() < 1e-3, "drift {}", (e1 - e0) / e0);
    }

    #[test]
    fn homogeneous_under_joint_scaling() {
        let p = PlantParams::<f64>::reference();
        let alpha = 3.7;
        let q = PlantParams { m_s: alpha * p.m_s, m_r: alpha * p.m_r, k: alpha * p.k, c: alpha * p.c };
        let s1 = build_plant(&p).unwrap();
        let s2 = build_plant(&q).unwrap();
        // same motion for forces scaled by alpha: A identical, B scaled by 1/alpha
        assert!((s1.a() - s2.a()).norm() < 1e-12);
        assert!((s1.b() - s2.b() * alpha).norm() < 1e-15);
        for out in [PlantOutput::RelPosition, PlantOutput::RelVelocity, PlantOutput::Position] {
            let r = out.index();
            assert!((s1.c().row(r) - s2.c().row(r)).norm() < 1e-12);
        }
    }

    #[test]
    fn generic_over_f32() {
        let p = PlantParams::<f32>::reference();
        let sys = build_plant(&p).unwrap();
        assert_eq!(sys.n_states(), 4);
        assert!((slosh_frequency(&p) - 4.4).abs() < 1e-5);
    }
}
