//! Fixed-step integrators.

use nalgebra::DVector;

use crate::scalar::Scalar;

/// One classical Runge-Kutta step of `x' = f(t, x)`.
pub fn rk4_step<T, F>(mut f: F, t: T, x: &DVector<T>, dt: T) -> DVector<T>
where
    T: Scalar,
    F: FnMut(T, &DVector<T>) -> DVector<T>,
{
    let half = dt * T::of(0.5);
    let k1 = f(t, x);
    let k2 = f(t + half, &(x + &k1 * half));
    let k3 = f(t + half, &(x + &k2 * half));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + (k2 + k3) * T::of(2.0) + k4) * (dt / T::of(6.0))
}
