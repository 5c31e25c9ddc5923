//! Real-matrix LTI systems and the interconnection algebra used to build
//! plants, weights, controllers and closed loops.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim, param, Error, Result};
use crate::scalar::Scalar;

/// Continuous-time state-space system `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Scalar> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl<T: Scalar> StateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(dim(format!("A must be square, got {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(dim(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(dim(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(dim(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        let (m, p) = (b.ncols(), c.nrows());
        Ok(Self {
            a,
            b,
            c,
            d,
            input_labels: default_labels("u", m),
            output_labels: default_labels("y", p),
        })
    }

    /// Builds from row-major slices; handy for small hand-written systems.
    pub fn from_rows(n: usize, m: usize, p: usize, a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Self> {
        let conv = |r: usize, k: usize, v: &[f64], what: &str| -> Result<DMatrix<T>> {
            if v.len() != r * k {
                return Err(dim(format!("{what}: expected {} entries, got {}", r * k, v.len())));
            }
            Ok(DMatrix::from_row_iterator(r, k, v.iter().map(|&x| T::of(x))))
        };
        Self::new(conv(n, n, a, "A")?, conv(n, m, b, "B")?, conv(p, n, c, "C")?, conv(p, m, d, "D")?)
    }

    /// Static gain matrix without states.
    pub fn gain(d: DMatrix<T>) -> Self {
        let (p, m) = d.shape();
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d)
            .expect("static gain is always consistent")
    }

    pub fn identity(m: usize) -> Self {
        Self::gain(DMatrix::identity(m, m))
    }

    /// First-order lowpass `w/(s+w)`.
    pub fn lowpass(corner: T) -> Result<Self> {
        if !(corner > T::zero()) || !corner.is_finite() {
            return Err(param(format!("lowpass corner must be positive and finite, got {corner}")));
        }
        Self::new(
            DMatrix::from_element(1, 1, -corner),
            DMatrix::from_element(1, 1, corner),
            DMatrix::from_element(1, 1, T::one()),
            DMatrix::zeros(1, 1),
        )
    }

    /// Lowpass when a corner is given, unity passthrough otherwise.
    pub fn lowpass_or_unity(corner: Option<T>) -> Result<Self> {
        match corner {
            Some(w) => Self::lowpass(w),
            None => Ok(Self::identity(1)),
        }
    }

    pub fn with_labels<I, O>(mut self, inputs: I, outputs: O) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        let inputs: Vec<String> = inputs.into_iter().map(Into::into).collect();
        let outputs: Vec<String> = outputs.into_iter().map(Into::into).collect();
        if inputs.len() != self.n_inputs() || outputs.len() != self.n_outputs() {
            return Err(dim(format!(
                "labels {}/{} do not match {} inputs / {} outputs",
                inputs.len(),
                outputs.len(),
                self.n_inputs(),
                self.n_outputs()
            )));
        }
        self.input_labels = inputs;
        self.output_labels = outputs;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }
    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    pub fn input_index(&self, label: &str) -> Option<usize> {
        self.input_labels.iter().position(|l| l == label)
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.output_labels.iter().position(|l| l == label)
    }

    /// `self` followed by `next`: `y = next(self(u))`.
    pub fn series(&self, next: &Self) -> Result<Self> {
        if self.n_outputs() != next.n_inputs() {
            return Err(Error::Interconnection(format!(
                "series: {} outputs feed {} inputs",
                self.n_outputs(),
                next.n_inputs()
            )));
        }
        let (n1, n2) = (self.n_states(), next.n_states());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        let mut b = DMatrix::zeros(n1 + n2, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs())).copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.n_outputs(), n1 + n2);
        c.view_mut((0, 0), (next.n_outputs(), n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.n_outputs(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        let mut out = Self::new(a, b, c, d)?;
        out.input_labels = self.input_labels.clone();
        out.output_labels = next.output_labels.clone();
        Ok(out)
    }

    /// Sum of two systems sharing inputs and outputs.
    pub fn parallel(&self, other: &Self) -> Result<Self> {
        if self.n_inputs() != other.n_inputs() || self.n_outputs() != other.n_outputs() {
            return Err(Error::Interconnection("parallel: shapes differ".into()));
        }
        let stacked = self.append(other);
        let m = self.n_inputs();
        let p = self.n_outputs();
        let mut e = DMatrix::zeros(2 * m, m);
        let mut s = DMatrix::zeros(p, 2 * p);
        for i in 0..m {
            e[(i, i)] = T::one();
            e[(m + i, i)] = T::one();
        }
        for i in 0..p {
            s[(i, i)] = T::one();
            s[(i, p + i)] = T::one();
        }
        let mut out = stacked.map_inputs(&e)?.map_outputs(&s)?;
        out.input_labels = self.input_labels.clone();
        out.output_labels = self.output_labels.clone();
        Ok(out)
    }

    /// Block-diagonal concatenation; inputs and outputs are stacked.
    pub fn append(&self, other: &Self) -> Self {
        let (n1, n2) = (self.n_states(), other.n_states());
        let (m1, m2) = (self.n_inputs(), other.n_inputs());
        let (p1, p2) = (self.n_outputs(), other.n_outputs());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, m1 + m2);
        b.view_mut((0, 0), (n1, m1)).copy_from(&self.b);
        b.view_mut((n1, m1), (n2, m2)).copy_from(&other.b);
        let mut c = DMatrix::zeros(p1 + p2, n1 + n2);
        c.view_mut((0, 0), (p1, n1)).copy_from(&self.c);
        c.view_mut((p1, n1), (p2, n2)).copy_from(&other.c);
        let mut d = DMatrix::zeros(p1 + p2, m1 + m2);
        d.view_mut((0, 0), (p1, m1)).copy_from(&self.d);
        d.view_mut((p1, m1), (p2, m2)).copy_from(&other.d);
        let mut out = Self::new(a, b, c, d).expect("append keeps shapes consistent");
        out.input_labels = self.input_labels.iter().chain(&other.input_labels).cloned().collect();
        out.output_labels = self.output_labels.iter().chain(&other.output_labels).cloned().collect();
        out
    }

    /// Replaces the inputs by `u = E v`; `E` has `n_inputs` rows.
    pub fn map_inputs(&self, e: &DMatrix<T>) -> Result<Self> {
        if e.nrows() != self.n_inputs() {
            return Err(dim(format!("input map has {} rows, expected {}", e.nrows(), self.n_inputs())));
        }
        Self::new(self.a.clone(), &self.b * e, self.c.clone(), &self.d * e)
            .map(|s| s.relabel_outputs(self.output_labels.clone()))
    }

    /// Replaces the outputs by `z = S y`; `S` has `n_outputs` columns.
    pub fn map_outputs(&self, s: &DMatrix<T>) -> Result<Self> {
        if s.ncols() != self.n_outputs() {
            return Err(dim(format!("output map has {} columns, expected {}", s.ncols(), self.n_outputs())));
        }
        Self::new(self.a.clone(), self.b.clone(), s * &self.c, s * &self.d)
            .map(|sys| sys.relabel_inputs(self.input_labels.clone()))
    }

    fn relabel_outputs(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.n_outputs() {
            self.output_labels = labels;
        }
        self
    }

    fn relabel_inputs(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.n_inputs() {
            self.input_labels = labels;
        }
        self
    }

    pub fn select_outputs(&self, idx: &[usize]) -> Result<Self> {
        let p = self.n_outputs();
        let mut s = DMatrix::zeros(idx.len(), p);
        for (r, &i) in idx.iter().enumerate() {
            if i >= p {
                return Err(dim(format!("output index {i} out of range ({p})")));
            }
            s[(r, i)] = T::one();
        }
        let mut out = self.map_outputs(&s)?;
        out.output_labels = idx.iter().map(|&i| self.output_labels[i].clone()).collect();
        Ok(out)
    }

    pub fn select_inputs(&self, idx: &[usize]) -> Result<Self> {
        let m = self.n_inputs();
        let mut e = DMatrix::zeros(m, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            if i >= m {
                return Err(dim(format!("input index {i} out of range ({m})")));
            }
            e[(i, c)] = T::one();
        }
        let mut out = self.map_inputs(&e)?;
        out.input_labels = idx.iter().map(|&i| self.input_labels[i].clone()).collect();
        Ok(out)
    }

    /// Scales every output by `k`.
    pub fn scaled(&self, k: T) -> Self {
        let mut out = self.clone();
        out.c *= k;
        out.d *= k;
        out
    }

    /// Closes `u = v + K y` around the system. Fails when `I - D K` is singular.
    pub fn feedback_static(&self, k: &DMatrix<T>) -> Result<Self> {
        let (m, p) = (self.n_inputs(), self.n_outputs());
        if k.shape() != (m, p) {
            return Err(dim(format!("feedback gain is {:?}, expected ({m}, {p})", k.shape())));
        }
        let i_dk = DMatrix::<T>::identity(p, p) - &self.d * k;
        let inv = i_dk
            .try_inverse()
            .ok_or_else(|| Error::Interconnection("algebraic loop is ill-posed (I - D K singular)".into()))?;
        let c = &inv * &self.c;
        let d = &inv * &self.d;
        let a = &self.a + &self.b * k * &c;
        let b = &self.b + &self.b * k * &d;
        let mut out = Self::new(a, b, c, d)?;
        out.input_labels = self.input_labels.clone();
        out.output_labels = self.output_labels.clone();
        Ok(out)
    }

    /// Lower LFT: the last `k.n_outputs()` inputs of `self` are driven by the
    /// controller `k`, which reads the last `k.n_inputs()` outputs of `self`.
    pub fn lft_lower(&self, k: &Self) -> Result<Self> {
        let nu = k.n_outputs();
        let ny = k.n_inputs();
        let (m, p) = (self.n_inputs(), self.n_outputs());
        if nu > m || ny > p {
            return Err(Error::Interconnection(format!(
                "controller {ny}x{nu} does not fit plant with {m} inputs / {p} outputs"
            )));
        }
        let (nw, nz) = (m - nu, p - ny);
        let joined = self.append(k);
        // joined inputs: [w, u, y_k] ; joined outputs: [z, y, u_k]
        let mut conn = DMatrix::zeros(m + ny, p + nu);
        for i in 0..nu {
            conn[(nw + i, p + i)] = T::one();
        }
        for i in 0..ny {
            conn[(m + i, nz + i)] = T::one();
        }
        let closed = joined.feedback_static(&conn)?;
        let w: Vec<usize> = (0..nw).collect();
        let z: Vec<usize> = (0..nz).collect();
        closed.select_inputs(&w)?.select_outputs(&z)
    }

    /// Similarity transform with new state `z = M x`.
    pub fn transformed(&self, m: &DMatrix<T>) -> Result<Self> {
        let n = self.n_states();
        if m.shape() != (n, n) {
            return Err(dim("transform must be n x n"));
        }
        let minv = m.clone().try_inverse().ok_or_else(|| param("transform is singular"))?;
        let mut out = Self::new(m * &self.a * &minv, m * &self.b, &self.c * &minv, self.d.clone())?;
        out.input_labels = self.input_labels.clone();
        out.output_labels = self.output_labels.clone();
        Ok(out)
    }

    /// Drops states that structurally cannot reach any output or cannot be
    /// reached from any input. Entries with magnitude below `tol` times the
    /// largest entry of `[A B; C D]` count as zero.
    pub fn pruned(&self, tol: T) -> Self {
        let n = self.n_states();
        if n == 0 {
            return self.clone();
        }
        let scale = self
            .a
            .iter()
            .chain(self.b.iter())
            .chain(self.c.iter())
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        let thr = tol * scale;
        let nz = |v: T| v.abs() > thr;

        // observable: states from which some output is reachable
        let mut obs: Vec<bool> = (0..n).map(|j| (0..self.n_outputs()).any(|r| nz(self.c[(r, j)]))).collect();
        loop {
            let mut changed = false;
            for j in 0..n {
                if !obs[j] && (0..n).any(|i| obs[i] && nz(self.a[(i, j)])) {
                    obs[j] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut ctr: Vec<bool> = (0..n).map(|i| (0..self.n_inputs()).any(|c| nz(self.b[(i, c)]))).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                if !ctr[i] && (0..n).any(|j| ctr[j] && nz(self.a[(i, j)])) {
                    ctr[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&i| obs[i] && ctr[i]).collect();
        if keep.len() == n {
            return self.clone();
        }
        let k = keep.len();
        let a = DMatrix::from_fn(k, k, |r, c| self.a[(keep[r], keep[c])]);
        let b = DMatrix::from_fn(k, self.n_inputs(), |r, c| self.b[(keep[r], c)]);
        let c = DMatrix::from_fn(self.n_outputs(), k, |r, c| self.c[(r, keep[c])]);
        let mut out = Self::new(a, b, c, self.d.clone()).expect("pruning keeps shapes consistent");
        out.input_labels = self.input_labels.clone();
        out.output_labels = self.output_labels.clone();
        out
    }

    /// State derivative `A x + B u` written into `dx`.
    pub fn derivative(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.c * x + &self.d * u
    }

    /// Tustin (bilinear) discretization with sample time `dt`.
    pub fn discretize_bilinear(&self, dt: T) -> Result<DiscreteSystem<T>> {
        if !(dt > T::zero()) {
            return Err(param("sample time must be positive"));
        }
        let n = self.n_states();
        if n == 0 {
            let (m, p) = (self.n_inputs(), self.n_outputs());
            return Ok(DiscreteSystem::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), self.d.clone(), dt));
        }
        let half = dt * T::of(0.5);
        let eye = DMatrix::<T>::identity(n, n);
        let ima = &eye - &self.a * half;
        let lu = ima.clone().lu();
        let ad = lu
            .solve(&(&eye + &self.a * half))
            .ok_or_else(|| param("bilinear transform singular (pole at 2/dt)"))?;
        let bd = lu.solve(&(&self.b * dt)).ok_or_else(|| param("bilinear transform singular"))?;
        let cd = ima
            .transpose()
            .lu()
            .solve(&self.c.transpose())
            .ok_or_else(|| param("bilinear transform singular"))?
            .transpose();
        let dd = &self.d + &self.c * &bd * T::of(0.5);
        Ok(DiscreteSystem::new(ad, bd, cd, dd, dt))
    }

    /// Zero-order-hold discretization (exact for piecewise constant inputs).
    pub fn discretize_zoh(&self, dt: T) -> Result<DiscreteSystem<T>> {
        if !(dt > T::zero()) {
            return Err(param("sample time must be positive"));
        }
        let (n, m) = (self.n_states(), self.n_inputs());
        let (ad, bd) = if n == 0 {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, m))
        } else {
            let mut big = DMatrix::<T>::zeros(n + m, n + m);
            big.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
            big.view_mut((0, n), (n, m)).copy_from(&(&self.b * dt));
            let e = big.exp();
            (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
        };
        Ok(DiscreteSystem::new(ad, bd, self.c.clone(), self.d.clone(), dt))
    }

    /// DC gain `D - C A^-1 B`; `None` when `A` is singular.
    pub fn dc_gain(&self) -> Option<DMatrix<T>> {
        if self.n_states() == 0 {
            return Some(self.d.clone());
        }
        let x = self.a.clone().lu().solve(&self.b)?;
        Some(&self.d - &self.c * x)
    }
}

/// Discrete-time system with its own state, stepped one sample at a time.
#[derive(Debug, Clone)]
pub struct DiscreteSystem<T: Scalar> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
    dt: T,
    x: DVector<T>,
}

impl<T: Scalar> DiscreteSystem<T> {
    fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>, dt: T) -> Self {
        let n = a.nrows();
        Self { a, b, c, d, dt, x: DVector::zeros(n) }
    }

    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }
    pub fn state(&self) -> &DVector<T> {
        &self.x
    }

    pub fn reset(&mut self) {
        self.x.fill(T::zero());
    }

    /// `y = C x + D u`, then `x <- A x + B u`.
    pub fn step(&mut self, u: &DVector<T>) -> DVector<T> {
        let y = &self.c * &self.x + &self.d * u;
        self.x = &self.a * &self.x + &self.b * u;
        y
    }

    pub fn step_siso(&mut self, u: T) -> T {
        let mut y = self.d[(0, 0)] * u;
        for j in 0..self.x.len() {
            y += self.c[(0, j)] * self.x[j];
        }
        let next = &self.a * &self.x + self.b.column(0) * u;
        self.x = next;
        y
    }

    /// Output contribution of the current state alone (`C x`), first channel.
    pub fn state_output_siso(&self) -> T {
        (0..self.x.len()).fold(T::zero(), |acc, j| acc + self.c[(0, j)] * self.x[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn integrator() -> StateSpace<f64> {
        StateSpace::from_rows(1, 1, 1, &[0.0], &[1.0], &[1.0], &[0.0]).unwrap()
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let err = StateSpace::<f64>::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1));
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = StateSpace::<f64>::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(2, 1));
        assert!(matches!(err, Err(Error::Dimension(_))));
        assert!(integrator().with_labels(["a", "b"], ["y"]).is_err());
    }

    #[test]
    fn feedback_of_integrator_is_lowpass() {
        let sys = integrator().feedback_static(&DMatrix::from_element(1, 1, -2.0)).unwrap();
        assert_relative_eq!(sys.a()[(0, 0)], -2.0);
        assert_relative_eq!(sys.dc_gain().unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn ill_posed_loop_is_reported() {
        let unity = StateSpace::<f64>::identity(1);
        let err = unity.feedback_static(&DMatrix::from_element(1, 1, 1.0));
        assert!(matches!(err, Err(Error::Interconnection(_))));
    }

    #[test]
    fn lft_with_static_controller_matches_feedback() {
        // plant [w; u] -> [z; y] with x' = -x + w + u, z = x, y = x
        let p = StateSpace::from_rows(1, 2, 2, &[-1.0], &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0, 0.0, 0.0]).unwrap();
        let k = StateSpace::gain(DMatrix::from_element(1, 1, -3.0));
        let cl = p.lft_lower(&k).unwrap();
        assert_eq!(cl.n_inputs(), 1);
        assert_eq!(cl.n_outputs(), 1);
        assert_relative_eq!(cl.a()[(0, 0)], -4.0);
    }

    #[test]
    fn zoh_of_first_order_is_exact() {
        let lp = StateSpace::<f64>::lowpass(10.0).unwrap();
        let d = lp.discretize_zoh(0.01).unwrap();
        assert_relative_eq!(d.a()[(0, 0)], (-0.1f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(d.b()[(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn bilinear_preserves_dc_gain() {
        let lp = StateSpace::<f64>::lowpass(10.0).unwrap();
        let mut d = lp.discretize_bilinear(0.005).unwrap();
        let mut y = 0.0;
        for _ in 0..5000 {
            y = d.step_siso(1.0);
        }
        assert_relative_eq!(y, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pruning_removes_disconnected_states() {
        // second state is driven but never observed
        let sys = StateSpace::from_rows(2, 1, 1, &[-1.0, 0.0, 0.0, -2.0], &[1.0, 1.0], &[1.0, 0.0], &[0.0]).unwrap();
        let p = sys.pruned(1e-12);
        assert_eq!(p.n_states(), 1);
        assert_relative_eq!(p.a()[(0, 0)], -1.0);
    }

    #[test]
    fn works_in_single_precision() {
        let lp = StateSpace::<f32>::lowpass(2.0).unwrap();
        let series = lp.series(&lp).unwrap();
        assert_eq!(series.n_states(), 2);
        assert!((series.dc_gain().unwrap()[(0, 0)] - 1.0).abs() < 1e-6);
    }
}
