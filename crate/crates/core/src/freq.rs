//! Frequency-domain evaluation: transfer matrices on the imaginary axis,
//! the H-infinity norm, stability margins and weighted-loop closure.

use nalgebra::{DMatrix, Hessenberg, Schur};

use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::scalar::{Complex, Scalar};

/// Strictly increasing, logarithmically spaced frequency grid (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid<T: Scalar> {
    points: Vec<T>,
}

impl<T: Scalar> FreqGrid<T> {
    pub fn log(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 2 || !(lo > T::zero()) || !(hi > lo) || !hi.is_finite() {
            return Err(Error::Parameter(format!("invalid frequency grid [{lo}, {hi}] with {n} points")));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let step = (lhi - llo) / T::of((n - 1) as f64);
        let mut points: Vec<T> = (0..n).map(|i| (llo + step * T::of(i as f64)).exp()).collect();
        points[0] = lo;
        points[n - 1] = hi;
        Ok(Self { points })
    }

    /// Default analysis grid: 200 points over `[w/100, 1000 w]`.
    pub fn around(omega: T) -> Result<Self> {
        Self::log(omega / T::of(100.0), omega * T::of(1000.0), 200)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> T {
        self.points[0]
    }

    pub fn hi(&self) -> T {
        self.points[self.points.len() - 1]
    }
}

/// `C (jwI - A)^-1 B + D`.
pub fn evalfr<T: Scalar>(sys: &StateSpace<T>, omega: T) -> Result<DMatrix<Complex<T>>> {
    let n = sys.n_states();
    let d = sys.d().map(|v| Complex::new(v, T::zero()));
    if n == 0 {
        return Ok(d);
    }
    let jw = Complex::new(T::zero(), omega);
    let m = DMatrix::from_fn(n, n, |r, c| {
        let a = Complex::new(-sys.a()[(r, c)], T::zero());
        if r == c {
            a + jw
        } else {
            a
        }
    });
    let b = sys.b().map(|v| Complex::new(v, T::zero()));
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Evaluation(format!("resolvent singular at w = {omega}")))?;
    let c = sys.c().map(|v| Complex::new(v, T::zero()));
    Ok(c * x + d)
}

pub fn cabs<T: Scalar>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

/// Largest singular value of a small complex matrix.
pub fn max_singular_value<T: Scalar>(g: &DMatrix<Complex<T>>) -> T {
    let (p, m) = g.shape();
    if p == 0 || m == 0 {
        return T::zero();
    }
    if p == 1 || m == 1 {
        return g.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
    }
    if p == 2 || m == 2 {
        // eigenvalues of the 2x2 Gram matrix
        let gram = if m == 2 { g.adjoint() * g } else { g * g.adjoint() };
        let a = gram[(0, 0)].re;
        let d = gram[(1, 1)].re;
        let b = gram[(0, 1)].norm_sqr();
        let half = T::of(0.5);
        let mid = (a + d) * half;
        let rad = ((a - d) * half * (a - d) * half + b).sqrt();
        return (mid + rad).max(T::zero()).sqrt();
    }
    g.clone().singular_values().iter().fold(T::zero(), |acc, &s| acc.max(s))
}

/// Frequency response evaluator that reduces `A` to Hessenberg form once so
/// that each frequency costs `O(n^2)`.
#[derive(Debug, Clone)]
pub struct FrequencyEvaluator<T: Scalar> {
    h: DMatrix<T>,
    qb: DMatrix<T>,
    cq: DMatrix<T>,
    d: DMatrix<T>,
}

impl<T: Scalar> FrequencyEvaluator<T> {
    pub fn new(sys: &StateSpace<T>) -> Self {
        if sys.n_states() == 0 {
            return Self {
                h: DMatrix::zeros(0, 0),
                qb: DMatrix::zeros(0, sys.n_inputs()),
                cq: DMatrix::zeros(sys.n_outputs(), 0),
                d: sys.d().clone(),
            };
        }
        let (q, h) = Hessenberg::new(sys.a().clone()).unpack();
        Self { qb: q.transpose() * sys.b(), cq: sys.c() * &q, h, d: sys.d().clone() }
    }

    pub fn eval(&self, omega: T) -> Result<DMatrix<Complex<T>>> {
        let n = self.h.nrows();
        let m = self.qb.ncols();
        let mut out = self.d.map(|v| Complex::new(v, T::zero()));
        if n == 0 {
            return Ok(out);
        }
        let zero = Complex::new(T::zero(), T::zero());
        let mut mat: Vec<Complex<T>> = vec![zero; n * n];
        let idx = |r: usize, c: usize| r * n + c;
        for r in 0..n {
            let start = r.saturating_sub(1);
            for c in start..n {
                mat[idx(r, c)] = Complex::new(-self.h[(r, c)], T::zero());
            }
            mat[idx(r, r)] += Complex::new(T::zero(), omega);
        }
        let mut rhs: Vec<Complex<T>> = (0..n * m).map(|i| Complex::new(self.qb[(i / m, i % m)], T::zero())).collect();
        let ridx = |r: usize, c: usize| r * m + c;
        let scale = self.h.iter().fold(omega.abs(), |acc, v| acc.max(v.abs())) + T::one();
        let tiny = scale * T::eps() * T::of(16.0);
        for k in 0..n.saturating_sub(1) {
            if cabs(mat[idx(k + 1, k)]) > cabs(mat[idx(k, k)]) {
                for c in k..n {
                    mat.swap(idx(k, c), idx(k + 1, c));
                }
                for c in 0..m {
                    rhs.swap(ridx(k, c), ridx(k + 1, c));
                }
            }
            let piv = mat[idx(k, k)];
            if cabs(piv) <= tiny {
                return Err(Error::Evaluation(format!("resolvent singular at w = {omega}")));
            }
            let l = mat[idx(k + 1, k)] / piv;
            if l != zero {
                for c in k..n {
                    let v = mat[idx(k, c)];
                    mat[idx(k + 1, c)] -= l * v;
                }
                for c in 0..m {
                    let v = rhs[ridx(k, c)];
                    rhs[ridx(k + 1, c)] -= l * v;
                }
            }
        }
        for k in (0..n).rev() {
            let piv = mat[idx(k, k)];
            if cabs(piv) <= tiny {
                return Err(Error::Evaluation(format!("resolvent singular at w = {omega}")));
            }
            for c in 0..m {
                let mut acc = rhs[ridx(k, c)];
                for j in k + 1..n {
                    acc -= mat[idx(k, j)] * rhs[ridx(j, c)];
                }
                rhs[ridx(k, c)] = acc / piv;
            }
        }
        for r in 0..out.nrows() {
            for c in 0..m {
                let mut acc = zero;
                for j in 0..n {
                    acc += rhs[ridx(j, c)] * self.cq[(r, j)];
                }
                out[(r, c)] += acc;
            }
        }
        Ok(out)
    }

    pub fn gain(&self, omega: T) -> Result<T> {
        self.eval(omega).map(|g| max_singular_value(&g))
    }
}

/// Largest real part among the eigenvalues of `A` (`-inf` for static systems).
/// A failed eigenvalue iteration is reported as `+inf`.
pub fn spectral_abscissa<T: Scalar>(sys: &StateSpace<T>) -> T {
    if sys.n_states() == 0 {
        return -T::infinity();
    }
    match Schur::try_new(sys.a().clone(), T::eps(), 100 * sys.n_states().max(10)) {
        Some(s) => s.complex_eigenvalues().iter().fold(-T::infinity(), |acc, e| acc.max(e.re)),
        None => T::infinity(),
    }
}

pub fn eigenvalues<T: Scalar>(sys: &StateSpace<T>) -> Option<Vec<Complex<T>>> {
    if sys.n_states() == 0 {
        return Some(Vec::new());
    }
    Schur::try_new(sys.a().clone(), T::eps(), 100 * sys.n_states().max(10))
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
}

/// Peak of the largest singular value over frequency.
///
/// Evaluates the grid, DC and the high-frequency limit, then refines the
/// three largest grid peaks by golden-section search in `ln w` until the
/// bracket is narrower than `tol`. Returns `+inf` when the system is not
/// strictly stable.
pub fn hinf_norm<T: Scalar>(sys: &StateSpace<T>, grid: &FreqGrid<T>, tol: T) -> T {
    if !(spectral_abscissa(sys) < T::zero()) {
        return T::infinity();
    }
    let ev = FrequencyEvaluator::new(sys);
    hinf_norm_stable(&ev, sys, grid, tol)
}

fn hinf_norm_stable<T: Scalar>(ev: &FrequencyEvaluator<T>, sys: &StateSpace<T>, grid: &FreqGrid<T>, tol: T) -> T {
    let pts = grid.points();
    let vals: Vec<T> = pts.iter().map(|&w| ev.gain(w).unwrap_or(T::infinity())).collect();
    let mut best = vals.iter().fold(T::zero(), |acc, &v| acc.max(v));
    if let Some(dc) = sys.dc_gain() {
        best = best.max(max_singular_value(&dc.map(|v| Complex::new(v, T::zero()))));
    }
    best = best.max(max_singular_value(&sys.d().map(|v| Complex::new(v, T::zero()))));
    if !best.is_finite() {
        return best;
    }

    let n = vals.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == n || vals[i] >= vals[i + 1]))
        .collect();
    peaks.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    peaks.truncate(3);

    let golden = T::of(0.618_033_988_749_894_8);
    for &i in &peaks {
        let mut lo = pts[i.saturating_sub(1)].ln();
        let mut hi = pts[(i + 1).min(n - 1)].ln();
        let f = |lw: T| ev.gain(lw.exp()).unwrap_or(T::infinity());
        let mut x1 = hi - golden * (hi - lo);
        let mut x2 = lo + golden * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        let mut iters = 0;
        while hi - lo > tol && iters < 200 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + golden * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - golden * (hi - lo);
                f1 = f(x1);
            }
            iters += 1;
        }
        best = best.max(f1).max(f2);
    }
    best
}

/// Generalized plant for synthesis: inputs `[exogenous..., u]`, outputs
/// `[performance..., y]` with a single control input and measurement.
#[derive(Debug, Clone)]
pub struct WeightedLoop<T: Scalar> {
    plant: StateSpace<T>,
}

impl<T: Scalar> WeightedLoop<T> {
    pub fn new(plant: StateSpace<T>) -> Result<Self> {
        if plant.n_inputs() < 2 || plant.n_outputs() < 2 {
            return Err(Error::Interconnection("weighted loop needs exogenous and control channels".into()));
        }
        Ok(Self { plant })
    }

    pub fn generalized(&self) -> &StateSpace<T> {
        &self.plant
    }

    pub fn n_exogenous(&self) -> usize {
        self.plant.n_inputs() - 1
    }

    pub fn n_performance(&self) -> usize {
        self.plant.n_outputs() - 1
    }

    /// Feedthrough from control input to measurement.
    pub fn d_loop(&self) -> T {
        let p = &self.plant;
        p.d()[(p.n_outputs() - 1, p.n_inputs() - 1)]
    }
}

/// Closes the controller around the weighted loop: exogenous -> performance.
pub fn close_loop<T: Scalar>(lp: &WeightedLoop<T>, ctrl: &StateSpace<T>) -> Result<StateSpace<T>> {
    if ctrl.n_inputs() != 1 || ctrl.n_outputs() != 1 {
        return Err(Error::Interconnection("controller must be single-input single-output".into()));
    }
    let dk = ctrl.d()[(0, 0)];
    if (T::one() - lp.d_loop() * dk).abs() <= T::eps() * T::of(100.0) {
        return Err(Error::Interconnection("ill-posed feedback: 1 - D_loop D_ctrl = 0".into()));
    }
    lp.generalized().lft_lower(ctrl)
}

/// One row of a frequency-response dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FrPoint {
    pub channel: String,
    pub omega: f64,
    pub magnitude: f64,
    pub phase: f64,
}

/// Magnitude and phase (rad) of every input/output pair over a grid.
pub fn frequency_response<T: Scalar>(sys: &StateSpace<T>, grid: &FreqGrid<T>) -> Result<Vec<FrPoint>> {
    let ev = FrequencyEvaluator::new(sys);
    let mut out = Vec::with_capacity(grid.len() * sys.n_inputs() * sys.n_outputs());
    for r in 0..sys.n_outputs() {
        for c in 0..sys.n_inputs() {
            let channel = format!("{}->{}", sys.input_labels()[c], sys.output_labels()[r]);
            for &w in grid.points() {
                let g = ev.eval(w)?;
                let z = g[(r, c)];
                out.push(FrPoint {
                    channel: channel.clone(),
                    omega: w.as_f64(),
                    magnitude: cabs(z).as_f64(),
                    phase: z.im.atan2(z.re).as_f64(),
                });
            }
        }
    }
    Ok(out)
}
