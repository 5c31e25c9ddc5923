//! Closed-form identification of rigid mass, slosh mass and stiffness from a
//! single acceleration pulse.
//!
//! Sample convention: `f_s[k]` reflects the command held over the interval
//! before `t[k]`, i.e. `a_cmd[k - 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::architecture::ActuationChain;
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::sim::SimSeries;
use crate::uncertainty::{assemble_loop, PlantSample};

/// Quiet data required before the pulse (s).
pub const MIN_QUIET: f64 = 0.5;
/// Samples after onset averaged for the force jump.
pub const JUMP_WINDOW: usize = 3;
/// Damping ratio assumed when re-simulating the fitted model.
pub const ASSUMED_DAMPING: f64 = 0.002;
/// Oscillation cycles after the pulse used for frequency and residual.
pub const CYCLES: usize = 3;

fn ident(msg: impl Into<String>) -> Error {
    Error::Identification(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    pub t: Vec<f64>,
    pub f_s: Vec<f64>,
    pub a_cmd: Vec<f64>,
    pub pulse_amp: f64,
    pub pulse_duration: f64,
}

impl PulseRecord {
    pub const COLUMNS: [&'static str; 3] = ["t", "F_s", "a_cmd"];

    /// Builds a record and reads amplitude and duration off the command.
    pub fn new(t: Vec<f64>, f_s: Vec<f64>, a_cmd: Vec<f64>) -> Result<Self> {
        if t.len() != f_s.len() || t.len() != a_cmd.len() {
            return Err(ident("t, F_s and a_cmd must have equal length"));
        }
        if t.len() < 3 {
            return Err(ident("record too short"));
        }
        let dt = t[1] - t[0];
        if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
            return Err(ident("time samples must be uniform and increasing"));
        }
        if t.iter().chain(&f_s).chain(&a_cmd).any(|v| !v.is_finite()) {
            return Err(ident("record contains non-finite values"));
        }
        let on = a_cmd.iter().position(|&a| a != 0.0);
        let (amp, duration) = match on {
            Some(k) => {
                let off = a_cmd[k..].iter().position(|&a| a == 0.0).map_or(a_cmd.len(), |j| k + j);
                // skip a partial first sample when the onset is off the grid
                let amp = if off - k >= 2 { a_cmd[k + 1] } else { a_cmd[k] };
                (amp, (off - k) as f64 * dt)
            }
            None => (0.0, 0.0),
        };
        Ok(Self { t, f_s, a_cmd, pulse_amp: amp, pulse_duration: duration })
    }

    pub fn from_series(s: &SimSeries) -> Result<Self> {
        Self::new(s.t.clone(), s.f_s.clone(), s.xdd_cmd.clone())
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn onset(&self) -> Result<usize> {
        let k = self.a_cmd.iter().position(|&a| a != 0.0).ok_or_else(|| ident("no pulse in the command (zero amplitude)"))?;
        if self.t[k] - self.t[0] < MIN_QUIET - 1e-9 {
            return Err(ident(format!("pulse starts after {:.3} s of quiet data; need {MIN_QUIET} s", self.t[k] - self.t[0])));
        }
        Ok(k)
    }

    /// Index of the first force sample that no longer reflects the pulse.
    fn pulse_end(&self, on: usize) -> usize {
        let off = self.a_cmd[on..].iter().position(|&a| a == 0.0).map_or(self.len(), |j| on + j);
        (off + 1).min(self.len())
    }

    fn pre_stats(&self, on: usize) -> (f64, f64) {
        let pre = &self.f_s[..on];
        let mean = pre.iter().sum::<f64>() / pre.len() as f64;
        let var = pre.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / pre.len() as f64;
        (mean, var.sqrt())
    }
}

/// Rigid mass from the force jump at pulse onset.
pub fn estimate_mr(rec: &PulseRecord) -> Result<f64> {
    let on = rec.onset()?;
    if rec.pulse_amp == 0.0 {
        return Err(ident("pulse amplitude is zero"));
    }
    if on + JUMP_WINDOW >= rec.len() {
        return Err(ident("record ends at the pulse onset"));
    }
    let (mean, std) = rec.pre_stats(on);
    let post = rec.f_s[on + 1..=on + JUMP_WINDOW].iter().sum::<f64>() / JUMP_WINDOW as f64;
    let jump = post - mean;
    if jump == 0.0 || jump.abs() < 5.0 * std {
        return Err(ident(format!("no detectable force jump ({jump:.3e} N against noise {std:.3e} N)")));
    }
    let m = jump / rec.pulse_amp;
    if !(m > 0.0) {
        return Err(ident(format!("force jump has the wrong sign (m_r = {m:.3e})")));
    }
    Ok(m)
}

/// Crossing times of `y` through `level`, linearly interpolated.
fn crossings(t: &[f64], y: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..y.len() {
        let (a, b) = (y[i - 1] - level, y[i] - level);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            out.push(t[i - 1] + (t[i] - t[i - 1]) * a / (a - b));
        }
    }
    out
}

/// Slosh frequency from the mean half-period of the free oscillation after
/// the pulse, over its first cycles only.
pub fn estimate_omega(rec: &PulseRecord) -> Result<f64> {
    let on = rec.onset()?;
    let end = rec.pulse_end(on);
    let (t, y) = (&rec.t[end..], &rec.f_s[end..]);
    if y.len() < 4 {
        return Err(ident("no post-pulse data"));
    }
    // rough period from all crossings, then a level averaged over whole cycles
    let mean_all = y.iter().sum::<f64>() / y.len() as f64;
    let rough = crossings(t, y, mean_all);
    if rough.len() < 3 {
        return Err(ident(format!("{} sign changes after the pulse; need at least 3", rough.len())));
    }
    let half = (rough[2] - rough[0]) / 2.0;
    let span = (2 * CYCLES) as f64 * half;
    if t[t.len() - 1] - t[0] < span {
        return Err(ident(format!("post-pulse record covers fewer than {CYCLES} cycles")));
    }
    let k_end = t.iter().position(|&ti| ti > rough[0] + span).unwrap_or(t.len());
    let k0 = t.iter().position(|&ti| ti >= rough[0]).unwrap_or(0);
    let level = y[k0..k_end].iter().sum::<f64>() / (k_end - k0) as f64;
    let mut c = crossings(t, y, level);
    c.truncate(2 * CYCLES + 1);
    if c.len().is_multiple_of(2) {
        c.pop();
    }
    if c.len() < 3 {
        return Err(ident("fewer than 3 sign changes about the post-pulse mean"));
    }
    let intervals = (c.len() - 1) as f64;
    let period = 2.0 * (c[c.len() - 1] - c[0]) / intervals;
    Ok(2.0 * PI / period)
}

/// Slosh mass from the force swing during the pulse, stiffness from `omega`.
pub fn estimate_ms_k(rec: &PulseRecord, omega: f64) -> Result<(f64, f64)> {
    let on = rec.onset()?;
    if rec.pulse_amp == 0.0 {
        return Err(ident("pulse amplitude is zero"));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(ident("frequency must be positive"));
    }
    if rec.pulse_duration < PI / omega {
        return Err(ident(format!("pulse of {:.3} s is shorter than half a period ({:.3} s)", rec.pulse_duration, PI / omega)));
    }
    let end = rec.pulse_end(on);
    let seg = &rec.f_s[on + 1..end];
    let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
    let m_s = (hi - lo) / (2.0 * rec.pulse_amp.abs());
    if !(m_s > 0.0) {
        return Err(ident("no force swing during the pulse"));
    }
    Ok((m_s, m_s * omega * omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentResult {
    pub m_r_hat: f64,
    pub m_s_hat: f64,
    pub k_hat: f64,
    pub omega_hat: f64,
    /// Relative RMS misfit of the re-simulated sensor force.
    pub residual: f64,
}

impl IdentResult {
    /// Plant with the identified values and the assumed damping ratio.
    pub fn plant(&self) -> PlantParams<f64> {
        PlantParams { m_s: self.m_s_hat, m_r: self.m_r_hat, k: self.k_hat, c: 2.0 * ASSUMED_DAMPING * (self.k_hat * self.m_s_hat).sqrt() }
    }
}

/// Sensor force of `params` driven by the recorded command, with the same
/// sample convention as the record.
pub fn resimulate(rec: &PulseRecord, params: &PlantParams<f64>) -> Result<Vec<f64>> {
    let lp = assemble_loop::<f64>(&PlantSample::nominal(*params, 0.0), &ActuationChain::ideal())?
        .select_inputs(&[0])?
        .select_outputs(&[0])?;
    let mut d = lp.discretize_zoh(rec.dt())?;
    let mut out = Vec::with_capacity(rec.len());
    let mut prev = 0.0;
    for &a in &rec.a_cmd {
        let y = d.state_output_siso() + d.d()[(0, 0)] * prev;
        out.push(y);
        d.step_siso(a);
        prev = a;
    }
    Ok(out)
}

pub fn identify(rec: &PulseRecord) -> Result<IdentResult> {
    let m_r_hat = estimate_mr(rec)?;
    let omega_hat = estimate_omega(rec)?;
    let (m_s_hat, k_hat) = estimate_ms_k(rec, omega_hat)?;
    let mut res = IdentResult { m_r_hat, m_s_hat, k_hat, omega_hat, residual: 0.0 };
    let plant = res.plant();
    plant.check_realizable().map_err(|e| ident(format!("identified plant is not usable: {e}")))?;

    let on = rec.onset()?;
    let (offset, _) = rec.pre_stats(on);
    let model = resimulate(rec, &plant)?;
    let stop = rec.t[rec.pulse_end(on) - 1] + CYCLES as f64 * 2.0 * PI / omega_hat;
    let (mut num, mut den) = (0.0, 0.0);
    for k in on..rec.len() {
        if rec.t[k] > stop {
            break;
        }
        let meas = rec.f_s[k] - offset;
        num += (model[k] - meas).powi(2);
        den += meas * meas;
    }
    res.residual = if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY };
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Scenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn record(p: &PlantParams<f64>, amp: f64, duration: f64) -> PulseRecord {
        let scn = Scenario::identification("id", p, amp, duration);
        PulseRecord::from_series(&simulate(&scn, None).unwrap().series).unwrap()
    }

    /// Force of an undamped slosh plant under a base acceleration pulse,
    /// straight from the closed-form response.
    fn analytic(p: &PlantParams<f64>, a: f64, t_on: f64, dur: f64, dt: f64, n: usize) -> PulseRecord {
        let w = (p.k / p.m_s).sqrt();
        let spring = |tau: f64| -p.m_s * a * (1.0 - (w * tau).cos());
        let (mut t, mut f, mut cmd) = (vec![], vec![], vec![]);
        for i in 0..n {
            let ti = i as f64 * dt;
            let tau = ti - t_on;
            let held = |tt: f64| tt >= t_on - 1e-12 && tt < t_on + dur - 1e-12;
            let fs = if tau <= 0.0 {
                0.0
            } else if tau <= dur + 1e-12 {
                spring(tau) + if held(ti - dt) { p.m_r * a } else { 0.0 }
            } else {
                // free oscillation from the state at pulse end
                let x = -a / (w * w) * (1.0 - (w * dur).cos());
                let v = -a / w * (w * dur).sin();
                let s = tau - dur;
                p.k * (x * (w * s).cos() + v / w * (w * s).sin()) + if held(ti - dt) { p.m_r * a } else { 0.0 }
            };
            t.push(ti);
            f.push(fs);
            cmd.push(if held(ti) { a } else { 0.0 });
        }
        PulseRecord::new(t, f, cmd).unwrap()
    }

    #[test]
    fn closed_form_record_is_inverted() {
        let p = PlantParams { c: 0.0, ..PlantParams::reference() };
        let rec = analytic(&p, 0.1, 0.5, 1.5, 0.005, 2000);
        assert_relative_eq!(estimate_mr(&rec).unwrap(), 750.0, max_relative = 5e-3);
        let w = estimate_omega(&rec).unwrap();
        assert_relative_eq!(w, 4.4, max_relative = 5e-3);
        let (ms, k) = estimate_ms_k(&rec, w).unwrap();
        assert_relative_eq!(ms, 250.0, max_relative = 1e-2);
        assert_relative_eq!(k, 4840.0, max_relative = 1e-2);
    }

    #[test]
    fn simulated_record_round_trip() {
        let p = PlantParams::reference();
        let r = identify(&record(&p, 0.1, 1.5)).unwrap();
        assert_relative_eq!(r.m_r_hat, 750.0, max_relative = 5e-3);
        assert_relative_eq!(r.omega_hat, 4.4, max_relative = 5e-3);
        assert_relative_eq!(r.m_s_hat, 250.0, max_relative = 1e-2);
        assert_relative_eq!(r.k_hat, 4840.0, max_relative = 1e-2);
        assert_relative_eq!(r.omega_hat * r.omega_hat, r.k_hat / r.m_s_hat, max_relative = 1e-9);
        assert!(r.residual >= 0.0 && r.residual < 0.02, "{}", r.residual);
    }

    #[test]
    fn residual_vanishes_for_the_generating_model() {
        let p = IdentResult { m_r_hat: 750.0, m_s_hat: 250.0, k_hat: 4840.0, omega_hat: 4.4, residual: 0.0 }.plant();
        let rec = record(&p, 0.1, 1.5);
        let f = resimulate(&rec, &p).unwrap();
        let scale = rec.f_s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = rec.f_s.iter().zip(&f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6 * scale, "{err}");
        let off = resimulate(&rec, &PlantParams { k: 5000.0, ..p }).unwrap();
        assert!(rec.f_s.iter().zip(&off).any(|(a, b)| (a - b).abs() > 1e-3 * scale));
    }

    #[test]
    fn noisy_records_match_the_jump_statistics() {
        let p = PlantParams::reference();
        let (a, sigma) = (0.1, 1.0);
        let clean = record(&p, a, 1.5);
        let normal = Normal::new(0.0, sigma).unwrap();
        let est: Vec<f64> = (0..100)
            .map(|seed| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut rec = clean.clone();
                for f in rec.f_s.iter_mut() {
                    *f += normal.sample(&mut rng);
                }
                estimate_mr(&rec).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let std = (est.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        // window mean of 3 samples dominates; the long pre-onset mean adds little
        let expected = sigma / (a * (JUMP_WINDOW as f64).sqrt());
        assert!((std / expected - 1.0).abs() < 0.2, "std {std} vs {expected}");
        assert!((mean / 750.0 - 1.0).abs() < 5e-3);
        let inside = est.iter().filter(|m| (*m / 750.0 - 1.0).abs() < 0.02).count();
        assert!(inside >= 95, "{inside} of 100 within 2%");
    }

    #[test]
    fn second_harmonic_does_not_bias_the_frequency() {
        let p = PlantParams { c: 0.0, ..PlantParams::reference() };
        let mut rec = analytic(&p, 0.1, 0.5, 1.5, 0.005, 2000);
        let end = rec.pulse_end(rec.onset().unwrap());
        let amp = rec.f_s[end..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in end..rec.len() {
            rec.f_s[k] += 0.05 * amp * (2.0 * 4.4 * rec.t[k] + 0.3).sin();
        }
        assert_relative_eq!(estimate_omega(&rec).unwrap(), 4.4, max_relative = 2e-2);
    }

    #[test]
    fn degenerate_records_are_rejected() {
        let p = PlantParams::reference();
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.005).collect();
        let flat = PulseRecord::new(t.clone(), vec![10.0; n], vec![0.0; n]).unwrap();
        assert!(matches!(estimate_mr(&flat), Err(Error::Identification(_))));
        assert!(matches!(estimate_omega(&flat), Err(Error::Identification(_))));
        let mut cmd = vec![0.0; n];
        cmd[200..500].iter_mut().for_each(|a| *a = 0.1);
        let constant = PulseRecord::new(t.clone(), vec![5.0; n], cmd).unwrap();
        assert!(estimate_omega(&constant).is_err());
        assert!(estimate_mr(&constant).is_err());

        // one cycle after the pulse
        let full = record(&p, 0.1, 1.5);
        let keep = full.t.iter().position(|&ti| ti > 0.5 + 1.5 + 1.5).unwrap();
        let short = PulseRecord::new(full.t[..keep].to_vec(), full.f_s[..keep].to_vec(), full.a_cmd[..keep].to_vec()).unwrap();
        assert!(identify(&short).is_err());

        // pulse shorter than half a period
        let brief = record(&p, 0.1, 0.3);
        let w = estimate_omega(&brief).unwrap();
        assert!(estimate_ms_k(&brief, w).is_err());

        // too little quiet time
        let mut early = Scenario::identification("id", &p, 0.1, 1.5);
        early.start = 0.2;
        let rec = PulseRecord::from_series(&simulate(&early, None).unwrap().series).unwrap();
        assert!(estimate_mr(&rec).is_err());
        assert!(PulseRecord::new(vec![0.0, 1.0, 1.5], vec![0.0; 3], vec![0.0; 3]).is_err());
    }

    #[test]
    fn scaling_the_pulse_leaves_estimates_unchanged() {
        let p = PlantParams::reference();
        let a = identify(&record(&p, 0.1, 1.5)).unwrap();
        let b = identify(&record(&p, 0.2, 1.5)).unwrap();
        for (x, y) in [(a.m_r_hat, b.m_r_hat), (a.m_s_hat, b.m_s_hat), (a.k_hat, b.k_hat), (a.omega_hat, b.omega_hat)] {
            assert_relative_eq!(x, y, max_relative = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]
        #[test]
        fn identification_recovers_box_plants(kf in 0.8f64..1.2, mf in 0.8f64..1.2) {
            let p = PlantParams { k: 4840.0 * kf, m_r: 750.0 * mf, ..PlantParams::reference() };
            let r = identify(&record(&p, 0.1, 1.5)).unwrap();
            prop_assert!((r.m_r_hat / p.m_r - 1.0).abs() < 0.01);
            prop_assert!((r.m_s_hat / p.m_s - 1.0).abs() < 0.01);
            prop_assert!((r.k_hat / p.k - 1.0).abs() < 0.01);
        }
    }
}
