use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One linear piece of a control schedule. Both controls interpolate linearly
/// from their start to end value over `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub omega_start: f64,
    pub omega_end: f64,
    pub delta_start: f64,
    pub delta_end: f64,
}

impl Segment {
    pub fn is_constant(&self) -> bool {
        self.omega_start == self.omega_end && self.delta_start == self.delta_end
    }

    fn omega_at(&self, tau: f64) -> f64 {
        lerp(self.omega_start, self.omega_end, tau / self.duration)
    }

    fn delta_at(&self, tau: f64) -> f64 {
        lerp(self.delta_start, self.delta_end, tau / self.duration)
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    if f.is_nan() {
        return a;
    }
    a + (b - a) * f
}

/// One propagation step: controls averaged over `[t0, t0 + dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub dt: f64,
    pub omega: f64,
    pub delta: f64,
}

/// Piecewise-linear time course of the Rabi frequency and detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for Schedule {
    type Error = crate::Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Schedule::new(segments)
    }
}

impl From<Schedule> for Vec<Segment> {
    fn from(s: Schedule) -> Self {
        s.segments
    }
}

const CONTINUITY_TOL: f64 = 1e-12;

impl Schedule {
    /// Builds a schedule, dropping zero-length segments. Rejects negative
    /// durations, zero total duration and discontinuous controls.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for (k, s) in segments.iter().enumerate() {
            let vals = [s.duration, s.omega_start, s.omega_end, s.delta_start, s.delta_end];
            if vals.iter().any(|v| !v.is_finite()) {
                return invalid(format!("segment {k} has non-finite entries"));
            }
            if s.duration < 0.0 {
                return invalid(format!("segment {k} has negative duration {}", s.duration));
            }
        }
        let segments: Vec<Segment> = segments.into_iter().filter(|s| s.duration > 0.0).collect();
        if segments.is_empty() {
            return invalid("schedule has zero total duration");
        }
        for (k, pair) in segments.windows(2).enumerate() {
            let scale = 1.0 + pair[0].omega_end.abs().max(pair[0].delta_end.abs());
            if (pair[0].omega_end - pair[1].omega_start).abs() > CONTINUITY_TOL * scale
                || (pair[0].delta_end - pair[1].delta_start).abs() > CONTINUITY_TOL * scale
            {
                return invalid(format!("controls jump between segments {k} and {}", k + 1));
            }
        }
        Ok(Schedule { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn locate(&self, t: f64) -> (&Segment, f64) {
        let mut start = 0.0;
        for s in &self.segments {
            if t <= start + s.duration {
                return (s, (t - start).max(0.0));
            }
            start += s.duration;
        }
        let last = self.segments.last().expect("schedule is never empty");
        (last, last.duration)
    }

    pub fn omega(&self, t: f64) -> f64 {
        let (s, tau) = self.locate(t);
        s.omega_at(tau)
    }

    pub fn delta(&self, t: f64) -> f64 {
        let (s, tau) = self.locate(t);
        s.delta_at(tau)
    }

    /// Splits every segment into `n_per_segment` equal steps. Additional
    /// `breakpoints` (times inside the schedule) split the step containing them.
    pub fn steps(&self, n_per_segment: usize, breakpoints: &[f64]) -> Result<Vec<Step>> {
        if n_per_segment == 0 {
            return invalid("at least one step per segment is required");
        }
        let total = self.duration();
        let mut cuts = Vec::new();
        let mut start = 0.0;
        for s in &self.segments {
            // frozen controls are exact over any step length
            let n = if s.is_constant() { 1 } else { n_per_segment };
            for k in 0..n {
                cuts.push(start + s.duration * k as f64 / n as f64);
            }
            start += s.duration;
        }
        cuts.push(total);
        for &b in breakpoints {
            if !(0.0..=total * (1.0 + 1e-12)).contains(&b) {
                return invalid(format!("checkpoint time {b} outside schedule [0, {total}]"));
            }
            cuts.push(b.min(total));
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        let min_gap = 1e-13 * total;
        cuts.dedup_by(|b, a| (*b - *a).abs() <= min_gap);

        let mut steps = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let mid = 0.5 * (t0 + t1);
            // linear controls: the time average over the step is the midpoint value
            steps.push(Step { t0, dt: t1 - t0, omega: self.omega(mid), delta: self.delta(mid) });
        }
        Ok(steps)
    }

    /// First time at which the detuning equals `value`, if any.
    pub fn time_of_delta(&self, value: f64) -> Option<f64> {
        let mut start = 0.0;
        for s in &self.segments {
            let (a, b) = (s.delta_start - value, s.delta_end - value);
            if a == 0.0 {
                return Some(start);
            }
            if a * b <= 0.0 {
                return Some(start + s.duration * a / (a - b));
            }
            start += s.duration;
        }
        None
    }

    /// Samples the controls on a uniform grid as CSV with columns `t, omega, delta`.
    pub fn to_csv(&self, n_points: usize) -> String {
        let n = n_points.max(2);
        let total = self.duration();
        let mut out = String::from("t,omega,delta\n");
        for k in 0..n {
            let t = total * k as f64 / (n - 1) as f64;
            let _ = writeln!(out, "{t},{},{}", self.omega(t), self.delta(t));
        }
        out
    }
}

/// Rabi frequency switched on over `rise_time`, held for `hold_time`, switched
/// off over `fall_time`, at constant detuning.
pub fn sudden_schedule(omega0: f64, delta: f64, hold_time: f64, rise_time: f64, fall_time: f64) -> Result<Schedule> {
    if !(omega0 > 0.0) {
        return invalid(format!("omega0 must be positive, got {omega0}"));
    }
    if hold_time < 0.0 || rise_time < 0.0 || fall_time < 0.0 {
        return invalid("schedule times must be non-negative");
    }
    Schedule::new(vec![
        Segment { duration: rise_time, omega_start: 0.0, omega_end: omega0, delta_start: delta, delta_end: delta },
        Segment { duration: hold_time, omega_start: omega0, omega_end: omega0, delta_start: delta, delta_end: delta },
        Segment { duration: fall_time, omega_start: omega0, omega_end: 0.0, delta_start: delta, delta_end: delta },
    ])
}

/// Soft switch-on at `delta_i`, linear detuning sweep to `delta_f` at `ramp_rate`
/// with the Rabi frequency held at `omega0`, then soft switch-off at `delta_f`.
pub fn ramp_schedule(omega0: f64, delta_i: f64, delta_f: f64, ramp_rate: f64, rise_time: f64) -> Result<Schedule> {
    if !(ramp_rate > 0.0) {
        return invalid(format!("ramp rate must be positive, got {ramp_rate}"));
    }
    if !(omega0 > 0.0) {
        return invalid(format!("omega0 must be positive, got {omega0}"));
    }
    if rise_time < 0.0 {
        return invalid("rise time must be non-negative");
    }
    let sweep = (delta_f - delta_i).abs() / ramp_rate;
    Schedule::new(vec![
        Segment { duration: rise_time, omega_start: 0.0, omega_end: omega0, delta_start: delta_i, delta_end: delta_i },
        Segment { duration: sweep, omega_start: omega0, omega_end: omega0, delta_start: delta_i, delta_end: delta_f },
        Segment { duration: rise_time, omega_start: omega0, omega_end: 0.0, delta_start: delta_f, delta_end: delta_f },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_without_edges_is_single_segment() {
        let omega = 4.05;
        let hold = 0.25 / omega;
        let s = sudden_schedule(omega, 1.0, hold, 0.0, 0.0).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert!((s.omega(0.0) - omega).abs() < 1e-15);
        assert!((omega * s.duration() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(sudden_schedule(1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(sudden_schedule(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(sudden_schedule(1.0, 0.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn three_segments_continuous() {
        let s = sudden_schedule(2.0, -1.0, 0.3, 0.05, 0.05).unwrap();
        assert_eq!(s.segments().len(), 3);
        assert!((s.duration() - 0.4).abs() < 1e-15);
        assert!((s.omega(0.025) - 1.0).abs() < 1e-12);
        assert!((s.omega(0.05) - 2.0).abs() < 1e-12);
        assert!((s.omega(0.375) - 1.0).abs() < 1e-12);
        assert_eq!(s.delta(0.2), -1.0);
    }

    #[test]
    fn discontinuous_segments_rejected() {
        let segs = vec![
            Segment { duration: 1.0, omega_start: 0.0, omega_end: 1.0, delta_start: 0.0, delta_end: 0.0 },
            Segment { duration: 1.0, omega_start: 2.0, omega_end: 2.0, delta_start: 0.0, delta_end: 0.0 },
        ];
        assert!(Schedule::new(segs).is_err());
    }

    #[test]
    fn ramp_matches_slow_quench_shape() {
        let s = ramp_schedule(0.9, 3.3, -3.0, 2.2, 0.6).unwrap();
        assert_eq!(s.segments().len(), 3);
        let sweep = 6.3 / 2.2;
        assert!((s.duration() - (1.2 + sweep)).abs() < 1e-12);
        assert_eq!(s.delta(0.3), 3.3);
        assert!((s.omega(0.3) - 0.45).abs() < 1e-12);
        assert!((s.omega(0.6 + sweep / 2.0) - 0.9).abs() < 1e-12);
        let crossing = s.time_of_delta(0.0).unwrap();
        assert!((crossing - (0.6 + 3.3 / 2.2)).abs() < 1e-12);
        let seg = s.segments()[1];
        assert!(((seg.delta_end - seg.delta_start) - (-3.0 - 3.3)).abs() < 1e-15);
    }

    #[test]
    fn ramp_without_sweep_has_rise_and_fall_only() {
        let s = ramp_schedule(0.9, 3.3, 3.3, 2.2, 0.6).unwrap();
        assert_eq!(s.segments().len(), 2);
        assert!(ramp_schedule(0.9, 3.3, 0.0, 0.0, 0.6).is_err());
    }

    #[test]
    fn fast_ramp_approaches_sudden_pulse() {
        let r = ramp_schedule(1.0, 2.0, -1.0, 1e12, 0.1).unwrap();
        let s = sudden_schedule(1.0, -1.0, 0.0, 0.1, 0.1).unwrap();
        assert!((r.duration() - s.duration()).abs() < 1e-11);
        for k in 0..=20 {
            let t = 0.1 + 0.005 * k as f64;
            assert!((r.omega(t) - s.omega(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn steps_use_midpoint_average() {
        let s = sudden_schedule(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let steps = s.steps(5, &[]).unwrap();
        // the constant hold needs a single step
        assert_eq!(steps.len(), 6);
        assert!((steps[0].omega - 0.1).abs() < 1e-12);
        assert!((steps[4].omega - 0.9).abs() < 1e-12);
        assert!((steps.iter().map(|s| s.dt).sum::<f64>() - 2.0).abs() < 1e-12);
        let with_cut = s.steps(5, &[0.5]).unwrap();
        assert_eq!(with_cut.len(), 7);
        assert_eq!(s.steps(5, &[1.5]).unwrap().len(), 7);
    }

    #[test]
    fn csv_export_header() {
        let s = sudden_schedule(1.0, 0.5, 1.0, 0.0, 0.0).unwrap();
        let csv = s.to_csv(3);
        assert!(csv.starts_with("t,omega,delta\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn serde_round_trip() {
        let s = ramp_schedule(0.9, 3.3, -2.0, 4.4, 0.6).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Schedule = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<Schedule>("[]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn controls_continuous_and_ramp_integrates(di in -5.0f64..5.0, df in -5.0f64..5.0, rate in 0.1f64..10.0, tr in 0.0f64..1.0) {
                let s = ramp_schedule(0.9, di, df, rate, tr).unwrap();
                let total = s.duration();
                let n = 400;
                // probe offset scaled to the shortest segment so steep short rises stay within tolerance
                let eps = 1e-9 * s.segments().iter().map(|seg| seg.duration).fold(total, f64::min);
                for k in 0..n {
                    let t = total * k as f64 / n as f64;
                    let t2 = t + eps;
                    prop_assert!((s.omega(t2) - s.omega(t)).abs() < 1e-6);
                    prop_assert!((s.delta(t2) - s.delta(t)).abs() < 1e-6);
                }
                // integrated sweep rate equals the net detuning change
                let integral: f64 = s.segments().iter().map(|seg| seg.delta_end - seg.delta_start).sum();
                prop_assert!((integral - (df - di)).abs() < 1e-12);
            }
        }
    }
}
