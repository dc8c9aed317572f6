//! Piecewise longitudinal motion: each segment applies a constant
//! acceleration until the speed reaches a cap, then holds that speed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub x0: f64,
    pub v0: f64,
    /// m/s^2; zero means cruise at `v0`.
    pub accel: f64,
    /// Speed held once reached. Above `v0` when accelerating, below when braking.
    pub v_cap: f64,
}

impl Segment {
    pub fn new(t0: f64, x0: f64, v0: f64, accel: f64, v_cap: f64) -> Self {
        let v_cap = if accel > 0.0 {
            v_cap.max(v0)
        } else if accel < 0.0 {
            v_cap.min(v0).max(0.0)
        } else {
            v0
        };
        Self { t0, x0, v0, accel, v_cap }
    }

    pub fn cruise(t0: f64, x0: f64, v: f64) -> Self {
        Self { t0, x0, v0: v, accel: 0.0, v_cap: v }
    }

    /// Duration of the constant-acceleration phase.
    #[inline]
    pub fn ramp_duration(&self) -> f64 {
        if self.accel == 0.0 {
            0.0
        } else {
            ((self.v_cap - self.v0) / self.accel).max(0.0)
        }
    }

    #[inline]
    fn ramp_distance(&self) -> f64 {
        let r = self.ramp_duration();
        self.v0 * r + 0.5 * self.accel * r * r
    }

    /// Position and velocity at absolute time `t >= t0`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let tau = (t - self.t0).max(0.0);
        let r = self.ramp_duration();
        if tau <= r {
            (self.x0 + self.v0 * tau + 0.5 * self.accel * tau * tau, self.v0 + self.accel * tau)
        } else {
            (self.x0 + self.ramp_distance() + self.v_cap * (tau - r), self.v_cap)
        }
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        if t - self.t0 < self.ramp_duration() {
            self.accel
        } else {
            0.0
        }
    }

    /// Absolute time at which position `x` is reached, `None` if never.
    pub fn time_at(&self, x: f64) -> Option<f64> {
        let d = x - self.x0;
        if d <= 0.0 {
            return Some(self.t0);
        }
        let rd = self.ramp_distance();
        if d <= rd {
            let disc = (self.v0 * self.v0 + 2.0 * self.accel * d).max(0.0);
            let denom = self.v0 + disc.sqrt();
            if denom <= 0.0 {
                return None;
            }
            Some(self.t0 + 2.0 * d / denom)
        } else if self.v_cap > 0.0 {
            Some(self.t0 + self.ramp_duration() + (d - rd) / self.v_cap)
        } else {
            None
        }
    }
}

/// Time-ordered sequence of segments; each starts where the previous one is
/// cut off.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub segments: Vec<Segment>,
}

impl Profile {
    pub fn new(first: Segment) -> Self {
        Self { segments: vec![first] }
    }

    pub fn push(&mut self, segment: Segment) {
        self.segments.push(segment);
    }

    pub fn last(&self) -> &Segment {
        self.segments.last().expect("profile has at least one segment")
    }

    fn segment_for_time(&self, t: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.t0 <= t);
        &self.segments[i.saturating_sub(1)]
    }

    pub fn state_at(&self, t: f64) -> (f64, f64) {
        self.segment_for_time(t).state_at(t)
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        self.segment_for_time(t).accel_at(t)
    }

    pub fn time_at(&self, x: f64) -> Option<f64> {
        let i = self.segments.partition_point(|s| s.x0 <= x);
        self.segments[i.saturating_sub(1)].time_at(x)
    }

    /// Times at which the applied acceleration may change.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() * 2);
        for s in &self.segments {
            out.push(s.t0);
            let r = s.ramp_duration();
            if r > 0.0 {
                out.push(s.t0 + r);
            }
        }
        out
    }
}

/// Constant acceleration (with the capping rule of [`Segment`]) that covers
/// distance `d` in exactly `duration` seconds starting at speed `v0`.
///
/// Speeding up saturates at `v_max`; slowing down saturates at `floor`
/// (pass `0.0` for no floor). Returns `+inf`/`-inf` when no acceleration of
/// that family can do it.
pub fn solve_accel(v0: f64, d: f64, duration: f64, v_max: f64, floor: f64) -> f64 {
    if duration <= 0.0 {
        return f64::INFINITY;
    }
    let pure = 2.0 * (d - v0 * duration) / (duration * duration);
    let v_end = v0 + pure * duration;
    if pure >= 0.0 {
        if v_end <= v_max {
            return pure;
        }
        let slack = v_max * duration - d;
        if slack <= 0.0 {
            return f64::INFINITY;
        }
        (v_max - v0).powi(2) / (2.0 * slack)
    } else {
        if v_end >= floor {
            return pure;
        }
        if floor <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let slack = d - floor * duration;
        if slack <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -(v0 - floor).powi(2) / (2.0 * slack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_then_cruise() {
        let s = Segment::new(1.0, 0.0, 10.0, 2.0, 20.0);
        assert_eq!(s.ramp_duration(), 5.0);
        let (x, v) = s.state_at(6.0);
        assert!((x - 75.0).abs() < 1e-12 && v == 20.0);
        let (x, v) = s.state_at(8.0);
        assert!((x - 115.0).abs() < 1e-12 && v == 20.0);
        assert!((s.time_at(115.0).unwrap() - 8.0).abs() < 1e-12);
        assert!((s.time_at(75.0).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn braking_to_stop_never_passes_stop_point() {
        let s = Segment::new(0.0, 0.0, 10.0, -5.0, 0.0);
        assert_eq!(s.time_at(10.0), Some(2.0));
        assert_eq!(s.time_at(10.5), None);
        assert_eq!(s.state_at(100.0), (10.0, 0.0));
    }

    #[test]
    fn solved_acceleration_hits_target() {
        for &(v0, d, t) in &[(10.0, 50.0, 4.0), (10.0, 50.0, 6.0), (15.0, 60.0, 3.2), (3.0, 40.0, 30.0), (0.0, 5.0, 2.0)] {
            let a = solve_accel(v0, d, t, 20.0, 1.0);
            assert!(a.is_finite());
            let cap = if a > 0.0 { 20.0 } else { 1.0 };
            let s = Segment::new(0.0, 0.0, v0, a, cap);
            assert!((s.time_at(d).unwrap() - t).abs() < 1e-9, "v0={v0} d={d} t={t} a={a}");
        }
        assert_eq!(solve_accel(10.0, 50.0, 2.0, 20.0, 1.0), f64::INFINITY);
        assert_eq!(solve_accel(10.0, 50.0, 100.0, 20.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(solve_accel(10.0, 10.0, 3.0, 20.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn profile_lookup_spans_segments() {
        let mut p = Profile::new(Segment::new(0.0, 0.0, 10.0, -2.0, 0.0));
        let (x, v) = p.segments[0].state_at(2.0);
        p.push(Segment::new(2.0, x, v, 1.0, 20.0));
        assert_eq!(p.state_at(1.0), p.segments[0].state_at(1.0));
        assert_eq!(p.state_at(3.0), p.segments[1].state_at(3.0));
        assert!((p.time_at(x).unwrap() - 2.0).abs() < 1e-12);
        let t = p.time_at(x + 10.0).unwrap();
        assert!((p.state_at(t).0 - x - 10.0).abs() < 1e-9);
    }
}
