//! Bang-off-bang velocity command profiles.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Velocity command that starts at `v_max`, toggles between `v_max` and zero at
/// each switch time, and ends (switching to zero) at `t_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct BangOffBangProfile<T> {
    switch_times: Vec<T>,
    t_f: T,
    v_max: T,
}

/// One constant-input interval of a profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T> {
    pub start: T,
    pub end: T,
    pub on: bool,
}

impl<T: Real> Segment<T> {
    pub fn duration(&self) -> T {
        self.end - self.start
    }
}

impl<T: Real> BangOffBangProfile<T> {
    /// Builds a profile, checking `0 < T_1 < ... < T_N < t_f` with `N` even.
    ///
    /// A profile with no switches and `t_f = 0` is the empty (zero-duration)
    /// command.
    pub fn new(switch_times: Vec<T>, t_f: T, v_max: T) -> Result<Self> {
        if !(v_max > T::zero()) || !v_max.is_finite() {
            return Err(Error::Domain(format!(
                "velocity limit must be positive, got {v_max}"
            )));
        }
        if switch_times.len() % 2 != 0 {
            return Err(Error::Contract(format!(
                "bang-off-bang profile needs an even switch count, got {}",
                switch_times.len()
            )));
        }
        if !t_f.is_finite() || t_f < T::zero() {
            return Err(Error::Contract(format!(
                "maneuver time must be finite and >= 0, got {t_f}"
            )));
        }
        let mut prev = T::zero();
        for (i, &t) in switch_times.iter().chain(std::iter::once(&t_f)).enumerate() {
            let is_end = i == switch_times.len();
            let ok = if is_end && switch_times.is_empty() {
                t >= prev
            } else {
                t > prev
            };
            if !ok || !t.is_finite() {
                return Err(Error::Contract(format!(
                    "switch times must be strictly increasing from 0: entry {i} = {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(Self {
            switch_times,
            t_f,
            v_max,
        })
    }

    /// Constant-velocity pulse of duration `t_f`.
    pub fn pulse(t_f: T, v_max: T) -> Result<Self> {
        Self::new(Vec::new(), t_f, v_max)
    }

    pub fn switch_times(&self) -> &[T] {
        &self.switch_times
    }

    pub fn t_f(&self) -> T {
        self.t_f
    }

    pub fn v_max(&self) -> T {
        self.v_max
    }

    pub fn n_switches(&self) -> usize {
        self.switch_times.len()
    }

    /// `T_1, ..., T_N, T_{N+1} = t_f`.
    pub fn delays(&self) -> Vec<T> {
        let mut d = self.switch_times.clone();
        d.push(self.t_f);
        d
    }

    pub fn segments(&self) -> Vec<Segment<T>> {
        let mut out = Vec::with_capacity(self.switch_times.len() + 1);
        let mut start = T::zero();
        for (i, end) in self.delays().into_iter().enumerate() {
            out.push(Segment {
                start,
                end,
                on: i % 2 == 0,
            });
            start = end;
        }
        out
    }

    /// Sum of the on-interval durations.
    pub fn on_duration(&self) -> T {
        self.segments()
            .iter()
            .filter(|s| s.on)
            .fold(T::zero(), |acc, s| acc + s.duration())
    }

    /// Rigid-body displacement `V_m * on_duration`.
    pub fn displacement(&self) -> T {
        self.v_max * self.on_duration()
    }

    /// Commanded velocity at `t` (right-continuous; zero outside `[0, t_f)`).
    pub fn velocity_at(&self, t: T) -> T {
        if t < T::zero() || t >= self.t_f {
            return T::zero();
        }
        let k = self.switch_times.iter().take_while(|&&s| s <= t).count();
        if k % 2 == 0 {
            self.v_max
        } else {
            T::zero()
        }
    }

    /// Smallest segment duration.
    pub fn min_gap(&self) -> T {
        self.segments()
            .iter()
            .map(|s| s.duration())
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// Converts the scalar type; used to lift profiles into dual numbers.
    pub fn cast<U: Real>(&self) -> BangOffBangProfile<U> {
        let c = |x: T| U::lit(x.value());
        BangOffBangProfile {
            switch_times: self.switch_times.iter().map(|&t| c(t)).collect(),
            t_f: c(self.t_f),
            v_max: c(self.v_max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unordered_and_odd_switches() {
        assert!(matches!(
            BangOffBangProfile::new(vec![0.3, 0.2], 1.0, 240.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            BangOffBangProfile::new(vec![0.3], 1.0, 240.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            BangOffBangProfile::new(vec![0.3, 1.2], 1.0, 240.0),
            Err(Error::Contract(_))
        ));
        assert!(BangOffBangProfile::new(vec![0.0, 0.2], 1.0, 240.0).is_err());
    }

    #[test]
    fn segments_alternate_and_integrate() {
        let p = BangOffBangProfile::new(vec![0.2_f64, 0.5], 0.7, 240.0).unwrap();
        let segs = p.segments();
        assert_eq!(segs.len(), 3);
        assert!(segs[0].on && !segs[1].on && segs[2].on);
        assert!((p.on_duration() - 0.4).abs() < 1e-15);
        assert!((p.displacement() - 96.0).abs() < 1e-12);
        assert_eq!(p.velocity_at(0.1), 240.0);
        assert_eq!(p.velocity_at(0.3), 0.0);
        assert_eq!(p.velocity_at(0.7), 0.0);
    }

    #[test]
    fn empty_profile_is_allowed() {
        let p = BangOffBangProfile::pulse(0.0, 240.0).unwrap();
        assert_eq!(p.displacement(), 0.0);
    }
}
