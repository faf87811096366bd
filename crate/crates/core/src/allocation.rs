//! Spatial-temporal allocations between agent pairs.
//!
//! An [`Allocation`] assigns agent `i` one open half space per instant with
//! respect to neighbor `j`. It is the concatenation of [`Renewal`] segments:
//! each renewal is produced from both agents' committed trajectories and
//! overrides the allocation from its start time onward, leaving everything
//! earlier untouched. Between stamps the most recent stamp's half space
//! holds; past the settle time the last stamp holds forever.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{separating_hyperplane, HalfSpace, Polygon};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("trajectories overlap at t = {time}; renewal aborted")]
    RenewalFailure { time: f64 },
    #[error("renewal start {start} precedes the current segment start {current}")]
    ProtocolViolation { start: f64, current: f64 },
    #[error("time {t} precedes allocation establishment at {established}")]
    OutOfDomain { t: f64, established: f64 },
    #[error("allocation has not been established")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub time: f64,
    pub half_space: HalfSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Renewal {
    pub t_start: f64,
    pub t_settle: f64,
    pub stamps: Vec<Stamp>,
}

impl Renewal {
    pub fn new(t_start: f64, t_settle: f64, stamps: Vec<Stamp>) -> Result<Self, AllocationError> {
        if !(t_start <= t_settle) {
            return Err(AllocationError::InvalidArgument("renewal start must not exceed settle time"));
        }
        if stamps.is_empty() || stamps[0].time != t_start {
            return Err(AllocationError::InvalidArgument("renewal stamps must begin at the start time"));
        }
        if stamps.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(AllocationError::InvalidArgument("renewal stamps must strictly increase"));
        }
        Ok(Self { t_start, t_settle, stamps })
    }

    /// Half space held for all times past the settle time.
    pub fn tail(&self) -> &HalfSpace {
        &self.stamps.last().expect("non-empty by construction").half_space
    }

    /// The partner's side of the same renewal.
    pub fn mirror(&self) -> Renewal {
        Renewal {
            t_start: self.t_start,
            t_settle: self.t_settle,
            stamps: self
                .stamps
                .iter()
                .map(|s| Stamp { time: s.time, half_space: s.half_space.mirror() })
                .collect(),
        }
    }

    /// Zero-order-hold lookup, `t >= t_start` assumed.
    pub fn at(&self, t: f64) -> &HalfSpace {
        let idx = self.stamps.partition_point(|s| s.time <= t);
        &self.stamps[idx.saturating_sub(1)].half_space
    }
}

/// Stamp times `t_start + k * dt` covering `[t_start, t_settle]`, the final
/// one clamped to `t_settle`.
pub fn stamp_times(t_start: f64, t_settle: f64, dt_alloc: f64) -> Vec<f64> {
    let mut times = vec![t_start];
    let mut k = 1usize;
    loop {
        let t = t_start + dt_alloc * k as f64;
        // Avoid a sliver stamp just below the settle time.
        if t >= t_settle - 1e-9 {
            break;
        }
        times.push(t);
        k += 1;
    }
    if t_settle > t_start && *times.last().unwrap() < t_settle {
        times.push(t_settle);
    }
    times
}

/// Builds agent `i`'s side of a renewal from the two committed trajectories.
#[allow(clippy::too_many_arguments)]
pub fn make_renewal(
    traj_i: &Trajectory,
    footprint_i: &Polygon,
    traj_j: &Trajectory,
    footprint_j: &Polygon,
    t_start: f64,
    t_settle: f64,
    dt_alloc: f64,
) -> Result<Renewal, AllocationError> {
    make_renewal_sampled(
        |t| traj_i.shape_at(footprint_i, t),
        |t| traj_j.shape_at(footprint_j, t),
        t_start,
        t_settle,
        dt_alloc,
        false,
    )
}

/// Renewal from arbitrary time-indexed shapes. With `midpoint` set, the
/// half space stamped at `t_a` separates the shapes sampled halfway to the
/// next stamp instead of at `t_a` itself.
pub fn make_renewal_sampled(
    shape_i: impl Fn(f64) -> Polygon,
    shape_j: impl Fn(f64) -> Polygon,
    t_start: f64,
    t_settle: f64,
    dt_alloc: f64,
    midpoint: bool,
) -> Result<Renewal, AllocationError> {
    if !(t_start <= t_settle) || !(dt_alloc > 0.0) {
        return Err(AllocationError::InvalidArgument("need t_start <= t_settle and dt_alloc > 0"));
    }
    let times = stamp_times(t_start, t_settle, dt_alloc);
    let stamps = times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let at = match times.get(k + 1) {
                Some(&next) if midpoint => 0.5 * (time + next),
                _ => time,
            };
            separating_hyperplane(&shape_i(at), &shape_j(at))
                .map(|half_space| Stamp { time, half_space })
                .map_err(|_| AllocationError::RenewalFailure { time })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Renewal::new(t_start, t_settle, stamps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub valid_from: f64,
    pub renewal: Renewal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    segments: Vec<Segment>,
}

impl Allocation {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn established_at(&self) -> Option<f64> {
        self.segments.first().map(|s| s.valid_from)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Live segment start, i.e. the latest renewal start.
    pub fn last_valid_from(&self) -> Option<f64> {
        self.segments.last().map(|s| s.valid_from)
    }

    pub fn live(&self) -> Option<&Renewal> {
        self.segments.last().map(|s| &s.renewal)
    }

    /// Keeps everything before `renewal.t_start` and takes the renewal from
    /// there on.
    pub fn update(&mut self, renewal: Renewal) -> Result<(), AllocationError> {
        if let Some(current) = self.last_valid_from() {
            if renewal.t_start < current {
                return Err(AllocationError::ProtocolViolation { start: renewal.t_start, current });
            }
        }
        let start = renewal.t_start;
        self.segments.retain(|s| s.valid_from < start);
        self.segments.push(Segment { valid_from: start, renewal });
        Ok(())
    }

    pub fn updated(&self, renewal: Renewal) -> Result<Allocation, AllocationError> {
        let mut a = self.clone();
        a.update(renewal)?;
        Ok(a)
    }

    fn segment_index(&self, t: f64) -> Result<usize, AllocationError> {
        let established = self.established_at().ok_or(AllocationError::Empty)?;
        if t < established {
            return Err(AllocationError::OutOfDomain { t, established });
        }
        Ok(self.segments.partition_point(|s| s.valid_from <= t) - 1)
    }

    pub fn query(&self, t: f64) -> Result<HalfSpace, AllocationError> {
        let i = self.segment_index(t)?;
        Ok(*self.segments[i].renewal.at(t))
    }

    /// Every distinct half space in force at some time of `[t0, t1]`, paired
    /// with the time it takes effect (clipped to `t0`). `t1 = INFINITY`
    /// reaches the tail.
    pub fn pieces(&self, t0: f64, t1: f64) -> Result<Vec<Stamp>, AllocationError> {
        let first = self.segment_index(t0)?;
        let mut out = vec![Stamp { time: t0, half_space: self.query(t0)? }];
        for (si, seg) in self.segments.iter().enumerate().skip(first) {
            let seg_end = self.segments.get(si + 1).map_or(f64::INFINITY, |n| n.valid_from);
            for st in &seg.renewal.stamps {
                if st.time > t0 && st.time <= t1 && st.time < seg_end {
                    out.push(*st);
                }
            }
        }
        Ok(out)
    }

    /// Right end of the last non-constant stretch.
    pub fn settle_time(&self) -> Option<f64> {
        self.live().map(|r| r.t_settle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AgentState, ModelKind};
    use crate::geometry::Vec2;

    fn hs(nx: f64, off: f64) -> HalfSpace {
        HalfSpace::new(Vec2::new(nx, 0.0), off).unwrap()
    }

    fn renewal(t0: f64, t1: f64, offsets: &[f64]) -> Renewal {
        let times = stamp_times(t0, t1, (t1 - t0) / (offsets.len() - 1).max(1) as f64);
        assert_eq!(times.len(), offsets.len());
        Renewal::new(t0, t1, times.iter().zip(offsets).map(|(&time, &o)| Stamp { time, half_space: hs(1.0, o) }).collect())
            .unwrap()
    }

    fn still(x: f64) -> Trajectory {
        Trajectory::new(0.0, 0.15, vec![AgentState([x, 0.0, 0.0, 0.0])], ModelKind::DoubleIntegrator).unwrap()
    }

    #[test]
    fn stamp_grid_clamps_to_settle() {
        assert_eq!(stamp_times(1.0, 1.0, 0.15), vec![1.0]);
        let t = stamp_times(0.0, 0.4, 0.15);
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), 0.4);
    }

    #[test]
    fn static_pair_renewal() {
        let fp = Polygon::rectangle(1.0, 1.0).unwrap();
        let r = make_renewal(&still(2.0), &fp, &still(0.0), &fp, 0.0, 0.6, 0.15).unwrap();
        assert_eq!(r.stamps.len(), 5);
        for s in &r.stamps {
            assert!((s.half_space.normal.x - 1.0).abs() < 1e-12 && (s.half_space.offset - 1.0).abs() < 1e-12);
        }
        let r = make_renewal(&still(2.0), &fp, &still(0.0), &fp, 3.0, 3.0, 0.15).unwrap();
        assert_eq!(r.stamps.len(), 1);
        assert_eq!(r.tail(), &r.stamps[0].half_space);
        assert_eq!(
            make_renewal(&still(0.5), &fp, &still(0.0), &fp, 0.0, 0.3, 0.15),
            Err(AllocationError::RenewalFailure { time: 0.0 })
        );
    }

    #[test]
    fn update_and_query() {
        let mut a = Allocation::empty();
        assert_eq!(a.query(0.0), Err(AllocationError::Empty));
        a.update(renewal(1.0, 2.0, &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(a.established_at(), Some(1.0));
        assert_eq!(a.query(1.0).unwrap().offset, 1.0);
        assert_eq!(a.query(1.49).unwrap().offset, 1.0);
        assert_eq!(a.query(1.5).unwrap().offset, 2.0);
        assert_eq!(a.query(102.0).unwrap().offset, 3.0);
        assert!(matches!(a.query(0.5), Err(AllocationError::OutOfDomain { .. })));

        a.update(renewal(1.7, 3.0, &[10.0, 11.0])).unwrap();
        assert_eq!(a.query(1.6).unwrap().offset, 2.0);
        assert_eq!(a.query(1.7).unwrap().offset, 10.0);
        assert_eq!(a.query(50.0).unwrap().offset, 11.0);
        assert!(matches!(a.update(renewal(1.2, 3.0, &[0.0, 0.0])), Err(AllocationError::ProtocolViolation { .. })));
        // same start replaces the live segment
        a.update(renewal(1.7, 2.0, &[7.0, 8.0])).unwrap();
        assert_eq!(a.segments().len(), 2);
        assert_eq!(a.query(1.8).unwrap().offset, 7.0);
    }

    #[test]
    fn pieces_lists_every_switch() {
        let mut a = Allocation::empty();
        a.update(renewal(0.0, 1.0, &[1.0, 2.0, 3.0])).unwrap();
        a.update(renewal(0.8, 1.6, &[4.0, 5.0])).unwrap();
        let p = a.pieces(0.2, 0.9).unwrap();
        let offs: Vec<f64> = p.iter().map(|s| s.half_space.offset).collect();
        assert_eq!(offs, vec![1.0, 2.0, 4.0]);
        let p = a.pieces(0.2, f64::INFINITY).unwrap();
        assert_eq!(p.last().unwrap().half_space.offset, 5.0);
        // the superseded stamp at t=1.0 never appears
        assert!(p.iter().all(|s| s.half_space.offset != 3.0));
    }

    #[test]
    fn mirror_renewal_flips_every_stamp() {
        let r = renewal(0.0, 1.0, &[1.0, 2.0]);
        let m = r.mirror();
        assert_eq!(m.stamps[1].half_space.offset, -2.0);
        assert_eq!(m.mirror(), r);
    }
}
