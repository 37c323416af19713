use super::{CcaState, ControlProfile, FaultFlag};
use crate::netsim::FlowStats;

/// What [`customize`] did to the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Customization {
    /// Loss was at or above the threshold; the boost was suppressed.
    pub fallback: bool,
    /// The R1 floor raised the window.
    pub boosted: bool,
    /// The R2 cap lowered the window or pacing rate.
    pub clamped: bool,
}

/// Segments needed to carry `rate_mbps` over one `srtt_us8` round trip.
pub fn bdp_segments(rate_mbps: f64, srtt_us8: u32, mss: u32) -> f64 {
    let srtt_secs = srtt_us8 as f64 / 8.0 / 1e6;
    rate_mbps * 1e6 * srtt_secs / (mss as f64 * 8.0)
}

/// R3 fallback, R1 boost and R2 cap applied to one state.
///
/// `measured.mean_throughput_mbps` is the flow's current rate estimate and
/// `measured.loss_rate` its recent loss rate. Without an RTT estimate the
/// state is returned as is.
pub fn apply_customization(profile: &ControlProfile, state: &CcaState, measured: &FlowStats) -> CcaState {
    customize(profile, state, measured).0
}

pub fn customize(profile: &ControlProfile, state: &CcaState, measured: &FlowStats) -> (CcaState, Customization) {
    let mut next = *state;
    let mut what = Customization::default();
    if state.srtt_us8 == 0 {
        return (next, what);
    }

    what.fallback = measured.loss_rate >= profile.loss_threshold && !profile.has_fault(FaultFlag::R3Fault);
    if !what.fallback && !profile.has_fault(FaultFlag::R1Fault) && measured.mean_throughput_mbps < profile.min_rate_mbps {
        let floor = (profile.boost_gain * bdp_segments(profile.min_rate_mbps, state.srtt_us8, state.mss)).ceil();
        let floor = floor.min(super::CWND_CLAMP as f64) as u32;
        if next.cwnd < floor {
            next.cwnd = floor;
            next.cwnd_cnt = 0;
            what.boosted = true;
        }
    }

    if !profile.has_fault(FaultFlag::R2Fault) {
        let cap = (profile.cap_margin * bdp_segments(profile.max_rate_mbps, state.srtt_us8, state.mss)).floor();
        let cap = (cap.min(super::CWND_CLAMP as f64) as u32).max(1);
        if next.cwnd > cap {
            next.cwnd = cap;
            next.cwnd_cnt = 0;
            what.clamped = true;
        }
        let cap_bytes = (profile.cap_mbps() * 1e6 / 8.0) as u64;
        if next.pacing_rate.is_some_and(|r| r > cap_bytes) {
            next.pacing_rate = Some(cap_bytes);
            what.clamped = true;
        }
    }
    (next, what)
}

#[cfg(test)]
mod tests {
    use super::super::{throughput_from_cwnd, BaseCca};
    use super::*;
    use crate::requirements::RequirementSet;

    fn profile(min: f64, max: f64) -> ControlProfile {
        ControlProfile::from_requirements(BaseCca::Cubic, &RequirementSet::new(min, max, 0.05).unwrap(), 1.0)
    }

    fn measured(tput: f64, loss: f64) -> FlowStats {
        FlowStats { mean_throughput_mbps: tput, loss_rate: loss, ..Default::default() }
    }

    fn state(cwnd: u32, srtt_us: u32) -> CcaState {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.cwnd = cwnd;
        s.srtt_us8 = srtt_us << 3;
        s
    }

    #[test]
    fn heavy_loss_leaves_state_unchanged() {
        let s = state(40, 50_000);
        assert_eq!(apply_customization(&profile(16.0, 30.0), &s, &measured(5.0, 0.06)), s);
    }

    #[test]
    fn boost_raises_window_to_min_rate_bdp() {
        let s = state(20, 50_000);
        let out = apply_customization(&profile(16.0, 30.0), &s, &measured(12.0, 0.01));
        // 16e6 * 0.05 / 12000 = 66.7
        assert_eq!(out.cwnd, 67);
    }

    #[test]
    fn cap_clamps_to_max_rate_bdp() {
        // 35 Mbps at 50 ms is 145.8 segments.
        let s = state(146, 50_000);
        assert!(throughput_from_cwnd(s.cwnd, s.mss, s.srtt_us8) > 35.0);
        let out = apply_customization(&profile(16.0, 30.0), &s, &measured(35.0, 0.0));
        assert_eq!(out.cwnd, 125);
        assert!(throughput_from_cwnd(out.cwnd, out.mss, out.srtt_us8) <= 30.0);
    }

    #[test]
    fn cap_applies_after_boost() {
        let mut p = profile(16.0, 30.0);
        p.boost_gain = 3.0;
        let (out, what) = customize(&p, &state(10, 50_000), &measured(1.0, 0.0));
        assert!(what.boosted && what.clamped);
        assert_eq!(out.cwnd, 125);
    }

    #[test]
    fn pacing_rate_is_capped() {
        let mut s = state(10, 50_000);
        s.pacing_rate = Some(10_000_000);
        let out = apply_customization(&profile(1.0, 30.0), &s, &measured(20.0, 0.0));
        assert_eq!(out.pacing_rate, Some(3_750_000));
    }

    #[test]
    fn faults_disable_their_rule() {
        let s = state(20, 50_000);
        let p = profile(16.0, 30.0).with_faults([FaultFlag::R1Fault]);
        assert_eq!(apply_customization(&p, &s, &measured(12.0, 0.0)).cwnd, 20);
        let p = profile(16.0, 30.0).with_faults([FaultFlag::R2Fault]);
        assert_eq!(apply_customization(&p, &state(400, 50_000), &measured(90.0, 0.0)).cwnd, 400);
        let p = profile(16.0, 30.0).with_faults([FaultFlag::R3Fault]);
        assert_eq!(apply_customization(&p, &s, &measured(12.0, 0.5)).cwnd, 67);
    }

    #[test]
    fn no_rtt_estimate_means_no_change() {
        let s = state(20, 0);
        assert_eq!(apply_customization(&profile(16.0, 30.0), &s, &measured(0.0, 0.0)), s);
    }
}
