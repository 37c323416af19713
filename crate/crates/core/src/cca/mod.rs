//! Executable models of the base congestion control algorithms and the
//! customization wrapper.
//!
//! The models follow the Linux implementations closely: windows are counted
//! in segments, `snd_cwnd_cnt` accumulates fractional growth, and the
//! smoothed RTT is kept in the kernel's 1/8 microsecond fixed-point format.

mod cubic;
mod custom;
mod illinois;
mod profile;
mod reno;
mod source;
mod vegas;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cubic::{CubicScratch, CUBIC_BETA, CUBIC_BETA_SCALE, CUBIC_C};
pub use custom::{apply_customization, bdp_segments, customize, Customization};
pub use illinois::IllinoisScratch;
pub use profile::{ControlProfile, FaultFlag, FaultSet, ProfileError};
pub use source::{
    base_source, base_source_file_name, extract_profile, identify_base, render_patched_source, BPF_FAULT_DIAGNOSTIC,
    COMPILE_FAULT_DIAGNOSTIC, PROFILE_BEGIN, PROFILE_END,
};
pub use vegas::{VegasScratch, VEGAS_ALPHA, VEGAS_BETA, VEGAS_GAMMA};

/// Linux `TCP_INFINITE_SSTHRESH`.
pub const INFINITE_SSTHRESH: u32 = 0x7fff_ffff;
pub const INITIAL_CWND: u32 = 10;
pub const DEFAULT_MSS: u32 = 1500;
/// Upper bound on the window, like `snd_cwnd_clamp`.
pub const CWND_CLAMP: u32 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CcaError {
    #[error("unknown base congestion control algorithm `{0}`")]
    UnknownBase(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaseCca {
    Reno,
    Cubic,
    Vegas,
    Illinois,
}

impl BaseCca {
    pub const ALL: [BaseCca; 4] = [BaseCca::Reno, BaseCca::Cubic, BaseCca::Vegas, BaseCca::Illinois];

    pub fn name(self) -> &'static str {
        match self {
            BaseCca::Reno => "reno",
            BaseCca::Cubic => "cubic",
            BaseCca::Vegas => "vegas",
            BaseCca::Illinois => "illinois",
        }
    }
}

impl fmt::Display for BaseCca {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseCca {
    type Err = CcaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reno" => Ok(BaseCca::Reno),
            "cubic" => Ok(BaseCca::Cubic),
            "vegas" => Ok(BaseCca::Vegas),
            "illinois" => Ok(BaseCca::Illinois),
            _ => Err(CcaError::UnknownBase(s.to_string())),
        }
    }
}

/// Per-algorithm private state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmScratch {
    Reno,
    Cubic(CubicScratch),
    Vegas(VegasScratch),
    Illinois(IllinoisScratch),
}

/// Congestion control state of one flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaState {
    /// Segments.
    pub cwnd: u32,
    /// Fractional window growth accumulator (`snd_cwnd_cnt`).
    pub cwnd_cnt: u32,
    pub ssthresh: u32,
    /// Bytes per second, only for pacing-controlled flows.
    pub pacing_rate: Option<u64>,
    /// Smoothed RTT in 1/8 microseconds; zero until the first sample.
    pub srtt_us8: u32,
    pub mss: u32,
    pub scratch: AlgorithmScratch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckEvent {
    pub acked_segments: u32,
    pub rtt_sample_us: u32,
    /// Time the ACK is processed, microseconds since flow start.
    pub now_us: u64,
    /// Window growth is suspended while loss recovery is in progress.
    pub in_recovery: bool,
}

impl AckEvent {
    pub fn new(acked_segments: u32, rtt_sample_us: u32, now_us: u64) -> Self {
        AckEvent { acked_segments, rtt_sample_us, now_us, in_recovery: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossEvent {
    pub lost_segments: u32,
}

impl CcaState {
    pub fn new(base: BaseCca, mss: u32) -> Self {
        let scratch = match base {
            BaseCca::Reno => AlgorithmScratch::Reno,
            BaseCca::Cubic => AlgorithmScratch::Cubic(CubicScratch::default()),
            BaseCca::Vegas => AlgorithmScratch::Vegas(VegasScratch::default()),
            BaseCca::Illinois => AlgorithmScratch::Illinois(IllinoisScratch::default()),
        };
        CcaState {
            cwnd: INITIAL_CWND,
            cwnd_cnt: 0,
            ssthresh: INFINITE_SSTHRESH,
            pacing_rate: None,
            srtt_us8: 0,
            mss,
            scratch,
        }
    }

    pub fn base(&self) -> BaseCca {
        match self.scratch {
            AlgorithmScratch::Reno => BaseCca::Reno,
            AlgorithmScratch::Cubic(_) => BaseCca::Cubic,
            AlgorithmScratch::Vegas(_) => BaseCca::Vegas,
            AlgorithmScratch::Illinois(_) => BaseCca::Illinois,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }

    /// Smoothed RTT in microseconds.
    pub fn srtt_us(&self) -> u32 {
        self.srtt_us8 >> 3
    }

    fn update_srtt(&mut self, rtt_us: u32) {
        let rtt = rtt_us.max(1);
        if self.srtt_us8 == 0 {
            self.srtt_us8 = rtt << 3;
        } else {
            // srtt = 7/8 srtt + 1/8 rtt, kept scaled by 8.
            let srtt = self.srtt_us8 as i64;
            let updated = srtt + rtt as i64 - (srtt >> 3);
            self.srtt_us8 = updated.max(1) as u32;
        }
    }

    /// In-place form of [`on_ack`].
    pub fn ack(&mut self, ev: &AckEvent) {
        if ev.acked_segments == 0 {
            return;
        }
        self.update_srtt(ev.rtt_sample_us);
        match self.scratch {
            AlgorithmScratch::Reno => reno::on_ack(self, ev),
            AlgorithmScratch::Cubic(_) => cubic::on_ack(self, ev),
            AlgorithmScratch::Vegas(_) => vegas::on_ack(self, ev),
            AlgorithmScratch::Illinois(_) => illinois::on_ack(self, ev),
        }
        self.cwnd = self.cwnd.clamp(1, CWND_CLAMP);
    }

    /// In-place form of [`on_loss`]: one multiplicative decrease.
    pub fn loss(&mut self, _ev: &LossEvent) {
        let ssthresh = match self.scratch {
            AlgorithmScratch::Reno | AlgorithmScratch::Vegas(_) => reno::ssthresh(self),
            AlgorithmScratch::Cubic(_) => cubic::ssthresh(self),
            AlgorithmScratch::Illinois(_) => illinois::ssthresh(self),
        };
        self.ssthresh = ssthresh.max(2);
        // A window already below ssthresh is left alone (cwnd=1 stays 1).
        self.cwnd = self.ssthresh.min(self.cwnd).max(1);
        self.cwnd_cnt = 0;
    }

    /// Retransmission timeout: decrease as for a loss, then restart from one
    /// segment.
    pub fn timeout(&mut self) {
        self.loss(&LossEvent { lost_segments: 1 });
        self.cwnd = 1;
        self.cwnd_cnt = 0;
        match &mut self.scratch {
            AlgorithmScratch::Reno => {}
            AlgorithmScratch::Cubic(s) => s.reset(),
            AlgorithmScratch::Vegas(s) => s.reset_epoch(),
            AlgorithmScratch::Illinois(s) => s.reset(),
        }
    }
}

/// Applies one ACK to `state` and returns the updated state.
pub fn on_ack(state: &CcaState, ev: &AckEvent) -> CcaState {
    let mut next = *state;
    next.ack(ev);
    next
}

/// Applies one loss event to `state` and returns the updated state.
pub fn on_loss(state: &CcaState, ev: &LossEvent) -> CcaState {
    let mut next = *state;
    next.loss(ev);
    next
}

/// Throughput implied by a window: `cwnd * mss * 8 / srtt`, in Mbps.
///
/// `srtt_us8` is the kernel's 1/8 microsecond value; zero yields zero.
pub fn throughput_from_cwnd(cwnd: u32, mss: u32, srtt_us8: u32) -> f64 {
    if srtt_us8 == 0 {
        return 0.0;
    }
    let srtt_secs = srtt_us8 as f64 / 8.0 / 1e6;
    cwnd as f64 * mss as f64 * 8.0 / srtt_secs / 1e6
}

/// Linux `tcp_slow_start`: grows toward ssthresh and returns the acked count
/// left over for congestion avoidance.
pub(crate) fn slow_start(state: &mut CcaState, acked: u32) -> u32 {
    let cwnd = state.cwnd.saturating_add(acked).min(state.ssthresh).min(CWND_CLAMP);
    let used = cwnd - state.cwnd;
    state.cwnd = cwnd;
    acked - used.min(acked)
}

/// Linux `tcp_cong_avoid_ai`: one segment per `w` acked segments.
pub(crate) fn cong_avoid_ai(state: &mut CcaState, w: u32, acked: u32) {
    let w = w.max(1);
    if state.cwnd_cnt >= w {
        state.cwnd_cnt = 0;
        state.cwnd += 1;
    }
    state.cwnd_cnt += acked;
    if state.cwnd_cnt >= w {
        let delta = state.cwnd_cnt / w;
        state.cwnd_cnt -= delta * w;
        state.cwnd = state.cwnd.saturating_add(delta).min(CWND_CLAMP);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_names_round_trip() {
        for base in BaseCca::ALL {
            assert_eq!(base.name().parse::<BaseCca>().unwrap(), base);
        }
        assert_eq!("bbr".parse::<BaseCca>(), Err(CcaError::UnknownBase("bbr".into())));
    }

    #[test]
    fn srtt_is_stored_scaled_by_eight() {
        let mut s = CcaState::new(BaseCca::Reno, 1500);
        s.ack(&AckEvent::new(1, 100_000, 0));
        assert_eq!(s.srtt_us8, 800_000);
        assert_eq!(s.srtt_us(), 100_000);
        // 7/8 * 100 ms + 1/8 * 20 ms = 90 ms
        s.ack(&AckEvent::new(1, 20_000, 0));
        assert_eq!(s.srtt_us(), 90_000);
    }

    #[test]
    fn throughput_formula_examples() {
        assert!((throughput_from_cwnd(10, 1500, 8 * 100_000) - 1.2).abs() < 1e-12);
        assert!((throughput_from_cwnd(100, 1500, 8 * 50_000) - 24.0).abs() < 1e-12);
        let one = throughput_from_cwnd(37, 1500, 8 * 42_000);
        let two = throughput_from_cwnd(74, 1500, 8 * 42_000);
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert_eq!(throughput_from_cwnd(10, 1500, 0), 0.0);
    }

    #[test]
    fn loss_never_drops_below_one_segment() {
        for base in BaseCca::ALL {
            let mut s = CcaState::new(base, 1500);
            s.cwnd = 1;
            s.loss(&LossEvent { lost_segments: 1 });
            assert!(s.cwnd >= 1, "{base}");
            assert!(s.ssthresh >= 2, "{base}");
        }
    }

    #[test]
    fn timeout_restarts_from_one_segment() {
        for base in BaseCca::ALL {
            let mut s = CcaState::new(base, 1500);
            s.cwnd = 40;
            s.timeout();
            assert_eq!(s.cwnd, 1, "{base}");
            assert!(s.ssthresh >= 2);
        }
    }

    #[test]
    fn slow_start_hands_leftover_to_avoidance() {
        let mut s = CcaState::new(BaseCca::Reno, 1500);
        s.cwnd = 8;
        s.ssthresh = 10;
        assert_eq!(slow_start(&mut s, 5), 3);
        assert_eq!(s.cwnd, 10);
    }

    #[test]
    fn pure_wrappers_leave_input_untouched() {
        let s = CcaState::new(BaseCca::Cubic, 1500);
        let after = on_ack(&s, &AckEvent::new(3, 20_000, 1_000));
        assert_eq!(s.cwnd, INITIAL_CWND);
        assert_eq!(after.cwnd, INITIAL_CWND + 3);
        let lost = on_loss(&after, &LossEvent { lost_segments: 1 });
        assert_eq!(after.cwnd, INITIAL_CWND + 3);
        assert!(lost.cwnd < after.cwnd);
    }
}
