//! TCP Vegas, after Linux `tcp_vegas.c`.
//!
//! Once per RTT the window is compared against the window that would just
//! fill the path at the base RTT. `diff = cwnd * (rtt - base_rtt) / base_rtt`
//! estimates the segments queued in the network: above `beta` the window
//! shrinks by one, below `alpha` it grows by one.

use super::{slow_start, AckEvent, AlgorithmScratch, CcaState, INITIAL_CWND};

pub const VEGAS_ALPHA: u32 = 2;
pub const VEGAS_BETA: u32 = 4;
pub const VEGAS_GAMMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VegasScratch {
    /// Minimum RTT ever seen, microseconds.
    pub base_rtt_us: u32,
    /// Minimum RTT within the current RTT epoch.
    pub min_rtt_us: u32,
    /// RTT samples within the current epoch.
    pub cnt_rtt: u32,
    /// Segments acked since the epoch began.
    pub epoch_acked: u32,
    /// Window at the start of the epoch; the epoch ends once it is acked.
    pub epoch_cwnd: u32,
}

impl Default for VegasScratch {
    fn default() -> Self {
        VegasScratch {
            base_rtt_us: u32::MAX,
            min_rtt_us: u32::MAX,
            cnt_rtt: 0,
            epoch_acked: 0,
            epoch_cwnd: INITIAL_CWND,
        }
    }
}

impl VegasScratch {
    pub fn reset_epoch(&mut self) {
        self.min_rtt_us = u32::MAX;
        self.cnt_rtt = 0;
        self.epoch_acked = 0;
    }
}

/// `tcp_vegas_ssthresh`.
fn vegas_ssthresh(state: &CcaState) -> u32 {
    state.ssthresh.min(state.cwnd.saturating_sub(1)).max(2)
}

pub(super) fn on_ack(state: &mut CcaState, ev: &AckEvent) {
    let AlgorithmScratch::Vegas(mut v) = state.scratch else {
        unreachable!("vegas handler on non-vegas state");
    };
    let rtt = ev.rtt_sample_us.max(1);
    v.base_rtt_us = v.base_rtt_us.min(rtt);
    v.min_rtt_us = v.min_rtt_us.min(rtt);
    v.cnt_rtt += 1;

    if !ev.in_recovery {
        v.epoch_acked += ev.acked_segments;
        if v.epoch_acked >= v.epoch_cwnd {
            if v.cnt_rtt <= 2 {
                // Too few samples for a delay estimate: behave like Reno.
                reno_cong_avoid(state, ev.acked_segments);
            } else {
                adjust(state, &v, ev.acked_segments);
            }
            v.reset_epoch();
            v.epoch_cwnd = state.cwnd;
        } else if state.in_slow_start() {
            slow_start(state, ev.acked_segments);
        }
    }
    state.scratch = AlgorithmScratch::Vegas(v);
}

fn reno_cong_avoid(state: &mut CcaState, acked: u32) {
    let mut acked = acked;
    if state.in_slow_start() {
        acked = slow_start(state, acked);
        if acked == 0 {
            return;
        }
    }
    super::cong_avoid_ai(state, state.cwnd, acked);
}

fn adjust(state: &mut CcaState, v: &VegasScratch, acked: u32) {
    let rtt = v.min_rtt_us as u64;
    let base = v.base_rtt_us as u64;
    let cwnd = state.cwnd as u64;
    let target_cwnd = cwnd * base / rtt;
    let diff = cwnd * (rtt - base) / base;

    if diff > VEGAS_GAMMA as u64 && state.in_slow_start() {
        // Queue is building during slow start: leave it.
        state.cwnd = state.cwnd.min(target_cwnd as u32 + 1);
        state.ssthresh = vegas_ssthresh(state);
    } else if state.in_slow_start() {
        slow_start(state, acked);
    } else if diff > VEGAS_BETA as u64 {
        state.cwnd -= 1;
        state.ssthresh = vegas_ssthresh(state);
    } else if diff < VEGAS_ALPHA as u64 {
        state.cwnd += 1;
    }

    state.cwnd = state.cwnd.max(2);
    // tcp_current_ssthresh
    state.ssthresh = state.ssthresh.max((state.cwnd >> 1) + (state.cwnd >> 2));
}

#[cfg(test)]
mod tests {
    use super::super::BaseCca;
    use super::*;

    fn state_with(cwnd: u32, ssthresh: u32, base_rtt: u32, min_rtt: u32, cnt_rtt: u32) -> CcaState {
        let mut s = CcaState::new(BaseCca::Vegas, 1500);
        s.cwnd = cwnd;
        s.ssthresh = ssthresh;
        s.srtt_us8 = min_rtt << 3;
        s.scratch = AlgorithmScratch::Vegas(VegasScratch {
            base_rtt_us: base_rtt,
            min_rtt_us: min_rtt,
            cnt_rtt,
            epoch_acked: 0,
            epoch_cwnd: cwnd,
        });
        s
    }

    #[test]
    fn queueing_above_beta_shrinks_window_by_one() {
        // diff = 20 * (70 - 50) / 50 = 8 > beta = 4
        let mut s = state_with(20, 10, 50_000, 70_000, 3);
        s.ack(&AckEvent::new(20, 70_000, 0));
        assert_eq!(s.cwnd, 19);
    }

    #[test]
    fn queueing_below_alpha_grows_window_by_one() {
        // diff = 20 * (51 - 50) / 50 = 0 < alpha = 2
        let mut s = state_with(20, 10, 50_000, 51_000, 3);
        s.ack(&AckEvent::new(20, 51_000, 0));
        assert_eq!(s.cwnd, 21);
    }

    #[test]
    fn queueing_between_alpha_and_beta_holds() {
        // diff = 20 * (57.5 - 50) / 50 = 3
        let mut s = state_with(20, 10, 50_000, 57_500, 3);
        s.ack(&AckEvent::new(20, 57_500, 0));
        assert_eq!(s.cwnd, 20);
    }

    #[test]
    fn adjustment_waits_for_a_full_window() {
        let mut s = state_with(20, 10, 50_000, 70_000, 3);
        s.ack(&AckEvent::new(10, 70_000, 0));
        assert_eq!(s.cwnd, 20);
        s.ack(&AckEvent::new(10, 70_000, 0));
        assert_eq!(s.cwnd, 19);
    }

    #[test]
    fn slow_start_exits_when_queue_builds() {
        // diff = 40 * (60 - 50) / 50 = 8 > gamma; target = 40 * 50 / 60 = 33
        let mut s = state_with(40, super::super::INFINITE_SSTHRESH, 50_000, 60_000, 5);
        s.ack(&AckEvent::new(40, 60_000, 0));
        assert_eq!(s.cwnd, 34);
        assert!(!s.in_slow_start());
    }
}
