//! CUBIC, after Linux `tcp_cubic.c`.
//!
//! The window follows `W(t) = C * (t - K)^3 + W_max` where `t` is the time
//! since the start of the current epoch plus the minimum RTT, and
//! `K = cbrt((W_max - cwnd) / C)`.
//!
//! HyStart leaves slow start early when either the ACK train of a round
//! stretches past half the minimum RTT or the round's minimum RTT rises
//! clearly above the path minimum. Rounds are counted in acked segments
//! rather than sequence numbers.

use super::{cong_avoid_ai, slow_start, AckEvent, AlgorithmScratch, CcaState};

/// Cubic scaling constant, segments per second cubed.
pub const CUBIC_C: f64 = 0.4;
/// Multiplicative decrease factor, in units of 1/1024.
pub const CUBIC_BETA: u32 = 717;
pub const CUBIC_BETA_SCALE: u32 = 1024;

/// `8 * (BETA_SCALE + beta) / 3 / (BETA_SCALE - beta)` with integer division.
const BETA_SCALE_FRIENDLY: u32 = 8 * (CUBIC_BETA_SCALE + CUBIC_BETA) / 3 / (CUBIC_BETA_SCALE - CUBIC_BETA);

pub const HYSTART_LOW_WINDOW: u32 = 16;
pub const HYSTART_MIN_SAMPLES: u32 = 8;
pub const HYSTART_DELAY_MIN_US: u32 = 4_000;
pub const HYSTART_DELAY_MAX_US: u32 = 16_000;
pub const HYSTART_ACK_DELTA_US: u64 = 2_000;
/// Delay samples this soon after an epoch starts are ignored.
const EPOCH_SETTLE_US: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicScratch {
    /// W_max: window just before the last reduction.
    pub last_max_cwnd: u32,
    /// Epoch start in microseconds; `None` outside an epoch.
    pub epoch_start_us: Option<u64>,
    /// K in seconds.
    pub k_secs: f64,
    /// Window the cubic curve plateaus at for the current epoch.
    pub origin_point: f64,
    /// Minimum RTT seen, microseconds (0 = none yet).
    pub delay_min_us: u32,
    pub ack_cnt: u32,
    /// Reno-equivalent window used for TCP friendliness.
    pub tcp_cwnd: u32,
    /// Segments acked per one-segment increase.
    pub cnt: u32,
    /// HyStart found the exit point.
    pub found: bool,
    pub round_start_us: u64,
    pub last_ack_us: u64,
    /// Minimum RTT within the current round.
    pub curr_rtt_us: u32,
    pub sample_cnt: u32,
    /// Segments acked in the current round and the round's length.
    pub round_acked: u32,
    pub round_len: u32,
}

impl Default for CubicScratch {
    fn default() -> Self {
        CubicScratch {
            last_max_cwnd: 0,
            epoch_start_us: None,
            k_secs: 0.0,
            origin_point: 0.0,
            delay_min_us: 0,
            ack_cnt: 0,
            tcp_cwnd: 0,
            cnt: 0,
            found: false,
            round_start_us: 0,
            last_ack_us: 0,
            curr_rtt_us: u32::MAX,
            sample_cnt: 0,
            round_acked: 0,
            round_len: super::INITIAL_CWND,
        }
    }
}

impl CubicScratch {
    pub fn reset(&mut self) {
        *self = CubicScratch::default();
    }

    fn hystart_reset(&mut self, cwnd: u32, now_us: u64) {
        self.round_start_us = now_us;
        self.last_ack_us = now_us;
        self.curr_rtt_us = u32::MAX;
        self.sample_cnt = 0;
        self.round_acked = 0;
        self.round_len = cwnd;
    }

    /// Returns true once slow start should end at the current window.
    fn hystart_update(&mut self, cwnd: u32, delay_us: u32, now_us: u64) -> bool {
        if self.round_acked >= self.round_len {
            self.hystart_reset(cwnd, now_us);
        }
        if now_us.saturating_sub(self.last_ack_us) <= HYSTART_ACK_DELTA_US {
            self.last_ack_us = now_us;
            if now_us.saturating_sub(self.round_start_us) > (self.delay_min_us >> 1) as u64 {
                self.found = true;
            }
        }
        self.curr_rtt_us = self.curr_rtt_us.min(delay_us);
        if self.sample_cnt < HYSTART_MIN_SAMPLES {
            self.sample_cnt += 1;
        } else {
            let thresh = (self.delay_min_us >> 3).clamp(HYSTART_DELAY_MIN_US, HYSTART_DELAY_MAX_US);
            if self.curr_rtt_us > self.delay_min_us + thresh {
                self.found = true;
            }
        }
        self.found
    }

    /// Cubic window function at `t` seconds into the epoch.
    pub fn window_at(&self, t_secs: f64) -> f64 {
        self.origin_point + CUBIC_C * (t_secs - self.k_secs).powi(3)
    }

    /// Starts a new epoch at `now_us` from window `cwnd`.
    pub fn start_epoch(&mut self, cwnd: u32, acked: u32, now_us: u64) {
        self.epoch_start_us = Some(now_us);
        self.ack_cnt = acked;
        self.tcp_cwnd = cwnd;
        if self.last_max_cwnd <= cwnd {
            self.k_secs = 0.0;
            self.origin_point = cwnd as f64;
        } else {
            self.k_secs = ((self.last_max_cwnd - cwnd) as f64 / CUBIC_C).cbrt();
            self.origin_point = self.last_max_cwnd as f64;
        }
    }

    /// `bictcp_update`: recomputes `cnt`.
    fn update(&mut self, cwnd: u32, acked: u32, now_us: u64) {
        self.ack_cnt = self.ack_cnt.saturating_add(acked);
        let epoch_start = match self.epoch_start_us {
            Some(start) => start,
            None => {
                self.start_epoch(cwnd, acked, now_us);
                now_us
            }
        };
        let t = (now_us.saturating_sub(epoch_start) + self.delay_min_us as u64) as f64 / 1e6;
        let target = self.window_at(t);

        let cwnd_f = cwnd as f64;
        let mut cnt = if target > cwnd_f {
            ((cwnd_f / (target - cwnd_f)) as u32).max(1)
        } else {
            100 * cwnd
        };
        if self.last_max_cwnd == 0 && cnt > 20 {
            cnt = 20;
        }

        // TCP friendliness: never grow slower than Reno would.
        let delta = ((cwnd as u64 * BETA_SCALE_FRIENDLY as u64) >> 3).max(1) as u32;
        while self.ack_cnt > delta {
            self.ack_cnt -= delta;
            self.tcp_cwnd += 1;
        }
        if self.tcp_cwnd > cwnd {
            let max_cnt = cwnd / (self.tcp_cwnd - cwnd);
            cnt = cnt.min(max_cnt);
        }
        self.cnt = cnt.max(2);
    }
}

pub(super) fn on_ack(state: &mut CcaState, ev: &AckEvent) {
    let AlgorithmScratch::Cubic(mut scratch) = state.scratch else {
        unreachable!("cubic handler on non-cubic state");
    };
    let settling = scratch.epoch_start_us.is_some_and(|start| ev.now_us.saturating_sub(start) < EPOCH_SETTLE_US);
    if !settling {
        let delay = ev.rtt_sample_us.max(1);
        if scratch.delay_min_us == 0 || scratch.delay_min_us > delay {
            scratch.delay_min_us = delay;
        }
        if !scratch.found
            && state.in_slow_start()
            && state.cwnd >= HYSTART_LOW_WINDOW
            && scratch.hystart_update(state.cwnd, delay, ev.now_us)
        {
            state.ssthresh = state.cwnd;
        }
    }
    if !ev.in_recovery {
        let mut acked = ev.acked_segments;
        if state.in_slow_start() {
            if scratch.round_acked >= scratch.round_len {
                scratch.hystart_reset(state.cwnd, ev.now_us);
            }
            scratch.round_acked = scratch.round_acked.saturating_add(acked);
            acked = slow_start(state, acked);
        }
        if acked > 0 {
            scratch.update(state.cwnd, acked, ev.now_us);
            cong_avoid_ai(state, scratch.cnt, acked);
        }
    }
    state.scratch = AlgorithmScratch::Cubic(scratch);
}

/// `bictcp_recalc_ssthresh` with fast convergence.
pub(super) fn ssthresh(state: &mut CcaState) -> u32 {
    let AlgorithmScratch::Cubic(mut scratch) = state.scratch else {
        unreachable!("cubic handler on non-cubic state");
    };
    let cwnd = state.cwnd;
    scratch.epoch_start_us = None;
    scratch.last_max_cwnd = if cwnd < scratch.last_max_cwnd {
        (cwnd as u64 * (CUBIC_BETA_SCALE + CUBIC_BETA) as u64 / (2 * CUBIC_BETA_SCALE) as u64) as u32
    } else {
        cwnd
    };
    state.scratch = AlgorithmScratch::Cubic(scratch);
    ((cwnd as u64 * CUBIC_BETA as u64 / CUBIC_BETA_SCALE as u64) as u32).max(2)
}

#[cfg(test)]
mod tests {
    use super::super::{on_loss, BaseCca, LossEvent};
    use super::*;

    fn cubic(state: &CcaState) -> CubicScratch {
        match state.scratch {
            AlgorithmScratch::Cubic(s) => s,
            _ => panic!("not cubic"),
        }
    }

    #[test]
    fn window_function_equals_wmax_at_k() {
        let mut s = CubicScratch { last_max_cwnd: 100, ..Default::default() };
        s.start_epoch(70, 1, 0);
        // K = cbrt(30 / 0.4)
        assert!((s.k_secs - 75f64.cbrt()).abs() < 1e-12);
        assert!((s.window_at(s.k_secs) - 100.0).abs() < 1e-9);
        // continuous on both sides of K
        let eps = 1e-6;
        assert!((s.window_at(s.k_secs - eps) - s.window_at(s.k_secs + eps)).abs() < 1e-9);
        // concave then convex around the plateau
        assert!(s.window_at(0.0) < 100.0 && s.window_at(2.0 * s.k_secs) > 100.0);
        assert!((s.window_at(0.0) - 70.0).abs() < 1e-9);
    }

    #[test]
    fn hystart_delay_increase_ends_slow_start() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.cwnd = 20;
        let mut now = 0;
        for _ in 0..20 {
            now += 10_000;
            s.ack(&AckEvent::new(1, 50_000, now));
        }
        assert!(s.in_slow_start() && !cubic(&s).found);
        // threshold is max(4 ms, 50 ms / 8) above the minimum
        for _ in 0..60 {
            now += 10_000;
            s.ack(&AckEvent::new(1, 57_000, now));
        }
        assert!(cubic(&s).found);
        assert!(!s.in_slow_start());
        assert!(s.ssthresh < 100);
    }

    #[test]
    fn hystart_ack_train_ends_slow_start() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.cwnd = 400;
        let mut now = 1_000;
        // Back-to-back ACKs spanning more than half the minimum RTT.
        for _ in 0..300 {
            now += 100;
            s.ack(&AckEvent::new(1, 40_000, now));
        }
        assert!(cubic(&s).found);
        assert!(s.ssthresh >= 400 && s.ssthresh < 700, "{}", s.ssthresh);
    }

    #[test]
    fn hystart_ignores_small_windows() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        for i in 0..5 {
            s.ack(&AckEvent::new(1, 50_000 + i * 20_000, i as u64 * 10_000));
        }
        assert!(!cubic(&s).found);
        assert!(s.in_slow_start());
    }

    #[test]
    fn loss_multiplies_by_beta() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.cwnd = 100;
        s.ssthresh = 50;
        let after = on_loss(&s, &LossEvent { lost_segments: 1 });
        // 100 * 717 / 1024 = 70.02
        assert_eq!(after.cwnd, 70);
        assert_eq!(after.ssthresh, 70);
        assert_eq!(cubic(&after).last_max_cwnd, 100);
        assert_eq!(cubic(&after).epoch_start_us, None);
    }

    #[test]
    fn fast_convergence_lowers_wmax() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.scratch = AlgorithmScratch::Cubic(CubicScratch { last_max_cwnd: 200, ..Default::default() });
        s.cwnd = 100;
        let after = on_loss(&s, &LossEvent { lost_segments: 1 });
        // 100 * (1024 + 717) / 2048 = 85
        assert_eq!(cubic(&after).last_max_cwnd, 85);
    }

    #[test]
    fn regrowth_tracks_the_cubic_curve() {
        let rtt = 50_000u32;
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        // Large enough that the cubic curve, not the Reno-friendly
        // estimate, drives growth.
        s.cwnd = 1000;
        s.ssthresh = 10;
        s.loss(&LossEvent { lost_segments: 1 });
        assert_eq!(s.cwnd, 700);
        let k = ((1000.0 - 700.0) / CUBIC_C).cbrt();
        let curve = |t: f64| 1000.0 - CUBIC_C * (k - t).powi(3);
        // Deliver one window per RTT.
        let mut now = 0u64;
        let mut checked_half = false;
        while (now as f64 / 1e6) < k {
            let window = s.cwnd;
            for _ in 0..window {
                s.ack(&AckEvent::new(1, rtt, now));
            }
            now += rtt as u64;
            let t = now as f64 / 1e6;
            if !checked_half && t >= k / 2.0 {
                let expect = curve(t);
                assert!((s.cwnd as f64 - expect).abs() / expect < 0.02, "t={t} cwnd={} W={expect}", s.cwnd);
                checked_half = true;
            }
        }
        assert!(checked_half);
        assert!((s.cwnd as i64 - 1000).abs() <= 2, "cwnd at K = {}", s.cwnd);
    }

    #[test]
    fn slow_start_until_ssthresh() {
        let mut s = CcaState::new(BaseCca::Cubic, 1500);
        s.ack(&AckEvent::new(10, 20_000, 20_000));
        assert_eq!(s.cwnd, 20);
        assert_eq!(cubic(&s).delay_min_us, 20_000);
    }
}
