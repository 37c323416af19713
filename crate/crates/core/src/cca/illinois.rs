//! TCP Illinois, after Linux `tcp_illinois.c`.
//!
//! Loss-based AIMD whose increase step `alpha` and decrease factor `beta`
//! follow the queueing delay: large steps and gentle decreases while the
//! average delay is near the base RTT, small steps and halving as it nears
//! the maximum.

use super::{slow_start, AckEvent, AlgorithmScratch, CcaState};

pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_MIN: f64 = 0.3;
pub const ALPHA_BASE: f64 = 1.0;
pub const BETA_MIN: f64 = 0.125;
pub const BETA_MAX: f64 = 0.5;
pub const BETA_BASE: f64 = BETA_MAX;
/// Below this window Illinois behaves like Reno.
pub const WIN_THRESH: u32 = 15;
/// RTTs of low delay before alpha returns to its maximum.
pub const THETA: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IllinoisScratch {
    pub base_rtt_us: u32,
    pub max_rtt_us: u32,
    pub sum_rtt_us: u64,
    pub cnt_rtt: u32,
    pub alpha: f64,
    pub beta: f64,
    pub rtt_above: bool,
    pub rtt_low: u32,
    pub epoch_acked: u32,
    pub epoch_cwnd: u32,
}

impl Default for IllinoisScratch {
    fn default() -> Self {
        IllinoisScratch {
            base_rtt_us: u32::MAX,
            max_rtt_us: 0,
            sum_rtt_us: 0,
            cnt_rtt: 0,
            alpha: ALPHA_MAX,
            beta: BETA_BASE,
            rtt_above: false,
            rtt_low: 0,
            epoch_acked: 0,
            epoch_cwnd: super::INITIAL_CWND,
        }
    }
}

impl IllinoisScratch {
    /// State reset on entering loss recovery after a timeout.
    pub fn reset(&mut self) {
        self.alpha = ALPHA_BASE;
        self.beta = BETA_BASE;
        self.rtt_low = 0;
        self.rtt_above = false;
        self.rtt_reset();
    }

    fn rtt_reset(&mut self) {
        self.cnt_rtt = 0;
        self.sum_rtt_us = 0;
        self.epoch_acked = 0;
    }

    /// Increase step as a function of average (`da`) and maximum (`dm`)
    /// queueing delay.
    pub fn alpha_for(&mut self, da: f64, dm: f64) -> f64 {
        let d1 = dm / 100.0;
        if da <= d1 {
            if !self.rtt_above {
                return ALPHA_MAX;
            }
            self.rtt_low += 1;
            if self.rtt_low < THETA {
                return self.alpha;
            }
            self.rtt_low = 0;
            self.rtt_above = false;
            return ALPHA_MAX;
        }
        self.rtt_above = true;
        let (dm, da) = (dm - d1, da - d1);
        (dm * ALPHA_MAX) / (dm + (da * (ALPHA_MAX - ALPHA_MIN)) / ALPHA_MIN)
    }

    /// Decrease factor.
    pub fn beta_for(da: f64, dm: f64) -> f64 {
        let d2 = dm / 10.0;
        if da <= d2 {
            return BETA_MIN;
        }
        let d3 = (8.0 * dm) / 10.0;
        if da >= d3 || d3 <= d2 {
            return BETA_MAX;
        }
        (BETA_MIN * d3 - BETA_MAX * d2 + (BETA_MAX - BETA_MIN) * da) / (d3 - d2)
    }

    fn update_params(&mut self, cwnd: u32) {
        if cwnd < WIN_THRESH {
            self.alpha = ALPHA_BASE;
            self.beta = BETA_BASE;
        } else if self.cnt_rtt > 0 {
            let dm = self.max_rtt_us.saturating_sub(self.base_rtt_us) as f64;
            let avg = self.sum_rtt_us as f64 / self.cnt_rtt as f64;
            let da = (avg - self.base_rtt_us as f64).max(0.0);
            self.alpha = self.alpha_for(da, dm);
            self.beta = Self::beta_for(da, dm);
        }
        self.rtt_reset();
    }
}

pub(super) fn on_ack(state: &mut CcaState, ev: &AckEvent) {
    let AlgorithmScratch::Illinois(mut s) = state.scratch else {
        unreachable!("illinois handler on non-illinois state");
    };
    let rtt = ev.rtt_sample_us.max(1);
    s.base_rtt_us = s.base_rtt_us.min(rtt);
    s.max_rtt_us = s.max_rtt_us.max(rtt);
    s.cnt_rtt += 1;
    s.sum_rtt_us += rtt as u64;

    if !ev.in_recovery {
        s.epoch_acked += ev.acked_segments;
        if s.epoch_acked >= s.epoch_cwnd {
            s.update_params(state.cwnd);
            s.epoch_cwnd = state.cwnd;
        }
        let mut acked = ev.acked_segments;
        if state.in_slow_start() {
            acked = slow_start(state, acked);
        }
        if acked > 0 {
            state.cwnd_cnt += acked;
            let delta = state.cwnd_cnt as f64 * s.alpha;
            if delta >= state.cwnd as f64 {
                state.cwnd += (delta / state.cwnd as f64) as u32;
                state.cwnd_cnt = 0;
            }
        }
    }
    state.scratch = AlgorithmScratch::Illinois(s);
}

pub(super) fn ssthresh(state: &CcaState) -> u32 {
    let AlgorithmScratch::Illinois(s) = state.scratch else {
        unreachable!("illinois handler on non-illinois state");
    };
    let cut = (state.cwnd as f64 * s.beta) as u32;
    (state.cwnd - cut).max(2)
}
