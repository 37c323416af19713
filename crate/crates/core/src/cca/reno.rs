use super::{cong_avoid_ai, slow_start, AckEvent, CcaState};

pub(super) fn on_ack(state: &mut CcaState, ev: &AckEvent) {
    if ev.in_recovery {
        return;
    }
    let mut acked = ev.acked_segments;
    if state.in_slow_start() {
        acked = slow_start(state, acked);
        if acked == 0 {
            return;
        }
    }
    cong_avoid_ai(state, state.cwnd, acked);
}

/// `tcp_reno_ssthresh`.
pub(super) fn ssthresh(state: &CcaState) -> u32 {
    (state.cwnd >> 1).max(2)
}

#[cfg(test)]
mod tests {
    use super::super::{on_loss, BaseCca, LossEvent};
    use super::*;

    fn avoidance_state(cwnd: u32) -> CcaState {
        let mut s = CcaState::new(BaseCca::Reno, 1500);
        s.cwnd = cwnd;
        s.ssthresh = cwnd / 2;
        s
    }

    #[test]
    fn one_window_acked_adds_one_segment() {
        let mut s = avoidance_state(10);
        for _ in 0..10 {
            s.ack(&AckEvent::new(1, 50_000, 0));
        }
        assert_eq!(s.cwnd, 11);

        let mut bulk = avoidance_state(10);
        bulk.ack(&AckEvent::new(10, 50_000, 0));
        assert_eq!(bulk.cwnd, 11);
    }

    #[test]
    fn exactly_one_segment_per_cwnd_acked() {
        let mut s = avoidance_state(20);
        let mut acked = 0u32;
        while s.cwnd < 30 {
            let before = s.cwnd;
            for _ in 0..before {
                s.ack(&AckEvent::new(1, 50_000, 0));
                acked += 1;
            }
            assert_eq!(s.cwnd, before + 1);
        }
        assert_eq!(acked, (20..30).sum::<u32>());
    }

    #[test]
    fn slow_start_doubles_per_window() {
        let mut s = CcaState::new(BaseCca::Reno, 1500);
        s.ack(&AckEvent::new(10, 50_000, 0));
        assert_eq!(s.cwnd, 20);
    }

    #[test]
    fn recovery_freezes_growth() {
        let mut s = avoidance_state(10);
        s.ack(&AckEvent { in_recovery: true, ..AckEvent::new(10, 50_000, 0) });
        assert_eq!(s.cwnd, 10);
    }

    #[test]
    fn loss_halves() {
        let s = avoidance_state(20);
        let after = on_loss(&s, &LossEvent { lost_segments: 1 });
        assert_eq!((after.cwnd, after.ssthresh), (10, 10));
        let floor = on_loss(&avoidance_state(1), &LossEvent { lost_segments: 1 });
        assert_eq!(floor.ssthresh, 2);
        assert_eq!(floor.cwnd, 1);
    }
}
