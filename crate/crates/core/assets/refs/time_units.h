/* Clocks and units met in congestion control code.
 *
 *   bpf_ktime_get_ns()	nanoseconds (u64)
 *   tp->tcp_mstamp	microseconds (u64), time of the current packet
 *   tp->srtt_us	microseconds << 3, i.e. 1/8 microsecond
 *   ack_sample.rtt_us	microseconds, negative when invalid
 *   tcp_jiffies32	jiffies (HZ per second, kernel configuration dependent)
 *   icsk_rto		jiffies
 *
 * The in-kernel CUBIC switched its epoch and delay bookkeeping from jiffies
 * to microseconds; BPF ports read bpf_ktime_get_ns() and divide by 1000.
 */
#define NSEC_PER_USEC	1000ULL
#define USEC_PER_MSEC	1000ULL
#define MSEC_PER_SEC	1000ULL
#define USEC_PER_SEC	1000000ULL
#define NSEC_PER_SEC	1000000000ULL

static inline __u32 tcp_stamp_us_delta(__u64 t1, __u64 t0)
{
	return t1 > t0 ? (__u32)(t1 - t0) : 0;
}

/* Rate of one window per smoothed RTT, bits per second. */
static inline __u64 cwnd_rate_bps(const struct tcp_sock *tp)
{
	__u64 srtt_us = tp->srtt_us >> 3;

	if (!srtt_us)
		return 0;
	return (__u64)tp->snd_cwnd * tp->mss_cache * 8 * USEC_PER_SEC / srtt_us;
}
