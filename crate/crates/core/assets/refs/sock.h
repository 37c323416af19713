/* include/net/sock.h: the generic socket fields a congestion control may
 * read or set.
 */
enum sk_pacing {
	SK_PACING_NONE		= 0,
	SK_PACING_NEEDED	= 1,	/* fq or internal pacing requested */
	SK_PACING_FQ		= 2,
};

struct sock {
	struct sock_common	__sk_common;
	int			sk_sndbuf;	/* size of send buffer (bytes) */
	int			sk_wmem_queued;	/* persistent queue size (bytes) */
	unsigned long		sk_pacing_rate;	/* bytes per second */
	unsigned long		sk_max_pacing_rate;	/* bytes per second, cap on sk_pacing_rate */
	__u8			sk_pacing_shift;	/* pacing granularity, 2^-shift seconds */
	__u8			sk_pacing_status;	/* see enum sk_pacing */
	__u32			sk_gso_max_size;
	__u16			sk_gso_max_segs;
	__u32			sk_priority;
	__u32			sk_mark;
};

/* Throughput is governed by snd_cwnd (segments per RTT) for window based
 * algorithms. Setting sk_pacing_rate only takes effect when pacing is
 * active (sk_pacing_status != SK_PACING_NONE or the fq qdisc is used).
 *
 *   rate (bytes/s) ~= snd_cwnd * mss_cache * USEC_PER_SEC / (srtt_us >> 3)
 */
