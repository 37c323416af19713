/* include/net/tcp.h: the congestion control operations table.
 * A BPF program fills one of these in a SEC(".struct_ops") map.
 */
enum tcp_ca_event {
	CA_EVENT_TX_START,	/* first transmit when no packets in flight */
	CA_EVENT_CWND_RESTART,	/* congestion window restart */
	CA_EVENT_COMPLETE_CWR,	/* end of congestion recovery */
	CA_EVENT_LOSS,		/* loss timeout */
	CA_EVENT_ECN_NO_CE,	/* ECT set, but not CE marked */
	CA_EVENT_ECN_IS_CE,	/* received CE marked IP packet */
};

enum tcp_ca_state {
	TCP_CA_Open = 0,
	TCP_CA_Disorder = 1,
	TCP_CA_CWR = 2,
	TCP_CA_Recovery = 3,
	TCP_CA_Loss = 4
};

struct ack_sample {
	__u32 pkts_acked;
	__s32 rtt_us;		/* microseconds, -1 when no valid sample */
	__u32 in_flight;
};

struct rate_sample {
	__u64 prior_mstamp;	/* starting timestamp for interval */
	__u32 prior_delivered;	/* tp->delivered at "prior_mstamp" */
	__s32 delivered;	/* number of packets delivered over interval */
	long interval_us;	/* time for tp->delivered to incr "delivered" */
	__u32 snd_interval_us;	/* snd interval for delivered packets */
	__u32 rcv_interval_us;	/* rcv interval for delivered packets */
	long rtt_us;		/* RTT of last (S)ACKed packet (or -1) */
	int losses;		/* number of packets marked lost upon ACK */
	__u32 acked_sacked;	/* number of packets newly (S)ACKed upon ACK */
	__u32 prior_in_flight;	/* in flight before this ACK */
	bool is_app_limited;	/* is sample from packet with bubble in pipe? */
	bool is_retrans;	/* is sample from retransmission? */
	bool is_ack_delayed;	/* is this (likely) a delayed ACK? */
};

struct tcp_congestion_ops {
	/* required: return slow start threshold after a loss (segments) */
	__u32 (*ssthresh)(struct sock *sk);

	/* optional: grow the window; called on every ACK that advances
	 * snd_una while the flow is not in recovery
	 */
	void (*cong_avoid)(struct sock *sk, __u32 ack, __u32 acked);

	/* optional: call before changing ca_state */
	void (*set_state)(struct sock *sk, __u8 new_state);

	/* optional: call when cwnd event occurs */
	void (*cwnd_event)(struct sock *sk, enum tcp_ca_event ev);

	/* optional: call on ack events */
	void (*in_ack_event)(struct sock *sk, __u32 flags);

	/* optional: hook for packet ack accounting; called on every ACK
	 * that acknowledges new data, carries the RTT sample
	 */
	void (*pkts_acked)(struct sock *sk, const struct ack_sample *sample);

	/* optional: override sysctl_tcp_min_tso_segs */
	__u32 (*min_tso_segs)(struct sock *sk);

	/* optional: call when packets are delivered to update cwnd and
	 * pacing rate, after all the ca_state processing; replaces
	 * cong_avoid when present
	 */
	void (*cong_control)(struct sock *sk, __u32 ack, int flag, const struct rate_sample *rs);

	/* required: new value of cwnd after loss (congestion window undo) */
	__u32 (*undo_cwnd)(struct sock *sk);

	/* optional: returns the multiplier used in tcp_sndbuf_expand */
	__u32 (*sndbuf_expand)(struct sock *sk);

	/* initialize private data (optional) */
	void (*init)(struct sock *sk);

	/* cleanup private data (optional) */
	void (*release)(struct sock *sk);

	char name[16];		/* TCP_CA_NAME_MAX */
};
