/* include/linux/tcp.h: fields of struct tcp_sock used by congestion
 * control. Sequence numbers are bytes; windows are segments; times are
 * noted per field.
 */
struct tcp_sock {
	struct inet_connection_sock inet_conn;

	__u32	rcv_nxt;	/* what we want to receive next (bytes) */
	__u32	snd_nxt;	/* next sequence we send (bytes) */
	__u32	snd_una;	/* first byte we want an ack for */
	__u32	segs_in;	/* total number of segments in */
	__u32	segs_out;	/* total number of segments sent */
	__u32	data_segs_out;	/* total number of data segments sent */
	__u64	bytes_acked;	/* total bytes acked (RFC4898 tcpEStatsAppHCThruOctetsAcked) */

	__u32	mss_cache;	/* cached effective mss, not including SACKS (bytes) */
	__u32	packets_out;	/* packets which are "in flight" */
	__u32	max_packets_out;	/* max packets_out in last window */
	__u32	retrans_out;	/* retransmitted packets out */
	__u32	sacked_out;	/* SACK'd packets */
	__u32	lost_out;	/* lost packets currently outstanding */
	__u32	lost;		/* total data packets lost incl. rexmits */
	__u32	total_retrans;	/* total retransmits for entire connection */

/* RTT measurement */
	__u64	tcp_mstamp;	/* most recent packet received/sent (microseconds) */
	__u32	srtt_us;	/* smoothed round trip time << 3 in usecs */
	__u32	mdev_us;	/* medium deviation */
	__u32	mdev_max_us;	/* maximal mdev for the last rtt period */
	__u32	rttvar_us;	/* smoothed mdev_max */
	__u32	rtt_seq;	/* sequence number to update rttvar */
	struct minmax rtt_min;	/* windowed min of RTT samples (usecs) */

/* Slow start and congestion control */
	__u32	snd_ssthresh;	/* slow start size threshold (segments) */
	__u32	snd_cwnd;	/* sending congestion window (segments) */
	__u32	snd_cwnd_cnt;	/* linear increase counter */
	__u32	snd_cwnd_clamp;	/* do not allow snd_cwnd to grow above this */
	__u32	snd_cwnd_used;
	__u32	snd_cwnd_stamp;
	__u32	prior_cwnd;	/* cwnd right before starting loss recovery */
	__u32	prr_delivered;	/* number of newly delivered packets to receiver in recovery */
	__u32	prr_out;	/* total number of pkts sent during recovery */
	__u32	delivered;	/* total data packets delivered incl. rexmits */
	__u32	delivered_ce;	/* like the above but only ECE marked packets */
	__u32	app_limited;	/* limited until "delivered" reaches this val */
	__u64	first_tx_mstamp;	/* start of window send phase */
	__u64	delivered_mstamp;	/* time we reached "delivered" */
	__u32	rate_delivered;	/* saved rate sample: packets delivered */
	__u32	rate_interval_us;	/* saved rate sample: time elapsed */
	__u32	rcv_wnd;	/* current receiver window (bytes) */
	__u32	write_seq;	/* tail(+1) of data held in tcp send buffer */
	__u32	max_window;	/* maximal window ever seen from peer */
	__u32	window_clamp;	/* maximal window to advertise */
	__u8	is_cwnd_limited:1;	/* forward progress limited by snd_cwnd? */
};

static inline struct tcp_sock *tcp_sk(const struct sock *sk)
{
	return (struct tcp_sock *)sk;
}

/* Note: snd_cwnd is read and written directly by BPF programs; in-kernel
 * code uses tcp_snd_cwnd() / tcp_snd_cwnd_set().
 */
