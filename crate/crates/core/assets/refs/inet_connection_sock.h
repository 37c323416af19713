/* include/net/inet_connection_sock.h: connection state shared by all
 * connection oriented protocols. Congestion control private data lives in
 * icsk_ca_priv and is reached with inet_csk_ca().
 */
struct inet_connection_sock {
	struct inet_sock	icsk_inet;
	unsigned long		icsk_timeout;
	__u32			icsk_rto;	/* retransmit timeout (jiffies) */
	__u32			icsk_rto_min;
	__u32			icsk_delack_max;
	__u32			icsk_pmtu_cookie;
	const struct tcp_congestion_ops *icsk_ca_ops;
	__u8			icsk_ca_state:5,	/* enum tcp_ca_state */
				icsk_ca_initialized:1,
				icsk_ca_setsockopt:1,
				icsk_ca_dst_locked:1;
	__u8			icsk_retransmits;
	__u8			icsk_pending;
	__u8			icsk_backoff;
	__u8			icsk_syn_retries;
	__u8			icsk_probes_out;
	__u16			icsk_ext_hdr_len;
	__u64			icsk_ca_priv[104 / sizeof(__u64)];
#define ICSK_CA_PRIV_SIZE	sizeof_field(struct inet_connection_sock, icsk_ca_priv)
};

static inline struct inet_connection_sock *inet_csk(const struct sock *sk)
{
	return (struct inet_connection_sock *)sk;
}

/* Private per-socket state of the congestion control, at most
 * ICSK_CA_PRIV_SIZE (104) bytes.
 */
static inline void *inet_csk_ca(const struct sock *sk)
{
	return (void *)inet_csk(sk)->icsk_ca_priv;
}
