/* Helpers available to struct_ops congestion control programs, from
 * tools/testing/selftests/bpf/bpf_tcp_helpers.h and net/ipv4/tcp_cong.c.
 */
#define BPF_STRUCT_OPS(name, args...) \
	SEC("struct_ops/"#name) BPF_PROG(name, args)

#define TCP_INFINITE_SSTHRESH	0x7fffffff
#define TCP_ECN_OK		1
#define TCP_CONG_NEEDS_ECN	0x2

/* bpf_ktime_get_ns: monotonic clock in nanoseconds. */
static __u64 (*bpf_ktime_get_ns)(void) = (void *) 5;

/* Per-socket storage that outlives the 104-byte icsk_ca_priv area. */
static void *(*bpf_sk_storage_get)(void *map, void *sk, void *value, __u64 flags) = (void *) 107;
#define BPF_SK_STORAGE_GET_F_CREATE	(1ULL << 0)

static inline bool tcp_in_slow_start(const struct tcp_sock *tp)
{
	return tp->snd_cwnd < tp->snd_ssthresh;
}

static inline bool tcp_in_initial_slowstart(const struct tcp_sock *tp)
{
	return tp->snd_ssthresh >= TCP_INFINITE_SSTHRESH;
}

static inline bool tcp_is_cwnd_limited(const struct sock *sk)
{
	const struct tcp_sock *tp = tcp_sk(sk);

	/* If in slow start, ensure cwnd grows to twice what was ACKed. */
	if (tcp_in_slow_start(tp))
		return tp->snd_cwnd < 2 * tp->max_packets_out;

	return !!BPF_CORE_READ_BITFIELD(tp, is_cwnd_limited);
}

static inline __u32 tcp_packets_in_flight(const struct tcp_sock *tp)
{
	return tp->packets_out - tp->sacked_out - tp->lost_out + tp->retrans_out;
}

/* Slow start: grow cwnd by the number of segments acked, never beyond
 * ssthresh; returns the acked segments left over for congestion avoidance.
 */
extern __u32 tcp_slow_start(struct tcp_sock *tp, __u32 acked) __ksym;

/* Additive increase: grow cwnd by one segment per w segments acked. */
extern void tcp_cong_avoid_ai(struct tcp_sock *tp, __u32 w, __u32 acked) __ksym;

/* Reno defaults usable as .ssthresh / .cong_avoid / .undo_cwnd. */
extern __u32 tcp_reno_ssthresh(struct sock *sk) __ksym;
extern void tcp_reno_cong_avoid(struct sock *sk, __u32 ack, __u32 acked) __ksym;
extern __u32 tcp_reno_undo_cwnd(struct sock *sk) __ksym;

static inline __u32 tcp_current_ssthresh(const struct sock *sk)
{
	const struct tcp_sock *tp = tcp_sk(sk);

	if (inet_csk(sk)->icsk_ca_state == TCP_CA_CWR || inet_csk(sk)->icsk_ca_state == TCP_CA_Recovery)
		return tp->snd_ssthresh;
	return tp->snd_ssthresh > ((tp->snd_cwnd >> 1) + (tp->snd_cwnd >> 2)) ?
	       tp->snd_ssthresh : ((tp->snd_cwnd >> 1) + (tp->snd_cwnd >> 2));
}
