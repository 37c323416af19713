//! Shipped base CCA programs and the template that wraps them with a
//! [`ControlProfile`].
//!
//! A patched program carries its profile in a comment block,
//!
//! ```text
//! /* NECC-PROFILE-BEGIN
//! base_cca = "CUBIC"
//! ...
//! NECC-PROFILE-END */
//! ```
//!
//! followed by `#define` constants for the R1/R2/R3 parameters and a
//! `necc_cong_avoid` wrapper installed as the `.cong_avoid` hook.

use std::fmt::Write as _;

use super::{BaseCca, CcaError, ControlProfile, FaultFlag, ProfileError};

const RENO_SOURCE: &str = include_str!("../../assets/cca/reno.bpf.c");
const CUBIC_SOURCE: &str = include_str!("../../assets/cca/cubic.bpf.c");
const VEGAS_SOURCE: &str = include_str!("../../assets/cca/vegas.bpf.c");
const ILLINOIS_SOURCE: &str = include_str!("../../assets/cca/illinois.bpf.c");

pub const PROFILE_BEGIN: &str = "/* NECC-PROFILE-BEGIN";
pub const PROFILE_END: &str = "NECC-PROFILE-END */";

/// Diagnostic reported by the simulated compiler for `COMPILE_FAULT`.
pub const COMPILE_FAULT_DIAGNOSTIC: &str = "necc.bpf.c: error: expected ';' after expression\n1 error generated.";

/// Diagnostic reported by the simulated verifier for `BPF_FAULT`.
pub const BPF_FAULT_DIAGNOSTIC: &str = "libbpf: prog 'necc_cong_avoid': BPF program load failed: Argument list too long\n\
     The sequence of 8193 jumps is too complex.\n\
     processed 1000001 insns (limit 1000000) max_states_per_insn 4 total_states 16384 peak_states 8193 mark_read 3";

pub fn base_source(base: BaseCca) -> &'static str {
    match base {
        BaseCca::Reno => RENO_SOURCE,
        BaseCca::Cubic => CUBIC_SOURCE,
        BaseCca::Vegas => VEGAS_SOURCE,
        BaseCca::Illinois => ILLINOIS_SOURCE,
    }
}

pub fn base_source_file_name(base: BaseCca) -> &'static str {
    match base {
        BaseCca::Reno => "reno.bpf.c",
        BaseCca::Cubic => "cubic.bpf.c",
        BaseCca::Vegas => "vegas.bpf.c",
        BaseCca::Illinois => "illinois.bpf.c",
    }
}

/// Which shipped program `source` is, byte for byte.
pub fn identify_base(source: &str) -> Result<BaseCca, CcaError> {
    BaseCca::ALL
        .into_iter()
        .find(|b| base_source(*b) == source)
        .ok_or_else(|| CcaError::UnknownBase(first_line(source)))
}

fn first_line(source: &str) -> String {
    let line = source.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut line: String = line.chars().take(60).collect();
    if line.is_empty() {
        line.push_str("<empty source>");
    }
    line
}

/// Returns the embedded profile, `Ok(None)` when there is no profile block.
pub fn extract_profile(source: &str) -> Result<Option<ControlProfile>, ProfileError> {
    let Some(start) = source.find(PROFILE_BEGIN) else {
        return Ok(None);
    };
    let body = &source[start + PROFILE_BEGIN.len()..];
    let end = body
        .find(PROFILE_END)
        .ok_or_else(|| ProfileError::Parse("profile block is not terminated".to_string()))?;
    ControlProfile::from_text(&body[..end]).map(Some)
}

fn rate_bps(mbps: f64) -> u64 {
    (mbps * 1e6).round().max(0.0) as u64
}

/// Wraps the shipped `base_source` with the customization described by
/// `profile`. Output is deterministic.
pub fn render_patched_source(profile: &ControlProfile, base_source: &str) -> Result<String, CcaError> {
    let base = identify_base(base_source)?;
    if base != profile.base_cca {
        return Err(CcaError::UnknownBase(format!(
            "profile targets {} but the source is {}",
            profile.base_cca,
            base_source_file_name(base)
        )));
    }
    let name = base.name();

    let mut header = String::new();
    writeln!(header).unwrap();
    writeln!(header, "{PROFILE_BEGIN}").unwrap();
    header.push_str(&profile.to_text());
    writeln!(header, "{PROFILE_END}").unwrap();
    writeln!(header).unwrap();
    writeln!(header, "#define NECC_MIN_RATE_BPS\t{}ULL\t/* R1 */", rate_bps(profile.min_rate_mbps)).unwrap();
    writeln!(header, "#define NECC_MAX_RATE_BPS\t{}ULL\t/* R2 */", rate_bps(profile.cap_mbps())).unwrap();
    writeln!(
        header,
        "#define NECC_LOSS_THRESHOLD_PPM\t{}U\t/* R3 */",
        (profile.loss_threshold * 1e6).round().max(0.0) as u64
    )
    .unwrap();
    writeln!(header, "#define NECC_BOOST_GAIN_PCT\t{}U", (profile.boost_gain * 100.0).ceil().max(0.0) as u64).unwrap();
    writeln!(header, "#define NECC_LOSS_WINDOW_US\t10000000ULL").unwrap();
    writeln!(header, "#define NECC_LOSS_MIN_SEGS\t200U").unwrap();

    let wrapper = wrapper_source(profile, name);

    let license = "char _license[] SEC(\"license\") = \"GPL\";\n";
    let ops = "SEC(\".struct_ops\")\n";
    let hook = format!("\t.cong_avoid\t= (void *){name}_cong_avoid,");
    let ops_name = format!("\t.name\t\t= \"bpf_{name}\",");
    for needle in [license, ops, hook.as_str(), ops_name.as_str()] {
        if !base_source.contains(needle) {
            return Err(CcaError::UnknownBase(format!("{} lacks `{}`", base_source_file_name(base), needle.trim())));
        }
    }

    let mut out = base_source.replacen(license, &format!("{license}{header}"), 1);
    out = out.replacen(ops, &format!("{wrapper}\n{ops}"), 1);
    out = out.replacen(&hook, "\t.cong_avoid\t= (void *)necc_cong_avoid,", 1);
    out = out.replacen(&ops_name, &format!("\t.name\t\t= \"necc_{name}\","), 1);
    Ok(out)
}

fn wrapper_source(profile: &ControlProfile, name: &str) -> String {
    let mut w = String::new();
    w.push_str(
        "struct necc_state {
	__u64	win_start_us;	/* start of the current loss window */
	__u32	res_base;	/* delivered + lost at window start */
	__u32	lost_base;	/* lost at window start */
	__u32	prev_res;	/* totals of the previous window */
	__u32	prev_lost;
};

struct {
	__uint(type, BPF_MAP_TYPE_SK_STORAGE);
	__uint(map_flags, BPF_F_NO_PREALLOC);
	__type(key, int);
	__type(value, struct necc_state);
} necc_sk_stor SEC(\".maps\");

/* Segments that carry rate_bps for one smoothed RTT (srtt_us is 1/8 us). */
static __always_inline __u64 necc_bdp_segs(const struct tcp_sock *tp, __u64 rate_bps)
{
	__u64 srtt_us = tp->srtt_us >> 3;

	return rate_bps * srtt_us / ((__u64)tp->mss_cache * 8 * 1000000ULL);
}

SEC(\"struct_ops\")
void BPF_PROG(necc_cong_avoid, struct sock *sk, __u32 ack, __u32 acked)
{
	struct tcp_sock *tp = tcp_sk(sk);
	struct necc_state *st;
	__u64 now = bpf_ktime_get_ns() / 1000;
	__u64 res, lost, loss_ppm = 1000000, rate_bps = 0, floor, cap;

",
    );
    let semi = if profile.has_fault(FaultFlag::CompileFault) { "" } else { ";" };
    writeln!(w, "\t____{name}_cong_avoid(ctx, sk, ack, acked){semi}").unwrap();
    if profile.has_fault(FaultFlag::BpfFault) {
        w.push_str("\tfor (__u32 i = 0; i != tp->snd_cwnd; i += 2)\n\t\ttp->snd_cwnd_cnt++;\n");
    }
    w.push_str(
        "
	if (!tp->srtt_us || !tp->mss_cache)
		return;

	st = bpf_sk_storage_get(&necc_sk_stor, sk, 0, BPF_SK_STORAGE_GET_F_CREATE);
	if (!st)
		return;
	if (!st->win_start_us) {
		st->win_start_us = now;
		st->res_base = tp->delivered + tp->lost;
		st->lost_base = tp->lost;
	}
	if (now - st->win_start_us >= NECC_LOSS_WINDOW_US) {
		st->prev_res = tp->delivered + tp->lost - st->res_base;
		st->prev_lost = tp->lost - st->lost_base;
		st->res_base = tp->delivered + tp->lost;
		st->lost_base = tp->lost;
		st->win_start_us = now;
	}
	res = tp->delivered + tp->lost - st->res_base + st->prev_res;
	lost = tp->lost - st->lost_base + st->prev_lost;
	if (res >= NECC_LOSS_MIN_SEGS)
		loss_ppm = lost * 1000000 / res;
	if (tp->rate_interval_us)
		rate_bps = (__u64)tp->rate_delivered * tp->mss_cache * 8 * 1000000ULL / tp->rate_interval_us;
",
    );
    if !profile.has_fault(FaultFlag::R1Fault) {
        let cond = if profile.has_fault(FaultFlag::R3Fault) {
            "rate_bps < NECC_MIN_RATE_BPS"
        } else {
            "loss_ppm < NECC_LOSS_THRESHOLD_PPM && rate_bps < NECC_MIN_RATE_BPS"
        };
        writeln!(
            w,
            "
	/* R1 floor, suspended under persistent loss (R3). */
	if ({cond}) {{
		floor = (necc_bdp_segs(tp, NECC_MIN_RATE_BPS) * NECC_BOOST_GAIN_PCT + 99) / 100;
		if (tp->snd_cwnd < floor) {{
			tp->snd_cwnd = floor;
			tp->snd_cwnd_cnt = 0;
		}}
	}}"
        )
        .unwrap();
    }
    if !profile.has_fault(FaultFlag::R2Fault) {
        w.push_str(
            "
	/* R2 cap. */
	cap = necc_bdp_segs(tp, NECC_MAX_RATE_BPS);
	if (cap < 1)
		cap = 1;
	if (tp->snd_cwnd > cap) {
		tp->snd_cwnd = cap;
		tp->snd_cwnd_cnt = 0;
	}
	if (sk->sk_pacing_rate > NECC_MAX_RATE_BPS / 8)
		sk->sk_pacing_rate = NECC_MAX_RATE_BPS / 8;
",
        );
    }
    w.push_str("}\n");
    w
}
