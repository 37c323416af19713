//! Installation script for a fully satisfying candidate.

use necc::refinery::Candidate;

#[derive(Debug, PartialEq)]
pub enum DeployRefusal {
    Unevaluated,
    Score(u32),
}

impl std::fmt::Display for DeployRefusal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeployRefusal::Unevaluated => {
                write!(f, "refusing to deploy: the candidate has no evaluation report; run `necc evaluate` first")
            }
            DeployRefusal::Score(s) => write!(
                f,
                "refusing to deploy: the candidate scores {s}/100 and only candidates that pass compilation, \
                 the BPF check and all three performance groups may be installed"
            ),
        }
    }
}

/// `struct_ops` name declared by the source, `necc_cca` if none is found.
pub fn ops_name(source: &str) -> String {
    source
        .lines()
        .find_map(|l| {
            let rest = l.trim().strip_prefix(".name")?.trim_start().strip_prefix('=')?.trim();
            let name = rest.strip_prefix('"')?.split('"').next()?;
            (!name.is_empty()).then(|| name.to_string())
        })
        .unwrap_or_else(|| "necc_cca".to_string())
}

/// Shell script that compiles `source_file` and registers it. The script is
/// only emitted, never run.
pub fn deploy_script(candidate: &Candidate, source_file: &str) -> Result<String, DeployRefusal> {
    match candidate.score() {
        None => return Err(DeployRefusal::Unevaluated),
        Some(s) if s < 100 => return Err(DeployRefusal::Score(s)),
        Some(_) => {}
    }
    let name = ops_name(&candidate.source_text);
    let object = source_file.strip_suffix(".c").unwrap_or(source_file).to_string() + ".o";
    Ok(format!(
        r#"#!/bin/sh
# Installs congestion control `{name}` (candidate {id}).
set -eu

SRC="{source_file}"
OBJ="{object}"
INCLUDE="${{NECC_INCLUDE:-/usr/include}}"

clang -O2 -g -target bpf -I "$INCLUDE" -c "$SRC" -o "$OBJ"
bpftool struct_ops register "$OBJ"
sysctl -w net.ipv4.tcp_congestion_control={name}
echo "{name} is now the default congestion control"
"#,
        id = candidate.id
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use necc::cca::{BaseCca, ControlProfile};
    use necc::evaluator::{score_and_feedback, CheckResult};
    use necc::requirements::RequirementSet;

    fn candidate(score_100: bool) -> Candidate {
        let reqs = RequirementSet::new(16.0, 30.0, 0.05).unwrap();
        let mut c = Candidate::from_profile(3, ControlProfile::from_requirements(BaseCca::Cubic, &reqs, 1.2));
        let mut report = score_and_feedback(CheckResult::pass(), Some(CheckResult::pass()), Default::default());
        report.score = if score_100 { 100 } else { 80 };
        c.report = Some(report);
        c
    }

    #[test]
    fn script_compiles_and_registers() {
        let s = deploy_script(&candidate(true), "cand-0003.bpf.c").unwrap();
        assert!(s.starts_with("#!/bin/sh\n"));
        assert!(s.contains(r#"SRC="cand-0003.bpf.c""#));
        assert!(s.contains(r#"OBJ="cand-0003.bpf.o""#));
        assert!(s.contains("clang -O2 -g -target bpf"));
        assert!(s.contains("bpftool struct_ops register \"$OBJ\""));
        assert!(s.contains("tcp_congestion_control=necc_cubic"));
    }

    #[test]
    fn gate_refuses_below_100() {
        assert_eq!(deploy_script(&candidate(false), "x.bpf.c"), Err(DeployRefusal::Score(80)));
        let mut c = candidate(true);
        c.report = None;
        assert_eq!(deploy_script(&c, "x.bpf.c"), Err(DeployRefusal::Unevaluated));
    }
}
