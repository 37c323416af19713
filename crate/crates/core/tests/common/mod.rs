#![allow(dead_code)]

use std::path::PathBuf;

use necc::cca::{base_source, render_patched_source, BaseCca, ControlProfile};
use necc::chat::{ChatMessage, ChatRequest, ChatResponse, Exchange};
use necc::prompting::{build_prompt, load_reference_bundle, Prompt, PromptMode};
use necc::refinery::RefinerConfig;
use necc::requirements::RequirementSet;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests")
}

/// Compares `actual` with the checked-in file, rewriting it when
/// `UPDATE_GOLDEN` is set.
pub fn golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = data_dir().join(rel);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).map(|i| i + 1);
    Err(format!("{} differs (first differing line {line:?}); rerun with UPDATE_GOLDEN=1 if intended", path.display()))
}

pub fn streaming_reqs() -> RequirementSet {
    RequirementSet::new(16.0, 30.0, 0.05).unwrap()
}

pub fn cubic_prompt(reqs: &RequirementSet) -> Prompt {
    build_prompt(PromptMode::Cot, reqs, BaseCca::Cubic, &load_reference_bundle("cubic").unwrap(), &RefinerConfig::default())
        .unwrap()
}

pub fn well_formed_reply(reqs: &RequirementSet) -> String {
    let profile = ControlProfile::from_requirements(BaseCca::Cubic, reqs, 1.3);
    let source = render_patched_source(&profile, base_source(BaseCca::Cubic)).unwrap();
    format!(
        "The floor is applied after Cubic's own update, and the cap last, so the window never exceeds the \
         maximum rate.\n\n```c\n{source}```\n"
    )
}

pub const MALFORMED_REPLY: &str = "To meet the minimum rate, raise tp->snd_cwnd in bictcp_cong_avoid to the \
bandwidth-delay product of 16 Mbps whenever the measured rate is lower, and clamp it to the 30 Mbps product \
afterwards. Keep the loss handling unchanged.";

/// Replay fixture with the given replies to the initial Cubic request.
/// Token usage is left at zero, as some endpoints report none.
pub fn fixture_json(reqs: &RequirementSet, replies: &[String]) -> String {
    let request = ChatRequest {
        model: RefinerConfig::default().model_id,
        temperature: RefinerConfig::default().temperature,
        messages: vec![ChatMessage::user(cubic_prompt(reqs).render())],
    };
    let exchanges: Vec<Exchange> = replies
        .iter()
        .map(|text| Exchange {
            request: request.clone(),
            response: ChatResponse { text: text.clone(), prompt_tokens: 0, completion_tokens: 0 },
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&exchanges).unwrap();
    s.push('\n');
    s
}
