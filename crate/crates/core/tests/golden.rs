mod common;

use necc::cca::BaseCca;
use necc::chat::{parse_fixture, ChatMessage, ReplayClient};
use necc::evaluator::Evaluator;
use necc::prompting::{build_prompt, load_reference_bundle, PromptMode};
use necc::refinery::{run_loop, LlmRefiner, PriceTable, RefineError, Refiner, RefinerBackend, RefinerConfig, RunStatus};
use necc::requirements::HomeNetwork;

#[test]
fn prompts_match_golden() {
    let reqs = common::streaming_reqs();
    let cfg = RefinerConfig::default();
    let mut errors = Vec::new();
    for mode in [PromptMode::ZeroShot, PromptMode::Cot] {
        for base in BaseCca::ALL {
            let bundle = load_reference_bundle(base.name()).unwrap();
            let text = build_prompt(mode, &reqs, base, &bundle, &cfg).unwrap().render();
            let tag = match mode {
                PromptMode::ZeroShot => "zero_shot",
                PromptMode::Cot => "cot",
            };
            if let Err(e) = common::golden(&format!("golden/prompt_{tag}_{base}.txt"), &text) {
                errors.push(e);
            }
        }
    }
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn replay_fixtures_match_golden() {
    let reqs = common::streaming_reqs();
    let initial = common::fixture_json(&reqs, &[common::well_formed_reply(&reqs), common::MALFORMED_REPLY.to_string()]);
    common::golden("fixtures/llm/cubic_initial.json", &initial).unwrap();
    let all_good = common::fixture_json(&reqs, &vec![common::well_formed_reply(&reqs); 3]);
    common::golden("fixtures/llm/cubic_pool3.json", &all_good).unwrap();
    assert_eq!(parse_fixture(&initial).unwrap().len(), 2);
}

#[test]
fn replay_run_reaches_full_score() {
    let reqs = common::streaming_reqs();
    let exchanges = ReplayClient::load_fixture(&common::data_dir().join("fixtures/llm/cubic_pool3.json")).unwrap();
    let client = ReplayClient::from_exchanges(exchanges);
    let cfg = RefinerConfig { backend: RefinerBackend::Llm, pool_size: 3, ..RefinerConfig::default() };
    let refiner = LlmRefiner::new(&client, PriceTable::builtin());
    let ev = Evaluator::new(reqs, &HomeNetwork::new(60.0).unwrap(), 5);
    let out = run_loop(&reqs, BaseCca::Cubic, &cfg, &refiner, &ev).unwrap();
    assert_eq!(out.history.status, Some(RunStatus::Succeeded));
    assert_eq!(out.best.score(), Some(100));
    assert_eq!(client.remaining(), 0);
    let c = &out.candidates[0];
    assert_eq!(c.conversation.len(), 2);
    assert_eq!(c.conversation[0], ChatMessage::user(common::cubic_prompt(&reqs).render()));
    assert!(c.cost.dollars > 0.0);
}

#[test]
fn exhausted_replay_is_unavailable_with_partial_pool() {
    let reqs = common::streaming_reqs();
    let client = ReplayClient::from_exchanges(
        ReplayClient::load_fixture(&common::data_dir().join("fixtures/llm/cubic_initial.json")).unwrap(),
    );
    let cfg = RefinerConfig { backend: RefinerBackend::Llm, pool_size: 3, ..RefinerConfig::default() };
    let refiner = LlmRefiner::new(&client, PriceTable::builtin());
    match refiner.generate_pool(&common::cubic_prompt(&reqs), &cfg) {
        Err(RefineError::RefinerUnavailable { partial, .. }) => assert_eq!(partial.len(), 2),
        other => panic!("expected RefinerUnavailable, got {other:?}"),
    }
}
