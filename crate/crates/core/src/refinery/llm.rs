use crate::cca::{extract_profile, ControlProfile, PROFILE_BEGIN};
use crate::chat::{estimate_request_tokens, estimate_tokens, extract_single_code_block, ChatClient, ChatMessage, ChatRequest, Exchange};
use crate::prompting::{feedback_turn, Prompt};

use super::{Candidate, Cost, PriceTable, RefineError, Refiner, RefinerConfig};

/// Receives every exchange before the loop moves on.
pub trait ExchangeObserver: Sync {
    fn record(&self, candidate_id: u32, exchange: &Exchange) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub source_text: String,
    pub control_profile: Option<ControlProfile>,
    pub format_error: Option<String>,
}

/// Applies the output contract: one fenced block holding the full source,
/// with a profile block in it.
pub fn parse_response(text: &str) -> ParsedResponse {
    let source = match extract_single_code_block(text) {
        Ok(s) => s,
        Err(e) => return ParsedResponse { source_text: text.to_string(), control_profile: None, format_error: Some(e) },
    };
    match extract_profile(&source) {
        Ok(Some(p)) => ParsedResponse { source_text: source, control_profile: Some(p), format_error: None },
        Ok(None) => ParsedResponse {
            source_text: source,
            control_profile: None,
            format_error: Some(format!(
                "the returned source has no `{PROFILE_BEGIN}` block; keep the profile block from the \
                 OUTPUT FORMAT section and update its values"
            )),
        },
        Err(_) => ParsedResponse { source_text: source, control_profile: None, format_error: None },
    }
}

/// Chat-completion refiner. Each candidate owns one growing conversation.
pub struct LlmRefiner<'a> {
    pub client: &'a dyn ChatClient,
    pub prices: PriceTable,
    pub observer: Option<&'a dyn ExchangeObserver>,
}

impl<'a> LlmRefiner<'a> {
    pub fn new(client: &'a dyn ChatClient, prices: PriceTable) -> Self {
        LlmRefiner { client, prices, observer: None }
    }

    pub fn with_observer(mut self, observer: &'a dyn ExchangeObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    fn ask(&self, id: u32, cfg: &RefinerConfig, messages: Vec<ChatMessage>) -> Result<(Candidate, String), String> {
        let request = ChatRequest { model: cfg.model_id.clone(), temperature: cfg.temperature, messages };
        let response = self.client.complete(&request).map_err(|e| e.to_string())?;
        let exchange = Exchange { request, response };
        if let Some(o) = self.observer {
            o.record(id, &exchange)?;
        }
        let Exchange { request, response } = exchange;
        let prompt_tokens =
            if response.prompt_tokens > 0 { response.prompt_tokens } else { estimate_request_tokens(&request) };
        let completion_tokens =
            if response.completion_tokens > 0 { response.completion_tokens } else { estimate_tokens(&response.text) };
        let dollars = self.prices.dollars(&cfg.model_id, prompt_tokens, completion_tokens).map_err(|e| e.to_string())?;
        let parsed = parse_response(&response.text);
        let mut conversation = request.messages;
        conversation.push(ChatMessage::assistant(response.text.clone()));
        let c = Candidate {
            id,
            iteration_born: 0,
            parent_id: None,
            source_text: parsed.source_text,
            control_profile: parsed.control_profile,
            format_error: parsed.format_error,
            report: None,
            cost: Cost { prompt_tokens, completion_tokens, dollars },
            conversation,
        };
        Ok((c, response.text))
    }
}

impl Refiner for LlmRefiner<'_> {
    fn generate_pool(&self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<Vec<Candidate>, RefineError> {
        cfg.validate()?;
        self.prices.dollars(&cfg.model_id, 0, 0)?;
        let text = prompt.render();
        let mut pool = Vec::with_capacity(cfg.pool_size as usize);
        for id in 0..cfg.pool_size {
            match self.ask(id, cfg, vec![ChatMessage::user(text.clone())]) {
                Ok((c, _)) => pool.push(c),
                Err(message) => return Err(RefineError::RefinerUnavailable { message, partial: pool }),
            }
        }
        Ok(pool)
    }

    fn refine_one(
        &self,
        parent: &Candidate,
        prompt: &Prompt,
        cfg: &RefinerConfig,
        child_id: u32,
        iteration: u32,
    ) -> Result<Candidate, RefineError> {
        let report = parent
            .report
            .as_ref()
            .ok_or_else(|| RefineError::InvalidConfig(format!("candidate {} is unevaluated", parent.id)))?;
        let mut messages = parent.conversation.clone();
        if messages.is_empty() {
            messages.push(ChatMessage::user(prompt.render()));
            messages.push(ChatMessage::assistant(format!("```c\n{}```", parent.source_text)));
        }
        messages.push(ChatMessage::user(feedback_turn(report)));
        let (mut child, _) = self
            .ask(child_id, cfg, messages)
            .map_err(|message| RefineError::RefinerUnavailable { message, partial: Vec::new() })?;
        child.iteration_born = iteration;
        child.parent_id = Some(parent.id);
        Ok(child)
    }
}
