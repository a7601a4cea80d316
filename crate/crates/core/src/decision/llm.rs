use super::chat::{ChatMessage, ChatRequest, ChatTransport, LlmEndpointConfig};
use super::parse::{extract_thought, parse_order_selection, parse_work_hours, strip_think, ParseError};
use super::prompt::{render, PromptTemplates};
use super::{
    BackendError, DecisionBackend, DecisionContext, Decided, Failed, LlmExchange, OrderSelection,
    ThoughtPair, WorkHoursDecision,
};

/// How many recent memory summaries are appended to each prompt by default.
pub const DEFAULT_MEMORY_SUMMARIES: usize = 5;

/// Backend that asks a chat-completion endpoint, once per perspective.
///
/// The bounded-rationality call only contributes its reasoning text; the
/// decision itself is parsed from the rational call, which is retried with the
/// parse error appended until it yields a usable payload or `max_retries` is
/// exhausted.
pub struct LlmBackend {
    transport: Box<dyn ChatTransport>,
    config: LlmEndpointConfig,
    templates: PromptTemplates,
    memory_summaries: usize,
    dual_perspective: bool,
}

impl LlmBackend {
    pub fn new(
        transport: impl ChatTransport + 'static,
        config: LlmEndpointConfig,
        templates: PromptTemplates,
    ) -> Self {
        Self {
            transport: Box::new(transport),
            config,
            templates,
            memory_summaries: DEFAULT_MEMORY_SUMMARIES,
            dual_perspective: true,
        }
    }

    pub fn with_memory_summaries(mut self, n: usize) -> Self {
        self.memory_summaries = n;
        self
    }

    /// With dual perspective off only the rational call is made and the
    /// bounded thought is left empty.
    pub fn with_dual_perspective(mut self, on: bool) -> Self {
        self.dual_perspective = on;
        self
    }

    fn memory_block(&self, ctx: &DecisionContext) -> String {
        let skip = ctx.memory.len().saturating_sub(self.memory_summaries);
        let recent: Vec<_> = ctx.memory[skip..].iter().map(|m| format!("- {m}")).collect();
        if recent.is_empty() {
            String::new()
        } else {
            format!("\nYour recent memory:\n{}\n", recent.join("\n"))
        }
    }

    fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.config.model_id.clone(),
            temperature: self.config.temperature,
            messages,
        }
    }

    fn send(
        &self,
        request: &ChatRequest,
        purpose: &str,
        exchanges: &mut Vec<LlmExchange>,
    ) -> Result<String, BackendError> {
        let mut last = BackendError::EmptyGeneration;
        for _ in 0..=self.config.max_retries {
            match self.transport.complete(request) {
                Ok(reply) => {
                    exchanges.push(LlmExchange {
                        purpose: purpose.to_string(),
                        request: request.clone(),
                        response: reply.clone(),
                    });
                    return Ok(reply);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn ask_parsed<T>(
        &self,
        system: String,
        user: String,
        purpose: &str,
        parse: impl Fn(&str) -> Result<T, ParseError>,
        exchanges: &mut Vec<LlmExchange>,
    ) -> Result<(String, T), BackendError> {
        let mut messages = vec![ChatMessage::system(system), ChatMessage::user(user)];
        let mut last = ParseError::Empty;
        for _ in 0..=self.config.max_retries {
            let request = self.request(messages.clone());
            let reply = self.send(&request, purpose, exchanges)?;
            let body = strip_think(&reply, &self.config.think_tag_open, &self.config.think_tag_close);
            match parse(&body) {
                Ok(value) => return Ok((reply, value)),
                Err(e) => {
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your answer could not be used: {e}. Answer again and use the required json format."
                    )));
                    last = e;
                }
            }
        }
        Err(BackendError::Parse(last))
    }

    fn thought_of(&self, reply: &str) -> Result<String, BackendError> {
        extract_thought(reply, &self.config.think_tag_open, &self.config.think_tag_close)
            .ok_or(BackendError::EmptyGeneration)
    }

    fn system(&self, ctx: &DecisionContext, preamble: &str) -> String {
        format!("{}\n\n{}", ctx.persona, preamble)
    }

    fn decide<T>(
        &self,
        ctx: &DecisionContext,
        prompt: String,
        purpose: &str,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Decided<T>, Failed> {
        let mut exchanges = Vec::new();
        let result = (|| {
            let bounded = if self.dual_perspective {
                let request = self.request(vec![
                    ChatMessage::system(self.system(ctx, &self.templates.bounded_preamble)),
                    ChatMessage::user(prompt.clone()),
                ]);
                let reply = self.send(&request, &format!("{purpose}:bounded"), &mut exchanges)?;
                self.thought_of(&reply)?
            } else {
                String::new()
            };
            let (reply, decision) = self.ask_parsed(
                self.system(ctx, &self.templates.rational_preamble),
                prompt.clone(),
                &format!("{purpose}:rational"),
                &parse,
                &mut exchanges,
            )?;
            let rational = self.thought_of(&reply)?;
            Ok((decision, ThoughtPair { bounded, rational }))
        })();
        match result {
            Ok((decision, thoughts)) => Ok(Decided {
                decision,
                thoughts,
                exchanges,
            }),
            Err(error) => Err(Failed { error, exchanges }),
        }
    }

    fn template_failure(e: super::TemplateError) -> Failed {
        Failed::from(BackendError::Transport(format!("prompt template: {e}")))
    }

    pub fn work_hours_prompt(&self, ctx: &DecisionContext) -> Result<String, super::TemplateError> {
        let r = ctx.rankings;
        render(
            &self.templates.work_hours,
            &[
                ("n_riders", ctx.n_riders.to_string()),
                ("distance_rank", r.distance_rank.to_string()),
                ("earnings_rank", r.earnings_rank.to_string()),
                ("orders_rank", r.orders_rank.to_string()),
                ("start_time", format!("{}:00", ctx.yesterday_shift.go_to_work_hour)),
                ("end_time", format!("{}:00", ctx.yesterday_shift.get_off_work_hour)),
                ("memory", self.memory_block(ctx)),
            ],
        )
    }

    pub fn order_prompt(&self, ctx: &DecisionContext) -> Result<String, super::TemplateError> {
        let list = ctx
            .offered_orders
            .iter()
            .map(|o| {
                format!(
                    "\n- order_id: {}, pickup location: {}, delivery location: {}, money: {}",
                    o.id, o.pickup, o.dropoff, o.payment
                )
            })
            .collect::<String>();
        render(
            &self.templates.order_selection,
            &[
                ("order_list", list),
                ("position", ctx.position.to_string()),
                ("capacity", ctx.remaining_capacity.to_string()),
                ("memory", self.memory_block(ctx)),
            ],
        )
    }
}

impl DecisionBackend for LlmBackend {
    fn decide_work_hours(&self, ctx: &DecisionContext) -> Result<Decided<WorkHoursDecision>, Failed> {
        let prompt = self.work_hours_prompt(ctx).map_err(Self::template_failure)?;
        self.decide(ctx, prompt, "work_hours", parse_work_hours)
    }

    fn select_orders(&self, ctx: &DecisionContext) -> Result<Decided<OrderSelection>, Failed> {
        if ctx.offered_orders.is_empty() || ctx.remaining_capacity == 0 {
            return Err(Failed::from(BackendError::Transport(
                "order selection requested with nothing to select".into(),
            )));
        }
        let prompt = self.order_prompt(ctx).map_err(Self::template_failure)?;
        self.decide(ctx, prompt, "order_selection", parse_order_selection)
    }

    fn extract_dual_thoughts(
        &self,
        question: &str,
        ctx: &DecisionContext,
    ) -> Result<(ThoughtPair, Vec<LlmExchange>), Failed> {
        if question.trim().is_empty() {
            return Err(Failed::from(BackendError::EmptyGeneration));
        }
        let prompt = format!("{question}\n{}", self.memory_block(ctx));
        let decided = self.decide(ctx, prompt, "thought", |_| Ok(()));
        decided.map(|d| (d.thoughts, d.exchanges))
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }
}
