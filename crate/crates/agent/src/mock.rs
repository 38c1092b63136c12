//! Deterministic offline chat backend.
//!
//! The mock recognizes which stage a prompt belongs to and answers with a
//! canned reply for that stage. Token counts are whitespace-separated word
//! counts of prompt and reply, so totals are reproducible. Every request is
//! recorded for prompt audits.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::chat::{ChatBackend, ChatError, ChatReply, ChatRequest};
use crate::prompts::Stage;

type Responder = dyn Fn(Stage, &str, usize) -> Result<String, ChatError> + Send + Sync;

pub struct MockBackend {
    model: String,
    responder: Arc<Responder>,
    calls: AtomicUsize,
    per_stage: Mutex<HashMap<Stage, usize>>,
    log: Mutex<Vec<ChatRequest>>,
    reported: AtomicU64,
}

pub const MOCK_OBJECTS: &str = "#Person#: A man with three arms, one of which is unnaturally attached to his back. He wears a blue jacket.\n\n#Chair#: A wooden chair that appears to be floating without support, casting no shadow.";

pub const MOCK_FORMATTER: &str = "@1. **Name**: Abnormal number of hands\n- **Observed Phenomenon**: The individual on the left has two left hands, one emerging from the elbow and overlapping with the sleeve. Both hands share identical orientation and lack anatomical continuity.\n- **Reasoning**: Human anatomy allows one left and one right hand. Two left hands in such arrangement violate biological symmetry and visual plausibility.\n- **Severity Score**: 5/100 (highly unrealistic)\n\n@2. **Name**: Suspended chair without support\n- **Observed Phenomenon**: A wooden chair is floating approximately 30 cm above the ground without visible support or shadows.\n- **Reasoning**: Gravity requires contact or suspension; absence of legs, shadows, or wires defies physical realism.\n- **Severity Score**: 10/100 (extremely unnatural)\n";

/// The object a per-object prompt is about, read from the stage's fixed
/// template text around the object slot.
pub fn focus_object(stage: Stage, prompt: &str) -> Option<String> {
    let pattern = match stage {
        Stage::AttributeStep1 => r"Analyze \*\*(.+?)\*\* in the image",
        Stage::AttributeStep2 => r"^\*\*Object:\*\* \*\*(.+?)\*\*\n",
        Stage::RelationStep1 => r"relationships between \*\*(.+?)\*\* and the following objects",
        Stage::RelationStep2 => r"The primary subject of analysis is \*\*(.+?)\*\*\. All evaluations",
        Stage::IntegratorStep1 => r"^Description for \*\*(.+?)\*\*: ",
        _ => return None,
    };
    let re = regex::Regex::new(pattern).expect("static pattern");
    re.captures(prompt).map(|c| c[1].to_string())
}

/// Canned replies for every stage.
pub fn default_reply(stage: Stage, prompt: &str) -> String {
    let object = focus_object(stage, prompt).unwrap_or_else(|| "object".into());
    match stage {
        Stage::ObjectPerceiver => MOCK_OBJECTS.into(),
        Stage::AttributeStep1 => format!(
            "The {object} shows an implausible structure: its parts do not connect naturally and it lacks physical support."
        ),
        Stage::AttributeStep2 => format!(
            "1. **Abnormal Phenomenon Name**: Implausible structure of {object}\n   **Observed Issue**: The {object} has parts that do not connect naturally.\n   **Explanation**: Real objects of this kind have continuous, supported structure."
        ),
        Stage::RelationStep1 => format!(
            "- **Relationship**: {object} and its surroundings\n- **Observed Issue**: The {object} does not rest on any surface.\n- **Explanation**: Objects need visible support."
        ),
        Stage::RelationStep2 => format!(
            "1. **Objects Involved**: {object}, floor\n   **Observed Issue**: The {object} is floating without support.\n   **Reasoning**: Gravity requires contact or suspension."
        ),
        Stage::IntegratorStep1 => format!(
            "1. **Observed Phenomenon**: {object} is structurally and physically implausible\n   - **Sources**: Both\n   - **Details**: Disconnected parts and no support.\n   - **Explanation**: Violates anatomy or gravity."
        ),
        Stage::IntegratorStep2 => "1. **Object Name**: Person\n   **Phenomenon**: The man has an extra arm attached to his back.\n   **Explanation**: Anatomically impossible.\n2. **Object Name**: Chair\n   **Phenomenon**: The chair floats above the floor.\n   **Explanation**: Gravity requires support.".into(),
        Stage::Formatter => MOCK_FORMATTER.into(),
    }
}

fn words(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl MockBackend {
    pub fn new() -> Self {
        Self::with_responder(|stage, prompt, _| Ok(default_reply(stage, prompt)))
    }

    /// Custom replies: the responder receives the detected stage, the prompt
    /// text and the 0-based index of this call within its stage.
    pub fn with_responder(
        responder: impl Fn(Stage, &str, usize) -> Result<String, ChatError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model: "mock-vlm".into(),
            responder: Arc::new(responder),
            calls: AtomicUsize::new(0),
            per_stage: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            reported: AtomicU64::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn stage_calls(&self, stage: Stage) -> usize {
        self.per_stage.lock().expect("mock lock").get(&stage).copied().unwrap_or(0)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock lock").clone()
    }

    /// Prompt plus completion tokens over every successful reply so far.
    pub fn reported_tokens(&self) -> u64 {
        self.reported.load(Ordering::SeqCst)
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatReply, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.prompt_text();
        let stage = Stage::detect(&prompt).ok_or_else(|| ChatError::Protocol("mock: unrecognized prompt".into()))?;
        let index = {
            let mut map = self.per_stage.lock().expect("mock lock");
            let n = map.entry(stage).or_insert(0);
            *n += 1;
            *n - 1
        };
        self.log.lock().expect("mock lock").push(request.clone());
        let text = (self.responder)(stage, &prompt, index)?;
        let reply = ChatReply {
            prompt_tokens: words(&prompt),
            completion_tokens: words(&text),
            text,
        };
        self.reported
            .fetch_add(reply.prompt_tokens + reply.completion_tokens, Ordering::SeqCst);
        Ok(reply)
    }
}
