//! Prompt templates for the three interaction roles, the cohesion rewrite,
//! and the RL/evaluation system prompt.
//!
//! The template texts ship verbatim as versioned assets under `templates/`;
//! rendering only substitutes the placeholder markers. `<split>` in the
//! requester template is a literal separator between the instruction block
//! and the info block and is left in place.

pub const VISUAL_REQUESTER: &str = include_str!("../templates/visual_requester.txt");
pub const VISUAL_RESPONDER: &str = include_str!("../templates/visual_responder.txt");
pub const SUMMARIZER: &str = include_str!("../templates/summarizer.txt");
pub const COHESION_ENHANCEMENT: &str = include_str!("../templates/cohesion_enhancement.txt");
pub const RL_SYSTEM: &str = include_str!("../templates/rl_system.txt");

/// Appended to a prompt when the previous reply could not be parsed.
pub const PARSE_REMINDER: &str =
    "Your previous reply could not be parsed. Respond again using exactly the requested format.";

/// Separator between context fragments handed to the cohesion rewrite; the
/// rewrite instructions refer to these as the disjointed parts.
pub const CONTEXT_GAP_MARKER: &str = "...";

/// Connecting phrases the cohesion template suggests; the strictness flag
/// checks stitched output for at least one of them.
pub const CONNECTIVE_PHRASES: [&str; 4] = [
    "Let's double check",
    "Let's check the image again",
    "To sum up",
    "Wait",
];

pub fn render_requester(question: &str, info: &str) -> String {
    VISUAL_REQUESTER
        .replace("<question>", question)
        .replace("<info>", info)
}

pub fn render_responder(visual_question: &str) -> String {
    VISUAL_RESPONDER.replace("<question>", visual_question)
}

pub fn render_summarizer(info: &str, question: &str) -> String {
    SUMMARIZER
        .replace("<info>", info)
        .replace("<question>", question)
}

pub fn render_cohesion(question: &str, reasoning: &str) -> String {
    COHESION_ENHANCEMENT
        .replace("<Question>", question)
        .replace("<Reasoning>", reasoning)
}
