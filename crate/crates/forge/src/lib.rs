//! LLM-VLM interaction pipeline that constructs reasoning data with
//! visual-reflection patterns.
//!
//! - [`gateway`]: chat-completion client abstraction with an HTTP
//!   implementation (OpenAI-compatible endpoints, retry with backoff) and a
//!   scripted mock for deterministic tests.
//! - [`prompts`]: the five role templates, shipped verbatim as text assets.
//! - [`parse`]: tolerant parsers for the structured replies the templates
//!   request.
//! - [`pipeline`]: the requester/responder/summarizer loop, non-reflection
//!   filtering, and cohesion enhancement.
//! - [`batch`]: bounded-concurrency batch driver with JSONL output and a
//!   rejection tally.

pub mod batch;
pub mod gateway;
pub mod parse;
pub mod pipeline;
pub mod prompts;

pub use batch::{forge_batch, BatchOptions, BatchReport, ClientProvider, ScriptBook, SharedClients};
pub use gateway::{ChatClient, ChatRequest, ChatResponse, EndpointConfig, Gateway, GatewayError};
pub use pipeline::{ForgeClients, ForgeConfig, ForgeOutcome, ForgeTask, RejectReason};
