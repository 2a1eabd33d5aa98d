//! Application configuration: one TOML document with a section per module.
//!
//! Credentials never live in the file; each endpoint section names the
//! environment variable that holds its bearer token, so configs are safe to
//! commit.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use reflect_core::reward::{DEFAULT_LAMBDA_F, DEFAULT_LAMBDA_V};
use reflect_forge::gateway::{EndpointConfig, ImageEncoding, RetryPolicy};
use reflect_forge::pipeline::RoleTemperatures;

use crate::AppError;

pub const LLM_KEY_ENV: &str = "REFLECT_LLM_API_KEY";
pub const VLM_KEY_ENV: &str = "REFLECT_VLM_API_KEY";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Reasoning endpoint: requester, summarizer, cohesion rewrite.
    pub llm: EndpointSection,
    /// Vision endpoint: visual responder.
    pub vlm: EndpointSection,
    pub forge: ForgeSection,
    pub reward: RewardSection,
    pub analyze: AnalyzeSection,
    pub service: ServiceSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: String,
    pub model: String,
    /// Name of the env var holding the bearer token; role default when unset.
    pub api_key_env: Option<String>,
    /// Role default when unset: URL pass-through for the LLM, base64
    /// inlining for the VLM.
    pub image_encoding: Option<ImageEncoding>,
    pub concurrency: usize,
    pub retry_budget: u32,
    pub retry_base_ms: u64,
    pub retry_max_ms: u64,
    pub timeout_secs: u64,
}

impl Default for EndpointSection {
    fn default() -> Self {
        EndpointSection {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: String::new(),
            api_key_env: None,
            image_encoding: None,
            concurrency: 4,
            retry_budget: 3,
            retry_base_ms: 500,
            retry_max_ms: 20_000,
            timeout_secs: 120,
        }
    }
}

impl EndpointSection {
    pub fn endpoint(&self, default_env: &str, default_encoding: ImageEncoding) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self
                .api_key_env
                .clone()
                .unwrap_or_else(|| default_env.to_string()),
            image_encoding: self.image_encoding.unwrap_or(default_encoding),
            concurrency: self.concurrency.max(1),
            retry: RetryPolicy {
                budget: self.retry_budget.max(1),
                base_delay: Duration::from_millis(self.retry_base_ms),
                max_delay: Duration::from_millis(self.retry_max_ms),
                jitter: true,
            },
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
        }
    }
}

impl AppConfig {
    pub fn llm_endpoint(&self) -> EndpointConfig {
        self.llm.endpoint(LLM_KEY_ENV, ImageEncoding::Url)
    }

    pub fn vlm_endpoint(&self) -> EndpointConfig {
        self.vlm.endpoint(VLM_KEY_ENV, ImageEncoding::Base64DataUri)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSection {
    pub max_rounds: u32,
    pub output: String,
    pub concurrency: usize,
    pub require_connectors: bool,
    pub max_tokens: u32,
    pub temperatures: RoleTemperatures,
}

impl Default for ForgeSection {
    fn default() -> Self {
        ForgeSection {
            max_rounds: 4,
            output: "forged.jsonl".into(),
            concurrency: 4,
            require_connectors: false,
            max_tokens: 2048,
            temperatures: RoleTemperatures::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub lambda_v: f64,
    pub lambda_f: f64,
    /// Optional ceiling on the visual-attention ratio; ships disabled.
    pub r_v_cap: Option<f64>,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            lambda_v: DEFAULT_LAMBDA_V,
            lambda_f: DEFAULT_LAMBDA_F,
            r_v_cap: None,
        }
    }
}

impl RewardSection {
    pub fn reward_config(&self) -> reflect_core::RewardConfig64 {
        reflect_core::reward::RewardConfig {
            lambda_v: self.lambda_v,
            lambda_f: self.lambda_f,
            r_v_cap: self.r_v_cap,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    pub bucket_size: usize,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection {
            bucket_size: 25,
            bootstrap_resamples: 1000,
            confidence_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub port: u16,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { port: 8080 }
    }
}

impl AppConfig {
    /// Loads from `path`, or returns defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<AppConfig, AppError> {
        let config = match path {
            None => AppConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    AppError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    AppError::Usage(format!("invalid config {}: {e}", path.display()))
                })?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.service.port == 0 {
            return Err(AppError::Usage("service.port must be in [1, 65535]".into()));
        }
        if !self.reward.lambda_v.is_finite() || !self.reward.lambda_f.is_finite() {
            return Err(AppError::Usage("reward coefficients must be finite".into()));
        }
        if self.analyze.confidence_level <= 0.0 || self.analyze.confidence_level >= 1.0 {
            return Err(AppError::Usage(
                "analyze.confidence_level must be in (0, 1)".into(),
            ));
        }
        if self.analyze.bucket_size == 0 {
            return Err(AppError::Usage("analyze.bucket_size must be >= 1".into()));
        }
        if self.forge.max_rounds < 2 {
            return Err(AppError::Usage("forge.max_rounds must be >= 2".into()));
        }
        Ok(())
    }
}
