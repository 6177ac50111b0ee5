//! The provider abstraction the run loop drives.

/// Per-call generation settings. The model travels with the call because
/// one client serves every model its provider hosts.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub model_name: String,
    pub max_tokens: u32,
    /// `None` means provider-default sampling, which is what the protocol
    /// specifies; set it only for ad-hoc experiments.
    pub temperature: Option<f64>,
}

/// A completed generation. Truncation (the provider stopped at the token
/// ceiling) is an in-band flag: truncated text is still a valid sample, it
/// just gets recorded as cut short.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub truncated: bool,
}

/// Why a generation call failed, split by whether retrying can help.
/// Rate limits, timeouts, and server errors are retryable; malformed
/// requests and rejected credentials are not.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

/// One text-generation backend. Implementations must be safe to call from
/// several worker threads at once.
pub trait ProviderClient: Send + Sync {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GenerateError>;
}
