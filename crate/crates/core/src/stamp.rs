use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Enough to replay a run: tool version, seed, and a digest of the
/// effective configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_digest: String,
}

impl Stamp {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_digest: digest(config),
        }
    }
}

/// SHA-256 of the value's compact JSON encoding, hex encoded.
pub fn digest<C: Serialize>(value: &C) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes to JSON");
    hex::encode(Sha256::digest(&bytes))
}
