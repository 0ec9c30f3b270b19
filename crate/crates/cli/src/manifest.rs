use std::time::{SystemTime, UNIX_EPOCH};

use rt_spectrum::params::FluidConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of what produced an output file. Everything except
/// `created_unix` is a function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: serde_json::Value,
    pub config: FluidConfig,
    pub mesh: MeshSizes,
    pub tolerances: Tolerances,
    /// Git-style hash of the canonical inputs:
    /// `sha256("blob <len>\0" + inputs)`.
    pub input_hash: String,
    pub output_sha256: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSizes {
    pub n_lower: usize,
    pub n_upper: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub s_rel_tol: f64,
    pub stable_alpha_tol: f64,
    pub eigen_residual_tol: f64,
}

pub(crate) fn git_style_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

impl RunManifest {
    pub(crate) fn new(
        command: &str,
        arguments: serde_json::Value,
        config: &FluidConfig,
        mesh: MeshSizes,
        tolerances: Tolerances,
        output: &[u8],
    ) -> Self {
        let inputs = serde_json::json!({
            "command": command,
            "arguments": arguments,
            "config": config,
            "mesh": mesh,
            "tolerances": tolerances,
        });
        // serde_json maps are ordered, so this encoding is canonical
        let canonical = serde_json::to_vec(&inputs).expect("manifest inputs serialize");
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            arguments,
            config: *config,
            mesh,
            tolerances,
            input_hash: git_style_hash(&canonical),
            output_sha256: hex::encode(Sha256::digest(output)),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}
