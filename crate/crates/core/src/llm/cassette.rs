use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, LlmError, LlmSettings};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CassetteMode {
    /// Talk to the provider; nothing is written.
    Live,
    /// Talk to the provider and store every exchange under the directory.
    Record(PathBuf),
    /// Serve exchanges from the directory; never touch the network.
    Replay(PathBuf),
}

/// One recorded request/response pair, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub model: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Content hash over the sampling settings and the full prompt, so any prompt
/// drift misses the old recording instead of silently reusing it.
pub fn cassette_key(settings: &LlmSettings, system: &str, messages: &[ChatMessage]) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        provider: super::Provider,
        model: &'a str,
        temperature: f64,
        max_tokens: u32,
        top_p: f64,
        system: &'a str,
        messages: &'a [ChatMessage],
    }
    let material = KeyMaterial {
        provider: settings.provider,
        model: &settings.model_name,
        temperature: settings.temperature,
        max_tokens: settings.max_tokens,
        top_p: settings.top_p,
        system,
        messages,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn entry_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.json"))
}

pub(super) fn load(dir: &Path, key: &str) -> Result<CassetteEntry, LlmError> {
    let path = entry_path(dir, key);
    let text = fs::read_to_string(&path).map_err(|_| LlmError::CassetteMiss(key.to_string()))?;
    serde_json::from_str(&text).map_err(|e| LlmError::CassetteIo(format!("{}: {e}", path.display())))
}

pub(super) fn store(dir: &Path, entry: &CassetteEntry) -> Result<(), LlmError> {
    fs::create_dir_all(dir).map_err(|e| LlmError::CassetteIo(e.to_string()))?;
    let text = serde_json::to_string_pretty(entry).map_err(|e| LlmError::CassetteIo(e.to_string()))?;
    fs::write(entry_path(dir, &entry.key), text).map_err(|e| LlmError::CassetteIo(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_changes_with_prompt_and_settings() {
        let s = LlmSettings::default();
        let msgs = vec![ChatMessage::user("hello")];
        let k1 = cassette_key(&s, "sys", &msgs);
        assert_eq!(k1, cassette_key(&s, "sys", &msgs));
        assert_ne!(k1, cassette_key(&s, "sys2", &msgs));
        assert_ne!(k1, cassette_key(&s, "sys", &[ChatMessage::user("hello!")]));
        let hotter = LlmSettings { temperature: 0.7, ..s.clone() };
        assert_ne!(k1, cassette_key(&hotter, "sys", &msgs));
        assert_eq!(k1.len(), 64);
    }
}
