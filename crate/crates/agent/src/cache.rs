use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::chat::ChatReply;
use crate::prompts::Stage;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content address of one stage call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StageKey {
    pub image_sha256: String,
    pub stage: Stage,
    pub object: String,
    pub prompt_sha256: String,
    pub model: String,
}

impl StageKey {
    pub fn new(image_sha256: &str, stage: Stage, object: &str, prompt: &str, model: &str) -> Self {
        Self {
            image_sha256: image_sha256.to_string(),
            stage,
            object: object.to_string(),
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            model: model.to_string(),
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("key serializes"))
    }
}

#[derive(Serialize, serde::Deserialize)]
struct Entry {
    key: serde_json::Value,
    reply: ChatReply,
}

/// Stage replies keyed by [`StageKey`]. With a directory, each entry is a
/// `<sha256>.json` file; entries are also kept in memory.
#[derive(Debug, Default)]
pub struct StageCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, ChatReply>>,
}

impl StageCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &StageKey) -> Option<ChatReply> {
        let digest = key.digest();
        if let Some(r) = self.memory.lock().expect("cache lock").get(&digest) {
            return Some(r.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{digest}.json"));
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Entry>(&text) {
            Ok(entry) => {
                self.memory
                    .lock()
                    .expect("cache lock")
                    .insert(digest, entry.reply.clone());
                Some(entry.reply)
            }
            Err(e) => {
                warn!(path = %path.display(), "ignoring unreadable cache entry: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &StageKey, reply: &ChatReply) {
        let digest = key.digest();
        self.memory
            .lock()
            .expect("cache lock")
            .insert(digest.clone(), reply.clone());
        let Some(dir) = &self.dir else { return };
        let entry = Entry {
            key: serde_json::to_value(key).expect("key serializes"),
            reply: reply.clone(),
        };
        let path = dir.join(format!("{digest}.json"));
        // write-then-rename so concurrent readers never see a partial file
        let tmp = dir.join(format!(".{digest}.{}.tmp", std::process::id()));
        let result = std::fs::write(&tmp, serde_json::to_vec_pretty(&entry).expect("entry serializes"))
            .and_then(|_| std::fs::rename(&tmp, &path));
        if let Err(e) = result {
            warn!(path = %path.display(), "could not persist cache entry: {e}");
        }
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
