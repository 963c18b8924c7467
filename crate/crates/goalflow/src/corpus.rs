//! Knowledge-base documents and the operational store from disk.

use std::path::Path;

use goalflow_core::ops::OperationalStore;
use goalflow_core::qa::Document;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A Markdown document: the first `# ` heading is the title, the rest the
/// body. Without a heading the title is the file stem.
pub fn markdown_document(doc_id: &str, text: &str, source_uri: &str) -> Document {
    let mut title = doc_id.replace(['-', '_'], " ");
    let mut body = text;
    if let Some(first) = text.lines().next() {
        if let Some(h) = first.strip_prefix("# ") {
            title = h.trim().to_string();
            body = &text[first.len()..];
        }
    }
    Document {
        doc_id: doc_id.to_string(),
        title,
        body: body.trim().to_string(),
        source_uri: source_uri.to_string(),
    }
}

/// Documents from a directory of `.md`/`.txt` files (sorted by name) or
/// from a JSON list of `{doc_id, title, body, source_uri?}`.
pub fn load_documents(path: &Path) -> Result<Vec<Document>, CorpusError> {
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(io(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(io(p))?;
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("doc");
                Ok(markdown_document(stem, &text, &p.display().to_string()))
            })
            .collect()
    } else {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub fn load_store(path: &Path) -> Result<OperationalStore, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    OperationalStore::from_json(&text).map_err(|e| CorpusError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
