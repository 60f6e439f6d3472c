//! Article corpus directories: one `<doc_id>.json` per article.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use soilcopilot_core::knowledge::{
    index_corpus, ArticleDoc, Index, KnowledgeError, Topic, DEFAULT_CHUNK_TOKENS, DEFAULT_OVERLAP_TOKENS,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Index(#[from] KnowledgeError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocFile {
    title: String,
    topic: String,
    citation: String,
    body: String,
}

/// Reads every `*.json` file in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<ArticleDoc>, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.is_file())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(io(&p))?;
            let parse = |message: String| CorpusError::Parse { path: p.clone(), message };
            let f: DocFile = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
            let topic = f.topic.parse::<Topic>().map_err(|e| parse(e.to_string()))?;
            let doc_id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            Ok(ArticleDoc { doc_id, title: f.title, topic, body: f.body, citation: f.citation })
        })
        .collect()
}

/// Loads and indexes a corpus directory with the default chunking.
pub fn load_index(dir: &Path) -> Result<Index, CorpusError> {
    let docs = load_corpus_dir(dir)?;
    Ok(index_corpus(&docs, DEFAULT_CHUNK_TOKENS, DEFAULT_OVERLAP_TOKENS)?)
}
