use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{io_err, write_jsonl};
use super::{instance_file, Pipeline};
use crate::collection::concat_context;
use crate::error::PipelineError;
use crate::prompts;
use crate::template::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    /// One line per instance with a reference to its context collection.
    #[default]
    EvalJsonl,
    /// Full-text prompt asking for step-by-step reasoning, with the gold answer.
    ReasoningSftJsonl,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "eval_jsonl" => Ok(ExportFormat::EvalJsonl),
            "reasoning_sft_jsonl" => Ok(ExportFormat::ReasoningSftJsonl),
            _ => Err(format!("unknown export format `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLine {
    pub instance_id: String,
    /// Collection id; its database dump lives under `db/<id>/`.
    pub context_ref: String,
    pub question: String,
    pub gold_answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningLine {
    pub instance_id: String,
    pub prompt: String,
    pub gold_answer: String,
}

/// Writes every instance of `split` to `dest`. Returns the number of lines.
pub fn export_split(p: &Pipeline, split: Split, format: ExportFormat, dest: &Path) -> Result<usize, PipelineError> {
    let collections = p.load_collections()?;
    let missing = collections.iter().any(|c| !p.path(&instance_file(c.level, split)).exists());
    if missing {
        return Err(PipelineError::MissingPrerequisite { stage: "export".into(), needs: "validate".into() });
    }
    let instances = p.load_instances(&[split], &[])?;
    if instances.is_empty() {
        log::warn!("the {split} split is empty; writing an empty file");
    }
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match format {
        ExportFormat::EvalJsonl => {
            let lines: Vec<EvalLine> = instances
                .iter()
                .map(|i| EvalLine {
                    instance_id: i.instance_id.clone(),
                    context_ref: i.collection_id.clone(),
                    question: i.question.clone(),
                    gold_answer: i.gold_answer.clone(),
                })
                .collect();
            write_jsonl(dest, &lines)?;
        }
        ExportFormat::ReasoningSftJsonl => {
            let corpus = p.load_corpus()?;
            let tok = p.tokenizer()?;
            let by_id: HashMap<&str, _> = collections.iter().map(|c| (c.collection_id.as_str(), c)).collect();
            let mut docs = HashMap::new();
            let mut lines = Vec::with_capacity(instances.len());
            for i in &instances {
                if !docs.contains_key(&i.collection_id) {
                    let c = by_id.get(i.collection_id.as_str()).ok_or_else(|| PipelineError::Stage {
                        stage: "export".into(),
                        message: format!("unknown collection `{}`", i.collection_id),
                    })?;
                    let doc = concat_context(c, &corpus, &tok)
                        .map_err(|e| PipelineError::Stage { stage: "export".into(), message: e.to_string() })?;
                    docs.insert(i.collection_id.clone(), doc.text);
                }
                lines.push(ReasoningLine {
                    instance_id: i.instance_id.clone(),
                    prompt: prompts::reasoning_fulltext(&docs[&i.collection_id], &i.question),
                    gold_answer: i.gold_answer.clone(),
                });
            }
            write_jsonl(dest, &lines)?;
        }
    }
    Ok(instances.len())
}
