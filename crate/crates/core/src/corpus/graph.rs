use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, Subject};
use crate::error::GraphError;
use crate::seed::Rng;

/// Reference and citation lookups of a scholarly graph service.
pub trait GraphApi {
    /// Articles cited by `id`.
    fn references(&self, id: &str) -> Result<Vec<String>, GraphError>;
    /// Articles citing `id`.
    fn citations(&self, id: &str) -> Result<Vec<String>, GraphError>;
}

/// Graph answered from the corpus' own reference lists.
pub struct LocalGraph {
    refs: HashMap<String, Vec<String>>,
    cited_by: HashMap<String, Vec<String>>,
}

impl LocalGraph {
    pub fn new(corpus: &Corpus) -> Self {
        let mut refs = HashMap::new();
        let mut cited_by: HashMap<String, Vec<String>> = HashMap::new();
        for a in corpus.articles() {
            refs.insert(a.article_id.clone(), a.reference_ids.clone());
            for r in &a.reference_ids {
                cited_by.entry(r.clone()).or_default().push(a.article_id.clone());
            }
        }
        LocalGraph { refs, cited_by }
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut refs: HashMap<String, Vec<String>> = HashMap::new();
        let mut cited_by: HashMap<String, Vec<String>> = HashMap::new();
        for (x, y) in edges {
            refs.entry(x.to_string()).or_default().push(y.to_string());
            cited_by.entry(y.to_string()).or_default().push(x.to_string());
        }
        LocalGraph { refs, cited_by }
    }
}

impl GraphApi for LocalGraph {
    fn references(&self, id: &str) -> Result<Vec<String>, GraphError> {
        Ok(self.refs.get(id).cloned().unwrap_or_default())
    }

    fn citations(&self, id: &str) -> Result<Vec<String>, GraphError> {
        Ok(self.cited_by.get(id).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpGraphConfig {
    pub base_url: String,
    /// Environment variable holding the API key, sent as `x-api-key`.
    pub api_key_env: Option<String>,
    pub min_interval_ms: u64,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for HttpGraphConfig {
    fn default() -> Self {
        HttpGraphConfig {
            base_url: "https://api.semanticscholar.org/graph/v1".into(),
            api_key_env: Some("S2_API_KEY".into()),
            min_interval_ms: 1000,
            max_retries: 3,
            timeout_secs: 30,
        }
    }
}

/// Client for Semantic Scholar compatible `/paper/{id}/references` and
/// `/paper/{id}/citations` endpoints. Requests are serialized through a
/// minimum-interval limiter.
pub struct HttpGraph {
    cfg: HttpGraphConfig,
    client: reqwest::blocking::Client,
    last: Mutex<Option<Instant>>,
}

#[derive(Deserialize)]
struct Page {
    #[serde(default)]
    data: Vec<Edge>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Edge {
    cited_paper: Option<PaperRef>,
    citing_paper: Option<PaperRef>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PaperRef {
    paper_id: Option<String>,
}

impl HttpGraph {
    pub fn new(cfg: HttpGraphConfig) -> Result<Self, GraphError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| GraphError::Transport { message: e.to_string(), retryable: false })?;
        Ok(HttpGraph { cfg, client, last: Mutex::new(None) })
    }

    fn wait_turn(&self) {
        let mut last = self.last.lock().expect("limiter lock");
        let gap = Duration::from_millis(self.cfg.min_interval_ms);
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < gap {
                std::thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch(&self, id: &str, kind: &str) -> Result<Vec<String>, GraphError> {
        let url =
            format!("{}/paper/{}/{}?fields=paperId&limit=1000", self.cfg.base_url.trim_end_matches('/'), id, kind);
        let mut attempt = 0;
        loop {
            self.wait_turn();
            let mut req = self.client.get(&url);
            if let Some(var) = &self.cfg.api_key_env {
                if let Ok(key) = std::env::var(var) {
                    req = req.header("x-api-key", key);
                }
            }
            let result = req.send();
            let err = match result {
                Ok(resp) if resp.status().is_success() => {
                    let page: Page = resp.json().map_err(|e| GraphError::Payload(e.to_string()))?;
                    return Ok(page
                        .data
                        .into_iter()
                        .filter_map(|e| if kind == "references" { e.cited_paper } else { e.citing_paper })
                        .filter_map(|p| p.paper_id)
                        .collect());
                }
                Ok(resp) if resp.status().as_u16() == 404 => return Err(GraphError::NotFound(id.to_string())),
                Ok(resp) => {
                    let s = resp.status().as_u16();
                    GraphError::Transport { message: format!("HTTP {s}"), retryable: s == 429 || s >= 500 }
                }
                Err(e) => GraphError::Transport { message: e.to_string(), retryable: true },
            };
            let retryable = matches!(err, GraphError::Transport { retryable: true, .. });
            if !retryable || attempt >= self.cfg.max_retries {
                return Err(err);
            }
            attempt += 1;
            std::thread::sleep(Duration::from_millis(500 * (1 << attempt.min(6))));
        }
    }
}

impl GraphApi for HttpGraph {
    fn references(&self, id: &str) -> Result<Vec<String>, GraphError> {
        self.fetch(id, "references")
    }

    fn citations(&self, id: &str) -> Result<Vec<String>, GraphError> {
        self.fetch(id, "citations")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleCluster {
    pub seed_id: String,
    pub member_ids: BTreeSet<String>,
    pub subject: Subject,
    /// Set when the seed had no eligible neighbours.
    #[serde(default)]
    pub degenerate: bool,
}

impl ArticleCluster {
    /// A cluster covering the whole corpus, seeded by its first article.
    pub fn whole_corpus(corpus: &Corpus) -> Option<Self> {
        let first = corpus.articles().first()?;
        Some(ArticleCluster {
            seed_id: first.article_id.clone(),
            member_ids: corpus.ids().map(str::to_string).collect(),
            subject: first.subject,
            degenerate: false,
        })
    }
}

pub const FIRST_HOP: usize = 10;
pub const SECOND_HOP: usize = 5;

fn neighbours(client: &dyn GraphApi, id: &str) -> Result<Vec<String>, GraphError> {
    let mut all: BTreeSet<String> = client.references(id)?.into_iter().collect();
    all.extend(client.citations(id)?);
    Ok(all.into_iter().collect())
}

fn sample(mut pool: Vec<String>, k: usize, rng: &mut Rng) -> Vec<String> {
    pool.shuffle(rng);
    pool.truncate(k);
    pool
}

/// Grows a cluster around `seed`: up to ten eligible first-hop neighbours,
/// then up to five eligible second-hop neighbours for each of them.
/// Eligible means the article has full text in `corpus`.
pub fn expand_seed(
    seed: &str,
    client: &dyn GraphApi,
    corpus: &Corpus,
    rng: &mut Rng,
) -> Result<ArticleCluster, GraphError> {
    let seed_article = corpus.get(seed).ok_or_else(|| GraphError::NotFound(seed.to_string()))?;
    let mut members = BTreeSet::from([seed.to_string()]);
    let first: Vec<String> =
        neighbours(client, seed)?.into_iter().filter(|n| n != seed && corpus.contains(n)).collect();
    let first = sample(first, FIRST_HOP, rng);
    members.extend(first.iter().cloned());
    for f in &first {
        let second: Vec<String> =
            neighbours(client, f)?.into_iter().filter(|n| !members.contains(n) && corpus.contains(n)).collect();
        members.extend(sample(second, SECOND_HOP, rng));
    }
    Ok(ArticleCluster {
        seed_id: seed.to_string(),
        degenerate: first.is_empty(),
        member_ids: members,
        subject: seed_article.subject,
    })
}
