//! Token-budgeted article collections and their concatenated context documents.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{ArticleCluster, Corpus, Tokenizer};
use crate::error::AssemblyError;
use crate::seed::Rng;

pub const MIN_ARTICLES: usize = 4;
pub const MAX_OVERLAP: f64 = 0.5;
pub const SEPARATOR: &str = "\n\n---\n\n";

/// A token budget. `K` is 1,024 tokens and `M` is 1,024K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(pub u64);

impl Level {
    pub const K64: Level = Level(64 * 1024);
    pub const K128: Level = Level(128 * 1024);
    pub const K512: Level = Level(512 * 1024);
    pub const M1: Level = Level(1024 * 1024);

    pub fn budget(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0;
        if n >= 1 << 20 && n.is_multiple_of(1 << 20) {
            write!(f, "{}M", n >> 20)
        } else if n.is_multiple_of(1024) && n > 0 {
            write!(f, "{}K", n >> 10)
        } else {
            write!(f, "{n}")
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (digits, mult) = match t.chars().last() {
            Some('K') | Some('k') => (&t[..t.len() - 1], 1024u64),
            Some('M') | Some('m') => (&t[..t.len() - 1], 1024 * 1024),
            _ => (t, 1),
        };
        let n: u64 = digits.trim().parse().map_err(|_| format!("invalid level `{s}`"))?;
        match n.checked_mul(mult) {
            Some(0) | None => Err(format!("invalid level `{s}`")),
            Some(v) => Ok(Level(v)),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Dfs,
    Bfs,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Dfs => "dfs",
            Strategy::Bfs => "bfs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraversalMode {
    Dfs,
    Bfs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collection {
    pub collection_id: String,
    pub level: Level,
    pub strategy: Strategy,
    pub article_ids: Vec<String>,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleOffset {
    pub article_id: String,
    pub start_token: u64,
    pub end_token: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub collection_id: String,
    pub text: String,
    pub article_offsets: Vec<ArticleOffset>,
}

fn tokens_of(corpus: &Corpus, id: &str) -> Result<u64, AssemblyError> {
    corpus.get(id).map(|a| a.token_count).ok_or_else(|| AssemblyError::DanglingReference(id.to_string()))
}

fn check_feasible(cluster: &ArticleCluster, corpus: &Corpus, level: Level) -> Result<(), AssemblyError> {
    if cluster.member_ids.len() < MIN_ARTICLES {
        return Err(AssemblyError::Infeasible(format!(
            "cluster has {} articles, at least {MIN_ARTICLES} are required",
            cluster.member_ids.len()
        )));
    }
    let mut mass = 0u64;
    for id in &cluster.member_ids {
        mass += tokens_of(corpus, id)?;
    }
    if mass < level.budget() {
        return Err(AssemblyError::Infeasible(format!(
            "cluster holds {mass} tokens, below the {level} budget of {}",
            level.budget()
        )));
    }
    Ok(())
}

/// Takes articles from `order` until the running total first reaches the
/// budget and at least [`MIN_ARTICLES`] are taken. Returns the prefix and
/// its token total, or `None` if the order runs out first.
pub fn take_until_budget<'a>(
    order: impl IntoIterator<Item = &'a str>,
    tokens: impl Fn(&str) -> u64,
    budget: u64,
) -> Option<(Vec<String>, u64)> {
    let (mut taken, mut total) = (Vec::new(), 0u64);
    for id in order {
        if total >= budget && taken.len() >= MIN_ARTICLES {
            break;
        }
        total += tokens(id);
        taken.push(id.to_string());
    }
    (total >= budget && taken.len() >= MIN_ARTICLES).then_some((taken, total))
}

fn finish(level: Level, strategy: Strategy, order: &[String], corpus: &Corpus) -> Result<Collection, AssemblyError> {
    for id in order {
        tokens_of(corpus, id)?;
    }
    let toks = |id: &str| corpus.get(id).map(|a| a.token_count).unwrap_or(0);
    let (article_ids, total_tokens) = take_until_budget(order.iter().map(String::as_str), toks, level.budget())
        .ok_or_else(|| AssemblyError::Infeasible("ran out of articles before meeting the budget".into()))?;
    Ok(Collection { collection_id: String::new(), level, strategy, article_ids, total_tokens })
}

/// Random-sampling assembly: a uniformly drawn start, then uniformly drawn
/// unused cluster members, until the first budget crossing (minimum four).
pub fn assemble_random(
    cluster: &ArticleCluster,
    corpus: &Corpus,
    level: Level,
    rng: &mut Rng,
) -> Result<Collection, AssemblyError> {
    check_feasible(cluster, corpus, level)?;
    let mut pool: Vec<String> = cluster.member_ids.iter().cloned().collect();
    pool.shuffle(rng);
    finish(level, Strategy::Random, &pool, corpus)
}

/// Undirected citation adjacency restricted to cluster members.
pub struct CitationGraph {
    nodes: Vec<String>,
    adj: BTreeMap<String, BTreeSet<String>>,
}

impl CitationGraph {
    pub fn new(cluster: &ArticleCluster, corpus: &Corpus) -> Self {
        let members = &cluster.member_ids;
        let mut adj: BTreeMap<String, BTreeSet<String>> =
            members.iter().map(|m| (m.clone(), BTreeSet::new())).collect();
        for m in members {
            if let Some(a) = corpus.get(m) {
                for r in a.reference_ids.iter().filter(|r| members.contains(*r) && *r != m) {
                    adj.get_mut(m).expect("member").insert(r.clone());
                    adj.get_mut(r).expect("member").insert(m.clone());
                }
            }
        }
        CitationGraph { nodes: members.iter().cloned().collect(), adj }
    }

    /// Visit order over all nodes. Neighbour order is shuffled by `rng`;
    /// when a component is exhausted the walk restarts at a random
    /// unvisited node. `start` fixes the first node.
    pub fn traversal_order(&self, start: Option<&str>, mode: TraversalMode, rng: &mut Rng) -> Vec<String> {
        let mut visited: HashSet<&str> = HashSet::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut first = start.filter(|s| self.adj.contains_key(*s)).map(str::to_string);
        while order.len() < self.nodes.len() {
            let root = match first.take() {
                Some(s) => s,
                None => {
                    let rest: Vec<&String> = self.nodes.iter().filter(|n| !visited.contains(n.as_str())).collect();
                    rest[rng.gen_range(0..rest.len())].clone()
                }
            };
            match mode {
                TraversalMode::Bfs => self.bfs(&root, &mut visited, &mut order, rng),
                TraversalMode::Dfs => self.dfs(&root, &mut visited, &mut order, rng),
            }
        }
        order
    }

    fn shuffled(&self, node: &str, rng: &mut Rng) -> Vec<&str> {
        let mut ns: Vec<&str> = self.adj[node].iter().map(String::as_str).collect();
        ns.shuffle(rng);
        ns
    }

    fn bfs<'a>(&'a self, root: &str, visited: &mut HashSet<&'a str>, order: &mut Vec<String>, rng: &mut Rng) {
        let root = self.adj.get_key_value(root).expect("member").0.as_str();
        let mut queue = VecDeque::from([root]);
        visited.insert(root);
        while let Some(n) = queue.pop_front() {
            order.push(n.to_string());
            for m in self.shuffled(n, rng) {
                if visited.insert(m) {
                    queue.push_back(m);
                }
            }
        }
    }

    fn dfs<'a>(&'a self, root: &str, visited: &mut HashSet<&'a str>, order: &mut Vec<String>, rng: &mut Rng) {
        let root = self.adj.get_key_value(root).expect("member").0.as_str();
        visited.insert(root);
        order.push(root.to_string());
        let mut stack: Vec<(&str, Vec<&str>)> = vec![(root, self.shuffled(root, rng))];
        while let Some((_, pending)) = stack.last_mut() {
            match pending.pop() {
                Some(m) if visited.insert(m) => {
                    order.push(m.to_string());
                    let next = self.shuffled(m, rng);
                    stack.push((m, next));
                }
                Some(_) => {}
                None => {
                    stack.pop();
                }
            }
        }
    }
}

/// Citation-graph assembly from a random start, in DFS or BFS order,
/// restarting on a new component when one is exhausted.
pub fn assemble_traversal(
    cluster: &ArticleCluster,
    corpus: &Corpus,
    level: Level,
    mode: TraversalMode,
    rng: &mut Rng,
) -> Result<Collection, AssemblyError> {
    check_feasible(cluster, corpus, level)?;
    let order = CitationGraph::new(cluster, corpus).traversal_order(None, mode, rng);
    let strategy = match mode {
        TraversalMode::Dfs => Strategy::Dfs,
        TraversalMode::Bfs => Strategy::Bfs,
    };
    finish(level, strategy, &order, corpus)
}

/// |a ∩ b| / min(|a|, |b|).
pub fn check_overlap(a: &Collection, b: &Collection) -> f64 {
    let denom = a.article_ids.len().min(b.article_ids.len());
    if denom == 0 {
        return 0.0;
    }
    let sa: HashSet<&str> = a.article_ids.iter().map(String::as_str).collect();
    let shared = b.article_ids.iter().filter(|x| sa.contains(x.as_str())).count();
    shared as f64 / denom as f64
}

/// Whether `candidate` may join `accepted` (overlap at most one half
/// against every member). Compared with integer arithmetic.
pub fn overlap_ok(candidate: &Collection, accepted: &[Collection]) -> bool {
    accepted.iter().all(|c| {
        let denom = candidate.article_ids.len().min(c.article_ids.len());
        let sa: HashSet<&str> = c.article_ids.iter().map(String::as_str).collect();
        let shared = candidate.article_ids.iter().filter(|x| sa.contains(x.as_str())).count();
        2 * shared <= denom
    })
}

pub fn concat_context(
    c: &Collection,
    corpus: &Corpus,
    tokenizer: &Tokenizer,
) -> Result<ContextDocument, AssemblyError> {
    let sep_tokens = tokenizer.count(SEPARATOR);
    let mut text = String::new();
    let mut offsets = Vec::with_capacity(c.article_ids.len());
    let mut pos = 0u64;
    for (i, id) in c.article_ids.iter().enumerate() {
        let a = corpus.get(id).ok_or_else(|| AssemblyError::DanglingReference(id.clone()))?;
        if i > 0 {
            text.push_str(SEPARATOR);
            pos += sep_tokens;
        }
        text.push_str(&a.full_text);
        offsets.push(ArticleOffset { article_id: id.clone(), start_token: pos, end_token: pos + a.token_count });
        pos += a.token_count;
    }
    Ok(ContextDocument { collection_id: c.collection_id.clone(), text, article_offsets: offsets })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub per_level: usize,
    /// Random-to-traversal ratio of collection targets.
    pub random_to_traversal: f64,
    pub retries: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { per_level: 10, random_to_traversal: 3.5, retries: 50 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlanReport {
    pub requested: usize,
    pub accepted: usize,
    pub rejected_overlap: usize,
    pub infeasible: Vec<String>,
}

/// Strategy targets for `n` collections under a random:traversal ratio;
/// traversal targets alternate DFS and BFS.
pub fn strategy_targets(n: usize, ratio: f64) -> Vec<Strategy> {
    let traversal = if ratio.is_finite() && ratio >= 0.0 { (n as f64 / (ratio + 1.0)).round() as usize } else { 0 };
    let random = n - traversal.min(n);
    let mut out = vec![Strategy::Random; random];
    out.extend((0..n - random).map(|i| if i % 2 == 0 { Strategy::Dfs } else { Strategy::Bfs }));
    out
}

/// Builds collections for each level. Candidates are accepted greedily in
/// order; one overlapping more than half with an accepted collection of the
/// same level is discarded and retried, up to `retries` times per target.
pub fn plan_collections(
    clusters: &[ArticleCluster],
    corpus: &Corpus,
    levels: &[Level],
    cfg: &PlanConfig,
    seed: u64,
) -> (Vec<Collection>, PlanReport) {
    let mut report = PlanReport::default();
    let mut all = Vec::new();
    for &level in levels {
        let feasible: Vec<&ArticleCluster> =
            clusters.iter().filter(|c| check_feasible(c, corpus, level).is_ok()).collect();
        let targets = strategy_targets(cfg.per_level, cfg.random_to_traversal);
        report.requested += targets.len();
        if feasible.is_empty() {
            report.infeasible.push(format!("{level}: no cluster meets the budget with {MIN_ARTICLES} articles"));
            continue;
        }
        let mut accepted: Vec<Collection> = Vec::new();
        for (t, strategy) in targets.iter().enumerate() {
            let mut rng = crate::seed::rng_for(seed, &["assemble", &level.to_string(), &t.to_string()]);
            for _ in 0..=cfg.retries {
                let cluster = feasible[rng.gen_range(0..feasible.len())];
                let built = match strategy {
                    Strategy::Random => assemble_random(cluster, corpus, level, &mut rng),
                    Strategy::Dfs => assemble_traversal(cluster, corpus, level, TraversalMode::Dfs, &mut rng),
                    Strategy::Bfs => assemble_traversal(cluster, corpus, level, TraversalMode::Bfs, &mut rng),
                };
                let Ok(mut c) = built else { continue };
                if overlap_ok(&c, &accepted) {
                    c.collection_id = format!("{level}-{strategy}-{:04}", accepted.len());
                    accepted.push(c);
                    break;
                }
                report.rejected_overlap += 1;
            }
        }
        report.accepted += accepted.len();
        all.extend(accepted);
    }
    (all, report)
}
