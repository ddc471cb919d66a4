use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;

/// Positive rational characters-per-token ratio, written as `"4"` or `"7/2"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharsPerToken(Ratio<u64>);

impl CharsPerToken {
    pub fn new(numer: u64, denom: u64) -> Result<Self, ConfigError> {
        if numer == 0 || denom == 0 {
            return Err(ConfigError::invalid("tokenizer.chars_per_token", "must be a positive rational"));
        }
        Ok(CharsPerToken(Ratio::new(numer, denom)))
    }

    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }
}

impl Default for CharsPerToken {
    fn default() -> Self {
        CharsPerToken(Ratio::from_integer(4))
    }
}

impl fmt::Display for CharsPerToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for CharsPerToken {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::invalid("tokenizer.chars_per_token", format!("cannot parse `{s}`"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return CharsPerToken::new(n, d);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let digits = frac.len() as u32;
            if digits > 9 {
                return Err(bad());
            }
            let scale = 10u64.pow(digits);
            let i: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            return CharsPerToken::new(i * scale + f, scale);
        }
        CharsPerToken::new(s.parse().map_err(|_| bad())?, 1)
    }
}

impl Serialize for CharsPerToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CharsPerToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => CharsPerToken::new(n, 1).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    CharsPerTokenHeuristic {
        #[serde(default)]
        chars_per_token: CharsPerToken,
    },
    VocabFile {
        vocab_path: PathBuf,
    },
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        TokenizerSpec::CharsPerTokenHeuristic { chars_per_token: CharsPerToken::default() }
    }
}

/// A ready-to-use token counter built from a [`TokenizerSpec`].
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Heuristic(Ratio<u64>),
    Vocab(Vocab),
}

#[derive(Debug, Clone)]
pub struct Vocab {
    pieces: HashSet<String>,
    max_chars: usize,
}

impl Tokenizer {
    pub fn from_spec(spec: &TokenizerSpec) -> Result<Self, ConfigError> {
        match spec {
            TokenizerSpec::CharsPerTokenHeuristic { chars_per_token } => {
                Ok(Tokenizer::Heuristic(chars_per_token.ratio()))
            }
            TokenizerSpec::VocabFile { vocab_path } => Ok(Tokenizer::Vocab(Vocab::load(vocab_path)?)),
        }
    }

    pub fn count(&self, text: &str) -> u64 {
        match self {
            Tokenizer::Heuristic(cpt) => {
                let chars = text.chars().count() as u64;
                // ceil(chars / (n/d)) = ceil(chars * d / n)
                let (n, d) = (*cpt.numer() as u128, *cpt.denom() as u128);
                ((chars as u128 * d).div_ceil(n)) as u64
            }
            Tokenizer::Vocab(v) => v.count(text),
        }
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::Heuristic(Ratio::from_integer(4))
    }
}

impl Vocab {
    /// Reads either a JSON object whose keys are pieces (optionally nested
    /// under `model.vocab`) or a plain file with one piece per line.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::invalid("tokenizer.vocab_path", format!("{}: {e}", path.display())))?;
        let pieces: Vec<String> = match serde_json::from_str::<serde_json::Value>(&raw) {
            Ok(serde_json::Value::Object(map)) => {
                let vocab =
                    map.get("model").and_then(|m| m.get("vocab")).and_then(|v| v.as_object()).cloned().unwrap_or(map);
                vocab.keys().cloned().collect()
            }
            _ => raw.lines().map(|l| l.to_string()).filter(|l| !l.is_empty()).collect(),
        };
        Ok(Vocab::from_pieces(pieces))
    }

    pub fn from_pieces(pieces: impl IntoIterator<Item = String>) -> Self {
        let pieces: HashSet<String> = pieces.into_iter().filter(|p| !p.is_empty()).collect();
        let max_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Vocab { pieces, max_chars }
    }

    /// Greedy longest-match segmentation; characters not covered by any
    /// piece count as one token each.
    pub fn count(&self, text: &str) -> u64 {
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();
        let n = bounds.len() - 1;
        let (mut i, mut count) = (0usize, 0u64);
        while i < n {
            let mut step = 1;
            let longest = self.max_chars.min(n - i);
            for len in (1..=longest).rev() {
                if self.pieces.contains(&text[bounds[i]..bounds[i + len]]) {
                    step = len;
                    break;
                }
            }
            i += step;
            count += 1;
        }
        count
    }
}

/// Token count of `text` under `spec`.
pub fn tokenize_count(text: &str, spec: &TokenizerSpec) -> Result<u64, ConfigError> {
    Ok(Tokenizer::from_spec(spec)?.count(text))
}
