//! Few-shot demonstration selection.
//!
//! Randomness comes from ChaCha8 seeded per query: the first eight bytes
//! (little endian) of `SHA-256(seed as 8 little-endian bytes || query id)`
//! seed `ChaCha8Rng::seed_from_u64`. Selection for one query therefore does
//! not depend on which other queries were processed before it.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{EmbeddingMap, EmbeddingVector, Example};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("need {needed} demonstrations but only {available} candidates")]
    TooFewCandidates { needed: usize, available: usize },
    #[error("no embedding for example {0:?}")]
    MissingEmbedding(String),
    #[error("fixed demonstration {0:?} not found among candidates")]
    UnknownFixedId(String),
    #[error("fixed demonstration {0:?} is the query itself")]
    QueryInFixedSet(String),
    #[error("duplicate candidate id {0:?}")]
    DuplicateCandidate(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// `k` random demonstrations; the draw is repeated `attempts` times and the
    /// one covering the most distinct gold labels is kept.
    RandomCoverage {
        k: usize,
        #[serde(default = "default_attempts")]
        attempts: usize,
    },
    /// A curated list, used as is for every query.
    Fixed { ids: Vec<String> },
    /// `k` drawn at random from the `pool` candidates most similar to the query.
    Retrieve { k: usize, pool: usize },
}

fn default_attempts() -> usize {
    8
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), SelectError> {
        let bad = |m: &str| Err(SelectError::InvalidPolicy(m.to_string()));
        match self {
            SelectionPolicy::RandomCoverage { k, attempts } => {
                if *k == 0 {
                    return bad("random-coverage k must be at least 1");
                }
                if *attempts == 0 {
                    return bad("random-coverage attempts must be at least 1");
                }
            }
            SelectionPolicy::Fixed { ids } => {
                if ids.is_empty() {
                    return bad("fixed ids must not be empty");
                }
                let mut seen = HashSet::new();
                if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                    return Err(SelectError::InvalidPolicy(format!(
                        "fixed id {dup:?} listed twice"
                    )));
                }
            }
            SelectionPolicy::Retrieve { k, pool } => {
                if *k == 0 {
                    return bad("retrieve k must be at least 1");
                }
                if k > pool {
                    return bad("retrieve k must not exceed pool");
                }
            }
        }
        Ok(())
    }

    /// Number of demonstrations a prompt will contain.
    pub fn shots(&self) -> usize {
        match self {
            SelectionPolicy::RandomCoverage { k, .. } | SelectionPolicy::Retrieve { k, .. } => *k,
            SelectionPolicy::Fixed { ids } => ids.len(),
        }
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SelectError> {
    cosine(&a.values, &b.values)
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    if a.len() != b.len() {
        return Err(SelectError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SelectError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn query_rng(seed: Seed, query_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.0.to_le_bytes());
    hasher.update(query_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
}

/// Picks demonstrations for `query_id` from `candidates`. Any candidate with
/// the query's id is ignored.
pub fn select<'a>(
    policy: &SelectionPolicy,
    query_id: &str,
    candidates: &'a [Example],
    embeddings: Option<&EmbeddingMap>,
    seed: Seed,
) -> Result<Vec<&'a Example>, SelectError> {
    policy.validate()?;
    let mut seen = HashSet::new();
    for c in candidates {
        if !seen.insert(c.id.as_str()) {
            return Err(SelectError::DuplicateCandidate(c.id.clone()));
        }
    }
    let pool: Vec<&Example> = candidates.iter().filter(|c| c.id != query_id).collect();
    match policy {
        SelectionPolicy::Fixed { ids } => ids
            .iter()
            .map(|id| {
                if id == query_id {
                    return Err(SelectError::QueryInFixedSet(id.clone()));
                }
                pool.iter()
                    .find(|c| &c.id == id)
                    .copied()
                    .ok_or_else(|| SelectError::UnknownFixedId(id.clone()))
            })
            .collect(),
        SelectionPolicy::RandomCoverage { k, attempts } => {
            ensure_enough(*k, pool.len())?;
            let mut rng = query_rng(seed, query_id);
            let mut best: Option<(usize, Vec<usize>)> = None;
            for _ in 0..*attempts {
                let draw = index::sample(&mut rng, pool.len(), *k).into_vec();
                let coverage = draw
                    .iter()
                    .flat_map(|&i| pool[i].label_strings())
                    .collect::<BTreeSet<_>>()
                    .len();
                if best.as_ref().is_none_or(|(c, _)| coverage > *c) {
                    best = Some((coverage, draw));
                }
            }
            let (_, draw) = best.expect("attempts >= 1");
            Ok(draw.into_iter().map(|i| pool[i]).collect())
        }
        SelectionPolicy::Retrieve { k, pool: pool_size } => {
            ensure_enough(*k, pool.len())?;
            let ranked = rank_by_similarity(query_id, &pool, embeddings)?;
            let top = &ranked[..(*pool_size).min(ranked.len())];
            let mut rng = query_rng(seed, query_id);
            let mut picked = index::sample(&mut rng, top.len(), *k).into_vec();
            // present in similarity order
            picked.sort_unstable();
            Ok(picked.into_iter().map(|i| top[i]).collect())
        }
    }
}

fn ensure_enough(needed: usize, available: usize) -> Result<(), SelectError> {
    if available < needed {
        Err(SelectError::TooFewCandidates { needed, available })
    } else {
        Ok(())
    }
}

/// Candidates sorted by descending cosine similarity to the query, ties by
/// ascending id.
pub fn rank_by_similarity<'a>(
    query_id: &str,
    candidates: &[&'a Example],
    embeddings: Option<&EmbeddingMap>,
) -> Result<Vec<&'a Example>, SelectError> {
    let lookup = |id: &str| {
        embeddings
            .and_then(|m| m.get(id))
            .ok_or_else(|| SelectError::MissingEmbedding(id.to_string()))
    };
    let query = lookup(query_id)?;
    let mut scored = candidates
        .iter()
        .map(|c| Ok((cosine_similarity(query, lookup(&c.id)?)?, *c)))
        .collect::<Result<Vec<_>, SelectError>>()?;
    scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.id.cmp(&b.id)));
    Ok(scored.into_iter().map(|(_, c)| c).collect())
}
