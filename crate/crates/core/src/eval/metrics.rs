//! Ranking, Top-k, page aggregation, writer models and retrieval.

use indexmap::IndexMap;

use crate::error::{FragError, Result};

/// Zero-based rank of `target` when items are sorted by ascending key,
/// ties going to the lower index.
pub fn rank_ascending(keys: &[f64], target: usize) -> usize {
    let t = keys[target];
    keys.iter()
        .enumerate()
        .filter(|&(i, &k)| k < t || (k == t && i < target))
        .count()
}

/// Zero-based rank of `label` among class scores, highest first.
pub fn rank_by_score(scores: &[f64], label: usize) -> usize {
    let t = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < label))
        .count()
}

pub fn top_k_hit(scores: &[f64], label: usize, k: usize) -> bool {
    rank_by_score(scores, label) < k
}

/// Highest-scoring index, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Mean of the word probability vectors of one page.
pub fn page_identify(word_probs: &[&[f64]]) -> Result<Vec<f64>> {
    let first = word_probs
        .first()
        .ok_or_else(|| FragError::Invalid("page has no words".into()))?;
    let m = first.len();
    let mut out = vec![0.0; m];
    for p in word_probs {
        if p.len() != m {
            return Err(FragError::Invalid("word probability vectors differ in length".into()));
        }
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    let n = word_probs.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Item indices per page id, pages in order of first appearance.
pub fn group_pages(page_ids: &[String]) -> IndexMap<String, Vec<usize>> {
    let mut pages: IndexMap<String, Vec<usize>> = IndexMap::new();
    for (i, p) in page_ids.iter().enumerate() {
        pages.entry(p.clone()).or_default().push(i);
    }
    pages
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    #[default]
    Euclidean,
    /// One minus the cosine similarity.
    Cosine,
}

impl Distance {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            _ => Err(FragError::Config(format!("unknown distance {s:?} (euclidean|cosine)"))),
        }
    }

    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterModel {
    pub writer: usize,
    pub centroid: Vec<f64>,
}

/// Mean training feature per writer, sorted by writer id.
pub fn build_writer_models(features: &[Vec<f64>], labels: &[usize]) -> Result<Vec<WriterModel>> {
    let mut sums: IndexMap<usize, (Vec<f64>, usize)> = IndexMap::new();
    for (f, &w) in features.iter().zip(labels) {
        let entry = sums.entry(w).or_insert_with(|| (vec![0.0; f.len()], 0));
        if entry.0.len() != f.len() {
            return Err(FragError::Invalid("training features differ in length".into()));
        }
        entry.0.iter_mut().zip(f).for_each(|(s, v)| *s += v);
        entry.1 += 1;
    }
    sums.sort_keys();
    Ok(sums
        .into_iter()
        .map(|(writer, (sum, n))| WriterModel {
            writer,
            centroid: sum.into_iter().map(|v| v / n as f64).collect(),
        })
        .collect())
}

/// Zero-based rank of the true writer by ascending distance to each model;
/// `models.len()` when the writer has no model.
pub fn nn_rank(feature: &[f64], label: usize, models: &[WriterModel], distance: Distance) -> Result<usize> {
    let mut keys = Vec::with_capacity(models.len());
    for m in models {
        if m.centroid.len() != feature.len() {
            return Err(FragError::Invalid(format!(
                "feature has {} dimensions, writer model {} has {}",
                feature.len(),
                m.writer,
                m.centroid.len()
            )));
        }
        keys.push(distance.between(feature, &m.centroid));
    }
    Ok(match models.iter().position(|m| m.writer == label) {
        Some(i) => rank_ascending(&keys, i),
        None => models.len(),
    })
}

/// Average precision of one ranked list of relevance flags; `None` when
/// nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Percent of valid queries whose nearest item shares the writer.
    pub top1: f64,
    /// Percent of valid queries with a same-writer item among the nearest 5.
    pub top5: f64,
    /// In [0, 1].
    pub map: f64,
    pub queries: usize,
    /// Queries with no other item from the same writer.
    pub skipped: usize,
    /// Per item: AP, or `None` for skipped queries.
    pub average_precisions: Vec<Option<f64>>,
}

/// Leave-one-out retrieval: every item queries all the others.
pub fn retrieval_eval(features: &[Vec<f64>], labels: &[usize], distance: Distance) -> Result<RetrievalResult> {
    if features.len() != labels.len() {
        return Err(FragError::Invalid("features and labels differ in count".into()));
    }
    let n = features.len();
    let mut aps = Vec::with_capacity(n);
    let (mut hits, mut hits5, mut sum) = (0usize, 0usize, 0.0);
    for q in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&i| i != q)
            .map(|i| (distance.between(&features[q], &features[i]), i))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let relevant: Vec<bool> = others.iter().map(|&(_, i)| labels[i] == labels[q]).collect();
        let ap = average_precision(&relevant);
        if let Some(ap) = ap {
            sum += ap;
            hits += usize::from(relevant[0]);
            hits5 += usize::from(relevant.iter().take(5).any(|&r| r));
        }
        aps.push(ap);
    }
    let queries = aps.iter().filter(|a| a.is_some()).count();
    let pct = |h: usize| if queries == 0 { 0.0 } else { 100.0 * h as f64 / queries as f64 };
    let map = if queries == 0 { 0.0 } else { sum / queries as f64 };
    Ok(RetrievalResult {
        top1: pct(hits),
        top5: pct(hits5),
        map,
        queries,
        skipped: n - queries,
        average_precisions: aps,
    })
}
