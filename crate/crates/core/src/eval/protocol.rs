//! Word, page, nearest-neighbor and retrieval protocols over a [`WordSet`].

use fragnet_tensor::ops::Mode;
use fragnet_tensor::Scalar;

use crate::arch::Network;
use crate::data::WordSet;
use crate::error::{FragError, Result};
use crate::eval::metrics::{
    build_writer_models, group_pages, nn_rank, page_identify, rank_by_score, retrieval_eval, Distance,
};
use crate::eval::EvalReport;

/// Fragment-averaged writer probabilities of every word (inference mode).
/// These double as the word features for nearest-neighbor and retrieval.
pub fn predict_word_probs<T: Scalar>(network: &Network<T>, set: &WordSet, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(set.len());
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (images, _) = set.batch::<T>(chunk);
        let probs = network.word_forward(&images, Mode::Eval)?.word_probs;
        let m = probs.shape()[1];
        let data = probs.data();
        out.extend(data.chunks(m).map(|row| row.iter().map(|v| v.as_f64()).collect::<Vec<f64>>()));
    }
    Ok(out)
}

fn lengths(set: &WordSet) -> Vec<Option<usize>> {
    set.texts.iter().map(|t| t.as_ref().map(|t| t.chars().count())).collect()
}

pub fn evaluate_words(probs: &[Vec<f64>], set: &WordSet) -> Result<EvalReport> {
    check_count(probs.len(), set)?;
    let ranks: Vec<usize> = probs.iter().zip(&set.labels).map(|(p, &l)| rank_by_score(p, l)).collect();
    Ok(EvalReport::from_ranks("word", &ranks, &set.labels, &lengths(set)))
}

/// Page probabilities (mean over the page's words) and their labels.
pub fn page_probs(probs: &[Vec<f64>], set: &WordSet) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    check_count(probs.len(), set)?;
    let mut page_p = Vec::new();
    let mut labels = Vec::new();
    for (page, items) in group_pages(&set.page_ids) {
        let label = set.labels[items[0]];
        if items.iter().any(|&i| set.labels[i] != label) {
            return Err(FragError::Invalid(format!("page {page} mixes several writers")));
        }
        let rows: Vec<&[f64]> = items.iter().map(|&i| probs[i].as_slice()).collect();
        page_p.push(page_identify(&rows)?);
        labels.push(label);
    }
    Ok((page_p, labels))
}

pub fn evaluate_pages(probs: &[Vec<f64>], set: &WordSet) -> Result<EvalReport> {
    let (pages, labels) = page_probs(probs, set)?;
    let ranks: Vec<usize> = pages.iter().zip(&labels).map(|(p, &l)| rank_by_score(p, l)).collect();
    Ok(EvalReport::from_ranks("page", &ranks, &labels, &vec![None; labels.len()]))
}

/// Nearest writer model, models built from the training features.
pub fn evaluate_nn(
    train_features: &[Vec<f64>],
    train_labels: &[usize],
    test_features: &[Vec<f64>],
    test: &WordSet,
    distance: Distance,
) -> Result<EvalReport> {
    check_count(test_features.len(), test)?;
    let models = build_writer_models(train_features, train_labels)?;
    if models.is_empty() {
        return Err(FragError::Invalid("no training features to build writer models".into()));
    }
    let ranks = test_features
        .iter()
        .zip(&test.labels)
        .map(|(f, &l)| nn_rank(f, l, &models, distance))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_ranks("nn", &ranks, &test.labels, &lengths(test)))
}

/// Leave-one-out retrieval over the test words.
pub fn evaluate_retrieval(features: &[Vec<f64>], set: &WordSet, distance: Distance) -> Result<EvalReport> {
    check_count(features.len(), set)?;
    let r = retrieval_eval(features, &set.labels, distance)?;
    // per-group Top-1 over valid queries only
    let valid: Vec<usize> = (0..set.len()).filter(|&i| r.average_precisions[i].is_some()).collect();
    let ranks: Vec<usize> = valid
        .iter()
        .map(|&q| {
            let nearest = (0..set.len())
                .filter(|&i| i != q)
                .min_by(|&a, &b| {
                    distance
                        .between(&features[q], &features[a])
                        .total_cmp(&distance.between(&features[q], &features[b]))
                        .then(a.cmp(&b))
                })
                .expect("valid query has neighbours");
            usize::from(set.labels[nearest] != set.labels[q])
        })
        .collect();
    let labels: Vec<usize> = valid.iter().map(|&i| set.labels[i]).collect();
    let all_lengths = lengths(set);
    let lens: Vec<Option<usize>> = valid.iter().map(|&i| all_lengths[i]).collect();
    let mut report = EvalReport::from_ranks("retrieval", &ranks, &labels, &lens);
    report.top1 = r.top1;
    report.top5 = r.top5;
    report.map = Some(r.map);
    report.skipped = r.skipped;
    Ok(report)
}

fn check_count(n: usize, set: &WordSet) -> Result<()> {
    if n != set.len() {
        return Err(FragError::Invalid(format!("{n} predictions for {} words", set.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[usize], pages: &[&str]) -> WordSet {
        let mut s = WordSet::empty(1, 1);
        s.labels = labels.to_vec();
        s.page_ids = pages.iter().map(|p| p.to_string()).collect();
        s.texts = vec![None; labels.len()];
        s.pixels = vec![1.0; labels.len()];
        s
    }

    #[test]
    fn single_word_pages_match_word_mode() {
        let s = set(&[0, 1, 1], &["a", "b", "c"]);
        let probs = vec![vec![0.6, 0.4], vec![0.7, 0.3], vec![0.2, 0.8]];
        let w = evaluate_words(&probs, &s).unwrap();
        let p = evaluate_pages(&probs, &s).unwrap();
        assert_eq!((w.top1, w.top5), (p.top1, p.top5));
    }

    #[test]
    fn pages_average_words() {
        let s = set(&[1, 1, 0], &["a", "a", "b"]);
        let probs = vec![vec![0.6, 0.4], vec![0.3, 0.7], vec![0.2, 0.8]];
        let (pages, labels) = page_probs(&probs, &s).unwrap();
        assert_eq!(labels, vec![1, 0]);
        assert!((pages[0][1] - 0.55).abs() < 1e-15);
        assert_eq!(evaluate_pages(&probs, &s).unwrap().top1, 50.0);
        assert!(page_probs(&probs, &set(&[0, 1, 0], &["a", "a", "b"])).is_err());
    }

    #[test]
    fn centroid_features_are_identified() {
        let train = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let s = set(&[0, 1, 2], &["a", "b", "c"]);
        let r = evaluate_nn(&train, &[0, 1, 2], &train, &s, Distance::Euclidean).unwrap();
        assert_eq!(r.top1, 100.0);
    }

    #[test]
    fn separated_clusters_retrieve_perfectly() {
        let feats = vec![vec![0.0, 0.0], vec![0.01, 0.0], vec![9.0, 9.0], vec![9.0, 9.01], vec![50.0, 0.0]];
        let s = set(&[0, 0, 1, 1, 2], &["a", "a", "b", "b", "c"]);
        let r = evaluate_retrieval(&feats, &s, Distance::Euclidean).unwrap();
        assert_eq!((r.top1, r.map, r.skipped, r.items), (100.0, Some(1.0), 1, 4));
    }
}
