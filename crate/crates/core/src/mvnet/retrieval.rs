//! Ranked retrieval by cosine distance with optional class-based reranking.
//!
//! For a query with true class `y` and predicted class `ŷ`, the gallery is
//! sorted by ascending cosine distance (ties keep gallery order). Reranking
//! moves every item predicted as `ŷ` to the front, preserving order inside
//! both blocks. With `R` relevant items (gallery label `y`) and `rel(k)`
//! marking relevance at rank `k`:
//!
//! ```text
//! AP   = (1/R) Σ_{k : rel(k)} P@k          (0 when R = 0)
//! N    = #gallery items predicted as ŷ
//! P@N  = hits(N) / N,  R@N = hits(N) / R,  F1@N = 2·P·R / (P + R)
//! ```
//!
//! `map_micro` averages AP over queries; `map_macro` averages the per-class
//! mean AP over the classes that have queries. P/R/F1 are averaged over
//! queries.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    descriptors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    predicted: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Query {
    pub descriptor: Vec<f64>,
    pub label: usize,
    pub predicted: usize,
    /// Gallery item to leave out (the query itself when querying the gallery).
    pub exclude: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map_micro: f64,
    pub map_macro: f64,
    pub p_at_n: f64,
    pub r_at_n: f64,
    pub f1_at_n: f64,
}

pub fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Numeric("cannot normalize a zero or non-finite descriptor".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl RetrievalIndex {
    pub fn new(descriptors: &[Vec<f64>], labels: Vec<usize>, predicted: Vec<usize>) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(param_err!("retrieval gallery is empty"));
        }
        if descriptors.len() != labels.len() || labels.len() != predicted.len() {
            return Err(param_err!("gallery descriptors, labels and predictions differ in length"));
        }
        let d = descriptors[0].len();
        if descriptors.iter().any(|x| x.len() != d) {
            return Err(param_err!("gallery descriptors differ in length"));
        }
        let descriptors = descriptors.iter().map(|x| unit(x)).collect::<Result<_>>()?;
        Ok(RetrievalIndex { descriptors, labels, predicted })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.descriptors[i]
    }

    /// Gallery indices in retrieval order.
    pub fn rank(&self, q: &Query, rerank: bool) -> Result<Vec<usize>> {
        let z = unit(&q.descriptor)?;
        let dist: Vec<f64> =
            self.descriptors.iter().map(|g| 1.0 - g.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()).collect();
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| Some(i) != q.exclude).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        if rerank {
            let (mut front, back): (Vec<usize>, Vec<usize>) =
                order.into_iter().partition(|&i| self.predicted[i] == q.predicted);
            front.extend(back);
            order = front;
        }
        Ok(order)
    }

    /// `(AP, P@N, R@N, F1@N)` of one query.
    pub fn query_scores(&self, q: &Query, rerank: bool) -> Result<[f64; 4]> {
        let order = self.rank(q, rerank)?;
        let rel: Vec<bool> = order.iter().map(|&i| self.labels[i] == q.label).collect();
        let total = rel.iter().filter(|r| **r).count();
        let mut hits = 0;
        let mut ap = 0.0;
        for (k, &r) in rel.iter().enumerate() {
            if r {
                hits += 1;
                ap += hits as f64 / (k + 1) as f64;
            }
        }
        let ap = if total > 0 { ap / total as f64 } else { 0.0 };
        let n = order.iter().filter(|&&i| self.predicted[i] == q.predicted).count();
        let hits_n = rel[..n].iter().filter(|r| **r).count() as f64;
        let p = if n > 0 { hits_n / n as f64 } else { 0.0 };
        let r = if total > 0 { hits_n / total as f64 } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Ok([ap, p, r, f1])
    }
}

pub fn evaluate_retrieval(index: &RetrievalIndex, queries: &[Query], rerank: bool) -> Result<RetrievalMetrics> {
    if queries.is_empty() {
        return Err(param_err!("no retrieval queries"));
    }
    let mut sums = [0.0; 4];
    let mut per_class: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for q in queries {
        let s = index.query_scores(q, rerank)?;
        for (acc, v) in sums.iter_mut().zip(s) {
            *acc += v;
        }
        let e = per_class.entry(q.label).or_default();
        e.0 += s[0];
        e.1 += 1;
    }
    let nq = queries.len() as f64;
    let map_macro = per_class.values().map(|(s, c)| s / *c as f64).sum::<f64>() / per_class.len() as f64;
    Ok(RetrievalMetrics {
        map_micro: sums[0] / nq,
        map_macro,
        p_at_n: sums[1] / nq,
        r_at_n: sums[2] / nq,
        f1_at_n: sums[3] / nq,
    })
}

/// Every item queries the rest of the set.
pub fn leave_one_out(descriptors: &[Vec<f64>], labels: &[usize], predicted: &[usize], rerank: bool) -> Result<RetrievalMetrics> {
    let index = RetrievalIndex::new(descriptors, labels.to_vec(), predicted.to_vec())?;
    let queries: Vec<Query> = (0..labels.len())
        .map(|i| Query { descriptor: descriptors[i].clone(), label: labels[i], predicted: predicted[i], exclude: Some(i) })
        .collect();
    evaluate_retrieval(&index, &queries, rerank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_gallery_has_unit_map() {
        let d = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]];
        let m = leave_one_out(&d, &[0, 0, 1, 1], &[0, 0, 1, 1], false).unwrap();
        assert_eq!(m.map_micro, 1.0);
        assert_eq!(m.map_macro, 1.0);
        assert_eq!(m.f1_at_n, 1.0);
    }

    #[test]
    fn second_of_two() {
        let idx = RetrievalIndex::new(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 0], vec![1, 0]).unwrap();
        let q = Query { descriptor: vec![1.0, 0.1], label: 0, predicted: 1, exclude: None };
        assert_eq!(idx.query_scores(&q, false).unwrap()[0], 0.5);
    }

    #[test]
    fn rerank_is_stable_partition() {
        let d: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64 * 0.1]).collect();
        let idx = RetrievalIndex::new(&d, vec![0; 6], vec![1, 0, 1, 0, 1, 0]).unwrap();
        let q = Query { descriptor: vec![1.0, 0.0], label: 0, predicted: 0, exclude: None };
        assert_eq!(idx.rank(&q, false).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(idx.rank(&q, true).unwrap(), vec![1, 3, 5, 0, 2, 4]);
    }

    #[test]
    fn empty_gallery_is_rejected() {
        assert!(RetrievalIndex::new(&[], vec![], vec![]).is_err());
    }
}
