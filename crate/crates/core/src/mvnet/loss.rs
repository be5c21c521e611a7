//! Cosine-distance triplet loss with a last-seen-per-class descriptor cache.

use crate::error::{param_err, Error, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 − cos(a, b)`. Zero-norm inputs are a numeric error.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(param_err!("descriptor lengths differ: {} vs {}", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine distance of a zero-norm descriptor is undefined".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (na * nb))
}

/// Gradient of `cosine_distance(z, c)` with respect to `z`.
pub fn cosine_distance_grad(z: &[f64], c: &[f64]) -> Vec<f64> {
    let (nz, nc) = (norm(z), norm(c));
    let dot: f64 = z.iter().zip(c).map(|(x, y)| x * y).sum();
    let cos = dot / (nz * nc);
    z.iter().zip(c).map(|(zi, ci)| -(ci / (nz * nc) - cos * zi / (nz * nz))).collect()
}

/// `max(d(z, pos) − d(z, neg) + α, 0)`.
pub fn triplet_value(z: &[f64], pos: &[f64], neg: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(param_err!("triplet margin must be non-negative, got {alpha}"));
    }
    Ok((cosine_distance(z, pos)? - cosine_distance(z, neg)? + alpha).max(0.0))
}

/// Most recent descriptor seen for each class.
#[derive(Clone, Debug)]
pub struct ClassCache {
    slots: Vec<Option<Vec<f64>>>,
}

impl ClassCache {
    pub fn new(classes: usize) -> Self {
        ClassCache { slots: vec![None; classes] }
    }

    pub fn get(&self, class: usize) -> Option<&[f64]> {
        self.slots.get(class).and_then(|s| s.as_deref())
    }

    pub fn update(&mut self, class: usize, z: &[f64]) {
        if norm(z) > 0.0 {
            self.slots[class] = Some(z.to_vec());
        }
    }

    /// Positive is the cached descriptor of `class`; negative is the cached
    /// descriptor of another class closest to `z`. `None` until both exist.
    pub fn pair(&self, z: &[f64], class: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        if norm(z) == 0.0 {
            return None;
        }
        let pos = self.get(class)?.to_vec();
        let neg = self
            .slots
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != class)
            .filter_map(|(_, s)| s.as_ref())
            .filter_map(|s| cosine_distance(z, s).ok().map(|d| (d, s)))
            .min_by(|a, b| a.0.total_cmp(&b.0))?
            .1
            .clone();
        Some((pos, neg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_examples() {
        let z = [1.0, 0.0];
        assert_eq!(triplet_value(&z, &z, &[-1.0, 0.0], 0.2).unwrap(), 0.0);
        let v = triplet_value(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 3.0], 0.2).unwrap();
        assert!((v - 1.2).abs() < 1e-15);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &z), Err(Error::Numeric(_))));
    }

    #[test]
    fn gradient_matches_differences() {
        let z = [0.3, -1.2, 0.7];
        let c = [1.0, 0.4, -0.2];
        let g = cosine_distance_grad(&z, &c);
        for i in 0..3 {
            let mut a = z;
            let mut b = z;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (cosine_distance(&a, &c).unwrap() - cosine_distance(&b, &c).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn hardest_negative_is_nearest_other_class() {
        let mut cache = ClassCache::new(3);
        cache.update(0, &[1.0, 0.0]);
        assert!(cache.pair(&[1.0, 0.1], 0).is_none());
        cache.update(1, &[0.0, 1.0]);
        cache.update(2, &[1.0, 0.2]);
        let (p, n) = cache.pair(&[1.0, 0.1], 0).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert_eq!(n, vec![1.0, 0.2]);
    }
}
