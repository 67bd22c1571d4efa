//! Lower (alpha-vector) and upper (sawtooth) value bounds with
//! support-keyed lookup caches.

use std::collections::HashMap;

use super::{dominated_by, AlphaVector, TIE_TOL};

/// Sparse belief: `(state, probability)` ascending by state.
pub(crate) type SparseBelief = Vec<(usize, f64)>;

fn support(b: &[(usize, f64)]) -> Vec<usize> {
    b.iter().map(|&(s, _)| s).collect()
}

struct Candidates {
    ids: Vec<usize>,
    seen: usize,
    prune_at: usize,
}

pub(crate) struct LowerBound {
    pub vectors: Vec<AlphaVector>,
    alive: Vec<bool>,
    cache: HashMap<Vec<usize>, Candidates>,
}

impl LowerBound {
    pub fn new(initial: Vec<AlphaVector>) -> Self {
        let mut lb = LowerBound {
            vectors: Vec::new(),
            alive: Vec::new(),
            cache: HashMap::new(),
        };
        for v in initial {
            lb.insert(v);
        }
        lb
    }

    /// Adds a vector unless an existing one dominates it; kills vectors it
    /// dominates. Returns whether it was kept.
    pub fn insert(&mut self, v: AlphaVector) -> bool {
        for (i, w) in self.vectors.iter().enumerate() {
            if self.alive[i] && dominated_by(&v, w, None) {
                return false;
            }
        }
        for i in 0..self.vectors.len() {
            if self.alive[i] && dominated_by(&self.vectors[i], &v, None) {
                self.alive[i] = false;
            }
        }
        self.vectors.push(v);
        self.alive.push(true);
        true
    }

    pub fn alive(&self) -> impl Iterator<Item = &AlphaVector> {
        self.vectors.iter().zip(&self.alive).filter(|(_, &a)| a).map(|(v, _)| v)
    }

    /// `(value, vector index)` of the best vector at `b`; ties to the lowest
    /// action id.
    pub fn best(&mut self, b: &[(usize, f64)]) -> (f64, usize) {
        let key = support(b);
        let vectors = &self.vectors;
        let alive = &self.alive;
        let c = self.cache.entry(key).or_insert(Candidates {
            ids: Vec::new(),
            seen: 0,
            prune_at: 32,
        });
        if c.seen < vectors.len() {
            c.ids.extend((c.seen..vectors.len()).filter(|&i| alive[i]));
            c.seen = vectors.len();
        }
        c.ids.retain(|&i| alive[i]);
        if c.ids.len() > c.prune_at {
            let coords = support(b);
            let mut keep: Vec<usize> = Vec::with_capacity(c.ids.len());
            for &i in &c.ids {
                if keep.iter().any(|&k| dominated_by(&vectors[i], &vectors[k], Some(&coords))) {
                    continue;
                }
                keep.retain(|&k| !dominated_by(&vectors[k], &vectors[i], Some(&coords)));
                keep.push(i);
            }
            keep.sort_unstable();
            c.ids = keep;
            c.prune_at = 2 * c.ids.len() + 32;
        }
        let mut best_val = f64::NEG_INFINITY;
        let mut scored = Vec::with_capacity(c.ids.len());
        for &i in &c.ids {
            let v: f64 = b.iter().map(|&(s, p)| p * vectors[i].values[s]).sum();
            best_val = best_val.max(v);
            scored.push((v, i));
        }
        let (_, idx) = scored
            .into_iter()
            .filter(|&(v, _)| v >= best_val - TIE_TOL)
            .min_by_key(|&(_, i)| (vectors[i].action, i))
            .expect("lower bound is never empty");
        (best_val, idx)
    }

    pub fn value(&mut self, b: &[(usize, f64)]) -> f64 {
        self.best(b).0
    }
}

/// Sawtooth upper bound over corner values and interior belief points.
pub(crate) struct UpperBound {
    pub corner: Vec<f64>,
    points: Vec<(SparseBelief, f64)>,
    by_support: HashMap<Vec<usize>, Vec<usize>>,
}

const MAX_SUBSET_SUPPORT: usize = 10;

impl UpperBound {
    pub fn new(corner: Vec<f64>) -> Self {
        UpperBound {
            corner,
            points: Vec::new(),
            by_support: HashMap::new(),
        }
    }

    fn corner_value(&self, b: &[(usize, f64)]) -> f64 {
        b.iter().map(|&(s, p)| p * self.corner[s]).sum()
    }

    fn point_bound(&self, b: &[(usize, f64)], base: f64, i: usize) -> f64 {
        let (pb, pv) = &self.points[i];
        let mut ratio = f64::INFINITY;
        let mut j = 0;
        for &(s, q) in pb {
            while j < b.len() && b[j].0 < s {
                j += 1;
            }
            if j == b.len() || b[j].0 != s {
                return f64::INFINITY;
            }
            ratio = ratio.min(b[j].1 / q);
        }
        base + ratio * (pv - self.corner_value(pb))
    }

    pub fn value(&self, b: &[(usize, f64)]) -> f64 {
        let base = self.corner_value(b);
        let mut best = base;
        if b.len() <= MAX_SUBSET_SUPPORT {
            let supp = support(b);
            for mask in 1u32..(1u32 << supp.len()) {
                if mask.count_ones() < 2 {
                    continue;
                }
                let key: Vec<usize> = supp.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &s)| s).collect();
                if let Some(ids) = self.by_support.get(&key) {
                    for &i in ids {
                        best = best.min(self.point_bound(b, base, i));
                    }
                }
            }
        } else {
            for i in 0..self.points.len() {
                best = best.min(self.point_bound(b, base, i));
            }
        }
        best
    }

    /// Records `V(b) <= v` if it tightens the bound.
    pub fn update(&mut self, b: &[(usize, f64)], v: f64) -> bool {
        if b.len() == 1 {
            let s = b[0].0;
            if v < self.corner[s] - 1e-12 {
                self.corner[s] = v;
                return true;
            }
            return false;
        }
        if v >= self.value(b) - 1e-12 {
            return false;
        }
        let key = support(b);
        self.points.push((b.to_vec(), v));
        self.by_support.entry(key).or_default().push(self.points.len() - 1);
        true
    }
}
