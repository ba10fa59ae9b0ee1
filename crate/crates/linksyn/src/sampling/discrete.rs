//! Discrete sampling primitives: cumulative-weight tables and Vose alias
//! tables. Low-degree transition draws binary-search a cumulative table;
//! hot nodes get an alias table for O(1) draws.

use crate::rng::RngStream;

/// Binary-searchable cumulative weight table.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    cum: Vec<f64>,
    total: f64,
}

impl CumulativeTable {
    /// Returns `None` for an empty list, a negative weight, or a
    /// non-positive total. Zero weights are allowed and are never drawn.
    pub fn from_weights(weights: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut cum = Vec::new();
        let mut total = 0.0f64;
        for w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return None;
            }
            total += w;
            cum.push(total);
        }
        if cum.is_empty() || total <= 0.0 {
            return None;
        }
        Some(Self { cum, total })
    }

    pub fn len(&self) -> usize {
        self.cum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum.is_empty()
    }

    /// Draws an index with probability proportional to its weight.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.next_f64() * self.total;
        // First index whose cumulative weight exceeds u; the min() guards
        // the (measure-zero) u == total edge produced by rounding.
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

/// Vose alias table: O(n) construction, O(1) sampling.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Same validity rules as [`CumulativeTable::from_weights`].
    pub fn from_weights(weights: &[f64]) -> Option<Self> {
        let n = weights.len();
        if n == 0 {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return None;
        }
        let scale = n as f64 / total;
        let mut prob: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
        let mut alias = vec![0u32; n];
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            prob[l as usize] = (prob[l as usize] + prob[s as usize]) - 1.0;
            if prob[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are numerically 1.0.
        for &i in small.iter().chain(large.iter()) {
            prob[i as usize] = 1.0;
            alias[i as usize] = i;
        }
        Some(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let i = rng.next_index(self.prob.len());
        if rng.next_f64() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frequencies(mut draw: impl FnMut(&mut RngStream) -> usize, n: usize, k: u64) -> Vec<f64> {
        let mut rng = RngStream::new(99);
        let mut counts = vec![0u64; n];
        for _ in 0..k {
            counts[draw(&mut rng)] += 1;
        }
        counts.iter().map(|&c| c as f64 / k as f64).collect()
    }

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    #[test]
    fn cumulative_matches_weights() {
        let w = [1.0, 3.0, 6.0];
        let t = CumulativeTable::from_weights(w).unwrap();
        let freqs = frequencies(|r| t.sample(r), 3, 200_000);
        assert!(l1(&freqs, &[0.1, 0.3, 0.6]) < 0.01);
    }

    #[test]
    fn alias_matches_weights() {
        let w = [1.0, 3.0, 6.0, 0.0, 10.0];
        let t = AliasTable::from_weights(&w).unwrap();
        let freqs = frequencies(|r| t.sample(r), 5, 200_000);
        assert!(l1(&freqs, &[0.05, 0.15, 0.3, 0.0, 0.5]) < 0.01);
        assert_eq!(freqs[3], 0.0, "zero weight must never be drawn");
    }

    #[test]
    fn zero_weight_entries_are_never_drawn_from_cumulative() {
        let t = CumulativeTable::from_weights([0.0, 1.0, 0.0, 1.0]).unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..10_000 {
            let i = t.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(CumulativeTable::from_weights([]).is_none());
        assert!(CumulativeTable::from_weights([0.0, 0.0]).is_none());
        assert!(CumulativeTable::from_weights([-1.0, 2.0]).is_none());
        assert!(AliasTable::from_weights(&[]).is_none());
        assert!(AliasTable::from_weights(&[f64::NAN]).is_none());
    }

    #[test]
    fn alias_and_cumulative_agree_in_distribution() {
        let w = [2.0, 5.0, 1.0, 7.0, 4.0, 11.0];
        let c = CumulativeTable::from_weights(w).unwrap();
        let a = AliasTable::from_weights(&w).unwrap();
        let fc = frequencies(|r| c.sample(r), 6, 300_000);
        let fa = frequencies(|r| a.sample(r), 6, 300_000);
        assert!(l1(&fc, &fa) < 0.01);
    }
}
