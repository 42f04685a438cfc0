//! Random model generators for tests and benchmarks.

use rand::seq::index::sample;
use rand::Rng;

use crate::model::{Factor, FactorGraph, VarId};

/// Shape of a random factor graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModel {
    pub num_vars: usize,
    pub num_factors: usize,
    pub max_arity: usize,
    pub max_card: usize,
    /// Probability that a table entry is zero.
    pub zero_fraction: f64,
}

impl Default for RandomModel {
    fn default() -> Self {
        RandomModel {
            num_vars: 8,
            num_factors: 8,
            max_arity: 3,
            max_card: 2,
            zero_fraction: 0.0,
        }
    }
}

impl RandomModel {
    pub fn generate<R: Rng>(&self, rng: &mut R) -> FactorGraph {
        let cards: Vec<usize> = (0..self.num_vars).map(|_| rng.gen_range(2..=self.max_card.max(2))).collect();
        let factors = (0..self.num_factors)
            .map(|_| {
                let arity = rng.gen_range(1..=self.max_arity.clamp(1, self.num_vars));
                let mut scope = sample(rng, self.num_vars, arity).into_vec();
                scope.sort_unstable();
                random_table(rng, &cards, scope, 1.0, self.zero_fraction)
            })
            .collect();
        FactorGraph::new(cards, factors).expect("generated model is valid")
    }
}

/// Log-uniform entries `exp(U(-strength, strength))`, each zeroed with
/// probability `zero_fraction`. At least one entry stays nonzero.
pub fn random_table<R: Rng>(rng: &mut R, cards: &[usize], scope: Vec<VarId>, strength: f64, zero_fraction: f64) -> Factor {
    let len: usize = scope.iter().map(|&v| cards[v]).product();
    let mut table: Vec<f64> = (0..len)
        .map(|_| {
            if rng.gen_bool(zero_fraction.clamp(0.0, 1.0)) {
                0.0
            } else {
                log_uniform(rng, strength)
            }
        })
        .collect();
    if table.iter().all(|&x| x == 0.0) {
        let i = rng.gen_range(0..len);
        table[i] = log_uniform(rng, strength);
    }
    FactorGraph::factor(cards, scope, table).expect("generated factor is valid")
}

fn log_uniform<R: Rng>(rng: &mut R, strength: f64) -> f64 {
    if strength == 0.0 {
        1.0
    } else {
        rng.gen_range(-strength..strength).exp()
    }
}

/// Binary grid with row-major ids, a unary factor per variable and a pairwise
/// factor per edge. Entries are `exp(U(-s, s))` with `s = field` for unaries
/// and `s = coupling` for pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub coupling: f64,
    pub field: f64,
    pub zero_fraction: f64,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            coupling: 1.0,
            field: 0.5,
            zero_fraction: 0.0,
        }
    }

    pub fn generate<R: Rng>(&self, rng: &mut R) -> FactorGraph {
        let n = self.rows * self.cols;
        let cards = vec![2; n];
        let mut factors = Vec::new();
        for v in 0..n {
            factors.push(random_table(rng, &cards, vec![v], self.field, 0.0));
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = r * self.cols + c;
                if c + 1 < self.cols {
                    factors.push(random_table(rng, &cards, vec![v, v + 1], self.coupling, self.zero_fraction));
                }
                if r + 1 < self.rows {
                    factors.push(random_table(rng, &cards, vec![v, v + self.cols], self.coupling, self.zero_fraction));
                }
            }
        }
        FactorGraph::new(cards, factors).expect("generated grid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grid::new(3, 4).generate(&mut rng);
        assert_eq!(g.num_vars(), 12);
        // 12 unaries, 3*3 horizontal and 2*4 vertical edges
        assert_eq!(g.factors().len(), 12 + 9 + 8);
        assert_eq!(g.neighbors(5), vec![1, 4, 6, 9]);
    }

    #[test]
    fn random_model_respects_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = RandomModel {
            num_vars: 5,
            num_factors: 7,
            max_arity: 2,
            max_card: 3,
            zero_fraction: 0.9,
        };
        for _ in 0..20 {
            let g = spec.generate(&mut rng);
            assert_eq!(g.num_vars(), 5);
            assert_eq!(g.factors().len(), 7);
            for f in g.factors() {
                assert!(f.scope().len() <= 2);
                assert!(f.table().iter().any(|&x| x > 0.0));
            }
        }
    }
}
