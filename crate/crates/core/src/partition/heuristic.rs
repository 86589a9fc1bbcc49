//! Seeded local search for graphs too large for branch-and-bound.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::search::{Compiled, Eval};
use crate::scalar::Scalar;

/// Chance that a restart re-rolls each vertex of the incumbent.
const PERTURB: f64 = 0.3;

/// Single-vertex tier flips from two fixed starts (every vertex on its
/// lowest tier, every vertex on its cheapest tier) and then from random
/// perturbations of the incumbent. A flip is taken when it strictly
/// improves the assignment under [`Compiled::cmp_any`].
pub(crate) fn local_search<T: Scalar>(c: &Compiled<T>, seed: u64, restarts: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lowest: Vec<usize> = c.domains().iter().map(|d| d[0]).collect();
    let cheapest = c.cheapest();

    let mut best: Option<(Eval<T>, Vec<usize>)> = None;
    for round in 0..restarts.max(2) {
        let start = match round {
            0 => lowest.clone(),
            1 => cheapest.clone(),
            _ => {
                let base = best.as_ref().map_or(&lowest, |(_, r)| r);
                perturb(c, base, &mut rng)
            }
        };
        let (e, r) = climb(c, start, &mut rng);
        let better = best
            .as_ref()
            .map_or(true, |(b, br)| c.cmp_any((&e, &r), (b, br)) == Ordering::Less);
        if better {
            best = Some((e, r));
        }
    }
    best.expect("at least one restart").1
}

fn perturb<T: Scalar>(c: &Compiled<T>, base: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    base.iter()
        .enumerate()
        .map(|(v, &r)| {
            let d = &c.domains()[v];
            if d.len() > 1 && rng.gen_bool(PERTURB) {
                *d.choose(rng).expect("non-empty domain")
            } else {
                r
            }
        })
        .collect()
}

fn climb<T: Scalar>(
    c: &Compiled<T>,
    mut ranks: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> (Eval<T>, Vec<usize>) {
    let mut current = c.evaluate(&ranks);
    let mut order: Vec<usize> = (0..c.len()).filter(|&v| c.domains()[v].len() > 1).collect();
    loop {
        order.shuffle(rng);
        let mut improved = false;
        for &v in &order {
            for &r in &c.domains()[v] {
                if r == ranks[v] {
                    continue;
                }
                let prev = ranks[v];
                ranks[v] = r;
                let cand = c.evaluate(&ranks);
                let mut old = ranks.clone();
                old[v] = prev;
                if c.cmp_any((&cand, &ranks), (&current, &old)) == Ordering::Less {
                    current = cand;
                    improved = true;
                } else {
                    ranks[v] = prev;
                }
            }
        }
        if !improved {
            return (current, ranks);
        }
    }
}
