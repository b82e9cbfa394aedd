use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

fn shuffled<T: Clone>(ids: &[T], seed: u64) -> Vec<T> {
    let mut v = ids.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Seeded k-fold partition. Fold sizes differ by at most one, larger folds
/// first; fold `i` is the test set of split `i`.
pub fn kfold_splits<T: Clone>(ids: &[T], k: usize, seed: u64) -> Result<Vec<(Vec<T>, Vec<T>)>, EvalError> {
    if k < 2 || ids.len() < k {
        return Err(EvalError::TooFewSamples {
            needed: k.max(2),
            found: ids.len(),
        });
    }
    let order = shuffled(ids, seed);
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for i in 0..k {
        bounds.push(bounds[i] + base + usize::from(i < extra));
    }
    Ok((0..k)
        .map(|i| {
            let test = order[bounds[i]..bounds[i + 1]].to_vec();
            let train = order[..bounds[i]]
                .iter()
                .chain(&order[bounds[i + 1]..])
                .cloned()
                .collect();
            (train, test)
        })
        .collect())
}

/// One train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWaySplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// `n_repeats` independent shuffles, each cut into ⌊0.80·M⌋ train,
/// ⌊0.05·M⌋ validation and the remainder as test. Repeat `r` shuffles with
/// `seed + r`.
pub fn random_splits_80_5_15<T: Clone>(
    ids: &[T],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<ThreeWaySplit<T>>, EvalError> {
    if ids.len() < 20 {
        return Err(EvalError::TooFewSamples {
            needed: 20,
            found: ids.len(),
        });
    }
    let m = ids.len();
    let (n_train, n_val) = (m * 80 / 100, m * 5 / 100);
    Ok((0..n_repeats)
        .map(|r| {
            let mut order = shuffled(ids, seed.wrapping_add(r as u64));
            let test = order.split_off(n_train + n_val);
            let val = order.split_off(n_train);
            ThreeWaySplit {
                train: order,
                val,
                test,
            }
        })
        .collect())
}
