use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed 90/10 train/validation ratio used throughout.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;

/// Number of items assigned to the training partition.
///
/// Floors `n * train_fraction`; with 175,341 rows at 0.9 this gives
/// 157,806 / 17,535.
pub fn train_len(n: usize, train_fraction: f64) -> usize {
    ((n as f64) * train_fraction).floor() as usize
}

/// Seeded shuffle followed by a prefix/suffix cut.
///
/// # Panics
///
/// Panics if `train_fraction` is not strictly between 0 and 1.
pub fn split_dataset<T>(data: Vec<T>, train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be in (0, 1), got {train_fraction}"
    );
    let n = data.len();
    let cut = train_len(n, train_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut slots: Vec<Option<T>> = data.into_iter().map(Some).collect();
    let mut take = |i: &usize| slots[*i].take().expect("each index visited once");
    let train: Vec<T> = order[..cut].iter().map(&mut take).collect();
    let validation: Vec<T> = order[cut..].iter().map(&mut take).collect();
    (train, validation)
}
