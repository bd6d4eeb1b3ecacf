use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four disjoint parts of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Valid,
    Calib,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn subset(&self, s: Subset) -> &[usize] {
        match s {
            Subset::Train => &self.train,
            Subset::Valid => &self.valid,
            Subset::Calib => &self.calib,
            Subset::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.calib.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic seeded split of `0..n`.
///
/// `ratios` are `(train, valid, calib, test)`; valid, calib and test get
/// `floor(ratio·n)` items and train takes the rest.
pub fn split_dataset(n: usize, ratios: [f64; 4], seed: u64) -> Result<DatasetSplit> {
    if n < 4 {
        return Err(Error::Config(format!("need at least 4 items to split, got {n}")));
    }
    if ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Config(format!("split ratios must lie in (0,1): {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {total}, not 1")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let (nv, nc, nt) = (size(ratios[1]), size(ratios[2]), size(ratios[3]));
    let ntr = n - nv - nc - nt;
    let mut it = perm.into_iter();
    let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: take(ntr),
        valid: take(nv),
        calib: take(nc),
        test: take(nt),
        seed,
    })
}
