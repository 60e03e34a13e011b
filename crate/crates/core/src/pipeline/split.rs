use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, TEST_TAG};
use super::{derive_seed, PipelineError, Result};

/// One cross-validation partition of the training indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Record indices for the held-out test set and the k folds over the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KFoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

/// Separates test records from training records. Records tagged `test` form
/// the test set when any exist; otherwise a seeded tenth of the records is
/// held out.
pub fn train_test_split(manifest: &DatasetManifest, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let tagged = manifest.tagged(TEST_TAG);
    if !tagged.is_empty() {
        let train = (0..manifest.len()).filter(|i| !tagged.contains(i)).collect();
        return (train, tagged);
    }
    let mut idx: Vec<usize> = (0..manifest.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7e57)));
    let n_test = (manifest.len() + 5) / 10;
    let mut test = idx.split_off(manifest.len() - n_test);
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

/// Splits `train` into `k` disjoint folds whose sizes differ by at most one.
/// With `k == 1` the single fold trains on everything and validates on
/// nothing.
pub fn kfold(train: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || train.len() < k {
        return Err(PipelineError::TooFewRecords { needed: k.max(1), got: train.len() });
    }
    if k == 1 {
        return Ok(vec![Fold {
            train: train.to_vec(),
            validation: Vec::new(),
        }]);
    }
    let mut order = train.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf01d)));
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut validation = order[start..start + len].to_vec();
        let mut rest: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        validation.sort_unstable();
        rest.sort_unstable();
        folds.push(Fold { train: rest, validation });
        start += len;
    }
    Ok(folds)
}

pub fn kfold_split(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<KFoldSplit> {
    let (train, test) = train_test_split(manifest, seed);
    let folds = kfold(&train, k, seed)?;
    Ok(KFoldSplit { train, test, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::{ManifestRecord, TRAIN_TAG};
    use proptest::prelude::*;

    fn manifest(n: usize, tag: &str) -> DatasetManifest {
        let records = (0..n)
            .map(|i| ManifestRecord {
                image_path: format!("{i}.pgm"),
                context_path: None,
                gaze_seconds: 1.0,
                split_tag: tag.into(),
            })
            .collect();
        DatasetManifest::new(".", records)
    }

    #[test]
    fn hundred_records_ten_folds() {
        let s = kfold_split(&manifest(100, "all"), 10, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (90, 10));
        assert!(s.folds.iter().all(|f| f.validation.len() == 9 && f.train.len() == 81));
        assert_eq!(s, kfold_split(&manifest(100, "all"), 10, 3).unwrap());
        assert_ne!(s, kfold_split(&manifest(100, "all"), 10, 4).unwrap());
    }

    #[test]
    fn tags_define_the_test_set() {
        let mut m = manifest(12, TRAIN_TAG);
        m.records[3].split_tag = TEST_TAG.into();
        m.records[11].split_tag = TEST_TAG.into();
        let s = kfold_split(&m, 5, 0).unwrap();
        assert_eq!(s.test, vec![3, 11]);
        assert_eq!(s.train.len(), 10);
    }

    #[test]
    fn degenerate_and_error_cases() {
        let folds = kfold(&[4, 2, 9], 1, 0).unwrap();
        assert_eq!(folds, vec![Fold { train: vec![4, 2, 9], validation: vec![] }]);
        assert!(matches!(kfold(&[1, 2], 3, 0), Err(PipelineError::TooFewRecords { needed: 3, got: 2 })));
        assert!(kfold(&[1, 2], 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_training_set(n in 1usize..120, k in 1usize..12, seed in any::<u64>()) {
            let m = manifest(n, "all");
            match kfold_split(&m, k, seed) {
                Err(PipelineError::TooFewRecords { .. }) => prop_assert!(s_train_len(n) < k),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
                Ok(s) => {
                    let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                    let mut union: Vec<usize> = s.folds.iter().flat_map(|f| f.validation.clone()).collect();
                    union.sort_unstable();
                    if k > 1 {
                        prop_assert_eq!(&union, &s.train);
                    }
                    let sizes: Vec<usize> = s.folds.iter().map(|f| f.validation.len()).collect();
                    prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                    for f in &s.folds {
                        prop_assert!(f.train.iter().chain(&f.validation).all(|i| !s.test.contains(i)));
                        prop_assert!(f.train.iter().all(|i| !f.validation.contains(i)));
                        prop_assert_eq!(f.train.len() + f.validation.len(), s.train.len());
                    }
                }
            }
        }
    }

    fn s_train_len(n: usize) -> usize {
        n - (n + 5) / 10
    }
}
