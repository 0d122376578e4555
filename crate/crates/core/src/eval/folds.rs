use serde::Serialize;

use crate::data::Cohort;
use crate::nn::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub stratified: bool,
    pub folds: Vec<Fold>,
}

/// Test-fold index for every item.
///
/// Items are shuffled with `seed`; when stratified, each class is shuffled
/// separately and dealt round-robin with the dealing position carried over
/// from one class to the next, so every fold's class counts and total size
/// are within one of each other.
pub fn fold_assignment(labels: &[u8], k: usize, seed: u64, stratified: bool) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Usage(format!("k must be >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Usage(format!(
            "cannot split {} patients into {k} folds",
            labels.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let groups: Vec<Vec<usize>> = if stratified {
        [0u8, 1]
            .iter()
            .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut assignment = vec![0; labels.len()];
    let mut position = 0;
    for mut group in groups {
        rng.shuffle(&mut group);
        for i in group {
            assignment[i] = position % k;
            position += 1;
        }
    }
    Ok(assignment)
}

pub fn make_folds(cohort: &Cohort, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    let labels = cohort.labels();
    let assignment = fold_assignment(&labels, k, seed, stratified)?;
    let folds = (0..k)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) = cohort.patients.iter().zip(&assignment).partition(|(_, &a)| a == f);
            Fold {
                train: train.into_iter().map(|(p, _)| p.id.clone()).collect(),
                test: test.into_iter().map(|(p, _)| p.id.clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { k, stratified, folds })
}
