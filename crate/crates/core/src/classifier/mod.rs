//! Bidirectional-LSTM classifier under stratified k-fold cross-validation,
//! evaluated across sources in both TRTS and TSTR directions.

mod model;

pub use model::{fit_fold, Example, FoldFit, SequenceClassifier};

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Care, ClassLabel, Provenance, Trial, TrialSet, Weight};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// LSTM units per direction.
    pub hidden: usize,
    /// Width of the first fully connected layer.
    pub fc_hidden: usize,
    pub classes: usize,
    pub folds: usize,
    pub epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { hidden: 64, fc_hidden: 32, classes: 2, folds: 5, epochs: 100, patience: 10, batch_size: 32, lr: 1e-3, seed: 0 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::validation("cross-validation needs at least 2 folds"));
        }
        if self.classes != 2 {
            return Err(Error::validation("every task is binary; classes must be 2"));
        }
        if self.hidden == 0 || self.fc_hidden == 0 || self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::validation("classifier sizes, epochs and patience must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("classifier learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Care,
    Weight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    HeavyOnly,
    LightOnly,
    CarefulOnly,
    NotCarefulOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub target: Target,
    pub subset: Subset,
}

impl Task {
    /// The six cells of the evaluation tables, in table order.
    pub const TABLE: [Task; 6] = [
        Task { target: Target::Care, subset: Subset::All },
        Task { target: Target::Weight, subset: Subset::All },
        Task { target: Target::Care, subset: Subset::HeavyOnly },
        Task { target: Target::Care, subset: Subset::LightOnly },
        Task { target: Target::Weight, subset: Subset::CarefulOnly },
        Task { target: Target::Weight, subset: Subset::NotCarefulOnly },
    ];

    pub fn validate(&self) -> Result<()> {
        let fixes_target = match self.subset {
            Subset::All => false,
            Subset::HeavyOnly | Subset::LightOnly => self.target == Target::Weight,
            Subset::CarefulOnly | Subset::NotCarefulOnly => self.target == Target::Care,
        };
        if fixes_target {
            return Err(Error::validation(format!("task {self} fixes its own target")));
        }
        Ok(())
    }

    /// Binary class index of `label` under this task, or `None` if the
    /// subset excludes it. Care: NC 0, C 1. Weight: W1 0, W2 1.
    pub fn class_of(&self, label: ClassLabel) -> Option<usize> {
        let keep = match self.subset {
            Subset::All => true,
            Subset::HeavyOnly => label.weight == Weight::W2,
            Subset::LightOnly => label.weight == Weight::W1,
            Subset::CarefulOnly => label.care == Care::C,
            Subset::NotCarefulOnly => label.care == Care::NC,
        };
        keep.then(|| match self.target {
            Target::Care => usize::from(label.care == Care::C),
            Target::Weight => usize::from(label.weight == Weight::W2),
        })
    }

    /// Trials kept by the subset, paired with their binary class.
    pub fn examples<'a>(&self, set: &'a TrialSet) -> Vec<(&'a Trial, usize)> {
        set.trials.iter().filter_map(|t| self.class_of(t.label).map(|c| (t, c))).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = match self.target {
            Target::Care => "care",
            Target::Weight => "weight",
        };
        let subset = match self.subset {
            Subset::All => "all",
            Subset::HeavyOnly => "heavy_only",
            Subset::LightOnly => "light_only",
            Subset::CarefulOnly => "careful_only",
            Subset::NotCarefulOnly => "not_careful_only",
        };
        write!(f, "{target}/{subset}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    /// Train on real, test on synthetic.
    Trts,
    /// Train on synthetic, test on real.
    Tstr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub val_acc: f64,
    pub test_acc: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub direction: Direction,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub per_fold: Vec<FoldReport>,
}

/// Fold index of every example: each class is shuffled and dealt round-robin,
/// so every fold holds within one sample of each class's share.
pub fn stratified_folds(classes: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; classes.len()];
    let n_classes = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn check_classes(examples: &[(&Trial, usize)], folds: usize, what: &str) -> Result<()> {
    for c in 0..2 {
        let n = examples.iter().filter(|e| e.1 == c).count();
        if n < folds {
            return Err(Error::validation(format!("{what} has {n} trials of binary class {c}; at least {folds} are needed")));
        }
    }
    Ok(())
}

/// Fold models trained on one source.
#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub fits: Vec<FoldFit>,
    pub assignment: Vec<usize>,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
}

/// Stratified k-fold training on the task's subset of `trials`.
pub fn train_classifier(trials: &TrialSet, task: Task, config: &ClassifierConfig) -> Result<CrossValidation> {
    config.validate()?;
    task.validate()?;
    let examples = task.examples(trials);
    check_classes(&examples, config.folds, &format!("training data for {task}"))?;
    let classes: Vec<usize> = examples.iter().map(|e| e.1).collect();
    let assignment = stratified_folds(&classes, config.folds, derive_seed(config.seed, &[0]));
    let mut fits = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for ((t, c), &a) in examples.iter().zip(&assignment) {
            let ex = Example { v: &t.v, class: *c };
            if a == fold {
                val.push(ex);
            } else {
                train.push(ex);
            }
        }
        let fit = fit_fold(&train, &val, config, derive_seed(config.seed, &[1, fold as u64]))?;
        log::debug!("{task} fold {fold}: val acc {:.4} after {} epochs", fit.val_acc, fit.epochs_run);
        fits.push(fit);
    }
    let accs: Vec<f64> = fits.iter().map(|f| f.val_acc).collect();
    let (val_acc_mean, val_acc_std) = mean_std(&accs);
    Ok(CrossValidation { fits, assignment, val_acc_mean, val_acc_std })
}

/// Trains on one source and tests every fold model on the other.
pub fn evaluate_cross(real: &TrialSet, synthetic: &TrialSet, task: Task, direction: Direction, config: &ClassifierConfig) -> Result<EvalReport> {
    task.validate()?;
    let (train_set, test_set) = match direction {
        Direction::Trts => (real, synthetic),
        Direction::Tstr => (synthetic, real),
    };
    let test = task.examples(test_set);
    for c in 0..2 {
        if !test.iter().any(|e| e.1 == c) {
            return Err(Error::validation(format!("test data for {task} lacks binary class {c}")));
        }
    }
    // Trials are identified by source and id.
    let train_ids: HashSet<(Provenance, &str)> = train_set.trials.iter().map(|t| (train_set.provenance, t.trial_id.as_str())).collect();
    if let Some((t, _)) = test.iter().find(|(t, _)| train_ids.contains(&(test_set.provenance, t.trial_id.as_str()))) {
        return Err(Error::validation(format!("trial {} appears in both training and test data", t.trial_id)));
    }
    let cv = train_classifier(train_set, task, config)?;
    let test_examples: Vec<Example<'_>> = test.iter().map(|(t, c)| Example { v: &t.v, class: *c }).collect();
    let mut per_fold = Vec::with_capacity(cv.fits.len());
    let mut test_accs = Vec::with_capacity(cv.fits.len());
    for (fold, fit) in cv.fits.iter().enumerate() {
        let acc = fit.model.accuracy(&test_examples)?;
        test_accs.push(acc);
        per_fold.push(FoldReport { fold, val_acc: fit.val_acc, test_acc: Some(acc), best_epoch: fit.best_epoch, epochs_run: fit.epochs_run });
    }
    let (test_acc_mean, test_acc_std) = mean_std(&test_accs);
    log::info!("{task} {direction:?}: val {:.4} test {test_acc_mean:.4}", cv.val_acc_mean);
    Ok(EvalReport { task, direction, val_acc_mean: cv.val_acc_mean, val_acc_std: cv.val_acc_std, test_acc_mean, test_acc_std, per_fold })
}

/// All twelve table cells: six tasks in both directions.
pub fn run_table_suite(real: &TrialSet, synthetic: &TrialSet, config: &ClassifierConfig) -> Result<Vec<EvalReport>> {
    for label in ClassLabel::ALL {
        for (name, set) in [("real", real), ("synthetic", synthetic)] {
            if set.count(label) == 0 {
                return Err(Error::validation(format!("{name} data has no {label} trials")));
            }
        }
    }
    let mut reports = Vec::with_capacity(12);
    for task in Task::TABLE {
        for direction in [Direction::Trts, Direction::Tstr] {
            reports.push(evaluate_cross(real, synthetic, task, direction, config)?);
        }
    }
    Ok(reports)
}

pub const TABLE_FOOTER: &str = "Cells read (validation) / test accuracy in percent, mean ± std over folds. \
Test ± is the spread of the fold models evaluated on the same test set.";

/// Plain-text table with one row per task and one column per direction.
pub fn render_table(reports: &[EvalReport]) -> String {
    let cell = |task: Task, dir: Direction| {
        reports.iter().find(|r| r.task == task && r.direction == dir).map_or_else(
            || "-".to_owned(),
            |r| {
                format!(
                    "({:.2}±{:.2}) / {:.2}±{:.2}",
                    100.0 * r.val_acc_mean,
                    100.0 * r.val_acc_std,
                    100.0 * r.test_acc_mean,
                    100.0 * r.test_acc_std
                )
            },
        )
    };
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:<32} {:<32}", "task", "TRTS", "TSTR");
    let mut seen = Vec::new();
    for r in reports {
        if seen.contains(&r.task) {
            continue;
        }
        seen.push(r.task);
        let _ = writeln!(out, "{:<24} {:<32} {:<32}", r.task.to_string(), cell(r.task, Direction::Trts), cell(r.task, Direction::Tstr));
    }
    let _ = writeln!(out, "\n{TABLE_FOOTER}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tasks_that_fix_their_target_are_invalid() {
        assert!(Task { target: Target::Care, subset: Subset::CarefulOnly }.validate().is_err());
        assert!(Task { target: Target::Weight, subset: Subset::HeavyOnly }.validate().is_err());
        for t in Task::TABLE {
            t.validate().unwrap();
        }
    }

    #[test]
    fn class_mapping() {
        let t = Task { target: Target::Weight, subset: Subset::NotCarefulOnly };
        assert_eq!(t.class_of(ClassLabel::W2_NC), Some(1));
        assert_eq!(t.class_of(ClassLabel::W1_NC), Some(0));
        assert_eq!(t.class_of(ClassLabel::W1_C), None);
        let t = Task { target: Target::Care, subset: Subset::All };
        assert_eq!(t.class_of(ClassLabel::W2_C), Some(1));
    }

    #[test]
    fn folds_are_stratified() {
        let classes: Vec<usize> = (0..103).map(|i| usize::from(i % 3 == 0)).collect();
        let a = stratified_folds(&classes, 5, 9);
        for c in 0..2 {
            let total = classes.iter().filter(|&&x| x == c).count() as f64;
            for f in 0..5 {
                let n = (0..103).filter(|&i| classes[i] == c && a[i] == f).count() as f64;
                assert!((n - total / 5.0).abs() <= 1.0);
            }
        }
        assert_eq!(a, stratified_folds(&classes, 5, 9));
    }
}
