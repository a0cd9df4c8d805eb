//! One-vs-rest evaluation over every class of a multiclass dataset.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::info;

use crate::dataset::{load_csv, split, LabeledDataset, MulticlassDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{average_precision, f1_score, mean_std};
use crate::pcsda::{FitConfig, Subclasses};
use crate::pipeline::{Pipeline, TrainConfig};
use crate::subclass::DEFAULT_MAX_ITER;

use super::config::ExperimentConfig;
use super::cv::{cross_validate, format_k, CvGrid, CvSettings, Objective};

/// Hyperparameters picked by cross validation for one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub d: usize,
    pub k: Subclasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub seed: u64,
    pub map: f64,
    pub f1: f64,
    pub map_choice: Choice,
    pub f1_choice: Choice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassResult {
    pub class: String,
    pub splits: Vec<SplitResult>,
}

impl ClassResult {
    pub fn map(&self) -> (f64, f64) {
        mean_std(&self.splits.iter().map(|s| s.map).collect::<Vec<_>>())
    }

    pub fn f1(&self) -> (f64, f64) {
        mean_std(&self.splits.iter().map(|s| s.f1).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timing {
    pub cv: Duration,
    pub fit: Duration,
    pub evaluate: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: String,
    pub classes: Vec<ClassResult>,
    pub timing: Timing,
}

/// Mean and standard deviation of a metric, taken two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    /// Over the per-class means.
    pub over_classes: (f64, f64),
    /// Over every split of every class.
    pub over_splits: (f64, f64),
}

impl EvalReport {
    fn summarize(&self, metric: impl Fn(&SplitResult) -> f64) -> Summary {
        let per_class: Vec<f64> = self
            .classes
            .iter()
            .map(|c| mean_std(&c.splits.iter().map(&metric).collect::<Vec<_>>()).0)
            .collect();
        let all: Vec<f64> = self.classes.iter().flat_map(|c| c.splits.iter().map(&metric)).collect();
        Summary {
            over_classes: mean_std(&per_class),
            over_splits: mean_std(&all),
        }
    }

    pub fn map_summary(&self) -> Summary {
        self.summarize(|s| s.map)
    }

    pub fn f1_summary(&self) -> Summary {
        self.summarize(|s| s.f1)
    }

    /// Plain-text report. Depends only on the configuration and data, so
    /// repeated runs produce identical bytes; timings are rendered apart.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {}", self.mode);
        let _ = writeln!(s, "class,split_seed,map,f1,map_d,map_k,f1_d,f1_k");
        for c in &self.classes {
            for r in &c.splits {
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{},{},{},{}",
                    c.class,
                    r.seed,
                    r.map,
                    r.f1,
                    r.map_choice.d,
                    format_k(r.map_choice.k),
                    r.f1_choice.d,
                    format_k(r.f1_choice.k)
                );
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "class,map_mean,map_std,f1_mean,f1_std");
        for c in &self.classes {
            let (m, ms) = c.map();
            let (f, fs) = c.f1();
            let _ = writeln!(s, "{},{m:.6},{ms:.6},{f:.6},{fs:.6}", c.class);
        }
        let _ = writeln!(s);
        for (name, sum) in [("map", self.map_summary()), ("f1", self.f1_summary())] {
            let _ = writeln!(
                s,
                "{name}: {:.6} +- {:.6} over classes, {:.6} +- {:.6} over all splits",
                sum.over_classes.0, sum.over_classes.1, sum.over_splits.0, sum.over_splits.1
            );
        }
        s
    }

    pub fn render_timing(&self) -> String {
        format!(
            "time: cv {:.3}s, fit {:.3}s, evaluate {:.3}s\n",
            self.timing.cv.as_secs_f64(),
            self.timing.fit.as_secs_f64(),
            self.timing.evaluate.as_secs_f64()
        )
    }
}

/// Test-set average precision of the ranking and f1 of the classifier.
pub fn evaluate(pipeline: &Pipeline, test: &LabeledDataset, equiprobable: bool) -> Result<(f64, f64)> {
    let ap = average_precision(&pipeline.rank(test.data())?.order, test.labels())?;
    let predicted: Vec<_> = pipeline
        .classify(test.data(), equiprobable)?
        .into_iter()
        .map(|d| d.label)
        .collect();
    Ok((ap, f1_score(&predicted, test.labels())))
}

fn train_choice(cfg: &ExperimentConfig, train: &LabeledDataset, choice: Choice, seed: u64) -> Result<Pipeline> {
    let fit = FitConfig {
        subclasses: choice.k,
        dim: choice.d,
        ridge: cfg.ridge,
        seed,
        max_iter: DEFAULT_MAX_ITER,
        solver: cfg.solver,
    };
    Pipeline::train(
        train,
        &TrainConfig {
            fit,
            kernel: cfg.kernel,
        },
    )
}

/// Runs the protocol on an already loaded dataset.
pub fn run_on(cfg: &ExperimentConfig, data: &MulticlassDataset) -> Result<EvalReport> {
    let classes = match &cfg.classes {
        Some(list) => list.clone(),
        None => data.classes(),
    };
    let settings = CvSettings {
        ridge: cfg.ridge,
        solver: cfg.solver,
        kernel: cfg.kernel,
        equiprobable: cfg.equiprobable,
        max_iter: DEFAULT_MAX_ITER,
    };
    let mut timing = Timing::default();
    let mut results = Vec::with_capacity(classes.len());
    for class in classes {
        let problem = data.make_class_specific(&class)?;
        let mut splits = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let seed = cfg.seed.wrapping_add(r as u64);
            let parts = split(&problem, SplitSpec::new(cfg.train_fraction, seed)?)?;
            let grid = CvGrid::new(cfg.d_grid.clone(), cfg.k_grid.clone(), cfg.folds, seed)?;

            let t = Instant::now();
            let cv = cross_validate(&parts.train, &grid, &settings)
                .map_err(|e| Error::invalid(format!("class {class}, split {r}: {e}")))?;
            timing.cv += t.elapsed();
            let pick = |o: Objective| {
                let c = cv.best(o);
                Choice { d: c.d, k: c.k }
            };
            let (map_choice, f1_choice) = (pick(Objective::MeanAveragePrecision), pick(Objective::F1));

            let t = Instant::now();
            let for_map = train_choice(cfg, &parts.train, map_choice, seed)?;
            let for_f1 = if f1_choice == map_choice {
                None
            } else {
                Some(train_choice(cfg, &parts.train, f1_choice, seed)?)
            };
            timing.fit += t.elapsed();

            let t = Instant::now();
            let (map, f1_same) = evaluate(&for_map, &parts.test, cfg.equiprobable)?;
            let f1 = match &for_f1 {
                None => f1_same,
                Some(p) => evaluate(p, &parts.test, cfg.equiprobable)?.1,
            };
            timing.evaluate += t.elapsed();
            info!("class {class} split {r}: map {map:.4} f1 {f1:.4}");
            splits.push(SplitResult {
                seed,
                map,
                f1,
                map_choice,
                f1_choice,
            });
        }
        results.push(ClassResult { class, splits });
    }
    Ok(EvalReport {
        mode: cfg.mode.to_string(),
        classes: results,
        timing,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let data = load_csv(&cfg.data, &cfg.label_col)?;
    run_on(cfg, &data)
}
