//! Stratified k-fold search over subspace dimension and subclass count.

use std::fmt;

use log::debug;

use crate::dataset::{stratified_folds, LabeledDataset};
use crate::error::{Error, Result};
use crate::inference::{classify_projected, rank_projected};
use crate::kernel::KernelConfig;
use crate::metrics::{average_precision, f1_score};
use crate::numkit::Ridge;
use crate::pcsda::{effective_subclasses, fit_subspace, Solver, Subclasses};
use crate::pipeline::featurize_training;
use crate::subclass::DEFAULT_MAX_ITER;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MeanAveragePrecision,
    F1,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::MeanAveragePrecision => "map",
            Objective::F1 => "f1",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub d_values: Vec<usize>,
    pub k_values: Vec<Subclasses>,
    pub folds: usize,
    pub seed: u64,
}

impl CvGrid {
    pub fn new(d_values: Vec<usize>, k_values: Vec<Subclasses>, folds: usize, seed: u64) -> Result<Self> {
        if folds < 2 {
            return Err(Error::config("folds", format!("need at least 2, got {folds}")));
        }
        if d_values.is_empty() || d_values.contains(&0) {
            return Err(Error::config("d_grid", "must be a non-empty list of positive counts"));
        }
        if k_values.is_empty() || k_values.contains(&Subclasses::Fixed(0)) {
            return Err(Error::config("k_grid", "must be a non-empty list of positive counts"));
        }
        Ok(CvGrid {
            d_values,
            k_values,
            folds,
            seed,
        })
    }
}

/// Fit options shared by every cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub ridge: Ridge,
    pub solver: Solver,
    pub kernel: Option<KernelConfig>,
    pub equiprobable: bool,
    pub max_iter: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            ridge: Ridge::Auto,
            solver: Solver::Direct,
            kernel: None,
            equiprobable: false,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Fold-averaged validation scores of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub d: usize,
    pub k: Subclasses,
    pub map: f64,
    pub f1: f64,
}

impl CvCell {
    pub fn score(&self, objective: Objective) -> f64 {
        match objective {
            Objective::MeanAveragePrecision => self.map,
            Objective::F1 => self.f1,
        }
    }
}

pub(crate) fn k_order(k: Subclasses) -> usize {
    match k {
        Subclasses::Fixed(k) => k,
        Subclasses::PerSample => usize::MAX,
    }
}

pub fn format_k(k: Subclasses) -> String {
    match k {
        Subclasses::Fixed(k) => k.to_string(),
        Subclasses::PerSample => "all".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// Feasible cells ordered by K, then d.
    pub table: Vec<CvCell>,
}

impl CvOutcome {
    /// Highest scoring cell; ties go to the smaller K, then the smaller d.
    pub fn best(&self, objective: Objective) -> &CvCell {
        let mut best = &self.table[0];
        for c in &self.table[1..] {
            if c.score(objective) > best.score(objective) {
                best = c;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,d,map,f1\n");
        for c in &self.table {
            s.push_str(&format!("{},{},{},{}\n", format_k(c.k), c.d, c.map, c.f1));
        }
        s
    }
}

/// Runs the search. A cell is kept only if it is feasible in every fold
/// (`K` at most the fold's negatives, `d` at most `min(D, K)`).
pub fn cross_validate(train: &LabeledDataset, grid: &CvGrid, settings: &CvSettings) -> Result<CvOutcome> {
    let folds = stratified_folds(train.labels(), grid.folds, grid.seed);
    let mut ks = grid.k_values.clone();
    ks.sort_by_key(|&k| k_order(k));
    ks.dedup();
    let mut ds = grid.d_values.clone();
    ds.sort_unstable();
    ds.dedup();

    // sums[ki][di] = Some((map, f1)) while still feasible
    let mut sums: Vec<Vec<Option<(f64, f64)>>> = vec![vec![Some((0.0, 0.0)); ds.len()]; ks.len()];
    for (f, fold) in folds.iter().enumerate() {
        let held: Vec<bool> = {
            let mut h = vec![false; train.len()];
            for &i in fold {
                h[i] = true;
            }
            h
        };
        let fit_idx: Vec<usize> = (0..train.len()).filter(|&i| !held[i]).collect();
        let fit_part = train.subset(&fit_idx)?;
        let val_part = train.subset(fold)?;
        if fit_part.positive_count() < 2 || fit_part.negative_count() < 1 || val_part.positive_count() < 1 {
            return Err(Error::invalid(format!(
                "fold {f} is infeasible: training part has {} positives and {} negatives, validation part {} positives",
                fit_part.positive_count(),
                fit_part.negative_count(),
                val_part.positive_count()
            )));
        }
        let (map, features) = featurize_training(&fit_part, settings.kernel.as_ref())?;
        let val_x = match &map {
            Some(m) => m.map_points(val_part.data())?,
            None => val_part.data().clone(),
        };
        for (ki, &k) in ks.iter().enumerate() {
            if sums[ki].iter().all(Option::is_none) {
                continue;
            }
            let k_eff = match effective_subclasses(&features, k) {
                Ok(k) => k,
                Err(Error::InvalidInput(msg)) => {
                    debug!("fold {f}: K={} skipped: {msg}", format_k(k));
                    sums[ki].iter_mut().for_each(|c| *c = None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let sub = fit_subspace(
                &features,
                k,
                settings.ridge,
                grid.seed.wrapping_add(f as u64),
                settings.max_iter,
                settings.solver,
            )?;
            debug_assert!(sub.max_dim() <= k_eff);
            for (di, &d) in ds.iter().enumerate() {
                let Some((sm, sf)) = sums[ki][di] else { continue };
                if d > sub.max_dim() {
                    sums[ki][di] = None;
                    continue;
                }
                let model = sub.model(d)?;
                let z = model.project(&val_x)?;
                let ap = average_precision(&rank_projected(&z).order, val_part.labels())?;
                let predicted: Vec<_> = classify_projected(&model, &z, settings.equiprobable)?
                    .into_iter()
                    .map(|dec| dec.label)
                    .collect();
                let f1 = f1_score(&predicted, val_part.labels());
                sums[ki][di] = Some((sm + ap, sf + f1));
            }
        }
    }
    let n = folds.len() as f64;
    let mut table = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        for (di, &d) in ds.iter().enumerate() {
            if let Some((m, f)) = sums[ki][di] {
                table.push(CvCell {
                    d,
                    k,
                    map: m / n,
                    f1: f / n,
                });
            }
        }
    }
    if table.is_empty() {
        return Err(Error::invalid(
            "no grid cell is feasible: every (d, K) pair exceeds min(D, K) or the fold's negatives",
        ));
    }
    Ok(CvOutcome { table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::surrounded_positive;

    #[test]
    fn grid_validation() {
        assert!(CvGrid::new(vec![1], vec![Subclasses::Fixed(1)], 1, 0).is_err());
        assert!(CvGrid::new(vec![], vec![Subclasses::Fixed(1)], 5, 0).is_err());
        assert!(CvGrid::new(vec![1], vec![Subclasses::Fixed(0)], 5, 0).is_err());
    }

    #[test]
    fn single_cell_grid() {
        let ds = surrounded_positive(30, 3, 30, 5.0, 1).unwrap();
        let grid = CvGrid::new(vec![1], vec![Subclasses::Fixed(2)], 5, 3).unwrap();
        let out = cross_validate(&ds, &grid, &CvSettings::default()).unwrap();
        assert_eq!(out.table.len(), 1);
        let best = out.best(Objective::F1);
        assert_eq!((best.d, best.k), (1, Subclasses::Fixed(2)));
        assert!(best.map > 0.0 && best.map <= 1.0);
    }

    #[test]
    fn duplicated_cells_are_identical() {
        let ds = surrounded_positive(30, 3, 30, 5.0, 2).unwrap();
        let a = CvGrid::new(vec![1, 2], vec![Subclasses::Fixed(3)], 4, 9).unwrap();
        let b = CvGrid::new(vec![2, 1, 2], vec![Subclasses::Fixed(3), Subclasses::Fixed(3)], 4, 9).unwrap();
        let s = CvSettings::default();
        assert_eq!(cross_validate(&ds, &a, &s).unwrap(), cross_validate(&ds, &b, &s).unwrap());
    }

    #[test]
    fn infeasible_cells_are_dropped() {
        let ds = surrounded_positive(20, 3, 20, 5.0, 3).unwrap();
        // D = 2 so d = 3 never fits; K = 1 allows only d = 1
        let grid = CvGrid::new(vec![1, 2, 3], vec![Subclasses::Fixed(1), Subclasses::Fixed(3)], 5, 0).unwrap();
        let out = cross_validate(&ds, &grid, &CvSettings::default()).unwrap();
        let cells: Vec<_> = out.table.iter().map(|c| (k_order(c.k), c.d)).collect();
        assert_eq!(cells, vec![(1, 1), (3, 1), (3, 2)]);
        let none = CvGrid::new(vec![5], vec![Subclasses::Fixed(1)], 5, 0).unwrap();
        assert!(cross_validate(&ds, &none, &CvSettings::default()).is_err());
    }

    #[test]
    fn ties_prefer_simpler_models() {
        let out = CvOutcome {
            table: vec![
                CvCell { d: 1, k: Subclasses::Fixed(1), map: 0.5, f1: 0.9 },
                CvCell { d: 1, k: Subclasses::Fixed(3), map: 0.9, f1: 0.9 },
                CvCell { d: 2, k: Subclasses::Fixed(3), map: 0.9, f1: 0.8 },
            ],
        };
        let m = out.best(Objective::MeanAveragePrecision);
        assert_eq!((m.d, m.k), (1, Subclasses::Fixed(3)));
        let f = out.best(Objective::F1);
        assert_eq!((f.d, f.k), (1, Subclasses::Fixed(1)));
    }

    #[test]
    fn does_not_underestimate_subclasses() {
        let mut exact = 0;
        for seed in 0..5 {
            let ds = surrounded_positive(60, 3, 60, 4.0, 100 + seed).unwrap();
            let ks = [1, 3, 10].map(Subclasses::Fixed).to_vec();
            let grid = CvGrid::new(vec![1, 2], ks, 5, seed).unwrap();
            let out = cross_validate(&ds, &grid, &CvSettings::default()).unwrap();
            assert_ne!(out.best(Objective::F1).k, Subclasses::Fixed(1));
            assert_ne!(out.best(Objective::MeanAveragePrecision).k, Subclasses::Fixed(1));
            let narrow = CvGrid::new(vec![1, 2], vec![Subclasses::Fixed(1), Subclasses::Fixed(3)], 5, seed).unwrap();
            if cross_validate(&ds, &narrow, &CvSettings::default()).unwrap().best(Objective::F1).k
                == Subclasses::Fixed(3)
            {
                exact += 1;
            }
        }
        assert!(exact >= 4, "K = 3 chosen over K = 1 on {exact} of 5 seeds");
    }
}
