//! Zero-shot problem instances: features, labels, attribute tables and the
//! seen/unseen class split, plus the hyperparameter bundle.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::solve::SolverSettings;

/// Class identifier. Doubles as the column index into the class attribute table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A zero-shot dataset. Samples are feature columns; `defined` optionally
/// holds per-sample defined-attribute annotations, which are only consulted
/// for samples of seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `K_o × N`.
    pub features: Matrix,
    pub labels: Vec<ClassId>,
    /// `K_d × N` per-sample defined attributes, if annotated.
    pub defined: Option<Matrix>,
    /// `K_d × C` class-level defined attributes; column `c` describes `ClassId(c)`.
    pub class_attr: Matrix,
    pub seen: BTreeSet<ClassId>,
    pub unseen: BTreeSet<ClassId>,
}

/// One invariant violation found by [`Dataset::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SplitOverlap { class: ClassId },
    ClassOutOfRange { class: ClassId, table_cols: usize },
    UnknownLabel { sample: usize, label: ClassId },
    LabelCount { expected: usize, got: usize },
    DefinedShape { expected: (usize, usize), got: (usize, usize) },
    AttrDims { features: usize, class_attr: usize },
    NonFiniteFeature { row: usize, col: usize },
    NonFiniteDefined { row: usize, sample: usize },
    NonFiniteClassAttr { row: usize, class: ClassId },
    NoSeenClasses,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SplitOverlap { class } => write!(f, "class {class} is both seen and unseen"),
            Self::ClassOutOfRange { class, table_cols } => {
                write!(f, "class {class} has no column in a {table_cols}-column attribute table")
            }
            Self::UnknownLabel { sample, label } => {
                write!(f, "sample {sample} carries label {label} outside seen and unseen classes")
            }
            Self::LabelCount { expected, got } => write!(f, "expected {expected} labels, got {got}"),
            Self::DefinedShape { expected, got } => {
                write!(f, "per-sample attributes should be {expected:?}, got {got:?}")
            }
            Self::AttrDims { features, class_attr } => {
                write!(f, "per-sample attributes have {features} rows, class table has {class_attr}")
            }
            Self::NonFiniteFeature { row, col } => write!(f, "non-finite feature at ({row}, {col})"),
            Self::NonFiniteDefined { row, sample } => {
                write!(f, "non-finite defined attribute at row {row} of sample {sample}")
            }
            Self::NonFiniteClassAttr { row, class } => {
                write!(f, "non-finite attribute at row {row} of class {class}")
            }
            Self::NoSeenClasses => write!(f, "no seen classes"),
        }
    }
}

/// Samples of the seen classes, ready for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSplit {
    pub features: Matrix,
    pub defined: Matrix,
    pub labels: Vec<ClassId>,
    /// Seen classes in ascending id order; row `r` of the one-hot matrix is `seen[r]`.
    pub seen: Vec<ClassId>,
    pub class_attr_seen: Matrix,
}

impl Dataset {
    pub fn num_samples(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.class_attr.rows()
    }

    pub fn seen_sorted(&self) -> Vec<ClassId> {
        self.seen.iter().copied().collect()
    }

    pub fn unseen_sorted(&self) -> Vec<ClassId> {
        self.unseen.iter().copied().collect()
    }

    /// Collects every invariant violation. An empty list means the dataset is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.num_samples();
        let table_cols = self.class_attr.cols();
        if self.seen.is_empty() {
            out.push(Violation::NoSeenClasses);
        }
        for &class in self.seen.intersection(&self.unseen) {
            out.push(Violation::SplitOverlap { class });
        }
        for &class in self.seen.iter().chain(self.unseen.iter()) {
            if class.0 >= table_cols {
                out.push(Violation::ClassOutOfRange { class, table_cols });
            }
        }
        if self.labels.len() != n {
            out.push(Violation::LabelCount {
                expected: n,
                got: self.labels.len(),
            });
        }
        for (sample, &label) in self.labels.iter().enumerate() {
            if !self.seen.contains(&label) && !self.unseen.contains(&label) {
                out.push(Violation::UnknownLabel { sample, label });
            }
        }
        for i in 0..self.features.rows() {
            for j in 0..n {
                if !self.features[(i, j)].is_finite() {
                    out.push(Violation::NonFiniteFeature { row: i, col: j });
                }
            }
        }
        if let Some(d) = &self.defined {
            if d.cols() != n {
                out.push(Violation::DefinedShape {
                    expected: (self.attr_dim(), n),
                    got: d.shape(),
                });
            } else if d.rows() != self.attr_dim() {
                out.push(Violation::AttrDims {
                    features: d.rows(),
                    class_attr: self.attr_dim(),
                });
            }
            for i in 0..d.rows() {
                for j in 0..d.cols() {
                    if !d[(i, j)].is_finite() {
                        out.push(Violation::NonFiniteDefined { row: i, sample: j });
                    }
                }
            }
        }
        for j in 0..table_cols {
            for i in 0..self.class_attr.rows() {
                if !self.class_attr[(i, j)].is_finite() {
                    out.push(Violation::NonFiniteClassAttr {
                        row: i,
                        class: ClassId(j),
                    });
                }
            }
        }
        out
    }

    fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if let Some(first) = v.first() {
            return Err(Error::Input(format!(
                "invalid dataset ({} violations), first: {first}",
                v.len()
            )));
        }
        Ok(())
    }

    /// Indices of samples whose label lies in `classes`.
    pub fn sample_indices(&self, classes: &BTreeSet<ClassId>) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Extracts the seen-class samples. Missing per-sample defined attributes
    /// are filled by broadcasting each sample's class column.
    pub fn training_split(&self) -> Result<TrainingSplit> {
        self.ensure_valid()?;
        let idx = self.sample_indices(&self.seen);
        if idx.is_empty() {
            return Err(Error::Input("no samples of seen classes".into()));
        }
        let labels: Vec<ClassId> = idx.iter().map(|&i| self.labels[i]).collect();
        let defined = match &self.defined {
            Some(d) => d.select_columns(&idx),
            None => self
                .class_attr
                .select_columns(&labels.iter().map(|c| c.0).collect::<Vec<_>>()),
        };
        let seen = self.seen_sorted();
        Ok(TrainingSplit {
            features: self.features.select_columns(&idx),
            defined,
            labels,
            class_attr_seen: self
                .class_attr
                .select_columns(&seen.iter().map(|c| c.0).collect::<Vec<_>>()),
            seen,
        })
    }

    /// Restricts the dataset to the given samples, keeping class metadata.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_columns(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            defined: self.defined.as_ref().map(|d| d.select_columns(idx)),
            class_attr: self.class_attr.clone(),
            seen: self.seen.clone(),
            unseen: self.unseen.clone(),
        }
    }
}

/// Label indicator matrix `H` (`C_s × N_s`), one 1 per column.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    h: Matrix,
}

impl OneHotLabels {
    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn into_matrix(self) -> Matrix {
        self.h
    }

    /// Row index of the 1 in every column.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.h.cols())
            .map(|j| (0..self.h.rows()).find(|&i| self.h[(i, j)] == 1.0).unwrap_or(0))
            .collect()
    }
}

/// Builds `H` with row `r` corresponding to `order[r]`.
pub fn one_hot(labels: &[ClassId], order: &[ClassId]) -> Result<OneHotLabels> {
    if labels.is_empty() || order.is_empty() {
        return Err(Error::Input("one_hot needs at least one label and one class".into()));
    }
    let mut h = Matrix::zeros(order.len(), labels.len());
    for (j, l) in labels.iter().enumerate() {
        let r = order
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::Input(format!("label {l} of sample {j} is not a seen class")))?;
        h[(r, j)] = 1.0;
    }
    Ok(OneHotLabels { h })
}

/// Where the class-level residual centers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualCenters {
    /// Per-class means of the learned training codes.
    #[default]
    TrainingCodes,
    /// Per-class means of codes re-inferred from the training features.
    Reinferred,
}

/// The space in which test predictions are matched against class descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchSpace {
    /// Recover defined attributes from the latent code and compare there.
    #[default]
    Defined,
    /// Compare latent codes against class attributes mapped through `Q_l`.
    Latent,
}

/// Every scalar knob of training and inference.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Weight of the latent prior `‖L − Q_l D_s‖²`.
    pub alpha: f64,
    /// Weight of the latent classifier term `‖H − U L‖²`.
    pub beta: f64,
    /// Block scale of the residual classifier term.
    pub delta: f64,
    /// Block scale of the residual/latent predictability term.
    pub eta: f64,
    /// Ridge penalty of the similarity vectors.
    pub gamma: f64,
    /// Weight of the residual confidence in the combined score.
    pub lambda: f64,
    /// Latent dimension. `None` means "same as the defined-attribute dimension".
    pub k_l: Option<usize>,
    pub k_r: usize,
    pub tau: f64,
    /// Ridge penalty of the test-time encoder.
    pub epsilon: f64,
    pub seed: u64,
    pub residual_centers: ResidualCenters,
    pub match_space: MatchSpace,
    pub solver: SolverSettings,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            delta: 1.0,
            eta: 0.1,
            gamma: 0.1,
            lambda: 0.5,
            k_l: None,
            k_r: 8,
            tau: 0.0,
            epsilon: 1e-3,
            seed: 0,
            residual_centers: ResidualCenters::TrainingCodes,
            match_space: MatchSpace::Defined,
            solver: SolverSettings::default(),
        }
    }
}

impl HyperParams {
    pub fn latent_dim(&self, attr_dim: usize) -> usize {
        self.k_l.unwrap_or(attr_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("eta", self.eta),
            ("gamma", self.gamma),
        ];
        for (name, v) in weights {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::LambdaOutOfRange(self.lambda));
        }
        if self.k_l == Some(0) || self.k_r == 0 {
            return Err(Error::Input("latent and residual dimensions must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Input("encoder ridge epsilon must be positive".into()));
        }
        if !self.tau.is_finite() {
            return Err(Error::Input("tau must be finite".into()));
        }
        self.solver.validate()
    }
}
