//! Planted synthetic zero-shot problems.
//!
//! Every class has a hidden identity vector `z_c`. Its defined attributes are
//! `d_c = M_d z_c` and its residual attributes `r_c = s · M_r z_c`. Samples
//! jitter both codes independently and are rendered as
//! `x = Q_d Q_l d + Q_r r + noise · g`.
//!
//! Confusable pairs share (almost) the same defined attributes while keeping
//! their own residual attributes, so the description alone cannot tell them
//! apart but the residual code can flag the ambiguity. Pairs are formed among
//! seen classes and among unseen classes alike.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use szsc_core::{ClassId, Dataset, Matrix};

use crate::error::{CliError, Result};
use crate::io::Config;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub k_o: usize,
    pub k_d: usize,
    pub k_l: usize,
    pub k_r: usize,
    pub classes_seen: usize,
    pub classes_unseen: usize,
    pub samples_per_class: usize,
    pub noise: f64,
    /// Dimension of the hidden class identity.
    pub identity_dim: usize,
    /// Standard deviation of the per-sample jitter of the defined attributes.
    pub defined_jitter: f64,
    /// Standard deviation of the per-sample jitter of the residual attributes.
    pub residual_jitter: f64,
    pub residual_scale: f64,
    /// Number of confusable pairs among the seen classes and, separately,
    /// among the unseen classes (capped by the class counts).
    pub confusable_pairs: usize,
    /// Remaining distance between the defined attributes of a confusable
    /// pair, as a fraction of the original distance.
    pub pair_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k_o: 64,
            k_d: 16,
            k_l: 16,
            k_r: 8,
            classes_seen: 10,
            classes_unseen: 4,
            samples_per_class: 30,
            noise: 0.05,
            identity_dim: 6,
            defined_jitter: 0.8,
            residual_jitter: 0.05,
            residual_scale: 2.0,
            confusable_pairs: 1,
            pair_separation: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k_o", self.k_o),
            ("k_d", self.k_d),
            ("k_l", self.k_l),
            ("k_r", self.k_r),
            ("classes_seen", self.classes_seen),
            ("classes_unseen", self.classes_unseen),
            ("samples_per_class", self.samples_per_class),
            ("identity_dim", self.identity_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CliError::Invalid(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("noise", self.noise),
            ("defined_jitter", self.defined_jitter),
            ("residual_jitter", self.residual_jitter),
            ("residual_scale", self.residual_scale),
            ("pair_separation", self.pair_separation),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CliError::Invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// Reads `key value` overrides of the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut c = Self::default();
        for (ln, key, vals) in &cfg.entries {
            let [v] = vals.as_slice() else {
                return Err(CliError::parse(&cfg.path, *ln, format!("{key} takes one value")));
            };
            let bad = || CliError::parse(&cfg.path, *ln, format!("cannot parse {v:?}"));
            let int = || v.parse::<usize>().map_err(|_| bad());
            let real = || v.parse::<f64>().map_err(|_| bad());
            match key.as_str() {
                "seed" => c.seed = v.parse().map_err(|_| bad())?,
                "k_o" => c.k_o = int()?,
                "k_d" => c.k_d = int()?,
                "k_l" => c.k_l = int()?,
                "k_r" => c.k_r = int()?,
                "classes_seen" => c.classes_seen = int()?,
                "classes_unseen" => c.classes_unseen = int()?,
                "samples_per_class" => c.samples_per_class = int()?,
                "identity_dim" => c.identity_dim = int()?,
                "confusable_pairs" => c.confusable_pairs = int()?,
                "noise" => c.noise = real()?,
                "defined_jitter" => c.defined_jitter = real()?,
                "residual_jitter" => c.residual_jitter = real()?,
                "residual_scale" => c.residual_scale = real()?,
                "pair_separation" => c.pair_separation = real()?,
                _ => return Err(CliError::parse(&cfg.path, *ln, format!("unknown key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFactors {
    /// `K_o × K_l`.
    pub q_d: Matrix,
    /// `K_l × K_d`.
    pub q_l: Matrix,
    /// `K_o × K_r`.
    pub q_r: Matrix,
    /// `K_d × N` per-sample defined attributes.
    pub defined: Matrix,
    /// `K_r × N` per-sample residual attributes.
    pub residual: Matrix,
    /// `K_r × C` class-level residual attributes.
    pub class_residual: Matrix,
    /// Classes whose defined attributes were merged with a partner.
    pub confusable: BTreeSet<ClassId>,
}

impl PlantedFactors {
    /// `Q_d Q_l D + Q_r R` without noise.
    pub fn composition(&self) -> Matrix {
        let signal = self.q_d.matmul(&self.q_l).and_then(|m| m.matmul(&self.defined));
        let res = self.q_r.matmul(&self.residual);
        signal.and_then(|s| s.add(&res?)).expect("planted shapes agree")
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// All samples; classes `0..classes_seen` are seen, the rest unseen.
    pub dataset: Dataset,
    pub truth: PlantedFactors,
}

impl SynthData {
    /// Seen-class samples with their per-sample annotations.
    pub fn train(&self) -> Dataset {
        self.dataset.subset(&self.dataset.sample_indices(&self.dataset.seen))
    }

    /// Unseen-class samples without per-sample annotations.
    pub fn test(&self) -> Dataset {
        let mut d = self.dataset.subset(&self.dataset.sample_indices(&self.dataset.unseen));
        d.defined = None;
        d
    }
}

fn unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
    m.normalize_columns();
    m
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Pulls the defined attributes of classes `a` and `b` toward their midpoint.
fn merge_pair(attr: &mut Matrix, a: usize, b: usize, separation: f64) {
    for i in 0..attr.rows() {
        let (x, y) = (attr[(i, a)], attr[(i, b)]);
        let (mid, half) = (0.5 * (x + y), 0.5 * (x - y) * separation);
        attr[(i, a)] = mid + half;
        attr[(i, b)] = mid - half;
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.classes_seen + cfg.classes_unseen;
    let n = c * cfg.samples_per_class;
    let p = cfg.identity_dim;

    let q_d = unit_columns(&mut rng, cfg.k_o, cfg.k_l);
    let q_l = unit_columns(&mut rng, cfg.k_l, cfg.k_d);
    let q_r = unit_columns(&mut rng, cfg.k_o, cfg.k_r);
    let identity = gaussian(&mut rng, p, c, 1.0);
    let m_d = gaussian(&mut rng, cfg.k_d, p, 1.0 / (p as f64).sqrt());
    let m_r = gaussian(&mut rng, cfg.k_r, p, cfg.residual_scale / (p as f64).sqrt());
    let mut class_attr = m_d.matmul(&identity)?;
    let class_residual = m_r.matmul(&identity)?;

    let mut confusable = BTreeSet::new();
    for (start, count) in [(0, cfg.classes_seen), (cfg.classes_seen, cfg.classes_unseen)] {
        for k in 0..cfg.confusable_pairs.min(count / 2) {
            let (a, b) = (start + 2 * k, start + 2 * k + 1);
            merge_pair(&mut class_attr, a, b, cfg.pair_separation);
            confusable.extend([ClassId(a), ClassId(b)]);
        }
    }

    let labels: Vec<ClassId> = (0..n).map(|i| ClassId(i / cfg.samples_per_class)).collect();
    let mut defined = gaussian(&mut rng, cfg.k_d, n, cfg.defined_jitter);
    let mut residual = gaussian(&mut rng, cfg.k_r, n, cfg.residual_jitter);
    for (j, l) in labels.iter().enumerate() {
        for i in 0..cfg.k_d {
            defined[(i, j)] += class_attr[(i, l.0)];
        }
        for i in 0..cfg.k_r {
            residual[(i, j)] += class_residual[(i, l.0)];
        }
    }
    let truth = PlantedFactors {
        q_d,
        q_l,
        q_r,
        defined,
        residual,
        class_residual,
        confusable,
    };
    let mut features = truth.composition();
    if cfg.noise > 0.0 {
        features = features.add(&gaussian(&mut rng, cfg.k_o, n, cfg.noise))?;
    }
    let dataset = Dataset {
        features,
        labels,
        defined: Some(truth.defined.clone()),
        class_attr,
        seen: (0..cfg.classes_seen).map(ClassId).collect(),
        unseen: (cfg.classes_seen..c).map(ClassId).collect(),
    };
    Ok(SynthData { dataset, truth })
}
