//! Gaussian class-cluster features in two regimes.
//!
//! *Exact*: remaining classes sit at the vertices `R·e_j` of a `k`-dimensional
//! top subspace, with noise on every top-subspace axis and almost nothing
//! outside it. Each forgetting class sits at the centroid of the remaining
//! centers plus a marker on a top-subspace axis no remaining class is centered
//! on, plus an offset into the complement; its noise lives mostly in the
//! complement.
//!
//! *Pretrained*: every class shares one anisotropic noise model with a slowly
//! decaying spectrum and small class offsets, so forgetting and remaining
//! features are statistically alike.
//!
//! Both regimes are finally rotated by a random orthogonal matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matcore::{thin_qr, Matrix};

/// Distance of remaining-class centers from the origin, in noise units.
const CENTER_SCALE: f64 = 5.0;
/// Forgetting-class marker along its private top-subspace axis.
const MARKER_SCALE: f64 = 5.0;
/// Forgetting-class offset along a random complement direction.
const OFFSET_SCALE: f64 = 2.0;
/// Remaining-class noise on the top-subspace axes without a class center,
/// and outside the top subspace.
const RM_NUISANCE: f64 = 1.5;
const RM_LEAK: f64 = 0.1;
/// Forgetting-class noise inside and outside the top subspace.
const FG_INSIDE: f64 = 0.6;
const FG_OUTSIDE: f64 = 0.3;
/// Per-axis decay of the pretrained-regime noise standard deviation.
const PRETRAINED_DECAY: f64 = 0.95;
const PRETRAINED_SCALE: f64 = 2.0;
const PRETRAINED_CENTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Pretrained,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub regime: Regime,
    pub dim: usize,
    pub classes: usize,
    pub per_class: usize,
    /// Class ids of the forgetting set.
    pub forget: Vec<u32>,
    pub seed: u64,
    /// Dimension of the subspace holding the remaining classes.
    pub top_dim: usize,
    pub noise: f64,
}

impl SyntheticScenario {
    pub fn new(regime: Regime) -> Self {
        SyntheticScenario {
            regime,
            dim: 32,
            classes: 6,
            per_class: 200,
            forget: vec![4, 5],
            seed: 0,
            top_dim: 8,
            noise: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.top_dim == 0 || self.top_dim > self.dim {
            return Err(Error::invalid(format!(
                "top subspace dimension {} must lie in 1..={}",
                self.top_dim, self.dim
            )));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("need at least one sample per class"));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise scale {} must be positive", self.noise)));
        }
        if self.forget.is_empty() {
            return Err(Error::invalid("no forgetting classes"));
        }
        let mut seen = vec![false; self.classes];
        for &c in &self.forget {
            let c = c as usize;
            if c >= self.classes {
                return Err(Error::invalid(format!("forgetting class {c} outside 0..{}", self.classes)));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::invalid(format!("forgetting class {c} listed twice")));
            }
        }
        let remain = self.classes - self.forget.len();
        if remain == 0 {
            return Err(Error::invalid("every class is being forgotten"));
        }
        if self.regime == Regime::Exact && remain + self.forget.len() > self.top_dim {
            return Err(Error::invalid(format!(
                "the exact regime needs a top subspace of at least {} dimensions, got {}",
                self.classes, self.top_dim
            )));
        }
        Ok(())
    }

    fn remaining_classes(&self) -> Vec<u32> {
        (0..self.classes as u32).filter(|c| !self.forget.contains(c)).collect()
    }

    fn forgetting_classes(&self) -> Vec<u32> {
        let mut f = self.forget.clone();
        f.sort_unstable();
        f
    }
}

/// Remaining and forgetting features with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplit {
    pub remain: FeatureMatrix,
    pub forget: FeatureMatrix,
}

/// A fixed draw of the class centers, noise levels and rotation for a
/// scenario, from which any number of samples can be drawn.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    scenario: SyntheticScenario,
    rotation: Matrix,
    // per class id, in latent coordinates
    centers: Vec<Vec<f64>>,
    spreads: Vec<Vec<f64>>,
}

fn unit_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl SyntheticModel {
    pub fn new(scenario: &SyntheticScenario) -> Result<Self> {
        scenario.validate()?;
        let d = scenario.dim;
        let k = scenario.top_dim;
        let nu = scenario.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let (rotation, _) = thin_qr(&g)?;

        let mut centers = vec![vec![0.0; d]; scenario.classes];
        let mut spreads = vec![vec![0.0; d]; scenario.classes];
        match scenario.regime {
            Regime::Exact => {
                let remain = scenario.remaining_classes();
                let r = remain.len();
                for (j, &c) in remain.iter().enumerate() {
                    centers[c as usize][j] = CENTER_SCALE * nu;
                    for (a, s) in spreads[c as usize].iter_mut().enumerate() {
                        *s = nu * if a < r {
                            1.0
                        } else if a < k {
                            RM_NUISANCE
                        } else {
                            RM_LEAK
                        };
                    }
                }
                for (i, &c) in scenario.forgetting_classes().iter().enumerate() {
                    let c = c as usize;
                    for a in 0..r {
                        centers[c][a] = CENTER_SCALE * nu / r as f64;
                    }
                    centers[c][r + i] = MARKER_SCALE * nu;
                    if k < d {
                        for (a, w) in unit_vector(&mut rng, d - k).into_iter().enumerate() {
                            centers[c][k + a] = OFFSET_SCALE * nu * w;
                        }
                    }
                    for (a, s) in spreads[c].iter_mut().enumerate() {
                        *s = if a < k { FG_INSIDE * nu } else { FG_OUTSIDE * nu };
                    }
                }
            }
            Regime::Pretrained => {
                let spread: Vec<f64> = (0..d)
                    .map(|a| PRETRAINED_SCALE * nu * PRETRAINED_DECAY.powi(a as i32))
                    .collect();
                for c in 0..scenario.classes {
                    for (a, w) in unit_vector(&mut rng, k).into_iter().enumerate() {
                        centers[c][a] = PRETRAINED_CENTER * nu * w;
                    }
                    spreads[c].clone_from(&spread);
                }
            }
        }
        Ok(SyntheticModel {
            scenario: scenario.clone(),
            rotation,
            centers,
            spreads,
        })
    }

    pub fn scenario(&self) -> &SyntheticScenario {
        &self.scenario
    }

    /// Draws `per_class` samples of every class. Distinct `stream`s give
    /// independent samples from the same model; rows cycle through the
    /// classes in ascending id order.
    pub fn sample(&self, per_class: usize, stream: u64) -> Result<SyntheticSplit> {
        if per_class == 0 {
            return Err(Error::invalid("need at least one sample per class"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
        rng.set_stream(stream + 1);
        let remain = self.draw(&self.scenario.remaining_classes(), per_class, &mut rng)?;
        let forget = self.draw(&self.scenario.forgetting_classes(), per_class, &mut rng)?;
        Ok(SyntheticSplit { remain, forget })
    }

    fn draw(&self, classes: &[u32], per_class: usize, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
        let d = self.scenario.dim;
        let n = classes.len() * per_class;
        let labels: Vec<u32> = (0..n).map(|i| classes[i % classes.len()]).collect();
        let latent = Matrix::from_fn(n, d, |i, a| {
            let c = labels[i] as usize;
            let g: f64 = StandardNormal.sample(rng);
            self.centers[c][a] + self.spreads[c][a] * g
        });
        FeatureMatrix::new(latent.matmul_t(&self.rotation)?, Some(labels))
    }
}

/// Draws `scenario.per_class` samples per class from a fresh model.
pub fn synth(scenario: &SyntheticScenario) -> Result<SyntheticSplit> {
    SyntheticModel::new(scenario)?.sample(scenario.per_class, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_features() {
        let s = SyntheticScenario::new(Regime::Exact);
        assert_eq!(synth(&s).unwrap(), synth(&s).unwrap());
        let mut other = s.clone();
        other.seed = 1;
        assert_ne!(synth(&s).unwrap(), synth(&other).unwrap());
    }

    #[test]
    fn streams_differ_but_share_the_model() {
        let model = SyntheticModel::new(&SyntheticScenario::new(Regime::Pretrained)).unwrap();
        let a = model.sample(10, 0).unwrap();
        let b = model.sample(10, 1).unwrap();
        assert_ne!(a.remain.values(), b.remain.values());
        assert_eq!(a.remain.labels(), b.remain.labels());
    }

    #[test]
    fn shapes_and_labels() {
        let mut s = SyntheticScenario::new(Regime::Exact);
        s.per_class = 3;
        s.forget = vec![5, 1];
        let split = synth(&s).unwrap();
        assert_eq!(split.remain.values().shape(), (12, 32));
        assert_eq!(split.forget.values().shape(), (6, 32));
        assert_eq!(&split.remain.labels().unwrap()[..4], &[0, 2, 3, 4]);
        assert_eq!(&split.forget.labels().unwrap()[..2], &[1, 5]);
    }

    #[test]
    fn infeasible_scenarios() {
        let base = SyntheticScenario::new(Regime::Exact);
        let mut s = base.clone();
        s.top_dim = 5;
        assert!(synth(&s).is_err());
        s.regime = Regime::Pretrained;
        assert!(synth(&s).is_ok());
        let mut s = base.clone();
        s.top_dim = 40;
        assert!(synth(&s).is_err());
        let mut s = base.clone();
        s.forget = vec![6];
        assert!(synth(&s).is_err());
        let mut s = base.clone();
        s.forget = vec![];
        assert!(synth(&s).is_err());
        let mut s = base.clone();
        s.forget = vec![1, 1];
        assert!(synth(&s).is_err());
        let mut s = base;
        s.classes = 2;
        s.forget = vec![0, 1];
        assert!(synth(&s).is_err());
    }
}
