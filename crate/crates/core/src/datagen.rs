//! Seeded synthetic datasets with corrupted responses.
//!
//! Features are i.i.d. standard Gaussian. Exactly `⌊α*n⌋` rows are clean,
//! `y = ω(φᵀθ*) + e`, and the remaining rows are bad, `y = r + e`, where the
//! corruption model supplies `r`. Noise is `e ~ N(0, σ²)`. The clean/bad
//! assignment is a uniform shuffle.
//!
//! Draw order from the data stream, which is part of the reproducibility
//! contract: `θ*` (if random), extra model vectors, features row by row, the
//! row shuffle, noise for every row, then random outputs for bad rows in
//! index order.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::glm::{fraction_count, Dataset, LinkFunction, Truth};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStar {
    /// Uniformly random unit vector.
    Unit,
    Given(DVector<f64>),
}

/// How an additional model vector is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSpec {
    RandomUnit,
    /// Random unit vector orthogonal to `θ*` and to earlier components.
    OrthogonalUnit,
    Given(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionModel {
    /// No bad rows; requires `α* = 1`.
    None,
    /// Arbitrary corruption fixture: `r = value`.
    Constant { value: f64 },
    /// Arbitrary corruption fixture: `r = ω(φᵀθ_adv) + offset`.
    AdversarialModel { theta_adv: ComponentSpec, offset: f64 },
    /// `r ~ N(0, std²)`, independent of the features.
    RandomOutput { std: f64 },
    /// Mixture of linear models. `weights[0]` is the clean fraction (the
    /// `θ*` component) and `weights[j]` belongs to `components[j − 1]`.
    Mixture { components: Vec<ComponentSpec>, weights: Vec<f64> },
}

impl CorruptionModel {
    /// Two components: `θ*` with weight `alpha_star` and an orthogonal unit
    /// vector with the rest.
    pub fn two_component_mixture(alpha_star: f64) -> Self {
        CorruptionModel::Mixture {
            components: vec![ComponentSpec::OrthogonalUnit],
            weights: vec![alpha_star, 1.0 - alpha_star],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub d: usize,
    /// Fraction of clean rows.
    pub alpha_star: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub link: LinkFunction,
    pub corruption: CorruptionModel,
    pub theta_star: ThetaStar,
    pub seed: u64,
}

impl GenConfig {
    /// Random-output corruption with `r ~ N(0, 1)` and identity link.
    pub fn random_output(n: usize, d: usize, alpha_star: f64, sigma: f64, seed: u64) -> Self {
        GenConfig {
            n,
            d,
            alpha_star,
            sigma,
            link: LinkFunction::Identity,
            corruption: CorruptionModel::RandomOutput { std: 1.0 },
            theta_star: ThetaStar::Unit,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::config(format!("n and d must be positive, got n={} d={}", self.n, self.d)));
        }
        if !(self.alpha_star > 0.0 && self.alpha_star <= 1.0) {
            return Err(Error::config(format!("alpha_star must lie in (0, 1], got {}", self.alpha_star)));
        }
        if fraction_count(self.alpha_star, self.n) == 0 {
            return Err(Error::config("alpha_star * n leaves no clean rows"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be finite and non-negative, got {}", self.sigma)));
        }
        self.link.validate()?;
        if let ThetaStar::Given(t) = &self.theta_star {
            self.check_vector(t)?;
        }
        match &self.corruption {
            CorruptionModel::None => {
                if fraction_count(self.alpha_star, self.n) != self.n {
                    return Err(Error::config("corruption 'none' requires alpha_star = 1"));
                }
            }
            CorruptionModel::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::config("constant corruption value must be finite"));
                }
            }
            CorruptionModel::AdversarialModel { theta_adv, offset } => {
                if !offset.is_finite() {
                    return Err(Error::config("adversarial offset must be finite"));
                }
                self.check_component(theta_adv, 1)?;
            }
            CorruptionModel::RandomOutput { std } => {
                if !(*std > 0.0 && std.is_finite()) {
                    return Err(Error::config(format!("random output std must be positive, got {std}")));
                }
            }
            CorruptionModel::Mixture { components, weights } => {
                if weights.len() != components.len() + 1 {
                    return Err(Error::config(format!(
                        "mixture needs one weight per component plus the clean weight, got {} weights for {} components",
                        weights.len(),
                        components.len()
                    )));
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::config("mixture weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("mixture weights must sum to 1, got {total}")));
                }
                if (weights[0] - self.alpha_star).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "clean mixture weight {} differs from alpha_star {}",
                        weights[0], self.alpha_star
                    )));
                }
                for (j, c) in components.iter().enumerate() {
                    self.check_component(c, j + 1)?;
                }
            }
        }
        Ok(())
    }

    fn check_vector(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, actual: v.len() });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::config("model vectors must be finite"));
        }
        Ok(())
    }

    /// `earlier` counts the vectors an orthogonal component must avoid.
    fn check_component(&self, c: &ComponentSpec, earlier: usize) -> Result<()> {
        match c {
            ComponentSpec::Given(v) => self.check_vector(v),
            ComponentSpec::OrthogonalUnit if self.d <= earlier => Err(Error::config(format!(
                "an orthogonal component needs d > {earlier}, got d = {}",
                self.d
            ))),
            _ => Ok(()),
        }
    }
}

fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = gaussian_vector(d, rng);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Random unit vector orthogonal to every vector in `basis`.
fn orthogonal_unit<R: Rng + ?Sized>(basis: &[DVector<f64>], d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let mut v = gaussian_vector(d, rng);
        // Two passes of Gram-Schmidt bring the residual overlap to rounding level.
        for _ in 0..2 {
            for b in basis {
                let bb = b.norm_squared();
                if bb > 0.0 {
                    v -= b * (v.dot(b) / bb);
                }
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

fn resolve_component<R: Rng + ?Sized>(spec: &ComponentSpec, basis: &[DVector<f64>], d: usize, rng: &mut R) -> DVector<f64> {
    match spec {
        ComponentSpec::Given(v) => v.clone(),
        ComponentSpec::RandomUnit => random_unit(d, rng),
        ComponentSpec::OrthogonalUnit => orthogonal_unit(basis, d, rng),
    }
}

/// Generates a dataset. Mixture corruption is delegated to
/// [`generate_mixture`].
pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    if matches!(config.corruption, CorruptionModel::Mixture { .. }) {
        return generate_mixture(config);
    }
    let (n, d) = (config.n, config.d);
    let mut rng = stream(config.seed, Purpose::Data);

    let theta_star = match &config.theta_star {
        ThetaStar::Unit => random_unit(d, &mut rng),
        ThetaStar::Given(t) => t.clone(),
    };
    let theta_adv = match &config.corruption {
        CorruptionModel::AdversarialModel { theta_adv, .. } => {
            Some(resolve_component(theta_adv, std::slice::from_ref(&theta_star), d, &mut rng))
        }
        _ => None,
    };
    let features = gaussian_features(n, d, &mut rng);

    let n_clean = fraction_count(config.alpha_star, n);
    let mut clean_mask: Vec<bool> = (0..n).map(|i| i < n_clean).collect();
    clean_mask.shuffle(&mut rng);
    let noise: Vec<f64> = (0..n).map(|_| config.sigma * rng.sample::<f64, _>(StandardNormal)).collect();

    let link = config.link;
    let mut responses = DVector::zeros(n);
    for i in 0..n {
        let row = features.row(i).transpose();
        let base = if clean_mask[i] {
            link.value(row.dot(&theta_star))
        } else {
            match &config.corruption {
                CorruptionModel::Constant { value } => *value,
                CorruptionModel::AdversarialModel { offset, .. } => {
                    link.value(row.dot(theta_adv.as_ref().expect("resolved above"))) + offset
                }
                CorruptionModel::RandomOutput { std } => std * rng.sample::<f64, _>(StandardNormal),
                CorruptionModel::None | CorruptionModel::Mixture { .. } => unreachable!("validated"),
            }
        };
        responses[i] = base + noise[i];
    }

    let component_id = clean_mask.iter().map(|&c| c.then_some(0)).collect();
    Dataset::new(features, responses, link)?.with_truth(Truth {
        theta_star: vec![theta_star],
        clean_mask,
        component_id,
    })
}

/// Mixture of linear models: row `i` of component `j` has
/// `y = ω(φᵀθ*₍ⱼ₎) + e`. Component 0 is `θ*` and its rows are the clean ones.
/// Component sizes are `⌊wⱼn⌋` for `j ≥ 1` except the last, which takes
/// whatever `⌊w₀n⌋` and the others leave.
pub fn generate_mixture(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let CorruptionModel::Mixture { components, weights } = &config.corruption else {
        return Err(Error::config("generate_mixture requires mixture corruption"));
    };
    let (n, d) = (config.n, config.d);
    let mut rng = stream(config.seed, Purpose::Data);

    let mut models = vec![match &config.theta_star {
        ThetaStar::Unit => random_unit(d, &mut rng),
        ThetaStar::Given(t) => t.clone(),
    }];
    for spec in components {
        let v = resolve_component(spec, &models, d, &mut rng);
        models.push(v);
    }
    let features = gaussian_features(n, d, &mut rng);

    let mut counts = vec![0usize; weights.len()];
    counts[0] = fraction_count(weights[0], n);
    let mut assigned = counts[0];
    let last = weights.len() - 1;
    for j in 1..last {
        counts[j] = fraction_count(weights[j], n).min(n - assigned);
        assigned += counts[j];
    }
    counts[last] += n - assigned;

    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j, c)).collect();
    labels.shuffle(&mut rng);
    let noise: Vec<f64> = (0..n).map(|_| config.sigma * rng.sample::<f64, _>(StandardNormal)).collect();

    let link = config.link;
    let responses = DVector::from_fn(n, |i, _| {
        link.value(features.row(i).transpose().dot(&models[labels[i]])) + noise[i]
    });
    let clean_mask = labels.iter().map(|&j| j == 0).collect();
    Dataset::new(features, responses, link)?.with_truth(Truth {
        theta_star: models,
        clean_mask,
        component_id: labels.into_iter().map(Some).collect(),
    })
}

fn gaussian_features<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            features[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    features
}
