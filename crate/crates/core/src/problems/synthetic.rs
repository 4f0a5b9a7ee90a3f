//! Separable test problem `Fᵢ(x) = sᵢ xᵢ + ε xᵢ²` with `sᵢ = decay^i`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::operator::{add_noise, JacobianOperator, Linearization, NoisyData, NonlinearProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub spectrum_decay: f64,
    pub nonlinearity_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    config: SyntheticConfig,
    scales: DVector<f64>,
    x_true: DVector<f64>,
}

/// Diagonal Jacobian `diag(sᵢ + 2εxᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalJacobian(pub DVector<f64>);

impl JacobianOperator for DiagonalJacobian {
    fn nrows(&self) -> usize {
        self.0.len()
    }

    fn ncols(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.component_mul(v)
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        self.0.component_mul(u)
    }
}

/// `x†` has entries drawn uniformly from `[0.5, 1.5]` with the given seed.
pub fn build_synthetic(
    n: usize,
    spectrum_decay: f64,
    nonlinearity_scale: f64,
    seed: u64,
) -> Result<SyntheticProblem> {
    SyntheticProblem::new(SyntheticConfig {
        n,
        spectrum_decay,
        nonlinearity_scale,
        seed,
    })
}

impl SyntheticProblem {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        if config.n < 2 {
            return Err(Error::InvalidArgument(format!("need n ≥ 2, got {}", config.n)));
        }
        if !(config.spectrum_decay > 0.0) || !config.nonlinearity_scale.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid synthetic parameters {config:?}")));
        }
        let scales = DVector::from_fn(config.n, |i, _| config.spectrum_decay.powi(i as i32));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let x_true = DVector::from_fn(config.n, |_, _| rng.random_range(0.5..1.5));
        Ok(Self {
            config,
            scales,
            x_true,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn scales(&self) -> &DVector<f64> {
        &self.scales
    }

    /// Exact data `F(x†)`.
    pub fn exact_data(&self) -> DVector<f64> {
        self.value(&self.x_true)
    }

    pub fn noisy_data(&self, delta: f64, seed: u64) -> Result<NoisyData> {
        add_noise(&self.exact_data(), delta, seed)
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let eps = self.config.nonlinearity_scale;
        DVector::from_fn(x.len(), |i, _| self.scales[i] * x[i] + eps * x[i] * x[i])
    }
}

impl NonlinearProblem for SyntheticProblem {
    type Jacobian = DiagonalJacobian;

    fn input_dim(&self) -> usize {
        self.config.n
    }

    fn output_dim(&self) -> usize {
        self.config.n
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point", self.config.n, x.len())?;
        Ok(self.value(x))
    }

    fn linearize(&self, x: &DVector<f64>) -> Result<Linearization<DiagonalJacobian>> {
        check_dim("point", self.config.n, x.len())?;
        let eps = self.config.nonlinearity_scale;
        let d = DVector::from_fn(x.len(), |i, _| self.scales[i] + 2.0 * eps * x[i]);
        Ok(Linearization {
            value: self.value(x),
            jacobian: DiagonalJacobian(d),
        })
    }

    fn known_solution(&self) -> Option<&DVector<f64>> {
        Some(&self.x_true)
    }
}
