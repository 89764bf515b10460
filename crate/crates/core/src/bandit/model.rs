use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::covariance::CovarianceState;
use super::net::{Layer, RewardNet};
use crate::domain::TrialTriple;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Radicands down to this value are treated as rounding noise.
const RADICAND_SLACK: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditParams<T> {
    /// Exploration coefficient.
    pub alpha: T,
    /// Regularization weight; `D` starts at `lambda I`.
    pub lambda: T,
    /// Gradient-descent step size.
    pub learning_rate: T,
    /// Observations per training step.
    pub batch_size: usize,
    /// Candidate capacities (arms), strictly increasing.
    pub candidates: Vec<u32>,
}

impl<T: Real> BanditParams<T> {
    pub fn from_config(cfg: &crate::config::EngineConfig) -> Self {
        BanditParams {
            alpha: T::of(cfg.alpha),
            lambda: T::of(cfg.lambda),
            learning_rate: T::of(cfg.learning_rate),
            batch_size: cfg.batch_size,
            candidates: cfg.candidate_capacities.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidConfig("candidate capacities must be nonempty".into()));
        }
        if self.candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("candidate capacities must be strictly increasing".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lambda > T::zero()) {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        Ok(())
    }
}

/// Neural-UCB capacity estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditModel<T> {
    net: RewardNet<T>,
    cov: CovarianceState<T>,
    buffer: Vec<TrialTriple<T>>,
    params: BanditParams<T>,
    /// Leading layers excluded from training.
    frozen_layers: usize,
    train_steps: u64,
}

impl<T: Real> BanditModel<T> {
    /// Fresh model with a Gaussian-initialized network
    /// `feature_dim + 1 -> hidden... -> 1`.
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, hidden: &[usize], params: BanditParams<T>, rng: &mut R) -> Result<Self> {
        Self::from_net(RewardNet::new(feature_dim + 1, hidden, rng), params)
    }

    pub fn from_net(net: RewardNet<T>, params: BanditParams<T>) -> Result<Self> {
        params.validate()?;
        let cov = CovarianceState::new(net.param_count(), params.lambda);
        Ok(BanditModel { net, cov, buffer: Vec::new(), params, frozen_layers: 0, train_steps: 0 })
    }

    pub fn net(&self) -> &RewardNet<T> {
        &self.net
    }

    pub fn covariance(&self) -> &CovarianceState<T> {
        &self.cov
    }

    pub fn params(&self) -> &BanditParams<T> {
        &self.params
    }

    pub fn set_alpha(&mut self, alpha: T) {
        self.params.alpha = alpha;
    }

    pub fn buffer(&self) -> &[TrialTriple<T>] {
        &self.buffer
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn frozen_layers(&self) -> usize {
        self.frozen_layers
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_dim() - 1
    }

    /// Capacity min-max scaled onto `[0, 1]` over the candidate range.
    pub fn scale_capacity(&self, capacity: u32) -> T {
        let lo = self.params.candidates[0] as f64;
        let hi = *self.params.candidates.last().expect("nonempty") as f64;
        if hi > lo {
            T::of((capacity as f64 - lo) / (hi - lo))
        } else {
            T::zero()
        }
    }

    pub fn predict(&self, context: &[T], capacity: u32) -> Result<T> {
        self.net.forward(context, self.scale_capacity(capacity))
    }

    pub fn gradient(&self, context: &[T], capacity: u32) -> Result<Vec<T>> {
        self.net.gradient(context, self.scale_capacity(capacity))
    }

    /// `S(x, c) + alpha * sqrt(g^T D^{-1} g)`.
    pub fn ucb_score(&self, context: &[T], capacity: u32) -> Result<T> {
        let (s, g) = self.net.value_and_gradient(context, self.scale_capacity(capacity))?;
        Ok(s + self.params.alpha * self.bonus_radius(&g)?)
    }

    /// `sqrt(g^T D^{-1} g)`, with tiny negative radicands clamped to zero.
    pub fn bonus_radius(&self, g: &[T]) -> Result<T> {
        let q = self.cov.quad_form(g)?;
        if q < T::zero() {
            if q.f64() < RADICAND_SLACK {
                return Err(Error::NegativeRadicand(q.f64()));
            }
            return Ok(T::zero());
        }
        Ok(q.sqrt())
    }

    /// Arm with the largest UCB score; ties go to the smaller capacity.
    pub fn estimate_capacity(&self, context: &[T]) -> Result<u32> {
        Ok(self.estimate_with_gradient(context)?.0)
    }

    fn estimate_with_gradient(&self, context: &[T]) -> Result<(u32, Vec<T>)> {
        let mut best: Option<(u32, T, Vec<T>)> = None;
        for &c in &self.params.candidates {
            let (s, g) = self.net.value_and_gradient(context, self.scale_capacity(c))?;
            let score = s + self.params.alpha * self.bonus_radius(&g)?;
            if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
                best = Some((c, score, g));
            }
        }
        let (c, _, g) = best.expect("candidates nonempty");
        Ok((c, g))
    }

    /// Chooses an arm and folds its gradient into the covariance, in that
    /// order.
    pub fn choose(&mut self, context: &[T]) -> Result<u32> {
        let (c, g) = self.estimate_with_gradient(context)?;
        self.update_covariance(&g)?;
        Ok(c)
    }

    pub fn update_covariance(&mut self, g: &[T]) -> Result<()> {
        self.cov.update(g)
    }

    /// Buffers a trial; trains on the full buffer and clears it once it
    /// holds `batch_size` trials, returning that step's loss.
    pub fn observe(&mut self, triple: TrialTriple<T>) -> Result<Option<T>> {
        if triple.context.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch { expected: self.feature_dim(), actual: triple.context.len() });
        }
        self.buffer.push(triple);
        if self.buffer.len() < self.params.batch_size {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.buffer);
        self.train_step(&batch).map(Some)
    }

    /// `sum (S(x, w) - s)^2 + lambda |θ|^2`.
    pub fn loss(&self, batch: &[TrialTriple<T>]) -> Result<T> {
        let mut total = T::zero();
        for o in batch {
            let e = self.predict(&o.context, o.workload)? - o.reward;
            total = total + e * e;
        }
        Ok(total + self.params.lambda * self.net.squared_norm())
    }

    /// Loss and its gradient in parameter order. Frozen layers contribute
    /// zeros.
    pub fn loss_and_gradient(&self, batch: &[TrialTriple<T>]) -> Result<(T, Vec<T>)> {
        let two = T::of(2.0);
        let theta = self.net.params();
        let mut grad: Vec<T> = theta.iter().map(|&w| two * self.params.lambda * w).collect();
        let mut total = T::zero();
        for o in batch {
            let (s, g) = self.net.value_and_gradient(&o.context, self.scale_capacity(o.workload))?;
            let e = s - o.reward;
            total = total + e * e;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc = *acc + two * e * gi;
            }
        }
        total = total + self.params.lambda * self.net.squared_norm();
        let frozen_end = self.net.layer_offset(self.frozen_layers);
        grad[..frozen_end].iter_mut().for_each(|g| *g = T::zero());
        Ok((total, grad))
    }

    /// One full-batch gradient step; returns the loss before the step.
    pub fn train_step(&mut self, batch: &[TrialTriple<T>]) -> Result<T> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        let mut theta = self.net.params();
        for (w, g) in theta.iter_mut().zip(&grad) {
            *w = *w - self.params.learning_rate * *g;
        }
        self.net.set_params(&theta)?;
        self.train_steps += 1;
        Ok(loss)
    }

    /// Broker-specific copy: the first `L - 1` layers are frozen, the last
    /// layer is fine-tuned with `steps` full-batch steps on the broker's own
    /// trials, and the covariance restarts at `I / lambda`. An empty trial
    /// list yields an unmodified copy.
    pub fn personalize(&self, broker_trials: &[TrialTriple<T>], steps: usize) -> Result<Self> {
        if broker_trials.is_empty() {
            return Ok(self.clone());
        }
        let mut m = self.clone();
        m.frozen_layers = self.net.depth() - 1;
        m.cov.reset();
        m.buffer.clear();
        if steps == 0 {
            return Ok(m);
        }
        let hidden = broker_trials
            .iter()
            .map(|t| m.net.last_layer_input(&t.context, m.scale_capacity(t.workload)))
            .collect::<Result<Vec<_>>>()?;
        let two = T::of(2.0);
        let (lambda, rate) = (m.params.lambda, m.params.learning_rate);
        let last = m.net.last_layer_mut();
        for _ in 0..steps {
            let mut grad: Vec<T> = last.weights.iter().map(|&w| two * lambda * w).collect();
            for (h, t) in hidden.iter().zip(broker_trials) {
                let e = last.dot_row(0, h) - t.reward;
                for (acc, &x) in grad.iter_mut().zip(h) {
                    *acc = *acc + two * e * x;
                }
            }
            for (w, g) in last.weights.iter_mut().zip(&grad) {
                *w = *w - rate * *g;
            }
        }
        m.train_steps += steps as u64;
        Ok(m)
    }

    /// Bytes of the frozen layers, for freeze checks.
    pub fn layer_bytes(&self, layers: std::ops::Range<usize>) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.net.layers()[layers] {
            out.extend_from_slice(&(l.rows as u64).to_le_bytes());
            out.extend_from_slice(&(l.cols as u64).to_le_bytes());
            for w in &l.weights {
                out.extend_from_slice(&w.f64().to_le_bytes());
            }
        }
        out
    }
}

/// Versioned, self-describing checkpoint of a bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSnapshot<T> {
    pub version: u32,
    pub layers: Vec<Layer<T>>,
    /// Row-major `D^{-1}`.
    pub covariance_inverse: Vec<T>,
    pub lambda: T,
    pub buffer: Vec<TrialTriple<T>>,
    pub params: BanditParams<T>,
    pub frozen_layers: usize,
    pub train_steps: u64,
}

pub const SNAPSHOT_VERSION: u32 = 1;

impl<T: Real + Serialize + DeserializeOwned> BanditModel<T> {
    pub fn snapshot(&self) -> BanditSnapshot<T> {
        BanditSnapshot {
            version: SNAPSHOT_VERSION,
            layers: self.net.layers().to_vec(),
            covariance_inverse: self.cov.inverse(),
            lambda: self.cov.lambda(),
            buffer: self.buffer.clone(),
            params: self.params.clone(),
            frozen_layers: self.frozen_layers,
            train_steps: self.train_steps,
        }
    }

    pub fn restore(s: BanditSnapshot<T>) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported snapshot version {}", s.version)));
        }
        s.params.validate()?;
        let net = RewardNet::from_layers(s.layers)?;
        let d = net.param_count();
        let mut cov = CovarianceState::from_inverse(d, s.lambda, s.covariance_inverse)?;
        if cov.inverse() == CovarianceState::new(d, s.lambda).inverse() {
            cov.reset();
        }
        if s.frozen_layers >= net.depth().max(1) && s.frozen_layers != 0 {
            return Err(Error::InvalidConfig("every layer frozen".into()));
        }
        Ok(BanditModel {
            net,
            cov,
            buffer: s.buffer,
            params: s.params,
            frozen_layers: s.frozen_layers,
            train_steps: s.train_steps,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.snapshot())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::restore(serde_json::from_str(s)?)
    }
}
