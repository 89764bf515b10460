use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::{BanditModel, BanditParams};
use crate::config::EngineConfig;
use crate::domain::{BrokerId, TrialTriple};
use crate::error::Result;
use crate::simgen::{self, World, AFFINITY_RANGE};

/// Daily capacity estimation from a pooled neural-UCB model, optionally
/// personalized per broker from that broker's own trials.
#[derive(Debug, Clone)]
pub struct CapacityEstimator {
    pub base: BanditModel<f64>,
    trials: Vec<Vec<TrialTriple<f64>>>,
    personalized: bool,
    finetune_steps: usize,
}

impl CapacityEstimator {
    pub fn new(base: BanditModel<f64>, n_brokers: usize, personalized: bool, cfg: &EngineConfig) -> Self {
        CapacityEstimator {
            base,
            trials: vec![Vec::new(); n_brokers],
            personalized,
            finetune_steps: cfg.finetune_steps,
        }
    }

    /// Fresh pooled model for `world`, seeded from the engine seed.
    pub fn fresh(world: &World, personalized: bool, cfg: &EngineConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(10);
        let base = BanditModel::new(world.config.feature_dim, &cfg.layer_sizes, BanditParams::from_config(cfg), &mut rng)?;
        Ok(Self::new(base, world.brokers.len(), personalized, cfg))
    }

    /// Fresh model pretrained on `cfg.warmup_days` of exploratory history,
    /// in which every broker served a uniformly drawn candidate capacity
    /// each day and reported its noisy outcome. The history is replayed
    /// `cfg.pretrain_epochs` times in shuffled mini-batches. The pooled
    /// covariance absorbs the history unless personalized copies, which
    /// rebuild their own, are in use.
    pub fn warm_started(world: &World, personalized: bool, cfg: &EngineConfig) -> Result<Self> {
        let mut est = Self::fresh(world, personalized, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(11);
        let mut history = Vec::with_capacity(cfg.warmup_days as usize * world.brokers.len());
        for _ in 0..cfg.warmup_days {
            for b in &world.brokers {
                let c = cfg.candidate_capacities[rng.random_range(0..cfg.candidate_capacities.len())];
                let s = exploratory_reward(world, b.id, c, &mut rng);
                let t = TrialTriple::new(b.features.clone(), c, s);
                if personalized {
                    est.trials[b.id.0 as usize].push(t.clone());
                }
                history.push(t);
            }
        }
        for _ in 0..cfg.pretrain_epochs {
            history.shuffle(&mut rng);
            for chunk in history.chunks(cfg.batch_size) {
                est.base.train_step(chunk)?;
            }
        }
        if !personalized {
            for t in &history {
                let g = est.base.gradient(&t.context, t.workload)?;
                est.base.update_covariance(&g)?;
            }
        }
        Ok(est)
    }

    pub fn is_personalized(&self) -> bool {
        self.personalized
    }

    pub fn trials(&self, broker: BrokerId) -> &[TrialTriple<f64>] {
        &self.trials[broker.0 as usize]
    }

    /// Model used for `broker` today: the pooled model fine-tuned on the
    /// broker's trials, whose gradients then refill the restarted
    /// covariance.
    pub fn model_for(&self, broker: BrokerId) -> Result<BanditModel<f64>> {
        let trials = self.trials(broker);
        let mut m = self.base.personalize(trials, self.finetune_steps)?;
        for t in trials {
            let g = m.gradient(&t.context, t.workload)?;
            m.update_covariance(&g)?;
        }
        Ok(m)
    }

    /// Capacity estimates for the day, one per broker in id order. The
    /// pooled path folds each chosen arm into the shared covariance.
    pub fn estimate_day(&mut self, contexts: &[(BrokerId, &[f64])]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(contexts.len());
        for &(b, x) in contexts {
            let c = if self.personalized { self.model_for(b)?.estimate_capacity(x)? } else { self.base.choose(x)? };
            out.push(c);
        }
        Ok(out)
    }

    pub fn feedback(&mut self, broker: BrokerId, trial: TrialTriple<f64>) -> Result<()> {
        if self.personalized {
            self.trials[broker.0 as usize].push(trial.clone());
        }
        self.base.observe(trial)?;
        Ok(())
    }
}

/// Per-request realized utility of serving `capacity` requests of random
/// affinity at a noisy sign-up rate.
fn exploratory_reward<R: Rng + ?Sized>(world: &World, b: BrokerId, capacity: u32, rng: &mut R) -> f64 {
    let gt = &world.truth;
    let q = gt.q[b.0 as usize];
    let rate = simgen::sample_signup_rate(gt, b, capacity, rng);
    let mut total = 0.0;
    for _ in 0..capacity {
        let a = rng.random_range(AFFINITY_RANGE.0..AFFINITY_RANGE.1);
        let eps = simgen::UTILITY_NOISE * (2.0 * rng.random::<f64>() - 1.0);
        let u = (q * a + eps).clamp(1e-6, 1.0);
        total += u * rate / q;
    }
    total / capacity.max(1) as f64
}
