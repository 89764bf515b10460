//! Inverse covariance `D^{-1}` for the exploration bonus, kept current with
//! Sherman–Morrison rank-1 updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Inverse<T> {
    /// `D^{-1} = s I`. Fresh states stay in this form until their first
    /// update, so per-broker copies cost nothing.
    Isotropic(T),
    /// `D^{-1} = s I - sum_k c_k a_k a_k^T` after a few updates.
    LowRank { scale: T, terms: Vec<(Vec<T>, T)> },
    /// Row-major `d x d`.
    Dense(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState<T> {
    dim: usize,
    lambda: T,
    inverse: Inverse<T>,
}

impl<T: Real> CovarianceState<T> {
    /// `D = lambda I`, so `D^{-1} = I / lambda`.
    pub fn new(dim: usize, lambda: T) -> Self {
        CovarianceState { dim, lambda, inverse: Inverse::Isotropic(T::one() / lambda) }
    }

    /// Wraps an explicit row-major inverse.
    pub fn from_inverse(dim: usize, lambda: T, inverse: Vec<T>) -> Result<Self> {
        if inverse.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, actual: inverse.len() });
        }
        Ok(CovarianceState { dim, lambda, inverse: Inverse::Dense(inverse) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn is_fresh(&self) -> bool {
        matches!(self.inverse, Inverse::Isotropic(_))
    }

    pub fn reset(&mut self) {
        self.inverse = Inverse::Isotropic(T::one() / self.lambda);
    }

    /// `D^{-1}` as a dense row-major matrix.
    pub fn inverse(&self) -> Vec<T> {
        match &self.inverse {
            Inverse::Dense(m) => m.clone(),
            Inverse::Isotropic(s) => self.dense_from(*s, &[]),
            Inverse::LowRank { scale, terms } => self.dense_from(*scale, terms),
        }
    }

    fn dense_from(&self, scale: T, terms: &[(Vec<T>, T)]) -> Vec<T> {
        let d = self.dim;
        let mut m = vec![T::zero(); d * d];
        for i in 0..d {
            m[i * d + i] = scale;
        }
        for (a, c) in terms {
            for i in 0..d {
                let ci = *c * a[i];
                for (v, &aj) in m[i * d..(i + 1) * d].iter_mut().zip(a) {
                    *v = *v - ci * aj;
                }
            }
        }
        symmetrize(&mut m, d);
        m
    }

    /// Low-rank terms kept before switching to the dense form.
    fn rank_limit(&self) -> usize {
        (self.dim / 8).max(4)
    }

    fn check(&self, g: &[T]) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: g.len() });
        }
        Ok(())
    }

    /// `D^{-1} g`.
    pub fn apply(&self, g: &[T]) -> Result<Vec<T>> {
        self.check(g)?;
        Ok(match &self.inverse {
            Inverse::Isotropic(s) => g.iter().map(|&x| x * *s).collect(),
            Inverse::LowRank { scale, terms } => {
                let mut out: Vec<T> = g.iter().map(|&x| x * *scale).collect();
                for (a, c) in terms {
                    let k = *c * dot(a, g);
                    for (o, &ai) in out.iter_mut().zip(a) {
                        *o = *o - k * ai;
                    }
                }
                out
            }
            Inverse::Dense(m) => m
                .chunks_exact(self.dim)
                .map(|row| row.iter().zip(g).fold(T::zero(), |a, (&r, &x)| a + r * x))
                .collect(),
        })
    }

    /// `g^T D^{-1} g`.
    pub fn quad_form(&self, g: &[T]) -> Result<T> {
        let dg = self.apply(g)?;
        Ok(dg.iter().zip(g).fold(T::zero(), |a, (&x, &y)| a + x * y))
    }

    /// Replaces `D^{-1}` by `(D + g g^T)^{-1}` and re-symmetrizes.
    pub fn update(&mut self, g: &[T]) -> Result<()> {
        let dg = self.apply(g)?;
        if dg.iter().all(|&x| x == T::zero()) {
            return Ok(());
        }
        let denom = T::one() + dg.iter().zip(g).fold(T::zero(), |a, (&x, &y)| a + x * y);
        if denom <= T::zero() {
            return Err(Error::NonPositiveDenominator(denom.f64()));
        }
        let coef = T::one() / denom;
        let limit = self.rank_limit();
        match &mut self.inverse {
            Inverse::Isotropic(s) => {
                let scale = *s;
                self.inverse = Inverse::LowRank { scale, terms: vec![(dg, coef)] };
                return Ok(());
            }
            Inverse::LowRank { terms, .. } if terms.len() < limit => {
                terms.push((dg, coef));
                return Ok(());
            }
            _ => {}
        }
        let d = self.dim;
        let mut m = match std::mem::replace(&mut self.inverse, Inverse::Dense(Vec::new())) {
            Inverse::Dense(m) => m,
            Inverse::LowRank { scale, terms } => self.dense_from(scale, &terms),
            Inverse::Isotropic(_) => unreachable!("handled above"),
        };
        for i in 0..d {
            let scaled = dg[i] * coef;
            let row = &mut m[i * d..(i + 1) * d];
            for (v, &dj) in row.iter_mut().zip(&dg) {
                *v = *v - scaled * dj;
            }
        }
        symmetrize(&mut m, d);
        self.inverse = Inverse::Dense(m);
        Ok(())
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn symmetrize<T: Real>(m: &mut [T], d: usize) {
    let half = T::of(0.5);
    for i in 0..d {
        for j in i + 1..d {
            let avg = (m[i * d + j] + m[j * d + i]) * half;
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
}
