//! Seedable random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`: the seed
//! fills the key and the stream id selects the ChaCha stream, so two streams
//! with the same seed never share keystream blocks. Monte Carlo replicate `r`
//! uses stream id `r`; nested consumers derive child streams with
//! [`RngStream::substream`], which keeps results independent of how work is
//! scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive a child stream. The child depends only on `(seed, stream_id, key)`,
    /// never on how many draws the parent has made.
    pub fn substream(&self, key: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream::new(self.seed, id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn std_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn sample_std_normal(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.std_normal()).collect()
    }

    pub fn sample_chisq(&mut self, df: u64) -> Result<f64> {
        if df == 0 {
            return Err(Error::invalid("chi-square degrees of freedom must be >= 1"));
        }
        let dist = ChiSquared::new(df as f64).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(dist.sample(&mut self.rng))
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

/// Multivariate normal sampler with a cached lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    chol_lower: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            chol_lower: chol.unpack(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `k` rows drawn as `mean + L z`.
    pub fn sample(&self, rng: &mut RngStream, k: usize) -> DMatrix<f64> {
        let q = self.dim();
        // z is q x k so each column is one draw; transposed at the end.
        let z = DMatrix::from_fn(q, k, |_, _| rng.std_normal());
        let mut draws = &self.chol_lower * z;
        for mut col in draws.column_iter_mut() {
            col += &self.mean;
        }
        draws.transpose()
    }
}

/// One-shot multivariate normal sampling: `k x q` matrix of iid rows.
pub fn sample_mvn(
    rng: &mut RngStream,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    Ok(MvnSampler::new(mean.clone(), cov)?.sample(rng, k))
}
