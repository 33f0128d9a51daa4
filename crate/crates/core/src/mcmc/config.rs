use super::McmcError;

/// Run lengths and seeding for [`run_sampler`](super::run_sampler).
///
/// `samples` post-burn-in iterations are run per chain and every `thin`-th
/// one is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::paper(0)
    }
}

impl SamplerConfig {
    /// 50k burn-in and 100k retained iterations on four chains.
    pub fn paper(seed: u64) -> Self {
        Self { n_chains: 4, burn_in: 50_000, samples: 100_000, thin: 1, seed, adapt_window: 100 }
    }

    /// 5k burn-in and 20k retained iterations on four chains.
    pub fn desk(seed: u64) -> Self {
        Self { n_chains: 4, burn_in: 5_000, samples: 20_000, thin: 1, seed, adapt_window: 100 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn retained(&self) -> usize {
        self.samples / self.thin
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        if self.n_chains == 0 {
            return Err(McmcError::Config("n_chains must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(McmcError::Config("samples must be positive".into()));
        }
        if self.thin == 0 {
            return Err(McmcError::Config("thin must be at least 1".into()));
        }
        if self.samples < self.thin {
            return Err(McmcError::Config("samples must be at least thin".into()));
        }
        if self.adapt_window == 0 {
            return Err(McmcError::Config("adapt_window must be positive".into()));
        }
        Ok(())
    }
}
