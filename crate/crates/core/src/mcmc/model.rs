use rand_chacha::ChaCha8Rng;

/// Per-chain random stream.
pub type ChainRng = ChaCha8Rng;

/// Support of a scalar parameter; decides the Metropolis proposal scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Random walk on the identity scale.
    Real,
    /// `(0, inf)`, random walk on `log x`.
    Positive,
    /// `(0, 1)`, random walk on `logit x`.
    UnitInterval,
}

impl Support {
    pub(crate) fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Support::Real => x,
            Support::Positive => x.ln(),
            Support::UnitInterval => (x / (1.0 - x)).ln(),
        }
    }

    pub(crate) fn from_unconstrained(self, u: f64) -> f64 {
        match self {
            Support::Real => u,
            Support::Positive => u.exp(),
            Support::UnitInterval => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// log |dx/du| at `x`.
    pub(crate) fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Support::Real => 0.0,
            Support::Positive => x.ln(),
            Support::UnitInterval => x.ln() + (1.0 - x).ln(),
        }
    }

    /// Strict membership; proposals landing on a boundary through
    /// rounding are rejected.
    pub fn contains(self, x: f64) -> bool {
        match self {
            Support::Real => x.is_finite(),
            Support::Positive => x.is_finite() && x > 0.0,
            Support::UnitInterval => x > 0.0 && x < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub support: Support,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, support: Support) -> Self {
        Self { name: name.into(), support }
    }
}

/// A target density the sampler can run on.
///
/// `gibbs_sweep` performs every closed-form conditional draw the model
/// knows; the parameters listed by `metropolis_params` are then updated
/// one at a time by random-walk Metropolis using `log_conditional`.
pub trait Model: Sync {
    fn params(&self) -> &[ParamSpec];

    fn initial_state(&self) -> Vec<f64>;

    /// Log joint density (up to a constant) on the natural scale.
    fn log_joint(&self, theta: &[f64]) -> f64;

    /// Log density terms that involve `theta[index]`. Must differ from
    /// `log_joint` only by terms that do not depend on that parameter.
    fn log_conditional(&self, theta: &[f64], _index: usize) -> f64 {
        self.log_joint(theta)
    }

    fn gibbs_sweep(&self, _theta: &mut [f64], _rng: &mut ChainRng) {}

    fn metropolis_params(&self) -> Vec<usize>;

    /// Initial random-walk step on the unconstrained scale.
    fn initial_step(&self, _index: usize) -> f64 {
        0.5
    }
}
