use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dynamics are singular at t = {t}; start from a regularized state")]
    Singularity { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    Stiffness {
        t: f64,
        h: f64,
        /// Last accepted position.
        x: Vec<f64>,
        /// Last accepted velocity.
        v: Vec<f64>,
    },

    #[error("non-finite state encountered at t = {t}")]
    Divergence { t: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("starting point is a minimizer (gradient norm {grad_norm:e})")]
    AtMinimizer { grad_norm: f64 },

    #[error("no speed peak before the horizon t_cap = {t_cap}")]
    Horizon { t_cap: f64 },

    #[error("{what} = {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("rate certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("bound not checkable: {0}")]
    NotCheckable(String),

    #[error("t = {t} outside covered range [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },

    #[error("insufficient data: {usable} usable samples, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_segment(self, index: usize) -> Self {
        Error::Segment {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
