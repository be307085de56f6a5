use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("micro time step {dt:e} exceeds the explicit stability bound {bound:e}")]
    MicroUnstable { dt: f64, bound: f64 },

    #[error("buffer_too_small: influence radius {radius:e} exceeds the available buffer {available:e}")]
    BufferTooSmall { radius: f64, available: f64 },

    #[error("tooth_not_covered: samples span [{have_lo}, {have_hi}] but the tooth is [{need_lo}, {need_hi}]")]
    ToothNotCovered {
        have_lo: f64,
        have_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("finite-difference microsolver has no stencil for derivative order {0}")]
    UnsupportedOrder(u32),

    #[error("tooth {index}: {source}")]
    Tooth { index: usize, source: Box<Error> },

    #[error("evaluation budget exhausted: {used} used, {requested} more requested of {budget}")]
    BudgetExhausted {
        used: usize,
        requested: usize,
        budget: usize,
        partial: Option<f64>,
    },

    #[error("integration blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("step-halving self-consistency failed: relative deviation {deviation:e} exceeds {tolerance:e}")]
    StepSelfConsistency { deviation: f64, tolerance: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_tooth(self, index: usize) -> Self {
        Error::Tooth {
            index,
            source: Box::new(self),
        }
    }
}
