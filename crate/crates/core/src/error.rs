use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The drive detuning is too large for the phase kick to hold the spin.
    #[error("outside locking range: |4 tan(alpha) / beta^2| = {ratio}")]
    OutsideLockingRange { ratio: f64 },
    /// More nuclei than the dense engine supports.
    #[error("{0} nuclei requested; the engine supports at most {max}", max = crate::dm::MAX_NUCLEI)]
    Dimension(usize),
    /// An input lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// One or more configuration invariants are violated.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    /// No spectral bin rises above the detection threshold.
    #[error("no peak above {threshold} baseline standard deviations")]
    PeakNotFound { threshold: f64 },
    /// The requested frequency band holds too few bins.
    #[error("band {lo} Hz .. {hi} Hz holds fewer than two bins or has zero spread")]
    EmptyBand { lo: f64, hi: f64 },
    /// Input too small or too uniform to fit.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
