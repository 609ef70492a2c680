use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite coordinate")]
    NonFinite,

    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),

    #[error("matching type id {0} out of range 0..24")]
    InvalidMatchingId(u8),

    #[error("not a permutation of 0..4: {0:?}")]
    InvalidPermutation([u8; 4]),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("bin {bin} out of range for grid of {m} bins")]
    BinOutOfRange { bin: i64, m: u32 },

    #[error("score vector is empty")]
    EmptyScoreVector,

    #[error("score vector entry {value} at {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },

    #[error("expected 8 key-edge score vectors, got {0}")]
    WrongVectorCount(usize),

    #[error("gamma {0} outside [0, 2]")]
    GammaOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short name used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite => "non_finite",
            Error::DegenerateQuad(_) => "degenerate_quad",
            Error::InvalidMatchingId(_) => "invalid_matching_id",
            Error::InvalidPermutation(_) => "invalid_permutation",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::BinOutOfRange { .. } => "bin_out_of_range",
            Error::EmptyScoreVector => "empty_score_vector",
            Error::ScoreOutOfRange { .. } => "score_out_of_range",
            Error::WrongVectorCount(_) => "wrong_vector_count",
            Error::GammaOutOfRange(_) => "gamma_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
