use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("flux jacobian is degenerate at xi = 0 when delta = 0 and p < 2")]
    DegeneratePoint,

    #[error("solver exceeded {max_iter} iterations, last residual {residual:.6e}")]
    MaxIterExceeded { max_iter: usize, residual: f64 },

    #[error("line search could not restore a finite energy")]
    NonFiniteEnergy,

    #[error("line search stalled with residual {residual:.6e}")]
    LineSearchStall { residual: f64 },

    #[error("gradient ({0}, {1}) falls outside the tabulated range |xi|_inf <= {2}")]
    OutOfTable(f64, f64, f64),

    #[error("mesh has {elems_per_cell} elements per cell; at least 8 are required")]
    MeshTooCoarse { elems_per_cell: usize },

    #[error("mesh of {mesh_n} elements per side is not nested in the 1/{k} cell tiling")]
    MeshNotNested { mesh_n: usize, k: u32 },

    #[error("monotone root find failed to converge: {0}")]
    RootFind(String),

    #[error("discretizations do not match: {0}")]
    MeshMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MaxIterExceeded { .. }
                | Error::NonFiniteEnergy
                | Error::LineSearchStall { .. }
                | Error::DegeneratePoint
                | Error::OutOfTable(..)
                | Error::RootFind(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
