use crate::geometry::Point;
use thiserror::Error;

pub type Result<T, E = QceError> = std::result::Result<T, E>;

/// Failure modes of the embedded discretization and solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the computational domain", x = .0.x, y = .0.y)]
    OutsideDomain(Point),

    #[error("degenerate cell: {0}")]
    DegenerateCell(String),

    #[error("moment matrix not invertible at ({x}, {y}) for {subdomain} (condition estimate {condition:e}, {neighbors} visible nodes){context}",
        x = .point.x, y = .point.y)]
    Coverage {
        point: Point,
        subdomain: String,
        condition: f64,
        neighbors: usize,
        context: String,
    },

    #[error("inclusion under-resolved: {0}")]
    UnderResolvedInclusion(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("duplicate node at ({x}, {y})", x = .0.x, y = .0.y)]
    DuplicateNode(Point),

    #[error("node {node} influences no integrated cell but has residual {residual:e}")]
    IsolatedNode { node: usize, residual: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid inclusion layout: {0}")]
    InvalidLayout(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl QceError {
    /// Attach the id of the smoothing cell being processed to a coverage failure.
    pub fn in_cell(self, cell: usize) -> Self {
        match self {
            QceError::Coverage {
                point,
                subdomain,
                condition,
                neighbors,
                ..
            } => QceError::Coverage {
                point,
                subdomain,
                condition,
                neighbors,
                context: format!(" in smoothing cell {cell}"),
            },
            other => other,
        }
    }

    /// True for geometry and coverage failures (CLI exit code 3).
    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            QceError::OutsideDomain(_)
                | QceError::DegenerateCell(_)
                | QceError::Coverage { .. }
                | QceError::UnderResolvedInclusion(_)
                | QceError::GridMismatch(_)
                | QceError::DuplicateNode(_)
                | QceError::InvalidLayout(_)
                | QceError::Geometry(_)
        )
    }
}

impl From<std::io::Error> for QceError {
    fn from(e: std::io::Error) -> Self {
        QceError::Io(e.to_string())
    }
}
