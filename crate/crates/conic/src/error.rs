use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("point outside domain: {0}")]
    Domain(String),
    #[error("points lie on different sheets; distance is defined within a sheet only")]
    CrossSheet,
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("non-finite integrand value at node {node}")]
    Integration { node: usize },
    #[error("cubature infeasible at degree {degree}: best residual {residual:e}")]
    Infeasible { degree: usize, residual: f64 },
    #[error("function is not even in t: max |f(x,t) - f(x,-t)| = {0:e}")]
    Symmetry(f64),
    #[error("frame level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<ConicError>,
    },
}

pub type Result<T> = std::result::Result<T, ConicError>;
