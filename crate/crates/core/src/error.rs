use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand sizes or grids disagree.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A parameter is outside the domain where the operation is defined.
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    /// The trajectory left the ball `‖x‖ ≤ limit`.
    Divergence {
        node: usize,
        time: f64,
        norm: f64,
        limit: f64,
    },
    /// A control value lies outside the control set.
    Infeasible {
        node: usize,
    },
    /// The problem does not provide a derivative the operation needs.
    MissingCapability(&'static str),
    /// Two grid functions live on different grids.
    GridMismatch,
    /// An embedded triple was not produced from the given discrete triple.
    Provenance,
    UnknownProblem(String),
    /// The perturbation basis cannot produce a member within budget.
    Generation {
        term: String,
        reason: &'static str,
    },
    Precondition(&'static str),
    /// An inner root or fixed-point iteration did not converge.
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            Error::InvalidParameter {
                name,
                constraint,
                value,
            } => write!(f, "parameter {name} = {value} violates {constraint}"),
            Error::Divergence {
                node,
                time,
                norm,
                limit,
            } => write!(
                f,
                "trajectory diverged at node {node} (t = {time}): norm {norm} exceeds {limit}"
            ),
            Error::Infeasible { node } => write!(f, "control at node {node} is outside the control set"),
            Error::MissingCapability(what) => write!(f, "problem does not supply {what}"),
            Error::GridMismatch => f.write_str("operands live on different grids"),
            Error::Provenance => f.write_str("embedded triple was not produced from the given discrete triple"),
            Error::UnknownProblem(name) => write!(f, "unknown problem '{name}'"),
            Error::Generation { term, reason } => {
                write!(f, "perturbation term {term}: {reason}")
            }
            Error::Precondition(what) => write!(f, "precondition violated: {what}"),
            Error::NoConvergence { what, iterations } => {
                write!(f, "{what} did not converge in {iterations} iterations")
            }
        }
    }
}

impl core::error::Error for Error {}
