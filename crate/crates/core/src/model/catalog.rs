use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;

use super::{ControlAffineProblem, Example1, Example1Oracle};
use crate::solution::ContinuousTriple;
use crate::{Error, Result};

pub type Params = BTreeMap<String, f64>;

/// A named problem constructor with its parameter names and defaults.
pub struct Catalog {
    pub name: &'static str,
    pub params: &'static [(&'static str, f64)],
    pub build: fn(&Params) -> Result<Box<dyn ControlAffineProblem>>,
    /// Closed-form extremal, when one is known.
    pub oracle: Option<fn(&Params) -> Result<Arc<dyn ContinuousTriple + Send + Sync>>>,
}

fn get(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn example1_params(params: &Params) -> Result<(f64, f64)> {
    for key in params.keys() {
        if key != "alpha" && key != "beta" {
            return Err(Error::Precondition("example1 takes only alpha and beta"));
        }
    }
    Ok((get(params, "alpha", 0.5), get(params, "beta", 2.0)))
}

fn build_example1(params: &Params) -> Result<Box<dyn ControlAffineProblem>> {
    let (a, b) = example1_params(params)?;
    Ok(Box::new(Example1::new(a, b)?))
}

fn oracle_example1(params: &Params) -> Result<Arc<dyn ContinuousTriple + Send + Sync>> {
    let (a, b) = example1_params(params)?;
    Ok(Arc::new(Example1Oracle::new(a, b)?))
}

const ENTRIES: &[Catalog] = &[Catalog {
    name: "example1",
    params: &[("alpha", 0.5), ("beta", 2.0)],
    build: build_example1,
    oracle: Some(oracle_example1),
}];

pub fn catalog_names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|c| c.name)
}

fn entry(name: &str) -> Result<&'static Catalog> {
    ENTRIES
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

pub fn lookup(name: &str, params: &Params) -> Result<Arc<dyn ControlAffineProblem>> {
    Ok(Arc::from((entry(name)?.build)(params)?))
}

/// The closed-form extremal of a catalog problem, `None` if it has none.
pub fn lookup_oracle(name: &str, params: &Params) -> Result<Option<Arc<dyn ContinuousTriple + Send + Sync>>> {
    entry(name)?.oracle.map(|f| f(params)).transpose()
}

/// Parameter names and defaults of a catalog problem.
pub fn catalog_params(name: &str) -> Result<&'static [(&'static str, f64)]> {
    Ok(entry(name)?.params)
}
