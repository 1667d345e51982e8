//! Gaussian quadrature rules on the reference domains, backed by `gauss-quad`.
//!
//! Rules are cached per (kind, node count) because the expectation engine asks
//! for the same few rules millions of times.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use gauss_quad::laguerre::GaussLaguerre;
use gauss_quad::legendre::GaussLegendre;
use gauss_quad::FiniteAboveNegOneF64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Weight `exp(-t^2)` on the real line.
    Hermite,
    /// Unit weight on `[-1, 1]`.
    Legendre,
    /// Weight `exp(-t)` on `[0, inf)`.
    Laguerre,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Returns the cached rule, computing it on first use. `n >= 2` is the
/// caller's responsibility.
type RuleCache = Mutex<HashMap<(RuleKind, usize), Arc<QuadratureRule>>>;

pub fn rule(kind: RuleKind, n: usize) -> Arc<QuadratureRule> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry((kind, n))
        .or_insert_with(|| {
            Arc::new(match kind {
                RuleKind::Hermite => gauss_hermite(n),
                RuleKind::Legendre => gauss_legendre(n),
                RuleKind::Laguerre => gauss_laguerre(n),
            })
        })
        .clone()
}

fn degree(n: usize) -> NonZeroUsize {
    NonZeroUsize::new(n).expect("quadrature rule needs at least one node")
}

fn collect(kind: RuleKind, pairs: &[(f64, f64)]) -> QuadratureRule {
    let mut pairs = pairs.to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    QuadratureRule { kind, nodes, weights }
}

pub fn gauss_hermite(n: usize) -> QuadratureRule {
    collect(RuleKind::Hermite, GaussHermite::new(degree(n)).as_node_weight_pairs())
}

pub fn gauss_legendre(n: usize) -> QuadratureRule {
    collect(RuleKind::Legendre, GaussLegendre::new(degree(n)).as_node_weight_pairs())
}

pub fn gauss_laguerre(n: usize) -> QuadratureRule {
    let alpha = FiniteAboveNegOneF64::new(0.0).expect("0 is a valid Laguerre exponent");
    collect(RuleKind::Laguerre, GaussLaguerre::new(degree(n), alpha).as_node_weight_pairs())
}
