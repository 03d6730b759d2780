//! Round-handle decompositions and zero-entropy knots.
//!
//! A decomposition is checked combinatorially through a ledger of boundary
//! tori. Tori are numbered in creation order from 0:
//!
//! * index 0 adds a torus;
//! * index 1 with two annuli on different tori merges them into one new
//!   torus, with both annuli on one torus splits it into two new tori;
//! * index 1 with a double-wrapped exit replaces its torus by one new torus;
//! * index 2 caps off a torus.
//!
//! Slopes `(p, q)` are written in the basis of the torus they lie on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    TwoAnnuli,
    DoubleWrapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub torus: usize,
    pub slope: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundHandle {
    pub id: String,
    pub index: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<ExitKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attach: Vec<Target>,
}

impl RoundHandle {
    pub fn zero(id: &str) -> Self {
        Self {
            id: id.into(),
            index: 0,
            exit: None,
            attach: Vec::new(),
        }
    }

    pub fn one(id: &str, a: Target, b: Target) -> Self {
        Self {
            id: id.into(),
            index: 1,
            exit: Some(ExitKind::TwoAnnuli),
            attach: vec![a, b],
        }
    }

    pub fn one_wrapped(id: &str, a: Target) -> Self {
        Self {
            id: id.into(),
            index: 1,
            exit: Some(ExitKind::DoubleWrapped),
            attach: vec![a],
        }
    }

    pub fn two(id: &str, a: Target) -> Self {
        Self {
            id: id.into(),
            index: 2,
            exit: None,
            attach: vec![a],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rhd {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub handles: Vec<RoundHandle>,
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Lowest terms with `p >= 0`, and `q >= 0` when `p = 0`.
pub fn canonical_slope(p: i64, q: i64) -> [i64; 2] {
    let g = gcd(p, q);
    let (p, q) = if g > 1 { (p / g, q / g) } else { (p, q) };
    if p < 0 || (p == 0 && q < 0) {
        [-p, -q]
    } else {
        [p, q]
    }
}

pub fn target(torus: usize, p: i64, q: i64) -> Target {
    Target {
        torus,
        slope: canonical_slope(p, q),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Position of the offending handle, or the handle count for checks on
    /// the final boundary.
    pub stage: usize,
    pub handle: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub stage: usize,
    pub handle: String,
    /// Boundary tori after this handle.
    pub boundary: Vec<usize>,
    /// Tori created by this handle.
    pub created: Vec<usize>,
    /// Longitudinal wrapping of the exit (2 for a double-wrapped exit).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrap: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RhdReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub ledger: Vec<Stage>,
    pub final_boundary: Vec<usize>,
}

/// Checks handle order, attachment shapes, slope normalization and the
/// boundary ledger. A closed decomposition must end with empty boundary.
pub fn validate(rhd: &Rhd) -> RhdReport {
    let mut violations = Vec::new();
    let mut ledger = Vec::new();
    let mut boundary: BTreeSet<usize> = BTreeSet::new();
    let mut next = 0usize;
    let mut seen_ids = BTreeSet::new();
    let mut last_index = 0u8;

    for (stage, h) in rhd.handles.iter().enumerate() {
        let mut bad = |msg: String| {
            violations.push(Violation {
                stage,
                handle: Some(h.id.clone()),
                message: msg,
            })
        };
        if !seen_ids.insert(h.id.clone()) {
            bad(format!("duplicate handle id `{}`", h.id));
        }
        if h.index > 2 {
            bad(format!("index {} is not 0, 1 or 2", h.index));
            continue;
        }
        if h.index < last_index {
            bad(format!(
                "index-{} handle after an index-{} handle",
                h.index, last_index
            ));
        }
        last_index = last_index.max(h.index);

        for (k, t) in h.attach.iter().enumerate() {
            let [p, q] = t.slope;
            if canonical_slope(p, q) != t.slope {
                bad(format!(
                    "annulus {k}: slope ({p}, {q}) is not in lowest terms with canonical sign"
                ));
            }
            if !boundary.contains(&t.torus) {
                bad(format!(
                    "annulus {k}: torus {} is not in the current boundary",
                    t.torus
                ));
            }
        }
        let on_boundary = h.attach.iter().all(|t| boundary.contains(&t.torus));

        let mut created = Vec::new();
        let mut wrap = None;
        match (h.index, h.exit) {
            (0, exit) => {
                if exit.is_some() || !h.attach.is_empty() {
                    bad("index-0 handle has empty exit set".into());
                }
                boundary.insert(next);
                created.push(next);
                next += 1;
            }
            (1, None) => bad("index-1 handle needs an exit kind".into()),
            (1, Some(ExitKind::TwoAnnuli)) => {
                if h.attach.len() != 2 {
                    bad(format!(
                        "two-annuli exit needs 2 attachments, found {}",
                        h.attach.len()
                    ));
                } else if on_boundary {
                    let (a, b) = (h.attach[0].torus, h.attach[1].torus);
                    boundary.remove(&a);
                    boundary.remove(&b);
                    let n = if a == b { 2 } else { 1 };
                    for _ in 0..n {
                        boundary.insert(next);
                        created.push(next);
                        next += 1;
                    }
                }
            }
            (1, Some(ExitKind::DoubleWrapped)) => {
                wrap = Some(2);
                if h.attach.len() != 1 {
                    bad(format!(
                        "double-wrapped exit needs 1 attachment, found {}",
                        h.attach.len()
                    ));
                } else if on_boundary {
                    boundary.remove(&h.attach[0].torus);
                    boundary.insert(next);
                    created.push(next);
                    next += 1;
                }
            }
            (2, exit) => {
                if exit.is_some() {
                    bad("index-2 handle exits along its whole boundary torus".into());
                }
                if h.attach.len() != 1 {
                    bad(format!(
                        "index-2 handle needs 1 attachment, found {}",
                        h.attach.len()
                    ));
                } else {
                    if h.attach[0].slope == [0, 0] {
                        bad("index-2 handle needs a nonzero meridian slope".into());
                    }
                    if on_boundary {
                        boundary.remove(&h.attach[0].torus);
                    }
                }
            }
            _ => unreachable!(),
        }
        ledger.push(Stage {
            stage,
            handle: h.id.clone(),
            boundary: boundary.iter().copied().collect(),
            created,
            wrap,
        });
    }
    if rhd.handles.is_empty() {
        violations.push(Violation {
            stage: 0,
            handle: None,
            message: "decomposition has no handles".into(),
        });
    }
    if !boundary.is_empty() {
        violations.push(Violation {
            stage: rhd.handles.len(),
            handle: None,
            message: format!("final boundary is not empty: tori {:?}", boundary),
        });
    }
    RhdReport {
        valid: violations.is_empty(),
        violations,
        ledger,
        final_boundary: boundary.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Inessential {
    pub stage: usize,
    pub handle: String,
    pub annulus: usize,
    pub torus: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EssentialReport {
    pub essential: bool,
    pub offending: Vec<Inessential>,
}

/// Every index-1 attaching annulus has a nonzero slope.
pub fn is_essential(rhd: &Rhd) -> Result<EssentialReport> {
    let report = validate(rhd);
    if !report.valid {
        return Err(Error::InvalidRhd {
            violations: report.violations.into_iter().map(|v| v.message).collect(),
        });
    }
    let offending: Vec<Inessential> = rhd
        .handles
        .iter()
        .enumerate()
        .filter(|(_, h)| h.index == 1)
        .flat_map(|(stage, h)| {
            h.attach
                .iter()
                .enumerate()
                .filter(|(_, t)| t.slope == [0, 0])
                .map(move |(annulus, t)| Inessential {
                    stage,
                    handle: h.id.clone(),
                    annulus,
                    torus: t.torus,
                })
        })
        .collect();
    Ok(EssentialReport {
        essential: offending.is_empty(),
        offending,
    })
}

pub const PRESETS: [&str; 4] = ["hopf", "lens", "t3", "cable"];

/// Named decompositions. `lens` takes coprime `(p, q)`; the others ignore
/// the parameters.
pub fn preset(name: &str, params: &BTreeMap<String, f64>) -> Result<Rhd> {
    let named = |handles| Rhd {
        name: Some(name.to_string()),
        handles,
    };
    match name {
        "hopf" => Ok(named(vec![
            RoundHandle::zero("h0"),
            RoundHandle::two("h1", target(0, 0, 1)),
        ])),
        "lens" => {
            let int = |k: &str, d: i64| -> Result<i64> {
                match params.get(k) {
                    None => Ok(d),
                    Some(v) if v.fract() == 0.0 => Ok(*v as i64),
                    Some(v) => Err(Error::BadParams(format!("{k} = {v} is not an integer"))),
                }
            };
            let (p, q) = (int("p", 5)?, int("q", 2)?);
            if gcd(p, q) != 1 {
                return Err(Error::BadParams(format!("lens slope ({p}, {q}) is not primitive")));
            }
            Ok(named(vec![
                RoundHandle::zero("h0"),
                RoundHandle::two("h1", target(0, p, q)),
            ]))
        }
        "t3" => Ok(named(vec![
            RoundHandle::zero("h0"),
            RoundHandle::one("h1", target(0, 1, 0), target(0, 1, 0)),
            RoundHandle::one("h2", target(1, 1, 0), target(2, 1, 0)),
            RoundHandle::two("h3", target(3, 0, 1)),
        ])),
        "cable" => Ok(named(vec![
            RoundHandle::zero("h0"),
            RoundHandle::one_wrapped("h1", target(0, 2, 3)),
            RoundHandle::two("h2", target(1, 0, 1)),
        ])),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cores {
    pub cores: Vec<KnotExpr>,
    /// `(i, j, lk)` for linked pairs of cores.
    pub linking: Vec<(usize, usize, i64)>,
}

/// Stored core knots of a preset.
pub fn cores_of(name: &str) -> Result<Cores> {
    let unknots = |n| vec![KnotExpr::Unknot; n];
    match name {
        "hopf" => Ok(Cores {
            cores: unknots(2),
            linking: vec![(0, 1, 1)],
        }),
        "lens" => Ok(Cores {
            cores: unknots(2),
            linking: Vec::new(),
        }),
        "cable" => Ok(Cores {
            cores: vec![
                KnotExpr::Unknot,
                KnotExpr::cable(2, 3, KnotExpr::Unknot),
                KnotExpr::Unknot,
            ],
            linking: Vec::new(),
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Knots generated from the unknot by cabling and connected sum.
///
/// The derived order (unknot < cable < sum, then fields) is the total order
/// used to sort summands.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KnotExpr {
    Unknot,
    Cable { p: i64, q: i64, of: Box<KnotExpr> },
    Sum { terms: Vec<KnotExpr> },
}

impl KnotExpr {
    pub fn cable(p: i64, q: i64, of: KnotExpr) -> Self {
        KnotExpr::Cable { p, q, of: Box::new(of) }
    }

    pub fn sum(terms: Vec<KnotExpr>) -> Self {
        KnotExpr::Sum { terms }
    }

    /// Number of cable and sum nodes.
    pub fn nodes(&self) -> usize {
        match self {
            KnotExpr::Unknot => 0,
            KnotExpr::Cable { of, .. } => 1 + of.nodes(),
            KnotExpr::Sum { terms } => 1 + terms.iter().map(KnotExpr::nodes).sum::<usize>(),
        }
    }

    /// Largest `|p|` or `|q|` in the tree.
    pub fn max_coeff(&self) -> i64 {
        match self {
            KnotExpr::Unknot => 0,
            KnotExpr::Cable { p, q, of } => p.abs().max(q.abs()).max(of.max_coeff()),
            KnotExpr::Sum { terms } => terms.iter().map(KnotExpr::max_coeff).max().unwrap_or(0),
        }
    }

    /// Canonical form: sums flattened, unknot summands dropped, summands
    /// sorted, sums of fewer than two terms collapsed, `(1, q)`-cables of
    /// the unknot replaced by the unknot.
    pub fn canonicalize(&self) -> KnotExpr {
        match self {
            KnotExpr::Unknot => KnotExpr::Unknot,
            KnotExpr::Cable { p, q, of } => {
                let of = of.canonicalize();
                if *p == 1 && of == KnotExpr::Unknot {
                    KnotExpr::Unknot
                } else {
                    KnotExpr::cable(*p, *q, of)
                }
            }
            KnotExpr::Sum { terms } => {
                let mut flat = Vec::new();
                for t in terms {
                    match t.canonicalize() {
                        KnotExpr::Unknot => {}
                        KnotExpr::Sum { terms } => flat.extend(terms),
                        other => flat.push(other),
                    }
                }
                flat.sort();
                match flat.len() {
                    0 => KnotExpr::Unknot,
                    1 => flat.pop().unwrap(),
                    _ => KnotExpr::Sum { terms: flat },
                }
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonicalize() == *self
    }
}

impl std::fmt::Display for KnotExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KnotExpr::Unknot => write!(f, "U"),
            KnotExpr::Cable { p, q, of } => write!(f, "C({p},{q},{of})"),
            KnotExpr::Sum { terms } => {
                write!(f, "S(")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// `p != 0` and `gcd(|p|, |q|) = 1`.
pub fn valid_cable(p: i64, q: i64) -> bool {
    p != 0 && gcd(p, q) == 1
}

fn cable_pairs(bound: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for p in -bound..=bound {
        for q in -bound..=bound {
            if valid_cable(p, q) {
                out.push((p, q));
            }
        }
    }
    out
}

/// Canonical trees with exactly `n` nodes, by node count.
struct Layers {
    layers: Vec<Vec<KnotExpr>>,
    pairs: Vec<(i64, i64)>,
}

impl Layers {
    fn new(max_nodes: usize, bound: i64) -> Self {
        let mut s = Self {
            layers: vec![vec![KnotExpr::Unknot]],
            pairs: cable_pairs(bound),
        };
        for n in 1..=max_nodes {
            let layer = s.build(n);
            s.layers.push(layer);
        }
        s
    }

    /// Non-sum, non-unknot trees with `n` nodes: the possible summands.
    fn primes(&self, n: usize) -> impl Iterator<Item = &KnotExpr> {
        self.layers[n]
            .iter()
            .filter(|k| matches!(k, KnotExpr::Cable { .. }))
    }

    fn build(&self, n: usize) -> Vec<KnotExpr> {
        let mut out = BTreeSet::new();
        for child in &self.layers[n - 1] {
            for &(p, q) in &self.pairs {
                if p == 1 && *child == KnotExpr::Unknot {
                    continue;
                }
                out.insert(KnotExpr::cable(p, q, child.clone()));
            }
        }
        // sums: multisets of at least two summands with n - 1 nodes in total
        let mut stack = Vec::new();
        self.summands(n - 1, 1, None, &mut stack, &mut out);
        out.into_iter().collect()
    }

    fn summands<'a>(
        &'a self,
        remaining: usize,
        min_size: usize,
        min_term: Option<&'a KnotExpr>,
        stack: &mut Vec<&'a KnotExpr>,
        out: &mut BTreeSet<KnotExpr>,
    ) {
        if remaining == 0 {
            if stack.len() >= 2 {
                let mut terms: Vec<KnotExpr> = stack.iter().map(|&k| k.clone()).collect();
                terms.sort();
                out.insert(KnotExpr::Sum { terms });
            }
            return;
        }
        for size in min_size..=remaining {
            for term in self.primes(size) {
                // nondecreasing in (size, order) keeps each multiset once
                if size == min_size && min_term.is_some_and(|m| term < m) {
                    continue;
                }
                stack.push(term);
                self.summands(remaining - size, size, Some(term), stack, out);
                stack.pop();
            }
        }
    }
}

/// All canonical zero-entropy knot trees with at most `max_nodes` nodes and
/// cable coefficients bounded by `coeff_bound`, sorted.
pub fn enumerate_zero_entropy(max_nodes: usize, coeff_bound: i64) -> Vec<KnotExpr> {
    let layers = Layers::new(max_nodes, coeff_bound.max(0));
    let mut all: Vec<KnotExpr> = layers.layers.into_iter().flatten().collect();
    all.sort();
    all.dedup();
    all
}
