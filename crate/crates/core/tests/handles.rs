use std::collections::{BTreeMap, BTreeSet};

use planeflow::catalog;
use planeflow::handles::{
    cores_of, enumerate_zero_entropy, is_essential, preset, valid_cable, validate, KnotExpr, Rhd,
    PRESETS,
};
use planeflow::links::{linking_matrix, trace_link};
use proptest::prelude::*;

fn no_params() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

#[test]
fn presets_validate_and_are_essential() {
    for name in PRESETS {
        let rhd = preset(name, &no_params()).unwrap();
        assert!(validate(&rhd).valid, "{name}");
        assert!(is_essential(&rhd).unwrap().essential, "{name}");
    }
    for (p, q) in [(3.0, 1.0), (7.0, -3.0), (1.0, 0.0)] {
        let params = [("p".to_string(), p), ("q".to_string(), q)].into();
        assert!(validate(&preset("lens", &params).unwrap()).valid);
    }
}

/// Every single 1-handle slope mutated to `(0, 0)`.
fn mutations(rhd: &Rhd) -> Vec<(usize, usize, Rhd)> {
    let mut out = Vec::new();
    for (i, h) in rhd.handles.iter().enumerate() {
        if h.index != 1 {
            continue;
        }
        for j in 0..h.attach.len() {
            let mut m = rhd.clone();
            m.handles[i].attach[j].slope = [0, 0];
            out.push((i, j, m));
        }
    }
    out
}

#[test]
fn zero_slope_on_a_one_handle_is_inessential() {
    let mut checked = 0;
    for name in PRESETS {
        let rhd = preset(name, &no_params()).unwrap();
        for (stage, annulus, m) in mutations(&rhd) {
            assert!(validate(&m).valid);
            let e = is_essential(&m).unwrap();
            assert!(!e.essential, "{name} stage {stage}");
            assert_eq!(e.offending.len(), 1);
            assert_eq!((e.offending[0].stage, e.offending[0].annulus), (stage, annulus));
            checked += 1;
        }
    }
    // t3 has two 1-handles with two annuli each, cable one double-wrapped
    assert_eq!(checked, 5);
}

#[test]
fn rhd_json_round_trips() {
    for name in PRESETS {
        let rhd = preset(name, &no_params()).unwrap();
        let text = serde_json::to_string(&rhd).unwrap();
        let back: Rhd = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rhd);
    }
}

#[test]
fn hopf_cores_match_traced_gradient_link() {
    let sys = catalog::build("s3_gradient", &no_params()).unwrap();
    let link = trace_link::<f64>(&sys.field, None, &Default::default(), &Default::default()).unwrap();
    let cores = cores_of("hopf").unwrap();
    assert_eq!(cores.cores.len(), link.curves.len());
    let traced: Vec<(usize, usize, i64)> = linking_matrix(&link)
        .unwrap()
        .into_iter()
        .map(|(i, j, l)| (i, j, l.value.abs()))
        .collect();
    let stored: Vec<(usize, usize, i64)> = cores.linking.iter().map(|&(i, j, l)| (i, j, l.abs())).collect();
    assert_eq!(traced, stored);
}

/// Raw trees with exactly `n` nodes: every valid cable over every smaller
/// tree and every ordered sum of arity `2..=n + 1`, unknot terms included.
fn raw_trees(n: usize, pairs: &[(i64, i64)], memo: &mut Vec<Vec<KnotExpr>>) -> Vec<KnotExpr> {
    while memo.len() <= n {
        let m = memo.len();
        let layer = if m == 0 {
            vec![KnotExpr::Unknot]
        } else {
            let mut out = Vec::new();
            for child in &memo[m - 1] {
                for &(p, q) in pairs {
                    out.push(KnotExpr::cable(p, q, child.clone()));
                }
            }
            for arity in 2..=m + 1 {
                sequences(memo, m - 1, arity, &mut Vec::new(), &mut out);
            }
            out
        };
        memo.push(layer);
    }
    memo[n].clone()
}

fn sequences(memo: &[Vec<KnotExpr>], remaining: usize, slots: usize, acc: &mut Vec<KnotExpr>, out: &mut Vec<KnotExpr>) {
    if slots == 0 {
        if remaining == 0 {
            out.push(KnotExpr::sum(acc.clone()));
        }
        return;
    }
    for size in 0..=remaining {
        for t in &memo[size] {
            acc.push(t.clone());
            sequences(memo, remaining - size, slots - 1, acc, out);
            acc.pop();
        }
    }
}

fn oracle(max_nodes: usize, bound: i64) -> Vec<KnotExpr> {
    let mut pairs = Vec::new();
    for p in -bound..=bound {
        for q in -bound..=bound {
            let (a, b) = (p.abs(), q.abs());
            let coprime = (1..=a.max(b)).all(|d| d == 1 || a % d != 0 || b % d != 0);
            if p != 0 && coprime {
                pairs.push((p, q));
            }
        }
    }
    let mut memo = Vec::new();
    let mut seen = BTreeSet::new();
    for n in 0..=max_nodes {
        for t in raw_trees(n, &pairs, &mut memo) {
            seen.insert(t.canonicalize());
        }
    }
    seen.into_iter().collect()
}

#[test]
fn enumeration_matches_exhaustive_oracle() {
    for max_nodes in 0..=2 {
        for bound in 1..=2 {
            let got = enumerate_zero_entropy(max_nodes, bound);
            let want = oracle(max_nodes, bound);
            assert_eq!(got, want, "nodes {max_nodes}, coeff {bound}");
            assert!(got.iter().all(|k| k.is_canonical() && k.nodes() <= max_nodes && k.max_coeff() <= bound));
        }
    }
    assert_eq!(enumerate_zero_entropy(1, 2).len(), 10);
}

#[test]
fn knot_json_schema() {
    let k = KnotExpr::sum(vec![
        KnotExpr::cable(2, 3, KnotExpr::Unknot),
        KnotExpr::Unknot,
    ]);
    let v = serde_json::to_value(&k).unwrap();
    assert_eq!(
        v,
        serde_json::json!({"kind": "sum", "terms": [
            {"kind": "cable", "p": 2, "q": 3, "of": {"kind": "unknot"}},
            {"kind": "unknot"}
        ]})
    );
    assert_eq!(k.canonicalize(), KnotExpr::cable(2, 3, KnotExpr::Unknot));
}

fn arb_knot() -> impl Strategy<Value = KnotExpr> {
    let leaf = Just(KnotExpr::Unknot);
    leaf.prop_recursive(5, 32, 4, |inner| {
        prop_oneof![
            (-3i64..=3, -3i64..=3, inner.clone()).prop_map(|(p, q, k)| KnotExpr::cable(p, q, k)),
            prop::collection::vec(inner, 0..4).prop_map(KnotExpr::sum),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn canonicalize_is_idempotent(k in arb_knot()) {
        let c = k.canonicalize();
        prop_assert_eq!(c.canonicalize(), c.clone());
        prop_assert!(c.nodes() <= k.nodes());
    }
}

#[test]
fn grammar_closure() {
    let base = enumerate_zero_entropy(1, 2);
    let cables: BTreeSet<KnotExpr> = enumerate_zero_entropy(2, 2).into_iter().collect();
    let sums: BTreeSet<KnotExpr> = enumerate_zero_entropy(3, 2).into_iter().collect();
    for a in &base {
        for p in -2i64..=2 {
            for q in -2i64..=2 {
                if valid_cable(p, q) {
                    assert!(cables.contains(&KnotExpr::cable(p, q, a.clone()).canonicalize()));
                }
            }
        }
        for b in &base {
            assert!(sums.contains(&KnotExpr::sum(vec![a.clone(), b.clone()]).canonicalize()));
        }
    }
}
