use lds_core::bayesnet::{discretize, ConditionalTable, ContinuousFamily, DiscreteBayesNet, FamilyParams, VariableSpec};
use proptest::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF, Discrete, Normal, Poisson};

/// Random network description: cardinalities, parent lists (earlier
/// variables only) and raw row weights.
#[derive(Debug, Clone)]
struct RawNet {
    cards: Vec<usize>,
    parents: Vec<Vec<usize>>,
    weights: Vec<Vec<Vec<f64>>>,
}

fn raw_net() -> impl Strategy<Value = RawNet> {
    (2usize..=5)
        .prop_flat_map(|n| (prop::collection::vec(2usize..=3, n), prop::collection::vec(prop::collection::vec(any::<bool>(), n), n)))
        .prop_flat_map(|(cards, mask)| {
            let n = cards.len();
            // every non-root variable needs a parent
            let parents: Vec<Vec<usize>> = (0..n)
                .map(|i| {
                    let ps: Vec<usize> = (0..i).filter(|&j| mask[i][j]).collect();
                    if ps.is_empty() && i > 0 {
                        vec![i - 1]
                    } else {
                        ps
                    }
                })
                .collect();
            let shapes: Vec<(usize, usize)> = (0..n)
                .map(|i| (parents[i].iter().map(|&p| cards[p]).product::<usize>(), cards[i]))
                .collect();
            let weights = shapes
                .into_iter()
                .map(|(rows, k)| prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0, 0.01f64..1.0], k), rows))
                .collect::<Vec<_>>();
            (Just(cards), Just(parents), weights)
        })
        .prop_map(|(cards, parents, weights)| RawNet { cards, parents, weights })
}

fn build(raw: &RawNet) -> DiscreteBayesNet {
    let ids: Vec<String> = (0..raw.cards.len()).map(|i| format!("x{i}")).collect();
    let specs = (0..raw.cards.len())
        .map(|i| {
            let ps: Vec<&str> = raw.parents[i].iter().map(|&p| ids[p].as_str()).collect();
            VariableSpec::new(ids[i].clone(), raw.cards[i], &ps)
        })
        .collect();
    let tables = raw
        .weights
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            let rows = rows
                .iter()
                .map(|w| {
                    let total: f64 = w.iter().sum();
                    if total == 0.0 {
                        let mut r = vec![0.0; w.len()];
                        r[0] = 1.0;
                        r
                    } else {
                        w.iter().map(|x| x / total).collect()
                    }
                })
                .collect();
            ConditionalTable::new(ids[i].clone(), rows)
        })
        .collect();
    DiscreteBayesNet::new(specs, tables, ids[0].clone())
}

/// `P(evidence | x0 = root)` by summing the full joint.
fn enumerate(raw: &RawNet, net: &DiscreteBayesNet, evidence: &[(usize, usize)], root: usize) -> f64 {
    let n = raw.cards.len();
    let mut total = 0.0;
    let mut a = vec![0usize; n];
    a[0] = root;
    loop {
        if evidence.iter().all(|&(v, x)| a[v] == x) {
            let mut p = 1.0;
            for i in 1..n {
                let row = raw.parents[i].iter().fold(0, |acc, &q| acc * raw.cards[q] + a[q]);
                p *= net.tables()[i].rows[row][a[i]];
            }
            total += p;
        }
        // odometer over x1..x_{n-1}
        let mut i = n - 1;
        loop {
            if i == 0 {
                return total;
            }
            a[i] += 1;
            if a[i] < raw.cards[i] {
                break;
            }
            a[i] = 0;
            i -= 1;
        }
    }
}

proptest! {
    #[test]
    fn likelihood_matches_enumeration(raw in raw_net(), picks in prop::collection::vec((any::<bool>(), 0usize..3), 6), root in 0usize..3) {
        let net = build(&raw);
        prop_assert!(net.validate().is_clean(), "{:?}", net.validate().violations);
        let root = root % raw.cards[0];
        let evidence: Vec<(usize, usize)> = (1..raw.cards.len())
            .filter(|&i| picks[i].0)
            .map(|i| (i, picks[i].1 % raw.cards[i]))
            .collect();
        let got = net.evidence_likelihood_indexed(&evidence, root).unwrap();
        let want = enumerate(&raw, &net, &evidence, root);
        prop_assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn likelihood_sums_to_one_over_a_variable(raw in raw_net(), var in 1usize..5, root in 0usize..3) {
        let net = build(&raw);
        let var = 1 + (var - 1) % (raw.cards.len() - 1);
        let root = root % raw.cards[0];
        let total: f64 = (0..raw.cards[var]).map(|x| net.evidence_likelihood_indexed(&[(var, x)], root).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }
}

const N: usize = 200_000;

/// Four binomial standard errors plus a little slack.
fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 4.0 * (want * (1.0 - want) / N as f64).sqrt() + 1e-4
}

fn spec(edges: Vec<f64>) -> VariableSpec {
    VariableSpec::new("x", edges.len() - 1, &[]).with_edges(edges)
}

#[test]
fn gaussian_rows_match_truncated_cdf() {
    let s = spec(vec![0.0, 30.0, 60.0, 100.0]);
    let fam = ContinuousFamily::new("x", vec![FamilyParams::TruncatedGaussian { mean: 45.0, sd: 15.0 }]);
    let t = discretize(&fam, &s, N, 3).unwrap();
    let d = Normal::new(45.0, 15.0).unwrap();
    let z = d.cdf(100.0) - d.cdf(0.0);
    let edges = s.bin_edges.as_ref().unwrap();
    for b in 0..3 {
        let want = (d.cdf(edges[b + 1]) - d.cdf(edges[b])) / z;
        assert!(close(t.rows[0][b], want), "bin {b}: {} vs {want}", t.rows[0][b]);
    }
}

#[test]
fn beta_rows_match_cdf() {
    let s = spec(vec![0.0, 0.3, 0.6, 1.0]);
    let fam = ContinuousFamily::new("x", vec![FamilyParams::BetaScaled { alpha: 3.75, beta: 7.75 }]);
    let t = discretize(&fam, &s, N, 5).unwrap();
    let d = Beta::new(3.75, 7.75).unwrap();
    let edges = s.bin_edges.as_ref().unwrap();
    for b in 0..3 {
        let want = d.cdf(edges[b + 1]) - d.cdf(edges[b]);
        assert!(close(t.rows[0][b], want), "bin {b}: {} vs {want}", t.rows[0][b]);
    }
}

#[test]
fn count_rows_match_truncated_pmf() {
    let s = spec(vec![0.0, 4.5, 9.5, 20.0]);
    let fam = ContinuousFamily::new("x", vec![FamilyParams::TruncatedCount { mean: 5.5 }]);
    let t = discretize(&fam, &s, N, 9).unwrap();
    let d = Poisson::new(5.5).unwrap();
    let z: f64 = (0..=20).map(|k| d.pmf(k)).sum();
    let bins = [(0u64, 4u64), (5, 9), (10, 20)];
    for (b, (lo, hi)) in bins.into_iter().enumerate() {
        let want: f64 = (lo..=hi).map(|k| d.pmf(k)).sum::<f64>() / z;
        assert!(close(t.rows[0][b], want), "bin {b}: {} vs {want}", t.rows[0][b]);
    }
}

#[test]
fn bernoulli_rows_match_p() {
    let s = spec(vec![0.0, 0.5, 1.0]);
    let fam = ContinuousFamily::new("x", vec![FamilyParams::Bernoulli { p: 0.85 }]);
    let t = discretize(&fam, &s, N, 1).unwrap();
    assert!(close(t.rows[0][1], 0.85));
}
