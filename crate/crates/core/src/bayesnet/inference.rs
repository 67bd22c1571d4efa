//! Exact evidence likelihood by variable elimination.

use super::{BayesNetError, DiscreteBayesNet};

/// Dense table over a set of variables, row-major with the last variable
/// varying fastest.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn scalar(v: f64) -> Self {
        Factor {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![v],
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.cards[i + 1];
        }
        s
    }

    fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(&v) {
                vars.push(v);
                cards.push(c);
            }
        }
        let size: usize = cards.iter().product();
        let pos_a: Vec<usize> = self.vars.iter().map(|v| vars.iter().position(|x| x == v).unwrap()).collect();
        let pos_b: Vec<usize> = other.vars.iter().map(|v| vars.iter().position(|x| x == v).unwrap()).collect();
        let (sa, sb) = (self.strides(), other.strides());
        let mut values = Vec::with_capacity(size);
        let mut digits = vec![0usize; vars.len()];
        for _ in 0..size {
            let ia: usize = pos_a.iter().zip(&sa).map(|(&p, &s)| digits[p] * s).sum();
            let ib: usize = pos_b.iter().zip(&sb).map(|(&p, &s)| digits[p] * s).sum();
            values.push(self.values[ia] * other.values[ib]);
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < cards[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let strides = self.strides();
        let outer: usize = self.cards[..k].iter().product();
        let inner = strides[k];
        let card = self.cards[k];
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for c in 0..card {
                let base = o * card * inner + c * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(k);
        cards.remove(k);
        Factor { vars, cards, values }
    }
}

/// Builds the factor for `var`'s table with observed (and root) variables
/// already fixed to their values.
fn reduced_cpt_factor(net: &DiscreteBayesNet, var: usize, fixed: &[Option<usize>]) -> Result<Factor, BayesNetError> {
    let table = net.cpt(var)?;
    let parents = net.parents_of(var);
    let mut scope: Vec<usize> = parents.to_vec();
    scope.push(var);
    let free: Vec<usize> = scope.iter().copied().filter(|&v| fixed[v].is_none()).collect();
    let cards: Vec<usize> = free.iter().map(|&v| net.cardinality(v)).collect();
    let size: usize = cards.iter().product();
    let mut values = Vec::with_capacity(size);
    let mut digits = vec![0usize; free.len()];
    let mut full = vec![0usize; scope.len()];
    for _ in 0..size {
        let mut d = 0;
        for (slot, &v) in full.iter_mut().zip(&scope) {
            *slot = match fixed[v] {
                Some(x) => x,
                None => {
                    d += 1;
                    digits[d - 1]
                }
            };
        }
        let row = parents
            .iter()
            .zip(&full)
            .fold(0, |acc, (&p, &x)| acc * net.cardinality(p) + x);
        let value = *full.last().unwrap();
        let p = table
            .get(row)
            .and_then(|r| r.get(value))
            .copied()
            .ok_or_else(|| BayesNetError::Malformed(format!("table for `{}` is incomplete", net.variables()[var].id)))?;
        values.push(p);
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < cards[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(Factor {
        vars: free,
        cards,
        values,
    })
}

pub(super) fn evidence_likelihood(net: &DiscreteBayesNet, evidence: &[(usize, usize)], root_value: usize) -> Result<f64, BayesNetError> {
    let root = net
        .root_index()
        .ok_or_else(|| BayesNetError::UnknownVariable(net.root().to_string()))?;
    let n = net.len();
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    let check = |var: usize, value: usize| -> Result<(), BayesNetError> {
        if value >= net.cardinality(var) {
            return Err(BayesNetError::ValueOutOfRange {
                variable: net.variables()[var].id.clone(),
                value,
                cardinality: net.cardinality(var),
            });
        }
        Ok(())
    };
    check(root, root_value)?;
    fixed[root] = Some(root_value);
    for &(var, value) in evidence {
        if var >= n {
            return Err(BayesNetError::UnknownVariable(format!("#{var}")));
        }
        if var == root {
            return Err(BayesNetError::EvidenceOnRoot(net.root().to_string()));
        }
        check(var, value)?;
        if let Some(prev) = fixed[var] {
            if prev != value {
                // contradictory duplicate evidence
                return Ok(0.0);
            }
        }
        fixed[var] = Some(value);
    }
    if evidence.is_empty() {
        return Ok(1.0);
    }

    let order = net.topological_indices()?;
    let mut factors = Vec::with_capacity(n);
    for &var in &order {
        if var != root {
            factors.push(reduced_cpt_factor(net, var, &fixed)?);
        }
    }

    // eliminate hidden variables leaves-first
    for &var in order.iter().rev() {
        if fixed[var].is_some() {
            continue;
        }
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        if touching.is_empty() {
            continue;
        }
        let joint = touching[1..].iter().fold(touching[0].clone(), |acc, f| acc.product(f));
        factors.push(joint.sum_out(var));
    }

    let result = factors
        .iter()
        .fold(Factor::scalar(1.0), |acc, f| acc.product(f));
    debug_assert!(result.vars.is_empty());
    Ok(result.values[0].clamp(0.0, 1.0))
}
