//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use outage_locator::bn::FactorTables;
use outage_locator::FeederTopology;

/// Exact posterior marginals of a radial network by upward/downward message
/// passing over the branch tree. Branches first, then customers, like the
/// sampler's unknown ordering. Linear in network size, so it serves as the
/// oracle where enumeration is out of reach.
pub fn tree_marginals(topology: &FeederTopology, tables: &FactorTables<'_>) -> Vec<f64> {
    let k = topology.branch_count();
    let pl = tables.branch_failure();
    let pi2 = tables.customer_fault();
    // evidence weight of a customer given its branch state, C summed out
    let g = |j: usize, dead: bool| {
        let l = tables.customer_likelihood(j);
        if dead {
            l[1]
        } else {
            (1.0 - pi2) * l[0] + pi2 * l[1]
        }
    };
    // message from child c given the parent state
    let term = |up: &[[f64; 2]], c: usize, dead: bool| {
        if dead {
            up[c][1]
        } else {
            (1.0 - pl[c]) * up[c][0] + pl[c] * up[c][1]
        }
    };
    let order = topology.topological_order();

    // up[b][d] ∝ P(evidence in subtree of b | D_b = d); normalized per node
    let mut up = vec![[0.0; 2]; k];
    for &b in order.iter().rev() {
        for d in [false, true] {
            let mut v = 1.0;
            for &j in topology.branch_customers(b) {
                v *= g(j, d);
            }
            for &c in topology.children(b) {
                v *= term(&up, c, d);
            }
            up[b][usize::from(d)] = v;
        }
        let s = up[b][0] + up[b][1];
        up[b] = [up[b][0] / s, up[b][1] / s];
    }

    // down[b][d] ∝ P(D_b = d, evidence outside the subtree of b)
    let mut down = vec![[0.0; 2]; k];
    let root = order[0];
    down[root] = [1.0 - pl[root], pl[root]];
    let mut post = vec![0.0; k + topology.customer_count()];
    for &b in order {
        let z = down[b][0] * up[b][0] + down[b][1] * up[b][1];
        post[b] = down[b][1] * up[b][1] / z;
        for &c in topology.children(b) {
            let mut m = [0.0; 2];
            for d in [false, true] {
                let mut v = down[b][usize::from(d)];
                for &j in topology.branch_customers(b) {
                    v *= g(j, d);
                }
                for &other in topology.children(b) {
                    if other != c {
                        v *= term(&up, other, d);
                    }
                }
                if d {
                    m[1] += v;
                } else {
                    m[0] += v * (1.0 - pl[c]);
                    m[1] += v * pl[c];
                }
            }
            let s = m[0] + m[1];
            down[c] = [m[0] / s, m[1] / s];
        }
    }
    for j in 0..topology.customer_count() {
        let p = post[topology.customer_branch(j)];
        let l = tables.customer_likelihood(j);
        let fault = pi2 * l[1] / (pi2 * l[1] + (1.0 - pi2) * l[0]);
        post[k + j] = p + (1.0 - p) * fault;
    }
    post
}

/// `(B, V, R)` of one variable, written as plain double loops over the
/// `2n x m` split matrix.
pub fn naive_r_hat(rows: &[Vec<f64>], n_chains: usize) -> (f64, f64, f64) {
    let two_n = rows.len();
    let m = rows[0].len();
    let mut means = vec![0.0; two_n];
    for j in 0..two_n {
        let mut s = 0.0;
        for i in 0..m {
            s += rows[j][i];
        }
        means[j] = s / m as f64;
    }
    let mut grand = 0.0;
    for j in 0..two_n {
        grand += means[j];
    }
    grand /= two_n as f64;
    let mut b = 0.0;
    for j in 0..two_n {
        b += (means[j] - grand) * (means[j] - grand);
    }
    b *= m as f64 / (two_n as f64 - 1.0);
    let mut v = 0.0;
    for j in 0..two_n {
        let mut s2 = 0.0;
        for i in 0..m {
            s2 += (rows[j][i] - means[j]) * (rows[j][i] - means[j]);
        }
        v += s2 / (m as f64 - 1.0);
    }
    v /= two_n as f64;
    let n = n_chains as f64;
    let r = (((n - 1.0) / n * v + b / n) / v).sqrt();
    (b, v, r)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
