//! Log-domain entropic transport between uniform marginals.

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic optimal transport with uniform `1/n` marginals, rounded to a
/// feasible plan.
///
/// `epsilon` is annealed geometrically from the largest cost down to the
/// target over the first half of the iteration budget; the rest runs at
/// the target. The final plan is projected onto the transport polytope
/// (row clipping, column clipping, rank-one correction), so the returned
/// per-point cost is the cost of a feasible coupling and can only exceed
/// the exact optimum.
///
/// Returns `(cost per point, iterations used)`.
pub fn regularized_transport(cost: &[f64], n: usize, epsilon: f64, max_iterations: usize) -> (f64, usize) {
    assert_eq!(cost.len(), n * n);
    let log_marginal = -(n as f64).ln();
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    if max_cost == 0.0 {
        return (0.0, 0);
    }
    let start = max_cost.max(epsilon);
    let anneal_steps = (max_iterations / 2).max(1);
    let decay = (epsilon / start).powf(1.0 / anneal_steps as f64);

    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; n];
    let mut iterations = 0;
    let mut eps = start;
    for it in 0..max_iterations {
        iterations = it + 1;
        eps = (start * decay.powi(it as i32)).max(epsilon);
        for i in 0..n {
            let row = &cost[i * n..(i + 1) * n];
            let lse = log_sum_exp(row.iter().zip(&g).map(|(c, gj)| (gj - c) / eps));
            f[i] = eps * (log_marginal - lse);
        }
        for j in 0..n {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * n + j]) / eps));
            g[j] = eps * (log_marginal - lse);
        }
        if eps <= epsilon {
            // Columns are exact after the g-update; check the rows.
            let row_error: f64 = (0..n)
                .map(|i| {
                    let row = &cost[i * n..(i + 1) * n];
                    let mass: f64 = row
                        .iter()
                        .zip(&g)
                        .map(|(c, gj)| ((f[i] + gj - c) / eps).exp())
                        .sum();
                    (mass - 1.0 / n as f64).abs()
                })
                .sum();
            if row_error < 1e-9 {
                break;
            }
        }
    }

    let mut plan: Vec<f64> = (0..n * n)
        .map(|k| ((f[k / n] + g[k % n] - cost[k]) / eps).exp())
        .collect();
    round_to_polytope(&mut plan, n);
    let total: f64 = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    (total, iterations)
}

/// Projects a nonnegative plan onto couplings with uniform `1/n` marginals.
fn round_to_polytope(plan: &mut [f64], n: usize) {
    let target = 1.0 / n as f64;
    for i in 0..n {
        let row = &mut plan[i * n..(i + 1) * n];
        let s: f64 = row.iter().sum();
        if s > target {
            let k = target / s;
            row.iter_mut().for_each(|p| *p *= k);
        }
    }
    for j in 0..n {
        let s: f64 = (0..n).map(|i| plan[i * n + j]).sum();
        if s > target {
            let k = target / s;
            (0..n).for_each(|i| plan[i * n + j] *= k);
        }
    }
    let row_deficit: Vec<f64> = (0..n)
        .map(|i| target - plan[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    let col_deficit: Vec<f64> = (0..n)
        .map(|j| target - (0..n).map(|i| plan[i * n + j]).sum::<f64>())
        .collect();
    let total_deficit: f64 = col_deficit.iter().sum();
    if total_deficit > 0.0 {
        for i in 0..n {
            for j in 0..n {
                plan[i * n + j] += row_deficit[i] * col_deficit[j] / total_deficit;
            }
        }
    }
}
