//! Euclidean projection onto the probability simplex.
//!
//! Scan-based algorithm with O(m) expected cost (Condat, Math. Program.
//! 158, 2016): a first pass maintains a candidate support and its running
//! threshold, a second pass re-admits prematurely discarded entries, and a
//! final sweep removes entries that fell below the threshold. The sort-based
//! threshold rule serves as the test oracle.

/// Projects `v` onto `{x : x ≥ 0, Σx = 1}`, minimizing `‖x − v‖₂`.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    debug_assert!(v.iter().all(|x| x.is_finite()));

    // `active` holds the current candidate support; `rho` is always
    // (sum(active) - 1) / |active|.
    let mut active: Vec<f64> = Vec::with_capacity(v.len());
    let mut discarded: Vec<f64> = Vec::new();
    active.push(v[0]);
    let mut rho = v[0] - 1.0;

    for &y in &v[1..] {
        if y > rho {
            rho += (y - rho) / (active.len() as f64 + 1.0);
            if rho > y - 1.0 {
                active.push(y);
            } else {
                discarded.append(&mut active);
                active.push(y);
                rho = y - 1.0;
            }
        }
    }

    for &y in &discarded {
        if y > rho {
            active.push(y);
            rho += (y - rho) / active.len() as f64;
        }
    }

    loop {
        let mut removed = false;
        let mut i = 0;
        while i < active.len() {
            if active[i] <= rho {
                let y = active.swap_remove(i);
                // The maximal entry always satisfies y > rho, so the support
                // never empties.
                rho += (rho - y) / active.len() as f64;
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            break;
        }
    }

    let mut x: Vec<f64> = v.iter().map(|&y| (y - rho).max(0.0)).collect();
    renormalize_exact(&mut x);
    x
}

/// Absorbs the roundoff defect of the coordinate sum into the largest
/// coordinate, leaving `Σx = 1` to within half an ulp of 1. Without this,
/// iterative algorithms that re-project their own output see a spurious
/// uniform drift whose objective ascent can stall an Armijo search.
fn renormalize_exact(x: &mut [f64]) {
    let mut jmax = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[jmax] {
            jmax = i;
        }
    }
    // Neumaier-compensated sum of the other coordinates.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        if i == jmax {
            continue;
        }
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    let rest = sum + comp;
    if rest <= 1.0 {
        x[jmax] = 1.0 - rest;
    }
}
