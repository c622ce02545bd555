//! Independent reference computations shared by the test targets.

#![allow(dead_code)]

use skewprod::groups::Quaternion;

/// `sup_t |#{x_i < t}/N − t|` by scanning every point for every candidate `t`.
pub fn brute_star_discrepancy(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for &t in xs {
        let below = xs.iter().filter(|&&x| x < t).count() as f64;
        let at_most = xs.iter().filter(|&&x| x <= t).count() as f64;
        d = d.max(at_most / n - t).max(t - below / n);
    }
    d
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    c
}

/// Left multiplication by `q` on ℍ = ℝ⁴: two copies of the spin-½
/// representation, so its trace is `2 χ_{1/2}(q)`.
fn left_mul(q: &Quaternion) -> Vec<f64> {
    let [a, b, c, d] = q.0;
    vec![a, -b, -c, -d, b, a, -d, c, c, d, a, -b, d, -c, b, a]
}

/// The rotation of ℝ³ induced by `q`: the spin-1 representation.
fn rotation(q: &Quaternion) -> Vec<f64> {
    let [w, x, y, z] = q.0;
    vec![
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    ]
}

/// Long-run variance `lim N·Var((1/N) Σ χ(w_n))` of a spin-½ (`twice_spin`
/// = 1) or spin-1 (`twice_spin` = 2) character along a stationary random walk
/// whose steps are generator `i` with probability `probs[i]`.
///
/// With `P = Σ p_i π(g_i)` and Schur orthogonality,
/// `Cov(χ(w_0), χ(w_k)) = tr(P^k)/d`, so the variance is
/// `1 + (2/d) Σ_{k≥1} tr(P^k)`.
pub fn su2_long_run_variance(gens: &[Quaternion], probs: &[f64], twice_spin: u32) -> f64 {
    type Rep = fn(&Quaternion) -> Vec<f64>;
    let (rep, n, copies): (Rep, usize, f64) = match twice_spin {
        1 => (left_mul, 4, 2.0),
        2 => (rotation, 3, 1.0),
        _ => panic!("only spin 1/2 and spin 1"),
    };
    let d = f64::from(twice_spin + 1);
    let mut p = vec![0.0; n * n];
    for (g, w) in gens.iter().zip(probs) {
        for (a, b) in p.iter_mut().zip(rep(g)) {
            *a += w * b;
        }
    }
    let mut pk = p.clone();
    let mut sum = 0.0;
    for _ in 0..1_000_000 {
        let tr: f64 = (0..n).map(|i| pk[i * n + i]).sum::<f64>() / copies;
        sum += tr;
        if pk.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        pk = mat_mul(&pk, &p, n);
    }
    1.0 + 2.0 / d * sum
}
