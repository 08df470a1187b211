//! Derivative-free Nelder-Mead minimizer used to locate the posterior mode.

/// Result of one minimization run.
pub(crate) struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
}

/// Standard Nelder-Mead with adaptive-free (fixed) coefficients.
///
/// Stops when the simplex function-value spread falls below
/// `tol_f * (1 + |f_best|)` and the vertex spread below `tol_x`, or after
/// `max_iter` reflections.
pub(crate) fn nelder_mead<F>(
    f: &F,
    start: &[f64],
    initial_step: f64,
    tol_f: f64,
    tol_x: f64,
    max_iter: usize,
) -> OptimOutcome
where
    F: Fn(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(start.to_vec());
    for i in 0..d {
        let mut v = start.to_vec();
        let step = if v[i].abs() > 1.0 {
            initial_step * v[i].abs()
        } else {
            initial_step
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut converged = false;
    for _ in 0..max_iter {
        // Order vertices: best first. NaN sorts worst.
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_f: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = ordered;
        fvals = ordered_f;

        let f_best = fvals[0];
        let f_worst = fvals[d];
        let spread_f = (f_worst - f_best).abs();
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if spread_f <= tol_f * (1.0 + f_best.abs()) && spread_x <= tol_x {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }

        let worst = simplex[d].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let f_reflect = f(&reflect);

        if f_reflect < fvals[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + GAMMA * (c - w))
                .collect();
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[d] = expand;
                fvals[d] = f_expand;
            } else {
                simplex[d] = reflect;
                fvals[d] = f_reflect;
            }
        } else if f_reflect < fvals[d - 1] {
            simplex[d] = reflect;
            fvals[d] = f_reflect;
        } else {
            // Contract toward the better of worst/reflected.
            let (base, f_base) = if f_reflect < fvals[d] {
                (&reflect, f_reflect)
            } else {
                (&worst, fvals[d])
            };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(base)
                .map(|(c, b)| c + RHO * (b - c))
                .collect();
            let f_contract = f(&contract);
            if f_contract < f_base {
                simplex[d] = contract;
                fvals[d] = f_contract;
            } else {
                // Shrink everything toward the best vertex.
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for (x, b) in v.iter_mut().zip(&best) {
                        *x = b + SIGMA * (*x - b);
                    }
                }
                for (i, v) in simplex.iter().enumerate().skip(1) {
                    fvals[i] = f(v);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    OptimOutcome {
        x: simplex[best].clone(),
        f: fvals[best],
        converged,
    }
}
