//! Bounded Nelder–Mead minimization.

use alloc::vec::Vec;

/// Result of a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `objective` inside the box `[lo, hi]` starting at `x0`.
///
/// Trial points are projected onto the box. Non-finite objective values count
/// as `+inf`. Stops after `max_evals` evaluations or when both the spread of
/// values and the simplex diameter fall below `tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    step: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
    tol: f64,
) -> SimplexResult {
    let d = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..d {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(&start, &mut evals);
    simplex.push((start.clone(), v0));
    for i in 0..d {
        if evals >= max_evals {
            break;
        }
        let mut x = start.clone();
        // Step inward when the start sits on the upper bound.
        x[i] = if x[i] + step[i] <= hi[i] { x[i] + step[i] } else { x[i] - step[i] };
        clamp(&mut x);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if d == 0 || simplex.len() < d + 1 {
        return best_of(simplex, evals);
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[d].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.abs() <= tol && diameter <= tol {
            break;
        }
        let centroid: Vec<f64> =
            (0..d).map(|i| simplex[..d].iter().map(|(x, _)| x[i]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| {
            let mut x: Vec<f64> = (0..d).map(|i| centroid[i] + t * (simplex[d].0[i] - centroid[i])).collect();
            clamp(&mut x);
            x
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= max_evals {
                simplex[d] = (xr, fr);
                break;
            }
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        if evals >= max_evals {
            break;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < simplex[d].1.min(fr) {
            simplex[d] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evals >= max_evals {
                break;
            }
            let mut x: Vec<f64> = (0..d).map(|i| best[i] + 0.5 * (vertex.0[i] - best[i])).collect();
            clamp(&mut x);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    best_of(simplex, evals)
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>, evaluations: usize) -> SimplexResult {
    let (x, value) = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or((Vec::new(), f64::INFINITY));
    SimplexResult { x, value, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum_of_rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.0, 1.5],
            &[0.2, 0.2],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            2000,
            1e-12,
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn respects_bounds_and_budget() {
        let r = nelder_mead(|x| x[0] + x[1], &[0.5, 0.5], &[0.1, 0.1], &[0.0, 0.2], &[1.0, 1.0], 60, 1e-14);
        assert!(r.evaluations <= 60);
        assert!(r.x[0] >= 0.0 && r.x[1] >= 0.2);
        assert!(r.value < 0.25);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let r = nelder_mead(
            |x| if x[0] > 0.5 { f64::NAN } else { (x[0] - 0.3).powi(2) },
            &[0.1],
            &[0.1],
            &[0.0],
            &[1.0],
            200,
            1e-12,
        );
        assert!((r.x[0] - 0.3).abs() < 1e-5);
    }
}
