use super::config::LineSearchGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub objective: f64,
}

/// Exact likelihood increase of adding `alpha · δf` for a piecewise-constant
/// `δf` with leaf values `w`, data masses `p` and model masses `q`:
/// `alpha Σ w p − log Σ q exp(alpha w)`.
pub fn line_search_objective(alpha: f64, w: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let lin: f64 = w.iter().zip(p).map(|(w, p)| w * p).sum();
    let mut max = f64::NEG_INFINITY;
    for (&wj, &qj) in w.iter().zip(q) {
        if qj > 0.0 {
            max = max.max(alpha * wj);
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = w
        .iter()
        .zip(q)
        .filter(|(_, &qj)| qj > 0.0)
        .map(|(&wj, &qj)| qj * (alpha * wj - max).exp())
        .sum();
    alpha * lin - (max + s.ln())
}

/// Derivative of the objective: `E_p[w] − E_{q_alpha}[w]`.
fn derivative(alpha: f64, w: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let lin: f64 = w.iter().zip(p).map(|(w, p)| w * p).sum();
    let max = w
        .iter()
        .zip(q)
        .filter(|(_, &qj)| qj > 0.0)
        .map(|(&wj, _)| alpha * wj)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (&wj, &qj) in w.iter().zip(q) {
        if qj > 0.0 {
            let e = qj * (alpha * wj - max).exp();
            num += e * wj;
            den += e;
        }
    }
    lin - num / den
}

/// Maximize the objective over `{0} ∪ grid`. With `grid.refine` the best
/// candidate is then polished by bisection on the derivative between its
/// neighbouring candidates; the objective is concave so the bracket holds
/// the maximizer of that interval.
pub fn line_search(w: &[f64], p: &[f64], q: &[f64], grid: &LineSearchGrid) -> LineSearchResult {
    let mut alphas = vec![0.0];
    alphas.extend(grid.points());
    let mut best = LineSearchResult {
        alpha: 0.0,
        objective: 0.0,
    };
    let mut best_i = 0;
    for (i, &a) in alphas.iter().enumerate().skip(1) {
        let obj = line_search_objective(a, w, p, q);
        if obj > best.objective {
            best = LineSearchResult {
                alpha: a,
                objective: obj,
            };
            best_i = i;
        }
    }
    if !grid.refine {
        return best;
    }
    let lo = alphas[best_i.saturating_sub(1)];
    let hi = alphas[(best_i + 1).min(alphas.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    if derivative(a, w, p, q) <= 0.0 {
        b = a;
    } else if derivative(b, w, p, q) >= 0.0 {
        a = b;
    } else {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if derivative(m, w, p, q) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
    }
    let alpha = 0.5 * (a + b);
    let obj = line_search_objective(alpha, w, p, q);
    if obj > best.objective {
        best = LineSearchResult {
            alpha,
            objective: obj,
        };
    }
    best
}
