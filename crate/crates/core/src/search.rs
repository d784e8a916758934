//! One-dimensional search: coarse grids and golden-section refinement.

/// `(√5 − 1) / 2`
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMin {
    pub x: f64,
    pub value: f64,
}

/// Cell-centred grid: `n` points splitting `[lo, hi]` into equal cells,
/// never touching either end.
pub fn cell_centred_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    (0..n).map(|k| lo + (k as f64 + 0.5) * step).collect()
}

/// Index of the smallest finite value; the first one wins ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Golden-section minimisation of `f` on `[lo, hi]` until the bracket is no
/// wider than `tol`. Non-finite values count as `+∞`.
///
/// `incumbent` is a point already known (e.g. the grid winner); the result is
/// never worse than it.
pub fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    incumbent: Option<LineMin>,
) -> LineMin {
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut best = incumbent.unwrap_or(LineMin { x: 0.5 * (lo + hi), value: f64::INFINITY });
    let keep = |x: f64, v: f64, best: &mut LineMin| {
        if v < best.value {
            *best = LineMin { x, value: v };
        }
    };

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    keep(x1, f1, &mut best);
    keep(x2, f2, &mut best);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1);
            keep(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2);
            keep(x2, f2, &mut best);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = eval(mid);
    keep(mid, fm, &mut best);
    best
}

/// Grid scan followed by golden-section refinement between the winner's
/// neighbours (clamped to `[lo, hi]`). Returns the refined point and the
/// pre-refinement grid index.
pub fn grid_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    num_points: usize,
    tol: f64,
) -> Option<(LineMin, usize)> {
    let grid = cell_centred_grid(lo, hi, num_points);
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let i = argmin(&values)?;
    let left = if i == 0 { lo } else { grid[i - 1] };
    let right = if i + 1 == grid.len() { hi } else { grid[i + 1] };
    let refined = golden_section(&mut f, left, right, tol, Some(LineMin { x: grid[i], value: values[i] }));
    Some((refined, i))
}
