//! Nelder–Mead simplex search, optionally on bounded coordinates.

use crate::numeric::{logit, sigmoid};

use super::FitError;

/// Feasible range of one coordinate; the search runs on an unconstrained
/// image of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    /// Unbounded, searched in units of `scale`.
    Scaled(f64),
    Positive,
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl Bound {
    pub fn to_internal(&self, x: f64) -> f64 {
        match *self {
            Bound::Free => x,
            Bound::Scaled(scale) => x / scale,
            Bound::Positive => x.max(f64::MIN_POSITIVE).ln(),
            Bound::Interval { lo, hi } => {
                let u = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                logit(u)
            }
        }
    }

    pub fn to_external(&self, z: f64) -> f64 {
        match *self {
            Bound::Free => z,
            Bound::Scaled(scale) => z * scale,
            Bound::Positive => z.exp(),
            Bound::Interval { lo, hi } => (lo + (hi - lo) * sigmoid(z)).clamp(lo, hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Bound::Free | Bound::Scaled(_) => x.is_finite(),
            Bound::Positive => x > 0.0,
            Bound::Interval { lo, hi } => lo <= x && x <= hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop once the spread of simplex values drops below this.
    pub value_tolerance: f64,
    /// Edge length of the initial simplex in search coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iterations: 2000, value_tolerance: 1e-8, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best simplex value after each iteration.
    pub best_trace: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Unconstrained minimisation. Non-finite objective values count as `+∞`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult, FitError>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(start);
    if !f0.is_finite() {
        return Err(FitError::NonFiniteStart(start.to_vec()));
    }
    if n == 0 {
        return Ok(NelderMeadResult {
            x: vec![],
            value: f0,
            iterations: 0,
            evaluations: 1,
            converged: true,
            best_trace: vec![],
        });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);

    let mut best_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let point = |c: &[f64], toward: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(toward).map(|(ci, xi)| ci + t * (xi - ci)).collect()
    };
    while iterations < opts.max_iterations {
        if simplex[n].1 - simplex[0].1 < opts.value_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let xr = point(&centroid, &worst, -REFLECT);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = point(&centroid, &xr, EXPAND);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < f_worst {
                let xc = point(&centroid, &xr, CONTRACT);
                let fc = eval(&xc);
                (xc, if fc <= fr { fc } else { f64::INFINITY })
            } else {
                let xc = point(&centroid, &worst, CONTRACT);
                let fc = eval(&xc);
                (xc, if fc < f_worst { fc } else { f64::INFINITY })
            };
            if fc.is_finite() {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = point(&best, &vertex.0, SHRINK);
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
        order(&mut simplex);
        best_trace.push(simplex[0].1);
    }
    if !converged && simplex[n].1 - simplex[0].1 < opts.value_tolerance {
        converged = true;
    }
    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, value, iterations, evaluations, converged, best_trace })
}

/// Minimise over a box by searching on the unconstrained images of the
/// coordinates. The returned point always satisfies `bounds`.
pub fn nelder_mead_constrained<F>(
    mut f: F,
    bounds: &[Bound],
    start: &[f64],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult, FitError>
where
    F: FnMut(&[f64]) -> f64,
{
    if bounds.len() != start.len() {
        return Err(FitError::Dimension { expected: bounds.len(), got: start.len() });
    }
    if let Some((i, _)) = start.iter().zip(bounds).enumerate().find(|(_, (x, b))| !b.contains(**x)) {
        return Err(FitError::StartOutOfBounds { index: i, value: start[i] });
    }
    let external = |z: &[f64]| -> Vec<f64> { z.iter().zip(bounds).map(|(z, b)| b.to_external(*z)).collect() };
    let z0: Vec<f64> = start.iter().zip(bounds).map(|(x, b)| b.to_internal(*x)).collect();
    let mut res = nelder_mead(|z| f(&external(z)), &z0, opts)?;
    res.x = external(&res.x);
    Ok(res)
}
