//! Limited-memory quasi-Newton minimizer with gradient projection onto a
//! lower-bound box, for the two-parameter objectives used in refinement.
//!
//! The objective supplies values and gradients; non-finite candidate values
//! are rejected by the backtracking line search, and a numerical stall
//! returns the best feasible iterate rather than an error.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct OptOptions {
    pub memory: usize,
    pub max_evals: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            memory: 6,
            max_evals: 500,
            grad_tol: 1e-6,
            obj_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct OptOutcome {
    pub x: [f64; 2],
    pub value: f64,
    pub grad_inf_norm: f64,
    pub evals: usize,
    pub converged: bool,
}

fn project(x: [f64; 2], lower: [f64; 2]) -> [f64; 2] {
    [x[0].max(lower[0]), x[1].max(lower[1])]
}

// Projected gradient: components pointing out of the box at an active bound
// contribute nothing to first-order improvement.
fn projected_gradient(x: [f64; 2], g: [f64; 2], lower: [f64; 2]) -> [f64; 2] {
    let mut pg = g;
    for i in 0..2 {
        if x[i] <= lower[i] + 1e-12 && g[i] > 0.0 {
            pg[i] = 0.0;
        }
    }
    pg
}

fn dot(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

fn inf_norm(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}

// Two-loop recursion over the stored curvature pairs.
fn lbfgs_direction(g: [f64; 2], pairs: &VecDeque<([f64; 2], [f64; 2], f64)>) -> [f64; 2] {
    let mut q = [-g[0], -g[1]];
    if pairs.is_empty() {
        return q;
    }
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let alpha = rho * dot(*s, q);
        q[0] -= alpha * y[0];
        q[1] -= alpha * y[1];
        alphas.push(alpha);
    }
    // Initial Hessian scaling from the most recent pair.
    let (s_last, y_last, _) = pairs.back().unwrap();
    let gamma = dot(*s_last, *y_last) / dot(*y_last, *y_last);
    q[0] *= gamma;
    q[1] *= gamma;
    for ((s, y, rho), alpha) in pairs.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * dot(*y, q);
        let corr = alpha - beta;
        q[0] += corr * s[0];
        q[1] += corr * s[1];
    }
    q
}

pub(crate) fn minimize_box<F>(
    mut objective: F,
    x0: [f64; 2],
    lower: [f64; 2],
    opts: &OptOptions,
) -> Result<OptOutcome>
where
    F: FnMut(&[f64; 2]) -> Result<(f64, [f64; 2])>,
{
    let mut x = project(x0, lower);
    let (mut fx, mut gx) = objective(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numerical(format!(
            "objective non-finite at the initial point ({}, {})",
            x[0], x[1]
        )));
    }
    let mut evals = 1usize;
    let mut best = (fx, x, gx);
    let mut pairs: VecDeque<([f64; 2], [f64; 2], f64)> = VecDeque::new();

    loop {
        let pg = projected_gradient(x, gx, lower);
        let pg_norm = inf_norm(pg);
        if pg_norm < opts.grad_tol {
            return Ok(OptOutcome {
                x,
                value: fx,
                grad_inf_norm: pg_norm,
                evals,
                converged: true,
            });
        }
        if evals >= opts.max_evals {
            let (bf, bx, bg) = best;
            return Ok(OptOutcome {
                x: bx,
                value: bf,
                grad_inf_norm: inf_norm(projected_gradient(bx, bg, lower)),
                evals,
                converged: false,
            });
        }

        let mut dir = lbfgs_direction(pg, &pairs);
        if dot(dir, pg) >= 0.0 {
            // Not a descent direction; drop the memory and fall back.
            pairs.clear();
            dir = [-pg[0], -pg[1]];
        }

        // Armijo backtracking along the projected path.
        let mut step = 1.0;
        let mut accepted: Option<([f64; 2], f64, [f64; 2])> = None;
        while step >= 1e-14 {
            let cand = project([x[0] + step * dir[0], x[1] + step * dir[1]], lower);
            let shift = [cand[0] - x[0], cand[1] - x[1]];
            if inf_norm(shift) == 0.0 {
                break;
            }
            let (fc, gc) = objective(&cand)?;
            evals += 1;
            if fc.is_finite() && fc <= fx + 1e-4 * dot(gx, shift) {
                accepted = Some((cand, fc, gc));
                break;
            }
            if evals >= opts.max_evals {
                break;
            }
            step /= 2.0;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            let (bf, bx, bg) = best;
            return Ok(OptOutcome {
                x: bx,
                value: bf,
                grad_inf_norm: inf_norm(projected_gradient(bx, bg, lower)),
                evals,
                converged: false,
            });
        };

        let s = [x_new[0] - x[0], x_new[1] - x[1]];
        let y = [g_new[0] - gx[0], g_new[1] - gx[1]];
        let sy = dot(s, y);
        if sy > 1e-12 * inf_norm(s) * inf_norm(y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        gx = g_new;
        if fx < best.0 {
            best = (fx, x, gx);
        }
        if improvement.abs() < opts.obj_tol {
            return Ok(OptOutcome {
                x,
                value: fx,
                grad_inf_norm: inf_norm(projected_gradient(x, gx, lower)),
                evals,
                converged: true,
            });
        }
    }
}
