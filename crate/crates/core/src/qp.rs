//! Euclidean projection onto `{z : A z ≤ b, E z = e}`.
//!
//! Dual active-set method (Goldfarb–Idnani) specialised to the identity Hessian. It starts
//! from the unconstrained minimiser `z = x`, so no feasible starting point is needed, and an
//! empty set is detected when a violated constraint cannot be added to the active set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, ScdError};

/// Constraint rows in `a z ≤ b` / `e z = e_rhs` form.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Rows<'a> {
    pub ineq: &'a DMatrix<f64>,
    pub ineq_rhs: &'a DVector<f64>,
    pub eq: &'a DMatrix<f64>,
    pub eq_rhs: &'a DVector<f64>,
}

/// Projection result with the multipliers of the final active set.
#[derive(Clone, Debug)]
pub(crate) struct Projection {
    pub point: DVector<f64>,
    /// `(row, multiplier)` for the active inequality rows.
    #[cfg_attr(not(test), allow(dead_code))]
    pub ineq_active: Vec<(usize, f64)>,
    /// Multipliers of the equality rows.
    #[cfg_attr(not(test), allow(dead_code))]
    pub eq_multipliers: Vec<f64>,
}

enum Constraint {
    Eq(usize),
    Ineq(usize),
}

struct Active {
    id: Constraint,
    normal: DVector<f64>,
    mult: f64,
}

impl Rows<'_> {
    fn n(&self) -> usize {
        self.ineq.ncols().max(self.eq.ncols())
    }

    /// Slack of `a_i z ≤ b_i` as `b_i − a_i z` (nonnegative when satisfied).
    fn ineq_slack(&self, i: usize, z: &DVector<f64>) -> f64 {
        self.ineq_rhs[i] - self.ineq.row(i).dot(&z.transpose())
    }

    fn scale(&self, x: &DVector<f64>) -> f64 {
        let amax = |v: &DVector<f64>| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        1.0 + amax(x) + amax(self.ineq_rhs).max(amax(self.eq_rhs))
    }
}

/// Step directions for adding a constraint with normal `np` to the active set `act`:
/// primal direction `s = (I − N N⁺) np` and multiplier direction `r = N⁺ np`.
fn directions(act: &[Active], np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if act.is_empty() {
        return (np.clone(), DVector::zeros(0));
    }
    let n = np.len();
    let mut nm = DMatrix::zeros(n, act.len());
    for (j, a) in act.iter().enumerate() {
        nm.set_column(j, &a.normal);
    }
    let r = crate::linalg::lstsq(&nm, np, 1e-13);
    let s = np - &nm * &r;
    (s, r)
}

pub(crate) fn project(rows: Rows<'_>, x: &DVector<f64>) -> Result<Projection> {
    let n = rows.n();
    let m = rows.ineq.nrows();
    let p = rows.eq.nrows();
    let max_iter = (100 * (m + p)).max(100);
    let tol = 1e-12 * rows.scale(x);
    let dep_tol = 1e-10;

    let mut z = x.clone();
    let mut act: Vec<Active> = Vec::new();
    let mut iterations = 0usize;

    // equalities first; their multipliers carry no sign restriction
    for k in 0..p {
        let normal: DVector<f64> = rows.eq.row(k).transpose();
        let resid = normal.dot(&z) - rows.eq_rhs[k];
        let (s, r) = directions(&act, &normal);
        let ss = s.dot(&normal);
        if s.norm() <= dep_tol {
            if resid.abs() > 1e3 * tol {
                return Err(ScdError::InfeasibleSet);
            }
            continue;
        }
        let t = -resid / ss;
        z += &s * t;
        for (a, rj) in act.iter_mut().zip(r.iter()) {
            a.mult -= t * rj;
        }
        act.push(Active {
            id: Constraint::Eq(k),
            normal,
            mult: t,
        });
    }

    loop {
        // most violated inequality
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            if act.iter().any(|a| matches!(a.id, Constraint::Ineq(j) if j == i)) {
                continue;
            }
            let slack = rows.ineq_slack(i, &z);
            if slack < -tol && worst.is_none_or(|(_, w)| slack < w) {
                worst = Some((i, slack));
            }
        }
        let Some((ip, _)) = worst else { break };

        // normal of the constraint in c(z) = nᵀz − β ≥ 0 form is −a_i
        let normal: DVector<f64> = -rows.ineq.row(ip).transpose();
        let mut mult_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(ScdError::QpFailure {
                    iterations: max_iter,
                });
            }
            let (s, r) = directions(&act, &normal);
            // partial step limited by active inequality multipliers hitting zero
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (j, (a, rj)) in act.iter().zip(r.iter()).enumerate() {
                if matches!(a.id, Constraint::Ineq(_)) && *rj > 1e-14 {
                    let ratio = a.mult / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(j);
                    }
                }
            }
            let s_norm = s.norm();
            let t2 = if s_norm > dep_tol {
                -rows.ineq_slack(ip, &z) / s.dot(&normal)
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(ScdError::InfeasibleSet);
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                z += &s * t;
            }
            for (a, rj) in act.iter_mut().zip(r.iter()) {
                a.mult -= t * rj;
            }
            mult_p += t;
            if t2 <= t1 {
                act.push(Active {
                    id: Constraint::Ineq(ip),
                    normal: normal.clone(),
                    mult: mult_p,
                });
                break;
            }
            act.remove(block.expect("finite partial step has a blocking constraint"));
        }
    }

    let mut ineq_active = Vec::new();
    let mut eq_multipliers = vec![0.0; p];
    for a in &act {
        match a.id {
            Constraint::Eq(k) => eq_multipliers[k] = a.mult,
            Constraint::Ineq(i) => ineq_active.push((i, a.mult.max(0.0))),
        }
    }
    ineq_active.sort_by_key(|&(i, _)| i);
    debug_assert_eq!(z.len(), n);
    Ok(Projection {
        point: z,
        ineq_active,
        eq_multipliers,
    })
}
