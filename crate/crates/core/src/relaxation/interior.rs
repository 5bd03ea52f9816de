//! Primal-dual interior-point solver for the reduced relaxation.
//!
//! Only free pairs are variables. The Newton matrix is block diagonal per
//! keyword (bounds plus the row constraint) plus a handful of rank-one terms
//! from the adgroup cone constraints and the risk constraint, so each system
//! is solved with the Woodbury identity in `O(n m)`.
//!
//! Inequalities other than `y >= 0` get slack variables, so iterates may be
//! slightly infeasible; a final radial shrink restores feasibility (every
//! constraint is non-decreasing in `y >= 0` and strictly satisfied at zero).
//! Multipliers stay nonnegative, so the Lagrangian over the unit box gives a
//! valid upper bound at any iterate and the solve stops once it is tight.

use crate::model::ProblemInstance;

#[derive(Debug, Clone)]
pub struct InteriorOptions {
    pub max_iterations: usize,
    /// Centrality target: `t = mu * terms / surrogate_gap`.
    pub mu: f64,
}

impl Default for InteriorOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            mu: 10.0,
        }
    }
}

struct ColumnCon {
    vars: Vec<usize>,
    mu: Vec<f64>,
    sig2: Vec<f64>,
    z: f64,
    base_var: f64,
    /// `B_j - base mean`.
    rhs: f64,
    conic: bool,
}

struct RiskCon {
    vars: Vec<usize>,
    w: Vec<f64>,
    rhs: f64,
}

pub(super) struct Problem {
    obj: Vec<f64>,
    scale: f64,
    rows: Vec<Vec<usize>>,
    cols: Vec<ColumnCon>,
    risk: Option<RiskCon>,
}

pub(super) struct Solution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub gap_bound: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Constraint values `g(y) <= 0`, ordered rows, columns, risk.
struct Values {
    g: Vec<f64>,
    /// `sqrt(base_var + sum sigma^2 y^2)` per column constraint.
    q: Vec<f64>,
}

#[derive(Clone)]
struct Iterate {
    y: Vec<f64>,
    s: Vec<f64>,
    lam_y: Vec<f64>,
    lam: Vec<f64>,
}

impl Iterate {
    fn surrogate_gap(&self) -> f64 {
        let a: f64 = self.lam_y.iter().zip(&self.y).map(|(l, v)| l * v).sum();
        a + self.lam.iter().zip(&self.s).map(|(l, v)| l * v).sum::<f64>()
    }

    fn axpy(&self, step: f64, d: &Iterate) -> Iterate {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + step * y).collect();
        Iterate {
            y: f(&self.y, &d.y),
            s: f(&self.s, &d.s),
            lam_y: f(&self.lam_y, &d.lam_y),
            lam: f(&self.lam, &d.lam),
        }
    }

    /// Largest step in `(0, 1]` keeping every component above `(1 - tau)` of its value.
    fn max_step(&self, d: &Iterate, tau: f64) -> f64 {
        let mut step = 1.0f64;
        let pairs = [
            (&self.y, &d.y),
            (&self.s, &d.s),
            (&self.lam_y, &d.lam_y),
            (&self.lam, &d.lam),
        ];
        for (x, dx) in pairs {
            for (&v, &dv) in x.iter().zip(dx.iter()) {
                if dv < 0.0 {
                    step = step.min(-tau * v / dv);
                }
            }
        }
        step
    }
}

/// The Newton matrix `diag(d) + sum_r c_r 1_r 1_r^T + sum_a coef_a u_a u_a^T`.
struct NewtonMatrix {
    diag: Vec<f64>,
    /// `1 / c_r` per row.
    row_inv: Vec<f64>,
    low_rank: Vec<Vec<f64>>,
    coefs: Vec<f64>,
}

impl Problem {
    pub(super) fn build(
        inst: &ProblemInstance,
        free: &[(usize, usize)],
        z: &[f64],
        base_mean: &[f64],
        base_var: &[f64],
        base_risk: f64,
        limit: f64,
    ) -> Self {
        let m = inst.m();
        let nv = free.len();
        let obj: Vec<f64> = free.iter().map(|&(i, j)| inst.profit(i, j)).collect();
        let scale = obj.iter().fold(0.0f64, |a, &e| a.max(e.abs())).max(f64::MIN_POSITIVE);

        let mut rows: Vec<Vec<usize>> = Vec::new();
        let mut last_keyword = usize::MAX;
        for (k, &(i, _)) in free.iter().enumerate() {
            if i != last_keyword {
                rows.push(Vec::new());
                last_keyword = i;
            }
            rows.last_mut().unwrap().push(k);
        }

        let mut cols = Vec::new();
        for j in 0..m {
            let vars: Vec<usize> = (0..nv).filter(|&k| free[k].1 == j).collect();
            let mu: Vec<f64> = vars.iter().map(|&k| inst.cost(free[k].0, j).mean).collect();
            let sig2: Vec<f64> = vars.iter().map(|&k| inst.cost(free[k].0, j).variance()).collect();
            let conic = z[j] > 0.0 && sig2.iter().any(|&s| s > 0.0);
            if !conic && mu.iter().all(|&u| u <= 0.0) {
                continue;
            }
            let mut rhs = inst.adgroups()[j].budget - base_mean[j];
            let at_zero = rhs - z[j] * base_var[j].sqrt();
            if !conic {
                rhs = at_zero;
            }
            // Scale the row so its slack at y = 0 is one.
            let f = 1.0 / at_zero;
            cols.push(ColumnCon {
                vars,
                mu: mu.iter().map(|u| u * f).collect(),
                sig2: sig2.iter().map(|v| v * f * f).collect(),
                z: z[j],
                base_var: base_var[j] * f * f,
                rhs: rhs * f,
                conic,
            });
        }

        let risk = if limit.is_finite() {
            let vars: Vec<usize> = (0..nv).filter(|&k| inst.variance(free[k].0, free[k].1) > 0.0).collect();
            let rhs = limit - base_risk;
            (!vars.is_empty()).then(|| RiskCon {
                w: vars
                    .iter()
                    .map(|&k| inst.variance(free[k].0, free[k].1) / rhs)
                    .collect(),
                vars,
                rhs: 1.0,
            })
        } else {
            None
        };

        Self {
            obj,
            scale,
            rows,
            cols,
            risk,
        }
    }

    fn nv(&self) -> usize {
        self.obj.len()
    }

    fn terms(&self) -> f64 {
        (self.nv() + self.rows.len() + self.cols.len() + usize::from(self.risk.is_some())) as f64
    }

    fn values(&self, y: &[f64]) -> Values {
        let mut g: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&k| y[k]).sum::<f64>() - 1.0)
            .collect();
        let mut q = Vec::with_capacity(self.cols.len());
        for c in &self.cols {
            let (mut lin, mut quad) = (0.0, c.base_var);
            for (idx, &k) in c.vars.iter().enumerate() {
                lin += c.mu[idx] * y[k];
                quad += c.sig2[idx] * y[k] * y[k];
            }
            let qc = if c.conic { quad.sqrt() } else { 0.0 };
            g.push(lin + c.z * qc - c.rhs);
            q.push(qc);
        }
        if let Some(r) = &self.risk {
            g.push(r.vars.iter().zip(&r.w).map(|(&k, &w)| w * y[k] * y[k]).sum::<f64>() - r.rhs);
        }
        Values { g, q }
    }

    /// Dense gradients of the column and risk constraints (rows are implicit).
    fn dense_grads(&self, y: &[f64], v: &Values) -> Vec<Vec<f64>> {
        let nv = self.nv();
        let mut out = Vec::with_capacity(self.cols.len() + 1);
        for (c, &q) in self.cols.iter().zip(&v.q) {
            let mut u = vec![0.0; nv];
            for (idx, &k) in c.vars.iter().enumerate() {
                let cone = if c.conic && q > 0.0 {
                    c.z * c.sig2[idx] * y[k] / q
                } else {
                    0.0
                };
                u[k] = c.mu[idx] + cone;
            }
            out.push(u);
        }
        if let Some(r) = &self.risk {
            let mut u = vec![0.0; nv];
            for (&k, &w) in r.vars.iter().zip(&r.w) {
                u[k] = 2.0 * w * y[k];
            }
            out.push(u);
        }
        out
    }

    /// `out += J^T coef`.
    fn add_jt(&self, dense: &[Vec<f64>], coef: &[f64], out: &mut [f64]) {
        for (vars, &c) in self.rows.iter().zip(coef) {
            for &k in vars {
                out[k] += c;
            }
        }
        for (u, &c) in dense.iter().zip(&coef[self.rows.len()..]) {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(u) {
                    *o += c * x;
                }
            }
        }
    }

    /// `J d`.
    fn jac(&self, dense: &[Vec<f64>], d: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.iter().map(|&k| d[k]).sum()).collect();
        out.extend(dense.iter().map(|u| dot(u, d)));
        out
    }

    /// Gradient of the Lagrangian of `min -e^T y / scale`.
    fn dual_residual(&self, it: &Iterate, dense: &[Vec<f64>]) -> Vec<f64> {
        let mut r: Vec<f64> = (0..self.nv())
            .map(|k| -self.obj[k] / self.scale - it.lam_y[k])
            .collect();
        self.add_jt(dense, &it.lam, &mut r);
        r
    }

    fn residual_norm(&self, it: &Iterate, t: f64) -> f64 {
        let v = self.values(&it.y);
        let dense = self.dense_grads(&it.y, &v);
        let dual: f64 = self.dual_residual(it, &dense).iter().map(|r| r * r).sum();
        let primal: f64 = v.g.iter().zip(&it.s).map(|(g, s)| (g + s).powi(2)).sum();
        let cent: f64 = it
            .lam_y
            .iter()
            .zip(&it.y)
            .chain(it.lam.iter().zip(&it.s))
            .map(|(l, x)| (l * x - 1.0 / t).powi(2))
            .sum();
        (dual + primal + cent).sqrt()
    }

    /// Lagrangian bound over the unit box minus `e^T y / scale`. Valid for any
    /// `y` and nonnegative multipliers since the Lagrangian is concave.
    fn lagrangian_gap(&self, it: &Iterate, v: &Values, dense: &[Vec<f64>]) -> f64 {
        let mut gap: f64 = it.lam_y.iter().zip(&it.y).map(|(l, y)| l * y).sum::<f64>()
            - it.lam.iter().zip(&v.g).map(|(l, g)| l * g).sum::<f64>();
        for (r, &y) in self.dual_residual(it, dense).into_iter().zip(&it.y) {
            gap += if r < 0.0 { -r * (1.0 - y) } else { r * y };
        }
        gap
    }

    /// Shrinks `y` toward zero just enough to satisfy every constraint.
    fn repair(&self, y: &[f64]) -> Vec<f64> {
        let scaled = |b: f64| y.iter().map(|v| v * b).collect::<Vec<_>>();
        let feasible = |b: f64| self.values(&scaled(b)).g.iter().all(|&g| g <= 0.0);
        if feasible(1.0) {
            return y.to_vec();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scaled(lo)
    }

    fn start(&self) -> Iterate {
        // Uniform point using about half of each constraint's room.
        let widest = self.rows.iter().map(Vec::len).max().unwrap_or(1) as f64;
        let mut eps = 0.5 / (widest + 1.0);
        let mut v = self.values(&vec![eps; self.nv()]);
        for _ in 0..200 {
            if v.g.iter().all(|&g| g <= -0.5) {
                break;
            }
            eps *= 0.5;
            v = self.values(&vec![eps; self.nv()]);
        }
        let y = vec![eps; self.nv()];
        let s: Vec<f64> = v.g.iter().map(|g| (-g).max(1e-3)).collect();
        Iterate {
            lam_y: y.iter().map(|v| 1.0 / v).collect(),
            lam: s.iter().map(|v| 1.0 / v).collect(),
            y,
            s,
        }
    }

    pub(super) fn solve(&self, tol: f64, base_obj: f64, opts: &InteriorOptions) -> Solution {
        let terms = self.terms();
        let mut it = self.start();

        for iter in 0..opts.max_iterations {
            let v = self.values(&it.y);
            let dense = self.dense_grads(&it.y, &v);
            let objective: f64 = self.obj.iter().zip(&it.y).map(|(e, v)| e * v).sum();
            let gap = self.scale * self.lagrangian_gap(&it, &v, &dense);
            let target = 0.5 * tol * (base_obj + objective).abs().max(1.0);
            if gap <= target {
                let y = self.repair(&it.y);
                let repaired: f64 = self.obj.iter().zip(&y).map(|(e, v)| e * v).sum();
                let gap = (objective + gap - repaired).max(0.0);
                if gap <= 2.0 * target {
                    return Solution {
                        y,
                        objective: repaired,
                        gap_bound: gap,
                        kkt_residual: gap / (base_obj + repaired).abs().max(1.0),
                        converged: true,
                        iterations: iter,
                    };
                }
            }

            let t = opts.mu * terms / it.surrogate_gap();
            let Some(d) = self.newton_step(&it, &v, &dense, t) else {
                return self.failed(it.y, iter, "newton system breakdown");
            };
            let r0 = self.residual_norm(&it, t);
            let mut step = it.max_step(&d, 0.995);
            let mut accepted = None;
            while step > 1e-14 {
                let trial = it.axpy(step, &d);
                if self.residual_norm(&trial, t) <= (1.0 - 0.01 * step) * r0 {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some(next) => it = next,
                None => return self.failed(it.y, iter, "line search stalled"),
            }
        }
        self.failed(it.y, opts.max_iterations, "iteration limit")
    }

    fn failed(&self, y: Vec<f64>, iterations: usize, reason: &str) -> Solution {
        log::debug!("interior-point solve failed after {iterations} iterations: {reason}");
        let y = self.repair(&y);
        let objective = self.obj.iter().zip(&y).map(|(e, v)| e * v).sum();
        Solution {
            y,
            objective,
            gap_bound: f64::INFINITY,
            kkt_residual: f64::INFINITY,
            converged: false,
            iterations,
        }
    }

    /// Primal-dual Newton direction for barrier parameter `t`.
    fn newton_step(&self, it: &Iterate, v: &Values, dense: &[Vec<f64>], t: f64) -> Option<Iterate> {
        let nv = self.nv();
        let nr = self.rows.len();
        let rp: Vec<f64> = v.g.iter().zip(&it.s).map(|(g, s)| g + s).collect();

        let mut rhs: Vec<f64> = (0..nv)
            .map(|k| self.obj[k] / self.scale + 1.0 / (t * it.y[k]))
            .collect();
        let coef: Vec<f64> = (0..it.s.len())
            .map(|i| -(1.0 / t + it.lam[i] * rp[i]) / it.s[i])
            .collect();
        self.add_jt(dense, &coef, &mut rhs);

        let mut diag: Vec<f64> = (0..nv).map(|k| it.lam_y[k] / it.y[k]).collect();
        let mut full = NewtonMatrix {
            diag: Vec::new(),
            row_inv: (0..nr).map(|r| it.s[r] / it.lam[r]).collect(),
            low_rank: Vec::new(),
            coefs: Vec::new(),
        };
        let mut extra = Vec::new();
        for (ci, c) in self.cols.iter().enumerate() {
            let (q, l, sl) = (v.q[ci], it.lam[nr + ci], it.s[nr + ci]);
            full.low_rank.push(dense[ci].clone());
            full.coefs.push(l / sl);
            if c.conic && q > 0.0 {
                let mut h = vec![0.0; nv];
                for (idx, &k) in c.vars.iter().enumerate() {
                    diag[k] += l * c.z * c.sig2[idx] / q;
                    h[k] = c.sig2[idx] * it.y[k];
                }
                extra.push((h, -l * c.z / (q * q * q)));
            }
        }
        if let Some(r) = &self.risk {
            let i = nr + self.cols.len();
            for (&k, &w) in r.vars.iter().zip(&r.w) {
                diag[k] += it.lam[i] * 2.0 * w;
            }
            full.low_rank.push(dense[self.cols.len()].clone());
            full.coefs.push(it.lam[i] / it.s[i]);
        }
        full.diag = diag;

        // The negative cone curvature terms occasionally spoil the solve; the
        // system without them over-estimates the Hessian and stays usable.
        let mut exact = NewtonMatrix {
            diag: full.diag.clone(),
            row_inv: full.row_inv.clone(),
            low_rank: full.low_rank.clone(),
            coefs: full.coefs.clone(),
        };
        for (h, c) in extra {
            exact.low_rank.push(h);
            exact.coefs.push(c);
        }
        let dy = self
            .solve_newton(&exact, &rhs)
            .filter(|d| descent(&rhs, d))
            .or_else(|| self.solve_newton(&full, &rhs).filter(|d| descent(&rhs, d)))?;

        let jd = self.jac(dense, &dy);
        let ds: Vec<f64> = rp.iter().zip(&jd).map(|(r, j)| -r - j).collect();
        let d = Iterate {
            lam_y: (0..nv)
                .map(|k| (1.0 / t - it.lam_y[k] * it.y[k] - it.lam_y[k] * dy[k]) / it.y[k])
                .collect(),
            lam: (0..it.s.len())
                .map(|i| (1.0 / t - it.lam[i] * it.s[i] - it.lam[i] * ds[i]) / it.s[i])
                .collect(),
            y: dy,
            s: ds,
        };
        let finite = [&d.y, &d.s, &d.lam_y, &d.lam]
            .iter()
            .all(|x| x.iter().all(|v| v.is_finite()));
        finite.then_some(d)
    }

    /// Woodbury solve with two rounds of iterative refinement.
    fn solve_newton(&self, a: &NewtonMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
        let r = a.low_rank.len();
        let z_cols: Vec<Vec<f64>> = a.low_rank.iter().map(|u| self.block_solve(a, u)).collect();
        let mut cap = vec![vec![0.0; r]; r];
        for p in 0..r {
            for q in 0..r {
                cap[p][q] = a.coefs[p] * dot(&a.low_rank[p], &z_cols[q]) + if p == q { 1.0 } else { 0.0 };
            }
        }
        // (D + U C U^T)^-1 b = D^-1 b - Z (I + C U^T Z)^-1 C U^T D^-1 b, Z = D^-1 U.
        let solve = |b: &[f64]| -> Option<Vec<f64>> {
            let mut out = self.block_solve(a, b);
            if r > 0 {
                let cb: Vec<f64> = (0..r).map(|p| a.coefs[p] * dot(&a.low_rank[p], &out)).collect();
                let w = solve_dense(cap.clone(), cb)?;
                for (k, o) in out.iter_mut().enumerate() {
                    *o -= (0..r).map(|p| z_cols[p][k] * w[p]).sum::<f64>();
                }
            }
            Some(out)
        };
        let mut x = solve(rhs)?;
        for _ in 0..2 {
            let ax = self.apply(a, &x);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let dx = solve(&res)?;
            for (v, d) in x.iter_mut().zip(&dx) {
                *v += d;
            }
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    fn apply(&self, a: &NewtonMatrix, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = a.diag.iter().zip(v).map(|(d, x)| d * x).collect();
        for (r, vars) in self.rows.iter().enumerate() {
            let c = vars.iter().map(|&k| v[k]).sum::<f64>() / a.row_inv[r];
            for &k in vars {
                out[k] += c;
            }
        }
        for (u, &c) in a.low_rank.iter().zip(&a.coefs) {
            let f = c * dot(u, v);
            for (o, x) in out.iter_mut().zip(u) {
                *o += f * x;
            }
        }
        out
    }

    /// Applies the inverse of the block-diagonal part: per keyword,
    /// `diag(d) + c 1 1^T`, inverted by Sherman-Morrison.
    fn block_solve(&self, a: &NewtonMatrix, b: &[f64]) -> Vec<f64> {
        // Written as (b_k / c + sum_{l != k} (b_k - b_l) / d_l) / ((1 / c + sum_l 1 / d_l) d_k),
        // which avoids cancellation when the row is nearly tight.
        let mut out = vec![0.0; b.len()];
        for (r, vars) in self.rows.iter().enumerate() {
            let inv = a.row_inv[r];
            let denom = inv + vars.iter().map(|&k| 1.0 / a.diag[k]).sum::<f64>();
            for &k in vars {
                let mut num = b[k] * inv;
                for &l in vars {
                    if l != k {
                        num += (b[k] - b[l]) / a.diag[l];
                    }
                }
                out[k] = num / (denom * a.diag[k]);
            }
        }
        out
    }
}

/// The Newton matrix is positive definite, so a correct solve has `rhs . dy > 0`.
fn descent(rhs: &[f64], dy: &[f64]) -> bool {
    let d = dot(rhs, dy);
    d.is_finite() && d >= 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if !(a[pivot][col].abs() > 0.0) || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
