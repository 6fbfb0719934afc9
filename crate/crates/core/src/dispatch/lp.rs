//! Bounded-variable dual simplex on a dense basis inverse.
//!
//! Rows are ranged, `row_lo <= A x <= row_hi`, and every variable is boxed.
//! Each row gets a logical variable `s = A x` so the working system is
//! `[A  -I] (x, s) = 0`. With finite boxes any basis is dual feasible once
//! nonbasic variables sit at the bound matching the sign of their reduced
//! cost, so the slack basis is a valid start and a changed bound only needs
//! dual simplex pivots to repair primal feasibility.

use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub cost: Vec<f64>,
    pub col_lo: Vec<f64>,
    pub col_hi: Vec<f64>,
    /// Sparse columns as `(row, value)`.
    pub cols: Vec<Vec<(usize, f64)>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
}

impl LpModel {
    pub fn add_row(&mut self, lo: f64, hi: f64) -> usize {
        self.row_lo.push(lo);
        self.row_hi.push(hi);
        self.row_lo.len() - 1
    }

    pub fn add_col(&mut self, cost: f64, lo: f64, hi: f64, entries: Vec<(usize, f64)>) -> usize {
        self.cost.push(cost);
        self.col_lo.push(lo);
        self.col_hi.push(hi);
        self.cols.push(entries);
        self.cols.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_lo.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Basis and nonbasic bound positions, enough to restart the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct DualSimplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    basic: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    pub iterations: usize,
}

const NONBASIC: usize = usize::MAX;

impl DualSimplex {
    pub fn new(model: &LpModel) -> Result<Self> {
        let (m, n) = (model.n_rows(), model.n_cols());
        let mut lo = model.col_lo.clone();
        let mut hi = model.col_hi.clone();
        lo.extend_from_slice(&model.row_lo);
        hi.extend_from_slice(&model.row_hi);
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h)
        {
            return Err(Error::Lp("every variable and row needs finite bounds lo <= hi".into()));
        }
        let mut cost = model.cost.clone();
        cost.resize(n + m, 0.0);
        let mut s = DualSimplex {
            m,
            n,
            cols: model.cols.clone(),
            cost,
            lo,
            hi,
            basic: (n..n + m).collect(),
            pos: vec![NONBASIC; n + m],
            at_upper: vec![false; n + m],
            x: vec![0.0; n + m],
            binv: vec![0.0; m * m],
            since_refactor: 0,
            iterations: 0,
        };
        for r in 0..m {
            s.pos[n + r] = r;
            s.binv[r * m + r] = -1.0;
        }
        Ok(s)
    }

    pub fn n_structural(&self) -> usize {
        self.n
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    pub fn snapshot(&self) -> Basis {
        Basis {
            basic: self.basic.clone(),
            at_upper: self.at_upper.clone(),
        }
    }

    /// Loads `basis`; falls back to the slack basis if it is singular.
    pub fn restore(&mut self, basis: &Basis) {
        self.basic.clone_from(&basis.basic);
        self.at_upper.clone_from(&basis.at_upper);
        self.pos.iter_mut().for_each(|p| *p = NONBASIC);
        for (r, &j) in self.basic.iter().enumerate() {
            self.pos[j] = r;
        }
        if self.refactor().is_err() {
            self.basic = (self.n..self.n + self.m).collect();
            self.pos.iter_mut().for_each(|p| *p = NONBASIC);
            for r in 0..self.m {
                self.pos[self.n + r] = r;
            }
            self.refactor().expect("slack basis is regular");
        }
    }

    /// Values of the structural variables.
    pub fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        self.x[..self.n].iter().zip(&self.cost).map(|(x, c)| x * c).sum()
    }

    fn column_dot(&self, j: usize, v: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * v[i]).sum()
        } else {
            -v[j - self.n]
        }
    }

    /// `B^-1 a_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                for (r, o) in out.iter_mut().enumerate() {
                    *o += self.binv[r * m + i] * a;
                }
            }
        } else {
            let i = j - self.n;
            for (r, o) in out.iter_mut().enumerate() {
                *o = -self.binv[r * m + i];
            }
        }
        out
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        // dense basis matrix, then Gauss-Jordan with partial pivoting
        let mut a = vec![0.0; m * m];
        for (r, &j) in self.basic.iter().enumerate() {
            if j < self.n {
                for &(i, v) in &self.cols[j] {
                    a[i * m + r] = v;
                }
            } else {
                a[(j - self.n) * m + r] = -1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .expect("non-empty");
            if a[p * m + c].abs() < 1e-12 {
                return Err(Error::Lp("singular basis".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                let f = a[r * m + c];
                if r == c || f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        Ok(())
    }

    fn place_nonbasic(&mut self) {
        for j in 0..self.n + self.m {
            if self.pos[j] == NONBASIC {
                self.x[j] = if self.at_upper[j] { self.hi[j] } else { self.lo[j] };
            }
        }
    }

    fn compute_basic(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n {
            if self.pos[j] == NONBASIC && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        for i in 0..m {
            let j = self.n + i;
            if self.pos[j] == NONBASIC {
                rhs[i] += self.x[j];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x[self.basic[r]] = row.iter().zip(&rhs).map(|(b, v)| b * v).sum();
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basic.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                for (yi, b) in y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    /// Puts every nonbasic box variable at the bound its reduced cost
    /// prefers, which makes the current basis dual feasible.
    fn fix_dual_signs(&mut self) {
        let y = self.duals();
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let d = self.cost[j] - self.column_dot(j, &y);
            if self.lo[j] == self.hi[j] {
                self.at_upper[j] = false;
            } else if d < -1e-12 {
                self.at_upper[j] = true;
            } else if d > 1e-12 {
                self.at_upper[j] = false;
            }
        }
    }

    pub fn solve(&mut self, max_iterations: usize) -> Result<LpStatus> {
        self.fix_dual_signs();
        self.place_nonbasic();
        let (m, n) = (self.m, self.n);
        for _ in 0..max_iterations {
            self.compute_basic();

            // leaving row: largest bound violation
            let mut leave = None;
            let mut worst = 0.0;
            for r in 0..m {
                let j = self.basic[r];
                let v = self.x[j];
                let below = self.lo[j] - v - PRIMAL_TOL * (1.0 + self.lo[j].abs());
                let above = v - self.hi[j] - PRIMAL_TOL * (1.0 + self.hi[j].abs());
                let viol = below.max(above);
                if viol > worst {
                    worst = viol;
                    leave = Some((r, below > 0.0));
                }
            }
            let Some((r, to_lower)) = leave else {
                return Ok(LpStatus::Optimal);
            };

            let y = self.duals();
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..n + m {
                if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let alpha = self.column_dot(j, &rho);
                let up = self.at_upper[j];
                let eligible = if to_lower {
                    (!up && alpha < -PIVOT_TOL) || (up && alpha > PIVOT_TOL)
                } else {
                    (!up && alpha > PIVOT_TOL) || (up && alpha < -PIVOT_TOL)
                };
                if !eligible {
                    continue;
                }
                let d = self.cost[j] - self.column_dot(j, &y);
                let d = if up { (-d).max(0.0) } else { d.max(0.0) };
                let ratio = d / alpha.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => ratio < br - 1e-12 || (ratio <= br + 1e-12 && alpha.abs() > ba),
                };
                if better {
                    best = Some((j, ratio, alpha.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                return Ok(LpStatus::Infeasible);
            };

            let col = self.ftran(q);
            let piv = col[r];
            if piv.abs() < PIVOT_TOL {
                self.refactor()?;
                continue;
            }
            let leaving = self.basic[r];
            {
                let (head, tail) = self.binv.split_at_mut(r * m);
                let (row_r, rest) = tail.split_at_mut(m);
                row_r.iter_mut().for_each(|v| *v /= piv);
                for (i, &f) in col.iter().enumerate() {
                    if i == r || f == 0.0 {
                        continue;
                    }
                    let row = if i < r {
                        &mut head[i * m..(i + 1) * m]
                    } else {
                        &mut rest[(i - r - 1) * m..(i - r) * m]
                    };
                    for (a, b) in row.iter_mut().zip(row_r.iter()) {
                        *a -= f * b;
                    }
                }
            }
            self.basic[r] = q;
            self.pos[q] = r;
            self.pos[leaving] = NONBASIC;
            self.at_upper[leaving] = !to_lower;
            self.x[leaving] = if to_lower { self.lo[leaving] } else { self.hi[leaving] };
            self.iterations += 1;
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
        self.compute_basic();
        Ok(LpStatus::IterationLimit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(model: &LpModel) -> (LpStatus, f64, Vec<f64>) {
        let mut s = DualSimplex::new(model).unwrap();
        let st = s.solve(10_000).unwrap();
        (st, s.objective(), s.primal().to_vec())
    }

    #[test]
    fn small_max_problem() {
        // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, 0 <= x, y <= 10
        let mut m = LpModel::default();
        let r0 = m.add_row(-100.0, 4.0);
        let r1 = m.add_row(-100.0, 6.0);
        m.add_col(-3.0, 0.0, 10.0, vec![(r0, 1.0), (r1, 1.0)]);
        m.add_col(-2.0, 0.0, 10.0, vec![(r0, 1.0), (r1, 3.0)]);
        let (st, obj, x) = solve(&m);
        assert_eq!(st, LpStatus::Optimal);
        assert!((obj + 12.0).abs() < 1e-9, "{obj} {x:?}");
        assert!((x[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ranges() {
        // min x + 2y + 3z, x + y + z = 2, 0.5 <= y - z <= 1, boxes [0, 1]
        let mut m = LpModel::default();
        let e = m.add_row(2.0, 2.0);
        let g = m.add_row(0.5, 1.0);
        m.add_col(1.0, 0.0, 1.0, vec![(e, 1.0)]);
        m.add_col(2.0, 0.0, 1.0, vec![(e, 1.0), (g, 1.0)]);
        m.add_col(3.0, 0.0, 1.0, vec![(e, 1.0), (g, -1.0)]);
        let (st, obj, x) = solve(&m);
        assert_eq!(st, LpStatus::Optimal);
        assert!((obj - 3.0).abs() < 1e-9, "{obj} {x:?}");
    }

    #[test]
    fn infeasible_detected() {
        let mut m = LpModel::default();
        let r = m.add_row(5.0, 6.0);
        m.add_col(1.0, 0.0, 1.0, vec![(r, 1.0)]);
        m.add_col(1.0, 0.0, 1.0, vec![(r, 2.0)]);
        assert_eq!(solve(&m).0, LpStatus::Infeasible);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut m = LpModel::default();
        let r0 = m.add_row(-100.0, 4.0);
        let r1 = m.add_row(-100.0, 6.0);
        m.add_col(-3.0, 0.0, 10.0, vec![(r0, 1.0), (r1, 1.0)]);
        m.add_col(-2.0, 0.0, 10.0, vec![(r0, 1.0), (r1, 3.0)]);
        let mut s = DualSimplex::new(&m).unwrap();
        s.solve(100).unwrap();
        let snap = s.snapshot();
        s.set_bounds(0, 0.0, 3.0);
        assert_eq!(s.solve(100).unwrap(), LpStatus::Optimal);
        // x = 3, y = 1
        assert!((s.objective() + 11.0).abs() < 1e-9);
        let mut cold = DualSimplex::new(&m).unwrap();
        cold.restore(&snap);
        cold.set_bounds(0, 0.0, 3.0);
        cold.solve(100).unwrap();
        assert!((cold.objective() + 11.0).abs() < 1e-9);
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            // two boxed variables and two ranged rows, checked against a grid search
            let mut m = LpModel::default();
            let rows: Vec<usize> = (0..2)
                .map(|_| {
                    let lo = rng.random_range(-3.0..1.0);
                    m.add_row(lo, lo + rng.random_range(0.5..4.0))
                })
                .collect();
            let a: Vec<[f64; 2]> = (0..2)
                .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            for v in 0..2 {
                m.add_col(c[v], 0.0, 2.0, rows.iter().map(|&r| (r, a[v][r])).collect());
            }
            let feasible = |x: [f64; 2]| {
                (0..2).all(|r| {
                    let act = a[0][r] * x[0] + a[1][r] * x[1];
                    act >= m.row_lo[r] - 1e-7 && act <= m.row_hi[r] + 1e-7
                })
            };
            let mut grid_best = f64::INFINITY;
            for i in 0..=200 {
                for k in 0..=200 {
                    let x = [i as f64 / 100.0, k as f64 / 100.0];
                    if feasible(x) {
                        grid_best = grid_best.min(c[0] * x[0] + c[1] * x[1]);
                    }
                }
            }
            let (st, obj, x) = solve(&m);
            match st {
                LpStatus::Optimal => {
                    assert!(feasible([x[0], x[1]]), "{x:?}");
                    assert!(obj <= grid_best + 1e-9);
                    assert!(grid_best.is_infinite() || obj >= grid_best - 0.05);
                }
                LpStatus::Infeasible => assert!(grid_best.is_infinite()),
                LpStatus::IterationLimit => panic!("iteration limit"),
            }
        }
    }
}
