//! Dense two-phase tableau simplex with a final basis re-solve.

use nalgebra::{DMatrix, DVector};

use super::LpError;
use crate::formulation::Sense;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 50;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cᵀx` subject to rows, with `x_j ≥ 0` unless `free[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLp {
    pub costs: Vec<f64>,
    pub free: Vec<bool>,
    pub rows: Vec<RawRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub x: Vec<f64>,
    /// Row multipliers with `Le ≤ 0`, `Ge ≥ 0`, `Eq` free.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major `(m + 1) × width`; last row is the reduced-cost row, last
    /// column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.at(r, e);
        for c in 0..w {
            self.data[r * w + c] /= p;
        }
        self.data[r * w + e] = 1.0;
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + e];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            for (c, pv) in pivot_row.iter().enumerate() {
                if *pv != 0.0 {
                    row[c] -= f * pv;
                }
            }
            row[e] = 0.0;
            if i < self.m && row[w - 1].abs() < 1e-11 {
                row[w - 1] = 0.0;
            }
        }
        self.basis[r] = e;
        self.iterations += 1;
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.width;
        let z = self.m * w;
        for c in 0..w {
            self.data[z + c] = if c < costs.len() { costs[c] } else { 0.0 };
        }
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for c in 0..w {
                    self.data[z + c] -= cb * self.data[i * w + c];
                }
            }
        }
    }

    /// Run simplex iterations over columns `< allowed`.
    fn optimise(&mut self, allowed: usize) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        let z = self.m;
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(LpError::NumericalFailure(format!(
                    "iteration limit {MAX_ITERATIONS} reached"
                )));
            }
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut entering = None;
            let mut best = -COST_TOL;
            for c in 0..allowed {
                let d = self.at(z, c);
                if d < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(e) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, e);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
        }
    }
}

pub fn solve_raw(lp: &RawLp) -> Result<RawSolution, LpError> {
    let n = lp.costs.len();
    let m = lp.rows.len();
    if lp.free.len() != n || lp.rows.iter().any(|r| r.coeffs.iter().any(|&(j, _)| j >= n)) {
        return Err(LpError::NumericalFailure("malformed LP dimensions".into()));
    }

    // Structural columns (free variables split in two), then slacks.
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        plus.push(ncols);
        ncols += 1;
        if lp.free[j] {
            minus.push(Some(ncols));
            ncols += 1;
        } else {
            minus.push(None);
        }
    }
    let mut slack = vec![None; m];
    for (i, row) in lp.rows.iter().enumerate() {
        if row.sense != Sense::Eq {
            slack[i] = Some(ncols);
            ncols += 1;
        }
    }
    let sign: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let art_start = ncols;
    let mut basis = vec![usize::MAX; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let slack_sign = match row.sense {
            Sense::Le => sign[i],
            Sense::Ge => -sign[i],
            Sense::Eq => 0.0,
        };
        if slack_sign > 0.0 {
            basis[i] = slack[i].unwrap();
        } else {
            basis[i] = ncols;
            ncols += 1;
        }
    }

    // Working matrix in column-major-friendly dense form.
    let mut work = DMatrix::<f64>::zeros(m, ncols);
    let mut b = DVector::<f64>::zeros(m);
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            work[(i, plus[j])] += sign[i] * a;
            if let Some(mj) = minus[j] {
                work[(i, mj)] -= sign[i] * a;
            }
        }
        match row.sense {
            Sense::Le => work[(i, slack[i].unwrap())] = sign[i],
            Sense::Ge => work[(i, slack[i].unwrap())] = -sign[i],
            Sense::Eq => {}
        }
        if basis[i] >= art_start {
            work[(i, basis[i])] = 1.0;
        }
        b[i] = sign[i] * row.rhs;
    }

    let width = ncols + 1;
    let mut data = vec![0.0; (m + 1) * width];
    for i in 0..m {
        for c in 0..ncols {
            data[i * width + c] = work[(i, c)];
        }
        data[i * width + ncols] = b[i];
    }
    let mut tab = Tableau {
        m,
        width,
        data,
        basis,
        iterations: 0,
    };

    if art_start < ncols {
        let mut phase1 = vec![0.0; ncols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        tab.set_costs(&phase1);
        tab.optimise(ncols)?;
        let infeasibility = -tab.at(m, ncols);
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > 1e-7 * scale {
            return Err(LpError::Infeasible(format!(
                "phase one ended with total artificial level {infeasibility:.6e}"
            )));
        }
        for r in 0..m {
            if tab.basis[r] < art_start {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..art_start {
                let a = tab.at(r, c).abs();
                if a > PIVOT_TOL && best.is_none_or(|(_, v)| a > v) {
                    best = Some((c, a));
                }
            }
            if let Some((c, _)) = best {
                tab.pivot(r, c);
            }
        }
    }

    let mut phase2 = vec![0.0; ncols];
    for j in 0..n {
        phase2[plus[j]] = lp.costs[j];
        if let Some(mj) = minus[j] {
            phase2[mj] = -lp.costs[j];
        }
    }
    tab.set_costs(&phase2);
    tab.optimise(art_start)?;

    // Re-solve with the final basis for clean primal and dual values.
    let mut basis_matrix = DMatrix::<f64>::zeros(m, m);
    let mut cb = DVector::<f64>::zeros(m);
    for (r, &c) in tab.basis.iter().enumerate() {
        basis_matrix.set_column(r, &work.column(c));
        cb[r] = phase2[c];
    }
    let (xb, yw) = if m == 0 {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let lu = basis_matrix.clone().lu();
        let xb = lu
            .solve(&b)
            .ok_or_else(|| LpError::NumericalFailure("singular final basis".into()))?;
        let lut = basis_matrix.transpose().lu();
        let yw = lut
            .solve(&cb)
            .ok_or_else(|| LpError::NumericalFailure("singular final basis".into()))?;
        (xb, yw)
    };
    let mut xw = vec![0.0; ncols];
    for (r, &c) in tab.basis.iter().enumerate() {
        let v = xb[r];
        if v < -1e-6 * (1.0 + v.abs()) {
            return Err(LpError::NumericalFailure(format!(
                "basis re-solve produced negative value {v:.3e}"
            )));
        }
        xw[c] = v.max(0.0);
    }
    let x: Vec<f64> = (0..n)
        .map(|j| xw[plus[j]] - minus[j].map_or(0.0, |mj| xw[mj]))
        .collect();
    let y: Vec<f64> = (0..m)
        .map(|i| {
            let v = sign[i] * yw[i];
            if v == 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(RawSolution {
        x,
        y,
        objective,
        iterations: tab.iterations,
    })
}
