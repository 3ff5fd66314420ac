//! Exact maximum-weight bipartite assignment (Hungarian method with potentials)
//! plus a tie-breaking pass that returns the lexicographically smallest optimum.

use crate::error::{Error, Result};

/// Dense row-major weight matrix; every row must be assigned to a distinct column.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("weight matrix rows differ in length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, w: f64) {
        self.data[r * self.cols + c] = w;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub columns: Vec<usize>,
    pub value: f64,
}

struct Solved {
    columns: Vec<usize>,
    cost: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Min-cost rectangular assignment (`rows <= cols`), O(rows^2 * cols).
fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Solved {
    let inf = f64::INFINITY;
    let at = |i: usize, j: usize| cost[(i - 1) * cols + (j - 1)];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0; rows];
    for j in 1..=cols {
        if p[j] != 0 {
            columns[p[j] - 1] = j - 1;
        }
    }
    let total = columns
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * cols + j])
        .sum();
    Solved {
        columns,
        cost: total,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Maximum-weight assignment of every row to a distinct column.
///
/// Among optimal assignments (values equal within a relative 1e-9) the one whose
/// column sequence is lexicographically smallest is returned.
pub fn max_weight_matching(weights: &WeightMatrix) -> Result<Assignment> {
    let (n, m) = (weights.rows, weights.cols);
    if n == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            value: 0.0,
        });
    }
    if n > m {
        return Err(Error::Config(format!(
            "matching needs rows <= columns, got {n} x {m}"
        )));
    }
    if weights.data.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weight matrix"));
    }
    if weights.data.iter().any(|&w| w < 0.0) {
        return Err(Error::Config("matching weights must be non-negative".into()));
    }
    let scale = weights.data.iter().fold(0.0f64, |a, &w| a.max(w));
    let tol = 1e-9 * (1.0 + scale * n as f64);

    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut taken = vec![false; m];
    for i in 0..n {
        // Reduced problem over rows i.. and the still-free columns.
        let free: Vec<usize> = (0..m).filter(|&j| !taken[j]).collect();
        let sub_rows = n - i;
        let reduced = |skip_col: Option<usize>, first_row: usize| -> (Vec<f64>, Vec<usize>) {
            let cols: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&j| Some(j) != skip_col)
                .collect();
            let mut c = Vec::with_capacity((n - first_row) * cols.len());
            for r in first_row..n {
                c.extend(cols.iter().map(|&j| -weights.get(r, j)));
            }
            (c, cols)
        };
        let (cost, cols) = reduced(None, i);
        let base = hungarian(&cost, sub_rows, cols.len());
        let chosen = cols[base.columns[0]];
        let mut pick = chosen;
        for (k, &j) in cols.iter().enumerate() {
            if j >= chosen {
                break;
            }
            let reduced_cost = cost[k] - base.u[0] - base.v[k];
            if reduced_cost.abs() > tol {
                continue;
            }
            let value = if sub_rows == 1 {
                cost[k]
            } else {
                let (rest, rest_cols) = reduced(Some(j), i + 1);
                cost[k] + hungarian(&rest, sub_rows - 1, rest_cols.len()).cost
            };
            if (value - base.cost).abs() <= tol {
                pick = j;
                break;
            }
        }
        fixed.push(pick);
        taken[pick] = true;
    }
    let value = fixed
        .iter()
        .enumerate()
        .map(|(i, &j)| weights.get(i, j))
        .sum();
    Ok(Assignment {
        columns: fixed,
        value,
    })
}

#[cfg(test)]
#[path = "../../tests/common/oracles.rs"]
mod oracles;
