//! Sparse block systems `[[A, B], [C, D]] [x; q] = [s_x; s_q]` assembled by the
//! augmented schemes.

/// Square system over `grid + augmented` unknowns stored as triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    grid: usize,
    augmented: usize,
    entries: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl BlockSystem {
    pub(crate) fn new(grid: usize, augmented: usize) -> Self {
        Self { grid, augmented, entries: Vec::new(), rhs: vec![0.0; grid + augmented] }
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub(crate) fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    /// Number of grid unknowns (`N_t + 1`).
    pub fn grid_dim(&self) -> usize {
        self.grid
    }

    /// Number of augmented unknowns (`N - 1`).
    pub fn augmented_dim(&self) -> usize {
        self.augmented
    }

    pub fn dim(&self) -> usize {
        self.grid + self.augmented
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Nonzeros of the grid-by-augmented block (`B`).
    pub fn coupling_entries(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter().filter(move |(r, c, _)| *r < self.grid && *c >= self.grid)
    }

    /// `M x - s`, where `x` stacks grid values then augmented values.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "unknown vector has wrong length");
        let mut r: Vec<f64> = self.rhs.iter().map(|s| -s).collect();
        for &(row, col, a) in &self.entries {
            r[row] += a * x[col];
        }
        r
    }

    /// Row-major dense copy, for small systems and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for &(row, col, a) in &self.entries {
            m[row][col] += a;
        }
        m
    }
}
