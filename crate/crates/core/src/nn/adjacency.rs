use crate::graph::Graph;
use crate::linalg::Matrix;

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` in CSR form.
///
/// The matrix is symmetric, so the same product serves the forward pass and
/// the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
            .collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(n + 2 * g.num_edges());
        let mut values = Vec::with_capacity(indices.capacity());
        indptr.push(0);
        for v in 0..n {
            // neighbor lists are sorted; splice the self-loop in order
            let mut placed = false;
            for &w in g.neighbors(v) {
                if !placed && w > v {
                    indices.push(v);
                    values.push(inv_sqrt[v] * inv_sqrt[v]);
                    placed = true;
                }
                indices.push(w);
                values.push(inv_sqrt[v] * inv_sqrt[w]);
            }
            if !placed {
                indices.push(v);
                values.push(inv_sqrt[v] * inv_sqrt[v]);
            }
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// `Ā · m`
    pub fn apply(&self, m: &Matrix) -> Matrix {
        assert_eq!(m.rows(), self.num_nodes(), "adjacency/operand size mismatch");
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..self.num_nodes() {
            for (j, a) in self.row(i) {
                for (o, &x) in out.row_mut(i).iter_mut().zip(m.row(j)) {
                    *o += a * x;
                }
            }
        }
        out
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_nodes(), "adjacency/operand size mismatch");
        (0..self.num_nodes())
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for (j, a) in self.row(i) {
                m.set(i, j, a);
            }
        }
        m
    }
}
