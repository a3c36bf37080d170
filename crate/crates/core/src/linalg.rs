//! Node-link incidence matrices and their compact SVD.
//!
//! Every origin block of the flow vector shares one incidence matrix, so a
//! single factorization serves all blocks of a traveler class. The affine
//! projection `z - A⁺(Az - d)` is evaluated as `z - Aᵀ (U Σ⁻² Uᵀ)(Az - d)`,
//! which equals `z - V Σ⁻¹ Uᵀ (Az - d)` but keeps the dense work on the
//! (small) node dimension.

use nalgebra::{DMatrix, DVector};

use crate::error::{MaasError, Result};

/// Relative cut-off (against the largest) below which eigenvalues of `A Aᵀ`,
/// i.e. squared singular values, are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct IncidenceSvd {
    n_nodes: usize,
    tails: Vec<usize>,
    heads: Vec<usize>,
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
}

impl IncidenceSvd {
    pub fn new(n_nodes: usize, tails: Vec<usize>, heads: Vec<usize>) -> Result<Self> {
        if tails.len() != heads.len() {
            return Err(MaasError::Shape("tail and head lists differ in length".into()));
        }
        if let Some(&bad) = tails.iter().chain(heads.iter()).find(|&&n| n >= n_nodes) {
            return Err(MaasError::Config(format!("incidence references node {bad} of {n_nodes}")));
        }
        let n_links = tails.len();
        if n_links == 0 || n_nodes == 0 {
            return Ok(Self {
                n_nodes,
                tails,
                heads,
                u: DMatrix::zeros(n_nodes, 0),
                sigma: DVector::zeros(0),
                v_t: DMatrix::zeros(0, n_links),
                gram_pinv: DMatrix::zeros(n_nodes, n_nodes),
            });
        }
        let mut dense: DMatrix<f64> = DMatrix::zeros(n_nodes, n_links);
        for (a, (&t, &h)) in tails.iter().zip(&heads).enumerate() {
            dense[(t, a)] -= 1.0;
            dense[(h, a)] += 1.0;
        }
        // A Aᵀ is a graph Laplacian; its symmetric eigendecomposition is far
        // more reliable than bidiagonal SVD on these 0/±1 matrices.
        let gram: DMatrix<f64> = &dense * dense.transpose();
        let eig = gram.symmetric_eigen();
        let l_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if l_max <= 0.0 {
            return Err(MaasError::Config("incidence matrix has no positive singular value".into()));
        }
        let mut keep: Vec<usize> = (0..n_nodes)
            .filter(|&i| eig.eigenvalues[i] > SINGULAR_CUTOFF * l_max)
            .collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let rank = keep.len();
        let mut u = DMatrix::zeros(n_nodes, rank);
        let mut sigma = DVector::zeros(rank);
        for (k, &i) in keep.iter().enumerate() {
            u.set_column(k, &eig.eigenvectors.column(i));
            sigma[k] = eig.eigenvalues[i].sqrt();
        }
        let mut v_t = u.transpose() * &dense;
        for k in 0..rank {
            v_t.row_mut(k).scale_mut(1.0 / sigma[k]);
        }
        let mut scaled = u.clone();
        for k in 0..rank {
            let s2 = sigma[k] * sigma[k];
            scaled.column_mut(k).scale_mut(1.0 / s2);
        }
        let gram_pinv = &scaled * u.transpose();
        Ok(Self { n_nodes, tails, heads, u, sigma, v_t, gram_pinv })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_links(&self) -> usize {
        self.tails.len()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn right_vectors_t(&self) -> &DMatrix<f64> {
        &self.v_t
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_nodes, self.n_links());
        for (a, (&t, &h)) in self.tails.iter().zip(&self.heads).enumerate() {
            m[(t, a)] -= 1.0;
            m[(h, a)] += 1.0;
        }
        m
    }

    /// `U Σ Vᵀ` from the retained factors.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for k in 0..self.rank() {
            us.column_mut(k).scale_mut(self.sigma[k]);
        }
        us * &self.v_t
    }

    /// `out = A x` for a single block.
    pub fn multiply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, &xa) in x.iter().enumerate() {
            out[self.tails[a]] -= xa;
            out[self.heads[a]] += xa;
        }
    }

    /// `out = Aᵀ y` for a single block.
    pub fn multiply_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = y[self.heads[a]] - y[self.tails[a]];
        }
    }

    /// Node residuals `A z_b - d_b` for all blocks, stacked as columns.
    fn residuals(&self, z: &[f64], d: Option<&[f64]>, blocks: usize) -> DMatrix<f64> {
        let (n, m) = (self.n_nodes, self.n_links());
        let mut r = DMatrix::zeros(n, blocks);
        for b in 0..blocks {
            let zb = &z[b * m..(b + 1) * m];
            let col = r.column_mut(b);
            let col = col.data.into_slice_mut();
            self.multiply(zb, col);
            if let Some(d) = d {
                for (c, &di) in col.iter_mut().zip(&d[b * n..(b + 1) * n]) {
                    *c -= di;
                }
            }
        }
        r
    }

    fn subtract_transpose(&self, s: &DMatrix<f64>, z: &mut [f64], blocks: usize) {
        let m = self.n_links();
        for b in 0..blocks {
            let sb = s.column(b);
            let zb = &mut z[b * m..(b + 1) * m];
            for (a, za) in zb.iter_mut().enumerate() {
                *za -= sb[self.heads[a]] - sb[self.tails[a]];
            }
        }
    }

    /// Projects every block of `z` onto `{A z_b = d_b}` in place.
    pub fn project_blocks(&self, z: &mut [f64], d: &[f64], blocks: usize) {
        if blocks == 0 || self.n_links() == 0 {
            return;
        }
        let r = self.residuals(z, Some(d), blocks);
        let s = &self.gram_pinv * r;
        self.subtract_transpose(&s, z, blocks);
    }

    /// Applies `I - A⁺A` to every block in place.
    pub fn null_project_blocks(&self, w: &mut [f64], blocks: usize) {
        if blocks == 0 || self.n_links() == 0 {
            return;
        }
        let r = self.residuals(w, None, blocks);
        let s = &self.gram_pinv * r;
        self.subtract_transpose(&s, w, blocks);
    }

    /// `A⁺ r_b` for every block (node residuals in, link corrections out).
    pub fn pinv_blocks(&self, r: &[f64], blocks: usize) -> Vec<f64> {
        let (n, m) = (self.n_nodes, self.n_links());
        let mut out = vec![0.0; m * blocks];
        if blocks == 0 || m == 0 {
            return out;
        }
        let rm = DMatrix::from_column_slice(n, blocks, r);
        let s = &self.gram_pinv * rm;
        for b in 0..blocks {
            let sb = s.column(b);
            for a in 0..m {
                out[b * m + a] = sb[self.heads[a]] - sb[self.tails[a]];
            }
        }
        out
    }

    /// `(A⁺)ᵀ v_b = (U Σ⁻² Uᵀ) A v_b` for every block.
    pub fn pinv_transpose_blocks(&self, v: &[f64], blocks: usize) -> Vec<f64> {
        let n = self.n_nodes;
        if blocks == 0 || self.n_links() == 0 {
            return vec![0.0; n * blocks];
        }
        let r = self.residuals(v, None, blocks);
        let s = &self.gram_pinv * r;
        s.as_slice().to_vec()
    }

    /// Dense `A⁺ = V Σ⁻¹ Uᵀ`, used by tests and small oracles.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let mut v = self.v_t.transpose();
        for k in 0..self.rank() {
            v.column_mut(k).scale_mut(1.0 / self.sigma[k]);
        }
        v * self.u.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> IncidenceSvd {
        // 0 -> 1 -> 3, 0 -> 2 -> 3
        IncidenceSvd::new(4, vec![0, 1, 0, 2], vec![1, 3, 2, 3]).unwrap()
    }

    #[test]
    fn reconstructs_incidence() {
        let svd = diamond();
        assert_eq!(svd.rank(), 3);
        let diff = svd.reconstruct() - svd.dense();
        assert!(diff.amax() < 1e-10);
    }

    #[test]
    fn projection_satisfies_conservation() {
        let svd = diamond();
        let mut z = vec![0.3, -1.0, 2.0, 0.5];
        let d = vec![-5.0, 0.0, 0.0, 5.0];
        svd.project_blocks(&mut z, &d, 1);
        let mut az = vec![0.0; 4];
        svd.multiply(&z, &mut az);
        for (x, y) in az.iter().zip(&d) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn single_link_least_squares() {
        // min ||z||² s.t. flow 5 from node 0 to node 1: z = 5
        let svd = IncidenceSvd::new(2, vec![0], vec![1]).unwrap();
        let mut z = vec![0.0];
        svd.project_blocks(&mut z, &[-5.0, 5.0], 1);
        assert!((z[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_pseudo_inverse() {
        let svd = diamond();
        let pinv = svd.pseudo_inverse();
        let r = [1.0, -2.0, 0.5, 0.5];
        let fast = svd.pinv_blocks(&r, 1);
        let dense = &pinv * DVector::from_column_slice(&r);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let v = [0.2, 0.7, -0.1, 1.3];
        let fast_t = svd.pinv_transpose_blocks(&v, 1);
        let dense_t = pinv.transpose() * DVector::from_column_slice(&v);
        for (a, b) in fast_t.iter().zip(dense_t.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_incidence_is_allowed() {
        let svd = IncidenceSvd::new(2, vec![], vec![]).unwrap();
        assert_eq!(svd.rank(), 0);
        let mut z: Vec<f64> = vec![];
        svd.project_blocks(&mut z, &[0.0, 0.0], 1);
    }
}
