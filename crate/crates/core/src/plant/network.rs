//! Algebraic node-voltage solve for the inductive part of the network.
//!
//! Unknown nodes (the common bus and any interior fault nodes, per phase) have
//! no capacitance. Their voltages follow from KCL: where a resistive fault
//! shunt is attached the node voltage is fixed directly by the branch
//! currents; elsewhere the series inductor currents are constrained and the
//! voltage is the one that keeps the constraint satisfied along the
//! trajectory. Both pieces reduce to one linear map, precomputed per switch
//! configuration:
//!
//! ```text
//! x = P_i · i + P_e · e
//! ```
//!
//! with `i` the branch currents and `e` the known-node voltage terms.

use nalgebra::{DMatrix, SymmetricEigen};

/// Branch of the inductive network: `L di/dt = v_from − v_to − R i`.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub r: f64,
    pub l: f64,
    /// Unknown-node index at the sending end, `None` if the end is a known node.
    pub from: Option<usize>,
    pub to: Option<usize>,
}

/// Conductance between an unknown node and ground or another unknown node.
#[derive(Debug, Clone, Copy)]
pub struct Shunt {
    pub a: usize,
    pub b: Option<usize>,
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct Solver {
    m: usize,
    nb: usize,
    p_i: Vec<f64>,
    p_e: Vec<f64>,
    g: Vec<f64>,
    k: Vec<f64>,
    /// Flux-conserving projection onto the constraint set, `None` if unconstrained.
    projector: Option<Vec<f64>>,
}

impl Solver {
    pub fn new(m: usize, branches: &[Branch], shunts: &[Shunt]) -> Self {
        let nb = branches.len();
        let mut k = DMatrix::<f64>::zeros(m, nb);
        for (b, br) in branches.iter().enumerate() {
            if let Some(f) = br.from {
                k[(f, b)] -= 1.0;
            }
            if let Some(t) = br.to {
                k[(t, b)] += 1.0;
            }
        }
        let mut g = DMatrix::<f64>::zeros(m, m);
        for s in shunts {
            g[(s.a, s.a)] += s.g;
            if let Some(b) = s.b {
                g[(b, b)] += s.g;
                g[(s.a, b)] -= s.g;
                g[(b, s.a)] -= s.g;
            }
        }
        let linv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            nb,
            branches.iter().map(|b| 1.0 / b.l),
        ));
        let rmat = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            nb,
            branches.iter().map(|b| b.r),
        ));

        let eig = SymmetricEigen::new(g.clone());
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let tol = 1e-12 * scale.max(1e-300);
        let (mut range, mut null) = (Vec::new(), Vec::new());
        for (j, &ev) in eig.eigenvalues.iter().enumerate() {
            let col = eig.eigenvectors.column(j).into_owned();
            if scale > 0.0 && ev.abs() > tol {
                range.push(col);
            } else {
                null.push(col);
            }
        }
        let basis = |cols: &[nalgebra::DVector<f64>]| {
            DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i])
        };
        let u = basis(&range);
        let n = basis(&null);
        let r = range.len();

        let kl = &k * &linv;
        let mmat = &kl * k.transpose();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs_i = DMatrix::<f64>::zeros(m, nb);
        let mut rhs_e = DMatrix::<f64>::zeros(m, nb);
        if r > 0 {
            a.rows_mut(0, r).copy_from(&(u.transpose() * &g));
            rhs_i.rows_mut(0, r).copy_from(&(u.transpose() * &k));
        }
        let mut projector = None;
        if r < m {
            let nt = n.transpose();
            a.rows_mut(r, m - r).copy_from(&(&nt * &mmat));
            rhs_i.rows_mut(r, m - r).copy_from(&(-(&nt * &kl) * &rmat));
            rhs_e.rows_mut(r, m - r).copy_from(&(&nt * &kl));

            let c = &nt * &k;
            let cl = &c * &linv;
            let s = (&cl * c.transpose())
                .try_inverse()
                .expect("constraint Gram matrix is singular");
            let proj = DMatrix::<f64>::identity(nb, nb) - linv.clone() * c.transpose() * s * &c;
            projector = Some(row_major(&proj));
        }
        let ainv = a.try_inverse().expect("node-voltage system is singular");
        Self {
            m,
            nb,
            p_i: row_major(&(&ainv * rhs_i)),
            p_e: row_major(&(&ainv * rhs_e)),
            g: row_major(&g),
            k: row_major(&k),
            projector,
        }
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn solve(&self, i: &[f64], e: &[f64], x: &mut [f64]) {
        debug_assert_eq!(i.len(), self.nb);
        for (n, xn) in x.iter_mut().enumerate().take(self.m) {
            let row_i = &self.p_i[n * self.nb..(n + 1) * self.nb];
            let row_e = &self.p_e[n * self.nb..(n + 1) * self.nb];
            let mut acc = 0.0;
            for b in 0..self.nb {
                acc += row_i[b] * i[b] + row_e[b] * e[b];
            }
            *xn = acc;
        }
    }

    /// Largest KCL mismatch `|G x − K i|` over the unknown nodes.
    pub fn kcl_residual(&self, i: &[f64], x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.m {
            let mut acc = 0.0;
            for j in 0..self.m {
                acc += self.g[n * self.m + j] * x[j];
            }
            for b in 0..self.nb {
                acc -= self.k[n * self.nb + b] * i[b];
            }
            worst = worst.max(acc.abs());
        }
        worst
    }

    /// Shunt current leaving each unknown node, `G x`.
    pub fn shunt_currents(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|n| (0..self.m).map(|j| self.g[n * self.m + j] * x[j]).sum())
            .collect()
    }

    /// Redistributes branch currents onto the constraint set while conserving
    /// total flux linkage; used when a shunt opens.
    pub fn project(&self, i: &mut [f64]) {
        if let Some(p) = &self.projector {
            let old = i.to_vec();
            for (r, out) in i.iter_mut().enumerate() {
                *out = (0..self.nb).map(|c| p[r * self.nb + c] * old[c]).sum();
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}
