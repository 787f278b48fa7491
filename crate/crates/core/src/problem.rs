//! The convex relaxation assembled for one network: flattened layout,
//! conservation matrix `B`, capacity matrix `A` and per-source utilities.

use thiserror::Error;

use crate::geometry::SourcePoint;
use crate::moments::{dirac_moments, UtilitySpec};
use crate::net::{self, Layout, Network, SparseRows};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("{got} utilities given for {sources} sources")]
    UtilityCount { got: usize, sources: usize },
    #[error(
        "source `{source_id}` cannot reach its minimum rate {xi}: first-hop capacity is {capacity}"
    )]
    InfeasibleMinimum {
        source_id: String,
        xi: f64,
        capacity: f64,
    },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub net: Network,
    pub layout: Layout,
    pub utilities: Vec<UtilitySpec>,
    /// Conservation rows `(b, i)`.
    pub cons_rows: Vec<(usize, usize)>,
    /// Capacity rows `(b, l)`.
    pub cap_rows: Vec<(usize, usize)>,
    pub b: SparseRows,
    pub a: SparseRows,
    pub capacities: Vec<f64>,
    b_cols: Vec<Vec<(usize, f64)>>,
    a_cols: Vec<Vec<(usize, f64)>>,
}

impl Instance {
    pub fn new(net: Network, utilities: Vec<UtilitySpec>) -> Result<Instance, ProblemError> {
        if utilities.len() != net.sources().len() {
            return Err(ProblemError::UtilityCount {
                got: utilities.len(),
                sources: net.sources().len(),
            });
        }
        for (o, u) in utilities.iter().enumerate() {
            let capacity: f64 = net.source_links(o).iter().map(|&l| net.capacity(l)).sum();
            if capacity < u.xi {
                return Err(ProblemError::InfeasibleMinimum {
                    source_id: net.node_id(net.sources()[o]).to_string(),
                    xi: u.xi,
                    capacity,
                });
            }
        }
        let orders: Vec<usize> = utilities.iter().map(|u| u.order).collect();
        let layout = Layout::new(&net, &orders);
        let b = net::incidence_matrix(&net, &layout);
        let a = net::capacity_matrix(&net, &layout);
        let b_cols = b.columns();
        let a_cols = a.columns();
        Ok(Instance {
            cons_rows: net::conservation_rows(&net),
            cap_rows: net::capacity_rows(&net),
            capacities: net::capacity_vector(&net),
            b,
            a,
            b_cols,
            a_cols,
            layout,
            utilities,
            net,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn source_count(&self) -> usize {
        self.utilities.len()
    }

    /// `(row, coefficient)` entries of column `k` of `B`.
    pub fn b_col(&self, k: usize) -> &[(usize, f64)] {
        &self.b_cols[k]
    }

    /// `(row, coefficient)` entries of column `k` of `A`.
    pub fn a_col(&self, k: usize) -> &[(usize, f64)] {
        &self.a_cols[k]
    }

    /// Capacities of the first-hop links of source `o`, in `L_s` order.
    pub fn source_caps(&self, o: usize) -> Vec<f64> {
        self.net
            .source_links(o)
            .iter()
            .map(|&l| self.net.capacity(l))
            .collect()
    }

    /// Node owning conservation row `r`.
    pub fn cons_owner(&self, r: usize) -> usize {
        self.cons_rows[r].0
    }

    /// Node owning capacity row `r`.
    pub fn cap_owner(&self, r: usize) -> usize {
        self.cap_rows[r].0
    }

    pub fn check_len(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                got: x.len(),
                expected: self.dim(),
            });
        }
        Ok(())
    }

    pub fn source_point(&self, o: usize, x: &[f64]) -> SourcePoint {
        let blk = self.layout.block(o);
        SourcePoint::new(
            x[blk.rates()].to_vec(),
            x[blk.moments()].to_vec(),
            x[blk.aggregate()],
        )
    }

    pub fn set_source_point(&self, o: usize, x: &mut [f64], p: &SourcePoint) {
        let blk = self.layout.block(o);
        x[blk.rates()].copy_from_slice(&p.rates);
        x[blk.moments()].copy_from_slice(&p.moments);
        x[blk.aggregate()] = p.aggregate;
    }

    /// Relaxed objective `Σ_s p_sᵀ m_s`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.utilities
            .iter()
            .enumerate()
            .map(|(o, u)| {
                let m = &x[self.layout.block(o).moments()];
                u.coefficients
                    .iter()
                    .zip(m)
                    .map(|(p, v)| p * v)
                    .sum::<f64>()
            })
            .sum()
    }

    /// `‖Bx‖₂`.
    pub fn conservation_residual(&self, x: &[f64]) -> f64 {
        self.b.mul_vec(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `Σ_{b,l} max(A_{b,l} x - c_l, 0)`.
    pub fn capacity_distance(&self, x: &[f64]) -> f64 {
        self.a
            .mul_vec(x)
            .iter()
            .zip(&self.capacities)
            .map(|(v, c)| (v - c).max(0.0))
            .sum()
    }

    pub fn aggregates(&self, x: &[f64]) -> Vec<f64> {
        self.layout
            .blocks()
            .iter()
            .map(|b| x[b.aggregate()])
            .collect()
    }

    /// Default start: zero rates, Dirac moments at 0, `r_s = ξ_s`.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (o, u) in self.utilities.iter().enumerate() {
            let blk = self.layout.block(o);
            x[blk.moments()].copy_from_slice(&dirac_moments(0.0, u.order).0);
            x[blk.aggregate()] = u.xi;
        }
        x
    }

    /// Per-link total traffic in `x`, in link declaration order.
    pub fn link_loads(&self, x: &[f64]) -> Vec<f64> {
        (0..self.net.link_count())
            .map(|l| net::link_traffic(&self.net, &self.layout, x, l))
            .collect()
    }
}
