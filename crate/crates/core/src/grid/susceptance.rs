//! DC susceptance assembly (reactances only, no shunts or taps).

use nalgebra::DMatrix;

use super::BusTopology;
use crate::{Error, Result};

/// `B_bus` split into generator/load blocks, each ordered like the topology's
/// generator and load lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptancePartition {
    pub gg: DMatrix<f64>,
    pub gl: DMatrix<f64>,
    pub lg: DMatrix<f64>,
    pub ll: DMatrix<f64>,
}

impl SusceptancePartition {
    /// Reassembles the full matrix in (generators, loads) order.
    pub fn full(&self) -> DMatrix<f64> {
        let (ng, nl) = (self.gg.nrows(), self.ll.nrows());
        let mut b = DMatrix::zeros(ng + nl, ng + nl);
        b.view_mut((0, 0), (ng, ng)).copy_from(&self.gg);
        b.view_mut((0, ng), (ng, nl)).copy_from(&self.gl);
        b.view_mut((ng, 0), (nl, ng)).copy_from(&self.lg);
        b.view_mut((ng, ng), (nl, nl)).copy_from(&self.ll);
        b
    }
}

/// Full `B_bus` in `topology.bus_ids` order: `B_ij = -sum 1/x_ij`, `B_ii = sum_j 1/x_ij`.
pub fn susceptance_matrix(topology: &BusTopology) -> Result<DMatrix<f64>> {
    let n = topology.bus_ids.len();
    let mut b = DMatrix::zeros(n, n);
    for br in &topology.branches {
        if !(br.reactance > 0.0) || !br.reactance.is_finite() {
            return Err(Error::Numeric(format!(
                "branch {}-{} has non-positive reactance {}",
                br.from, br.to, br.reactance
            )));
        }
        let i = topology
            .bus_index(br.from)
            .ok_or_else(|| Error::Structure(format!("unknown bus {}", br.from)))?;
        let j = topology
            .bus_index(br.to)
            .ok_or_else(|| Error::Structure(format!("unknown bus {}", br.to)))?;
        if i == j {
            continue;
        }
        let y = 1.0 / br.reactance;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
        b[(i, i)] += y;
        b[(j, j)] += y;
    }
    Ok(b)
}

pub fn build_susceptance(topology: &BusTopology) -> Result<SusceptancePartition> {
    let full = susceptance_matrix(topology)?;
    let g: Vec<usize> = topology
        .generator_buses
        .iter()
        .map(|&b| topology.bus_index(b).expect("validated topology"))
        .collect();
    let l: Vec<usize> = topology
        .load_buses
        .iter()
        .map(|&b| topology.bus_index(b).expect("validated topology"))
        .collect();
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| full[(rows[r], cols[c])])
    };
    Ok(SusceptancePartition {
        gg: block(&g, &g),
        gl: block(&g, &l),
        lg: block(&l, &g),
        ll: block(&l, &l),
    })
}
