//! Kron-reduced linear dynamics in deviation coordinates.
//!
//! The load-bus balance (third block row) is solved for the load angles,
//!
//! ```text
//! theta = -B_LL^-1 (B_LG delta - K_L omega + eps)
//! ```
//!
//! leaving `x' = A x + b` over `x = [delta; omega]` with
//!
//! ```text
//! A = [ 0                                   I                              ]
//!     [ -M^-1 (K_I + B_GG - S B_LG)   -M^-1 (K_P + D_G + S K_L) ]
//! b = [ 0 ; M^-1 S eps ],    S = B_GL B_LL^-1
//! ```

use nalgebra::{DMatrix, DVector};

use super::{build_susceptance, BusTopology, DynamicParams, SusceptancePartition};
use crate::attack::AttackScenario;
use crate::{Error, Result};

/// `x' = A x + b` plus the affine map recovering load-bus angles.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `N_L x (2 N_G + 1)`: `theta = R[:, ..2N_G] x + R[:, 2N_G]`.
    pub reduction_map: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_gen(&self) -> usize {
        self.a.nrows() / 2
    }

    /// Load-bus angles (rad) for state `x`.
    pub fn load_angles(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n_state();
        self.reduction_map.columns(0, n) * x + self.reduction_map.column(n)
    }
}

/// A case with its susceptance blocks, dynamic parameters, and the
/// attack-independent parts of the reduction cached.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub name: String,
    pub topology: BusTopology,
    pub susceptance: SusceptancePartition,
    pub params: DynamicParams,
    /// Default upper end of the attack-gain sampling range (pu).
    pub gain_max: f64,
    ll_inv: DMatrix<f64>,
    kron: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    inv_inertia: DVector<f64>,
}

impl GridModel {
    pub fn new(
        name: &str,
        topology: BusTopology,
        params: DynamicParams,
        gain_max: f64,
    ) -> Result<Self> {
        topology.validate()?;
        params.validate(&topology)?;
        let susceptance = build_susceptance(&topology)?;
        Self::from_parts(name, topology, susceptance, params, gain_max)
    }

    fn from_parts(
        name: &str,
        topology: BusTopology,
        susceptance: SusceptancePartition,
        params: DynamicParams,
        gain_max: f64,
    ) -> Result<Self> {
        let ll_inv = susceptance
            .ll
            .clone()
            .lu()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| {
                Error::Numeric(format!("B_LL is singular for case '{name}'; cannot reduce"))
            })?;
        let kron = &susceptance.gl * &ll_inv;
        let mut stiffness = &susceptance.gg - &kron * &susceptance.lg;
        for (i, &k) in params.ki.iter().enumerate() {
            stiffness[(i, i)] += k;
        }
        let inv_inertia = DVector::from_iterator(params.inertia.len(), params.inertia.iter().map(|m| 1.0 / m));
        Ok(GridModel {
            name: name.to_string(),
            topology,
            susceptance,
            params,
            gain_max,
            ll_inv,
            kron,
            stiffness,
            inv_inertia,
        })
    }

    pub fn n_gen(&self) -> usize {
        self.topology.n_gen()
    }

    pub fn n_load(&self) -> usize {
        self.topology.n_load()
    }

    /// `S = B_GL B_LL^-1`: how load-bus injections reach the generator buses.
    pub fn distribution_factors(&self) -> &DMatrix<f64> {
        &self.kron
    }

    /// Assembles the model for gain matrix `K_L` (`N_L x N_G`, pu) and static
    /// load step `eps` (`N_L`, MW).
    pub fn assemble(&self, gain: &DMatrix<f64>, epsilon_mw: &DVector<f64>) -> Result<StateSpaceModel> {
        let (ng, nl) = (self.n_gen(), self.n_load());
        if gain.shape() != (nl, ng) {
            return Err(Error::Shape(format!(
                "gain matrix is {}x{}, expected {nl}x{ng}",
                gain.nrows(),
                gain.ncols()
            )));
        }
        if epsilon_mw.len() != nl {
            return Err(Error::Shape(format!(
                "static attack vector has {} entries, expected {nl}",
                epsilon_mw.len()
            )));
        }
        let eps_pu = epsilon_mw / self.topology.base_mva;

        let mut damping = &self.kron * gain;
        for i in 0..ng {
            damping[(i, i)] += self.params.kp[i] + self.params.gen_damping[i];
        }

        let n = 2 * ng;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..ng {
            a[(i, ng + i)] = 1.0;
            let s = -self.inv_inertia[i];
            for j in 0..ng {
                a[(ng + i, j)] = s * self.stiffness[(i, j)];
                a[(ng + i, ng + j)] = s * damping[(i, j)];
            }
        }

        let drive = &self.kron * &eps_pu;
        let mut b = DVector::zeros(n);
        for i in 0..ng {
            b[ng + i] = self.inv_inertia[i] * drive[i];
        }

        let mut reduction_map = DMatrix::zeros(nl, n + 1);
        let from_delta = -(&self.ll_inv * &self.susceptance.lg);
        let from_omega = &self.ll_inv * gain;
        let offset = -(&self.ll_inv * &eps_pu);
        reduction_map.view_mut((0, 0), (nl, ng)).copy_from(&from_delta);
        reduction_map.view_mut((0, ng), (nl, ng)).copy_from(&from_omega);
        reduction_map.column_mut(n).copy_from(&offset);

        Ok(StateSpaceModel { a, b, reduction_map })
    }

    pub fn assemble_attack(&self, attack: &AttackScenario) -> Result<StateSpaceModel> {
        self.assemble(&attack.gain_matrix(&self.topology)?, &attack.epsilon_mw(&self.topology)?)
    }

    /// Model with no attack applied.
    pub fn nominal(&self) -> StateSpaceModel {
        self.assemble(
            &DMatrix::zeros(self.n_load(), self.n_gen()),
            &DVector::zeros(self.n_load()),
        )
        .expect("zero attack has matching shapes")
    }

    /// Residual of the eliminated load-bus balance at `(x, theta)`:
    /// `B_LG delta - K_L omega + B_LL theta + eps` (pu).
    pub fn algebraic_residual(
        &self,
        gain: &DMatrix<f64>,
        epsilon_mw: &DVector<f64>,
        x: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> DVector<f64> {
        let ng = self.n_gen();
        let delta = x.rows(0, ng);
        let omega = x.rows(ng, ng);
        &self.susceptance.lg * delta - gain * omega + &self.susceptance.ll * theta
            + epsilon_mw / self.topology.base_mva
    }
}

/// One-shot assembly from components; see [`GridModel::assemble`].
pub fn assemble_dynamics(
    topology: &BusTopology,
    susceptance: &SusceptancePartition,
    params: &DynamicParams,
    attack: &AttackScenario,
) -> Result<StateSpaceModel> {
    params.validate(topology)?;
    let grid = GridModel::from_parts(
        &topology.name,
        topology.clone(),
        susceptance.clone(),
        params.clone(),
        1.0,
    )?;
    grid.assemble_attack(attack)
}
