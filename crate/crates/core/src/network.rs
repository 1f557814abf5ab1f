//! Parallel composition of plants and edge controllers and the positive
//! feedback interconnection through the graph incidence matrix.
//!
//! With plant outputs `Y_p` and controller outputs `Y_c` the closed loop is
//!
//! ```text
//! U_c = (Q ⊗ I_m) Y_p        (edge differences, fed to the controllers)
//! U_p = (Qᵀ ⊗ I_m) Y_c       (fed back to the plants without sign change)
//! ```
//!
//! Outputs depend on the state only, so the loop has no algebraic part and
//! the stacked state `(x_p1, …, x_pN, x_c1, …, x_cl)` obeys an ordinary ODE.

use std::ops::Range;
use std::sync::Arc;

use crate::dynamics::{integrate, IntegratorConfig, SystemModel, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::topology::OrientedIncidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Plants,
    Controllers,
}

/// Independent systems stacked side by side: inputs, states and outputs
/// are concatenated in member order.
#[derive(Debug, Clone)]
pub struct ParallelNetwork<T: Scalar> {
    members: Vec<SystemModel<T>>,
    role: Role,
    io_dim: usize,
    state_offsets: Vec<usize>,
}

impl<T: Scalar> ParallelNetwork<T> {
    pub fn new(members: Vec<SystemModel<T>>, role: Role) -> Result<Self> {
        let first = members.first().ok_or_else(|| {
            Error::InvalidParameter(format!("{role:?} network needs at least one member"))
        })?;
        let io_dim = first.input_dim();
        for (i, m) in members.iter().enumerate() {
            if m.input_dim() != io_dim || m.output_dim() != io_dim {
                return Err(Error::InvalidParameter(format!(
                    "{role:?} member {i} ({}) has input/output dims {}/{}, expected {io_dim}/{io_dim}",
                    m.name(),
                    m.input_dim(),
                    m.output_dim()
                )));
            }
        }
        let mut state_offsets = Vec::with_capacity(members.len() + 1);
        let mut offset = 0;
        state_offsets.push(0);
        for m in &members {
            offset += m.state_dim();
            state_offsets.push(offset);
        }
        Ok(Self {
            members,
            role,
            io_dim,
            state_offsets,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn members(&self) -> &[SystemModel<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Common input/output dimension `m` of every member.
    pub fn io_dim(&self) -> usize {
        self.io_dim
    }

    pub fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap_or(&0)
    }

    /// `(state_dim, io_dim)` of each member.
    pub fn block_dims(&self) -> Vec<(usize, usize)> {
        self.members
            .iter()
            .map(|m| (m.state_dim(), self.io_dim))
            .collect()
    }

    pub fn state_range(&self, member: usize) -> Range<usize> {
        self.state_offsets[member]..self.state_offsets[member + 1]
    }

    fn io_range(&self, member: usize) -> Range<usize> {
        member * self.io_dim..(member + 1) * self.io_dim
    }

    pub fn has_storage(&self) -> bool {
        self.members.iter().all(SystemModel::has_storage)
    }

    pub fn field(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(x.len());
        for (i, m) in self.members.iter().enumerate() {
            out.extend(m.field(&x[self.state_range(i)], &u[self.io_range(i)]));
        }
        out
    }

    pub fn output(&self, x: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * self.io_dim);
        for (i, m) in self.members.iter().enumerate() {
            out.extend(m.output(&x[self.state_range(i)]));
        }
        out
    }

    pub fn output_rate(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * self.io_dim);
        for (i, m) in self.members.iter().enumerate() {
            out.extend(m.output_rate_unchecked(&x[self.state_range(i)], &u[self.io_range(i)]));
        }
        out
    }

    /// Sum of member storages; `None` if any member has none.
    pub fn storage(&self, x: &[T]) -> Option<T> {
        self.members
            .iter()
            .enumerate()
            .try_fold(T::zero(), |acc, (i, m)| {
                m.storage(&x[self.state_range(i)]).map(|v| acc + v)
            })
    }

    /// The composite as a single [`SystemModel`].
    pub fn to_model(&self) -> SystemModel<T> {
        let net = Arc::new(self.clone());
        let (n, io) = (self.state_dim(), self.len() * self.io_dim);
        let name = match self.role {
            Role::Plants => "plant_network",
            Role::Controllers => "controller_network",
        };
        let (nf, nh) = (net.clone(), net.clone());
        let mut model = SystemModel::new(
            name,
            n,
            io,
            io,
            move |x, u| nf.field(x, u),
            move |x| nh.output(x),
        );
        if self.members.iter().all(SystemModel::has_output_jacobian) {
            let nj = net.clone();
            model = model.with_output_jacobian(move |x| nj.block_jacobian(x));
        }
        if self.has_storage() {
            let nv = net.clone();
            model = model.with_storage(move |x| nv.storage(x).expect("all members have storage"));
            if self.members.iter().all(SystemModel::has_storage_gradient) {
                let ng = net;
                model = model.with_storage_gradient(move |x| ng.storage_gradient(x));
            }
        }
        model
    }

    fn block_jacobian(&self, x: &[T]) -> Vec<T> {
        let n = self.state_dim();
        let rows = self.len() * self.io_dim;
        let mut jac = vec![T::zero(); rows * n];
        for (i, m) in self.members.iter().enumerate() {
            let cols = self.state_range(i);
            let local = m
                .output_jacobian(&x[cols.clone()])
                .expect("all members have output jacobians");
            let width = cols.len();
            for r in 0..self.io_dim {
                let row = i * self.io_dim + r;
                jac[row * n + cols.start..row * n + cols.end]
                    .copy_from_slice(&local[r * width..(r + 1) * width]);
            }
        }
        jac
    }

    fn storage_gradient(&self, x: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(x.len());
        for (i, m) in self.members.iter().enumerate() {
            out.extend(
                m.storage_gradient(&x[self.state_range(i)])
                    .expect("all members have storage gradients"),
            );
        }
        out
    }
}

/// Convenience wrapper for [`ParallelNetwork::new`].
pub fn parallel_compose<T: Scalar>(
    models: Vec<SystemModel<T>>,
    role: Role,
) -> Result<ParallelNetwork<T>> {
    ParallelNetwork::new(models, role)
}

/// Controller inputs `u_ck = Σ_j q_kj y_pj`.
pub fn edge_inputs<T: Scalar>(
    q: &OrientedIncidence,
    m: usize,
    plant_outputs: &[T],
) -> Result<Vec<T>> {
    q.apply(m, plant_outputs)
}

/// Plant inputs `u_pi = Σ_k q_ki y_ck`.
pub fn node_inputs<T: Scalar>(
    q: &OrientedIncidence,
    m: usize,
    controller_outputs: &[T],
) -> Result<Vec<T>> {
    q.apply_transpose(m, controller_outputs)
}

/// Plants on the nodes and OSNI controllers on the edges of a connected
/// graph, closed in positive feedback.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem<T: Scalar> {
    plants: ParallelNetwork<T>,
    controllers: ParallelNetwork<T>,
    incidence: OrientedIncidence,
    io_dim: usize,
    eps_min: T,
}

impl<T: Scalar> ClosedLoopSystem<T> {
    pub fn new(
        plants: ParallelNetwork<T>,
        controllers: ParallelNetwork<T>,
        incidence: OrientedIncidence,
    ) -> Result<Self> {
        if incidence.n_edges() == 0 || !incidence.underlying_graph().is_connected() {
            return Err(Error::Disconnected);
        }
        if plants.len() != incidence.n_nodes() {
            return Err(Error::CountMismatch {
                what: "plants (one per graph node)",
                expected: incidence.n_nodes(),
                found: plants.len(),
            });
        }
        if controllers.len() != incidence.n_edges() {
            return Err(Error::CountMismatch {
                what: "controllers (one per graph edge)",
                expected: incidence.n_edges(),
                found: controllers.len(),
            });
        }
        if plants.io_dim() != controllers.io_dim() {
            return Err(Error::CountMismatch {
                what: "controller io dimension",
                expected: plants.io_dim(),
                found: controllers.io_dim(),
            });
        }
        let mut eps_min = T::infinity();
        for (k, c) in controllers.members().iter().enumerate() {
            match c.strictness() {
                Some(eps) if eps > T::zero() => eps_min = eps_min.min(eps),
                _ => return Err(Error::MissingStrictness(k)),
            }
        }
        let io_dim = plants.io_dim();
        Ok(Self {
            plants,
            controllers,
            incidence,
            io_dim,
            eps_min,
        })
    }

    pub fn plants(&self) -> &ParallelNetwork<T> {
        &self.plants
    }

    pub fn controllers(&self) -> &ParallelNetwork<T> {
        &self.controllers
    }

    pub fn incidence(&self) -> &OrientedIncidence {
        &self.incidence
    }

    pub fn io_dim(&self) -> usize {
        self.io_dim
    }

    /// Smallest declared controller strictness level.
    pub fn eps_min(&self) -> T {
        self.eps_min
    }

    pub fn state_dim(&self) -> usize {
        self.plants.state_dim() + self.controllers.state_dim()
    }

    /// Splits a stacked state into `(plant states, controller states)`.
    pub fn split<'a>(&self, x: &'a [T]) -> (&'a [T], &'a [T]) {
        x.split_at(self.plants.state_dim())
    }

    /// Stacks per-member states in member order.
    pub fn stack_state(
        &self,
        plant_states: &[Vec<T>],
        controller_states: &[Vec<T>],
    ) -> Result<Vec<T>> {
        check_len(
            "plant initial states",
            self.plants.len(),
            plant_states.len(),
        )?;
        check_len(
            "controller initial states",
            self.controllers.len(),
            controller_states.len(),
        )?;
        let mut x = Vec::with_capacity(self.state_dim());
        for (m, s) in self.plants.members().iter().zip(plant_states) {
            check_len("plant state", m.state_dim(), s.len())?;
            x.extend_from_slice(s);
        }
        for (m, s) in self.controllers.members().iter().zip(controller_states) {
            check_len("controller state", m.state_dim(), s.len())?;
            x.extend_from_slice(s);
        }
        Ok(x)
    }

    /// `(Y_p, Y_c)` at a stacked state.
    pub fn outputs(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let (xp, xc) = self.split(x);
        (self.plants.output(xp), self.controllers.output(xc))
    }

    /// `(U_p, U_c)` at a stacked state.
    pub fn inputs(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let (yp, yc) = self.outputs(x);
        self.inputs_from_outputs(&yp, &yc)
    }

    fn inputs_from_outputs(&self, yp: &[T], yc: &[T]) -> (Vec<T>, Vec<T>) {
        let m = self.io_dim;
        let mut up = vec![T::zero(); self.plants.len() * m];
        let mut uc = vec![T::zero(); self.controllers.len() * m];
        self.incidence.apply_transpose_into(m, yc, &mut up);
        self.incidence.apply_into(m, yp, &mut uc);
        (up, uc)
    }

    /// Stacked closed-loop vector field.
    pub fn field(&self, x: &[T]) -> Vec<T> {
        let (xp, xc) = self.split(x);
        let (up, uc) = self.inputs(x);
        let mut out = self.plants.field(xp, &up);
        out.extend(self.controllers.field(xc, &uc));
        out
    }

    /// Checked version of [`Self::field`].
    pub fn eval_field(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("stacked state", self.state_dim(), x.len())?;
        Ok(self.field(x))
    }

    /// `(Ẏ_p, Ẏ_c)` at a stacked state.
    pub fn output_rates(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let (xp, xc) = self.split(x);
        let (up, uc) = self.inputs(x);
        (
            self.plants.output_rate(xp, &up),
            self.controllers.output_rate(xc, &uc),
        )
    }

    /// The autonomous closed loop as a [`SystemModel`] with no inputs and
    /// output `(Y_p, Y_c)`.
    pub fn to_model(&self) -> SystemModel<T> {
        let sys = Arc::new(self.clone());
        let out_dim = (self.plants.len() + self.controllers.len()) * self.io_dim;
        let (sf, sh) = (sys.clone(), sys);
        SystemModel::new(
            "closed_loop",
            self.state_dim(),
            0,
            out_dim,
            move |x, _u| sf.field(x),
            move |x| {
                let (mut yp, yc) = sh.outputs(x);
                yp.extend(yc);
                yp
            },
        )
    }
}

/// Convenience wrapper for [`ClosedLoopSystem::new`].
pub fn close_loop<T: Scalar>(
    plants: ParallelNetwork<T>,
    controllers: ParallelNetwork<T>,
    q: OrientedIncidence,
) -> Result<ClosedLoopSystem<T>> {
    ClosedLoopSystem::new(plants, controllers, q)
}

/// Closed-loop trajectory with the per-network output series.
///
/// `base.outputs` holds `(Y_p, Y_c)` and `base.output_rates` holds
/// `(Ẏ_p, Ẏ_c)`; the closed loop has no external inputs so `base.inputs`
/// are empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrajectory<T: Scalar> {
    pub base: Trajectory<T>,
    pub plant_outputs: Vec<Vec<T>>,
    /// `(Q ⊗ I_m) Y_p`, which is also the controller input `U_c`.
    pub edge_differences: Vec<Vec<T>>,
    pub controller_outputs: Vec<Vec<T>>,
    pub controller_output_rates: Vec<Vec<T>>,
}

impl<T: Scalar> NetworkTrajectory<T> {
    pub fn times(&self) -> &[T] {
        &self.base.times
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.base.diverged()
    }
}

pub fn simulate_closed_loop<T: Scalar>(
    clm: &ClosedLoopSystem<T>,
    x0: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<NetworkTrajectory<T>> {
    cfg.validate()?;
    check_len("stacked initial state", clm.state_dim(), x0.len())?;
    let cap = cfg.n_records();
    let mut base = Trajectory {
        times: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        inputs: Vec::with_capacity(cap),
        outputs: Vec::with_capacity(cap),
        output_rates: Vec::with_capacity(cap),
        divergence: None,
    };
    let mut plant_outputs = Vec::with_capacity(cap);
    let mut edge_differences = Vec::with_capacity(cap);
    let mut controller_outputs = Vec::with_capacity(cap);
    let mut controller_output_rates = Vec::with_capacity(cap);

    let field = |_t: T, x: &[T]| clm.field(x);
    base.divergence = integrate(&field, x0, cfg, |t, x| {
        let (xp, xc) = clm.split(x);
        let (yp, yc) = clm.outputs(x);
        let (up, uc) = clm.inputs_from_outputs(&yp, &yc);
        let yp_rate = clm.plants.output_rate(xp, &up);
        let yc_rate = clm.controllers.output_rate(xc, &uc);

        base.times.push(t);
        base.states.push(x.to_vec());
        base.inputs.push(Vec::new());
        base.outputs.push(yp.iter().chain(&yc).copied().collect());
        base.output_rates
            .push(yp_rate.iter().chain(&yc_rate).copied().collect());
        plant_outputs.push(yp);
        edge_differences.push(uc);
        controller_outputs.push(yc);
        controller_output_rates.push(yc_rate);
    });
    Ok(NetworkTrajectory {
        base,
        plant_outputs,
        edge_differences,
        controller_outputs,
        controller_output_rates,
    })
}

/// Identifies one member of a closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Member {
    Plant(usize),
    Controller(usize),
}

/// Extracts the open-loop view of one member from a closed-loop
/// trajectory: its states, the inputs the network fed it, its outputs and
/// output rates.
pub fn member_trajectory<T: Scalar>(
    clm: &ClosedLoopSystem<T>,
    ntraj: &NetworkTrajectory<T>,
    member: Member,
) -> Trajectory<T> {
    let m = clm.io_dim;
    let n_plant_states = clm.plants.state_dim();
    let (states_range, io_range, model) = match member {
        Member::Plant(i) => (
            clm.plants.state_range(i),
            i * m..(i + 1) * m,
            &clm.plants.members[i],
        ),
        Member::Controller(k) => {
            let r = clm.controllers.state_range(k);
            (
                r.start + n_plant_states..r.end + n_plant_states,
                k * m..(k + 1) * m,
                &clm.controllers.members[k],
            )
        }
    };
    let mut traj = Trajectory {
        times: ntraj.base.times.clone(),
        states: Vec::with_capacity(ntraj.len()),
        inputs: Vec::with_capacity(ntraj.len()),
        outputs: Vec::with_capacity(ntraj.len()),
        output_rates: Vec::with_capacity(ntraj.len()),
        divergence: ntraj.base.divergence,
    };
    for (idx, x) in ntraj.base.states.iter().enumerate() {
        let xs = x[states_range.clone()].to_vec();
        let u = match member {
            Member::Plant(_) => {
                let (up, _) = clm
                    .inputs_from_outputs(&ntraj.plant_outputs[idx], &ntraj.controller_outputs[idx]);
                up[io_range.clone()].to_vec()
            }
            Member::Controller(_) => ntraj.edge_differences[idx][io_range.clone()].to_vec(),
        };
        traj.outputs.push(model.output(&xs));
        traj.output_rates.push(model.output_rate_unchecked(&xs, &u));
        traj.states.push(xs);
        traj.inputs.push(u);
    }
    traj
}
