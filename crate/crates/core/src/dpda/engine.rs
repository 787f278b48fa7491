//! Round-synchronous simulation of the distributed iteration.
//!
//! Every round runs three phases, each reading only a snapshot written by the
//! previous phase:
//!
//! 1. every node updates the rates it sends (sources also their moments and
//!    aggregate rate) from `z`, `u` and `λ`;
//! 2. every forwarding node updates its link prices from old and new rates on
//!    its links, and every node advances `z` for its own rates;
//! 3. every forwarding node recomputes `u = Bz` for its own conservation rows
//!    and publishes it.
//!
//! Reads of other nodes' values go through an [`Inbox`], which logs them so
//! that locality can be audited afterwards.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::steps::{validate_step_sizes, StepSizes, Violation};
use super::updates::{forward_update, price_update, source_update, z_update};
use crate::geometry::{DykstraConfig, GeometryError, SourceProjector};
use crate::problem::{Instance, ProblemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("step sizes violate {} condition(s)", .0.len())]
    StepSizeInvalid(Vec<Violation>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// How node updates inside one phase are scheduled. All orders produce the
/// same result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionOrder {
    Sequential,
    /// Nodes run in a pseudo-random order drawn per round from the seed.
    Shuffled(u64),
    Parallel,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub order: ExecutionOrder,
    pub record_messages: bool,
    /// Keep every `x^k` and `z^k`.
    pub keep_iterates: bool,
    /// Emit a trace row every this many rounds (the last round always).
    pub record_every: usize,
    /// Run even when the step sizes fail validation.
    pub allow_invalid_steps: bool,
    pub dykstra: DykstraConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            order: ExecutionOrder::Sequential,
            record_messages: false,
            keep_iterates: false,
            record_every: 1,
            allow_invalid_steps: false,
            dykstra: DykstraConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRef {
    /// Rate or source variable at the current round's new value.
    X(usize),
    /// Same variable at the previous round.
    XPrev(usize),
    Z(usize),
    /// Published divergence of a conservation row.
    U(usize),
    /// Price of a capacity row.
    Lambda(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Read {
    pub round: usize,
    pub reader: usize,
    pub owner: usize,
    pub var: VarRef,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageLog {
    pub reads: Vec<Read>,
    /// Reads from a node that is neither the reader nor one of its
    /// neighbours. Counted even when `reads` is not recorded.
    pub nonlocal: usize,
}

impl MessageLog {
    pub fn nonlocal_reads(&self, inst: &Instance) -> Vec<Read> {
        self.reads
            .iter()
            .filter(|r| r.owner != r.reader && !inst.net.are_neighbors(r.reader, r.owner))
            .copied()
            .collect()
    }
}

struct Inbox<'a> {
    inst: &'a Instance,
    reader: usize,
    round: usize,
    record: bool,
    reads: Vec<Read>,
    nonlocal: usize,
}

impl<'a> Inbox<'a> {
    fn new(inst: &'a Instance, reader: usize, round: usize, record: bool) -> Inbox<'a> {
        Inbox {
            inst,
            reader,
            round,
            record,
            reads: Vec::new(),
            nonlocal: 0,
        }
    }

    fn read(&mut self, owner: usize, var: VarRef, value: f64) -> f64 {
        if owner != self.reader && !self.inst.net.are_neighbors(self.reader, owner) {
            self.nonlocal += 1;
        }
        if self.record {
            self.reads.push(Read {
                round: self.round,
                reader: self.reader,
                owner,
                var,
            });
        }
        value
    }
}

/// Iterate state shared by all nodes, each entry owned by exactly one node.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// `Σ_s p_sᵀ m̄_s`.
    pub utility: f64,
    /// `‖B x̄‖₂`.
    pub conservation: f64,
    /// `Σ max(A x̄ - c, 0)`.
    pub capacity: f64,
    pub rbar: Vec<f64>,
    /// Running average `x̄^k` (`x^0` at `k = 0`).
    pub avg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub x_history: Option<Vec<Vec<f64>>>,
    pub z_history: Option<Vec<Vec<f64>>>,
    pub final_state: State,
    /// Source projections that stopped at their cycle cap.
    pub projection_warnings: usize,
    /// Dykstra cycles spent over all source projections.
    pub projection_cycles: usize,
}

/// Static per-node work lists.
struct Plan {
    /// Forwarding nodes and their own rate variables.
    forwarders: Vec<(usize, Vec<usize>)>,
    /// Capacity rows per forwarding node.
    cap_rows: Vec<Vec<usize>>,
    /// Conservation rows per forwarding node.
    cons_rows: Vec<Vec<usize>>,
    /// Every node that owns variables, with its variables (for `z`).
    owners: Vec<(usize, Vec<usize>)>,
}

impl Plan {
    fn new(inst: &Instance) -> Plan {
        let fwd = inst.layout.forward_range();
        let forwarders: Vec<(usize, Vec<usize>)> = inst
            .net
            .forwarders()
            .iter()
            .map(|&b| {
                (
                    b,
                    fwd.clone().filter(|&k| inst.layout.owner(k) == b).collect(),
                )
            })
            .collect();
        let cap_rows = inst
            .net
            .forwarders()
            .iter()
            .map(|&b| {
                (0..inst.cap_rows.len())
                    .filter(|&r| inst.cap_owner(r) == b)
                    .collect()
            })
            .collect();
        let cons_rows = inst
            .net
            .forwarders()
            .iter()
            .map(|&b| {
                (0..inst.cons_rows.len())
                    .filter(|&r| inst.cons_owner(r) == b)
                    .collect()
            })
            .collect();
        let mut owners: Vec<(usize, Vec<usize>)> = inst
            .layout
            .blocks()
            .iter()
            .enumerate()
            .map(|(o, blk)| (inst.net.sources()[o], blk.range().collect()))
            .collect();
        owners.extend(forwarders.iter().cloned());
        Plan {
            forwarders,
            cap_rows,
            cons_rows,
            owners,
        }
    }
}

/// Applies `f` to every index in `0..n` under the requested schedule and
/// returns results in index order.
fn schedule<T: Send>(
    order: ExecutionOrder,
    round: usize,
    phase: u64,
    n: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    match order {
        ExecutionOrder::Sequential => (0..n).map(f).collect(),
        ExecutionOrder::Parallel => (0..n).into_par_iter().map(f).collect(),
        ExecutionOrder::Shuffled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((round as u64) << 8) ^ phase);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
            for k in perm {
                slots[k] = Some(f(k));
            }
            slots
                .into_iter()
                .map(|v| v.expect("every slot filled"))
                .collect()
        }
    }
}

/// Coupling term `γ (Bᵀu)_k + (Aᵀλ)_k` of variable `k`, read through `inbox`.
fn coupling(inst: &Instance, gamma: f64, st: &State, k: usize, inbox: &mut Inbox) -> f64 {
    let mut g = 0.0;
    for &(r, c) in inst.b_col(k) {
        g += gamma * c * inbox.read(inst.cons_owner(r), VarRef::U(r), st.u[r]);
    }
    for &(r, c) in inst.a_col(k) {
        g += c * inbox.read(inst.cap_owner(r), VarRef::Lambda(r), st.lambda[r]);
    }
    g
}

fn compute_u(inst: &Instance, z: &[f64]) -> Vec<f64> {
    inst.b.mul_vec(z)
}

/// Runs `rounds` rounds from `init` (default [`Instance::initial_point`]).
pub fn run(
    inst: &Instance,
    ss: &StepSizes,
    init: Option<&[f64]>,
    rounds: usize,
    opts: &RunOptions,
) -> Result<(RunTrace, MessageLog), RunError> {
    if let Err(v) = validate_step_sizes(inst, ss) {
        if !opts.allow_invalid_steps {
            return Err(RunError::StepSizeInvalid(v));
        }
    }
    let x0 = match init {
        Some(x) => {
            inst.check_len(x)?;
            x.to_vec()
        }
        None => inst.initial_point(),
    };
    let projectors: Vec<Mutex<SourceProjector>> = (0..inst.source_count())
        .map(|o| {
            SourceProjector::new(&inst.utilities[o], &inst.source_caps(o), opts.dykstra)
                .map(Mutex::new)
        })
        .collect::<Result<_, _>>()?;
    let plan = Plan::new(inst);
    let record_every = opts.record_every.max(1);

    let mut st = State {
        u: compute_u(inst, &x0),
        z: x0.clone(),
        lambda: vec![0.0; inst.cap_rows.len()],
        x: x0,
    };
    let mut log = MessageLog::default();
    let mut sum = vec![0.0; inst.dim()];
    let mut rows = vec![trace_row(inst, 0, st.x.clone())];
    let mut x_history = opts.keep_iterates.then(|| vec![st.x.clone()]);
    let mut z_history = opts.keep_iterates.then(|| vec![st.z.clone()]);
    let mut warnings = 0;
    let mut cycles = 0;

    for round in 0..rounds {
        let rec = opts.record_messages;
        // phase 1: primal updates
        let src = schedule(opts.order, round, 1, inst.source_count(), |o| {
            let s = inst.net.sources()[o];
            let mut inbox = Inbox::new(inst, s, round, rec);
            let blk = inst.layout.block(o);
            let g: Vec<f64> = blk
                .rates()
                .map(|k| coupling(inst, ss.gamma, &st, k, &mut inbox))
                .collect();
            let current = inst.source_point(o, &st.x);
            let mut proj = projectors[o].lock().expect("projector lock");
            let out = source_update(
                &current,
                &g,
                ss.tau_source[o],
                &inst.utilities[o].coefficients,
                &mut proj,
            );
            (out, inbox.reads, inbox.nonlocal)
        });
        let fwd_start = inst.layout.forward_range().start;
        let fwd = schedule(opts.order, round, 2, plan.forwarders.len(), |n| {
            let (b, vars) = &plan.forwarders[n];
            let mut inbox = Inbox::new(inst, *b, round, rec);
            let vals: Vec<f64> = vars
                .iter()
                .map(|&k| {
                    let g = coupling(inst, ss.gamma, &st, k, &mut inbox);
                    forward_update(st.x[k], ss.tau[k - fwd_start], g)
                })
                .collect();
            (vals, inbox.reads, inbox.nonlocal)
        });
        let mut x_new = st.x.clone();
        for (o, (out, reads, nonlocal)) in src.into_iter().enumerate() {
            let (rep, capped) = out?;
            warnings += capped as usize;
            cycles += rep.iterations;
            inst.set_source_point(o, &mut x_new, &rep.result);
            log.reads.extend(reads);
            log.nonlocal += nonlocal;
        }
        for (n, (vals, reads, nonlocal)) in fwd.into_iter().enumerate() {
            for (&k, v) in plan.forwarders[n].1.iter().zip(vals) {
                x_new[k] = v;
            }
            log.reads.extend(reads);
            log.nonlocal += nonlocal;
        }

        // phase 2: prices and z
        let prices = schedule(opts.order, round, 3, plan.forwarders.len(), |n| {
            let b = plan.forwarders[n].0;
            let mut inbox = Inbox::new(inst, b, round, rec);
            let vals: Vec<f64> = plan.cap_rows[n]
                .iter()
                .map(|&r| {
                    let (mut new, mut old) = (0.0, 0.0);
                    for &(k, c) in &inst.a.rows[r] {
                        let owner = inst.layout.owner(k);
                        new += c * inbox.read(owner, VarRef::X(k), x_new[k]);
                        old += c * inbox.read(owner, VarRef::XPrev(k), st.x[k]);
                    }
                    price_update(st.lambda[r], ss.kappa[r], new, old, inst.capacities[r])
                })
                .collect();
            (vals, inbox.reads, inbox.nonlocal)
        });
        let zs = schedule(opts.order, round, 4, plan.owners.len(), |n| {
            plan.owners[n]
                .1
                .iter()
                .map(|&k| z_update(st.z[k], st.x[k], x_new[k]))
                .collect::<Vec<f64>>()
        });
        let mut lambda_new = st.lambda.clone();
        for (n, (vals, reads, nonlocal)) in prices.into_iter().enumerate() {
            for (&r, v) in plan.cap_rows[n].iter().zip(vals) {
                lambda_new[r] = v;
            }
            log.reads.extend(reads);
            log.nonlocal += nonlocal;
        }
        let mut z_new = st.z.clone();
        for (n, vals) in zs.into_iter().enumerate() {
            for (&k, v) in plan.owners[n].1.iter().zip(vals) {
                z_new[k] = v;
            }
        }

        // phase 3: divergences
        let us = schedule(opts.order, round, 5, plan.forwarders.len(), |n| {
            let b = plan.forwarders[n].0;
            let mut inbox = Inbox::new(inst, b, round, rec);
            let vals: Vec<f64> = plan.cons_rows[n]
                .iter()
                .map(|&r| {
                    inst.b.rows[r]
                        .iter()
                        .map(|&(k, c)| c * inbox.read(inst.layout.owner(k), VarRef::Z(k), z_new[k]))
                        .sum()
                })
                .collect();
            (vals, inbox.reads, inbox.nonlocal)
        });
        let mut u_new = st.u.clone();
        for (n, (vals, reads, nonlocal)) in us.into_iter().enumerate() {
            for (&r, v) in plan.cons_rows[n].iter().zip(vals) {
                u_new[r] = v;
            }
            log.reads.extend(reads);
            log.nonlocal += nonlocal;
        }

        st = State {
            x: x_new,
            z: z_new,
            u: u_new,
            lambda: lambda_new,
        };
        for (s, v) in sum.iter_mut().zip(&st.x) {
            *s += v;
        }
        let k = round + 1;
        if k % record_every == 0 || k == rounds {
            let avg = sum.iter().map(|v| v / k as f64).collect();
            rows.push(trace_row(inst, k, avg));
        }
        if let Some(h) = x_history.as_mut() {
            h.push(st.x.clone());
        }
        if let Some(h) = z_history.as_mut() {
            h.push(st.z.clone());
        }
    }

    Ok((
        RunTrace {
            rows,
            x_history,
            z_history,
            final_state: st,
            projection_warnings: warnings,
            projection_cycles: cycles,
        },
        log,
    ))
}

fn trace_row(inst: &Instance, k: usize, avg: Vec<f64>) -> TraceRow {
    TraceRow {
        k,
        utility: inst.objective(&avg),
        conservation: inst.conservation_residual(&avg),
        capacity: inst.capacity_distance(&avg),
        rbar: inst.aggregates(&avg),
        avg,
    }
}

/// `θ = γ B z`, the conservation multipliers the iteration carries
/// implicitly.
pub fn implied_theta(inst: &Instance, gamma: f64, z: &[f64]) -> Vec<f64> {
    inst.b.mul_vec(z).into_iter().map(|v| gamma * v).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub k: usize,
    pub conservation: f64,
    pub capacity: f64,
    /// `|Σ_s p_sᵀ(m̄_s - m_s⋆)|`.
    pub utility_gap: f64,
}

/// Feasibility residuals of every trace row and the utility gap to a
/// reference primal point.
pub fn residuals(
    inst: &Instance,
    trace: &RunTrace,
    reference: &[f64],
) -> Result<Vec<ResidualRow>, ProblemError> {
    inst.check_len(reference)?;
    let target = inst.objective(reference);
    trace
        .rows
        .iter()
        .map(|row| {
            inst.check_len(&row.avg)?;
            Ok(ResidualRow {
                k: row.k,
                conservation: inst.conservation_residual(&row.avg),
                capacity: inst.capacity_distance(&row.avg),
                utility_gap: (inst.objective(&row.avg) - target).abs(),
            })
        })
        .collect()
}
