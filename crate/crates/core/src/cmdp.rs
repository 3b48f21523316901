//! Constrained-MDP route to the scheduling problem: discounted value
//! iteration on the Lagrangian stage cost over capped version-age states,
//! exact policy evaluation on the induced Markov chain, bisection on the
//! power multiplier `θ`, and verification of the threshold structure of
//! the optimal policy.
//!
//! The state is `(Δ, h)`: the per-user version ages at the end of the
//! previous slot and the current joint channel realization. The stage cost
//! charges the end-of-slot expected ages plus `θ` times the allocated
//! power,
//!
//! ```text
//! C(s, u, θ) = Σᵢ wᵢ E[Δ′ᵢ | s, u] + θ Σᵢ uᵢ Pᵢ(h, u),
//! Δ′ᵢ = 0 if uᵢ = 1, else min(Δᵢ + Aᵢ, Δ_max),
//! ```
//!
//! which makes the unconstrained (`θ = 0`) optimum exactly zero. Ages are
//! capped at `Δ_max`; evaluation reports the stationary mass sitting at
//! the cap so truncation artifacts are visible rather than silent.

use std::collections::BTreeMap;
use std::io::Write;

use crate::cosrp::{subset_masks, Scheme};
use crate::error::{Error, Result};
use crate::model::{noma_powers, ActionVector, ChannelModel, JointChannelState, RateFunction, StreamConfig};

/// Tolerances, caps and discounting for the CMDP solver.
#[derive(Debug, Clone)]
pub struct MdpConfig {
    /// Per-user age cap (inclusive).
    pub delta_max: u32,
    /// Discount factor, proxy for the average-cost limit as it approaches 1.
    pub gamma: f64,
    /// Sup-norm stopping tolerance for value iteration.
    pub vi_tol: f64,
    /// Cap on value-iteration sweeps.
    pub max_vi_iters: usize,
    /// Cap on the number of states.
    pub state_cap: usize,
    /// `|power − pbar|` tolerance; `None` resolves to `max(1e-4·pbar, 1e-6)`.
    pub eps_power: Option<f64>,
    /// Initial upper bracket for `θ`, doubled until the budget is met.
    pub theta_hi_init: f64,
    /// Cap on bisection iterations.
    pub max_bisect: usize,
    /// Bisection also halts when the bracket is narrower than this.
    pub bracket_tol: f64,
    /// L1 residual target for the stationary distribution.
    pub chain_tol: f64,
    /// Cap on power-iteration steps for the stationary distribution.
    pub max_chain_iters: usize,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            delta_max: 20,
            gamma: 0.99,
            vi_tol: 1e-6,
            max_vi_iters: 200_000,
            state_cap: 1_000_000,
            eps_power: None,
            theta_hi_init: 1.0,
            max_bisect: 60,
            bracket_tol: 1e-10,
            chain_tol: 1e-12,
            max_chain_iters: 2_000_000,
        }
    }
}

impl MdpConfig {
    pub fn resolved_eps_power(&self, pbar: f64) -> f64 {
        self.eps_power.unwrap_or_else(|| (1e-4 * pbar).max(1e-6))
    }

    fn validate(&self) -> Result<()> {
        if self.delta_max < 1 {
            return Err(Error::invalid("delta_max must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if !(self.vi_tol > 0.0) {
            return Err(Error::invalid("vi_tol must be positive"));
        }
        Ok(())
    }
}

/// One CMDP state: per-user ages and an index into the joint-channel
/// enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpState {
    pub delta: Vec<u32>,
    pub channel_index: usize,
}

/// Index arithmetic over the `(Δ, h)` grid. Age digits are ordered with
/// user 0 most significant; the channel index is the fastest-varying part.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n_users: usize,
    delta_max: u32,
    n_levels: usize,
    n_delta: usize,
    n_channels: usize,
}

impl StateSpace {
    pub fn new(model: &ChannelModel, delta_max: u32, state_cap: usize) -> Result<Self> {
        let n_users = model.n_users();
        let mut n_delta: usize = 1;
        for _ in 0..n_users {
            n_delta = n_delta.saturating_mul(delta_max as usize + 1);
        }
        let n_channels = model.n_joint_states();
        let total = n_delta.saturating_mul(n_channels);
        if total > state_cap {
            return Err(Error::SizeLimit(format!(
                "{total} CMDP states exceed the cap of {state_cap}; reduce delta_max, users or gain levels"
            )));
        }
        Ok(StateSpace {
            n_users,
            delta_max,
            n_levels: model.n_levels(),
            n_delta,
            n_channels,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_delta * self.n_channels
    }

    pub fn n_delta(&self) -> usize {
        self.n_delta
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn delta_max(&self) -> u32 {
        self.delta_max
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn delta_index(&self, delta: &[u32]) -> usize {
        debug_assert_eq!(delta.len(), self.n_users);
        let base = self.delta_max as usize + 1;
        delta.iter().fold(0, |acc, &d| acc * base + d as usize)
    }

    pub fn deltas_of(&self, mut d_index: usize) -> Vec<u32> {
        let base = self.delta_max as usize + 1;
        let mut out = vec![0u32; self.n_users];
        for i in (0..self.n_users).rev() {
            out[i] = (d_index % base) as u32;
            d_index /= base;
        }
        out
    }

    pub fn index(&self, state: &MdpState) -> usize {
        self.delta_index(&state.delta) * self.n_channels + state.channel_index
    }

    pub fn state(&self, index: usize) -> MdpState {
        MdpState {
            delta: self.deltas_of(index / self.n_channels),
            channel_index: index % self.n_channels,
        }
    }

    /// Level indices of a joint channel state (user 0 most significant).
    pub fn channel_levels(&self, mut channel_index: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.n_users];
        for i in (0..self.n_users).rev() {
            out[i] = channel_index % self.n_levels;
            channel_index /= self.n_levels;
        }
        out
    }
}

/// Converged discounted values with convergence telemetry.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub theta: f64,
    pub space: StateSpace,
    /// Sup-norm change per sweep, in order.
    pub sweep_diffs: Vec<f64>,
    /// `max_s |V(s) − (TV)(s)|` measured after convergence.
    pub bellman_residual: f64,
}

impl ValueFunction {
    /// Counts states where raising one user's age strictly lowers the
    /// value (it never should).
    pub fn monotonicity_violations(&self) -> usize {
        let sp = &self.space;
        let base = sp.delta_max as usize + 1;
        let mut violations = 0;
        for s in 0..sp.n_states() {
            let st = sp.state(s);
            for i in 0..sp.n_users {
                if st.delta[i] as usize + 1 >= base {
                    continue;
                }
                let mut up = st.clone();
                up.delta[i] += 1;
                if self.values[sp.index(&up)] < self.values[s] - 1e-9 {
                    violations += 1;
                }
            }
        }
        violations
    }
}

/// Deterministic action table over the full state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpPolicy {
    pub actions: Vec<u32>,
    pub scheme: Scheme,
    pub space: StateSpaceDims,
}

/// Plain-data copy of the dimensions a policy was built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpaceDims {
    pub n_users: usize,
    pub delta_max: u32,
    pub n_channels: usize,
}

impl CmdpPolicy {
    /// Lifts a channel-only subset rule to the full grid: the same mask at
    /// every age vector.
    pub fn channel_only(
        scheme: Scheme,
        space: &StateSpace,
        masks_per_channel: &[u32],
    ) -> Result<Self> {
        if masks_per_channel.len() != space.n_channels() {
            return Err(Error::invalid("one mask per joint channel state required"));
        }
        let alphabet = subset_masks(scheme, space.n_users());
        for &m in masks_per_channel {
            if !alphabet.contains(&m) {
                return Err(Error::invalid(format!("mask {m:#b} not in the {} alphabet", scheme.as_str())));
            }
        }
        let mut actions = Vec::with_capacity(space.n_states());
        for s in 0..space.n_states() {
            actions.push(masks_per_channel[s % space.n_channels()]);
        }
        Ok(CmdpPolicy {
            actions,
            scheme,
            space: StateSpaceDims {
                n_users: space.n_users(),
                delta_max: space.delta_max(),
                n_channels: space.n_channels(),
            },
        })
    }

    pub fn constant(scheme: Scheme, space: &StateSpace, mask: u32) -> Result<Self> {
        Self::channel_only(scheme, space, &vec![mask; space.n_channels()])
    }
}

/// Shared precomputation for value iteration, evaluation and checks.
struct Tables {
    space: StateSpace,
    joint: Vec<JointChannelState>,
    actions: Vec<u32>,
    /// `powers[c][a][i]`: allocation for user `i` when subset `a` is sent in channel `c`.
    powers: Vec<Vec<Vec<f64>>>,
    /// arrival masks and probabilities
    arr_prob: Vec<f64>,
    /// `stage_age[d][a]`: Σᵢ wᵢ E[Δ′ᵢ]
    stage_age: Vec<Vec<f64>>,
    /// `next_d[d][a][m]`
    next_d: Vec<Vec<Vec<u32>>>,
    /// users whose age is zero, per age index
    zero_mask: Vec<u32>,
    /// `expected_power[c][a][zmask]`: scheduled power with zero-age users
    /// discounted by their arrival probability (their queue only holds
    /// something when a version just arrived)
    expected_power: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
}

impl Tables {
    fn build(
        model: &ChannelModel,
        streams: &[StreamConfig],
        f: RateFunction,
        scheme: Scheme,
        config: &MdpConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = model.n_users();
        if streams.len() != n {
            return Err(Error::invalid("stream/model dimension mismatch"));
        }
        let space = StateSpace::new(model, config.delta_max, config.state_cap)?;
        let joint = model.enumerate_joint_states()?;
        let actions = subset_masks(scheme, n);
        let mut powers = Vec::with_capacity(joint.len());
        for state in &joint {
            let mut per_action = Vec::with_capacity(actions.len());
            for &mask in &actions {
                let u = ActionVector::from_mask(mask, n)?;
                per_action.push(noma_powers(&state.gains, u, streams, f)?.powers);
            }
            powers.push(per_action);
        }
        let mut expected_power = vec![vec![vec![0.0; 1 << n]; actions.len()]; powers.len()];
        for (c, per_action) in powers.iter().enumerate() {
            for (a_pos, &a) in actions.iter().enumerate() {
                for zmask in 0..(1u32 << n) {
                    let mut total = 0.0;
                    for i in 0..n {
                        if a >> i & 1 == 1 {
                            let occ = if zmask >> i & 1 == 1 { streams[i].lambda } else { 1.0 };
                            total += occ * per_action[a_pos][i];
                        }
                    }
                    expected_power[c][a_pos][zmask as usize] = total;
                }
            }
        }
        let n_arr = 1usize << n;
        let mut arr_prob = vec![0.0; n_arr];
        for m in 0..n_arr {
            let mut prob = 1.0;
            for (i, s) in streams.iter().enumerate() {
                prob *= if m >> i & 1 == 1 { s.lambda } else { 1.0 - s.lambda };
            }
            arr_prob[m] = prob;
        }
        let cap = config.delta_max;
        let mut zero_mask = vec![0u32; space.n_delta()];
        let mut stage_age = vec![vec![0.0; actions.len()]; space.n_delta()];
        let mut next_d = vec![vec![vec![0u32; n_arr]; actions.len()]; space.n_delta()];
        let mut delta_buf = vec![0u32; n];
        for d in 0..space.n_delta() {
            let deltas = space.deltas_of(d);
            for (i, &dv) in deltas.iter().enumerate() {
                if dv == 0 {
                    zero_mask[d] |= 1 << i;
                }
            }
            for (a_pos, &a) in actions.iter().enumerate() {
                let mut age = 0.0;
                for i in 0..n {
                    if a >> i & 1 == 0 {
                        let bumped = (deltas[i] + 1).min(cap);
                        age += streams[i].weight
                            * (streams[i].lambda * bumped as f64
                                + (1.0 - streams[i].lambda) * deltas[i] as f64);
                    }
                }
                stage_age[d][a_pos] = age;
                for m in 0..n_arr {
                    for i in 0..n {
                        delta_buf[i] = if a >> i & 1 == 1 {
                            0
                        } else {
                            (deltas[i] + (m >> i & 1) as u32).min(cap)
                        };
                    }
                    next_d[d][a_pos][m] = space.delta_index(&delta_buf) as u32;
                }
            }
        }
        Ok(Tables {
            space,
            joint,
            actions,
            powers,
            arr_prob,
            stage_age,
            next_d,
            zero_mask,
            expected_power,
            weights: streams.iter().map(|s| s.weight).collect(),
        })
    }

    fn q_value(&self, theta: f64, gamma: f64, w_exp: &[f64], d: usize, c: usize, a_pos: usize) -> f64 {
        let mut future = 0.0;
        for (m, &pm) in self.arr_prob.iter().enumerate() {
            if pm > 0.0 {
                future += pm * w_exp[self.next_d[d][a_pos][m] as usize];
            }
        }
        let power = self.expected_power[c][a_pos][self.zero_mask[d] as usize];
        self.stage_age[d][a_pos] + theta * power + gamma * future
    }
}

/// Expected Lagrangian stage cost of one state-action pair: end-of-slot
/// expected ages plus `θ` times the expected transmit power. A scheduled
/// queue at age zero only holds something when a version just arrived, so
/// its power is weighted by the arrival probability.
pub fn expected_stage_cost(
    s: &MdpState,
    u: ActionVector,
    theta: f64,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    delta_max: u32,
) -> Result<f64> {
    let n = model.n_users();
    if s.delta.len() != n || u.n_users() != n {
        return Err(Error::invalid("state/action dimension mismatch"));
    }
    let space = StateSpace::new(model, delta_max, usize::MAX)?;
    let levels = space.channel_levels(s.channel_index);
    let gains: Vec<f64> = levels.iter().map(|&l| model.levels()[l]).collect();
    let powers = noma_powers(&gains, u, streams, f)?;
    let mut cost = 0.0;
    for i in 0..n {
        if u.contains(i) {
            let occ = if s.delta[i] > 0 { 1.0 } else { streams[i].lambda };
            cost += theta * occ * powers.powers[i];
        } else {
            let bumped = (s.delta[i] + 1).min(delta_max);
            cost += streams[i].weight
                * (streams[i].lambda * bumped as f64 + (1.0 - streams[i].lambda) * s.delta[i] as f64);
        }
    }
    Ok(cost)
}

fn run_value_iteration(
    tables: &Tables,
    theta: f64,
    config: &MdpConfig,
    v0: Option<&[f64]>,
) -> Result<(ValueFunction, CmdpPolicy)> {
    let sp = &tables.space;
    let n_states = sp.n_states();
    let n_ch = sp.n_channels();
    let n_delta = sp.n_delta();
    let gamma = config.gamma;
    let mut v = match v0 {
        Some(init) if init.len() == n_states => init.to_vec(),
        _ => vec![0.0; n_states],
    };
    let mut v_next = vec![0.0; n_states];
    let mut w_exp = vec![0.0; n_delta];
    let mut sweep_diffs = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_vi_iters {
        for d in 0..n_delta {
            let mut acc = 0.0;
            for (c, state) in tables.joint.iter().enumerate() {
                acc += state.prob * v[d * n_ch + c];
            }
            w_exp[d] = acc;
        }
        let mut diff = 0.0f64;
        for d in 0..n_delta {
            for c in 0..n_ch {
                let mut best = f64::INFINITY;
                for a_pos in 0..tables.actions.len() {
                    let q = tables.q_value(theta, gamma, &w_exp, d, c, a_pos);
                    if q < best {
                        best = q;
                    }
                }
                let idx = d * n_ch + c;
                diff = diff.max((best - v[idx]).abs());
                v_next[idx] = best;
            }
        }
        std::mem::swap(&mut v, &mut v_next);
        sweep_diffs.push(diff);
        if diff < config.vi_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            what: format!("value iteration at theta={theta}"),
            iterations: config.max_vi_iters,
            residual: sweep_diffs.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    // greedy extraction and Bellman residual in one extra application
    for d in 0..n_delta {
        let mut acc = 0.0;
        for (c, state) in tables.joint.iter().enumerate() {
            acc += state.prob * v[d * n_ch + c];
        }
        w_exp[d] = acc;
    }
    let mut actions = vec![0u32; n_states];
    let mut residual = 0.0f64;
    for d in 0..n_delta {
        for c in 0..n_ch {
            let mut best = f64::INFINITY;
            let mut best_mask = tables.actions[0];
            for (a_pos, &mask) in tables.actions.iter().enumerate() {
                let q = tables.q_value(theta, gamma, &w_exp, d, c, a_pos);
                if q < best {
                    best = q;
                    best_mask = mask;
                }
            }
            let idx = d * n_ch + c;
            actions[idx] = best_mask;
            residual = residual.max((best - v[idx]).abs());
        }
    }
    let policy = CmdpPolicy {
        actions,
        scheme: if tables.actions.iter().any(|&m| m.count_ones() > 1) {
            Scheme::Noma
        } else {
            Scheme::Tdma
        },
        space: StateSpaceDims {
            n_users: sp.n_users(),
            delta_max: sp.delta_max(),
            n_channels: n_ch,
        },
    };
    Ok((
        ValueFunction {
            values: v,
            theta,
            space: sp.clone(),
            sweep_diffs,
            bellman_residual: residual,
        },
        policy,
    ))
}

/// Discounted value iteration from `V ≡ 0` at a fixed `θ`. Returns the
/// converged values and the greedy policy (ties broken toward the
/// lexicographically smallest subset mask).
pub fn value_iteration(
    theta: f64,
    config: &MdpConfig,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    scheme: Scheme,
) -> Result<(ValueFunction, CmdpPolicy)> {
    let tables = Tables::build(model, streams, f, scheme, config)?;
    run_value_iteration(&tables, theta, config, None)
}

/// Exact long-run averages of a deterministic policy on its induced chain.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub weighted_vaoi: f64,
    pub average_power: f64,
    pub per_user_vaoi: Vec<f64>,
    /// Stationary mass at the age cap, per user.
    pub tail_mass: Vec<f64>,
    /// More than one closed communicating class was reachable.
    pub reducible: bool,
    pub closed_classes: usize,
    /// `(weighted_vaoi, power)` per closed class when reducible.
    pub per_class: Vec<(f64, f64)>,
    pub chain_iterations: usize,
}

struct ChainStep {
    /// per (state, arrival mask): destination age index
    dest: Vec<Vec<u32>>,
    /// per (state, arrival mask): power charged
    power: Vec<Vec<f64>>,
}

fn chain_step(tables: &Tables, policy: &CmdpPolicy) -> ChainStep {
    let sp = &tables.space;
    let n = sp.n_users();
    let n_arr = tables.arr_prob.len();
    let n_ch = sp.n_channels();
    let mut dest = vec![vec![0u32; n_arr]; sp.n_states()];
    let mut power = vec![vec![0.0; n_arr]; sp.n_states()];
    let mut buf = vec![0u32; n];
    for s in 0..sp.n_states() {
        let d = s / n_ch;
        let c = s % n_ch;
        let deltas = sp.deltas_of(d);
        let mask = policy.actions[s];
        let a_pos = tables.actions.iter().position(|&m| m == mask).unwrap();
        for m in 0..n_arr {
            // a scheduled user with an empty queue is masked off: nothing
            // to send, no power spent
            let mut charged = 0.0;
            for i in 0..n {
                let scheduled = mask >> i & 1 == 1;
                let occupied = deltas[i] > 0 || m >> i & 1 == 1;
                if scheduled && occupied {
                    charged += tables.powers[c][a_pos][i];
                    buf[i] = 0;
                } else if scheduled {
                    buf[i] = 0; // age is already 0 and nothing arrived
                } else {
                    buf[i] = (deltas[i] + (m >> i & 1) as u32).min(sp.delta_max());
                }
            }
            dest[s][m] = sp.delta_index(&buf) as u32;
            power[s][m] = charged;
        }
    }
    ChainStep { dest, power }
}

fn stationary_from(
    tables: &Tables,
    step: &ChainStep,
    start: &[f64],
    config: &MdpConfig,
) -> Result<(Vec<f64>, usize)> {
    let sp = &tables.space;
    let n_ch = sp.n_channels();
    let n_states = sp.n_states();
    let mut pi = start.to_vec();
    let mut rho = vec![0.0f64; sp.n_delta()];
    let mut iterations = 0;
    loop {
        rho.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..n_states {
            let mass = pi[s];
            if mass == 0.0 {
                continue;
            }
            for (m, &pm) in tables.arr_prob.iter().enumerate() {
                if pm > 0.0 {
                    rho[step.dest[s][m] as usize] += mass * pm;
                }
            }
        }
        let mut l1 = 0.0;
        let mut next = vec![0.0f64; n_states];
        for d in 0..sp.n_delta() {
            if rho[d] == 0.0 {
                continue;
            }
            for (c, state) in tables.joint.iter().enumerate() {
                let v = rho[d] * state.prob;
                next[d * n_ch + c] = v;
            }
        }
        for s in 0..n_states {
            l1 += (next[s] - pi[s]).abs();
        }
        pi = next;
        iterations += 1;
        if l1 < config.chain_tol {
            return Ok((pi, iterations));
        }
        if iterations >= config.max_chain_iters {
            return Err(Error::Convergence {
                what: "stationary distribution power iteration".into(),
                iterations,
                residual: l1,
            });
        }
    }
}

fn averages_of(tables: &Tables, step: &ChainStep, pi: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let sp = &tables.space;
    let n = sp.n_users();
    let n_ch = sp.n_channels();
    let mut weighted = 0.0;
    let mut power = 0.0;
    let mut per_user = vec![0.0; n];
    let mut tail = vec![0.0; n];
    for s in 0..sp.n_states() {
        let mass = pi[s];
        if mass == 0.0 {
            continue;
        }
        let deltas = sp.deltas_of(s / n_ch);
        for i in 0..n {
            per_user[i] += mass * deltas[i] as f64;
            weighted += mass * tables.weights[i] * deltas[i] as f64;
            if deltas[i] == sp.delta_max() {
                tail[i] += mass;
            }
        }
        let mut exp_power = 0.0;
        for (m, &pm) in tables.arr_prob.iter().enumerate() {
            if pm > 0.0 {
                exp_power += pm * step.power[s][m];
            }
        }
        power += mass * exp_power;
    }
    (weighted, power, per_user, tail)
}

/// Closed communicating classes among the states reachable from `start`.
fn closed_classes(tables: &Tables, step: &ChainStep, start: &[f64]) -> Vec<Vec<usize>> {
    let sp = &tables.space;
    let n_states = sp.n_states();
    let n_ch = sp.n_channels();
    // successor age-part sets; channel part fans out over all channels
    let succ_d = |s: usize| -> Vec<usize> {
        let mut out: Vec<usize> = tables
            .arr_prob
            .iter()
            .enumerate()
            .filter(|(_, &pm)| pm > 0.0)
            .map(|(m, _)| step.dest[s][m] as usize)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    let live_channels: Vec<usize> = tables
        .joint
        .iter()
        .enumerate()
        .filter(|(_, st)| st.prob > 0.0)
        .map(|(c, _)| c)
        .collect();
    // reachable set
    let mut seen = vec![false; n_states];
    let mut stack: Vec<usize> = start
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(s, _)| s)
        .collect();
    for &s in &stack {
        seen[s] = true;
    }
    let mut order = Vec::new();
    while let Some(s) = stack.pop() {
        order.push(s);
        for d in succ_d(s) {
            for &c in &live_channels {
                let t = d * n_ch + c;
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    // Kosaraju on the reachable subgraph
    let nodes = order;
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut radj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &s in &nodes {
        let mut outs = Vec::new();
        for d in succ_d(s) {
            for &c in &live_channels {
                let t = d * n_ch + c;
                outs.push(t);
                radj.entry(t).or_default().push(s);
            }
        }
        adj.insert(s, outs);
    }
    let mut visited = vec![false; n_states];
    let mut finish_order = Vec::with_capacity(nodes.len());
    for &root in &nodes {
        if visited[root] {
            continue;
        }
        // iterative DFS with explicit finish events
        let mut st = vec![(root, false)];
        while let Some((u, done)) = st.pop() {
            if done {
                finish_order.push(u);
                continue;
            }
            if visited[u] {
                continue;
            }
            visited[u] = true;
            st.push((u, true));
            if let Some(outs) = adj.get(&u) {
                for &v in outs {
                    if !visited[v] {
                        st.push((v, false));
                    }
                }
            }
        }
    }
    let mut comp = vec![usize::MAX; n_states];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &u in finish_order.iter().rev() {
        if comp[u] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut st = vec![u];
        comp[u] = id;
        let mut members = vec![u];
        while let Some(v) = st.pop() {
            if let Some(ins) = radj.get(&v) {
                for &w in ins {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        st.push(w);
                        members.push(w);
                    }
                }
            }
        }
        components.push(members);
    }
    // a class is closed when no member has an edge leaving the class
    components
        .into_iter()
        .filter(|members| {
            members.iter().all(|&s| {
                adj.get(&s)
                    .map(|outs| outs.iter().all(|&t| comp[t] == comp[s]))
                    .unwrap_or(true)
            })
        })
        .collect()
}

/// Evaluates a deterministic policy exactly: builds the induced chain
/// (arrival and channel randomness), finds its stationary distribution by
/// power iteration from the physical start (all ages zero), and returns
/// long-run averages. Power is charged only when the scheduled queue is
/// non-empty, with allocations computed for the scheduled subset.
pub fn evaluate_policy(
    policy: &CmdpPolicy,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    config: &MdpConfig,
) -> Result<PolicyEvaluation> {
    let tables = Tables::build(model, streams, f, policy.scheme, config)?;
    let sp = &tables.space;
    if policy.actions.len() != sp.n_states() {
        return Err(Error::invalid(format!(
            "policy covers {} states, space has {}",
            policy.actions.len(),
            sp.n_states()
        )));
    }
    let step = chain_step(&tables, policy);
    let n_ch = sp.n_channels();
    let mut start = vec![0.0; sp.n_states()];
    for (c, state) in tables.joint.iter().enumerate() {
        start[c] = state.prob; // age index 0 block
    }
    let _ = n_ch;
    let (pi, iterations) = stationary_from(&tables, &step, &start, config)?;
    let (weighted, power, per_user, tail) = averages_of(&tables, &step, &pi);
    let classes = closed_classes(&tables, &step, &start);
    let mut per_class = Vec::new();
    if classes.len() > 1 {
        for class in &classes {
            let mut cls_start = vec![0.0; sp.n_states()];
            let share = 1.0 / class.len() as f64;
            for &s in class {
                cls_start[s] = share;
            }
            let (cpi, _) = stationary_from(&tables, &step, &cls_start, config)?;
            let (w, p, _, _) = averages_of(&tables, &step, &cpi);
            per_class.push((w, p));
        }
    }
    Ok(PolicyEvaluation {
        weighted_vaoi: weighted,
        average_power: power,
        per_user_vaoi: per_user,
        tail_mass: tail,
        reducible: classes.len() > 1,
        closed_classes: classes.len(),
        per_class,
        chain_iterations: iterations,
    })
}

/// One probe of the bisection trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaTrace {
    pub theta: f64,
    pub weighted_vaoi: f64,
    pub average_power: f64,
}

/// Budget-exact value obtained by time-sharing the two bracket endpoint
/// policies: follow the tighter-multiplier policy a fraction `alpha` of
/// the time. Long frames make the long-run averages interpolate exactly,
/// so this is an achievable objective at the full budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeShared {
    /// Fraction of time on the over-budget endpoint policy.
    pub alpha: f64,
    pub weighted_vaoi: f64,
    /// Equals the budget by construction.
    pub average_power: f64,
    /// Multiplier of the over-budget endpoint.
    pub theta_lo: f64,
}

/// Policy meeting the power budget, with its exact evaluation.
#[derive(Debug, Clone)]
pub struct CmdpSolution {
    pub policy: CmdpPolicy,
    pub weighted_vaoi: f64,
    pub average_power: f64,
    pub theta: f64,
    pub value: ValueFunction,
    pub tail_mass: Vec<f64>,
    /// The budget was already slack at `θ = 0`.
    pub slack: bool,
    /// `|power − pbar|` reached tolerance (otherwise the feasible-side
    /// endpoint of a collapsed bracket is reported).
    pub power_converged: bool,
    /// Present when the deterministic endpoint undershoots the budget:
    /// the exact-budget interpolation with the infeasible endpoint.
    pub time_shared: Option<TimeShared>,
    pub trace: Vec<ThetaTrace>,
}

impl CmdpSolution {
    /// The achievable objective at the full budget: the time-shared value
    /// when the deterministic endpoint left budget unused, otherwise the
    /// endpoint's own objective.
    pub fn budget_objective(&self) -> f64 {
        self.time_shared.map(|ts| ts.weighted_vaoi).unwrap_or(self.weighted_vaoi)
    }
}

/// Bisects `θ` on the exact evaluated power of the greedy policy until the
/// budget is met within tolerance or the bracket collapses. Deterministic
/// policies make the power piecewise constant in `θ`, so the achieved
/// power may legitimately undershoot the budget; the achieved pair is
/// reported as-is.
pub fn bisect_theta(
    pbar: f64,
    config: &MdpConfig,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    scheme: Scheme,
) -> Result<CmdpSolution> {
    if !(pbar > 0.0) {
        return Err(Error::invalid(format!("power budget must be positive, got {pbar}")));
    }
    let eps = config.resolved_eps_power(pbar);
    let tables = Tables::build(model, streams, f, scheme, config)?;
    let mut trace = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let run = |theta: f64, warm: &mut Option<Vec<f64>>| -> Result<(ValueFunction, CmdpPolicy, PolicyEvaluation)> {
        let (vf, policy) = run_value_iteration(&tables, theta, config, warm.as_deref())?;
        *warm = Some(vf.values.clone());
        let step = chain_step(&tables, &policy);
        let mut start = vec![0.0; tables.space.n_states()];
        for (c, state) in tables.joint.iter().enumerate() {
            start[c] = state.prob;
        }
        let (pi, iterations) = stationary_from(&tables, &step, &start, config)?;
        let (weighted, power, per_user, tail) = averages_of(&tables, &step, &pi);
        let eval = PolicyEvaluation {
            weighted_vaoi: weighted,
            average_power: power,
            per_user_vaoi: per_user,
            tail_mass: tail,
            reducible: false,
            closed_classes: 1,
            per_class: Vec::new(),
            chain_iterations: iterations,
        };
        Ok((vf, policy, eval))
    };

    let (vf0, pol0, ev0) = run(0.0, &mut warm)?;
    trace.push(ThetaTrace {
        theta: 0.0,
        weighted_vaoi: ev0.weighted_vaoi,
        average_power: ev0.average_power,
    });
    if ev0.average_power <= pbar + eps {
        return Ok(CmdpSolution {
            policy: pol0,
            weighted_vaoi: ev0.weighted_vaoi,
            average_power: ev0.average_power,
            theta: 0.0,
            value: vf0,
            tail_mass: ev0.tail_mass,
            slack: true,
            power_converged: true,
            time_shared: None,
            trace,
        });
    }

    let mut th_lo = 0.0;
    let mut lo_point = (0.0f64, ev0.weighted_vaoi, ev0.average_power);
    let mut th_hi = config.theta_hi_init;
    let mut hi_sol;
    let mut doublings = 0;
    loop {
        let (vf, pol, ev) = run(th_hi, &mut warm)?;
        trace.push(ThetaTrace {
            theta: th_hi,
            weighted_vaoi: ev.weighted_vaoi,
            average_power: ev.average_power,
        });
        if ev.average_power <= pbar {
            hi_sol = (th_hi, vf, pol, ev);
            break;
        }
        th_lo = th_hi;
        lo_point = (th_hi, ev.weighted_vaoi, ev.average_power);
        th_hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Convergence {
                what: format!("CMDP theta bracket: power still above budget {pbar} at theta={th_hi:.3e}"),
                iterations: doublings,
                residual: ev.average_power - pbar,
            });
        }
    }

    let mut power_converged = (hi_sol.3.average_power - pbar).abs() < eps;
    for _ in 0..config.max_bisect {
        if power_converged || th_hi - th_lo < config.bracket_tol {
            break;
        }
        let mid = 0.5 * (th_lo + th_hi);
        let (vf, pol, ev) = run(mid, &mut warm)?;
        trace.push(ThetaTrace {
            theta: mid,
            weighted_vaoi: ev.weighted_vaoi,
            average_power: ev.average_power,
        });
        if (ev.average_power - pbar).abs() < eps {
            hi_sol = (mid, vf, pol, ev);
            power_converged = true;
            break;
        }
        if ev.average_power > pbar {
            th_lo = mid;
            lo_point = (mid, ev.weighted_vaoi, ev.average_power);
        } else {
            th_hi = mid;
            hi_sol = (mid, vf, pol, ev);
        }
    }
    let (theta, vf, policy, ev) = hi_sol;
    let time_shared = if power_converged {
        None
    } else {
        let (theta_lo, v_lo, p_lo) = lo_point;
        let alpha = (pbar - ev.average_power) / (p_lo - ev.average_power);
        Some(TimeShared {
            alpha,
            weighted_vaoi: alpha * v_lo + (1.0 - alpha) * ev.weighted_vaoi,
            average_power: pbar,
            theta_lo,
        })
    };
    Ok(CmdpSolution {
        policy,
        weighted_vaoi: ev.weighted_vaoi,
        average_power: ev.average_power,
        theta,
        value: vf,
        tail_mass: ev.tail_mass,
        slack: false,
        power_converged,
        time_shared,
        trace,
    })
}

/// Threshold-structure violations of a converged Q-table.
#[derive(Debug, Clone, Default)]
pub struct ThresholdReport {
    /// Pairs where transmitting was strictly better at age `Δ` but not at `Δ+1`.
    pub delta_violations: usize,
    /// Pairs where transmitting was strictly better at gain `h` but not at the next level.
    pub gain_violations: usize,
    /// Human-readable samples of the first few violations.
    pub examples: Vec<String>,
}

impl ThresholdReport {
    pub fn total(&self) -> usize {
        self.delta_violations + self.gain_violations
    }
}

/// Scans the Q-table induced by a converged value function for threshold
/// violations: with everything else fixed, if scheduling stream `i` is
/// strictly optimal at age `Δᵢ` (gain `hᵢ`) it must stay optimal at
/// `Δᵢ + 1` (any higher gain). Tolerance `1e-9`.
pub fn check_threshold(
    theta: f64,
    vf: &ValueFunction,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    scheme: Scheme,
    config: &MdpConfig,
) -> Result<ThresholdReport> {
    const TOL: f64 = 1e-9;
    let tables = Tables::build(model, streams, f, scheme, config)?;
    let sp = &tables.space;
    if sp.n_states() != vf.values.len() {
        return Err(Error::invalid("value function does not match the model dimensions"));
    }
    let n = sp.n_users();
    let n_ch = sp.n_channels();
    let n_delta = sp.n_delta();
    let mut w_exp = vec![0.0; n_delta];
    for d in 0..n_delta {
        let mut acc = 0.0;
        for (c, state) in tables.joint.iter().enumerate() {
            acc += state.prob * vf.values[d * n_ch + c];
        }
        w_exp[d] = acc;
    }
    let gamma = config.gamma;
    let q = |d: usize, c: usize, a_pos: usize| tables.q_value(theta, gamma, &w_exp, d, c, a_pos);
    let pos_of = |mask: u32| tables.actions.iter().position(|&m| m == mask);

    let mut report = ThresholdReport::default();
    let base = sp.delta_max() as usize + 1;
    for i in 0..n {
        let others: Vec<u32> = tables
            .actions
            .iter()
            .copied()
            .filter(|&m| m >> i & 1 == 0)
            .filter(|&m| pos_of(m | 1 << i).is_some())
            .collect();
        for &u_rest in &others {
            let a_on = pos_of(u_rest | 1 << i).unwrap();
            let a_off = pos_of(u_rest).unwrap();
            for c in 0..n_ch {
                // age direction
                for d in 0..n_delta {
                    let deltas = sp.deltas_of(d);
                    if deltas[i] as usize + 1 >= base {
                        continue;
                    }
                    let dq_here = q(d, c, a_on) - q(d, c, a_off);
                    if dq_here < 0.0 {
                        let mut up = deltas.clone();
                        up[i] += 1;
                        let du = sp.delta_index(&up);
                        let dq_up = q(du, c, a_on) - q(du, c, a_off);
                        if dq_up >= TOL {
                            report.delta_violations += 1;
                            if report.examples.len() < 8 {
                                report.examples.push(format!(
                                    "user {i}: dq {dq_here:.3e} at delta={deltas:?} c={c} but {dq_up:.3e} one step up"
                                ));
                            }
                        }
                    }
                }
                // gain direction: bump user i's level with the rest of the
                // joint channel fixed
                let levels = sp.channel_levels(c);
                if levels[i] + 1 < model.n_levels() {
                    let stride = model
                        .n_levels()
                        .pow((n - 1 - i) as u32);
                    let c_up = c + stride;
                    for d in 0..n_delta {
                        let dq_here = q(d, c, a_on) - q(d, c, a_off);
                        if dq_here < 0.0 {
                            let dq_up = q(d, c_up, a_on) - q(d, c_up, a_off);
                            if dq_up >= TOL {
                                report.gain_violations += 1;
                                if report.examples.len() < 8 {
                                    report.examples.push(format!(
                                        "user {i}: dq {dq_here:.3e} at c={c} but {dq_up:.3e} at higher gain"
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Writes the action table: `delta_1,…,delta_N,gain_1,…,gain_N,action_mask`.
pub fn write_policy_dump<W: Write>(
    out: &mut W,
    policy: &CmdpPolicy,
    model: &ChannelModel,
    config: &MdpConfig,
) -> Result<()> {
    let space = StateSpace::new(model, policy.space.delta_max, config.state_cap)?;
    let n = space.n_users();
    for i in 0..n {
        write!(out, "{}delta_{}", if i == 0 { "" } else { "," }, i + 1)?;
    }
    for i in 0..n {
        write!(out, ",gain_{}", i + 1)?;
    }
    writeln!(out, ",action_mask")?;
    for s in 0..space.n_states() {
        let st = space.state(s);
        let levels = space.channel_levels(st.channel_index);
        for (i, d) in st.delta.iter().enumerate() {
            write!(out, "{}{}", if i == 0 { "" } else { "," }, d)?;
        }
        for &l in &levels {
            write!(out, ",{}", model.levels()[l])?;
        }
        writeln!(out, ",{}", policy.actions[s])?;
    }
    Ok(())
}

/// Writes the value table: the policy-dump columns plus the value.
pub fn write_value_dump<W: Write>(
    out: &mut W,
    vf: &ValueFunction,
    model: &ChannelModel,
) -> Result<()> {
    let space = &vf.space;
    let n = space.n_users();
    for i in 0..n {
        write!(out, "{}delta_{}", if i == 0 { "" } else { "," }, i + 1)?;
    }
    for i in 0..n {
        write!(out, ",gain_{}", i + 1)?;
    }
    writeln!(out, ",value")?;
    for s in 0..space.n_states() {
        let st = space.state(s);
        let levels = space.channel_levels(st.channel_index);
        for (i, d) in st.delta.iter().enumerate() {
            write!(out, "{}{}", if i == 0 { "" } else { "," }, d)?;
        }
        for &l in &levels {
            write!(out, ",{}", model.levels()[l])?;
        }
        writeln!(out, ",{:.17e}", vf.values[s])?;
    }
    Ok(())
}
