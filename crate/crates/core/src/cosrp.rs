//! Channel-only stationary randomized policies (CO-SRP): representation,
//! exact long-run performance, and the fractional program their
//! optimization induces.
//!
//! A CO-SRP looks only at the joint channel realization `h` and transmits
//! to the user subset `W` with probability `mu[h][W]`. Under it each
//! user's version age evolves as a birth/reset chain whose stationary
//! distribution is geometric, giving the closed forms
//!
//! ```text
//! avg age(i)   = λᵢ (1 − pᵢ) / pᵢ
//! avg power    = Σᵢ λᵢ Pᵢ / (λᵢ (1 − pᵢ) + pᵢ)
//! ```
//!
//! where `pᵢ` is the per-slot delivery probability and `Pᵢ` the expected
//! allocated power of user `i`. The denominator is the stationary
//! probability that queue `i` holds something worth sending; power is only
//! spent then.
//!
//! Minimizing the weighted age sum under an average power budget is a
//! convex objective with a sum-of-affine-ratios constraint — non-convex;
//! `FractionalProgram` packages the affine pieces (`d_i`, `f_i`, per-state
//! simplex constraints `g_h`) and the convex objective for the solver in
//! [`crate::optimizer`].

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{noma_powers, ActionVector, ChannelModel, JointChannelState, RateFunction, StreamConfig};

/// Delivery probabilities below this are clamped before inversion so the
/// optimizer sees finite (huge) objective values instead of overflow.
pub const P_CLAMP: f64 = 1e-12;

/// Multiple-access scheme: the subset alphabet the policy may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Any subset of users per slot (superposition coding).
    Noma,
    /// At most one user per slot.
    Tdma,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Noma => "noma",
            Scheme::Tdma => "tdma",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noma" => Ok(Scheme::Noma),
            "tdma" => Ok(Scheme::Tdma),
            other => Err(Error::invalid(format!("unknown scheme '{other}', expected noma|tdma"))),
        }
    }
}

/// Subset alphabet in bitmask-ascending order. NOMA lists every subset of
/// `{0,..,N-1}`; TDMA lists the empty set and the singletons. The order is
/// fixed so policy tables are byte-stable across runs.
pub fn subset_masks(scheme: Scheme, n_users: usize) -> Vec<u32> {
    match scheme {
        Scheme::Noma => (0..(1u32 << n_users)).collect(),
        Scheme::Tdma => std::iter::once(0)
            .chain((0..n_users).map(|i| 1u32 << i))
            .collect(),
    }
}

/// Randomized subset-transmission policy: one probability simplex over the
/// subset alphabet per joint channel state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoSrpPolicy {
    scheme: Scheme,
    n_users: usize,
    /// `mu[state][subset_position]`, rows summing to one.
    mu: Vec<Vec<f64>>,
}

impl CoSrpPolicy {
    pub fn new(scheme: Scheme, n_users: usize, mu: Vec<Vec<f64>>) -> Result<Self> {
        let policy = CoSrpPolicy { scheme, n_users, mu };
        policy.validate(1e-9)?;
        Ok(policy)
    }

    /// Uniform over the subset alphabet in every state (strictly interior).
    pub fn uniform(scheme: Scheme, n_users: usize, n_states: usize) -> Self {
        let k = subset_masks(scheme, n_users).len();
        CoSrpPolicy {
            scheme,
            n_users,
            mu: vec![vec![1.0 / k as f64; k]; n_states],
        }
    }

    /// Deterministically transmits `mask` in every state.
    pub fn constant(scheme: Scheme, n_users: usize, n_states: usize, mask: u32) -> Result<Self> {
        let subsets = subset_masks(scheme, n_users);
        let pos = subsets
            .iter()
            .position(|&m| m == mask)
            .ok_or_else(|| Error::invalid(format!("mask {mask:#b} not in the {} alphabet", scheme.as_str())))?;
        let mut row = vec![0.0; subsets.len()];
        row[pos] = 1.0;
        Ok(CoSrpPolicy {
            scheme,
            n_users,
            mu: vec![row; n_states],
        })
    }

    /// Deterministic channel-dependent subsets: `masks[state]` is sent with
    /// probability one in `state`.
    pub fn deterministic(scheme: Scheme, n_users: usize, masks: &[u32]) -> Result<Self> {
        let subsets = subset_masks(scheme, n_users);
        let mut mu = Vec::with_capacity(masks.len());
        for &mask in masks {
            let pos = subsets
                .iter()
                .position(|&m| m == mask)
                .ok_or_else(|| Error::invalid(format!("mask {mask:#b} not in the {} alphabet", scheme.as_str())))?;
            let mut row = vec![0.0; subsets.len()];
            row[pos] = 1.0;
            mu.push(row);
        }
        Ok(CoSrpPolicy { scheme, n_users, mu })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn subsets(&self) -> Vec<u32> {
        subset_masks(self.scheme, self.n_users)
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.mu[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.mu
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.mu
    }

    /// Checks every row is a probability simplex within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let k = subset_masks(self.scheme, self.n_users).len();
        for (s, row) in self.mu.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "state {s}: {} probabilities, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&m| !(-tol..=1.0 + tol).contains(&m)) {
                return Err(Error::invalid(format!("state {s}: probability outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "state {s}: probabilities sum to {sum}, expected 1 within {tol:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-user delivery probability `p_i` and expected allocated power `P_i`
/// under a policy (power unconditioned on queue occupancy).
#[derive(Debug, Clone, PartialEq)]
pub struct UserDeliveryStats {
    pub p: Vec<f64>,
    pub expected_power: Vec<f64>,
}

/// Precomputed per-subset power tables shared by the program, the
/// simulator adapters and `delivery_stats`: `powers[state][subset][user]`.
pub(crate) fn subset_power_table(
    joint: &[JointChannelState],
    subsets: &[u32],
    streams: &[StreamConfig],
    f: RateFunction,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = streams.len();
    let mut out = Vec::with_capacity(joint.len());
    for state in joint {
        let mut per_subset = Vec::with_capacity(subsets.len());
        for &mask in subsets {
            let u = ActionVector::from_mask(mask, n)?;
            let pa = noma_powers(&state.gains, u, streams, f)?;
            per_subset.push(pa.powers);
        }
        out.push(per_subset);
    }
    Ok(out)
}

/// Exact `p_i` and `P_i` of a policy by probability-weighted sums over the
/// joint channel states and the subset alphabet.
pub fn delivery_stats(
    policy: &CoSrpPolicy,
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
) -> Result<UserDeliveryStats> {
    let n = model.n_users();
    if policy.n_users() != n || streams.len() != n {
        return Err(Error::invalid("policy/model/stream dimension mismatch"));
    }
    let joint = model.enumerate_joint_states()?;
    if policy.n_states() != joint.len() {
        return Err(Error::invalid(format!(
            "policy has {} states, channel has {}",
            policy.n_states(),
            joint.len()
        )));
    }
    let subsets = policy.subsets();
    let powers = subset_power_table(&joint, &subsets, streams, f)?;
    let mut p = vec![0.0; n];
    let mut pw = vec![0.0; n];
    for (s, state) in joint.iter().enumerate() {
        for (w, &mask) in subsets.iter().enumerate() {
            let weight = state.prob * policy.mu[s][w];
            if weight == 0.0 {
                continue;
            }
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    p[i] += weight;
                    pw[i] += weight * powers[s][w][i];
                }
            }
        }
    }
    Ok(UserDeliveryStats { p, expected_power: pw })
}

/// Long-run average version age of one user: `λ (1 − p) / p`.
///
/// `λ = 0` yields 0 (no versions ever arrive); `p = 0` with `λ > 0` yields
/// the infinity sentinel.
pub fn average_vaoi(p: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else if p <= 0.0 {
        f64::INFINITY
    } else {
        lambda * (1.0 - p) / p
    }
}

/// Long-run average transmit power: the per-user allocated powers
/// corrected by the stationary probability that the queue is non-empty.
pub fn average_power(stats: &UserDeliveryStats, streams: &[StreamConfig]) -> f64 {
    let mut total = 0.0;
    for (i, s) in streams.iter().enumerate() {
        if s.lambda == 0.0 {
            continue; // queue is never occupied
        }
        let denom = s.lambda * (1.0 - stats.p[i]) + stats.p[i];
        total += s.lambda * stats.expected_power[i] / denom;
    }
    total
}

/// Weighted objective `Σᵢ wᵢ λᵢ (1/pᵢ − 1)`.
pub fn weighted_objective(streams: &[StreamConfig], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, s) in streams.iter().enumerate() {
        if s.lambda == 0.0 || s.weight == 0.0 {
            continue;
        }
        if p[i] <= 0.0 {
            return f64::INFINITY;
        }
        total += s.weight * s.lambda * (1.0 / p[i] - 1.0);
    }
    total
}

/// Stationary distribution of one user's age chain, truncated at `n_max`
/// (inclusive): `π_n = (1 − r) rⁿ` with
/// `r = λ(1−p) / (λ(1−p) + p)`. Used by tests against simulation
/// histograms.
pub fn stationary_distribution(lambda: f64, p: f64, n_max: usize) -> Vec<f64> {
    assert!(p > 0.0 && p <= 1.0, "delivery probability must be in (0,1]");
    let denom = lambda * (1.0 - p) + p;
    let pi0 = p / denom;
    let ratio = lambda * (1.0 - p) / denom;
    let mut out = Vec::with_capacity(n_max + 1);
    let mut mass = pi0;
    for _ in 0..=n_max {
        out.push(mass);
        mass *= ratio;
    }
    out
}

/// Smallest truncation index whose geometric tail mass is below `1e-10`.
pub fn default_truncation(lambda: f64, p: f64) -> usize {
    let denom = lambda * (1.0 - p) + p;
    let ratio = lambda * (1.0 - p) / denom;
    if ratio <= 0.0 {
        return 1;
    }
    // tail mass beyond n is ratio^(n+1)
    let n = (1e-10f64.ln() / ratio.ln()).ceil() as usize;
    n.max(1)
}

/// The reformulated optimization problem over policy tables: convex
/// weighted-age objective, affine `d_i`/`f_i` whose ratio sum is the power
/// constraint, and one simplex constraint per joint channel state.
///
/// All subset powers are precomputed at build time; evaluators are pure
/// and reentrant.
#[derive(Debug, Clone)]
pub struct FractionalProgram {
    joint: Vec<JointChannelState>,
    streams: Vec<StreamConfig>,
    scheme: Scheme,
    pbar: f64,
    subsets: Vec<u32>,
    /// `powers[state][subset][user]`
    powers: Vec<Vec<Vec<f64>>>,
    /// `total_power[state][subset]`
    total_power: Vec<Vec<f64>>,
}

impl FractionalProgram {
    /// Precomputes every subset power allocation for the given scheme.
    pub fn build(
        model: &ChannelModel,
        streams: &[StreamConfig],
        pbar: f64,
        scheme: Scheme,
        f: RateFunction,
    ) -> Result<Self> {
        if streams.len() != model.n_users() {
            return Err(Error::invalid("stream/model dimension mismatch"));
        }
        if !(pbar > 0.0) {
            return Err(Error::invalid(format!("power budget must be positive, got {pbar}")));
        }
        let joint = model.enumerate_joint_states()?;
        let subsets = subset_masks(scheme, streams.len());
        let powers = subset_power_table(&joint, &subsets, streams, f)?;
        let total_power = powers
            .iter()
            .map(|per_subset| per_subset.iter().map(|p| p.iter().sum()).collect())
            .collect();
        Ok(FractionalProgram {
            joint,
            streams: streams.to_vec(),
            scheme,
            pbar,
            subsets,
            powers,
            total_power,
        })
    }

    pub fn n_users(&self) -> usize {
        self.streams.len()
    }

    pub fn n_states(&self) -> usize {
        self.joint.len()
    }

    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    /// Length of the flattened decision vector.
    pub fn n_vars(&self) -> usize {
        self.joint.len() * self.subsets.len()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn pbar(&self) -> f64 {
        self.pbar
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn streams(&self) -> &[StreamConfig] {
        &self.streams
    }

    pub fn joint_states(&self) -> &[JointChannelState] {
        &self.joint
    }

    pub fn state_prob(&self, state: usize) -> f64 {
        self.joint[state].prob
    }

    /// `P_{i,h}^{W}`: the power of user `i` in state `state` when subset
    /// `subset_pos` (all of it) is transmitted.
    pub fn subset_power(&self, state: usize, subset_pos: usize, user: usize) -> f64 {
        self.powers[state][subset_pos][user]
    }

    pub fn subset_total_power(&self, state: usize, subset_pos: usize) -> f64 {
        self.total_power[state][subset_pos]
    }

    /// Streams with `λ = 0` never have anything to send; they are dropped
    /// from objective, duals and power accounting.
    pub fn active_users(&self) -> Vec<usize> {
        (0..self.streams.len()).filter(|&i| self.streams[i].lambda > 0.0).collect()
    }

    /// Per-user delivery probabilities `p_i(μ)` (affine in μ).
    pub fn delivery_prob(&self, policy: &CoSrpPolicy) -> Vec<f64> {
        let n = self.n_users();
        let mut p = vec![0.0; n];
        for (s, state) in self.joint.iter().enumerate() {
            let row = policy.row(s);
            for (w, &mask) in self.subsets.iter().enumerate() {
                let weight = state.prob * row[w];
                if weight == 0.0 {
                    continue;
                }
                let mut m = mask;
                while m != 0 {
                    let i = m.trailing_zeros() as usize;
                    p[i] += weight;
                    m &= m - 1;
                }
            }
        }
        p
    }

    /// Numerators `d_i(μ) = λᵢ Σ_h Σ_{W∋i} μ P_{i,h}^W P(h)` (affine in μ).
    pub fn d(&self, policy: &CoSrpPolicy) -> Vec<f64> {
        let n = self.n_users();
        let mut d = vec![0.0; n];
        for (s, state) in self.joint.iter().enumerate() {
            let row = policy.row(s);
            for (w, &mask) in self.subsets.iter().enumerate() {
                let weight = state.prob * row[w];
                if weight == 0.0 {
                    continue;
                }
                let mut m = mask;
                while m != 0 {
                    let i = m.trailing_zeros() as usize;
                    d[i] += weight * self.powers[s][w][i];
                    m &= m - 1;
                }
            }
        }
        for i in 0..n {
            d[i] *= self.streams[i].lambda;
        }
        d
    }

    /// Denominators `f_i(μ) = λᵢ(1 − pᵢ) + pᵢ` (affine in μ, positive for
    /// every active user).
    pub fn f_occ(&self, policy: &CoSrpPolicy) -> Vec<f64> {
        self.delivery_prob(policy)
            .iter()
            .zip(&self.streams)
            .map(|(&p, s)| s.lambda * (1.0 - p) + p)
            .collect()
    }

    /// Weighted-age objective `Σ wᵢ Oᵢ(μ)` with the boundary clamp.
    pub fn objective(&self, policy: &CoSrpPolicy) -> f64 {
        self.objective_of_p(&self.delivery_prob(policy))
    }

    /// Objective as a function of the delivery probabilities alone.
    pub fn objective_of_p(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, s) in self.streams.iter().enumerate() {
            if s.lambda == 0.0 {
                continue;
            }
            let pc = p[i].max(P_CLAMP);
            total += s.weight * s.lambda * (1.0 / pc - 1.0);
        }
        total
    }

    /// True if any active user's delivery probability is at or below the
    /// clamp threshold for this policy.
    pub fn clamped(&self, policy: &CoSrpPolicy) -> bool {
        let p = self.delivery_prob(policy);
        self.active_users().iter().any(|&i| p[i] <= P_CLAMP)
    }

    /// Long-run average power of a policy, `Σᵢ dᵢ(μ)/fᵢ(μ)`.
    pub fn average_power_of(&self, policy: &CoSrpPolicy) -> f64 {
        let d = self.d(policy);
        let f = self.f_occ(policy);
        self.active_users().iter().map(|&i| d[i] / f[i]).sum()
    }

    /// Exact delivery stats of a policy using the precomputed powers.
    pub fn stats_of(&self, policy: &CoSrpPolicy) -> UserDeliveryStats {
        let n = self.n_users();
        let mut p = vec![0.0; n];
        let mut pw = vec![0.0; n];
        for (s, state) in self.joint.iter().enumerate() {
            let row = policy.row(s);
            for (w, &mask) in self.subsets.iter().enumerate() {
                let weight = state.prob * row[w];
                if weight == 0.0 {
                    continue;
                }
                let mut m = mask;
                while m != 0 {
                    let i = m.trailing_zeros() as usize;
                    p[i] += weight;
                    pw[i] += weight * self.powers[s][w][i];
                    m &= m - 1;
                }
            }
        }
        UserDeliveryStats { p, expected_power: pw }
    }

    /// Simplex residuals `g_h(μ) = Σ_W μ_h^W − 1`, one per state.
    pub fn simplex_residuals(&self, policy: &CoSrpPolicy) -> Vec<f64> {
        policy.rows().iter().map(|row| row.iter().sum::<f64>() - 1.0).collect()
    }
}

// ---------------------------------------------------------------------------
// Policy file format
// ---------------------------------------------------------------------------
//
// Plain-text table, one row per (state, subset) pair:
//
//   state_index,gain_1,...,gain_N,subset_mask,probability
//
// with an optional `key=value` footer block (used by solution files) and
// `#` comment lines. Probabilities per state must sum to 1 within 1e-6 on
// load. Subset rows are written in bitmask-ascending order.

/// Writes a policy table (all rows, including zero-probability ones).
pub fn write_policy<W: Write>(out: &mut W, policy: &CoSrpPolicy, model: &ChannelModel) -> Result<()> {
    let joint = model.enumerate_joint_states()?;
    if joint.len() != policy.n_states() {
        return Err(Error::invalid("policy/model state-count mismatch"));
    }
    let n = policy.n_users();
    write!(out, "state_index")?;
    for i in 0..n {
        write!(out, ",gain_{}", i + 1)?;
    }
    writeln!(out, ",subset_mask,probability")?;
    let subsets = policy.subsets();
    for (s, state) in joint.iter().enumerate() {
        for (w, &mask) in subsets.iter().enumerate() {
            write!(out, "{s}")?;
            for g in &state.gains {
                write!(out, ",{g}")?;
            }
            writeln!(out, ",{mask},{:.17e}", policy.row(s)[w])?;
        }
    }
    Ok(())
}

/// A policy read back from disk, with the gains recorded per state and any
/// `key=value` footer entries.
#[derive(Debug, Clone)]
pub struct LoadedPolicy {
    pub policy: CoSrpPolicy,
    pub state_gains: Vec<Vec<f64>>,
    pub footer: BTreeMap<String, f64>,
}

/// Parses a policy table. The scheme is inferred from the masks present:
/// any multi-user mask makes it NOMA, otherwise TDMA.
pub fn read_policy<R: BufRead>(input: R) -> Result<LoadedPolicy> {
    let mut rows: BTreeMap<usize, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut gains: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut footer = BTreeMap::new();
    let mut n_users: Option<usize> = None;
    for (lineno, line) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("state_index") {
            continue;
        }
        if !line.contains(',') && line.contains('=') {
            let (k, v) = line.split_once('=').unwrap();
            let value = v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad footer value for '{}': {e}", k.trim()),
            })?;
            footer.insert(k.trim().to_string(), value);
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad {what} '{s}': {e}"),
            })
        };
        let state: usize = fields[0].parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad state index '{}': {e}", fields[0]),
        })?;
        let n = fields.len() - 3;
        match n_users {
            None => n_users = Some(n),
            Some(prev) if prev != n => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("row has {n} gain columns, earlier rows had {prev}"),
                })
            }
            _ => {}
        }
        let g: Vec<f64> = fields[1..1 + n]
            .iter()
            .map(|s| parse(s, "gain"))
            .collect::<Result<_>>()?;
        let mask: u32 = fields[1 + n].parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad subset mask '{}': {e}", fields[1 + n]),
        })?;
        let prob = parse(fields[2 + n], "probability")?;
        if !(-1e-9..=1.0 + 1e-9).contains(&prob) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("probability {prob} outside [0,1]"),
            });
        }
        gains.entry(state).or_insert(g);
        rows.entry(state).or_default().insert(mask, prob);
    }
    let n = n_users.ok_or(Error::Parse {
        line: 0,
        message: "no policy rows found".into(),
    })?;
    let n_states = rows.len();
    if rows.keys().enumerate().any(|(k, &s)| k != s) {
        return Err(Error::Parse {
            line: 0,
            message: "state indices are not contiguous from 0".into(),
        });
    }
    // tables that carry any multi-user mask row use the full alphabet,
    // even if all the mass sits on single-user subsets
    let scheme = if rows.values().any(|m| m.keys().any(|&k| k.count_ones() > 1)) {
        Scheme::Noma
    } else {
        Scheme::Tdma
    };
    let subsets = subset_masks(scheme, n);
    let mut mu = vec![vec![0.0; subsets.len()]; n_states];
    for (&state, masks) in &rows {
        for (&mask, &prob) in masks {
            let pos = subsets.iter().position(|&m| m == mask).ok_or(Error::Parse {
                line: 0,
                message: format!("mask {mask} invalid for {} users", n),
            })?;
            mu[state][pos] = prob;
        }
        let sum: f64 = masks.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Parse {
                line: 0,
                message: format!("state {state}: probabilities sum to {sum}, expected 1 within 1e-6"),
            });
        }
    }
    let policy = CoSrpPolicy { scheme, n_users: n, mu };
    let state_gains = gains.into_values().collect();
    Ok(LoadedPolicy {
        policy,
        state_gains,
        footer,
    })
}
