//! Domain types and the deterministic physics of the broadcast system:
//! the achievable-rate function, the gain-sorted decoding order and the
//! successive-interference-cancellation power recursion.
//!
//! Power is expressed in linear units with unit noise variance throughout;
//! rates are in nats. With superposition coding, the user at position `k`
//! of the decoding order sees the codewords of positions `1..k-1` as
//! interference, so the power needed to deliver `r0` nats to every
//! scheduled user is obtained by the forward recursion
//!
//! ```text
//! P[k] = f⁻¹(r0[k]) / h[k] + f⁻¹(r0[k]) · (P[1] + … + P[k-1])
//! ```
//!
//! walked along the order of non-increasing channel gains.

use crate::error::{Error, Result};

/// Default cap on the number of joint channel states enumerated at once.
pub const DEFAULT_JOINT_STATE_CAP: usize = 65_536;

/// Achievable-rate function mapping SINR to nats per channel use.
///
/// Concave, non-decreasing, zero at zero. Only the Shannon-style
/// `ln(1 + x)` instance is currently provided; the enum keeps the door
/// open for alternatives without touching call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateFunction {
    /// `f(x) = ln(1 + x)` with exact inverse `f⁻¹(r) = eʳ − 1`.
    Log1p,
}

impl RateFunction {
    /// Rate achieved at SINR `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RateFunction::Log1p => x.ln_1p(),
        }
    }

    /// SINR required to achieve rate `r`.
    pub fn inverse(&self, r: f64) -> f64 {
        match self {
            RateFunction::Log1p => r.exp_m1(),
        }
    }
}

/// Per-user traffic description: arrival probability, packet size, weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Probability that a fresh version arrives in a slot, in `[0, 1]`.
    pub lambda: f64,
    /// Packet size in nats, `>= 0`.
    pub r0: f64,
    /// Objective weight, `>= 0`.
    pub weight: f64,
}

impl StreamConfig {
    pub fn new(lambda: f64, r0: f64, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must be in [0,1], got {lambda}")));
        }
        if !r0.is_finite() || r0 < 0.0 {
            return Err(Error::invalid(format!("r0 must be finite and >= 0, got {r0}")));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::invalid(format!("weight must be finite and >= 0, got {weight}")));
        }
        Ok(StreamConfig { lambda, r0, weight })
    }
}

/// Finite-alphabet fading channel: a shared gain alphabet and one pmf per
/// user. Draws are i.i.d. across users and across slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    levels: Vec<f64>,
    pmfs: Vec<Vec<f64>>,
}

impl ChannelModel {
    /// Builds a model from an ascending list of positive gains and one
    /// probability vector per user.
    pub fn new(levels: Vec<f64>, pmfs: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("channel needs at least one gain level"));
        }
        for w in levels.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "gain levels must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if levels.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::invalid("all gain levels must be positive and finite"));
        }
        if pmfs.is_empty() {
            return Err(Error::invalid("channel needs at least one user pmf"));
        }
        for (i, pmf) in pmfs.iter().enumerate() {
            if pmf.len() != levels.len() {
                return Err(Error::invalid(format!(
                    "pmf for user {} has {} entries, expected {}",
                    i + 1,
                    pmf.len(),
                    levels.len()
                )));
            }
            if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!("pmf entries for user {} must be in [0,1]", i + 1)));
            }
            let s: f64 = pmf.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "pmf for user {} sums to {s}, expected 1 within 1e-12",
                    i + 1
                )));
            }
        }
        Ok(ChannelModel { levels, pmfs })
    }

    /// Same pmf for every one of `n_users` users.
    pub fn shared(levels: Vec<f64>, pmf: Vec<f64>, n_users: usize) -> Result<Self> {
        if n_users == 0 {
            return Err(Error::invalid("n_users must be >= 1"));
        }
        Self::new(levels, vec![pmf; n_users])
    }

    pub fn n_users(&self) -> usize {
        self.pmfs.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn pmf(&self, user: usize) -> &[f64] {
        &self.pmfs[user]
    }

    /// Number of joint channel states, `|H|^N`, saturating on overflow.
    pub fn n_joint_states(&self) -> usize {
        let mut n: usize = 1;
        for _ in 0..self.n_users() {
            n = n.saturating_mul(self.levels.len());
        }
        n
    }

    /// Flat index of a joint state; user 0 is the most significant digit.
    pub fn joint_index(&self, level_indices: &[usize]) -> usize {
        debug_assert_eq!(level_indices.len(), self.n_users());
        let base = self.levels.len();
        level_indices.iter().fold(0, |acc, &l| acc * base + l)
    }

    /// Dense enumeration of all joint states with the default size cap.
    pub fn enumerate_joint_states(&self) -> Result<Vec<JointChannelState>> {
        self.enumerate_joint_states_capped(DEFAULT_JOINT_STATE_CAP)
    }

    /// Dense enumeration of all joint states with product probabilities.
    pub fn enumerate_joint_states_capped(&self, cap: usize) -> Result<Vec<JointChannelState>> {
        let total = self.n_joint_states();
        if total > cap {
            return Err(Error::SizeLimit(format!(
                "{total} joint channel states exceed the cap of {cap}; reduce the number of \
                 users or the gain alphabet"
            )));
        }
        let n = self.n_users();
        let base = self.levels.len();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        loop {
            let gains: Vec<f64> = idx.iter().map(|&l| self.levels[l]).collect();
            let prob: f64 = idx.iter().enumerate().map(|(u, &l)| self.pmfs[u][l]).product();
            out.push(JointChannelState {
                gains,
                level_indices: idx.clone(),
                prob,
            });
            // odometer increment, last user fastest
            let mut u = n;
            loop {
                if u == 0 {
                    return Ok(out);
                }
                u -= 1;
                idx[u] += 1;
                if idx[u] < base {
                    break;
                }
                idx[u] = 0;
            }
        }
    }
}

/// One realization of the joint channel with its product probability.
#[derive(Debug, Clone, PartialEq)]
pub struct JointChannelState {
    pub gains: Vec<f64>,
    pub level_indices: Vec<usize>,
    pub prob: f64,
}

/// Binary scheduling decision: bit `i` set means stream `i` is transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionVector {
    mask: u32,
    n_users: usize,
}

impl ActionVector {
    pub fn from_mask(mask: u32, n_users: usize) -> Result<Self> {
        if n_users == 0 || n_users > 32 {
            return Err(Error::invalid("n_users must be in 1..=32"));
        }
        if mask >= (1u32 << n_users) {
            return Err(Error::invalid(format!(
                "mask {mask:#b} addresses users beyond the {n_users} configured"
            )));
        }
        Ok(ActionVector { mask, n_users })
    }

    pub fn empty(n_users: usize) -> Self {
        ActionVector { mask: 0, n_users }
    }

    pub fn full(n_users: usize) -> Self {
        ActionVector {
            mask: ((1u64 << n_users) - 1) as u32,
            n_users,
        }
    }

    pub fn singleton(user: usize, n_users: usize) -> Self {
        ActionVector {
            mask: 1 << user,
            n_users,
        }
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn contains(&self, user: usize) -> bool {
        self.mask >> user & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// TDMA restriction: at most one scheduled user.
    pub fn is_tdma_feasible(&self) -> bool {
        self.count() <= 1
    }

    pub fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_users).filter(move |&i| self.contains(i))
    }
}

/// Permutation of users by non-increasing gain, ties broken by lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodingOrder {
    /// `order[k]` is the user decoded at position `k` (0-based, strongest first).
    pub order: Vec<usize>,
    /// `inverse[i]` is the position of user `i` in the order.
    pub inverse: Vec<usize>,
}

/// Sorts users by non-increasing channel gain. Equal gains keep the lower
/// user index first.
pub fn decoding_order(h: &[f64]) -> Result<DecodingOrder> {
    if h.is_empty() {
        return Err(Error::invalid("gain vector is empty"));
    }
    if let Some(&bad) = h.iter().find(|&&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::invalid(format!("channel gains must be positive and finite, got {bad}")));
    }
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| h[b].partial_cmp(&h[a]).unwrap().then(a.cmp(&b)));
    let mut inverse = vec![0usize; h.len()];
    for (pos, &user) in order.iter().enumerate() {
        inverse[user] = pos;
    }
    Ok(DecodingOrder { order, inverse })
}

/// Per-user transmit powers for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    pub total: f64,
}

/// Powers that deliver `r0[i]` nats to every scheduled user under
/// superposition coding and SIC, given gains `h` and schedule `u`.
///
/// Unscheduled users get exactly zero power and contribute no interference.
pub fn noma_powers(
    h: &[f64],
    u: ActionVector,
    streams: &[StreamConfig],
    f: RateFunction,
) -> Result<PowerAllocation> {
    if h.len() != streams.len() || h.len() != u.n_users() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} gains, {} streams, action over {} users",
            h.len(),
            streams.len(),
            u.n_users()
        )));
    }
    let ord = decoding_order(h)?;
    let mut powers = vec![0.0; h.len()];
    let mut interference = 0.0; // sum of powers of earlier-decoded users
    for &user in &ord.order {
        if u.contains(user) {
            let sinr = f.inverse(streams[user].r0);
            let p = sinr / h[user] + sinr * interference;
            powers[user] = p;
            interference += p;
        }
    }
    let total = powers.iter().sum();
    Ok(PowerAllocation { powers, total })
}

/// Rates actually achieved by an arbitrary allocation `powers` under the
/// SIC interference structure implied by `h`. Test-side companion of
/// [`noma_powers`]: feeding its output back must reproduce the scheduled
/// users' packet sizes and zeros elsewhere.
pub fn verify_rates(h: &[f64], powers: &[f64], f: RateFunction) -> Result<Vec<f64>> {
    if h.len() != powers.len() {
        return Err(Error::invalid("dimension mismatch in verify_rates"));
    }
    let ord = decoding_order(h)?;
    let mut rates = vec![0.0; h.len()];
    for i in 0..h.len() {
        let my_pos = ord.inverse[i];
        let interference: f64 = ord.order[..my_pos].iter().map(|&k| powers[k]).sum();
        let sinr = powers[i] * h[i] / (1.0 + h[i] * interference);
        rates[i] = f.eval(sinr);
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn streams_of(r0s: &[f64]) -> Vec<StreamConfig> {
        r0s.iter().map(|&r| StreamConfig::new(0.5, r, 1.0).unwrap()).collect()
    }

    #[test]
    fn rate_function_basics() {
        let f = RateFunction::Log1p;
        assert_eq!(f.eval(0.0), 0.0);
        let xs: Vec<f64> = (0..200).map(|k| k as f64 * 0.37).collect();
        for w in xs.windows(2) {
            assert!(f.eval(w[0]) <= f.eval(w[1]));
        }
        for k in 0..=200 {
            let r = k as f64 * 0.1;
            let back = f.eval(f.inverse(r));
            assert!((back - r).abs() <= 1e-12 * r.max(1.0), "r={r} back={back}");
        }
    }

    #[test]
    fn stream_config_validation() {
        assert!(StreamConfig::new(1.2, 1.0, 1.0).is_err());
        assert!(StreamConfig::new(0.5, -1.0, 1.0).is_err());
        assert!(StreamConfig::new(0.5, 1.0, -0.1).is_err());
        assert!(StreamConfig::new(0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn decoding_order_examples() {
        assert_eq!(decoding_order(&[0.5, 1.0]).unwrap().order, vec![1, 0]);
        // equal gains: lower index decoded first
        assert_eq!(decoding_order(&[1.0, 1.0]).unwrap().order, vec![0, 1]);
        assert_eq!(decoding_order(&[0.1, 1.0, 0.5]).unwrap().order, vec![1, 2, 0]);
        let ord = decoding_order(&[0.1, 1.0, 0.5]).unwrap();
        for (pos, &user) in ord.order.iter().enumerate() {
            assert_eq!(ord.inverse[user], pos);
        }
        assert!(decoding_order(&[1.0, 0.0]).is_err());
        assert!(decoding_order(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn powers_all_idle() {
        let s = streams_of(&[2.0, 2.0]);
        let pa = noma_powers(&[0.7, 1.3], ActionVector::empty(2), &s, RateFunction::Log1p).unwrap();
        assert_eq!(pa.powers, vec![0.0, 0.0]);
        assert_eq!(pa.total, 0.0);
    }

    #[test]
    fn powers_single_user_closed_form() {
        let s = streams_of(&[2.0]);
        let pa = noma_powers(&[1.0], ActionVector::full(1), &s, RateFunction::Log1p).unwrap();
        let expect = 2f64.exp() - 1.0; // 6.3891
        assert!((pa.powers[0] - expect).abs() < 1e-12);
        let rates = verify_rates(&[1.0], &pa.powers, RateFunction::Log1p).unwrap();
        assert!((rates[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn powers_two_user_recursion() {
        let s = streams_of(&[2.0, 2.0]);
        let h = [1.0, 0.5];
        let pa = noma_powers(&h, ActionVector::full(2), &s, RateFunction::Log1p).unwrap();
        let e2m1 = 2f64.exp() - 1.0;
        let p1 = e2m1;
        let p2 = e2m1 / 0.5 + e2m1 * p1;
        assert!((pa.powers[0] - p1).abs() < 1e-9, "{} vs {}", pa.powers[0], p1);
        assert!((pa.powers[1] - p2).abs() < 1e-9, "{} vs {}", pa.powers[1], p2);
        assert!((p2 - 53.5987).abs() < 1e-3);
        // independent check through the SINR formula
        let sinr2 = pa.powers[1] * 0.5 / (1.0 + 0.5 * pa.powers[0]);
        assert!((sinr2.ln_1p() - 2.0).abs() < 1e-9);
        let rates = verify_rates(&h, &pa.powers, RateFunction::Log1p).unwrap();
        assert!((rates[0] - 2.0).abs() < 1e-9);
        assert!((rates[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rates_of_zero_powers() {
        let rates = verify_rates(&[1.0, 0.5], &[0.0, 0.0], RateFunction::Log1p).unwrap();
        assert_eq!(rates, vec![0.0, 0.0]);
    }

    #[test]
    fn joint_state_enumeration() {
        let m = ChannelModel::shared(vec![0.1, 1.0], vec![0.2, 0.8], 2).unwrap();
        let js = m.enumerate_joint_states().unwrap();
        assert_eq!(js.len(), 4);
        let probs: Vec<f64> = js.iter().map(|s| s.prob).collect();
        assert_eq!(probs, vec![0.2 * 0.2, 0.2 * 0.8, 0.8 * 0.2, 0.8 * 0.8]);
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        for s in &js {
            assert_eq!(m.joint_index(&s.level_indices), js.iter().position(|t| t == s).unwrap());
        }

        let single = ChannelModel::shared(vec![1.0], vec![1.0], 1).unwrap();
        let js = single.enumerate_joint_states().unwrap();
        assert_eq!(js.len(), 1);
        assert_eq!(js[0].prob, 1.0);

        let three = ChannelModel::shared(vec![0.5, 1.0, 2.0], vec![0.3, 0.3, 0.4], 2).unwrap();
        assert_eq!(three.enumerate_joint_states().unwrap().len(), 9);
    }

    #[test]
    fn joint_state_cap() {
        let m = ChannelModel::shared(vec![0.5, 1.0], vec![0.5, 0.5], 2).unwrap();
        let err = m.enumerate_joint_states_capped(3).unwrap_err();
        assert!(matches!(err, Error::SizeLimit(_)));
        assert!(err.to_string().contains("cap"));
    }

    #[test]
    fn channel_model_validation() {
        assert!(ChannelModel::shared(vec![1.0, 0.5], vec![0.5, 0.5], 2).is_err()); // not ascending
        assert!(ChannelModel::shared(vec![-1.0, 0.5], vec![0.5, 0.5], 2).is_err());
        assert!(ChannelModel::shared(vec![0.5, 1.0], vec![0.6, 0.5], 2).is_err()); // sum != 1
        assert!(ChannelModel::new(vec![0.5], vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn action_vector_masks() {
        let a = ActionVector::from_mask(0b101, 3).unwrap();
        assert!(a.contains(0) && !a.contains(1) && a.contains(2));
        assert_eq!(a.count(), 2);
        assert!(!a.is_tdma_feasible());
        assert!(ActionVector::singleton(1, 3).is_tdma_feasible());
        assert!(ActionVector::from_mask(0b1000, 3).is_err());
    }

    prop_compose! {
        fn arb_instance(max_n: usize)
            (n in 1..=max_n)
            (h in prop::collection::vec(0.05f64..4.0, n),
             r0 in prop::collection::vec(0.1f64..3.0, n),
             mask in 0u32..32)
            -> (Vec<f64>, Vec<f64>, u32)
        {
            let m = mask & (((1u64 << h.len()) - 1) as u32);
            (h, r0, m)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        // scheduled users get exactly their packet rate back
        #[test]
        fn rates_round_trip((h, r0, mask) in arb_instance(5)) {
            let streams = streams_of(&r0);
            let u = ActionVector::from_mask(mask, h.len()).unwrap();
            let pa = noma_powers(&h, u, &streams, RateFunction::Log1p).unwrap();
            let rates = verify_rates(&h, &pa.powers, RateFunction::Log1p).unwrap();
            for i in 0..h.len() {
                let want = if u.contains(i) { r0[i] } else { 0.0 };
                prop_assert!((rates[i] - want).abs() < 1e-9,
                    "user {} rate {} want {}", i, rates[i], want);
                if !u.contains(i) {
                    prop_assert_eq!(pa.powers[i], 0.0);
                }
            }
        }

        // raising any scheduled user's gain never raises the total power
        #[test]
        fn total_power_monotone_in_gain((h, r0, mask) in arb_instance(4), eps in 0.01f64..1.0) {
            let streams = streams_of(&r0);
            let u = ActionVector::from_mask(mask, h.len()).unwrap();
            let base = noma_powers(&h, u, &streams, RateFunction::Log1p).unwrap();
            for i in 0..h.len() {
                if !u.contains(i) { continue; }
                let mut h2 = h.clone();
                h2[i] += eps;
                let bumped = noma_powers(&h2, u, &streams, RateFunction::Log1p).unwrap();
                prop_assert!(bumped.total <= base.total + 1e-9 * base.total.max(1.0),
                    "user {}: {} -> {}", i, base.total, bumped.total);
            }
        }

        // adding a user never lowers the power of users decoded after it
        #[test]
        fn activation_superadditive((h, r0, mask) in arb_instance(4), extra in 0usize..4) {
            let n = h.len();
            let extra = extra % n;
            if mask >> extra & 1 == 1 { return Ok(()); }
            let streams = streams_of(&r0);
            let u0 = ActionVector::from_mask(mask, n).unwrap();
            let u1 = ActionVector::from_mask(mask | (1 << extra), n).unwrap();
            let before = noma_powers(&h, u0, &streams, RateFunction::Log1p).unwrap();
            let after = noma_powers(&h, u1, &streams, RateFunction::Log1p).unwrap();
            let ord = decoding_order(&h).unwrap();
            for i in 0..n {
                if u0.contains(i) && ord.inverse[i] > ord.inverse[extra] {
                    prop_assert!(after.powers[i] >= before.powers[i] - 1e-12);
                }
            }
        }

        // swapping two equal-gain users' labels swaps their outputs
        #[test]
        fn tie_break_consistency(g in 0.1f64..2.0, r in 0.2f64..2.5) {
            let streams = streams_of(&[r, r]);
            let u = ActionVector::full(2);
            let pa = noma_powers(&[g, g], u, &streams, RateFunction::Log1p).unwrap();
            let ord = decoding_order(&[g, g]).unwrap();
            prop_assert_eq!(ord.order.clone(), vec![0, 1]);
            // user 0 decodes first, so user 1 absorbs the interference term
            prop_assert!(pa.powers[1] >= pa.powers[0]);
        }
    }
}
