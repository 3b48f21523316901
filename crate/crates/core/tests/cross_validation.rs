//! Cross-module consistency checks between the closed forms, the solver
//! and the simulator that are not part of the acceptance criteria.

use vaoi_core::cmdp::{self, MdpConfig};
use vaoi_core::cosrp::{self, CoSrpPolicy, FractionalProgram, Scheme};
use vaoi_core::model::{ChannelModel, RateFunction, StreamConfig};
use vaoi_core::optimizer::{self, SolverConfig};
use vaoi_core::sim::{self, CmdpAdapter, CoSrpAdapter, SimConfig};

const F: RateFunction = RateFunction::Log1p;

fn fig1_instance() -> (ChannelModel, Vec<StreamConfig>) {
    let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.2, 0.8], 2).unwrap();
    let streams = vec![
        StreamConfig::new(0.5, 2.0, 0.5).unwrap(),
        StreamConfig::new(0.5, 2.0, 0.5).unwrap(),
    ];
    (model, streams)
}

/// Empirical transition frequencies of one user's age chain match the
/// birth/reset chain labels: up with `λ(1−p)`, hold with `(1−λ)(1−p)`,
/// reset with `p`.
#[test]
fn age_chain_transition_frequencies() {
    let (model, streams) = fig1_instance();
    // engineered policy with p = 0.55 for user 1
    let mu = vec![vec![0.1, 0.35, 0.35, 0.2]; 4];
    let policy = CoSrpPolicy::new(Scheme::Noma, 2, mu).unwrap();
    let stats = cosrp::delivery_stats(&policy, &model, &streams, F).unwrap();
    let p = stats.p[0];
    let lambda = streams[0].lambda;
    let adapter = CoSrpAdapter::new(&policy, &model, &streams, F).unwrap();
    let horizon = 1_000_000;
    let (_, rows) = sim::simulate_trace(
        &model,
        &streams,
        F,
        &adapter,
        &SimConfig {
            horizon,
            warmup: 0,
            seed: 99,
            replications: 1,
        },
        horizon as usize,
    )
    .unwrap();

    // from age zero: hold with 1 − λ(1−p), go up with λ(1−p)
    let mut from_zero = [0u64; 2]; // [hold, up]
    // from a positive age: reset with p, hold with (1−λ)(1−p), up with λ(1−p)
    let mut from_pos = [0u64; 3];
    for w in rows.windows(2) {
        let (d0, d1) = (w[0].delta[0], w[1].delta[0]);
        if d0 == 0 {
            match d1 {
                0 => from_zero[0] += 1,
                1 => from_zero[1] += 1,
                _ => panic!("age jumped by more than one"),
            }
        } else if d1 == 0 {
            from_pos[0] += 1;
        } else if d1 == d0 {
            from_pos[1] += 1;
        } else if d1 == d0 + 1 {
            from_pos[2] += 1;
        } else {
            panic!("invalid transition {d0} -> {d1}");
        }
    }
    let check = |count: u64, total: u64, expect: f64, what: &str| {
        let n = total as f64;
        let freq = count as f64 / n;
        let se = (expect * (1.0 - expect) / n).sqrt();
        assert!(
            (freq - expect).abs() <= 3.0 * se,
            "{what}: {freq:.5} vs {expect:.5} (se {se:.2e})"
        );
    };
    let zero_total = from_zero.iter().sum::<u64>();
    check(from_zero[1], zero_total, lambda * (1.0 - p), "zero -> up");
    let pos_total = from_pos.iter().sum::<u64>();
    check(from_pos[0], pos_total, p, "positive -> reset");
    check(from_pos[1], pos_total, (1.0 - lambda) * (1.0 - p), "positive -> hold");
    check(from_pos[2], pos_total, lambda * (1.0 - p), "positive -> up");
}

/// Simulated age histogram is within total-variation 0.01 of the
/// geometric stationary distribution.
#[test]
fn histogram_matches_stationary_distribution() {
    let (model, streams) = fig1_instance();
    let mu = vec![vec![0.0, 0.5, 0.5, 0.0]; 4];
    let policy = CoSrpPolicy::new(Scheme::Noma, 2, mu).unwrap();
    let stats = cosrp::delivery_stats(&policy, &model, &streams, F).unwrap();
    let adapter = CoSrpAdapter::new(&policy, &model, &streams, F).unwrap();
    let metrics = sim::simulate(
        &model,
        &streams,
        F,
        &adapter,
        &SimConfig {
            horizon: 1_000_000,
            warmup: 10_000,
            seed: 1234,
            replications: 1,
        },
    )
    .unwrap();
    for user in 0..2 {
        let p = stats.p[user];
        let lambda = streams[user].lambda;
        let n_max = cosrp::default_truncation(lambda, p).max(64);
        let pi = cosrp::stationary_distribution(lambda, p, n_max);
        let total: u64 = metrics.histograms[user].iter().sum();
        let mut tv = 0.0;
        for n in 0..=n_max {
            let emp = metrics.histograms[user].get(n).copied().unwrap_or(0) as f64 / total as f64;
            tv += (emp - pi[n]).abs();
        }
        // mass beyond the truncation counts fully toward the distance
        let tail_emp: u64 = metrics.histograms[user].iter().skip(n_max + 1).sum();
        tv += tail_emp as f64 / total as f64;
        tv *= 0.5;
        assert!(tv < 0.01, "user {user}: total variation {tv:.4}");
    }
}

/// Simulating the solver's emitted policy reproduces the reported
/// objective and power within three standard errors.
#[test]
fn solver_output_round_trips_through_simulation() {
    let (model, streams) = fig1_instance();
    let program = FractionalProgram::build(&model, &streams, 15.0, Scheme::Noma, F).unwrap();
    let solution = optimizer::solve(&program, &SolverConfig::default()).unwrap();

    // through the file format, as the command-line tools do
    let mut buf = Vec::new();
    optimizer::write_solution(&mut buf, &solution, &model).unwrap();
    let loaded = cosrp::read_policy(&buf[..]).unwrap();
    assert!((loaded.footer["objective"] - solution.objective).abs() < 1e-9);

    let adapter = CoSrpAdapter::new(&loaded.policy, &model, &streams, F).unwrap();
    let metrics = sim::replicate(
        &model,
        &streams,
        F,
        &adapter,
        &SimConfig {
            horizon: 1_000_000,
            warmup: 10_000,
            seed: 777,
            replications: 4,
        },
    )
    .unwrap();
    let z_age = (metrics.weighted_vaoi - solution.objective).abs() / metrics.se_weighted;
    let z_pow = (metrics.avg_power - solution.achieved_power).abs() / metrics.se_power;
    assert!(z_age <= 3.0, "age {} vs {} ({z_age:.2} SE)", metrics.weighted_vaoi, solution.objective);
    assert!(z_pow <= 3.0, "power {} vs {} ({z_pow:.2} SE)", metrics.avg_power, solution.achieved_power);
}

/// The optimal objective only improves with budget.
#[test]
fn objective_is_monotone_in_budget() {
    let (model, streams) = fig1_instance();
    let mut prev = f64::INFINITY;
    for pbar in [5.0, 9.0, 14.0, 21.0, 33.0, 50.0] {
        let program = FractionalProgram::build(&model, &streams, pbar, Scheme::Noma, F).unwrap();
        let sol = optimizer::solve(&program, &SolverConfig::default()).unwrap();
        let v = sol.budget_objective();
        assert!(v <= prev + 1e-9, "pbar {pbar}: {v} after {prev}");
        prev = v;
    }
}

/// Mean of the truncated stationary distribution reproduces the closed
/// form across a parameter grid.
#[test]
fn stationary_mean_equals_closed_form() {
    for lambda in [0.2, 0.5, 0.9] {
        for p in [0.3, 0.6, 0.95] {
            let n_max = cosrp::default_truncation(lambda, p).max(200);
            let pi = cosrp::stationary_distribution(lambda, p, n_max);
            let mean: f64 = pi.iter().enumerate().map(|(n, &m)| n as f64 * m).sum();
            let expect = cosrp::average_vaoi(p, lambda);
            assert!(
                (mean - expect).abs() < 1e-8,
                "lambda {lambda}, p {p}: {mean} vs {expect}"
            );
        }
    }
}

/// Simulating an age-and-channel policy agrees with its exact chain
/// evaluation, pinning the decision-timing convention across modules.
#[test]
fn cmdp_policy_simulation_matches_exact_chain() {
    let (model, streams) = fig1_instance();
    let config = MdpConfig::default();
    let solution = cmdp::bisect_theta(15.0, &config, &model, &streams, F, Scheme::Noma).unwrap();
    let adapter = CmdpAdapter::new(&solution.policy, &model, &streams, F).unwrap();
    let metrics = sim::replicate(
        &model,
        &streams,
        F,
        &adapter,
        &SimConfig {
            horizon: 1_000_000,
            warmup: 10_000,
            seed: 31_337,
            replications: 4,
        },
    )
    .unwrap();
    let z_age = (metrics.weighted_vaoi - solution.weighted_vaoi).abs() / metrics.se_weighted;
    let z_pow = (metrics.avg_power - solution.average_power).abs() / metrics.se_power;
    assert!(
        z_age <= 3.0,
        "age {} vs chain {} ({z_age:.2} SE)",
        metrics.weighted_vaoi,
        solution.weighted_vaoi
    );
    assert!(
        z_pow <= 3.0,
        "power {} vs chain {} ({z_pow:.2} SE)",
        metrics.avg_power,
        solution.average_power
    );
}
