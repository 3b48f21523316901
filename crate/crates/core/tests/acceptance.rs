//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers once its assertions hold.
//!
//! Run with `cargo test -p vaoi-core --test acceptance -- --nocapture`.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use vaoi_core::cmdp::{self, MdpConfig};
use vaoi_core::cosrp::{self, CoSrpPolicy, FractionalProgram, Scheme};
use vaoi_core::model::{ChannelModel, RateFunction, StreamConfig};
use vaoi_core::optimizer::{self, CosrpSolution, SolverConfig};
use vaoi_core::sim::{self, CoSrpAdapter, SimConfig};

const F: RateFunction = RateFunction::Log1p;

fn fig1_instance() -> (ChannelModel, Vec<StreamConfig>) {
    let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.2, 0.8], 2).unwrap();
    let streams = vec![
        StreamConfig::new(0.5, 2.0, 0.5).unwrap(),
        StreamConfig::new(0.5, 2.0, 0.5).unwrap(),
    ];
    (model, streams)
}

fn table1_instance(h_max: f64, p_bad: f64, r0: f64) -> (ChannelModel, Vec<StreamConfig>) {
    let model = ChannelModel::shared(vec![0.1, h_max], vec![p_bad, 1.0 - p_bad], 2).unwrap();
    let streams = vec![
        StreamConfig::new(0.9, r0, 0.5).unwrap(),
        StreamConfig::new(0.9, r0, 0.5).unwrap(),
    ];
    (model, streams)
}

fn solve(model: &ChannelModel, streams: &[StreamConfig], pbar: f64, scheme: Scheme) -> CosrpSolution {
    let program = FractionalProgram::build(model, streams, pbar, scheme, F).unwrap();
    optimizer::solve(&program, &SolverConfig::default()).unwrap()
}

fn closed_forms(
    policy: &CoSrpPolicy,
    model: &ChannelModel,
    streams: &[StreamConfig],
) -> (f64, f64) {
    let stats = cosrp::delivery_stats(policy, model, streams, F).unwrap();
    let age: f64 = (0..streams.len())
        .map(|i| streams[i].weight * cosrp::average_vaoi(stats.p[i], streams[i].lambda))
        .sum();
    (age, cosrp::average_power(&stats, streams))
}

/// Criterion 1: the five reference parameter rows reproduce. TDMA cells
/// whose budget is slack saturate at the analytic value λ·(1/0.5 − 1) = λ;
/// the final row's TDMA cell is such a cell (see the certificate inside),
/// so it is checked against λ, not against the published 0.9751.
#[test]
fn criterion_1_table1_reproduction() {
    let t0 = Instant::now();
    // (h_max, p_bad, r0, pbar, expected_tdma, tol_tdma, expected_noma, tol_noma)
    let rows = [
        (1.0, 0.9, 2.0, 45.0, 1.0774, 0.01, 1.0668, 0.01),
        (1.0, 0.5, 2.0, 45.0, 0.9, 0.005, 0.3850, 0.01),
        (2.0, 0.5, 2.0, 45.0, 0.9, 0.005, 0.2681, 0.01),
        (2.0, 0.5, 3.0, 45.0, 0.9751, 0.01, 0.9751, 0.01),
        (2.0, 0.5, 3.0, 100.0, 0.9, 0.005, 0.5265, 0.01),
    ];

    // certificate for the row-5 saturation: the explicit TDMA policy that
    // serves the better-channel user (splitting ties and the bad-bad
    // state) delivers to each user with probability one half and costs
    // about 52 power units, i.e. the budget of 100 is slack and the
    // optimum is the saturation value 0.9, not the published 0.9751
    {
        let (model, streams) = table1_instance(2.0, 0.5, 3.0);
        let mu = vec![
            vec![0.0, 0.5, 0.5], // both bad: split
            vec![0.0, 0.0, 1.0], // user 2 good
            vec![0.0, 1.0, 0.0], // user 1 good
            vec![0.0, 0.5, 0.5], // both good: split
        ];
        let witness = CoSrpPolicy::new(Scheme::Tdma, 2, mu).unwrap();
        let (age, power) = closed_forms(&witness, &model, &streams);
        assert!(
            (age - 0.9).abs() < 1e-12 && power < 100.0,
            "certificate: age {age}, power {power}"
        );
        println!(
            "  criterion 1 note: explicit TDMA policy achieves 0.9 at power {power:.2} <= 100, so the \
             published 0.9751 for that cell is not attainable as an optimum"
        );
    }

    for (k, &(h_max, p_bad, r0, pbar, exp_t, tol_t, exp_n, tol_n)) in rows.iter().enumerate() {
        let (model, streams) = table1_instance(h_max, p_bad, r0);
        let tdma = solve(&model, &streams, pbar, Scheme::Tdma);
        let noma = solve(&model, &streams, pbar, Scheme::Noma);
        assert!(
            (tdma.objective - exp_t).abs() <= tol_t,
            "row {} TDMA: {} vs expected {exp_t}",
            k + 1,
            tdma.objective
        );
        assert!(
            (noma.objective - exp_n).abs() <= tol_n,
            "row {} NOMA: {} vs expected {exp_n}",
            k + 1,
            noma.objective
        );
        println!(
            "  row {}: tdma {:.4} (exp {:.4}), noma {:.4} (exp {:.4})",
            k + 1,
            tdma.objective,
            exp_t,
            noma.objective,
            exp_n
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!("criterion 1 (table-1 reproduction): PASS in {elapsed:?}");
}

/// Criterion 2: closed forms against simulation for 20 random feasible
/// policies at T = 10⁶, 4 replications, three standard errors.
#[test]
fn criterion_2_closed_form_cross_validation() {
    let t0 = Instant::now();
    let (model, streams) = fig1_instance();
    let master = 101u64;
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    let mut worst_age = 0.0f64;
    let mut worst_pow = 0.0f64;
    for k in 0..20 {
        let mu = (0..4)
            .map(|_| {
                let mut row: Vec<f64> = (0..4).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
                row
            })
            .collect();
        let policy = CoSrpPolicy::new(Scheme::Noma, 2, mu).unwrap();
        let (expect_age, expect_power) = closed_forms(&policy, &model, &streams);
        let adapter = CoSrpAdapter::new(&policy, &model, &streams, F).unwrap();
        let metrics = sim::replicate(
            &model,
            &streams,
            F,
            &adapter,
            &SimConfig {
                horizon: 1_000_000,
                warmup: 10_000,
                seed: master * 1000 + k,
                replications: 4,
            },
        )
        .unwrap();
        let z_age = (metrics.weighted_vaoi - expect_age).abs() / metrics.se_weighted;
        let z_pow = (metrics.avg_power - expect_power).abs() / metrics.se_power;
        assert!(
            z_age <= 3.0,
            "policy {k}: age {} vs {} is {z_age:.2} SE",
            metrics.weighted_vaoi,
            expect_age
        );
        assert!(
            z_pow <= 3.0,
            "policy {k}: power {} vs {} is {z_pow:.2} SE",
            metrics.avg_power,
            expect_power
        );
        worst_age = worst_age.max(z_age);
        worst_pow = worst_pow.max(z_pow);
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!(
        "criterion 2 (closed-form cross-validation): PASS in {elapsed:?} \
         (worst |z|: age {worst_age:.2}, power {worst_pow:.2})"
    );
}

/// Criterion 3: independent optimality oracles — the exhaustive
/// single-user grid and the random feasibility probe.
#[test]
fn criterion_3_optimality_oracles() {
    let t0 = Instant::now();
    // (a) single-user grid at step 1e-3 on three budgets
    let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.5, 0.5], 1).unwrap();
    let stream = StreamConfig::new(0.5, 2.0, 1.0).unwrap();
    for pbar in [5.0, 10.0, 20.0] {
        let oracle = optimizer::grid_oracle_single_user(&model, &stream, pbar, 1e-3, F).unwrap();
        let solution = solve(&model, &[stream], pbar, Scheme::Noma);
        assert!(
            (oracle - solution.objective).abs() <= 0.01,
            "pbar {pbar}: oracle {oracle} vs solver {}",
            solution.objective
        );
        println!("  grid oracle at pbar {pbar}: {:.6} vs solver {:.6}", oracle, solution.objective);
    }
    // (b) 1e5-sample probe on the reference two-user NOMA instance
    let (model2, streams2) = table1_instance(1.0, 0.5, 2.0);
    let program = FractionalProgram::build(&model2, &streams2, 45.0, Scheme::Noma, F).unwrap();
    let solution = optimizer::solve(&program, &SolverConfig::default()).unwrap();
    let violations = optimizer::random_feasibility_probe(&program, &solution, 100_000, 20_240_817);
    assert_eq!(violations, 0, "probe found improving feasible points");
    let again = optimizer::random_feasibility_probe(&program, &solution, 100_000, 20_240_817);
    assert_eq!(violations, again, "probe is seed-deterministic");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!("criterion 3 (optimality oracles): PASS in {elapsed:?} (probe violations: {violations})");
}

/// Criterion 4: scheme limits at a huge budget — TDMA saturates at λ,
/// NOMA reaches zero.
#[test]
fn criterion_4_scheme_limits() {
    let (model, streams) = table1_instance(1.0, 0.5, 2.0);
    let tdma = solve(&model, &streams, 1e4, Scheme::Tdma);
    let noma = solve(&model, &streams, 1e4, Scheme::Noma);
    assert!(
        (tdma.objective - 0.9).abs() <= 0.005,
        "TDMA saturation {} != 0.9",
        tdma.objective
    );
    assert!(noma.objective <= 0.01, "NOMA floor {} > 0.01", noma.objective);
    println!(
        "criterion 4 (scheme limits): PASS (tdma {:.6}, noma {:.2e})",
        tdma.objective, noma.objective
    );
}

/// Criterion 5: at every solver exit the dual residual is at tolerance
/// and the auxiliaries satisfy their fixed-point identities.
#[test]
fn criterion_5_dual_fixed_point() {
    let (model, streams) = fig1_instance();
    let (model_t, streams_t) = table1_instance(1.0, 0.5, 2.0);
    let cases: Vec<(ChannelModel, Vec<StreamConfig>, f64, Scheme)> = vec![
        (model.clone(), streams.clone(), 10.0, Scheme::Noma),
        (model.clone(), streams.clone(), 15.0, Scheme::Noma),
        (model.clone(), streams.clone(), 30.0, Scheme::Noma),
        (model.clone(), streams.clone(), 15.0, Scheme::Tdma),
        (model_t, streams_t, 45.0, Scheme::Noma),
    ];
    for (model, streams, pbar, scheme) in cases {
        let program = FractionalProgram::build(&model, &streams, pbar, scheme, F).unwrap();
        let sol = optimizer::solve(&program, &SolverConfig::default()).unwrap();
        let psi = optimizer::psi(&sol.policy, &sol.dual, &program);
        let psi_inf = psi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(psi_inf <= 1e-8, "{scheme:?} pbar {pbar}: psi {psi_inf:.3e}");
        let d = program.d(&sol.policy);
        let f = program.f_occ(&sol.policy);
        for i in 0..streams.len() {
            assert!(
                (sol.dual.beta[i] - d[i] / f[i]).abs() <= 1e-8,
                "{scheme:?} pbar {pbar}: beta[{i}] off by {:.3e}",
                (sol.dual.beta[i] - d[i] / f[i]).abs()
            );
            assert!(
                (sol.dual.rho[i] - sol.theta / f[i]).abs() <= 1e-8,
                "{scheme:?} pbar {pbar}: rho[{i}] off by {:.3e}",
                (sol.dual.rho[i] - sol.theta / f[i]).abs()
            );
        }
        // the headline objective is recomputable from the policy
        let recomputed = cosrp::weighted_objective(&streams, &program.delivery_prob(&sol.policy));
        assert!((recomputed - sol.objective).abs() <= 1e-10);
    }
    println!("criterion 5 (dual fixed point and auxiliaries): PASS");
}

/// Criterion 6: CMDP structure — threshold propagation in age and gain,
/// value monotonicity, and geometric contraction of the sweeps.
#[test]
fn criterion_6_cmdp_structure() {
    let t0 = Instant::now();
    let (model, streams) = fig1_instance();
    let config = MdpConfig::default(); // delta_max 20, gamma 0.99
    for theta in [0.005, 0.05, 0.5] {
        let (vf, _) = cmdp::value_iteration(theta, &config, &model, &streams, F, Scheme::Noma).unwrap();
        let report = cmdp::check_threshold(theta, &vf, &model, &streams, F, Scheme::Noma, &config).unwrap();
        assert_eq!(
            report.delta_violations, 0,
            "theta {theta}: age-threshold violations: {:?}",
            report.examples
        );
        assert_eq!(
            report.gain_violations, 0,
            "theta {theta}: gain-threshold violations: {:?}",
            report.examples
        );
        assert_eq!(vf.monotonicity_violations(), 0, "theta {theta}: value not monotone");
        for w in vf.sweep_diffs.windows(2) {
            if w[0] > 1e-9 {
                assert!(
                    w[1] <= config.gamma * w[0] * (1.0 + 1e-9) + 1e-12,
                    "theta {theta}: sweep diffs {} -> {} break gamma {}",
                    w[0],
                    w[1],
                    config.gamma
                );
            }
        }
        println!(
            "  theta {theta}: thresholds clean, value monotone, {} sweeps contract",
            vf.sweep_diffs.len()
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!("criterion 6 (CMDP structure suite): PASS in {elapsed:?}");
}

/// Criterion 7: the sandwich — half the randomized optimum bounds the
/// CMDP value from below, the randomized optimum bounds it from above.
#[test]
fn criterion_7_sandwich() {
    let t0 = Instant::now();
    let (model, streams) = fig1_instance();
    let config = MdpConfig::default();
    for pbar in [10.0, 15.0, 30.0] {
        let srp = solve(&model, &streams, pbar, Scheme::Noma);
        let lb = optimizer::lower_bound(srp.objective);
        let cmdp_sol = cmdp::bisect_theta(pbar, &config, &model, &streams, F, Scheme::Noma).unwrap();
        let tail = cmdp_sol.tail_mass.iter().cloned().fold(0.0f64, f64::max);
        assert!(tail < 1e-6, "pbar {pbar}: age-cap tail mass {tail:.2e}");
        let achieved = cmdp_sol.budget_objective();
        assert!(
            lb <= achieved + 1e-9,
            "pbar {pbar}: lower bound {lb} above CMDP value {achieved}"
        );
        assert!(
            lb <= cmdp_sol.weighted_vaoi + 1e-9,
            "pbar {pbar}: lower bound {lb} above endpoint value {}",
            cmdp_sol.weighted_vaoi
        );
        assert!(
            achieved <= srp.objective + 1e-6,
            "pbar {pbar}: CMDP value {achieved} above randomized optimum {}",
            srp.objective
        );
        println!(
            "  pbar {pbar}: {lb:.5} <= {achieved:.5} <= {:.5} (tail {tail:.1e})",
            srp.objective
        );
    }
    let elapsed = t0.elapsed();
    println!("criterion 7 (sandwich and 2-approximation): PASS in {elapsed:?}");
}

/// Criterion 8: the inter-delivery identity `E[sum of ages] = λ(I²−I)/2`.
#[test]
fn criterion_8_inter_delivery_identity() {
    let base = SimConfig {
        horizon: 0, // set per case
        warmup: 0,
        seed: 424_242,
        replications: 1,
    };
    for (lambda, period) in [(1.0, 3u64), (0.5, 4), (0.3, 6)] {
        let cfg = SimConfig {
            horizon: period * 120_000,
            ..base
        };
        let stats = sim::inter_delivery_check(lambda, period, &cfg).unwrap();
        assert!(stats.cycles >= 100_000);
        let gap = (stats.mean - stats.expected).abs();
        assert!(
            gap <= 3.0 * stats.se.max(1e-12),
            "lambda {lambda}, period {period}: mean {} vs {} (se {})",
            stats.mean,
            stats.expected,
            stats.se
        );
        println!(
            "  lambda {lambda}, period {period}: mean {:.4} vs {:.4} over {} cycles",
            stats.mean, stats.expected, stats.cycles
        );
    }
    println!("criterion 8 (inter-delivery identity): PASS");
}

/// Criterion 9: qualitative orderings across budget and arrival sweeps.
/// Exact CMDP curve values are not pinned (the reference omits its
/// discount and cap), so the relations are what is checked.
#[test]
fn criterion_9_sweep_orderings() {
    let t0 = Instant::now();
    let (model, streams) = fig1_instance();
    let tight = SolverConfig {
        eps_power: Some(1e-7),
        ..SolverConfig::default()
    };
    let mdp = MdpConfig::default();
    let budgets = [6.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0, 38.0, 46.0];
    let mut prev: Option<(f64, f64, f64)> = None;
    for &pbar in &budgets {
        let noma = optimizer::solve(
            &FractionalProgram::build(&model, &streams, pbar, Scheme::Noma, F).unwrap(),
            &tight,
        )
        .unwrap();
        let tdma = optimizer::solve(
            &FractionalProgram::build(&model, &streams, pbar, Scheme::Tdma, F).unwrap(),
            &tight,
        )
        .unwrap();
        let cm = cmdp::bisect_theta(pbar, &mdp, &model, &streams, F, Scheme::Noma).unwrap();
        let (vn, vt, vc) = (noma.budget_objective(), tdma.budget_objective(), cm.budget_objective());
        assert!(vn <= vt + 1e-9, "pbar {pbar}: NOMA {vn} above TDMA {vt}");
        assert!(vc <= vn + 1e-6, "pbar {pbar}: CMDP {vc} above CO-SRP {vn}");
        if let Some((pn, pt, pc)) = prev {
            assert!(vn <= pn + 1e-9, "NOMA not non-increasing at pbar {pbar}");
            assert!(vt <= pt + 1e-9, "TDMA not non-increasing at pbar {pbar}");
            assert!(vc <= pc + 1e-6, "CMDP not non-increasing at pbar {pbar}");
        }
        prev = Some((vn, vt, vc));
    }
    println!("  budget sweep over {} points ordered correctly", budgets.len());

    // arrival direction: ages only grow with the arrival rate
    let lam_model = ChannelModel::shared(vec![0.1, 1.0], vec![0.5, 0.5], 2).unwrap();
    for pbar in [15.0, 37.0] {
        let mut prev: Option<(f64, f64)> = None;
        for lam in [0.1, 0.2, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0] {
            let streams = vec![
                StreamConfig::new(lam, 2.0, 0.5).unwrap(),
                StreamConfig::new(lam, 2.0, 0.5).unwrap(),
            ];
            let noma = optimizer::solve(
                &FractionalProgram::build(&lam_model, &streams, pbar, Scheme::Noma, F).unwrap(),
                &tight,
            )
            .unwrap();
            let tdma = optimizer::solve(
                &FractionalProgram::build(&lam_model, &streams, pbar, Scheme::Tdma, F).unwrap(),
                &tight,
            )
            .unwrap();
            let (vn, vt) = (noma.budget_objective(), tdma.budget_objective());
            assert!(vn <= vt + 1e-9, "lambda {lam}: NOMA above TDMA");
            if let Some((pn, pt)) = prev {
                assert!(vn >= pn - 1e-9, "NOMA not non-decreasing at lambda {lam}");
                assert!(vt >= pt - 1e-9, "TDMA not non-decreasing at lambda {lam}");
            }
            prev = Some((vn, vt));
        }
        println!("  arrival sweep at budget {pbar} ordered correctly");
    }
    let elapsed = t0.elapsed();
    println!("criterion 9 (qualitative orderings): PASS in {elapsed:?}");
}
