//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime. Expected values come from closed forms, the paper-scale
//! bound constants, and a path-enumeration oracle that walks every
//! positive-probability trajectory directly on the stored matrices.

use std::time::Instant;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chainlaw::algebra::marginals_from;
use chainlaw::algebra::{dobrushin_coefficient, product, reverse_kernel, reverse_kernel_distance};
use chainlaw::countable::{
    central_binomial_probability, condition_p_check, condition_u_check, rw_bound_check,
    rw_max_row_entry, shift_family_checks, stirling_bound_constant, BetaSchedule, CertificateScope,
    RowFamily, TightnessVerdict, UniformVerdict,
};
use chainlaw::entrance::{
    delta_nesting_check, delta_vertices, detect_uniqueness, entrance_law, limit_matrix,
};
use chainlaw::model::{push_forward, ChainModel, Distribution, StochasticMatrix, TimeIndex};
use chainlaw::montecarlo::{empirical_band_report, simulate, SimConfig};
use chainlaw::tail::{band_probabilities, band_sets, harmonic_backward, TailEventSpec};

fn permutation_model(depth: i64) -> ChainModel {
    ChainModel::from_step_fn((-depth, 0), None, 1e-12, |_| array![[0.0, 1.0], [1.0, 0.0]])
}

fn alt_dim_model(depth: i64) -> ChainModel {
    ChainModel::from_step_fn((-depth, 0), None, 1e-12, |n| {
        if n.rem_euclid(2) == 0 {
            array![[1.0], [1.0]]
        } else {
            array![[0.5, 0.5]]
        }
    })
}

fn gambler_model(window: (i64, i64)) -> ChainModel {
    ChainModel::from_step_fn(window, None, 1e-12, |_| {
        array![[1.0, 0.0, 0.0], [0.25, 0.5, 0.25], [0.0, 0.0, 1.0]]
    })
}

fn contracting_model(depth: i64) -> ChainModel {
    ChainModel::from_step_fn((-depth, 0), None, 1e-12, |_| array![[0.9, 0.1], [0.2, 0.8]])
}

/// Exact marginals by walking every positive-probability path on the raw
/// matrix entries; independent of the push-forward implementation.
fn oracle_marginals(
    model: &ChainModel,
    initial: &Distribution,
    horizon: TimeIndex,
) -> Vec<Vec<f64>> {
    let t0 = initial.time();
    let mut acc: Vec<Vec<f64>> = Vec::new();
    for t in t0..=horizon {
        let dim = model.dim_at(t).unwrap();
        acc.push(vec![0.0; dim]);
    }
    fn dfs(
        model: &ChainModel,
        t: TimeIndex,
        state: usize,
        prob: f64,
        horizon: TimeIndex,
        t0: TimeIndex,
        acc: &mut Vec<Vec<f64>>,
    ) {
        acc[(t - t0) as usize][state] += prob;
        if t == horizon {
            return;
        }
        let step = model.matrix_at(t).unwrap();
        for (next, &p) in step.entries().row(state).iter().enumerate() {
            if p > 0.0 {
                dfs(model, t + 1, next, prob * p, horizon, t0, acc);
            }
        }
    }
    for (state, &p) in initial.probs().iter().enumerate() {
        if p > 0.0 {
            dfs(model, t0, state, p, horizon, t0, &mut acc);
        }
    }
    acc
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance in TV between two vertex sets.
fn vertex_set_distance(a: &[Distribution], b: &[Distribution]) -> f64 {
    let one_way = |from: &[Distribution], to: &[Distribution]| {
        from.iter()
            .map(|v| {
                to.iter()
                    .map(|w| v.tv_distance(w))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[test]
fn criterion_1_permutation_counterexample() {
    let started = Instant::now();
    let model = permutation_model(200);

    for d in 1..=200i64 {
        let approx = delta_vertices(&model, -d, 0, 1e-9).unwrap();
        assert_eq!(approx.diameter(), 1.0, "depth {d}");
        assert_eq!(approx.vertices().len(), 2);
    }

    let report = detect_uniqueness(&model, 0, 1e-9, 200).unwrap();
    assert!(!report.unique);
    assert!(report.diameter_trace.iter().all(|&(_, diam)| diam == 1.0));

    let evens: Vec<i64> = (1..=100).map(|k| -2 * k).collect();
    let even_report = limit_matrix(&model, 0, &evens, 1e-12).unwrap();
    assert!(even_report.converged);
    assert_eq!(even_report.limit, Array2::<f64>::eye(2));
    assert!(!even_report.unique);

    let odds: Vec<i64> = (1..=100).map(|k| -(2 * k - 1)).collect();
    let odd_report = limit_matrix(&model, 0, &odds, 1e-12).unwrap();
    assert!(odd_report.converged);
    assert_eq!(odd_report.limit, array![[0.0, 1.0], [1.0, 0.0]]);

    // Different subsequential limits, identical ranges: the vertex sets of
    // even-depth and odd-depth images coincide as sets.
    let even_vertices = delta_vertices(&model, -100, 0, 1e-12).unwrap();
    let odd_vertices = delta_vertices(&model, -99, 0, 1e-12).unwrap();
    assert!(vertex_set_distance(even_vertices.vertices(), odd_vertices.vertices()) <= 1e-12);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 1 (permutation counterexample): PASS ({elapsed:?})");
}

#[test]
fn criterion_2_alternating_dimension_limits() {
    let started = Instant::now();
    let model = alt_dim_model(50);

    // The four products, by parity of (s, t), for every gap >= 2.
    let two_rows = array![[0.5, 0.5], [0.5, 0.5]];
    let one_row = array![[0.5, 0.5]];
    let col = array![[1.0], [1.0]];
    let scalar = array![[1.0]];
    for t in -10..=0i64 {
        for s in -50..=(t - 2) {
            let p = product(&model, s, t).unwrap();
            let expected = match (s.rem_euclid(2) == 0, t.rem_euclid(2) == 0) {
                (true, true) => &two_rows,
                (false, true) => &one_row,
                (true, false) => &col,
                (false, false) => &scalar,
            };
            assert_eq!(p.matrix(), expected, "s={s}, t={t}");
        }
    }

    // Unique law (1/2, 1/2) at the even end of the window.
    let report = detect_uniqueness(&model, 0, 1e-12, 50).unwrap();
    assert!(report.unique);
    let law = report.law.unwrap();
    assert!((law.prob(1) - 0.5).abs() <= 1e-12);
    assert!((law.prob(2) - 0.5).abs() <= 1e-12);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 2 (alternating-dimension limits): PASS ({elapsed:?})");
}

#[test]
fn criterion_3_zero_one_law_exact() {
    let started = Instant::now();
    let horizon = 40i64;
    let model = gambler_model((0, horizon));
    let event = TailEventSpec::Absorption { targets: vec![1] };
    let h = harmonic_backward(&model, &event).unwrap();
    let bands = band_sets(&h, 0.1, 0.9).unwrap();
    let initial = Distribution::delta(2, 3, 0).unwrap();
    let report = band_probabilities(&model, &initial, &h, &bands).unwrap();

    for row in &report.rows {
        let n = row.time;
        if n < horizon {
            assert!(
                (row.p_mid - 0.5f64.powi(n as i32)).abs() <= 1e-12,
                "P_mid({n}) = {} vs {}",
                row.p_mid,
                0.5f64.powi(n as i32)
            );
        }
        assert!(row.conservation_residual <= 1e-12, "n = {n}");
        assert_eq!((row.p_low + row.p_high) + row.p_mid, 1.0);
    }
    let last = report.rows.last().unwrap();
    assert!((last.p_high - 0.5).abs() <= 1e-11);
    assert!((report.p_event - 0.5).abs() <= 1e-11);

    // Path-enumeration oracle: exact marginals for n <= 12. The bands for
    // this chain are structural: state 1 carries h = 1, state 3 carries
    // h = 0, the middle state stays strictly between the thresholds.
    let oracle = oracle_marginals(&model, &initial, 12);
    for (idx, marginal) in oracle.iter().enumerate() {
        let row = &report.rows[idx];
        assert!((row.p_high - marginal[0]).abs() <= 1e-12);
        assert!((row.p_mid - marginal[1]).abs() <= 1e-12);
        assert!((row.p_low - marginal[2]).abs() <= 1e-12);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 3 (zero-one law, exact): PASS ({elapsed:?})");
}

#[test]
fn criterion_4_zero_one_law_empirical() {
    let started = Instant::now();
    let horizon = 60i64;
    let n_traj = 100_000usize;
    let model = gambler_model((0, horizon));
    let event = TailEventSpec::Absorption { targets: vec![1] };
    let h = harmonic_backward(&model, &event).unwrap();
    let bands = band_sets(&h, 0.1, 0.9).unwrap();
    let initial = Distribution::delta(2, 3, 0).unwrap();

    let config = SimConfig {
        n_trajectories: n_traj,
        horizon,
        root_seed: 42,
        checkpoints: (0..=horizon).collect(),
    };
    let batch = simulate(&model, &initial, &config).unwrap();
    let report = empirical_band_report(&model, &batch, &bands, &event).unwrap();

    // Deterministic rerun is bit-identical.
    let batch2 = simulate(&model, &initial, &config).unwrap();
    assert_eq!(batch, batch2);

    // Symmetric difference at n = 20: a disagreement needs a trajectory
    // still unabsorbed at 20, so its probability is at most (1/2)^20.
    let at20 = &report.rows[20];
    assert!(
        at20.p_sym_diff <= 0.5f64.powi(20) + 3.0 * at20.se_sym_diff,
        "symdiff {} vs bound {}",
        at20.p_sym_diff,
        0.5f64.powi(20) + 3.0 * at20.se_sym_diff
    );

    // Every checkpoint within 4 standard errors of the exact values, with
    // the standard error taken at the exact probability.
    for (n, row) in report.rows.iter().enumerate() {
        let exact_mid = 0.5f64.powi(n as i32);
        let exact_high = (1.0 - exact_mid) / 2.0;
        let exact_low = exact_high;
        for (emp, exact) in [
            (row.p_low, exact_low),
            (row.p_mid, exact_mid),
            (row.p_high, exact_high),
        ] {
            let se = (exact * (1.0 - exact) / n_traj as f64).sqrt();
            assert!(
                (emp - exact).abs() <= 4.0 * se,
                "n = {n}: empirical {emp} vs exact {exact} (4se = {})",
                4.0 * se
            );
        }
    }
    // Undecided trajectories are bounded by the unabsorbed mass.
    let exact_unabsorbed = 0.5f64.powi(horizon as i32);
    let se = (exact_unabsorbed * (1.0 - exact_unabsorbed) / n_traj as f64).sqrt();
    assert!(report.undecided_fraction <= exact_unabsorbed + 3.0 * se);

    // Absorption frequency at the target class sits within 3 SE of 1/2.
    let se_event = (0.25 / n_traj as f64).sqrt();
    assert!(
        (report.p_event - 0.5).abs() <= 3.0 * se_event,
        "empirical event weight {}",
        report.p_event
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 4 (zero-one law, empirical): PASS ({elapsed:?})");
}

#[test]
fn criterion_5_uniqueness_via_contraction() {
    let started = Instant::now();
    let depth = 80i64;
    let model = contracting_model(depth);

    // Dobrushin coefficient of the step is 0.7, exactly multiplicative for
    // two-state chains.
    assert!(
        (dobrushin_coefficient(model.matrix_at(-1).unwrap().entries().view()) - 0.7).abs() <= 1e-15
    );
    let report = detect_uniqueness(&model, 0, 1e-8, 70).unwrap();
    for &(d, diam) in report.diameter_trace.iter().take(40) {
        let expected = 0.7f64.powi(d as i32);
        assert!(
            (diam - expected).abs() <= 1e-10,
            "depth {d}: diameter {diam} vs {expected}"
        );
    }
    assert!(report.unique);
    let law = report.law.unwrap();
    assert!((law.prob(1) - 2.0 / 3.0).abs() <= 1e-10);
    assert!((law.prob(2) - 1.0 / 3.0).abs() <= 1e-10);

    // Anchored entrance laws agree within the contraction rate at every
    // reported depth.
    let e1 = Distribution::delta(1, 2, -depth).unwrap();
    let e2 = Distribution::delta(2, 2, -depth).unwrap();
    let times: Vec<i64> = (-40..=0).collect();
    let a = entrance_law(&model, &e1, &times).unwrap();
    let b = entrance_law(&model, &e2, &times).unwrap();
    assert!((a.anchor_sensitivity - 0.7f64.powi(40)).abs() <= 1e-12);
    for (x, y) in a.laws.iter().zip(b.laws.iter()) {
        let gap = (x.time() + depth) as i32;
        assert!(
            x.tv_distance(y) <= 0.7f64.powi(gap) + 1e-12,
            "time {}",
            x.time()
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 5 (uniqueness via contraction): PASS ({elapsed:?})");
}

#[test]
fn criterion_6_random_walk_bound() {
    let started = Instant::now();
    let sweep: Vec<u32> = (1..=1000).collect();
    let rows = rw_bound_check(&sweep).unwrap();
    for row in &rows {
        assert!(row.holds, "n = {}", row.n);
        // The bound also holds with the truncated decimal constant.
        assert!(
            row.exact <= 0.65774 * (row.n as f64).powf(-0.5),
            "n = {}",
            row.n
        );
    }
    let at_100 = &rows[99];
    assert!((at_100.exact - 0.0563).abs() <= 1e-4);
    assert!((at_100.bound - 0.0658).abs() <= 1e-4);
    assert!((stirling_bound_constant() - 0.65774).abs() <= 1e-5);

    // Two evaluation routes for the peak of the 2n-step kernel: truncated
    // matrix powers against the log-gamma closed form.
    let mut last = f64::INFINITY;
    for n in 1..=50u32 {
        let dp = rw_max_row_entry(n, 4 * n as usize + 1).unwrap();
        let lg = central_binomial_probability(n);
        assert!((dp - lg).abs() <= 1e-12, "n = {n}: {dp} vs {lg}");
        assert!(dp <= last + 1e-15, "peak must not increase (n = {n})");
        last = dp;
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 6 (random-walk bound sweep): PASS ({elapsed:?})");
}

#[test]
fn criterion_7_conditions_p_and_u() {
    let started = Instant::now();
    let times: Vec<i64> = (-10..0).collect();
    let eps_grid = [0.1, 0.01, 0.001];

    // Pure resampling rows: uniformly tight with the closed-form geometric
    // envelope beta^N <= eps.
    let reset = RowFamily::reset(1.0, BetaSchedule::Constant(0.5)).unwrap();
    let verdicts = condition_p_check(&reset, &times, &eps_grid, 64).unwrap();
    for v in &verdicts {
        match v {
            TightnessVerdict::Tight { table, scope, .. } => {
                assert_eq!(*scope, CertificateScope::AllStates);
                assert_eq!(table[0].1, 4); // 0.5^4 = 0.0625 <= 0.1
                assert_eq!(table[1].1, 7); // 0.5^7 ~ 0.0078 <= 0.01
                assert_eq!(table[2].1, 10);
            }
            other => panic!("reset must be tight, got {other:?}"),
        }
    }
    match condition_u_check(&reset, &times, &eps_grid, 64, 10_000).unwrap() {
        UniformVerdict::Uniform { table, scope } => {
            assert_eq!(scope, CertificateScope::AllStates);
            assert_eq!(table, vec![(0.1, 4), (0.01, 7), (0.001, 10)]);
        }
        other => panic!("reset must be uniform, got {other:?}"),
    }

    // The walk families fail with explicit zero-mass states.
    for family in [
        RowFamily::random_walk(),
        RowFamily::shift(1).unwrap(),
        RowFamily::shift(0).unwrap(),
    ] {
        let verdicts = condition_p_check(&family, &times, &eps_grid, 64).unwrap();
        for v in &verdicts {
            match v {
                TightnessVerdict::NotTight { counterexample, .. } => {
                    assert_eq!(counterexample.mass_inside, 0.0);
                    assert!(counterexample.state > 64);
                }
                other => panic!("{} must fail, got {other:?}", family.name()),
            }
        }
    }

    // Entrance-law demonstrations satisfy the recursion exactly.
    let demo0 = shift_family_checks(0, 64, (-20, 0), Some(5)).unwrap();
    assert_eq!(demo0.max_recursion_residual, 0.0);
    assert!(demo0.laws.iter().all(|law| law.prob(5) == 1.0));
    let demo1 = shift_family_checks(1, 64, (-20, 0), None).unwrap();
    assert_eq!(demo1.max_recursion_residual, 0.0);
    assert!(demo1.onto_modulo_shift);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 7 (conditions P and U): PASS ({elapsed:?})");
}

#[test]
fn criterion_8_reversal_dichotomy() {
    let started = Instant::now();

    // Detailed balance: the reverse kernel equals the forward kernel.
    let reversible = ChainModel::homogeneous((0, 10), array![[0.9, 0.1], [0.1, 0.9]], None, 1e-12);
    let stationary = Distribution::new(0, vec![0.5, 0.5], 1e-12).unwrap();
    let marginals = marginals_from(&reversible, &stationary).unwrap();
    for n in 0..10 {
        let rk = reverse_kernel(&reversible, &marginals, n).unwrap();
        let diff = max_abs(rk.matrix(), reversible.matrix_at(n).unwrap().entries());
        assert!(diff <= 1e-12, "n = {n}: {diff}");
    }

    // Homogeneous but not stationary: reversal loses homogeneity.
    let drifting = ChainModel::homogeneous((0, 10), array![[0.9, 0.1], [0.2, 0.8]], None, 1e-12);
    let point = Distribution::delta(1, 2, 0).unwrap();
    let marginals = marginals_from(&drifting, &point).unwrap();
    let rk0 = reverse_kernel(&drifting, &marginals, 0).unwrap();
    let rk1 = reverse_kernel(&drifting, &marginals, 1).unwrap();
    let gap = reverse_kernel_distance(&rk0, &rk1).unwrap();
    assert!(gap >= 1e-3, "reverse kernels too close: {gap}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 8 (reversal dichotomy): PASS ({elapsed:?})");
}

/// Random chain with varying dimensions; rows drawn uniformly and
/// renormalized, with occasional zeroed entries for sparsity.
fn random_model(rng: &mut ChaCha8Rng) -> ChainModel {
    let len = rng.random_range(2..=20i64);
    let mut dims: Vec<usize> = Vec::new();
    for _ in 0..=len {
        dims.push(rng.random_range(1..=6));
    }
    let mut matrices = Vec::new();
    for step in 0..len {
        let (rows, cols) = (dims[step as usize], dims[step as usize + 1]);
        let mut entries = Array2::zeros((rows, cols));
        for r in 0..rows {
            loop {
                let mut sum = 0.0;
                for c in 0..cols {
                    let keep = cols == 1 || rng.random::<f64>() > 0.2;
                    let v = if keep {
                        rng.random::<f64>() + 1e-3
                    } else {
                        0.0
                    };
                    entries[[r, c]] = v;
                    sum += v;
                }
                if sum > 0.0 {
                    for c in 0..cols {
                        entries[[r, c]] /= sum;
                    }
                    break;
                }
            }
        }
        matrices.push(StochasticMatrix::new_unchecked(-len + step, entries));
    }
    ChainModel::new((-len, 0), matrices, None, 1e-9)
}

fn random_distribution(rng: &mut ChaCha8Rng, dim: usize, time: i64) -> Distribution {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    Distribution::new(time, v, 1e-9).unwrap()
}

#[test]
fn criterion_9_structural_invariant_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let instances = 200;

    for case in 0..instances {
        let model = random_model(&mut rng);
        let (start, end) = model.window();
        let len = end - start;

        // Product associativity at a random split.
        let u = rng.random_range((start + 1)..end);
        let full = product(&model, start, end).unwrap();
        let left = product(&model, start, u).unwrap();
        let right = product(&model, u, end).unwrap();
        let recombined = left.matrix().dot(right.matrix());
        assert!(
            max_abs(full.matrix(), &recombined) <= 1e-10,
            "case {case}: associativity"
        );

        // Simplex closure of the push-forward.
        let mut m = random_distribution(&mut rng, model.dim_at(start).unwrap(), start);
        for t in start..end {
            m = push_forward(&m, model.matrix_at(t).unwrap()).unwrap();
            assert!(m.probs().iter().all(|&v| v >= 0.0));
            assert!((m.probs().sum() - 1.0).abs() <= 1e-12, "case {case}");
        }

        // Nesting of the simplex images along consecutive depths.
        let depth = len.min(6);
        if depth >= 2 {
            let schedule: Vec<i64> = (1..=depth).map(|d| end - d).collect();
            let nesting = delta_nesting_check(&model, end, &schedule).unwrap();
            assert!(
                nesting.max_residual <= 1e-10,
                "case {case}: nesting residual {}",
                nesting.max_residual
            );
        }

        // Martingale conservation and exact band-partition completeness for
        // a random terminal seed.
        let dim_end = model.dim_at(end).unwrap();
        let seed_values: Vec<f64> = (0..dim_end).map(|_| rng.random::<f64>()).collect();
        let event = TailEventSpec::TerminalSeed {
            horizon: end,
            values: seed_values,
        };
        let h = harmonic_backward(&model, &event).unwrap();
        let bands = band_sets(&h, 0.2, 0.8).unwrap();
        let initial = random_distribution(&mut rng, model.dim_at(start).unwrap(), start);
        let probs = band_probabilities(&model, &initial, &h, &bands).unwrap();
        for row in &probs.rows {
            assert!(
                row.conservation_residual <= 1e-12,
                "case {case}: conservation {}",
                row.conservation_residual
            );
            assert_eq!(
                (row.p_low + row.p_high) + row.p_mid,
                1.0,
                "case {case}: partition completeness"
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 9 (structural invariants, {instances} random instances): PASS ({elapsed:?})"
    );
}
