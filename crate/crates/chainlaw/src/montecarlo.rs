//! Trajectory simulation and empirical cross-checks of the band machinery.
//!
//! Reproducibility contract: trajectory `i` draws from a `ChaCha8` generator
//! seeded with the root seed and moved to stream `i`
//! (`ChaCha8Rng::seed_from_u64(root_seed)` + `set_stream(i)`), so a batch is
//! bit-identical for a given root seed regardless of how the work is split
//! across threads. Categorical sampling is inverse-CDF over the cumulative
//! row sums with right-closed intervals: a uniform draw `u` in `(0, 1]`
//! selects the first state `j` with positive probability and `u <= c_j`.

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChainModel, Distribution, TimeIndex};
use crate::tail::{BandPartition, TailEventSpec};

/// Batch configuration. Checkpoints must be strictly increasing and inside
/// `[initial time, horizon]`.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n_trajectories: usize,
    pub horizon: TimeIndex,
    pub root_seed: u64,
    pub checkpoints: Vec<TimeIndex>,
}

/// States recorded at the checkpoints plus the state at the horizon.
/// States are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryBatch {
    pub initial_time: TimeIndex,
    pub horizon: TimeIndex,
    pub root_seed: u64,
    pub checkpoints: Vec<TimeIndex>,
    /// `states[c][i]`: state of trajectory `i` at checkpoint `c`.
    pub states: Vec<Vec<u32>>,
    /// State of each trajectory at the horizon.
    pub finals: Vec<u32>,
}

impl TrajectoryBatch {
    pub fn n_trajectories(&self) -> usize {
        self.finals.len()
    }
}

/// Inverse-CDF draw with right-closed intervals `(c_{j-1}, c_j]`.
/// Zero-probability states are never selected; if rounding leaves
/// `u` above the final cumulative sum, the last positive state is taken.
fn sample_state(probs: ArrayView1<'_, f64>, u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
            cum += p;
            if u <= cum {
                return j;
            }
        }
    }
    last_positive
}

/// Uniform draw in `(0, 1]`.
fn draw_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Samples `config.n_trajectories` paths of the chain from `initial`.
///
/// Each trajectory is seeded independently from
/// `(config.root_seed, trajectory index)`, so the batch is a deterministic
/// function of the configuration alone; trajectories are simulated in
/// parallel.
pub fn simulate(
    model: &ChainModel,
    initial: &Distribution,
    config: &SimConfig,
) -> Result<TrajectoryBatch> {
    if config.n_trajectories == 0 {
        return Err(Error::InvalidSimConfig {
            reason: "need at least one trajectory".into(),
        });
    }
    let t0 = initial.time();
    let (start, end) = model.window();
    if t0 < start || config.horizon > end || config.horizon < t0 {
        return Err(Error::InvalidSimConfig {
            reason: format!(
                "horizon {} and initial time {t0} must sit inside the window [{start}, {end}]",
                config.horizon
            ),
        });
    }
    if config.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSimConfig {
            reason: "checkpoints must be strictly increasing".into(),
        });
    }
    if config
        .checkpoints
        .iter()
        .any(|&c| c < t0 || c > config.horizon)
    {
        return Err(Error::InvalidSimConfig {
            reason: "checkpoints must lie in [initial time, horizon]".into(),
        });
    }
    // Pre-check the dimension chain once instead of per trajectory.
    let mut dim = initial.len();
    for t in t0..config.horizon {
        let step = model.matrix_at(t)?;
        if step.rows() != dim {
            return Err(Error::DimensionMismatch {
                what: "simulation step",
                expected: dim,
                got: step.rows(),
            });
        }
        dim = step.cols();
    }

    let n_checkpoints = config.checkpoints.len();
    let per_trajectory: Vec<(Vec<u32>, u32)> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.root_seed);
            rng.set_stream(i as u64);
            let mut recorded = Vec::with_capacity(n_checkpoints);
            let mut state = sample_state(initial.probs(), draw_unit(&mut rng));
            let mut next_checkpoint = 0;
            if next_checkpoint < n_checkpoints && config.checkpoints[next_checkpoint] == t0 {
                recorded.push(state as u32 + 1);
                next_checkpoint += 1;
            }
            for t in t0..config.horizon {
                let step = model.matrix_at(t).expect("checked above");
                state = sample_state(step.entries().row(state), draw_unit(&mut rng));
                if next_checkpoint < n_checkpoints && config.checkpoints[next_checkpoint] == t + 1 {
                    recorded.push(state as u32 + 1);
                    next_checkpoint += 1;
                }
            }
            (recorded, state as u32 + 1)
        })
        .collect();

    let mut states = vec![Vec::with_capacity(config.n_trajectories); n_checkpoints];
    let mut finals = Vec::with_capacity(config.n_trajectories);
    for (recorded, last) in per_trajectory {
        for (c, s) in recorded.into_iter().enumerate() {
            states[c].push(s);
        }
        finals.push(last);
    }
    Ok(TrajectoryBatch {
        initial_time: t0,
        horizon: config.horizon,
        root_seed: config.root_seed,
        checkpoints: config.checkpoints.clone(),
        states,
        finals,
    })
}

/// Empirical estimates at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalRow {
    pub time: TimeIndex,
    pub p_low: f64,
    pub p_mid: f64,
    pub p_high: f64,
    pub se_low: f64,
    pub se_mid: f64,
    pub se_high: f64,
    /// Frequency of disagreement between the event and `Z_n` sitting in the
    /// high band, over decided trajectories.
    pub p_sym_diff: f64,
    pub se_sym_diff: f64,
}

/// Empirical band report over all checkpoints.
#[derive(Clone, Debug)]
pub struct EmpiricalReport {
    pub rows: Vec<EmpiricalRow>,
    /// Frequency of the event among all trajectories.
    pub p_event: f64,
    pub se_event: f64,
    /// Fraction of trajectories whose event status could not be decided at
    /// the horizon (not yet absorbed). These are excluded from the
    /// symmetric-difference counts.
    pub undecided_fraction: f64,
    pub n_trajectories: usize,
}

fn standard_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// 1-based states absorbing under every matrix of the window.
pub fn absorbing_states(model: &ChainModel) -> Result<Vec<usize>> {
    let (start, end) = model.window();
    let dim_end = model.dim_at(end)?;
    let tol = model.tol_stochastic();
    let mut out = Vec::new();
    'states: for i in 1..=dim_end {
        for n in start..end {
            let m = model.matrix_at(n)?;
            if i > m.rows() || i > m.cols() || (m.entries()[[i - 1, i - 1]] - 1.0).abs() > tol {
                continue 'states;
            }
        }
        out.push(i);
    }
    Ok(out)
}

/// Compares empirical band occupation and event membership against the exact
/// machinery.
///
/// For absorption events a trajectory is decided by the absorbing class of
/// its horizon state; trajectories ending in a non-absorbing state are
/// counted as undecided and excluded from the symmetric-difference
/// numerator. Terminal-seed events are trajectory-decidable only when the
/// seed is a 0/1 indicator (the event `Z_horizon` in the seed's support);
/// anything else is refused, since a finite trajectory does not reveal
/// membership in a general tail event.
pub fn empirical_band_report(
    model: &ChainModel,
    batch: &TrajectoryBatch,
    bands: &BandPartition,
    event: &TailEventSpec,
) -> Result<EmpiricalReport> {
    let n = batch.n_trajectories();
    let event_hits: Vec<Option<bool>> = match event {
        TailEventSpec::Absorption { targets } => {
            let absorbing = absorbing_states(model)?;
            batch
                .finals
                .iter()
                .map(|&s| {
                    let s = s as usize;
                    if absorbing.contains(&s) {
                        Some(targets.contains(&s))
                    } else {
                        None
                    }
                })
                .collect()
        }
        TailEventSpec::TerminalSeed { horizon, values } => {
            if values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidEvent {
                    reason: "terminal seed with fractional values is not trajectory-decidable; \
                             use the exact band probabilities instead"
                        .into(),
                });
            }
            if *horizon != batch.horizon {
                return Err(Error::TimeMismatch {
                    expected: *horizon,
                    got: batch.horizon,
                });
            }
            batch
                .finals
                .iter()
                .map(|&s| Some(values[s as usize - 1] == 1.0))
                .collect()
        }
    };
    let undecided = event_hits.iter().filter(|h| h.is_none()).count();
    let event_count = event_hits.iter().filter(|h| **h == Some(true)).count();
    let p_event = event_count as f64 / n as f64;

    let mut rows = Vec::with_capacity(batch.checkpoints.len());
    for (c, &time) in batch.checkpoints.iter().enumerate() {
        let (_, _, high) = bands.bands_at(time);
        let (low, mid, _) = bands.bands_at(time);
        let mut counts = [0usize; 3];
        let mut disagreements = 0usize;
        for (i, &state) in batch.states[c].iter().enumerate() {
            let s = state as usize;
            if low.contains(&s) {
                counts[0] += 1;
            } else if mid.contains(&s) {
                counts[1] += 1;
            } else {
                counts[2] += 1;
            }
            if let Some(hit) = event_hits[i] {
                let in_high = high.contains(&s);
                if in_high != hit {
                    disagreements += 1;
                }
            }
        }
        let p_low = counts[0] as f64 / n as f64;
        let p_mid = counts[1] as f64 / n as f64;
        let p_high = counts[2] as f64 / n as f64;
        let p_sym_diff = disagreements as f64 / n as f64;
        rows.push(EmpiricalRow {
            time,
            p_low,
            p_mid,
            p_high,
            se_low: standard_error(p_low, n),
            se_mid: standard_error(p_mid, n),
            se_high: standard_error(p_high, n),
            p_sym_diff,
            se_sym_diff: standard_error(p_sym_diff, n),
        });
    }
    Ok(EmpiricalReport {
        rows,
        p_event,
        se_event: standard_error(p_event, n),
        undecided_fraction: undecided as f64 / n as f64,
        n_trajectories: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_TOL_STOCHASTIC;
    use crate::tail::{band_sets, harmonic_backward};
    use ndarray::array;

    fn gambler(window: (i64, i64)) -> ChainModel {
        ChainModel::from_step_fn(window, None, DEFAULT_TOL_STOCHASTIC, |_| {
            array![[1.0, 0.0, 0.0], [0.25, 0.5, 0.25], [0.0, 0.0, 1.0]]
        })
    }

    #[test]
    fn identity_chain_trajectories_are_constant() {
        let model = ChainModel::from_step_fn((0, 10), None, 1e-12, |_| ndarray::Array2::eye(3));
        let initial = Distribution::new(0, vec![0.2, 0.3, 0.5], 1e-12).unwrap();
        let config = SimConfig {
            n_trajectories: 200,
            horizon: 10,
            root_seed: 7,
            checkpoints: vec![0, 5, 10],
        };
        let batch = simulate(&model, &initial, &config).unwrap();
        for i in 0..200 {
            assert_eq!(batch.states[0][i], batch.states[1][i]);
            assert_eq!(batch.states[0][i], batch.states[2][i]);
            assert_eq!(batch.states[0][i], batch.finals[i]);
        }
    }

    #[test]
    fn permutation_chain_alternates_deterministically() {
        let model =
            ChainModel::from_step_fn((0, 6), None, 1e-12, |_| array![[0.0, 1.0], [1.0, 0.0]]);
        let initial = Distribution::delta(1, 2, 0).unwrap();
        let config = SimConfig {
            n_trajectories: 16,
            horizon: 6,
            root_seed: 0,
            checkpoints: vec![0, 1, 2, 3],
        };
        let batch = simulate(&model, &initial, &config).unwrap();
        for i in 0..16 {
            assert_eq!(batch.states[0][i], 1);
            assert_eq!(batch.states[1][i], 2);
            assert_eq!(batch.states[2][i], 1);
            assert_eq!(batch.states[3][i], 2);
        }
    }

    #[test]
    fn identical_seed_gives_bit_identical_batches() {
        let model = gambler((0, 25));
        let initial = Distribution::delta(2, 3, 0).unwrap();
        let config = SimConfig {
            n_trajectories: 2_000,
            horizon: 25,
            root_seed: 42,
            checkpoints: vec![0, 10, 25],
        };
        let a = simulate(&model, &initial, &config).unwrap();
        let b = simulate(&model, &initial, &config).unwrap();
        assert_eq!(a, b);
        let other = SimConfig {
            root_seed: 43,
            ..config
        };
        let c = simulate(&model, &initial, &other).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn absorption_frequency_close_to_exact_value() {
        let model = gambler((0, 60));
        let initial = Distribution::delta(2, 3, 0).unwrap();
        let config = SimConfig {
            n_trajectories: 20_000,
            horizon: 60,
            root_seed: 11,
            checkpoints: vec![20],
        };
        let batch = simulate(&model, &initial, &config).unwrap();
        let event = TailEventSpec::Absorption { targets: vec![1] };
        let h = harmonic_backward(&model, &event).unwrap();
        let bands = band_sets(&h, 0.1, 0.9).unwrap();
        let report = empirical_band_report(&model, &batch, &bands, &event).unwrap();
        let se = (0.5 * 0.5 / 20_000f64).sqrt();
        assert!(
            (report.p_event - 0.5).abs() <= 3.0 * se,
            "empirical {} vs 0.5 (3se = {})",
            report.p_event,
            3.0 * se
        );
        assert!(report.undecided_fraction <= 1e-9);
        // At n = 20 the high band is state 1; disagreement needs a
        // trajectory still unabsorbed at 20 that later lands in 1.
        assert!(
            report.rows[0].p_sym_diff <= 0.5f64.powi(20) + 3.0 * report.rows[0].se_sym_diff + 1e-4
        );
    }

    #[test]
    fn fractional_seed_event_is_refused() {
        let model = gambler((0, 10));
        let initial = Distribution::delta(2, 3, 0).unwrap();
        let config = SimConfig {
            n_trajectories: 10,
            horizon: 10,
            root_seed: 1,
            checkpoints: vec![10],
        };
        let batch = simulate(&model, &initial, &config).unwrap();
        let event = TailEventSpec::TerminalSeed {
            horizon: 10,
            values: vec![1.0, 0.5, 0.0],
        };
        let h = harmonic_backward(&model, &event).unwrap();
        let bands = band_sets(&h, 0.1, 0.9).unwrap();
        assert!(matches!(
            empirical_band_report(&model, &batch, &bands, &event),
            Err(Error::InvalidEvent { .. })
        ));
    }

    #[test]
    fn indicator_seed_event_is_decidable() {
        let model = gambler((0, 10));
        let initial = Distribution::delta(2, 3, 0).unwrap();
        let config = SimConfig {
            n_trajectories: 500,
            horizon: 10,
            root_seed: 5,
            checkpoints: vec![10],
        };
        let batch = simulate(&model, &initial, &config).unwrap();
        let event = TailEventSpec::TerminalSeed {
            horizon: 10,
            values: vec![1.0, 0.0, 0.0],
        };
        let h = harmonic_backward(&model, &event).unwrap();
        let bands = band_sets(&h, 0.1, 0.9).unwrap();
        let report = empirical_band_report(&model, &batch, &bands, &event).unwrap();
        assert_eq!(report.undecided_fraction, 0.0);
        // At the horizon the high band is exactly the seed's support, so
        // event and band membership coincide trajectory by trajectory.
        assert_eq!(report.rows[0].p_sym_diff, 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let model = gambler((0, 10));
        let initial = Distribution::delta(2, 3, 0).unwrap();
        for config in [
            SimConfig {
                n_trajectories: 0,
                horizon: 10,
                root_seed: 0,
                checkpoints: vec![],
            },
            SimConfig {
                n_trajectories: 1,
                horizon: 11,
                root_seed: 0,
                checkpoints: vec![],
            },
            SimConfig {
                n_trajectories: 1,
                horizon: 10,
                root_seed: 0,
                checkpoints: vec![11],
            },
            SimConfig {
                n_trajectories: 1,
                horizon: 10,
                root_seed: 0,
                checkpoints: vec![3, 3],
            },
        ] {
            assert!(simulate(&model, &initial, &config).is_err());
        }
    }

    #[test]
    fn sampler_respects_right_closed_intervals() {
        let probs = ndarray::Array1::from_vec(vec![0.5, 0.0, 0.5]);
        assert_eq!(sample_state(probs.view(), 0.5), 0);
        assert_eq!(sample_state(probs.view(), 0.5 + 1e-12), 2);
        assert_eq!(sample_state(probs.view(), 1.0), 2);
        let point = ndarray::Array1::from_vec(vec![0.0, 1.0]);
        assert_eq!(sample_state(point.view(), 1e-9), 1);
        assert_eq!(sample_state(point.view(), 1.0), 1);
    }
}
