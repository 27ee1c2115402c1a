use spiking_nsm::data::{encode_idx, gen_ring_manifold, gen_stroke_digits, parse_idx, to_samples};
use spiking_nsm::learning::{initial_state, train, WeightInit};
use spiking_nsm::persist::{decode_state, encode_state, read_train_log, write_train_log};
use spiking_nsm::{Hyperparams, LearningSchedule, Solver, SolverConfig, TrainOptions};

#[test]
fn initial_state_layout() {
    let s = initial_state(5, 7, WeightInit::Uniform { max: 0.25 }, 3).unwrap();
    assert!(s.w.iter().all(|w| (0.0..0.25).contains(w)));
    assert_eq!(s.m, ndarray::Array2::<f64>::eye(5));
    assert!(s.b.iter().all(|b| *b == 0.0));
    assert_eq!(s, initial_state(5, 7, WeightInit::Uniform { max: 0.25 }, 3).unwrap());
    assert_ne!(s, initial_state(5, 7, WeightInit::Uniform { max: 0.25 }, 4).unwrap());

    let g = initial_state(40, 50, WeightInit::Normal { std: 0.1 }, 1).unwrap();
    let mean = g.w.mean().unwrap();
    let sd = (g.w.mapv(|w| (w - mean).powi(2)).mean().unwrap()).sqrt();
    assert!(mean.abs() < 0.01 && (sd - 0.1).abs() < 0.01, "mean {mean}, sd {sd}");
    assert!(initial_state(2, 2, WeightInit::Uniform { max: 0.0 }, 1).is_err());
    assert!(initial_state(2, 2, WeightInit::Normal { std: f64::NAN }, 1).is_err());
}

#[test]
fn ring_training_lowers_cost_and_survives_a_round_trip() {
    let data = gen_ring_manifold(24, 16, 0.4, 9).unwrap();
    let hyper = Hyperparams::new(0.8, 0.0, 0.0).unwrap();
    let init = initial_state(6, 16, WeightInit::Uniform { max: 0.4 }, 9).unwrap();
    let opts = TrainOptions {
        steps: 2000,
        checkpoint_every: 500,
        probe_size: 500,
        seed: 9,
    };
    let schedule = LearningSchedule::constant(0.02).unwrap();
    let (state, log) = train(&data, &hyper, &schedule, Solver::Oracle, init, &opts, &SolverConfig::default()).unwrap();

    let steps: Vec<usize> = log.checkpoints.iter().map(|c| c.step).collect();
    assert_eq!(steps, vec![0, 500, 1000, 1500, 2000]);
    assert!(log.checkpoints.last().unwrap().nsm_cost < log.checkpoints[0].nsm_cost);

    let bytes = encode_state(&state);
    assert_eq!(decode_state(&bytes).unwrap(), state);
    let mut csv = Vec::new();
    write_train_log(&log, &mut csv).unwrap();
    assert_eq!(read_train_log(std::str::from_utf8(&csv).unwrap()).unwrap(), log);
}

#[test]
fn spiking_and_oracle_training_agree_in_trend() {
    let data = gen_ring_manifold(16, 12, 0.4, 2).unwrap();
    let hyper = Hyperparams::new(0.8, 0.0, 0.0).unwrap();
    let opts = TrainOptions {
        steps: 300,
        checkpoint_every: 0,
        probe_size: 500,
        seed: 2,
    };
    let schedule = LearningSchedule::constant(0.05).unwrap();
    let cfg = SolverConfig {
        tau_end: 100.0,
        ..SolverConfig::default()
    };
    for solver in [Solver::Snn, Solver::Aunn, Solver::Oracle] {
        let init = initial_state(4, 12, WeightInit::Uniform { max: 0.5 }, 2).unwrap();
        let (_, log) = train(&data, &hyper, &schedule, solver, init, &opts, &cfg).unwrap();
        assert_eq!(log.checkpoints.len(), 2);
        assert!(log.checkpoints[1].nsm_cost < log.checkpoints[0].nsm_cost, "{solver}");
    }
}

#[test]
fn digit_images_through_idx_to_samples() {
    let images = gen_stroke_digits(20, 5);
    let parsed = parse_idx(&encode_idx(&images)).unwrap();
    assert_eq!(parsed, images);
    let data = to_samples(&parsed, 1.0 / 255.0).unwrap();
    assert_eq!((data.len(), data.dim()), (20, 784));
    assert!(data.as_matrix().iter().all(|v| (0.0..=1.0).contains(v)));
    // every image carries some ink
    assert!(data.iter().all(|x| x.sum() > 5.0));
}
