mod common;

use common::*;
use koopman_adapt_core::training::{
    generate_dataset, generate_dataset_excited, mean_prediction_error, train_offline, BoxSampler, DatasetMeta,
};
use koopman_adapt_core::{
    Cartpole, CartpoleParams, Dataset, EmbeddingModel, DiscreteDynamics, IlqrSettings, LinearDynamics, Matrix,
    OfflineTrainConfig, QuadraticCostSpec, Transition,
};
use koopman_adapt_core::optim::AdamConfig;

fn excited_linear_dataset() -> (Matrix, Matrix, Dataset) {
    let a = Matrix::from_rows(&[[1.0, 0.1, 0.0], [0.0, 0.95, 0.2], [0.05, 0.0, 0.9]]).unwrap();
    let b = Matrix::from_rows(&[[0.0], [0.1], [0.3]]).unwrap();
    let plant = LinearDynamics::new(a.clone(), b.clone()).unwrap();
    let mut r = rng(4);
    let trajectories = (0..20)
        .map(|_| {
            let mut x = random_vec(3, 1.0, &mut r);
            (0..20)
                .map(|_| {
                    let u = random_vec(1, 1.0, &mut r);
                    let y = plant.step(&x, &u).unwrap();
                    let t = Transition::new(x.clone(), u, y.clone());
                    x = y;
                    t
                })
                .collect()
        })
        .collect();
    let meta = DatasetMeta {
        seed: 4,
        requested_trajectories: 20,
        trajectory_length: 20,
        skipped: vec![],
    };
    (a, b, Dataset { trajectories, meta })
}

#[test]
fn linear_plant_operators_are_recovered() {
    let (a, b, data) = excited_linear_dataset();
    let cfg = OfflineTrainConfig {
        epochs: 5,
        batch_size: 64,
        n_learned: 0,
        hidden: vec![4],
        ..Default::default()
    };
    let trained = train_offline(&data, &cfg).unwrap();
    let da = trained.model.a.sub(&a).unwrap().max_abs();
    let db = trained.model.b.sub(&b).unwrap().max_abs();
    assert!(da < 1e-6 && db < 1e-6, "{da} {db}");
    let final_loss = trained.model.batch_loss(&data.flattened(), cfg.loss).unwrap();
    assert!(final_loss < 1e-20, "{final_loss}");
}

fn cartpole_setup() -> (Cartpole, QuadraticCostSpec) {
    let plant = Cartpole::new(CartpoleParams::nominal(), 1.0 / 15.0);
    let cost = QuadraticCostSpec::regulate(
        20,
        Matrix::from_diag(&[5.0, 0.1, 5.0, 0.1]),
        Matrix::from_rows(&[[0.1]]).unwrap(),
    )
    .unwrap();
    (plant, cost)
}

fn small_cfg() -> OfflineTrainConfig {
    OfflineTrainConfig {
        epochs: 30,
        batch_size: 64,
        hidden: vec![16, 16],
        optimizer: AdamConfig {
            learning_rate: 3e-4,
            ..Default::default()
        },
        lr_decay: 0.95,
        ..Default::default()
    }
}

#[test]
fn cartpole_training_is_deterministic_and_descends() {
    let (plant, cost) = cartpole_setup();
    let data = generate_dataset(&plant, &cost, 40, 30, &BoxSampler::cartpole_default(), 3, &IlqrSettings::default()).unwrap();
    assert_eq!(data.len(), 1200);
    let (train, val) = data.split_by_trajectory(0.25, 0);
    let a = train_offline(&train, &small_cfg()).unwrap();
    let b = train_offline(&train, &small_cfg()).unwrap();
    assert_eq!(a, b);
    let l = &a.epoch_losses;
    for k in 1..l.len() - 1 {
        assert!(l[k + 1] <= 1.05 * l[k], "epoch {k}: {l:?}");
    }
    let val = val.flattened();
    let before = mean_prediction_error(&a.initial, &val).unwrap();
    let after = mean_prediction_error(&a.model, &val).unwrap();
    // Untrained: the random initial features with `A = I`, `B = 0`.
    let untrained = EmbeddingModel::with_identity_dynamics(a.initial.network.clone(), 1).unwrap();
    let raw = mean_prediction_error(&untrained, &val).unwrap();
    assert!(after < 0.1 * raw, "trained {after:e} vs untrained {raw:e}");
    assert!(after < 1.5 * before, "trained {after:e} vs least-squares start {before:e}");
}

#[test]
fn excited_data_resimulates_and_zero_excitation_is_plain_generation() {
    let (plant, cost) = cartpole_setup();
    let sampler = BoxSampler::cartpole_default();
    let ilqr = IlqrSettings::default();
    let plain = generate_dataset(&plant, &cost, 3, 8, &sampler, 9, &ilqr).unwrap();
    let zero = generate_dataset_excited(&plant, &cost, 3, 8, &sampler, 9, &ilqr, 0.0).unwrap();
    assert_eq!(plain, zero);

    let excited = generate_dataset_excited(&plant, &cost, 3, 8, &sampler, 9, &ilqr, 1.5).unwrap();
    assert_eq!(excited.meta, plain.meta);
    for (te, tp) in excited.trajectories.iter().zip(&plain.trajectories) {
        // Same initial state; the first recorded input is the MPC input plus bounded noise.
        assert_eq!(te[0].x, tp[0].x);
        assert!((te[0].u[0] - tp[0].u[0]).abs() <= 1.5);
        assert_ne!(te[0].u, tp[0].u);
        for t in te {
            let y = plant.step(&t.x, &t.u).unwrap();
            assert!(y.iter().zip(&t.y).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        for w in te.windows(2) {
            assert_eq!(w[0].y, w[1].x);
        }
    }
    assert!(generate_dataset_excited(&plant, &cost, 1, 2, &sampler, 9, &ilqr, -1.0).is_err());
}
