use dtanet_core::model::{Architecture, Arm, DtanetModel, EffectEstimates, PotentialPredictions};
use dtanet_core::objective::{orthogonality_ratio, total_loss, Batch};
use dtanet_core::synth::{generate, SynthConfig};
use dtanet_core::trainer::{train, TrainConfig, Trainer};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Spacing of doubles at the magnitude of `x`.
fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() & 0x7ff0_0000_0000_0000) * f64::EPSILON
}

fn assert_decomposition(est: &EffectEstimates, p: &PotentialPredictions) {
    for i in 0..est.len() {
        let recomposed = est.mte[i] + est.dte_complement[i];
        let scale = [p.tt[i], p.tc[i], p.ct[i], p.cc[i], est.ite[i], est.mte[i], est.dte_complement[i], recomposed]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = (est.ite[i] - recomposed).abs();
        assert!(diff <= 4.0 * ulp(scale), "row {i}: {} vs {recomposed}", est.ite[i]);
    }
}

fn small_arch(d: usize) -> Architecture {
    Architecture { input_dim: d, rep_width: 6, rep_layers: 2, r_z: 4, r_m: 3, head_width: 5, head_layers: 2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ite_splits_into_mediated_and_direct_parts(
        tt in prop::collection::vec(-1e6f64..1e6, 1..40),
        seed in any::<u64>(),
    ) {
        let n = tt.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Array1::from_shape_simple_fn(n, || rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-8..3)));
        let p = PotentialPredictions { tt: Array1::from(tt), tc: draw(), ct: draw(), cc: draw() };
        let t: Vec<u8> = (0..n).map(|i| (seed.rotate_left(i as u32) & 1) as u8).collect();
        let est = EffectEstimates::from_predictions(&t, p.clone());
        assert_decomposition(&est, &p);
    }

    #[test]
    fn decomposition_holds_for_random_models(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = DtanetModel::init(&small_arch(4), &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((25, 4), || rng.random_range(-3.0..3.0));
        let t: Vec<u8> = (0..25).map(|_| rng.random_range(0..2)).collect();
        let est = model.estimate_effects(x.view(), &t).unwrap();
        let p = PotentialPredictions {
            tt: model.predict_outcomes(x.view(), Arm::Treated, Arm::Treated).unwrap(),
            tc: model.predict_outcomes(x.view(), Arm::Treated, Arm::Control).unwrap(),
            ct: model.predict_outcomes(x.view(), Arm::Control, Arm::Treated).unwrap(),
            cc: model.predict_outcomes(x.view(), Arm::Control, Arm::Control).unwrap(),
        };
        assert_decomposition(&est, &p);
    }

    #[test]
    fn perturbing_the_control_head_leaves_treated_head_predictions(seed in any::<u64>(), delta in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = DtanetModel::init(&small_arch(3), &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((10, 3), || rng.random_range(-2.0..2.0));
        let mut other = model.clone();
        for slice in other.head_c.param_slices_mut() {
            slice.iter_mut().for_each(|w| *w += delta);
        }
        for mediator in [Arm::Treated, Arm::Control] {
            prop_assert_eq!(
                model.predict_outcomes(x.view(), Arm::Treated, mediator).unwrap(),
                other.predict_outcomes(x.view(), Arm::Treated, mediator).unwrap()
            );
        }
    }
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size_t: 16,
        batch_size_c: 16,
        rep_width: 8,
        rep_layers: 2,
        r_z: 4,
        r_m: 4,
        head_width: 8,
        head_layers: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn treated_only_step_leaves_control_networks_bit_identical() {
    let (data, _) = generate(&SynthConfig { n: 200, d: 5, ..SynthConfig::default() }).unwrap();
    let mut trainer = Trainer::new(tiny_cfg(), data.dim()).unwrap();
    // Warm the optimiser so momentum is nonzero for every network.
    let all: Vec<usize> = (0..data.len()).collect();
    let treated = data.arm_members(&all, Arm::Treated);
    let control = data.arm_members(&all, Arm::Control);
    trainer.step(&data.batch(&treated[..8]), &data.batch(&control[..4])).unwrap();

    let before = trainer.model().clone();
    trainer.step(&data.batch(&treated[8..16]), &Batch::empty(data.dim())).unwrap();
    let after = trainer.model();
    assert_eq!(after.psi_c, before.psi_c);
    assert_eq!(after.head_c, before.head_c);
    assert_ne!(after.psi_t, before.psi_t);
    assert_ne!(after.head_t, before.head_t);
    assert_ne!(after.phi, before.phi);

    let before = trainer.model().clone();
    trainer.step(&Batch::empty(data.dim()), &data.batch(&control[4..8])).unwrap();
    assert_eq!(trainer.model().psi_t, before.psi_t);
    assert_eq!(trainer.model().head_t, before.head_t);
}

fn bits(model: &DtanetModel) -> Vec<u64> {
    model.nets().iter().flat_map(|n| n.param_slices().into_iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
}

#[test]
fn identical_seed_and_config_give_identical_parameters() {
    let (data, _) = generate(&SynthConfig { n: 80, d: 6, ..SynthConfig::default() }).unwrap();
    let (a, ta) = train(&data, &tiny_cfg()).unwrap();
    let (b, tb) = train(&data, &tiny_cfg()).unwrap();
    assert_eq!(bits(&a), bits(&b));
    let strip = |t: &dtanet_core::TrainTrace| t.records.iter().map(|r| (r.l_y, r.l_sim, r.l_balan, r.total)).collect::<Vec<_>>();
    assert_eq!(strip(&ta), strip(&tb));
    let (c, _) = train(&data, &TrainConfig { seed: 7, ..tiny_cfg() }).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

fn full_batches(data: &dtanet_core::ObservationalDataset) -> (Batch, Batch) {
    let all: Vec<usize> = (0..data.len()).collect();
    (data.batch(&data.arm_members(&all, Arm::Treated)), data.batch(&data.arm_members(&all, Arm::Control)))
}

#[test]
fn training_lowers_the_total_objective() {
    let (data, _) = generate(&SynthConfig { n: 200, seed: 42, ..SynthConfig::default() }).unwrap();
    let cfg = TrainConfig { epochs: 100, seed: 42, ..TrainConfig::default() };
    let init = Trainer::new(cfg.clone(), data.dim()).unwrap().into_model();
    let (trained, trace) = train(&data, &cfg).unwrap();
    assert_eq!(trace.len(), 100);
    let (bt, bc) = full_batches(&data);
    let (before, ..) = total_loss(&init, &bt, &bc, &cfg.weights(), &cfg.sinkhorn()).unwrap();
    let (after, ..) = total_loss(&trained, &bt, &bc, &cfg.weights(), &cfg.sinkhorn()).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn training_makes_mediator_and_confounder_blocks_more_orthogonal() {
    let (data, _) = generate(&SynthConfig { n: 200, seed: 42, ..SynthConfig::default() }).unwrap();
    let cfg = TrainConfig { epochs: 100, seed: 42, ..TrainConfig::default() };
    let init = Trainer::new(cfg.clone(), data.dim()).unwrap().into_model();
    let (trained, _) = train(&data, &cfg).unwrap();
    let ratio = |model: &DtanetModel| {
        let (bt, bc) = full_batches(&data);
        let rt = model.represent(bt.x.view()).unwrap();
        let rc = model.represent(bc.x.view()).unwrap();
        orthogonality_ratio(rt.m_t.view(), rt.z.view()).unwrap() + orthogonality_ratio(rc.m_c.view(), rc.z.view()).unwrap()
    };
    let (before, after) = (ratio(&init), ratio(&trained));
    assert!(after < before, "{after} !< {before}");
}
