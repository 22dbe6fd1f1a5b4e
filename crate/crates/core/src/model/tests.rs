use super::*;
use crate::synth::{generate, SynthSpec};

pub(crate) fn tiny_bundle() -> DatasetBundle {
    let spec = SynthSpec {
        concepts: 4,
        entities_per_concept: 4,
        popular_fraction: 0.5,
        relations: 2,
        timestamps: 10,
        facts_per_step: 8,
        sparse_subject_rate: 0.1,
        ..SynthSpec::default()
    };
    generate(&spec).unwrap().bundle.augment_inverse().unwrap()
}

fn cfg() -> TrainConfig {
    TrainConfig {
        dim: 6,
        channels: 2,
        ..TrainConfig::default()
    }
}

fn run(model: &Model, bundle: &DatasetBundle, t: usize) -> (Tape, Forward) {
    let ctx = Context::new(bundle).unwrap();
    let timeline = bundle.timeline();
    let tape = Tape::new();
    let vars = model.params.bind(&tape);
    let hist = history_window(&timeline, t, model.cfg.history);
    let fw = model.forward(&tape, &vars, &ctx, &hist, &timeline[t].facts).unwrap();
    (tape, fw)
}

#[test]
fn full_model_forward() {
    let b = tiny_bundle();
    let m = Model::new(cfg(), &b).unwrap();
    let (tape, fw) = run(&m, &b, 5);
    let queries = b.timeline()[5].facts.len();
    assert_eq!(tape.shape(fw.raw), vec![queries, 16]);
    assert_eq!(tape.shape(fw.z_hat), vec![16, 6]);
    assert!(fw.l_hie.is_some() && fw.l_cl.is_some() && fw.h_l.is_some());
    let total = tape.value(fw.total).item();
    let parts = tape.value(fw.l_tkg).item()
        + 0.1 * tape.value(fw.l_hie.unwrap()).item()
        + 0.1 * tape.value(fw.l_cl.unwrap()).item();
    assert!((total - parts).abs() < 1e-12);
    assert!(!fw.covered.is_empty());
}

#[test]
fn variant_parameter_layouts() {
    let b = tiny_bundle();
    let names = |c: TrainConfig| {
        let m = Model::new(c, &b).unwrap();
        m.params.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>()
    };
    let has = |n: &[String], p: &str| n.iter().any(|k| k.starts_with(p));

    let full = names(cfg());
    assert!(has(&full, "global.") && has(&full, "local.") && has(&full, "fusion.") && !has(&full, "entity_table"));

    let n = names(TrainConfig {
        no_global_init: true,
        ..cfg()
    });
    assert!(!has(&n, "global.") && has(&n, "entity_table"));

    let n = names(TrainConfig {
        random_init: true,
        ..cfg()
    });
    assert!(has(&n, "global.") && has(&n, "entity_table"));

    let n = names(TrainConfig {
        no_local_encoder: true,
        ..cfg()
    });
    assert!(!has(&n, "local.") && !has(&n, "fusion."));

    let n = names(TrainConfig {
        fusion: FusionMode::Sum,
        ..cfg()
    });
    assert!(has(&n, "local.") && !has(&n, "fusion."));
}

#[test]
fn variant_losses() {
    let b = tiny_bundle();
    let m = Model::new(
        TrainConfig {
            no_global_init: true,
            no_local_encoder: true,
            ..cfg()
        },
        &b,
    )
    .unwrap();
    let (tape, fw) = run(&m, &b, 4);
    assert!(fw.l_hie.is_none() && fw.l_cl.is_none() && fw.h_l.is_none());
    assert_eq!(fw.z_hat, fw.z);
    assert_eq!(tape.value(fw.total).item(), tape.value(fw.l_tkg).item());

    let m = Model::new(
        TrainConfig {
            random_init: true,
            ..cfg()
        },
        &b,
    )
    .unwrap();
    let (_, fw) = run(&m, &b, 4);
    assert!(fw.l_hie.is_some());

    for op in [crate::compgcn::Composition::Mult, crate::compgcn::Composition::Corr] {
        let m = Model::new(
            TrainConfig {
                op,
                hops: crate::data::Hops::Max,
                ..cfg()
            },
            &b,
        )
        .unwrap();
        let (tape, fw) = run(&m, &b, 3);
        assert!(tape.value(fw.total).item().is_finite());
    }
}

#[test]
fn empty_history_skips_evolution() {
    let b = tiny_bundle();
    let m = Model::new(TrainConfig { history: 0, ..cfg() }, &b).unwrap();
    let (tape, fw) = run(&m, &b, 6);
    assert!(tape.value(fw.total).item().is_finite());
}

#[test]
fn joint_gradient_is_weighted_sum_of_parts() {
    let b = tiny_bundle();
    let c = TrainConfig {
        alpha1: 0.3,
        alpha2: 0.7,
        ..cfg()
    };
    let m = Model::new(c, &b).unwrap();
    let ctx = Context::new(&b).unwrap();
    let timeline = b.timeline();
    let hist = history_window(&timeline, 5, 3);
    let grads_of = |pick: &dyn Fn(&Forward) -> Var| {
        let tape = Tape::new();
        let vars = m.params.bind(&tape);
        let fw = m.forward(&tape, &vars, &ctx, &hist, &timeline[5].facts).unwrap();
        let loss = pick(&fw);
        vars.gradients(&tape.backward(loss).unwrap())
    };
    let total = grads_of(&|f| f.total);
    let tkg = grads_of(&|f| f.l_tkg);
    let hie = grads_of(&|f| f.l_hie.unwrap());
    let cl = grads_of(&|f| f.l_cl.unwrap());
    for (name, g) in &total {
        for (i, &v) in g.data().iter().enumerate() {
            let part = |m: &crate::optim::GradMap| m.get(name).map_or(0.0, |t| t.data()[i]);
            let expected = part(&tkg) + 0.3 * part(&hie) + 0.7 * part(&cl);
            assert!((v - expected).abs() <= 1e-10 * (1.0 + v.abs()), "{name}[{i}]");
        }
    }
}

#[test]
fn layout_checks() {
    let b = tiny_bundle();
    let m = Model::new(cfg(), &b).unwrap();
    assert!(Model::from_parts(cfg(), m.dims, m.params.clone()).is_ok());
    let other = TrainConfig { dim: 8, ..cfg() };
    assert!(matches!(
        Model::from_parts(other, m.dims, m.params.clone()),
        Err(Error::Checkpoint(_))
    ));
    let unaugmented = generate(&SynthSpec {
        timestamps: 5,
        ..SynthSpec::default()
    })
    .unwrap()
    .bundle;
    assert!(matches!(Model::new(cfg(), &unaugmented), Err(Error::NotAugmented)));
}

#[test]
fn history_window_bounds() {
    let snaps: Vec<Snapshot> = (0..6).map(|t| Snapshot::new(t, vec![])).collect();
    let ts = |v: Vec<&Snapshot>| v.iter().map(|s| s.t).collect::<Vec<_>>();
    assert_eq!(ts(history_window(&snaps, 4, 3)), vec![1, 2, 3]);
    assert_eq!(ts(history_window(&snaps, 1, 3)), vec![0]);
    assert!(history_window(&snaps, 0, 3).is_empty());
    assert!(history_window(&snaps, 5, 0).is_empty());
}
