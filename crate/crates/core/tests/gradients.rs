mod common;

use ontotkge::rng::Rng;
use ontotkge::selfcheck::{sample, SUITES};

const INSTANCES: usize = 20;
const TOLERANCE: f64 = 1e-4;

fn suite(name: &str) {
    let mut rng = Rng::new(0x5eed ^ name.len() as u64);
    for i in 0..INSTANCES {
        let case = sample(name, &mut rng).expect("known suite");
        let err = common::central_difference_error(&case, 1e-6);
        assert!(err < TOLERANCE, "{name} instance {i}: relative error {err:e}");
    }
}

#[test]
fn compose_sub() {
    suite("compose.sub");
}

#[test]
fn compose_mult() {
    suite("compose.mult");
}

#[test]
fn compose_corr() {
    suite("compose.corr");
}

#[test]
fn compgcn_layer() {
    suite("compgcn.layer");
}

#[test]
fn evolution_gru() {
    suite("evolution.gru");
}

#[test]
fn entailment_cone_off_hinge() {
    suite("entailment.cone");
}

#[test]
fn gated_fusion() {
    suite("fusion.gate");
}

#[test]
fn contrastive() {
    suite("contrastive");
}

#[test]
fn decoder() {
    suite("decoder");
}

#[test]
fn every_suite_is_covered() {
    assert_eq!(SUITES.len(), 9);
    let mut rng = Rng::new(1);
    assert!(SUITES.iter().all(|s| sample(s, &mut rng).is_some()));
    assert!(sample("nope", &mut rng).is_none());
}
