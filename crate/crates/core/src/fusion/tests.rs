use super::*;
use crate::autodiff::cosine_sim_values;
use crate::gradcheck;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn value(tape: &Tape, v: Var) -> f64 {
    tape.value(v).item()
}

fn cl(z: &Tensor, h: &Tensor, m: &[u32], tau: f64) -> Option<f64> {
    let tape = Tape::new();
    let (zv, hv) = (tape.param(z.clone()), tape.param(h.clone()));
    let out = contrastive_loss(&tape, ContrastiveConfig::new(tau).unwrap(), zv, hv, m).unwrap();
    out.loss.map(|l| value(&tape, l))
}

/// Direct evaluation of the loss formula.
fn oracle(z: &Tensor, h: &Tensor, m: &[u32], tau: f64) -> f64 {
    let sim = |a: usize, b: usize| cosine_sim_values(z.row(a), h.row(b)).unwrap() / tau;
    let mut total = 0.0;
    for &u in m {
        let num = sim(u as usize, u as usize).exp();
        let den: f64 = m
            .iter()
            .filter(|&&j| j != u)
            .map(|&j| sim(u as usize, j as usize).exp())
            .sum();
        total -= (num / den).ln();
    }
    total / m.len() as f64
}

#[test]
fn zero_gate_averages_views() {
    let tape = Tape::new();
    let g = GatedFusion {
        w3: tape.param(Tensor::zeros(&[2, 2])),
        w4: tape.param(Tensor::zeros(&[2, 2])),
        b: tape.param(Tensor::zeros(&[2])),
    };
    let h = tape.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, -4.0]]).unwrap());
    let z = tape.param(Tensor::from_rows(&[vec![3.0, 0.0], vec![2.0, 4.0]]).unwrap());
    let out = g.fuse(&tape, h, z).unwrap();
    assert_eq!(tape.value(out).data(), &[2.0, 1.0, 1.0, 0.0]);
    let theta = g.gate(&tape, h, z).unwrap();
    assert!(tape.value(theta).data().iter().all(|&t| t == 0.5));
}

#[test]
fn saturated_gate_selects_local_view() {
    let tape = Tape::new();
    let g = GatedFusion {
        w3: tape.param(Tensor::zeros(&[2, 2])),
        w4: tape.param(Tensor::zeros(&[2, 2])),
        b: tape.param(Tensor::vector(vec![40.0, 40.0])),
    };
    let h = tape.param(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let z = tape.param(Tensor::from_rows(&[vec![3.0, -5.0]]).unwrap());
    let out = tape.value(g.fuse(&tape, h, z).unwrap());
    assert!((out.data()[0] - 1.0).abs() < 1e-15);
    assert!((out.data()[1] - 2.0).abs() < 1e-15);
}

#[test]
fn fused_rows_are_convex_combinations() {
    let mut rng = Rng::new(3);
    let tape = Tape::new();
    let g = GatedFusion {
        w3: tape.param(random(&[4, 4], &mut rng)),
        w4: tape.param(random(&[4, 4], &mut rng)),
        b: tape.param(random(&[4], &mut rng)),
    };
    let (h, z) = (random(&[6, 4], &mut rng), random(&[6, 4], &mut rng));
    let (hv, zv) = (tape.param(h.clone()), tape.param(z.clone()));
    let theta = tape.value(g.gate(&tape, hv, zv).unwrap());
    let out = tape.value(g.fuse(&tape, hv, zv).unwrap());
    for i in 0..24 {
        let t = theta.data()[i];
        assert!(t > 0.0 && t < 1.0);
        let (a, b) = (h.data()[i].min(z.data()[i]), h.data()[i].max(z.data()[i]));
        assert!(out.data()[i] >= a - 1e-15 && out.data()[i] <= b + 1e-15);
    }
}

#[test]
fn sum_mode_and_missing_gate() {
    let tape = Tape::new();
    let h = tape.param(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let z = tape.param(Tensor::from_rows(&[vec![3.0, -5.0]]).unwrap());
    let out = fuse(&tape, FusionMode::Sum, None, h, z).unwrap();
    assert_eq!(tape.value(out).data(), &[4.0, -3.0]);
    assert!(fuse(&tape, FusionMode::Gated, None, h, z).is_err());
    let bad = tape.param(Tensor::zeros(&[2, 2]));
    let g = GatedFusion {
        w3: bad,
        w4: bad,
        b: tape.param(Tensor::zeros(&[2])),
    };
    assert!(matches!(g.fuse(&tape, h, bad), Err(Error::Shape { .. })));
}

#[test]
fn fusion_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = Rng::new(100 + seed);
        let inputs = vec![
            random(&[4, 4], &mut rng),
            random(&[4, 4], &mut rng),
            random(&[4], &mut rng),
            random(&[5, 4], &mut rng),
            random(&[5, 4], &mut rng),
            random(&[5, 4], &mut rng),
        ];
        let r = gradcheck::check(&inputs, 1e-6, |t, v| {
            let g = GatedFusion {
                w3: v[0],
                w4: v[1],
                b: v[2],
            };
            let out = g.fuse(t, v[3], v[4])?;
            let w = t.mul(out, v[5])?;
            t.sum(w)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}

#[test]
fn contrastive_hand_examples() {
    let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!((cl(&z, &z, &[0, 1], 1.0).unwrap() + 1.0).abs() < 1e-12);
    let same = Tensor::from_rows(&[vec![0.3, 0.4], vec![0.3, 0.4]]).unwrap();
    assert!(cl(&same, &same, &[0, 1], 1.0).unwrap().abs() < 1e-12);
}

#[test]
fn contrastive_matches_direct_formula() {
    let mut rng = Rng::new(11);
    let (z, h) = (random(&[7, 5], &mut rng), random(&[7, 5], &mut rng));
    let m = [1, 2, 4, 6];
    let got = cl(&z, &h, &m, 0.07).unwrap();
    assert!((got - oracle(&z, &h, &m, 0.07)).abs() < 1e-9 * got.abs().max(1.0));
}

#[test]
fn contrastive_is_scale_invariant() {
    let mut rng = Rng::new(12);
    let (z, h) = (random(&[4, 3], &mut rng), random(&[4, 3], &mut rng));
    let m = [0, 1, 2, 3];
    let base = cl(&z, &h, &m, 0.5).unwrap();
    let mut z2 = z.clone();
    for v in z2.row_mut(2) {
        *v *= 7.5;
    }
    let mut h2 = h.clone();
    for v in h2.row_mut(0) {
        *v *= 0.01;
    }
    assert!((cl(&z2, &h2, &m, 0.5).unwrap() - base).abs() < 1e-12);
}

#[test]
fn contrastive_decreases_with_positive_similarity() {
    let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..10 {
        let angle = 1.5 - 0.15 * k as f64;
        let h = Tensor::from_rows(&[vec![angle.cos(), angle.sin()], vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let v = cl(&z, &h, &[0, 1, 2], 1.0).unwrap();
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn contrastive_batch_rules() {
    let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    // Entity 1 has a zero local row; duplicates are merged.
    let tape = Tape::new();
    let (zv, hv) = (tape.param(z.clone()), tape.param(h.clone()));
    let out = contrastive_loss(&tape, ContrastiveConfig::new(1.0).unwrap(), zv, hv, &[2, 0, 1, 2]).unwrap();
    assert_eq!(out.batch, vec![0, 2]);
    let loss = out.loss.unwrap();
    assert!((value(&tape, loss) - oracle(&z, &h, &[0, 2], 1.0)).abs() < 1e-12);
    let g = tape.backward(loss).unwrap();
    assert!(g.get(zv).unwrap().row(1).iter().all(|&v| v == 0.0));
    assert!(g.get(hv).unwrap().row(1).iter().all(|&v| v == 0.0));
    // Fewer than two usable entities.
    assert!(cl(&z, &h, &[0, 1], 1.0).is_none());
    assert!(cl(&z, &h, &[2, 2], 1.0).is_none());
}

#[test]
fn contrastive_errors() {
    let z = Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let tape = Tape::new();
    let (zv, hv) = (tape.param(z), tape.param(h));
    let cfg = ContrastiveConfig::new(1.0).unwrap();
    assert!(matches!(
        contrastive_loss(&tape, cfg, zv, hv, &[0, 1]),
        Err(Error::Degenerate { .. })
    ));
    assert!(matches!(
        contrastive_loss(&tape, cfg, zv, hv, &[0, 5]),
        Err(Error::IdOutOfRange { .. })
    ));
    assert!(ContrastiveConfig::new(0.0).is_err());
}

#[test]
fn contrastive_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = Rng::new(200 + seed);
        let inputs = vec![random(&[6, 4], &mut rng), random(&[6, 4], &mut rng)];
        let r = gradcheck::check(&inputs, 1e-6, |t, v| {
            let out = contrastive_loss(t, ContrastiveConfig { tau: 0.5 }, v[0], v[1], &[0, 2, 3, 5])?;
            Ok(out.loss.expect("batch of four"))
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}
