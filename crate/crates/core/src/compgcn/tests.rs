use super::*;
use crate::gradcheck;

fn fact(head: u32, rel: u32, tail: u32) -> OntoFact {
    OntoFact { head, rel, tail }
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn layer_on(tape: &Tape, w1: Tensor, w2: Tensor, rel: Tensor) -> CompGcnLayer {
    CompGcnLayer {
        w1: tape.param(w1),
        w2: tape.param(w2),
        rel_emb: tape.param(rel),
    }
}

#[test]
fn compose_examples() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![3.0, 1.0]));
    let b = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let v = |op| tape.value(compose(&tape, op, a, b).unwrap()).data().to_vec();
    assert_eq!(v(Composition::Sub), vec![2.0, -1.0]);
    assert_eq!(v(Composition::Mult), vec![3.0, 2.0]);

    let a = tape.constant(Tensor::vector(vec![1.0, 0.0]));
    let b = tape.constant(Tensor::vector(vec![0.0, 1.0]));
    let c = compose(&tape, Composition::Corr, a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[0.0, 1.0]);

    let short = tape.constant(Tensor::vector(vec![1.0]));
    assert!(compose(&tape, Composition::Sub, a, short).is_err());
}

#[test]
fn self_connection_identity_without_edges() {
    let tape = Tape::new();
    let h = Tensor::from_rows(&[vec![0.5, 1.0, 0.0], vec![2.0, 0.25, 3.0]]).unwrap();
    let layer = layer_on(
        &tape,
        Tensor::zeros(&[3, 3]),
        Tensor::identity(3),
        Tensor::zeros(&[1, 3]),
    );
    let edges = EdgeIndex::from_facts(2, &[]);
    let hv = tape.constant(h.clone());
    let out = layer.forward(&tape, Composition::Sub, &edges, hv).unwrap();
    assert_eq!(*tape.value(out), h);
}

#[test]
fn single_edge_message() {
    // node 0 = entity e, node 1 = concept c.
    let tape = Tape::new();
    let layer = layer_on(
        &tape,
        Tensor::identity(2),
        Tensor::zeros(&[2, 2]),
        Tensor::zeros(&[1, 2]),
    );
    let edges = EdgeIndex::from_facts(2, &[fact(0, 0, 1)]);
    let h = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![7.0, 7.0]]).unwrap());
    let out = layer.forward(&tape, Composition::Sub, &edges, h).unwrap();
    assert_eq!(tape.value(out).row(1), &[1.0, 2.0]);
    // e has no incoming facts and W2 = 0.
    assert_eq!(tape.value(out).row(0), &[0.0, 0.0]);
}

#[test]
fn parallel_edges_are_normalized() {
    let mut rng = Rng::new(4);
    let tape = Tape::new();
    let layer = layer_on(
        &tape,
        random(&[3, 3], &mut rng),
        random(&[3, 3], &mut rng),
        random(&[2, 3], &mut rng),
    );
    let h = tape.constant(random(&[2, 3], &mut rng));
    let one = EdgeIndex::from_facts(2, &[fact(0, 1, 1)]);
    let two = EdgeIndex::from_facts(2, &[fact(0, 1, 1), fact(0, 1, 1)]);
    let a = layer.forward(&tape, Composition::Mult, &one, h).unwrap();
    let b = layer.forward(&tape, Composition::Mult, &two, h).unwrap();
    let (a, b) = (tape.value(a), tape.value(b));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-15);
    }
}

fn random_graph(rng: &mut Rng, nodes: usize, facts: usize, rels: usize) -> Vec<OntoFact> {
    (0..facts)
        .map(|_| fact(rng.below(nodes) as u32, rng.below(rels) as u32, rng.below(nodes) as u32))
        .collect()
}

#[test]
fn stack_depths() {
    let mut rng = Rng::new(12);
    let (n, d) = (6, 4);
    let facts = random_graph(&mut rng, n, 10, 2);
    let edges = EdgeIndex::from_facts(n, &facts);
    let tape = Tape::new();
    let l0 = layer_on(
        &tape,
        random(&[d, d], &mut rng),
        random(&[d, d], &mut rng),
        random(&[2, d], &mut rng),
    );
    let l1 = layer_on(
        &tape,
        random(&[d, d], &mut rng),
        random(&[d, d], &mut rng),
        random(&[2, d], &mut rng),
    );
    let h0 = tape.constant(random(&[n, d], &mut rng));

    let empty = CompGcnStack {
        layers: vec![],
        op: Composition::Corr,
    };
    assert_eq!(empty.forward(&tape, &edges, h0).unwrap(), h0);

    let one = CompGcnStack {
        layers: vec![l0],
        op: Composition::Corr,
    };
    let direct = l0.forward(&tape, Composition::Corr, &edges, h0).unwrap();
    assert_eq!(
        *tape.value(one.forward(&tape, &edges, h0).unwrap()),
        *tape.value(direct)
    );

    let two = CompGcnStack {
        layers: vec![l0, l1],
        op: Composition::Corr,
    };
    let manual = l1.forward(&tape, Composition::Corr, &edges, direct).unwrap();
    assert_eq!(
        *tape.value(two.forward(&tape, &edges, h0).unwrap()),
        *tape.value(manual)
    );
}

#[test]
fn dimension_mismatch() {
    let tape = Tape::new();
    let layer = layer_on(&tape, Tensor::identity(2), Tensor::identity(2), Tensor::zeros(&[1, 2]));
    let edges = EdgeIndex::from_facts(3, &[]);
    let h = tape.constant(Tensor::zeros(&[2, 2]));
    assert!(layer.forward(&tape, Composition::Sub, &edges, h).is_err());
}

#[test]
fn permutation_equivariance() {
    let mut rng = Rng::new(31);
    let (n, d) = (7, 5);
    for op in [Composition::Sub, Composition::Mult, Composition::Corr] {
        let facts = random_graph(&mut rng, n, 12, 3);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut perm);
        let permuted: Vec<OntoFact> = facts
            .iter()
            .map(|f| fact(perm[f.head as usize], f.rel, perm[f.tail as usize]))
            .collect();
        let h = random(&[n, d], &mut rng);
        let mut hp = Tensor::zeros(&[n, d]);
        for (i, &p) in perm.iter().enumerate() {
            hp.row_mut(p as usize).copy_from_slice(h.row(i));
        }
        let tape = Tape::new();
        let layer = layer_on(
            &tape,
            random(&[d, d], &mut rng),
            random(&[d, d], &mut rng),
            random(&[3, d], &mut rng),
        );
        let stack = CompGcnStack {
            layers: vec![layer, layer],
            op,
        };
        let a = stack
            .forward(&tape, &EdgeIndex::from_facts(n, &facts), tape.constant(h))
            .unwrap();
        let b = stack
            .forward(&tape, &EdgeIndex::from_facts(n, &permuted), tape.constant(hp))
            .unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        for (i, &p) in perm.iter().enumerate() {
            for (x, y) in a.row(i).iter().zip(b.row(p as usize)) {
                assert!((x - y).abs() < 1e-12, "{op:?}");
            }
        }
    }
}

#[test]
fn sub_with_zero_relations_ignores_relation_ids() {
    let mut rng = Rng::new(2);
    let (n, d) = (5, 3);
    let facts = random_graph(&mut rng, n, 8, 4);
    let relabeled: Vec<OntoFact> = facts.iter().map(|f| fact(f.head, (f.rel + 1) % 4, f.tail)).collect();
    let tape = Tape::new();
    let layer = layer_on(
        &tape,
        random(&[d, d], &mut rng),
        random(&[d, d], &mut rng),
        Tensor::zeros(&[4, d]),
    );
    let h = tape.constant(random(&[n, d], &mut rng));
    let a = layer
        .forward(&tape, Composition::Sub, &EdgeIndex::from_facts(n, &facts), h)
        .unwrap();
    let b = layer
        .forward(&tape, Composition::Sub, &EdgeIndex::from_facts(n, &relabeled), h)
        .unwrap();
    assert_eq!(*tape.value(a), *tape.value(b));
}

#[test]
fn stack_gradients_match_finite_differences() {
    let mut rng = Rng::new(77);
    let (n, d, rels) = (8, 6, 3);
    for op in [Composition::Sub, Composition::Mult, Composition::Corr] {
        let facts = random_graph(&mut rng, n, 14, rels);
        let edges = EdgeIndex::from_facts(n, &facts);
        let inputs: Vec<Tensor> = vec![
            random(&[n, d], &mut rng),
            random(&[d, d], &mut rng),
            random(&[d, d], &mut rng),
            random(&[rels, d], &mut rng),
            random(&[d, d], &mut rng),
            random(&[d, d], &mut rng),
            random(&[rels, d], &mut rng),
            random(&[n, d], &mut rng),
        ];
        let r = gradcheck::check(&inputs, 1e-6, |t, v| {
            let stack = CompGcnStack {
                layers: vec![
                    CompGcnLayer {
                        w1: v[1],
                        w2: v[2],
                        rel_emb: v[3],
                    },
                    CompGcnLayer {
                        w1: v[4],
                        w2: v[5],
                        rel_emb: v[6],
                    },
                ],
                op,
            };
            let out = stack.forward(t, &edges, v[0])?;
            let w = t.mul(out, v[7])?;
            t.sum(w)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{op:?}: {r:?}");
    }
}
