use super::*;
use crate::autodiff::RRELU_SLOPE;
use crate::compgcn::Composition;
use crate::gradcheck;
use crate::params::ParamStore;
use crate::rng::Rng;

fn fact(head: u32, rel: u32, tail: u32) -> OntoFact {
    OntoFact { head, rel, tail }
}

/// Entities 0..6, concepts 6, 7, 8. e0,e1 ∈ c6; e2,e3 ∈ c7; c6,c7 ⊂ c8;
/// e4 ∈ c7 and e4 ∈ c6 via a second relation; e5 has no facts.
fn graph() -> OntologyGraph {
    OntologyGraph::new(
        6,
        3,
        2,
        vec![
            fact(0, 0, 6),
            fact(1, 0, 6),
            fact(2, 0, 7),
            fact(3, 0, 7),
            fact(4, 0, 7),
            fact(4, 1, 6),
            fact(6, 1, 8),
            fact(7, 1, 8),
        ],
    )
    .unwrap()
    .augment_inverse()
    .unwrap()
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn params(layers: usize, dim: usize, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(seed);
    CompGcnStack::init_params(&mut store, "local", layers, dim, 4, &mut rng);
    store.insert("local.node_emb0", random(&[9, dim], &mut rng));
    store
}

fn encoder(tape: &Tape, store: &ParamStore, layers: usize, hops: Hops) -> LocalEncoder {
    let vars = store.bind(tape);
    LocalEncoder {
        stack: CompGcnStack::bind(&vars, "local", layers, Composition::Sub).unwrap(),
        node_emb0: vars.var("local.node_emb0").unwrap(),
        hops,
    }
}

fn run(store: &ParamStore, layers: usize, hops: Hops, subjects: &[u32]) -> (Tensor, BTreeSet<u32>) {
    let tape = Tape::new();
    let enc = encoder(&tape, store, layers, hops);
    let out = enc
        .encode(&tape, &mut SubgraphCache::new(), &graph(), subjects)
        .unwrap();
    ((*tape.value(out.h_l)).clone(), out.covered)
}

#[test]
fn zero_hops_keeps_only_the_self_term() {
    let store = params(1, 3, 1);
    let (h, covered) = run(&store, 1, Hops::Finite(0), &[2]);
    assert_eq!(covered, BTreeSet::from([2]));
    let w2 = store.get("local.layer0.w2").unwrap();
    let x = store.get("local.node_emb0").unwrap().row(2).to_vec();
    for i in 0..3 {
        let pre: f64 = w2.row(i).iter().zip(&x).map(|(a, b)| a * b).sum();
        let expected = if pre > 0.0 { pre } else { RRELU_SLOPE * pre };
        assert!((h.row(2)[i] - expected).abs() < 1e-15);
    }
    for e in [0, 1, 3, 4, 5] {
        assert!(h.row(e).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn isolated_subject_equals_zero_hop_run() {
    let store = params(2, 3, 2);
    let (a, _) = run(&store, 2, Hops::Finite(2), &[5]);
    let (b, _) = run(&store, 2, Hops::Finite(0), &[5]);
    assert_eq!(a.data(), b.data());
}

#[test]
fn rows_outside_every_subgraph_are_zero() {
    let store = params(2, 4, 3);
    let (h, covered) = run(&store, 2, Hops::Finite(1), &[0, 2, 2]);
    assert_eq!(covered, BTreeSet::from([0, 2]));
    for e in 0..6u32 {
        let zero = h.row(e as usize).iter().all(|&v| v == 0.0);
        assert_eq!(zero, !covered.contains(&e), "entity {e}");
    }
}

#[test]
fn disjoint_subgraphs_are_independent() {
    let store = params(2, 4, 4);
    let (both, _) = run(&store, 2, Hops::Finite(1), &[0, 2]);
    let (a, _) = run(&store, 2, Hops::Finite(1), &[0]);
    let (b, _) = run(&store, 2, Hops::Finite(1), &[2]);
    for e in 0..6 {
        let expected: Vec<f64> = a.row(e).iter().zip(b.row(e)).map(|(x, y)| x + y).collect();
        assert_eq!(both.row(e), &expected[..]);
    }
}

#[test]
fn overlapping_runs_are_averaged() {
    // With N = 2, e0 and e1 share the neighbourhood {e0, e1, c6, c8}.
    let store = params(1, 3, 5);
    let (h, covered) = run(&store, 1, Hops::Finite(2), &[0, 1]);
    let (a, _) = run(&store, 1, Hops::Finite(2), &[0]);
    assert_eq!(covered, BTreeSet::from([0, 1, 4]));
    assert_eq!(h.data(), a.data());
    // e4's 2-hop neighbourhood differs from e0's (it holds c7) but both
    // contain e1; three layers carry c7's influence to e1.
    let store = params(3, 3, 5);
    let (h, _) = run(&store, 3, Hops::Finite(2), &[0, 4]);
    let (x, _) = run(&store, 3, Hops::Finite(2), &[0]);
    let (y, _) = run(&store, 3, Hops::Finite(2), &[4]);
    assert_ne!(x.row(1), y.row(1));
    for i in 0..3 {
        let avg = 0.5 * x.row(1)[i] + 0.5 * y.row(1)[i];
        assert!((h.row(1)[i] - avg).abs() < 1e-15);
    }
    // e2 appears only in e4's run.
    assert_eq!(h.row(2), y.row(2));
}

#[test]
fn locality_outside_the_subgraph() {
    let mut store = params(2, 4, 6);
    let (before, _) = run(&store, 2, Hops::Finite(1), &[0]);
    // c7 (node 7) and e3 are outside the 1-hop neighbourhood of e0.
    let t = store.get_mut("local.node_emb0").unwrap();
    for v in t.row_mut(7).iter_mut() {
        *v += 10.0;
    }
    for v in t.row_mut(3).iter_mut() {
        *v -= 3.0;
    }
    let (after, _) = run(&store, 2, Hops::Finite(1), &[0]);
    assert_eq!(before.row(0), after.row(0));
}

#[test]
fn gradients_reach_only_touched_rows() {
    let store = params(2, 3, 7);
    let tape = Tape::new();
    let vars = store.bind(&tape);
    let enc = LocalEncoder {
        stack: CompGcnStack::bind(&vars, "local", 2, Composition::Sub).unwrap(),
        node_emb0: vars.var("local.node_emb0").unwrap(),
        hops: Hops::Finite(1),
    };
    let out = enc.encode(&tape, &mut SubgraphCache::new(), &graph(), &[2]).unwrap();
    let loss = tape.square(out.h_l).and_then(|s| tape.sum(s)).unwrap();
    let grads = vars.gradients(&tape.backward(loss).unwrap());
    let g = &grads["local.node_emb0"];
    // 1-hop neighbourhood of e2 is {e2, c7}.
    for node in 0..9 {
        let touched = g.row(node).iter().any(|&v| v != 0.0);
        assert_eq!(touched, node == 2 || node == 7, "node {node}");
    }
}

#[test]
fn local_gradients_match_finite_differences() {
    let mut rng = Rng::new(8);
    let d = 3;
    let inputs = vec![
        random(&[9, d], &mut rng),
        random(&[d, d], &mut rng),
        random(&[d, d], &mut rng),
        random(&[4, d], &mut rng),
        random(&[6, d], &mut rng),
    ];
    let g = graph();
    let r = gradcheck::check(&inputs, 1e-6, |t, v| {
        let enc = LocalEncoder {
            stack: CompGcnStack {
                layers: vec![crate::compgcn::CompGcnLayer {
                    w1: v[1],
                    w2: v[2],
                    rel_emb: v[3],
                }],
                op: Composition::Corr,
            },
            node_emb0: v[0],
            hops: Hops::Finite(2),
        };
        let out = enc.encode(t, &mut SubgraphCache::new(), &g, &[0, 3, 5])?;
        let w = t.mul(out.h_l, v[4])?;
        t.sum(w)
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-4, "{r:?}");
}

#[test]
fn cache_counts_extractions() {
    let g = graph();
    let mut cache = SubgraphCache::new();
    let a = cache.get(&g, 0, Hops::Finite(2)).unwrap();
    let b = cache.get(&g, 0, Hops::Finite(2)).unwrap();
    assert_eq!(cache.extractions(), 1);
    assert!(Rc::ptr_eq(&a, &b));
    cache.get(&g, 0, Hops::Finite(1)).unwrap();
    assert_eq!(cache.extractions(), 2);
    assert_eq!(cache.len(), 2);
    cache.clear();
    let c = cache.get(&g, 0, Hops::Finite(2)).unwrap();
    assert_eq!(*a, *c);
    assert_eq!(cache.extractions(), 3);
}

#[test]
fn cache_invalidated_by_new_ontology() {
    let g = graph();
    let other = OntologyGraph::new(6, 3, 2, vec![fact(0, 0, 6)])
        .unwrap()
        .augment_inverse()
        .unwrap();
    let mut cache = SubgraphCache::new();
    let a = cache.get(&g, 0, Hops::Finite(2)).unwrap();
    let b = cache.get(&other, 0, Hops::Finite(2)).unwrap();
    assert_ne!(a.nodes, b.nodes);
    assert_eq!(cache.len(), 1);
    assert_eq!(cache.extractions(), 2);
}

#[test]
fn rejects_bad_subjects() {
    let store = params(1, 3, 9);
    let tape = Tape::new();
    let enc = encoder(&tape, &store, 1, Hops::Finite(1));
    let mut cache = SubgraphCache::new();
    assert!(enc.encode(&tape, &mut cache, &graph(), &[]).is_err());
    assert!(matches!(
        enc.encode(&tape, &mut cache, &graph(), &[6]),
        Err(Error::InvalidSeed { .. })
    ));
}
