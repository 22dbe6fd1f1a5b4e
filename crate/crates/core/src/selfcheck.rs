//! Randomised gradient suites for every differentiable building block.
//!
//! Each suite draws instances with [`sample`]; an instance is a list of
//! input tensors and a scalar-valued function of them. Vector outputs are
//! reduced by a fixed random projection so every output entry contributes.

use std::rc::Rc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::compgcn::{compose, CompGcnLayer, Composition, EdgeIndex};
use crate::data::{OntoFact, Quadruple, Snapshot};
use crate::decoder::{tkg_loss, ConvDecoder};
use crate::error::Result;
use crate::fusion::{contrastive_loss, ContrastiveConfig, GatedFusion};
use crate::global::{cone_angle, entailment_loss, BaseEvolutionEncoder, EntailmentConfig, GruCell};
use crate::gradcheck;
use crate::rng::Rng;

pub type ScalarFn = Rc<dyn Fn(&Tape, &[Var]) -> Result<Var>>;

/// One randomised instance of a suite.
#[derive(Clone)]
pub struct GradCase {
    pub inputs: Vec<Tensor>,
    pub f: ScalarFn,
}

pub const SUITES: [&str; 9] = [
    "compose.sub",
    "compose.mult",
    "compose.corr",
    "compgcn.layer",
    "evolution.gru",
    "entailment.cone",
    "fusion.gate",
    "contrastive",
    "decoder",
];

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape matches data")
}

/// `Σ out ⊙ w` for a captured random `w`.
fn project(out_shape: &[usize], rng: &mut Rng, body: ScalarFn) -> ScalarFn {
    let w = random(out_shape, rng);
    Rc::new(move |t: &Tape, v: &[Var]| {
        let out = body(t, v)?;
        let wv = t.constant(w.clone());
        let p = t.mul(out, wv)?;
        t.sum(p)
    })
}

fn compose_case(op: Composition, rng: &mut Rng) -> GradCase {
    let (n, d) = (1 + rng.below(4), 1 + rng.below(8));
    let inputs = vec![random(&[n, d], rng), random(&[n, d], rng)];
    let f = project(&[n, d], rng, Rc::new(move |t, v| compose(t, op, v[0], v[1])));
    GradCase { inputs, f }
}

fn random_facts(nodes: usize, rels: usize, count: usize, rng: &mut Rng) -> Vec<OntoFact> {
    (0..count)
        .map(|_| OntoFact {
            head: rng.below(nodes) as u32,
            rel: rng.below(rels) as u32,
            tail: rng.below(nodes) as u32,
        })
        .collect()
}

fn layer_case(rng: &mut Rng) -> GradCase {
    let (n, d, rels) = (3 + rng.below(4), 2 + rng.below(4), 1 + rng.below(3));
    let op = [Composition::Sub, Composition::Mult, Composition::Corr][rng.below(3)];
    let edges = EdgeIndex::from_facts(n, &random_facts(n, rels, 2 * n, rng));
    let inputs = vec![
        random(&[n, d], rng),
        random(&[d, d], rng),
        random(&[d, d], rng),
        random(&[rels, d], rng),
    ];
    let f = project(
        &[n, d],
        rng,
        Rc::new(move |t, v| {
            let layer = CompGcnLayer {
                w1: v[1],
                w2: v[2],
                rel_emb: v[3],
            };
            layer.forward(t, op, &edges, v[0])
        }),
    );
    GradCase { inputs, f }
}

fn evolution_case(rng: &mut Rng) -> GradCase {
    let (n, d, rels) = (3 + rng.below(3), 2 + rng.below(3), 2);
    let snaps: Vec<Snapshot> = (0..2)
        .map(|t| {
            let facts = (0..n)
                .map(|_| Quadruple::new(rng.below(n) as u32, rng.below(rels) as u32, rng.below(n) as u32, t))
                .collect();
            Snapshot::new(t, facts)
        })
        .collect();
    let mut inputs = vec![random(&[n, d], rng), random(&[d, d], rng), random(&[d, d], rng)];
    inputs.extend((0..6).map(|_| random(&[d, d], rng)));
    inputs.extend((0..4).map(|_| random(&[d], rng)));
    inputs.push(random(&[rels, d], rng));
    let f = project(
        &[n, d],
        rng,
        Rc::new(move |t, v| {
            let enc = BaseEvolutionEncoder {
                w_self: v[1],
                w_nbr: v[2],
                gru: GruCell {
                    w_ir: v[3],
                    w_iz: v[4],
                    w_in: v[5],
                    w_hr: v[6],
                    w_hz: v[7],
                    w_hn: v[8],
                    b_r: v[9],
                    b_z: v[10],
                    b_in: v[11],
                    b_hn: v[12],
                },
                rel_table: v[13],
            };
            let (z, _) = enc.evolve(t, &[&snaps[0], &snaps[1]], v[0])?;
            Ok(z)
        }),
    );
    GradCase { inputs, f }
}

/// Every pair stays clear of the hinge, of `Ξ ∈ {0, π}` and of the
/// aperture floor, so the loss is smooth in a neighbourhood.
fn cone_case(rng: &mut Rng) -> GradCase {
    let k = 0.1 + 0.4 * rng.unit();
    loop {
        let (n, d) = (4 + rng.below(3), 2 + rng.below(3));
        let h = Tensor::new(vec![n, d], (0..n * d).map(|_| rng.uniform(-2.0, 2.0)).collect()).expect("shape");
        let pairs: Vec<(u32, u32)> = (0..n)
            .map(|_| {
                let c = rng.below(n);
                let p = (c + 1 + rng.below(n - 1)) % n;
                (c as u32, p as u32)
            })
            .collect();
        let smooth = pairs.iter().all(|&(c, p)| {
            let (hc, hp) = (h.row(c as usize), h.row(p as usize));
            let np = hp.iter().map(|x| x * x).sum::<f64>().sqrt();
            let Ok(xi) = cone_angle(hp, hc) else { return false };
            let psi = (k / np.max(k + 1e-6)).asin();
            np > k + 0.05 && (xi - psi).abs() > 0.05 && xi > 0.05 && xi < std::f64::consts::PI - 0.05
        });
        if smooth {
            let f: ScalarFn = Rc::new(move |t, v| {
                let out = entailment_loss(t, &pairs, v[0], EntailmentConfig { k })?;
                Ok(out.loss)
            });
            return GradCase { inputs: vec![h], f };
        }
    }
}

fn fusion_case(rng: &mut Rng) -> GradCase {
    let (n, d) = (2 + rng.below(4), 2 + rng.below(4));
    let inputs = vec![
        random(&[d, d], rng),
        random(&[d, d], rng),
        random(&[d], rng),
        random(&[n, d], rng),
        random(&[n, d], rng),
    ];
    let f = project(
        &[n, d],
        rng,
        Rc::new(|t, v| {
            GatedFusion {
                w3: v[0],
                w4: v[1],
                b: v[2],
            }
            .fuse(t, v[3], v[4])
        }),
    );
    GradCase { inputs, f }
}

fn contrastive_case(rng: &mut Rng) -> GradCase {
    let (n, d) = (3 + rng.below(4), 2 + rng.below(4));
    let tau = 0.2 + rng.unit();
    let members: Vec<u32> = (0..n as u32).filter(|_| rng.bernoulli(0.7)).collect();
    let members = if members.len() < 2 { vec![0, 1] } else { members };
    let inputs = vec![random(&[n, d], rng), random(&[n, d], rng)];
    let f: ScalarFn = Rc::new(move |t, v| {
        let out = contrastive_loss(t, ContrastiveConfig { tau }, v[0], v[1], &members)?;
        Ok(out.loss.expect("at least two members"))
    });
    GradCase { inputs, f }
}

fn decoder_case(rng: &mut Rng) -> GradCase {
    let (b, d, c, w, e) = (
        1 + rng.below(3),
        3 + rng.below(4),
        1 + rng.below(3),
        [1, 3, 5][rng.below(3)],
        3 + rng.below(4),
    );
    let gold: Vec<u32> = (0..b).map(|_| rng.below(e) as u32).collect();
    let inputs = vec![
        random(&[c, 2, w], rng),
        random(&[c * d, d], rng),
        random(&[b, d], rng),
        random(&[b, d], rng),
        random(&[e, d], rng),
    ];
    let f: ScalarFn = Rc::new(move |t, v| {
        let dec = ConvDecoder {
            kernels: v[0],
            proj: v[1],
        };
        let raw = dec.raw_scores(t, v[4], v[2], v[3])?;
        tkg_loss(t, raw, &gold)
    });
    GradCase { inputs, f }
}

/// Draws one instance of `suite`; `None` for an unknown name.
pub fn sample(suite: &str, rng: &mut Rng) -> Option<GradCase> {
    Some(match suite {
        "compose.sub" => compose_case(Composition::Sub, rng),
        "compose.mult" => compose_case(Composition::Mult, rng),
        "compose.corr" => compose_case(Composition::Corr, rng),
        "compgcn.layer" => layer_case(rng),
        "evolution.gru" => evolution_case(rng),
        "entailment.cone" => cone_case(rng),
        "fusion.gate" => fusion_case(rng),
        "contrastive" => contrastive_case(rng),
        "decoder" => decoder_case(rng),
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

impl SuiteResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Runs every suite on `instances` random instances.
pub fn run(instances: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    SUITES
        .iter()
        .enumerate()
        .map(|(i, &suite)| {
            let mut rng = Rng::derive(seed, i as u64);
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let case = sample(suite, &mut rng).expect("known suite");
                let f = case.f.clone();
                let r = gradcheck::check(&case.inputs, gradcheck::DEFAULT_STEP, move |t, v| f(t, v))?;
                worst = worst.max(r.max_rel_err);
            }
            Ok(SuiteResult {
                suite,
                instances,
                max_rel_err: worst,
            })
        })
        .collect()
}
