use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradient_check;
use crate::graphbuild::MentionGraph;
use crate::manifold::{inner, log_map};

const COSH1: f64 = 1.5430806348152437;
const SINH1: f64 = 1.1752011936438014;
const COSH2: f64 = 3.7621956910836314;
const SINH2: f64 = 3.626860407847019;

fn k1() -> Curvature {
    Curvature::new(1.0).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn lift(x: &[f64], model: Model, k: f64) -> ManifoldPoint {
    lift_from_origin(x, Curvature::new(k).unwrap(), model).unwrap()
}

const MODELS: [Model; 2] = [Model::Hyperboloid, Model::Poincare];

#[test]
fn identity_weight_keeps_point() {
    for model in MODELS {
        let p = lift(&[0.3, -0.7, 1.1], model, 1.3);
        let q = linear_transform(&p, &HyperLayerParams::identity(3)).unwrap();
        assert!(close(p.coords(), q.coords(), 1e-9), "{model}");
    }
}

#[test]
fn zero_weight_gives_origin() {
    for model in MODELS {
        let p = lift(&[0.3, -0.7], model, 1.0);
        let zero = HyperLayerParams::new(vec![0.0; 4], vec![0.0; 2], 2, 2).unwrap();
        let q = linear_transform(&p, &zero).unwrap();
        assert_eq!(q.coords(), ManifoldPoint::origin(model, 2, k1()).coords());
    }
}

#[test]
fn doubling_weight_closed_form() {
    let p = ManifoldPoint::new(Model::Hyperboloid, vec![COSH1, SINH1], k1()).unwrap();
    let w = HyperLayerParams::new(vec![2.0], vec![0.0], 1, 1).unwrap();
    let q = linear_transform(&p, &w).unwrap();
    assert!(close(q.coords(), &[COSH2, SINH2], 1e-12), "{:?}", q.coords());
}

#[test]
fn bias_add_basics() {
    for model in MODELS {
        let p = lift(&[0.4, -0.2], model, 2.0);
        assert!(close(bias_add(&p, &[0.0, 0.0]).unwrap().coords(), p.coords(), 1e-12));
        let o = ManifoldPoint::origin(model, 2, Curvature::new(2.0).unwrap());
        let b = [0.3, 0.5];
        let got = bias_add(&o, &b).unwrap();
        let want = lift(&b, model, 2.0);
        assert!(close(got.coords(), want.coords(), 1e-12));
    }
}

#[test]
fn self_loops_are_identity_aggregation() {
    for model in MODELS {
        let pts: Vec<_> = [[0.1, 0.2], [-0.5, 0.3], [0.9, -1.2]].iter().map(|x| lift(x, model, 1.0)).collect();
        let out = aggregate(&pts, &NormalizedGraph::identity(3), AggregationBase::Origin).unwrap();
        for (a, b) in pts.iter().zip(&out) {
            assert!(close(a.coords(), b.coords(), 1e-9));
        }
    }
}

#[test]
fn identical_neighbours_are_a_fixed_point() {
    for model in MODELS {
        for base in [AggregationBase::Origin, AggregationBase::SelfPoint] {
            let p = lift(&[0.6, -0.4], model, 1.0);
            let g = MentionGraph { edges: vec![(0, 1, 1.0)], ..MentionGraph::empty(2) }.normalized();
            let out = aggregate(&[p.clone(), p.clone()], &g, base).unwrap();
            if base == AggregationBase::Origin {
                assert!(close(out[0].coords(), p.coords(), 1e-9));
                assert!(close(out[1].coords(), p.coords(), 1e-9));
            } else {
                assert_eq!(out[0], out[1]);
            }
        }
    }
}

/// Hyperboloid origin log/exp written out directly.
fn oracle_log0(p: &[f64]) -> Vec<f64> {
    let s = &p[1..];
    let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0.0; s.len()];
    }
    s.iter().map(|x| n.asinh() / n * x).collect()
}

fn oracle_exp0(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = vec![n.cosh()];
    out.extend(v.iter().map(|x| if n == 0.0 { *x } else { n.sinh() / n * x }));
    out
}

#[test]
fn line_graph_matches_stepwise_oracle() {
    let xs = [[0.2, -0.1], [1.0, 0.5], [-0.3, 0.8]];
    let pts: Vec<_> = xs.iter().map(|x| lift(x, Model::Hyperboloid, 1.0)).collect();
    let g = MentionGraph {
        edges: vec![(0, 1, 0.5), (1, 2, 0.25)],
        ..MentionGraph::empty(3)
    };
    let out = aggregate(&pts, &g.normalized(), AggregationBase::Origin).unwrap();
    let logs: Vec<_> = pts.iter().map(|p| oracle_log0(p.coords())).collect();
    let rows: [&[(usize, f64)]; 3] = [
        &[(0, 1.0 / 1.5), (1, 0.5 / 1.5)],
        &[(0, 0.5 / 1.75), (1, 1.0 / 1.75), (2, 0.25 / 1.75)],
        &[(1, 0.25 / 1.25), (2, 1.0 / 1.25)],
    ];
    for (i, row) in rows.iter().enumerate() {
        let mut s = [0.0; 2];
        for &(j, w) in *row {
            s[0] += w * logs[j][0];
            s[1] += w * logs[j][1];
        }
        assert!(close(out[i].coords(), &oracle_exp0(&s), 1e-12), "node {i}");
    }
}

#[test]
fn misaligned_graph_is_rejected() {
    let pts = vec![lift(&[0.1], Model::Hyperboloid, 1.0)];
    assert!(aggregate(&pts, &NormalizedGraph::identity(2), AggregationBase::Origin).is_err());
}

#[test]
fn activation_regions() {
    for model in MODELS {
        let pos = lift(&[0.3, 0.0, 1.2], model, 1.0);
        assert!(close(activate(&pos).unwrap().coords(), pos.coords(), 1e-9));
        let neg = lift(&[-0.3, -0.1, -1.2], model, 1.0);
        assert_eq!(activate(&neg).unwrap().coords(), ManifoldPoint::origin(model, 3, k1()).coords());
    }
    let mixed = lift(&[0.7, -0.2, 0.4], Model::Hyperboloid, 1.0);
    let got = activate(&mixed).unwrap();
    let v: Vec<f64> = oracle_log0(mixed.coords()).into_iter().map(|x| x.max(0.0)).collect();
    assert!(close(got.coords(), &oracle_exp0(&v), 1e-12));
}

#[test]
fn identity_layer() {
    for model in MODELS {
        let pts: Vec<_> = [[0.1, 0.2], [0.5, 0.0]].iter().map(|x| lift(x, model, 1.0)).collect();
        let out = layer_forward(&pts, &NormalizedGraph::identity(2), &HyperLayerParams::identity(2), AggregationBase::Origin, 1).unwrap();
        for (a, b) in pts.iter().zip(&out.points) {
            assert!(close(a.coords(), b.coords(), 1e-9));
        }
    }
}

#[test]
fn single_mention_layer_composes_the_four_ops() {
    let p = lift(&[0.4, -0.9], Model::Hyperboloid, 1.0);
    let params = HyperLayerParams::new(vec![0.5, 1.0, -0.3, 0.8], vec![0.2, 0.1], 2, 2).unwrap();
    // manual: W log, exp, transport b by the explicit formula, exp at the point
    let v = oracle_log0(p.coords());
    let wv = [0.5 * v[0] + 1.0 * v[1], -0.3 * v[0] + 0.8 * v[1]];
    let h = oracle_exp0(&wv);
    let b = [0.0, 0.2, 0.1];
    let hb = -h[0] * b[0] + h[1] * b[1] + h[2] * b[2];
    let coef = hb / (1.0 + h[0]);
    let u: Vec<f64> = (0..3).map(|i| b[i] + coef * (h[i] + if i == 0 { 1.0 } else { 0.0 })).collect();
    let un = (-u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let t: Vec<f64> = (0..3).map(|i| un.cosh() * h[i] + un.sinh() / un * u[i]).collect();
    let z = oracle_exp0(&oracle_log0(&t).into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>());
    let out = layer_forward(&[p], &NormalizedGraph::identity(1), &params, AggregationBase::Origin, 1).unwrap();
    assert!(close(out.points[0].coords(), &z, 1e-10), "{:?} vs {z:?}", out.points[0].coords());
}

fn tape_layer(
    model: Model,
    k: f64,
    xs: &[Vec<f64>],
    rows: &[Vec<(usize, f64)>],
    base: AggregationBase,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<ManifoldPoint>) {
    let d = xs[0].len();
    let chart = Chart::new(model, Curvature::new(k).unwrap());
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stage = StageTwo::new(chart, base, &[d, d], 0.4, &mut store, &mut rng).unwrap();
    let mut tape = Tape::new(&store);
    let pts: Vec<Option<Var>> = xs
        .iter()
        .map(|x| {
            let v = tape.input(x.clone());
            Some(chart.exp0(&mut tape, v).unwrap())
        })
        .collect();
    let all: Vec<usize> = (0..xs.len()).collect();
    let out = stage.layer_forward(&mut tape, 0, &pts, rows, &all).unwrap();
    let tape_out: Vec<Vec<f64>> = out.iter().map(|v| tape.value(v.unwrap()).to_vec()).collect();
    let params = HyperLayerParams::new(
        store.get(stage.layers[0].w).data.clone(),
        store.get(stage.layers[0].b).data.clone(),
        d,
        d,
    )
    .unwrap();
    let mpts: Vec<_> = xs.iter().map(|x| lift(x, model, k)).collect();
    let graph = NormalizedGraph { rows: rows.to_vec() };
    let reference = layer_forward(&mpts, &graph, &params, base, 1).unwrap().points;
    (tape_out, reference)
}

fn rows3() -> Vec<Vec<(usize, f64)>> {
    vec![vec![(0, 0.6), (1, 0.4)], vec![(0, 0.2), (1, 0.5), (2, 0.3)], vec![(1, 0.5), (2, 0.5)]]
}

#[test]
fn tape_matches_reference_layer() {
    let xs = vec![vec![0.3, -0.2, 0.5], vec![-0.4, 0.9, 0.1], vec![0.7, 0.7, -0.6]];
    for model in MODELS {
        for base in [AggregationBase::Origin, AggregationBase::SelfPoint] {
            let (tape, reference) = tape_layer(model, 1.7, &xs, &rows3(), base, 3);
            let chart = Chart::new(model, Curvature::new(1.7).unwrap());
            for (t, r) in tape.iter().zip(&reference) {
                assert!(close(chart.to_point(t).coords(), r.coords(), 1e-10), "{model} {base:?}");
            }
        }
    }
}

#[test]
fn tape_bias_matches_transport_and_exp() {
    for model in MODELS {
        let chart = Chart::new(model, Curvature::new(0.8).unwrap());
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![0.5, -1.0]);
        let p = chart.exp0(&mut tape, x).unwrap();
        let b = tape.input(vec![0.3, 0.25]);
        let q = chart.bias_add(&mut tape, p, b).unwrap();
        let want = bias_add(&chart.to_point(tape.value(p)), &[0.3, 0.25]).unwrap();
        assert!(close(chart.to_point(tape.value(q)).coords(), want.coords(), 1e-12));
    }
}

#[test]
fn two_layers_stay_on_manifold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in MODELS {
        for trial in 0..20 {
            let xs: Vec<Vec<f64>> =
                (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
            let mut pts: Vec<_> = xs.iter().map(|x| lift(x, model, 1.0)).collect();
            let g = MentionGraph {
                edges: vec![(0, 1, 0.9), (1, 3, 0.4), (2, 3, 0.1)],
                ..MentionGraph::empty(4)
            }
            .normalized();
            for l in 1..=2 {
                let w: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
                let params = HyperLayerParams::new(w, b, 3, 3).unwrap();
                pts = layer_forward(&pts, &g, &params, AggregationBase::Origin, l).unwrap().points;
                for p in &pts {
                    assert!(p.is_on_manifold(), "{model} trial {trial}: {p:?}");
                }
            }
        }
    }
}

#[test]
fn zero_weight_neighbours_do_not_leak() {
    let xs = vec![vec![0.3, -0.2], vec![-0.4, 0.9], vec![0.7, 0.7]];
    let rows = vec![vec![(0, 0.5), (1, 0.5), (2, 0.0)], vec![(1, 1.0)], vec![(2, 1.0)]];
    for model in MODELS {
        let (a, _) = tape_layer(model, 1.0, &xs, &rows, AggregationBase::Origin, 5);
        let mut ys = xs.clone();
        ys[2] = vec![-1.3, 0.05];
        let (b, _) = tape_layer(model, 1.0, &ys, &rows, AggregationBase::Origin, 5);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
    }
}

#[test]
fn permuting_nodes_permutes_outputs() {
    let xs = vec![vec![0.3, -0.2], vec![-0.4, 0.9], vec![0.7, 0.7]];
    let rows = rows3();
    let perm = [2usize, 0, 1]; // new index of old node i
    let mut pxs = vec![vec![]; 3];
    let mut prows = vec![vec![]; 3];
    for i in 0..3 {
        pxs[perm[i]] = xs[i].clone();
        let mut r: Vec<(usize, f64)> = rows[i].iter().map(|&(j, w)| (perm[j], w)).collect();
        r.sort_by_key(|e| e.0);
        prows[perm[i]] = r;
    }
    for model in MODELS {
        let (a, _) = tape_layer(model, 1.0, &xs, &rows, AggregationBase::Origin, 6);
        let (b, _) = tape_layer(model, 1.0, &pxs, &prows, AggregationBase::Origin, 6);
        for i in 0..3 {
            assert!(close(&a[i], &b[perm[i]], 1e-14));
        }
    }
}

#[test]
fn receptive_sets_cover_neighbourhoods() {
    let chart = Chart::new(Model::Hyperboloid, k1());
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stage = StageTwo::new(chart, AggregationBase::Origin, &[2, 2, 2], 0.1, &mut store, &mut rng).unwrap();
    let rows = vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 0.5), (2, 0.5)], vec![(2, 1.0)], vec![(3, 1.0)]];
    let sets = stage.receptive_sets(&rows, &[0]);
    assert_eq!(sets, vec![vec![0, 1, 2], vec![0, 1], vec![0]]);
}

#[test]
fn oversized_tangent_is_rejected() {
    let chart = Chart::new(Model::Hyperboloid, Curvature::new(4.0).unwrap());
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let v = tape.input(vec![30.0, 0.0]);
    assert!(matches!(chart.exp0(&mut tape, v), Err(Error::TangentNormTooLarge { .. })));
}

#[test]
fn layer_gradients_match_finite_differences() {
    for model in MODELS {
        for base in [AggregationBase::Origin, AggregationBase::SelfPoint] {
            let chart = Chart::new(model, Curvature::new(1.3).unwrap());
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let stage = StageTwo::new(chart, base, &[3, 4, 3], 0.5, &mut store, &mut rng).unwrap();
            let xs = store.uniform("inputs", vec![3, 3], 0.8, &mut rng).unwrap();
            let rows = rows3();
            let report = gradient_check(&mut store, 1e-5, 1e-6, |tape| {
                let pts: Vec<Option<Var>> = (0..3)
                    .map(|i| {
                        let x = tape.row(xs, i);
                        Some(chart.exp0(tape, x).unwrap())
                    })
                    .collect();
                let sets = stage.receptive_sets(&rows, &[0, 1, 2]);
                let out = stage.forward(tape, pts, &rows, &sets).unwrap();
                let mut terms = Vec::new();
                for (i, o) in out.iter().enumerate() {
                    let v = chart.log0(tape, o.unwrap());
                    let c = tape.input(vec![0.7, -1.1 + i as f64, 0.4]);
                    terms.push(tape.dot(v, c));
                }
                tape.sum(&terms)
            });
            assert!(report.max_rel_error <= 1e-4, "{model} {base:?}: {report:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transported_bias_keeps_its_norm(
        x in proptest::collection::vec(-2.0f64..2.0, 3),
        b in proptest::collection::vec(-1.0f64..1.0, 3),
        k in 0.5f64..2.0,
    ) {
        let c = Curvature::new(k).unwrap();
        for model in MODELS {
            let p = lift_from_origin(&x, c, model).unwrap();
            let o = ManifoldPoint::origin(model, 3, c);
            let bt = TangentVec::at_origin(model, &b, c);
            let moved = parallel_transport(&o, &p, &bt).unwrap();
            prop_assert!((inner(&moved, &moved) - inner(&bt, &bt)).abs() <= 1e-8);
            let q = bias_add(&p, &b).unwrap();
            prop_assert!(q.is_on_manifold());
            let back = log_map(&p, &q).unwrap();
            prop_assert!(close(back.coords(), moved.coords(), 1e-6));
        }
    }
}
