use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// Central-difference check of every parameter entry of `store` for the
/// scalar function built by `f`.
fn check(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var, tol: f64) {
    let grads = {
        let mut tape = Tape::new(store);
        let root = f(&mut tape);
        tape.backward(root)
    };
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let root = f(&mut tape);
        tape.scalar(root)
    };
    let h = 1e-6;
    for p in 0..store.len() {
        let id = ParamId(p);
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + h;
            let up = eval(store);
            store.get_mut(id).data[k] = orig - h;
            let down = eval(store);
            store.get_mut(id).data[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(id).map_or(0.0, |g| g[k]);
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            assert!(err < tol, "{}[{k}]: analytic {an} vs numeric {fd}", store.get(id).name);
        }
    }
}

fn store_with(entries: &[(&str, Vec<usize>)], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (name, shape) in entries {
        s.uniform(name, shape.clone(), 0.8, &mut rng).unwrap();
    }
    s
}

#[test]
fn constant_loss_has_zero_gradient() {
    let s = store_with(&[("w", vec![3])], 1);
    let mut tape = Tape::new(&s);
    let _w = tape.param(ParamId(0));
    let c = tape.constant(4.2);
    let g = tape.backward(c);
    assert!(g.is_zero());
}

#[test]
fn quadratic_probe() {
    let mut s = ParamStore::new();
    s.insert("x", vec![1], vec![1.7]).unwrap();
    let mut tape = Tape::new(&s);
    let x = tape.param(ParamId(0));
    let y = tape.dot(x, x);
    let g = tape.backward(y);
    assert_eq!(g.get(ParamId(0)).unwrap(), &[3.4]);
}

#[test]
fn elementwise_and_scalar_ops() {
    let mut s = store_with(&[("a", vec![4]), ("b", vec![4]), ("w", vec![3, 4]), ("c", vec![1])], 7);
    check(
        &mut s,
        |t| {
            let a = t.param(ParamId(0));
            let b = t.param(ParamId(1));
            let c = t.param(ParamId(3));
            let sum = t.add(a, b);
            let diff = t.sub(a, b);
            let prod = t.mul(sum, diff);
            let sig = t.map(prod, Unary::Sigmoid);
            let th = t.map(a, Unary::Tanh);
            let lin = t.linear(&[(sig, 0.7), (th, -1.3)], 0.25);
            let scaled = t.scale(lin, c);
            let wx = t.matvec(ParamId(2), scaled);
            let r = t.relu(wx);
            let rr = t.dot(r, r);
            let one = t.constant(2.0);
            let den = t.linear(&[(rr, 1.0)], 1.5);
            let q = t.scalar_div(one, den);
            let sq_in = t.linear(&[(rr, 1.0)], 0.5);
            let sq = t.map(sq_in, Unary::Sqrt);
            let m = t.scalar_mul(q, sq);
            let cat = t.concat(&[a, wx]);
            let sl = t.slice(cat, 2, 4);
            let d = t.dot(sl, b);
            t.sum(&[m, d])
        },
        1e-6,
    );
}

#[test]
fn radial_ops() {
    let mut s = ParamStore::new();
    s.insert("x", vec![3], vec![0.3, -0.5, 0.2]).unwrap();
    s.insert("tiny", vec![3], vec![1e-4, -2e-4, 1e-4]).unwrap();
    for kind in [Radial::Sinhc, Radial::Asinhc, Radial::Tanhc, Radial::Artanhc, Radial::Cosh] {
        check(
            &mut s,
            |t| {
                let x = t.param(ParamId(0));
                let y = t.radial_scale(x, kind, 1.7);
                let tiny = t.param(ParamId(1));
                let z = t.radial_scale(tiny, kind, 1.7);
                let w = t.add(y, z);
                let n = t.dot(w, x);
                let p = t.profile(n, kind);
                let sum = t.dot(w, w);
                t.sum(&[p, sum])
            },
            1e-5,
        );
    }
}

#[test]
fn clip_and_hinge() {
    let mut s = ParamStore::new();
    s.insert("x", vec![3], vec![0.9, -0.8, 0.5]).unwrap();
    s.insert("y", vec![3], vec![0.1, -0.2, 0.05]).unwrap();
    check(
        &mut s,
        |t| {
            let x = t.param(ParamId(0));
            let y = t.param(ParamId(1));
            let cx = t.clip_norm(x, 1.0);
            let cy = t.clip_norm(y, 1.0);
            let z = t.add(cx, cy);
            t.hinge(z, &[(0, -1.0), (1, 1.0), (2, 1.0)])
        },
        1e-6,
    );
}

#[test]
fn hinge_values() {
    let mut s = ParamStore::new();
    s.insert("s", vec![3], vec![0.5, -0.2, 2.0]).unwrap();
    let mut t = Tape::new(&s);
    let sc = t.param(ParamId(0));
    let l = t.hinge(sc, &[(0, -1.0), (1, 1.0), (2, -1.0)]);
    assert!((t.scalar(l) - 1.3).abs() < 1e-15);
    let g = t.backward(l);
    assert_eq!(g.get(ParamId(0)).unwrap(), &[-1.0, 1.0, 0.0]);
}

#[test]
fn lstm_chain_and_embedding_rows() {
    let mut s = store_with(&[("emb", vec![5, 3]), ("w", vec![8, 5]), ("b", vec![8])], 3);
    check(
        &mut s,
        |t| {
            let mut state = None;
            for r in [0, 3, 3, 1] {
                let x = t.row(ParamId(0), r);
                state = Some(t.lstm_step(ParamId(1), ParamId(2), x, state));
            }
            let st = state.unwrap();
            let h = t.slice(st, 0, 2);
            let c = t.slice(st, 2, 2);
            let a = t.dot(h, h);
            let b = t.dot(c, h);
            t.sum(&[a, b])
        },
        1e-6,
    );
}

#[test]
fn backward_full_exposes_input_adjoints() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.input(vec![1.0, 2.0]);
    let y = t.dot(x, x);
    let (_, adj) = t.backward_full(y);
    assert_eq!(Tape::adjoint(&adj, x).unwrap(), &[2.0, 4.0]);
}
