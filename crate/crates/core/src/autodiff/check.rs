use super::{ParamId, ParamStore, Tape, Var};

/// Worst disagreement found by [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients of the scalar built by `f` with central
/// differences of step `h` for every entry of every parameter.
pub fn gradient_check(
    store: &mut ParamStore,
    h: f64,
    floor: f64,
    f: impl Fn(&mut Tape) -> Var,
) -> GradCheck {
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
    let mut out = GradCheck { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    for p in 0..store.len() {
        let id = ParamId(p);
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + h;
            let up = eval(store);
            store.get_mut(id).data[k] = orig - h;
            let down = eval(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            let err = relative_error(analytic, numeric, floor);
            out.checked += 1;
            if err > out.max_rel_error || !err.is_finite() {
                out.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                out.worst = format!("{}[{k}]: analytic {analytic:e}, numeric {numeric:e}", store.get(id).name);
            }
        }
    }
    out
}
