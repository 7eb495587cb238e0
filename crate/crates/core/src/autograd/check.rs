//! Central finite-difference verification of analytic gradients.

use super::{Graph, ParamStore, Var};

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on an absolute scale instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backprop gradients of the scalar built by `loss` against
/// central differences with the given `step`, over every entry of every
/// parameter in `store`.
pub fn gradient_check<F>(store: &ParamStore, step: f64, loss: F) -> GradCheckReport
where
    F: Fn(&mut Graph, &ParamStore) -> Var,
{
    let mut g = Graph::new();
    let out = loss(&mut g, store);
    let analytic = g.backward(out).params(store);

    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let out = loss(&mut g, s);
        g.scalar(out)
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for id in store.ids() {
        let n = store.get(id).len();
        for i in 0..n {
            let orig = store.get(id).as_slice_memory_order().expect("contiguous")[i];
            probe.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig + step;
            let up = eval(&probe);
            probe.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig - step;
            let down = eval(&probe);
            probe.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(id).as_slice_memory_order().expect("contiguous")[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
