//! Central finite differences in f64 against the tape's analytic gradients.

use gridsplit::model::{Bound, ParamSet};
use gridsplit::tensor::{Tape, Var};

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error with a small absolute floor so that gradients that are
/// exactly zero analytically do not divide by round-off.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

pub struct Report {
    pub max_rel: f64,
    pub checked: usize,
    pub worst: String,
}

/// Compares every parameter element (at most `max_elems` per tensor, evenly
/// strided) of `params` under the scalar loss built by `f`.
pub fn check<F>(params: &ParamSet<f64>, max_elems: usize, f: F) -> Report
where
    F: Fn(&mut Tape<f64>, &Bound) -> Var,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let loss = f(&mut tape, &bound);
    let grads = tape.backward(loss).expect("scalar loss");

    let eval = |p: &ParamSet<f64>| -> f64 {
        let mut t = Tape::new();
        let b = p.bind(&mut t, false);
        let l = f(&mut t, &b);
        t.value(l).item().unwrap()
    };

    let mut report = Report {
        max_rel: 0.0,
        checked: 0,
        worst: String::new(),
    };
    let mut work = params.clone();
    for (name, t) in params.iter() {
        let var = bound.var(name);
        let n = t.numel();
        let stride = (n / max_elems.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let orig = t.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + H;
            let up = eval(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig - H;
            let down = eval(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.get(var).map(|g| g.data()[i]).unwrap_or(0.0);
            let e = rel_err(analytic, numeric);
            report.checked += 1;
            if e > report.max_rel {
                report.max_rel = e;
                report.worst = format!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e}");
            }
        }
    }
    report
}
