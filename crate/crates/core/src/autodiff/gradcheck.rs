//! Central finite differences against reverse-mode gradients.

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub h: f64,
    /// Check at most this many coordinates per parameter (evenly strided).
    pub max_coords: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            max_coords: None,
        }
    }
}

/// Worst relative error `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)` over the
/// checked coordinates of every parameter in `store`. The computation `f`
/// must return a `1 x 1` node and be deterministic.
pub fn finite_diff_check<F>(store: &ParamStore, f: F, opts: GradCheck) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let per = finite_diff_by_param(store, f, opts)?;
    Ok(per.iter().map(|(_, e)| *e).fold(0.0, f64::max))
}

/// As [`finite_diff_check`], reporting the worst error of each parameter
/// by name.
pub fn finite_diff_by_param<F>(store: &ParamStore, f: F, opts: GradCheck) -> Result<Vec<(String, f64)>>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let out = f(&mut tape, &bound)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let out = f(&mut tape, &bound)?;
    if tape.shape(out) != (1, 1) {
        return Err(Error::Dimension("gradient check needs a scalar output".into()));
    }
    let base = tape.scalar(out);
    let again = eval(store)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic(format!(
            "two forward passes gave {base:e} and {again:e}"
        )));
    }
    let mut grads = tape.backward(out);
    let analytic = store.gradients(&mut grads, &bound);

    let mut report = Vec::new();
    let mut probe = store.clone();
    for id in store.ids() {
        let mut worst = 0.0f64;
        let len = store.get(id).len();
        let stride = match opts.max_coords {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        for flat in (0..len).step_by(stride) {
            let orig = store.get(id).as_slice().expect("standard layout")[flat];
            probe.get_mut(id).as_slice_mut().expect("standard layout")[flat] = orig + opts.h;
            let plus = eval(&probe)?;
            probe.get_mut(id).as_slice_mut().expect("standard layout")[flat] = orig - opts.h;
            let minus = eval(&probe)?;
            probe.get_mut(id).as_slice_mut().expect("standard layout")[flat] = orig;
            let fd = (plus - minus) / (2.0 * opts.h);
            let ad = analytic.get(id).as_slice().expect("standard layout")[flat];
            let rel = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
            worst = worst.max(rel);
        }
        report.push((store.name(id).to_string(), worst));
    }
    Ok(report)
}
