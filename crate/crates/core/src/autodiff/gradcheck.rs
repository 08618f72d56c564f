use super::{Tape, Tensor, Var};
use crate::error::Result;

fn evaluate<F>(f: &mut F, params: &[Tensor]) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.constant(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.value(loss).item()
}

/// `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Central-difference derivative of a scalar function.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Analytic gradients of `f` at `params`, in parameter order.
pub fn analytic_gradients<F>(f: &mut F, params: &[Tensor]) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.len()])
        })
        .collect())
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences and returns the worst relative error
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` is rebuilt on a fresh tape for every evaluation, so it must be
/// deterministic (reseed any rng inside it).
#[allow(clippy::needless_range_loop)]
pub fn grad_check<F>(mut f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&mut f, params)?;
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + step;
            let up = evaluate(&mut f, &work)?;
            work[p].data_mut()[k] = orig - step;
            let down = evaluate(&mut f, &work)?;
            work[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic[p][k], numeric));
        }
    }
    Ok(worst)
}
