//! Central finite-difference gradient checking.
//!
//! The numerical side only evaluates forward values, so it stays
//! independent of every backward rule it is used to check.

use super::{Result, Tape, Tensor, Var};

/// Norm-wise relative error per input: `max|a − n| / max(max|a|, max|n|, 1e-8)`.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub rel_errors: Vec<f64>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Analytic gradients of a scalar function of `inputs`.
pub fn analytic<F>(inputs: &[Tensor], f: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| tape.grad(v).expect("leaf gradient"))
        .collect())
}

/// Central differences with step `h` for every entry of every input.
pub fn numeric<F>(inputs: &[Tensor], f: &F, h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape());
        for k in 0..inputs[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let fp = eval(f, &work)?;
            work[i].data_mut()[k] = orig - h;
            let fm = eval(f, &work)?;
            work[i].data_mut()[k] = orig;
            g.data_mut()[k] = (fp - fm) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

pub fn check<F>(inputs: &[Tensor], f: F, h: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let a = analytic(inputs, &f)?;
    let n = numeric(inputs, &f, h)?;
    let rel_errors = a
        .iter()
        .zip(&n)
        .map(|(a, n)| {
            let scale = a
                .data()
                .iter()
                .chain(n.data())
                .fold(1e-8_f64, |m, v| m.max(v.abs()));
            a.max_abs_diff(n) / scale
        })
        .collect();
    Ok(GradReport { rel_errors })
}
