//! Exact `E[U_K]` on a finite model as a differentiable function of the
//! logits of `τ(· | z)`, for checking the autodiff engine end to end.

use super::OracleError;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::models::DiscreteHvm;

const BUDGET: u128 = 200_000;

fn record(tape: &mut Tape, model: &DiscreteHvm, z: usize, logits: NodeId, k: usize) -> Result<NodeId, OracleError> {
    let autodiff = |e: crate::autodiff::AutodiffError| OracleError::Support(e.to_string());
    let s = model.psi_states();
    let required = (s as u128).pow(k as u32 + 1);
    if required > BUDGET {
        return Err(OracleError::Budget { required, budget: BUDGET });
    }
    let post = model.posterior(z);
    let lse = tape.logsumexp(logits).map_err(autodiff)?;
    let log_tau = tape.sub(logits, lse).map_err(autodiff)?;
    let cols = (0..s)
        .map(|i| tape.slice_cols(log_tau, i, 1))
        .collect::<Result<Vec<_>, _>>()
        .map_err(autodiff)?;
    let lq: Vec<f64> = (0..s)
        .map(|i| (model.psi_probs()[i] * model.z_given_psi(i)[z]).ln())
        .collect();
    let ln_k1 = ((k + 1) as f64).ln();
    let mut total: Option<NodeId> = None;
    let mut tuple = vec![0usize; k + 1];
    loop {
        if post[tuple[0]] > 0.0 {
            let mut lw = Vec::with_capacity(k + 1);
            let mut log_prob = tape.constant(post[tuple[0]].ln());
            for (j, &st) in tuple.iter().enumerate() {
                let c = tape.constant(lq[st]);
                lw.push(tape.sub(c, cols[st]).map_err(autodiff)?);
                if j > 0 {
                    log_prob = tape.add(log_prob, cols[st]).map_err(autodiff)?;
                }
            }
            let row = tape.concat_cols(&lw).map_err(autodiff)?;
            let u = tape.logsumexp(row).map_err(autodiff)?;
            let u = tape.add_scalar(u, -ln_k1).map_err(autodiff)?;
            let w = tape.exp(log_prob).map_err(autodiff)?;
            let term = tape.mul(w, u).map_err(autodiff)?;
            total = Some(match total {
                Some(t) => tape.add(t, term).map_err(autodiff)?,
                None => term,
            });
        }
        // odometer over ψ_{0:K}
        let mut pos = 0;
        loop {
            if pos == tuple.len() {
                return total.ok_or_else(|| OracleError::Support("empty posterior".into()));
            }
            tuple[pos] += 1;
            if tuple[pos] < s {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

/// `E[U_K(z)]` with `τ(· | z) = softmax(logits)` and its gradient with
/// respect to `logits`, both exact.
pub fn exact_upper_and_grad(model: &DiscreteHvm, z: usize, logits: &[f64], k: usize) -> Result<(f64, Vec<f64>), OracleError> {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(logits.to_vec()));
    let out = record(&mut tape, model, z, x, k)?;
    let grads = tape.backward(out).map_err(|e| OracleError::Support(e.to_string()))?;
    let g = grads.get_or_zeros(x, tape.value(x));
    Ok((tape.scalar(out), g.data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_discrete_hvm, DiscreteTau};
    use crate::oracle::{exact_expected_bound, finite_diff, BoundKind};

    #[test]
    fn agrees_with_enumeration_and_differences() {
        let model = make_discrete_hvm(vec![0.2, 0.5, 0.3], vec![vec![0.7, 0.3], vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap();
        let logits = [0.3, -0.8, 1.1];
        let m = logits.iter().map(|v: &f64| v.exp()).sum::<f64>();
        let probs: Vec<f64> = logits.iter().map(|v| v.exp() / m).collect();
        let tau = DiscreteTau::new(vec![probs.clone(), probs]).unwrap();
        for k in 0..=3 {
            let (v, g) = exact_upper_and_grad(&model, 1, &logits, k).unwrap();
            let e = exact_expected_bound(&model, &tau, 1, k, BoundKind::Upper).unwrap();
            assert!((v - e).abs() < 1e-12, "k={k}: {v} vs {e}");
            let fd = finite_diff(|l| exact_upper_and_grad(&model, 1, l, k).unwrap().0, &logits, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-7, "k={k}: {a} vs {b}");
            }
        }
    }
}
