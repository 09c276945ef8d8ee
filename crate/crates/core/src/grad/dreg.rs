use super::GradError;
use crate::autodiff::{logsumexp, Bindings, NodeId, Tape, Tensor};
use crate::models::{k_major_to_rows, tile, TapeAuxiliary, TapeJoint};
use crate::rng::RngStream;

/// `q` (fixed), the trainable `τ`, and the number of `τ` draws per row.
#[derive(Clone, Copy)]
pub struct TauTape<'a> {
    pub q: &'a dyn TapeJoint,
    pub tau: &'a dyn TapeAuxiliary,
    pub k: usize,
}

/// Rows of `(z, ψ₀)` drawn jointly from `q`, with `log p(x, z)` per row for
/// the IWHVI objective (ignored otherwise). Rows are grouped `M` at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct TauDraw {
    pub z: Tensor,
    pub psi0: Tensor,
    pub log_p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauObjective {
    /// Batch mean of `U_K`.
    Upper,
    /// Batch mean of the IWAE-style `L_K` (needs `K ≥ 1`).
    Lower,
    /// Mean over groups of `M` rows of the DIWHVI bound.
    Iwhvi { m: usize },
}

struct Built {
    /// Live log-weights, rows × (K+1); column 0 is `ψ₀`.
    lw: NodeId,
    /// `log q(z, ψ_k) - log τ̄(ψ_k | z)` with `τ̄` frozen, rows × K.
    beta_tilde: Option<NodeId>,
    /// `log τ(ψ₀ | z)`, rows × 1.
    log_tau0: NodeId,
}

fn build(
    tape: &mut Tape,
    params: &Bindings,
    problem: TauTape,
    draw: &TauDraw,
    want_frozen: bool,
    rng: &mut RngStream,
) -> Result<Built, GradError> {
    let rows = draw.z.rows();
    let z = tape.leaf(draw.z.clone());
    let psi0 = tape.leaf(draw.psi0.clone());
    let dist = problem.tau.dist_tape(tape, params, z)?;
    let lq0 = problem.q.log_joint_tape(tape, z, psi0)?;
    let log_tau0 = dist.log_prob_rows(tape, psi0)?;
    let lw0 = tape.sub(lq0, log_tau0)?;
    if problem.k == 0 {
        return Ok(Built {
            lw: lw0,
            beta_tilde: None,
            log_tau0,
        });
    }
    let k = problem.k;
    let tiled = tile(tape, dist, k)?;
    let psi = tiled.sample_reparam(tape, rng)?;
    let zk = tape.repeat_rows(z, k)?;
    let lq = problem.q.log_joint_tape(tape, zk, psi)?;
    let lt = tiled.log_prob_rows(tape, psi)?;
    let lw_col = tape.sub(lq, lt)?;
    let lw_k = k_major_to_rows(tape, lw_col, k)?;
    let lw = tape.concat_cols(&[lw0, lw_k])?;
    let beta_tilde = if want_frozen {
        let frozen = tiled.freeze(tape)?;
        let lt_f = frozen.log_prob_rows(tape, psi)?;
        let b = tape.sub(lq, lt_f)?;
        Some(k_major_to_rows(tape, b, k)?)
    } else {
        None
    };
    debug_assert_eq!(tape.value(lw).shape(), (rows, k + 1));
    Ok(Built { lw, beta_tilde, log_tau0 })
}

fn groups(objective: TauObjective, rows: usize) -> Result<usize, GradError> {
    let m = match objective {
        TauObjective::Iwhvi { m } => m,
        _ => 1,
    };
    if m == 0 || rows % m != 0 {
        return Err(GradError::Unsupported("row count must be a positive multiple of M"));
    }
    Ok(rows / m)
}

/// The objective itself, recorded so that backpropagation gives the plain
/// reparameterized gradient.
pub fn objective_tape(
    tape: &mut Tape,
    params: &Bindings,
    problem: TauTape,
    draw: &TauDraw,
    objective: TauObjective,
    rng: &mut RngStream,
) -> Result<NodeId, GradError> {
    let n_groups = groups(objective, draw.z.rows())? as f64;
    let built = build(tape, params, problem, draw, false, rng)?;
    Ok(match objective {
        TauObjective::Upper => {
            let u = tape.logmeanexp_rows(built.lw)?;
            tape.mean(u)?
        }
        TauObjective::Lower => {
            if problem.k == 0 {
                return Err(GradError::Unsupported("the lower bound needs K >= 1"));
            }
            let rest = tape.slice_cols(built.lw, 1, problem.k)?;
            let l = tape.logmeanexp_rows(rest)?;
            tape.mean(l)?
        }
        TauObjective::Iwhvi { m } => {
            let u = tape.logmeanexp_rows(built.lw)?;
            let lp = tape.leaf(Tensor::column(draw.log_p.clone()));
            let alpha = tape.sub(lp, u)?;
            // rows are b-major: (b·M + m) → one row of M per group
            let a = tape.reshape(alpha, draw.z.rows() / m, m)?;
            let per_group = tape.logmeanexp_rows(a)?;
            let s = tape.sum(per_group)?;
            tape.scale(s, 1.0 / n_groups)?
        }
    })
}

/// Constant DReG weights from the log-weight values `lw` (rows × (K+1)) and
/// `log p(x, z)` per row: `(c_k, c_0)` with
/// `c_k = sα (sα - 2) sβ_k²` for `k ≥ 1` and `c_0 = sα sβ_0`, where the
/// softmaxes run over `k` within a row and over the `M` rows of a group.
pub fn dreg_coefficients(lw: &Tensor, log_p: &[f64], m: usize) -> (Tensor, Vec<f64>) {
    let (rows, cols) = lw.shape();
    let mut ck = Tensor::zeros(rows, cols.saturating_sub(1));
    let mut c0 = vec![0.0; rows];
    let lse: Vec<f64> = (0..rows).map(|r| logsumexp(lw.row_slice(r))).collect();
    for g in 0..rows / m {
        let alpha: Vec<f64> = (0..m).map(|j| log_p[g * m + j] - lse[g * m + j]).collect();
        let a_norm = logsumexp(&alpha);
        for j in 0..m {
            let r = g * m + j;
            let sa = (alpha[j] - a_norm).exp();
            let row = lw.row_slice(r);
            c0[r] = sa * (row[0] - lse[r]).exp();
            for k in 1..cols {
                let sb = (row[k] - lse[r]).exp();
                ck.set(r, k - 1, sa * (sa - 2.0) * sb * sb);
            }
        }
    }
    (ck, c0)
}

/// A scalar whose gradient is the IWHVI-DReG estimate of the gradient of
/// `objective` (same orientation as [`objective_tape`]).
pub fn dreg_surrogate(
    tape: &mut Tape,
    params: &Bindings,
    problem: TauTape,
    draw: &TauDraw,
    objective: TauObjective,
    include_b: bool,
    rng: &mut RngStream,
) -> Result<NodeId, GradError> {
    let rows = draw.z.rows();
    let n_groups = groups(objective, rows)?;
    let (m, sign, log_p) = match objective {
        TauObjective::Iwhvi { m } => (m, 1.0, draw.log_p.clone()),
        // U_K = -(M=1 IWHVI with log p = 0) + const
        TauObjective::Upper => (1, -1.0, vec![0.0; rows]),
        TauObjective::Lower => return Err(GradError::Unsupported("DReG is derived for U_K and IWHVI only")),
    };
    let built = build(tape, params, problem, draw, true, rng)?;
    let (ck, c0) = dreg_coefficients(tape.value(built.lw), &log_p, m);
    let mut total = if include_b {
        let c0 = tape.leaf(Tensor::column(c0));
        let b = tape.mul(c0, built.log_tau0)?;
        Some(tape.sum(b)?)
    } else {
        None
    };
    if let Some(bt) = built.beta_tilde {
        let ck = tape.leaf(ck);
        let a = tape.mul(ck, bt)?;
        let a = tape.sum(a)?;
        total = Some(match total {
            Some(t) => tape.add(t, a)?,
            None => a,
        });
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(0.0),
    };
    Ok(tape.scale(total, sign / n_groups as f64)?)
}
