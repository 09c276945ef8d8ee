//! Gradient estimators against each other and against closed forms.

use hvi::autodiff::{ParamStore, Tensor};
use hvi::grad::{grad_tau, measure_snr, Estimator, GradEstimate, TauDraw, TauObjective, TauTape};
use hvi::models::{make_snr_task, GaussianHierarchy, HierarchicalModel, LinearTauNet, SNR_DIM, SNR_TAU_VAR};
use hvi::rng::RngStream;

fn draw(model: &GaussianHierarchy, rows: usize, rng: &mut RngStream) -> TauDraw {
    let d = model.dim();
    let mut z = Vec::with_capacity(rows * d);
    let mut psi = Vec::with_capacity(rows * d);
    let mut log_p = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (zz, pp) = model.sample_joint(rng);
        // an explicit "p(x, z)" that differs from q so the IWHVI weights are informative
        log_p.push(zz.iter().map(|v| -0.5 * v * v).sum::<f64>());
        z.extend(zz);
        psi.extend(pp);
    }
    TauDraw {
        z: Tensor::new(rows, d, z),
        psi0: Tensor::new(rows, d, psi),
        log_p,
    }
}

fn store_at(net: &LinearTauNet, a_diag: f64, b: f64) -> ParamStore {
    let d = net.dim;
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        a[i * d + i] = a_diag;
    }
    let mut store = ParamStore::new();
    net.init_from(
        &mut store,
        &hvi::models::LinearGaussianTau {
            a,
            b: vec![b; d],
            var: net.var,
        },
    );
    store
}

/// Paired replicates of both estimators; returns the worst per-parameter
/// `|mean difference| / combined standard error`.
fn worst_z(model: &GaussianHierarchy, store: &ParamStore, net: &LinearTauNet, k: usize, obj: TauObjective, rows: usize, reps: usize) -> f64 {
    let problem = TauTape { q: model, tau: net, k };
    let run = |est: Estimator| {
        measure_snr(
            |_, rng| -> Result<Vec<f64>, hvi::grad::GradError> {
                let d = draw(model, rows, rng);
                Ok(grad_tau(store, problem, &d, obj, est, true, rng)?.flat())
            },
            reps,
            99,
        )
        .unwrap()
    };
    let (a, b) = (run(Estimator::Autodiff), run(Estimator::IwhviDreg));
    let n = reps as f64;
    let mut worst: f64 = 0.0;
    for i in 0..a.means.len() {
        let se = ((a.stds[i].powi(2) + b.stds[i].powi(2)) / n).sqrt();
        if se > 0.0 {
            worst = worst.max((a.means[i] - b.means[i]).abs() / se);
        }
    }
    worst
}

#[test]
fn dreg_matches_autodiff_for_upper_bound() {
    let (model, _) = make_snr_task();
    let net = LinearTauNet::new("tau", SNR_DIM, SNR_TAU_VAR);
    let store = store_at(&net, 0.8, 0.1);
    for k in [0, 1, 4] {
        let z = worst_z(&model, &store, &net, k, TauObjective::Upper, 10, 400);
        // 110 parameters: allow the 3σ rule a little family-wise slack
        assert!(z < 4.0, "K={k}: worst z {z}");
    }
}

#[test]
fn dreg_matches_autodiff_for_iwhvi() {
    let model = GaussianHierarchy::new(vec![0.5; 2], 1.0, 0.5);
    let net = LinearTauNet::new("tau", 2, 0.4);
    let store = store_at(&net, 0.3, 0.2);
    for k in [0, 1, 4] {
        for m in [1, 4] {
            let z = worst_z(&model, &store, &net, k, TauObjective::Iwhvi { m }, 8, 2000);
            assert!(z < 3.5, "K={k} M={m}: worst z {z}");
        }
    }
}

#[test]
fn k0_upper_gradient_matches_closed_form() {
    // 1-D: ψ ~ N(1, 1), z | ψ ~ N(ψ, 1), τ = N(a z + b, v).
    // ∂/∂b E[-log τ(ψ₀ | z)] = -(1 - a - b) / v,  ∂/∂a = -(2 - 3a - b) / v.
    let model = GaussianHierarchy::new(vec![1.0], 1.0, 1.0);
    let v = 0.7;
    let net = LinearTauNet::new("tau", 1, v);
    let (a, b) = (0.3, 0.2);
    let store = store_at(&net, a, b);
    let problem = TauTape { q: &model, tau: &net, k: 0 };
    let mut rng = RngStream::new(11);
    let rows = 400_000;
    let d = draw(&model, rows, &mut rng);
    let want = [-(2.0 - 3.0 * a - b) / v, -(1.0 - a - b) / v];
    for est in [Estimator::Autodiff, Estimator::IwhviDreg] {
        let g: GradEstimate = grad_tau(&store, problem, &d, TauObjective::Upper, est, true, &mut rng).unwrap();
        let flat = g.flat(); // [b, w] in name order
        let (gb, ga) = (flat[0], flat[1]);
        assert!((ga - want[0]).abs() < 0.02, "{est:?} a: {ga} vs {}", want[0]);
        assert!((gb - want[1]).abs() < 0.02, "{est:?} b: {gb} vs {}", want[1]);
    }
}
