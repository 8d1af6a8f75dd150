//! Finite-difference gradient verification.
//!
//! The numeric side only ever runs forward passes, so it stays independent
//! of the reverse-mode code path it is checking. Comparison uses a relative
//! error with an absolute floor: below the floor, central differences are
//! dominated by forward-pass rounding noise and cannot certify anything
//! tighter.

use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Worst relative error between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(DEFAULT_TOL)
}

/// Check d loss / d inputs[i] for every element of every listed tensor.
///
/// `loss_fn` must rebuild the graph from scratch on each call and return a
/// scalar tensor; the inputs are perturbed in place through `set_data`.
pub fn check_gradients<F>(inputs: &[(&str, &Tensor)], mut loss_fn: F, step: f64) -> GradReport
where
    F: FnMut() -> Tensor,
{
    for (name, t) in inputs {
        assert!(t.requires_grad(), "gradcheck input {name} must require grad");
        t.zero_grad();
    }
    let loss = loss_fn();
    loss.backward();
    // A missing gradient means the loss does not depend on that input;
    // the correct analytic gradient is zero everywhere.
    let analytic: Vec<Vec<f64>> = inputs.iter().map(|(_, t)| t.grad().unwrap_or_else(|| vec![0.0; t.len()])).collect();

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (pi, (name, t)) in inputs.iter().enumerate() {
        let base = t.to_vec();
        for i in 0..base.len() {
            let mut probe = base.clone();
            probe[i] = base[i] + step;
            t.set_data(&probe);
            let up = loss_fn().item();
            probe[i] = base[i] - step;
            t.set_data(&probe);
            let down = loss_fn().item();
            t.set_data(&base);
            let numeric = (up - down) / (2.0 * step);
            let e = rel_err(analytic[pi][i], numeric);
            report.checked += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst_param = name.to_string();
                report.worst_index = i;
                report.analytic = analytic[pi][i];
                report.numeric = numeric;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn matmul_gradient_vs_central_differences() {
        let mut rng = Rng::new(101);
        let a = Tensor::param_randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::param_randn(&[4, 2], 1.0, &mut rng);
        let report = check_gradients(&[("a", &a), ("b", &b)], || a.matmul(&b).sum_all(), DEFAULT_STEP);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn softmax_jacobian_vs_central_differences() {
        let mut rng = Rng::new(102);
        let x = Tensor::param_randn(&[5], 1.0, &mut rng);
        // Random linear functional of the softmax output exercises the full
        // Jacobian structure.
        let w = Tensor::randn(&[5], &mut rng);
        let report = check_gradients(&[("x", &x)], || x.softmax(0).mul(&w).sum_all(), DEFAULT_STEP);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn every_primitive_op_passes_fd() {
        let mut rng = Rng::new(103);
        let a = Tensor::param_randn(&[2, 3, 4], 0.8, &mut rng);
        let b = Tensor::param_randn(&[3, 4], 0.8, &mut rng);
        let cases: Vec<(&str, Box<dyn Fn() -> Tensor>)> = vec![
            ("add", Box::new({ let (a, b) = (a.clone(), b.clone()); move || a.add(&b).sum_all() })),
            ("sub", Box::new({ let (a, b) = (a.clone(), b.clone()); move || a.sub(&b).mul(&a).sum_all() })),
            ("mul", Box::new({ let (a, b) = (a.clone(), b.clone()); move || a.mul(&b).sum_all() })),
            ("div", Box::new({ let (a, b) = (a.clone(), b.clone()); move || a.div(&b.add_scalar(5.0)).sum_all() })),
            ("gelu", Box::new({ let a = a.clone(); move || a.gelu().sum_all() })),
            ("sqrt", Box::new({ let a = a.clone(); move || a.mul(&a).add_scalar(0.1).sqrt().sum_all() })),
            ("abs", Box::new({ let a = a.clone(); move || a.add_scalar(0.31).abs().sum_all() })),
            ("transpose", Box::new({ let a = a.clone(); move || a.transpose(0, 2).mul(&a.transpose(0, 2)).sum_all() })),
            ("reshape", Box::new({ let a = a.clone(); move || a.reshape(&[6, 4]).mul(&a.reshape(&[6, 4])).sum_all() })),
            ("concat", Box::new({ let (a, b) = (a.clone(), b.clone()); move || {
                let b3 = b.reshape(&[1, 3, 4]).broadcast_to(&[2, 3, 4]);
                Tensor::concat(&[&a, &b3], 2).mul_scalar(0.5).mul(&Tensor::concat(&[&a, &b3], 2)).sum_all()
            } })),
            ("gather", Box::new({ let a = a.clone(); move || a.gather(1, &[2, 0, 2]).mul(&a.gather(1, &[2, 0, 2])).sum_all() })),
            ("layer_norm", Box::new({ let a = a.clone(); move || a.layer_norm(1e-6).mul(&a).sum_all() })),
            ("softmax", Box::new({ let a = a.clone(); move || a.softmax(2).mul(&a).sum_all() })),
            ("mean_axis", Box::new({ let a = a.clone(); move || a.mean_axis(1, false).mul(&a.mean_axis(1, false)).sum_all() })),
            ("broadcast", Box::new({ let b = b.clone(); move || b.broadcast_to(&[2, 3, 4]).mul(&b.broadcast_to(&[2, 3, 4])).sum_all() })),
            ("matmul_batched", Box::new({ let a = a.clone(); move || a.matmul(&a.transpose(1, 2)).sum_all() })),
        ];
        for (name, f) in cases {
            a.zero_grad();
            b.zero_grad();
            let report = check_gradients(&[("a", &a), ("b", &b)], &f, DEFAULT_STEP);
            assert!(report.passes(DEFAULT_TOL), "op {name}: {report:?}");
        }
    }
}
