//! Central finite-difference verification of analytic gradients.
//!
//! The loss is the mean squared error between the training-mode output and a
//! fixed target. Each parameter element is perturbed by ±ε and the symmetric
//! difference quotient compared with the backpropagated gradient using
//! `|a − f| / max(|a|, |f|, 1e-5)`. The floor keeps gradients that vanish
//! exactly (a bias feeding batch norm) from turning roundoff into large
//! relative errors.

use std::fmt;

use super::{mse_loss, Mode, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor on the denominator of the relative error.
const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Check at most this many evenly strided elements per group.
    pub max_checks_per_group: Option<usize>,
    /// Also check the gradient with respect to the input.
    pub check_input: bool,
    /// Scale every analytic gradient by 1.1 before comparing. Negative control.
    pub inject_fault: bool,
    /// Elements that miss the tolerance are retried this many times, each
    /// with a step ten times smaller, keeping the best agreement. A step that
    /// straddles a ReLU kink disagrees only at that step; a wrong gradient
    /// disagrees at every step.
    pub kink_retries: u32,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_checks_per_group: None,
            check_input: true,
            inject_fault: false,
            kink_retries: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupReport> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "  {:<24} checked {:>6}  max rel err {:.3e}{}",
                g.name,
                g.checked,
                g.max_rel_error,
                if g.max_rel_error <= self.tolerance { "" } else { "  FAIL" }
            )?;
        }
        write!(
            f,
            "  overall max rel err {:.3e} (tolerance {:.1e}): {}",
            self.max_rel_error(),
            self.tolerance,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn sample_indices(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
        _ => (0..len).collect(),
    }
}

/// Relative error of `analytic` against the central difference of `loss`
/// around its current point, refining the step on failure.
fn element_error(
    analytic: f64,
    options: &GradCheckOptions,
    mut loss: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut eps = options.epsilon;
    let mut best = f64::INFINITY;
    for _ in 0..=options.kink_retries {
        let numeric = (loss(eps)? - loss(-eps)?) / (2.0 * eps);
        best = best.min(relative_error(analytic, numeric));
        if best <= options.tolerance {
            break;
        }
        eps /= 10.0;
    }
    Ok(best)
}

fn loss_of<N: Network>(net: &mut N, input: &Tensor, target: &Tensor) -> Result<f64> {
    let out = net.forward(input, Mode::Train)?;
    Ok(mse_loss(&out, target)?.0)
}

/// Compare every parameter group's analytic gradient with central
/// differences. The network is cloned; the caller's copy is not modified.
pub fn grad_check<N: Network + Clone>(
    net: &N,
    input: &Tensor,
    target: &Tensor,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let eps = options.epsilon;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!(
            "gradient check epsilon must be positive, got {eps}"
        )));
    }
    let mut net = net.clone();
    let fault = if options.inject_fault { 1.1 } else { 1.0 };

    net.zero_grad();
    let out = net.forward(input, Mode::Train)?;
    let (_, grad_out) = mse_loss(&out, target)?;
    let grad_input = net.backward(&grad_out)?;
    let analytic: Vec<(String, Vec<f64>)> = net
        .params()
        .into_iter()
        .map(|p| (p.name, p.grad.iter().map(|g| g * fault).collect()))
        .collect();

    let mut groups = Vec::with_capacity(analytic.len() + 1);
    for (gi, (name, grads)) in analytic.iter().enumerate() {
        let mut report = GroupReport {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            checked: 0,
        };
        for i in sample_indices(grads.len(), options.max_checks_per_group) {
            let original = net.params()[gi].value[i];
            let err = element_error(grads[i], options, |step| {
                net.params()[gi].value[i] = original + step;
                loss_of(&mut net, input, target)
            });
            net.params()[gi].value[i] = original;
            let err = err?;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = i;
            }
            report.checked += 1;
        }
        groups.push(report);
    }

    if options.check_input {
        let mut report = GroupReport {
            name: "input".into(),
            max_rel_error: 0.0,
            worst_index: 0,
            checked: 0,
        };
        let mut probe = input.clone();
        for i in sample_indices(input.len(), options.max_checks_per_group) {
            let original = probe.data()[i];
            let err = element_error(grad_input.data()[i] * fault, options, |step| {
                probe.data_mut()[i] = original + step;
                loss_of(&mut net, &probe, target)
            });
            probe.data_mut()[i] = original;
            let err = err?;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = i;
            }
            report.checked += 1;
        }
        groups.push(report);
    }

    let passed = groups.iter().all(|g| g.max_rel_error <= options.tolerance);
    Ok(GradCheckReport {
        groups,
        tolerance: options.tolerance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, LayerParams, Sequential};
    use crate::rng::SeededRng;

    fn random(shape: [usize; 4], rng: &mut SeededRng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.normal()).collect()).unwrap()
    }

    fn linear_net(rng: &mut SeededRng) -> Sequential {
        let w = random([3, 5, 1, 1], rng);
        let b = (0..3).map(|_| rng.normal()).collect();
        let mut net = Sequential::new();
        net.push(
            "fc",
            Layer::Dense(Dense::new(LayerParams::from_parts(w, b).unwrap()).unwrap()),
        );
        net
    }

    #[test]
    fn linear_layer_is_exact_to_roundoff() {
        let mut rng = SeededRng::new(1);
        let net = linear_net(&mut rng);
        let x = random([4, 5, 1, 1], &mut rng);
        let t = random([4, 3, 1, 1], &mut rng);
        let report = grad_check(&net, &x, &t, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error() < 1e-6, "{report}");
        assert!(report.passed);
        let names: Vec<_> = report.groups.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["fc.weight", "fc.bias", "input"]);
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let mut rng = SeededRng::new(2);
        let net = linear_net(&mut rng);
        let x = random([1, 5, 1, 1], &mut rng);
        let t = random([1, 3, 1, 1], &mut rng);
        let opts = GradCheckOptions {
            epsilon: 0.0,
            ..GradCheckOptions::default()
        };
        assert!(matches!(
            grad_check(&net, &x, &t, &opts),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn injected_fault_is_detected() {
        let mut rng = SeededRng::new(3);
        let net = linear_net(&mut rng);
        let x = random([2, 5, 1, 1], &mut rng);
        let t = random([2, 3, 1, 1], &mut rng);
        let opts = GradCheckOptions {
            inject_fault: true,
            ..GradCheckOptions::default()
        };
        let report = grad_check(&net, &x, &t, &opts).unwrap();
        assert!(!report.passed);
        assert!(report.max_rel_error() > 0.05);
    }

    #[test]
    fn sampling_limits_checks() {
        assert_eq!(sample_indices(10, Some(3)), vec![0, 3, 6]);
        assert_eq!(sample_indices(2, Some(3)), vec![0, 1]);
    }
}
