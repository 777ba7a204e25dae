use super::Params;

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(tensor index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Relative errors are measured against at least this magnitude, so
/// entries whose true gradient is ~0 are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Perturbs every parameter of `params` by `h = 1e-5 * max(1, |theta|)` and
/// compares the central difference of `loss` with `analytic`.
pub fn grad_check<P, F>(params: &P, analytic: &P, loss: F) -> GradCheckReport
where
    P: Params + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let grads: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|t| t.as_slice_memory_order().expect("contiguous tensor").to_vec())
        .collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in sizes.iter().enumerate() {
        for (ei, &a) in grads[ti].iter().enumerate().take(len) {
            let theta = params.tensors()[ti]
                .as_slice_memory_order()
                .expect("contiguous tensor")[ei];
            let h = 1e-5 * theta.abs().max(1.0);
            let set = |p: &mut P, v: f64| {
                let mut ts = p.tensors_mut();
                ts[ti].as_slice_memory_order_mut().expect("contiguous tensor")[ei] = v;
            };
            set(&mut probe, theta + h);
            let up = loss(&probe);
            set(&mut probe, theta - h);
            let down = loss(&probe);
            set(&mut probe, theta);
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((ti, ei));
            }
        }
    }
    report
}
