use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare an analytic gradient with central finite differences.
///
/// `loss_fn` maps a flat parameter vector to `(loss, analytic gradient)`;
/// the gradient is only read at `params`. Each coordinate is perturbed by
/// `±eps` and compared with
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// The loss is evaluated twice at `params`; differing values mean the
/// function is not deterministic and the check is refused.
pub fn grad_check<F>(loss_fn: F, params: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    grad_check_with_floor(loss_fn, params, eps, 1e-8)
}

/// As [`grad_check`], with the denominator floored at
/// `floor_scale × max |analytic|` instead of `1e-8`. Coordinates far below
/// the largest gradient are then judged on absolute error, which is what
/// central differences can resolve there.
pub fn grad_check_scaled<F>(mut loss_fn: F, params: &[f64], eps: f64, floor_scale: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    let largest = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    grad_check_with_floor(loss_fn, params, eps, (floor_scale * largest).max(1e-8))
}

fn grad_check_with_floor<F>(mut loss_fn: F, params: &[f64], eps: f64, floor: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (first, analytic) = loss_fn(params);
    let (second, _) = loss_fn(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("grad_check", &[params.len()], &[analytic.len()]));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let (plus, _) = loss_fn(&p);
        p[i] = orig - eps;
        let (minus, _) = loss_fn(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if !rel.is_finite() {
            return Err(Error::NonFinite(format!("finite difference at coordinate {i}")));
        }
        if rel > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = [0.5, -1.25, 3.0, 0.75];
        let report = grad_check(
            |v| (0.5 * v.iter().map(|x| x * x).sum::<f64>(), v.to_vec()),
            &p,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let report = grad_check(|v| (v[0] * v[0], vec![v[0]]), &[2.0], 1e-5).unwrap();
        assert!(report.max_rel_error > 0.4);
    }

    #[test]
    fn nondeterminism_is_an_error() {
        let mut calls = 0.0;
        let err = grad_check(
            |v| {
                calls += 1.0;
                (v[0] + calls, vec![1.0])
            },
            &[1.0],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }

    #[test]
    fn scaled_floor_judges_tiny_coordinates_absolutely() {
        // analytic gradient off by 1e-9 on a coordinate of size 1e-9
        let f = |v: &[f64]| (v[0] + 1e-9 * v[1], vec![1.0, 2e-9]);
        let strict = grad_check(f, &[0.0, 0.0], 1e-5).unwrap();
        assert!(strict.max_rel_error > 0.05, "{strict:?}");
        let scaled = grad_check_scaled(f, &[0.0, 0.0], 1e-5, 1e-6).unwrap();
        assert!(scaled.max_rel_error < 2e-3, "{scaled:?}");
        // a wrong large coordinate is still caught
        let bad = grad_check_scaled(|v: &[f64]| (v[0], vec![1.5]), &[0.0], 1e-5, 1e-6).unwrap();
        assert!(bad.max_rel_error > 0.3);
    }
}
