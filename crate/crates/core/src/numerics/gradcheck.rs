//! Central finite-difference verification of taped gradients.

use std::fmt;

use super::{Gradients, NodeId, NumericsError, ParamStore, Tape};

/// Worst coordinate for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat (row-major) index of the worst coordinate.
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Finite-difference step (the first one when several were tried).
    pub step: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    /// Parameters whose worst coordinate exceeds `tolerance`.
    pub fn flagged(&self, tolerance: f64) -> Vec<&ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error >= tolerance).collect()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.flagged(tolerance).is_empty()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "param\tmax_rel_err\tcoord\tanalytic\tnumeric")?;
        for p in &self.params {
            writeln!(
                f,
                "{}\t{:.3e}\t{}\t{:.6e}\t{:.6e}",
                p.name, p.max_rel_error, p.coordinate, p.analytic, p.numeric
            )?;
        }
        write!(f, "max\t{:.3e}", self.max_rel_error())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape's gradient of `loss_fn` against central differences
/// with step `h` on every coordinate of every parameter.
pub fn grad_check<F>(params: &mut ParamStore, loss_fn: F, h: f64) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<NodeId, NumericsError>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    compare_gradients(params, &analytic, loss_fn, h)
}

/// Finite-difference comparison against externally supplied gradients.
pub fn compare_gradients<F>(
    params: &mut ParamStore,
    analytic: &Gradients,
    loss_fn: F,
    h: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<NodeId, NumericsError>,
{
    compare_gradients_steps(params, analytic, loss_fn, &[h])
}

/// Like [`grad_check`], but each coordinate is scored with whichever of
/// `steps` agrees best. Coordinates whose gradient sits near the roundoff
/// floor of the smallest step can then be confirmed with a larger one.
pub fn grad_check_steps<F>(params: &mut ParamStore, loss_fn: F, steps: &[f64]) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<NodeId, NumericsError>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    compare_gradients_steps(params, &analytic, loss_fn, steps)
}

fn compare_gradients_steps<F>(
    params: &mut ParamStore,
    analytic: &Gradients,
    loss_fn: F,
    steps: &[f64],
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<NodeId, NumericsError>,
{
    assert!(!steps.is_empty(), "at least one finite-difference step");
    let eval = |params: &ParamStore| -> Result<f64, NumericsError> {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        tape.scalar(loss)
            .ok_or_else(|| NumericsError::NonScalarLoss(vec![tape.shape(loss).0, tape.shape(loss).1]))
    };

    let mut report = Vec::with_capacity(params.len());
    for id in params.ids().collect::<Vec<_>>() {
        let n = params.value(id).len();
        let mut worst = ParamCheck {
            name: params.name(id).to_string(),
            max_rel_error: 0.0,
            coordinate: 0,
            analytic: analytic.get(id).data()[0],
            numeric: f64::NAN,
        };
        for i in 0..n {
            let orig = params.value(id).data()[i];
            let a = analytic.get(id).data()[i];
            let mut best = (f64::INFINITY, f64::NAN);
            for &h in steps {
                params.value_mut(id).data_mut()[i] = orig + h;
                let plus = eval(params)?;
                params.value_mut(id).data_mut()[i] = orig - h;
                let minus = eval(params)?;
                params.value_mut(id).data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let err = relative_error(a, numeric);
                if err < best.0 {
                    best = (err, numeric);
                }
            }
            if i == 0 || best.0 > worst.max_rel_error {
                worst.max_rel_error = best.0;
                worst.coordinate = i;
                worst.analytic = a;
                worst.numeric = best.1;
            }
        }
        report.push(worst);
    }
    Ok(GradCheckReport {
        step: steps[0],
        params: report,
    })
}
