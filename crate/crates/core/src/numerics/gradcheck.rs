use super::{NumericsError, Tape, Tensor, Var};

/// Compares the tape gradient of `f` at `x` with central finite differences.
///
/// `f` records a scalar on the supplied tape given the leaf for `x`. The
/// return value is `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericsError>,
{
    if !(step > 0.0) {
        return Err(NumericsError::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut tape = Tape::new();
    let leaf = tape.param(x.clone());
    let out = f(&mut tape, leaf)?;
    check_finite(tape.value(out).item()?)?;
    tape.backward(out)?;
    let analytic = tape.grad(leaf).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |probe: &Tensor| -> Result<f64, NumericsError> {
        let mut t = Tape::new();
        let v = t.constant(probe.clone());
        let o = f(&mut t, v)?;
        check_finite(t.value(o).item()?)
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for (i, &a) in analytic.iter().enumerate() {
        check_finite(a)?;
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

fn check_finite(v: f64) -> Result<f64, NumericsError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFinite(format!("value {v}")))
    }
}
