//! Finite-difference helpers for checking hand-written gradients.

/// Step used by [`central_difference`].
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely by [`rel_err`].
///
/// Central differences at [`STEP`] carry roundoff of roughly
/// `f64::EPSILON * |loss| / STEP`, about `1e-10` for losses of order ten,
/// so smaller gradients cannot be resolved relatively.
pub const REL_FLOOR: f64 = 1e-5;

/// `(f(x0 + h) - f(x0 - h)) / 2h` with `h = STEP`.
///
/// `f` receives the probed value and is expected to write it into the
/// parameter under test; it is called once more with `x0` afterwards so
/// the parameter ends up restored.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x0: f64) -> f64 {
    let up = f(x0 + STEP);
    let down = f(x0 - STEP);
    f(x0);
    (up - down) / (2.0 * STEP)
}

/// Symmetric relative error between an analytic and a numeric derivative.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}
