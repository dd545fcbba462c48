/// Huber loss between a target `y` and a prediction `yhat`.
pub fn huber_loss(y: f64, yhat: f64, delta: f64) -> f64 {
    let a = (y - yhat).abs();
    if a <= delta {
        0.5 * a * a
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber_loss`] with respect to `yhat`.
pub fn huber_grad(y: f64, yhat: f64, delta: f64) -> f64 {
    let d = yhat - y;
    if d.abs() <= delta {
        d
    } else {
        delta * d.signum()
    }
}
