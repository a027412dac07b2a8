//! Fixed-step classical Runge-Kutta integration.

/// One RK4 step of `dy/dt = rhs(t, y)` for an `N`-dimensional state.
pub fn rk4_step<const N: usize, F>(rhs: &F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let axpy = |base: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *base;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };

    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = rhs(t + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = rhs(t + h, &axpy(y, &k3, h));

    let mut next = *y;
    for i in 0..N {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next
}

/// Integrates from `t0` for `steps` steps of size `h`, calling `observe` with
/// the initial state and after every step.
pub fn integrate<const N: usize, F, O>(rhs: F, t0: f64, y0: [f64; N], h: f64, steps: usize, mut observe: O)
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]),
{
    let mut y = y0;
    observe(t0, &y);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        y = rk4_step(&rhs, t, &y, h);
        observe(t0 + (k + 1) as f64 * h, &y);
    }
}
