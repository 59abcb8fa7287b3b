//! Backward-in-time marching of inventory-indexed ODE systems
//! dθ/dt = rhs(t, θ) from a terminal row at t = T down to t = 0.

/// Time integrator. Euler is the default; Rk4 is for oracle-grade runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

/// Uniform times 0..T with `steps` intervals, computed as T·m/steps so the
/// last node is exactly T.
pub(crate) fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|m| horizon * m as f64 / steps as f64)
        .collect()
}

/// March `terminal` backward over `times`, storing every row. Returns the
/// flat time-major table (times.len() × n). The rhs writes dθ/dt into its
/// output slice and may fail (e.g. a Hamiltonian that does not converge).
pub(crate) fn backward_march<E>(
    times: &[f64],
    terminal: &[f64],
    scheme: Scheme,
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
) -> Result<Vec<f64>, E> {
    let n = terminal.len();
    let rows = times.len();
    let mut table = vec![0.0; rows * n];
    table[(rows - 1) * n..].copy_from_slice(terminal);

    let mut k1 = vec![0.0; n];
    match scheme {
        Scheme::Euler => {
            for m in (1..rows).rev() {
                let dt = times[m] - times[m - 1];
                let (past, current) = table.split_at_mut(m * n);
                let cur = &current[..n];
                rhs(times[m], cur, &mut k1)?;
                let prev = &mut past[(m - 1) * n..];
                for j in 0..n {
                    prev[j] = cur[j] - dt * k1[j];
                }
            }
        }
        Scheme::Rk4 => {
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            for m in (1..rows).rev() {
                let t = times[m];
                let h = times[m - 1] - times[m]; // negative step
                let (past, current) = table.split_at_mut(m * n);
                let cur = &current[..n];
                rhs(t, cur, &mut k1)?;
                for j in 0..n {
                    tmp[j] = cur[j] + 0.5 * h * k1[j];
                }
                rhs(t + 0.5 * h, &tmp, &mut k2)?;
                for j in 0..n {
                    tmp[j] = cur[j] + 0.5 * h * k2[j];
                }
                rhs(t + 0.5 * h, &tmp, &mut k3)?;
                for j in 0..n {
                    tmp[j] = cur[j] + h * k3[j];
                }
                rhs(t + h, &tmp, &mut k4)?;
                let prev = &mut past[(m - 1) * n..];
                for j in 0..n {
                    prev[j] = cur[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
        }
    }
    Ok(table)
}
