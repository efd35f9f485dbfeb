//! Adaptive embedded Dormand-Prince 5(4) integrator.
//!
//! Plain flat-vector interface: the CR3BP variational systems (6, 42, or
//! 258 components) are integrated with per-block absolute/relative
//! tolerances, tighter on the state than on the variational rows.

use crate::error::{Error, Result};

/// Tolerances by block: components with index below `split` use the
/// `state` pair, the rest the `variational` pair.
#[derive(Debug, Clone, Copy)]
pub struct BlockTol {
    pub split: usize,
    pub state: (f64, f64),
    pub variational: (f64, f64),
}

impl BlockTol {
    pub fn uniform(atol: f64, rtol: f64) -> Self {
        Self {
            split: usize::MAX,
            state: (atol, rtol),
            variational: (atol, rtol),
        }
    }

    #[inline]
    fn pair(&self, i: usize) -> (f64, f64) {
        if i < self.split {
            self.state
        } else {
            self.variational
        }
    }
}

const MAX_STEPS: usize = 2_000_000;

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` (forward), returning the
/// final state. Deterministic: the step sequence depends only on the
/// inputs.
pub fn integrate<F>(f: F, t0: f64, t1: f64, y0: &[f64], tol: BlockTol) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if t1 < t0 {
        return Err(Error::IntegrationFailure(
            "backward integration unsupported".into(),
        ));
    }
    if t1 == t0 {
        return Ok(y0.to_vec());
    }
    let n = y0.len();
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = span * 1e-4;

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0]);

    // Dormand-Prince coefficients.
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    // b - b*: weights of the embedded error estimate.
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    for _ in 0..MAX_STEPS {
        if t + h > t1 {
            h = t1 - t;
        }
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate().take(stage + 1) {
                    let a = A[stage][s];
                    if a != 0.0 {
                        acc += a * ks[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            if stage == 5 {
                y_new.copy_from_slice(&y_stage);
            }
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            f(t + C[stage] * h, &y_stage, &mut tail[0]);
        }

        // Scaled RMS error over the embedded difference.
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                if E[s] != 0.0 {
                    e += E[s] * ks[i];
                }
            }
            e *= h;
            let (atol, rtol) = tol.pair(i);
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            let r = e / sc;
            err += r * r;
        }
        err = (err / n as f64).sqrt();

        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            // FSAL: the last stage derivative is the first of the next step.
            k.swap(0, 6);
            if t >= t1 {
                return Ok(y);
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h.abs() < span * 1e-15 {
            return Err(Error::IntegrationFailure(format!(
                "step size underflow at t = {t} (h = {h})"
            )));
        }
    }
    Err(Error::IntegrationFailure(format!(
        "step budget exhausted at t = {t}"
    )))
}
