//! Bias-corrected Adam over lists of parameter slices.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments, shaped like the parameter slices they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_shapes(lens: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = lens.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        let mut st = AdamState::for_shapes([3]);
        adam_step(&mut [p.as_mut_slice()], &[g.as_slice()], &mut st, &AdamConfig::with_lr(3e-4));
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so the move is lr * g / (|g| + eps)
        for g in [1e-3, 0.5, -7.0, 300.0] {
            let mut p = vec![0.0];
            let mut st = AdamState::for_shapes([1]);
            let cfg = AdamConfig::with_lr(3e-4);
            adam_step(&mut [p.as_mut_slice()], &[&[g]], &mut st, &cfg);
            let expected = -3e-4 * g / (g.abs() + 1e-8);
            assert_relative_eq!(p[0], expected, max_relative = 1e-12);
            assert_relative_eq!(p[0].abs(), 3e-4, max_relative = 1e-4);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, 0.1];
            let mut st = AdamState::for_shapes([2]);
            for _ in 0..5 {
                adam_step(&mut [p.as_mut_slice()], &[&[0.2, -0.4]], &mut st, &AdamConfig::with_lr(0.01));
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![5.0];
        let mut st = AdamState::for_shapes([1]);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            adam_step(&mut [p.as_mut_slice()], &[&g], &mut st, &cfg);
        }
        assert_relative_eq!(p[0], 1.5, epsilon = 1e-3);
    }
}
