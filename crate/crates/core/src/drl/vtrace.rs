//! V-trace targets with truncated importance weights.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VtraceOutput {
    /// v[n], the value targets.
    pub vs: Vec<f64>,
    /// ρ[n]·(r[n] + γ·v[n+1] − V(s[n])), the policy-gradient advantages.
    pub pg_advantages: Vec<f64>,
    pub rhos: Vec<f64>,
    pub cs: Vec<f64>,
}

/// Computes V-trace targets for one segment by backward recursion.
///
/// `log_ratios[n]` is `log π(a[n]|s[n]) − log μ(a[n]|s[n])`; `values[n]` is
/// `V(s[n])` for `n < L` and `bootstrap_value` stands for `V(s[L])`.
pub fn vtrace_targets(
    values: &[f64],
    bootstrap_value: f64,
    rewards: &[f64],
    log_ratios: &[f64],
    gamma: f64,
    rho_bar: f64,
    c_bar: f64,
) -> Result<VtraceOutput> {
    let len = values.len();
    if rewards.len() != len || log_ratios.len() != len {
        return Err(Error::Shape(format!(
            "segment arrays disagree: {len} values, {} rewards, {} ratios",
            rewards.len(),
            log_ratios.len()
        )));
    }
    let mut rhos = Vec::with_capacity(len);
    let mut cs = Vec::with_capacity(len);
    for (n, lr) in log_ratios.iter().enumerate() {
        let ratio = lr.exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!("importance ratio at step {n} is {ratio}")));
        }
        rhos.push(rho_bar.min(ratio));
        cs.push(c_bar.min(ratio));
    }

    let mut vs = vec![0.0; len];
    let mut next_value = bootstrap_value;
    // v[n+1] − V(s[n+1])
    let mut carry = 0.0;
    for n in (0..len).rev() {
        let delta = rhos[n] * (rewards[n] + gamma * next_value - values[n]);
        carry = delta + gamma * cs[n] * carry;
        vs[n] = values[n] + carry;
        next_value = values[n];
    }

    let pg_advantages = (0..len)
        .map(|n| {
            let v_next = if n + 1 < len { vs[n + 1] } else { bootstrap_value };
            rhos[n] * (rewards[n] + gamma * v_next - values[n])
        })
        .collect::<Vec<_>>();

    if vs.iter().chain(&pg_advantages).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("V-trace produced a non-finite target".into()));
    }
    Ok(VtraceOutput {
        vs,
        pg_advantages,
        rhos,
        cs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum:
    /// v[s] = V(s) + Σ_{t=s}^{L-1} γ^{t-s} (Π_{i=s}^{t-1} c_i) ρ_t (r_t + γ V(t+1) − V(t)).
    fn direct_sum(values: &[f64], boot: f64, rewards: &[f64], ratios: &[f64], gamma: f64, rho_bar: f64, c_bar: f64) -> Vec<f64> {
        let len = values.len();
        let v_at = |t: usize| if t < len { values[t] } else { boot };
        (0..len)
            .map(|s| {
                let mut total = values[s];
                for t in s..len {
                    let mut prod = 1.0;
                    for i in s..t {
                        prod *= c_bar.min(ratios[i]);
                    }
                    let rho = rho_bar.min(ratios[t]);
                    total += gamma.powi((t - s) as i32) * prod * rho * (rewards[t] + gamma * v_at(t + 1) - values[t]);
                }
                total
            })
            .collect()
    }

    fn random_segment(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, f64, Vec<f64>, Vec<f64>) {
        let values = (0..len).map(|_| rng.random_range(-3.0..1.0)).collect();
        let boot = rng.random_range(-3.0..1.0);
        let rewards = (0..len).map(|_| rng.random_range(-2.0..0.0)).collect();
        let log_ratios = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
        (values, boot, rewards, log_ratios)
    }

    #[test]
    fn recursion_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let (values, boot, rewards, lr) = random_segment(&mut rng, 3);
            let ratios: Vec<f64> = lr.iter().map(|x: &f64| x.exp()).collect();
            let out = vtrace_targets(&values, boot, &rewards, &lr, 0.95, 1.0, 0.8).unwrap();
            let oracle = direct_sum(&values, boot, &rewards, &ratios, 0.95, 1.0, 0.8);
            for (a, b) in out.vs.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn on_policy_gives_n_step_returns() {
        let values = [0.5, -0.2, 1.0, 0.3];
        let rewards = [-1.0, -0.5, 0.0, -0.25];
        let boot = 0.7;
        let gamma = 0.9;
        let out = vtrace_targets(&values, boot, &rewards, &[0.0; 4], gamma, 1.0, 1.0).unwrap();
        assert!(out.rhos.iter().chain(&out.cs).all(|&x| x == 1.0));
        for s in 0..4 {
            let mut ret = 0.0;
            for (t, r) in rewards.iter().enumerate().skip(s) {
                ret += gamma.powi((t - s) as i32) * r;
            }
            ret += gamma.powi((4 - s) as i32) * boot;
            assert_relative_eq!(out.vs[s], ret, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_truncation_returns_values() {
        let values = [0.5, -0.2, 1.0];
        let out = vtrace_targets(&values, 2.0, &[-1.0, -1.0, -1.0], &[0.3, -0.1, 0.0], 0.95, 0.0, 0.0).unwrap();
        assert_eq!(out.vs, values.to_vec());
    }

    #[test]
    fn policy_advantage_uses_next_target() {
        let values = [0.5, -0.2];
        let rewards = [-1.0, -0.5];
        let out = vtrace_targets(&values, 0.0, &rewards, &[0.2, -0.4], 0.9, 1.0, 1.0).unwrap();
        let rho0 = 1.0f64.min(0.2f64.exp());
        assert_relative_eq!(out.pg_advantages[0], rho0 * (rewards[0] + 0.9 * out.vs[1] - values[0]), epsilon = 1e-12);
        let rho1 = (-0.4f64).exp();
        assert_relative_eq!(out.pg_advantages[1], rho1 * (rewards[1] - values[1]), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_ratio_is_an_error() {
        assert!(matches!(
            vtrace_targets(&[0.0], 0.0, &[0.0], &[f64::INFINITY], 0.9, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            vtrace_targets(&[0.0], 0.0, &[0.0], &[f64::NAN], 0.9, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(vtrace_targets(&[0.0, 1.0], 0.0, &[0.0], &[0.0], 0.9, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn truncation_shrinks_each_correction(seed in any::<u64>(), len in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (values, boot, rewards, lr) = random_segment(&mut rng, len);
            let full = vtrace_targets(&values, boot, &rewards, &lr, 0.95, f64::INFINITY, f64::INFINITY).unwrap();
            let cut = vtrace_targets(&values, boot, &rewards, &lr, 0.95, 1.0, 1.0).unwrap();
            for n in 0..len {
                prop_assert!(cut.rhos[n] <= full.rhos[n] && cut.cs[n] <= full.cs[n]);
            }
            let ratios: Vec<f64> = lr.iter().map(|x| x.exp()).collect();
            let oracle = direct_sum(&values, boot, &rewards, &ratios, 0.95, f64::INFINITY, f64::INFINITY);
            for (a, b) in full.vs.iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
