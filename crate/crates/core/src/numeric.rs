//! Small numeric helpers shared by the analytic and estimation code.

/// Neumaier-compensated sum.
///
/// Tail-sum ratios such as `S_k^2 / pi_k` span many orders of magnitude for
/// long queues, so plain left-to-right accumulation loses digits.
pub fn compensated_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Tail sums `S_k = sum_{j >= k} x_j`, same length as `x`.
pub fn tail_sums(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for (k, &v) in x.iter().enumerate().rev() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
        out[k] = sum + carry;
    }
    out
}

/// Upper `alpha/2` quantile of the standard normal distribution.
pub fn normal_upper_quantile(alpha: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::standard();
    std.inverse_cdf(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1.0e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1.0e16);
        assert_eq!(compensated_sum(v), 1000.0);
    }

    #[test]
    fn tail_sums_match_direct() {
        let x = [0.1, 0.2, 0.3, 0.4];
        let s = tail_sums(&x);
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!((s[2] - 0.7).abs() < 1e-15);
        assert_eq!(s[3], 0.4);
    }

    #[test]
    fn normal_quantile_95() {
        assert!((normal_upper_quantile(0.05) - 1.959963984540054).abs() < 1e-9);
    }
}
