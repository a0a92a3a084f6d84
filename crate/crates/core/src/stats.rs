//! Pearson correlation of force against mutual information, with a
//! two-tailed Student-t significance test.

use serde::{Deserialize, Serialize};

use crate::analysis::MetricsSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r_p: f64,
    pub p_value: f64,
    pub n: usize,
    pub alpha: f64,
    /// True when `|r| = 1` and the p-value is exactly zero rather than computed.
    pub exact: bool,
}

impl CorrelationReport {
    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }
}

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 pairs, have {n}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the series is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-tailed p-value of `r` for `n` pairs, and whether it is the exact
/// value `0` returned for `|r| = 1`.
pub fn p_value_two_tailed(r: f64, n: usize) -> Result<(f64, bool)> {
    if n < 3 {
        return Err(Error::InsufficientData(format!("need n >= 3, have {n}")));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::UndefinedCorrelation(format!("r = {r} outside [-1, 1]")));
    }
    if r.abs() == 1.0 {
        return Ok((0.0, true));
    }
    let df = (n - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    // P(|T| > t) = I_{df / (df + t^2)}(df / 2, 1 / 2)
    let p = regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5);
    Ok((p.clamp(0.0, 1.0), false))
}

/// Correlate the paired `(avg_force_N, mi_bits)` records of one or more
/// series, dropping records where either value is missing.
pub fn correlate_series(series: &[&MetricsSeries], alpha: f64) -> Result<CorrelationReport> {
    let (force, mi) = scatter_pairs(series);
    let r_p = pearson_r(&force, &mi)?;
    let (p_value, exact) = p_value_two_tailed(r_p, force.len())?;
    Ok(CorrelationReport {
        r_p,
        p_value,
        n: force.len(),
        alpha,
        exact,
    })
}

/// `(force, mi)` columns of every complete record, in series order.
pub fn scatter_pairs(series: &[&MetricsSeries]) -> (Vec<f64>, Vec<f64>) {
    series
        .iter()
        .flat_map(|s| s.records.iter())
        .filter_map(|r| Some((r.avg_force_n?, r.mi_bits?)))
        .unzip()
}

/// Scatter CSV `avg_force_N,mi_bits`.
pub fn scatter_csv(series: &[&MetricsSeries]) -> String {
    let (f, m) = scatter_pairs(series);
    let mut out = String::from("avg_force_N,mi_bits\n");
    for (a, b) in f.iter().zip(&m) {
        out.push_str(&format!("{a},{b}\n"));
    }
    out
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), accurate to
/// ~1e-15 relative for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via its continued fraction
/// (modified Lentz), using the symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` where
/// the fraction converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::MetricsRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_hand_computed_correlations() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert_relative_eq!(pearson_r(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson_r(&x, &neg).unwrap(), -1.0, epsilon = 1e-15);
        // sum dx dy = 4, sum dx^2 = sum dy^2 = 5
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(r, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn constant_series_is_undefined() {
        assert!(matches!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson_r(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn p_values() {
        assert_eq!(p_value_two_tailed(0.0, 10).unwrap(), (1.0, false));
        assert_eq!(p_value_two_tailed(-1.0, 10).unwrap(), (0.0, true));
        // t = 0.5 sqrt(10 / 0.75) = 1.8257, df = 10
        let (p, _) = p_value_two_tailed(0.5, 12).unwrap();
        assert_relative_eq!(p, 0.097_854_614_257_812_5, max_relative = 1e-5);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(10.0), 362_880f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1 - x)^b
        for &x in &[0.1, 0.37, 0.5, 0.93] {
            assert_relative_eq!(regularized_incomplete_beta(x, 1.0, 1.0), x, epsilon = 1e-14);
            assert_relative_eq!(regularized_incomplete_beta(x, 3.0, 1.0), x.powi(3), epsilon = 1e-14);
            assert_relative_eq!(
                regularized_incomplete_beta(x, 1.0, 4.0),
                1.0 - (1.0 - x).powi(4),
                epsilon = 1e-14
            );
        }
    }

    fn series(force: &[f64], mi: &[Option<f64>]) -> MetricsSeries {
        MetricsSeries {
            exit_ids: vec![],
            records: force
                .iter()
                .zip(mi)
                .enumerate()
                .map(|(i, (&f, &m))| MetricsRecord {
                    t_s: (i + 1) as f64,
                    mi_bits: m,
                    avg_force_n: Some(f),
                    agents_remaining: 100,
                    exits_cumulative: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn correlate_drops_gaps_and_reports() {
        let force = [0.0, 50.0, 100.0, 25.0, 75.0, 10.0];
        let mi: Vec<Option<f64>> = force.iter().map(|f| Some(1.0 - f / 100.0)).collect();
        let rep = correlate_series(&[&series(&force, &mi)], DEFAULT_ALPHA).unwrap();
        assert_relative_eq!(rep.r_p, -1.0, epsilon = 1e-12);
        assert_eq!(rep.n, 6);

        let mut gappy = mi.clone();
        gappy[2] = None;
        let rep = correlate_series(&[&series(&force, &gappy)], DEFAULT_ALPHA).unwrap();
        assert_eq!(rep.n, 5);
        let csv = scatter_csv(&[&series(&force, &gappy)]);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("avg_force_N,mi_bits\n"));

        let flat = series(&[0.0; 6], &mi);
        assert!(matches!(
            correlate_series(&[&flat], DEFAULT_ALPHA),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn affine_invariance_and_symmetry((x, y) in paired(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let Ok(r) = pearson_r(&x, &y) else { return Ok(()); };
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r_aff = pearson_r(&ax, &y).unwrap();
            prop_assert!((r_aff - r).abs() < 1e-12);
            prop_assert!(r_aff.signum() == r.signum() || r.abs() < 1e-12);
            let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson_r(&neg, &y).unwrap() + r).abs() < 1e-12);
            prop_assert_eq!(r, pearson_r(&y, &x).unwrap());
        }

        #[test]
        fn p_decreases_with_abs_r(n in 3usize..200, r1 in 0.0f64..0.98, dr in 0.005f64..0.02) {
            let r2 = r1 + dr;
            let (p1, _) = p_value_two_tailed(r1, n).unwrap();
            let (p2, _) = p_value_two_tailed(-r2, n).unwrap();
            prop_assert!(p2 < p1, "n={} r1={} p1={} r2={} p2={}", n, r1, p1, r2, p2);
        }
    }
}
