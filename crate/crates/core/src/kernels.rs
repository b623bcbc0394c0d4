//! Stationary one-dimensional correlation functions and the product-form
//! covariance built from them.
//!
//! Every kernel here depends on the distance only through `h / theta`, and
//! equals one at zero distance.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Largest supported half-integer order; `(2p)!` must stay finite in f64.
pub const MAX_MATERN_ORDER: u32 = 50;

/// A stationary correlation family.
///
/// `Matern { p }` has smoothness `nu = p + 1/2`; `p = 2` is the Matérn 5/2
/// kernel used by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSpec {
    Gaussian,
    Matern { p: u32 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Matern { p: 2 }
    }
}

impl KernelSpec {
    pub fn matern52() -> Self {
        KernelSpec::Matern { p: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Matern { p } if p > MAX_MATERN_ORDER => domain(format!(
                "Matérn order p = {p} exceeds the supported maximum {MAX_MATERN_ORDER}"
            )),
            _ => Ok(()),
        }
    }

    /// Correlation at scaled distance `r = h / theta`, `r >= 0`.
    ///
    /// No argument checking; callers in hot loops validate once up front.
    #[inline]
    pub fn correlation_scaled(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Gaussian => (-0.5 * r * r).exp(),
            KernelSpec::Matern { p } => matern_half_integer(p, r),
        }
    }

    /// Smoothness `nu`, if the family has one.
    pub fn nu(&self) -> Option<f64> {
        match *self {
            KernelSpec::Gaussian => None,
            KernelSpec::Matern { p } => Some(p as f64 + 0.5),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Gaussian => write!(f, "gaussian"),
            KernelSpec::Matern { p } => write!(f, "matern{}_2", 2 * p + 1),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Accepts `gaussian`/`gauss`, `matern<k>_2` for odd `k`, `matern52`,
    /// or `matern:p=<p>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let spec = match s.as_str() {
            "gaussian" | "gauss" => KernelSpec::Gaussian,
            "matern52" => KernelSpec::Matern { p: 2 },
            "matern32" => KernelSpec::Matern { p: 1 },
            "exponential" | "matern12" => KernelSpec::Matern { p: 0 },
            other => {
                if let Some(p) = other.strip_prefix("matern:p=") {
                    let p = p
                        .parse::<u32>()
                        .map_err(|_| Error::Parse(format!("bad Matérn order in {s:?}")))?;
                    KernelSpec::Matern { p }
                } else if let Some(k) = other
                    .strip_prefix("matern")
                    .and_then(|rest| rest.strip_suffix("_2"))
                {
                    let k = k
                        .parse::<u32>()
                        .map_err(|_| Error::Parse(format!("bad kernel name {s:?}")))?;
                    if k % 2 == 0 {
                        return Err(Error::Parse(format!(
                            "Matérn smoothness must be a half-integer, got {k}/2"
                        )));
                    }
                    KernelSpec::Matern { p: (k - 1) / 2 }
                } else {
                    return Err(Error::Parse(format!("unknown kernel {s:?}")));
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Half-integer Matérn correlation, `nu = p + 1/2`, at scaled distance `r`.
///
/// exp(-sqrt(2 nu) r) * p!/(2p)! * sum_{i=0..p} (p+i)!/(i! (p-i)!) (sqrt(8 nu) r)^(p-i)
fn matern_half_integer(p: u32, r: f64) -> f64 {
    let nu = p as f64 + 0.5;
    (-(2.0 * nu).sqrt() * r).exp() * matern_polynomial(p, (8.0 * nu).sqrt() * r)
}

/// `p!/(2p)! * sum_i (p+i)!/(i! (p-i)!) z^(p-i)`, the factor multiplying the
/// exponential. Coefficients follow `c_{i+1} = c_i (p+i+1)(p-i)/(i+1)`.
fn matern_polynomial(p: u32, z: f64) -> f64 {
    let norm = factorial(p) / factorial(2 * p);
    let mut coef = 1.0;
    let mut poly = 0.0;
    for i in 0..=p {
        poly = poly * z + coef;
        coef *= ((p + i + 1) * (p - i)) as f64 / (i + 1) as f64;
    }
    norm * poly
}

fn check_args(h: f64, theta: f64) -> Result<()> {
    if !theta.is_finite() || theta <= 0.0 {
        return domain(format!("range parameter must be positive and finite, got {theta}"));
    }
    if !(h >= 0.0) || h.is_infinite() {
        return domain(format!("distance must be finite and non-negative, got {h}"));
    }
    Ok(())
}

/// One-dimensional correlation `K(h)` for range parameter `theta`.
pub fn corr_1d(spec: KernelSpec, h: f64, theta: f64) -> Result<f64> {
    spec.validate()?;
    check_args(h, theta)?;
    Ok(spec.correlation_scaled(h / theta))
}

/// Closed-form Matérn 5/2 correlation.
pub fn corr_1d_closed_matern52(h: f64, theta: f64) -> Result<f64> {
    check_args(h, theta)?;
    let r = h / theta;
    let s5 = 5f64.sqrt();
    Ok((1.0 + s5 * r + 5.0 / 3.0 * r * r) * (-s5 * r).exp())
}

/// Product-form covariance `sigma2 * prod_l K(|xi_l - xj_l|; theta_l)`.
pub fn cov_pair(
    spec: KernelSpec,
    xi: &[f64],
    xj: &[f64],
    thetas: &[f64],
    sigma2: f64,
) -> Result<f64> {
    spec.validate()?;
    if xi.len() != xj.len() || xi.len() != thetas.len() {
        return domain(format!(
            "dimension mismatch: points have {} and {} coordinates, {} ranges given",
            xi.len(),
            xj.len(),
            thetas.len()
        ));
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return domain(format!("variance must be positive, got {sigma2}"));
    }
    let mut prod = 1.0;
    for ((a, b), &theta) in xi.iter().zip(xj).zip(thetas) {
        let h = (a - b).abs();
        check_args(h, theta)?;
        prod *= spec.correlation_scaled(h / theta);
    }
    Ok(sigma2 * prod)
}

/// Correlation without validation; `thetas` must be positive.
#[inline]
pub(crate) fn correlation_product(spec: KernelSpec, xi: &[f64], xj: &[f64], thetas: &[f64]) -> f64 {
    match spec {
        // One exponential for the whole product.
        KernelSpec::Matern { p } => {
            let nu = p as f64 + 0.5;
            let scale = (8.0 * nu).sqrt();
            let mut r_sum = 0.0;
            let mut poly = 1.0;
            for ((a, b), t) in xi.iter().zip(xj).zip(thetas) {
                let r = (a - b).abs() / t;
                r_sum += r;
                poly *= matern_polynomial(p, scale * r);
            }
            (-(2.0 * nu).sqrt() * r_sum).exp() * poly
        }
        KernelSpec::Gaussian => xi
            .iter()
            .zip(xj)
            .zip(thetas)
            .map(|((a, b), t)| spec.correlation_scaled((a - b).abs() / t))
            .product(),
    }
}

/// Correlation curves over an evenly spaced distance grid, one column per range.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCurve {
    pub thetas: Vec<f64>,
    pub h: Vec<f64>,
    /// `values[k][j]` is the correlation at `h[k]` for `thetas[j]`.
    pub values: Vec<Vec<f64>>,
}

pub fn kernel_curve(
    spec: KernelSpec,
    theta_list: &[f64],
    h_max: f64,
    n_points: usize,
) -> Result<KernelCurve> {
    if n_points < 2 {
        return domain(format!("kernel curve needs at least 2 points, got {n_points}"));
    }
    if !h_max.is_finite() || h_max <= 0.0 {
        return domain(format!("h_max must be positive, got {h_max}"));
    }
    if theta_list.is_empty() {
        return domain("kernel curve needs at least one range parameter");
    }
    let step = h_max / (n_points - 1) as f64;
    let h: Vec<f64> = (0..n_points)
        .map(|k| if k + 1 == n_points { h_max } else { k as f64 * step })
        .collect();
    let values = h
        .iter()
        .map(|&hk| {
            theta_list
                .iter()
                .map(|&t| corr_1d(spec, hk, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelCurve {
        thetas: theta_list.to_vec(),
        h,
        values,
    })
}

impl KernelCurve {
    /// CSV with header `h,theta_<v1>,...` and full-precision values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["h".to_string()];
        header.extend(self.thetas.iter().map(|t| format!("theta_{t}")));
        w.write_record(&header)?;
        for (hk, row) in self.h.iter().zip(&self.values) {
            let mut rec = vec![hk.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("h") {
            return Err(Error::Parse("kernel curve CSV must start with column h".into()));
        }
        let thetas = header
            .iter()
            .skip(1)
            .map(|name| {
                name.strip_prefix("theta_")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad kernel curve column {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != thetas.len() + 1 {
                return Err(Error::Parse("ragged kernel curve row".into()));
            }
            h.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        Ok(KernelCurve { thetas, h, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // (1 + sqrt5 + 5/3) e^{-sqrt5}, evaluated with mpmath at 50 digits.
    const MATERN52_AT_ONE: f64 = 0.523_994_108_831_820_3;

    #[test]
    fn gaussian_values() {
        assert_eq!(corr_1d(KernelSpec::Gaussian, 0.0, 1.0).unwrap(), 1.0);
        for theta in [0.1, 1.0, 7.5] {
            let v = corr_1d(KernelSpec::Gaussian, theta, theta).unwrap();
            assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn matern52_at_unit_distance() {
        let general = corr_1d(KernelSpec::matern52(), 1.0, 1.0).unwrap();
        let closed = corr_1d_closed_matern52(1.0, 1.0).unwrap();
        assert!((general - MATERN52_AT_ONE).abs() < 1e-15);
        assert!((closed - MATERN52_AT_ONE).abs() < 1e-15);
        assert_eq!(corr_1d_closed_matern52(0.0, 3.0).unwrap(), 1.0);
        assert!(corr_1d_closed_matern52(100.0, 1.0).unwrap() < 1e-30);
    }

    #[test]
    fn low_orders_match_textbook_forms() {
        for r in [0.0, 0.3, 1.0, 2.5, 7.0] {
            let exp = (-r as f64).exp();
            assert!((corr_1d(KernelSpec::Matern { p: 0 }, r, 1.0).unwrap() - exp).abs() < 1e-15);
            let s3 = 3f64.sqrt();
            let m32 = (1.0 + s3 * r) * (-s3 * r).exp();
            assert!((corr_1d(KernelSpec::Matern { p: 1 }, r, 1.0).unwrap() - m32).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(corr_1d(KernelSpec::Gaussian, 1.0, 0.0).is_err());
        assert!(corr_1d(KernelSpec::Gaussian, 1.0, f64::NAN).is_err());
        assert!(corr_1d(KernelSpec::Gaussian, -0.1, 1.0).is_err());
        assert!(corr_1d_closed_matern52(-1.0, 1.0).is_err());
        assert!(corr_1d(KernelSpec::Matern { p: 51 }, 1.0, 1.0).is_err());
        assert!(cov_pair(KernelSpec::Gaussian, &[0.0, 1.0], &[0.0], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn cov_pair_examples() {
        let x = [0.2, 0.5, 0.9];
        let v = cov_pair(KernelSpec::matern52(), &x, &x, &[0.3, 1.0, 2.0], 0.26).unwrap();
        assert_eq!(v, 0.26);

        let v = cov_pair(KernelSpec::Gaussian, &[0.0, 0.0], &[0.4, 1.5], &[0.4, 1.5], 1.0).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);

        let v = cov_pair(
            KernelSpec::matern52(),
            &[0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            2.0,
        )
        .unwrap();
        assert!((v - 2.0 * MATERN52_AT_ONE).abs() < 1e-14);
    }

    #[test]
    fn curve_shape_and_ordering() {
        let c = kernel_curve(KernelSpec::matern52(), &[0.5, 1.0, 2.0], 5.0, 6).unwrap();
        assert_eq!(c.values.len(), 6);
        assert!(c.values[0].iter().all(|&v| v == 1.0));
        for row in &c.values[1..] {
            assert!(row[0] < row[1] && row[1] < row[2]);
        }
        for j in 0..3 {
            for k in 1..6 {
                assert!(c.values[k][j] <= c.values[k - 1][j]);
            }
        }

        let g = kernel_curve(KernelSpec::Gaussian, &[1.0], 1.0, 2).unwrap();
        assert_eq!(g.h, vec![0.0, 1.0]);
        assert_eq!(g.values[0][0], 1.0);
        assert!((g.values[1][0] - (-0.5f64).exp()).abs() < 1e-15);

        assert!(kernel_curve(KernelSpec::Gaussian, &[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = kernel_curve(KernelSpec::matern52(), &[0.5, 2.0], 3.0, 7).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("h,theta_0.5,theta_2\n"));
        assert_eq!(KernelCurve::read_csv(&buf[..]).unwrap(), c);
    }

    #[test]
    fn kernel_names() {
        for spec in [KernelSpec::Gaussian, KernelSpec::Matern { p: 0 }, KernelSpec::matern52()] {
            assert_eq!(spec.to_string().parse::<KernelSpec>().unwrap(), spec);
        }
        assert_eq!("matern52".parse::<KernelSpec>().unwrap(), KernelSpec::matern52());
        assert_eq!("matern:p=4".parse::<KernelSpec>().unwrap(), KernelSpec::Matern { p: 4 });
        assert!("matern4_2".parse::<KernelSpec>().is_err());
        assert!("cubic".parse::<KernelSpec>().is_err());
    }

    fn any_spec() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            Just(KernelSpec::Gaussian),
            (0u32..6).prop_map(|p| KernelSpec::Matern { p }),
        ]
    }

    proptest! {
        #[test]
        fn unit_at_zero_and_bounded(spec in any_spec(), theta in 1e-3f64..1e2, h in 0.0f64..5.0) {
            prop_assert_eq!(corr_1d(spec, 0.0, theta).unwrap(), 1.0);
            let v = corr_1d(spec, h * theta, theta).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
        }

        #[test]
        fn strictly_decreasing(spec in any_spec(), a in 0.0f64..6.0, gap in 1e-3f64..3.0) {
            let k1 = corr_1d(spec, a, 1.0).unwrap();
            let k2 = corr_1d(spec, a + gap, 1.0).unwrap();
            prop_assert!(k1 > k2);
        }

        #[test]
        fn depends_only_on_scaled_distance(spec in any_spec(), h in 0.0f64..10.0,
                                           theta in 0.05f64..5.0, c in 0.01f64..100.0) {
            let base = corr_1d(spec, h, theta).unwrap();
            let scaled = corr_1d(spec, c * h, c * theta).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1e-300) + 1e-300);
        }

        #[test]
        fn general_matches_closed_form(r in 0.0f64..10.0, theta in 1e-2f64..1e2) {
            let h = r * theta;
            let g = corr_1d(KernelSpec::matern52(), h, theta).unwrap();
            let c = corr_1d_closed_matern52(h, theta).unwrap();
            prop_assert!((g - c).abs() <= 1e-12 * c.abs());
        }

        #[test]
        fn covariance_symmetric(spec in any_spec(),
                                xi in proptest::collection::vec(0.0f64..1.0, 3),
                                xj in proptest::collection::vec(0.0f64..1.0, 3),
                                thetas in proptest::collection::vec(0.05f64..3.0, 3),
                                s2 in 0.01f64..2.0) {
            let a = cov_pair(spec, &xi, &xj, &thetas, s2).unwrap();
            let b = cov_pair(spec, &xj, &xi, &thetas, s2).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
