//! Link-specification checks for a fitted logistic model.
//!
//! A carrier family turns the base fit's probabilities `μ̂` and linear
//! predictors `η̂` into one or two extra regressors. Refitting with those
//! carriers appended and comparing log-likelihoods gives the specification
//! deviance `D = 2 (l_extended - l_base)`: small when the logit link is
//! adequate, large when it is not.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::logistic::{self, clip_prob, FitOptions, LogisticFit};

/// A parametric link family, represented by the carriers it contributes.
pub trait CarrierFamily: Send + Sync {
    /// Canonical registry name.
    fn name(&self) -> &'static str;

    /// Number of carrier columns, 1 or 2.
    fn carrier_count(&self) -> usize;

    /// Writes the carrier values for one observation into `out`
    /// (`out.len() == carrier_count()`). `mu` is already clipped.
    fn evaluate(&self, mu: f64, eta: f64, out: &mut [f64]);

    /// Carrier columns for a whole sample.
    fn carriers(&self, mu: &[f64], eta: &[f64]) -> Result<Vec<Vec<f64>>> {
        if mu.len() != eta.len() {
            return Err(Error::dims(format!(
                "{} probabilities but {} linear predictors",
                mu.len(),
                eta.len()
            )));
        }
        let k = self.carrier_count();
        let mut cols = vec![Vec::with_capacity(mu.len()); k];
        let mut buf = [0.0; 2];
        for (row, (&m, &e)) in mu.iter().zip(eta).enumerate() {
            if !(0.0..=1.0).contains(&m) || !e.is_finite() {
                return Err(Error::InvalidProbability { row, value: m });
            }
            self.evaluate(clip_prob(m), e, &mut buf[..k]);
            for (c, &v) in cols.iter_mut().zip(&buf[..k]) {
                c.push(v);
            }
        }
        Ok(cols)
    }
}

impl std::fmt::Debug for dyn CarrierFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Symmetric/tail-weight pair from the two-parameter generalized logit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pregibon;

impl CarrierFamily for Pregibon {
    fn name(&self) -> &'static str {
        "pregibon"
    }
    fn carrier_count(&self) -> usize {
        2
    }
    fn evaluate(&self, mu: f64, _eta: f64, out: &mut [f64]) {
        let a = mu.ln().powi(2);
        let b = (1.0 - mu).ln().powi(2);
        out[0] = 0.5 * (a - b);
        out[1] = -0.5 * (a + b);
    }
}

/// Separate quadratic tails for positive and negative linear predictors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stukel;

impl CarrierFamily for Stukel {
    fn name(&self) -> &'static str {
        "stukel"
    }
    fn carrier_count(&self) -> usize {
        2
    }
    fn evaluate(&self, _mu: f64, eta: f64, out: &mut [f64]) {
        let q = 0.5 * eta * eta;
        if eta >= 0.0 {
            out[0] = q;
            out[1] = 0.0;
        } else {
            out[0] = 0.0;
            out[1] = -q;
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Prentice;

impl CarrierFamily for Prentice {
    fn name(&self) -> &'static str {
        "prentice"
    }
    fn carrier_count(&self) -> usize {
        2
    }
    fn evaluate(&self, mu: f64, _eta: f64, out: &mut [f64]) {
        out[0] = -mu.ln() / (1.0 - mu);
        out[1] = -(1.0 - mu).ln() / mu;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GuerreroJohnson;

impl CarrierFamily for GuerreroJohnson {
    fn name(&self) -> &'static str {
        "guerrero-johnson"
    }
    fn carrier_count(&self) -> usize {
        1
    }
    fn evaluate(&self, _mu: f64, eta: f64, out: &mut [f64]) {
        out[0] = 0.5 * eta * eta;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Morgan;

impl CarrierFamily for Morgan {
    fn name(&self) -> &'static str {
        "morgan"
    }
    fn carrier_count(&self) -> usize {
        1
    }
    fn evaluate(&self, _mu: f64, eta: f64, out: &mut [f64]) {
        out[0] = eta * eta * eta;
    }
}

/// Asymmetric variant only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Aranda;

impl CarrierFamily for Aranda {
    fn name(&self) -> &'static str {
        "aranda"
    }
    fn carrier_count(&self) -> usize {
        1
    }
    fn evaluate(&self, mu: f64, _eta: f64, out: &mut [f64]) {
        out[0] = 1.0 + (1.0 - mu).ln() / mu;
    }
}

type FamilyCtor = fn() -> Box<dyn CarrierFamily>;

/// Registered families: canonical name, accepted aliases, constructor.
const FAMILIES: &[(&str, &[&str], FamilyCtor)] = &[
    ("pregibon", &["preigbon"], || Box::new(Pregibon)),
    ("stukel", &[], || Box::new(Stukel)),
    ("prentice", &[], || Box::new(Prentice)),
    (
        "guerrero-johnson",
        &["guerrerojohnson", "guerrero_johnson", "gj"],
        || Box::new(GuerreroJohnson),
    ),
    ("morgan", &[], || Box::new(Morgan)),
    ("aranda", &["aranda-asymmetric"], || Box::new(Aranda)),
];

/// Looks a family up by name, case-insensitively.
pub fn carrier_family(name: &str) -> Result<Box<dyn CarrierFamily>> {
    let key = name.trim().to_ascii_lowercase();
    FAMILIES
        .iter()
        .find(|(canon, aliases, _)| *canon == key || aliases.contains(&key.as_str()))
        .map(|(_, _, ctor)| ctor())
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "carrier family",
            name: name.to_string(),
            known: family_names().join(", "),
        })
}

pub fn family_names() -> Vec<&'static str> {
    FAMILIES.iter().map(|(n, _, _)| *n).collect()
}

/// Every registered family, in table order.
pub fn all_families() -> Vec<Box<dyn CarrierFamily>> {
    FAMILIES.iter().map(|(_, _, ctor)| ctor()).collect()
}

#[derive(Debug, Clone)]
pub struct SpecResult {
    /// `max(0, 2 (l_extended - l_base))`.
    pub deviance: f64,
    /// Unclamped `2 (l_extended - l_base)`; zero when the extended fit failed.
    pub raw_gain: f64,
    pub base_fit: LogisticFit,
    /// `None` when the extended fit failed.
    pub extended_fit: Option<LogisticFit>,
    /// The extended fit failed and the deviance was set to 0.
    pub degraded: bool,
}

/// Fits the base model, appends the family's carriers and refits.
///
/// Carrier coefficients are never ridge-penalized. The extended fit starts
/// from `(θ̂_base, 0)`.
pub fn spec_deviance(
    z: &Matrix,
    y: &[f64],
    lambda: f64,
    family: &dyn CarrierFamily,
) -> Result<SpecResult> {
    let base = logistic::fit(z, y, lambda)?;
    let eta = base.linear_predictor(z);
    let carriers = family.carriers(&base.fitted, &eta)?;
    let extended_z = z.with_columns(&carriers)?;

    let mut start = base.coefficients.clone();
    start.extend(std::iter::repeat_n(0.0, carriers.len()));
    let opts = FitOptions {
        unpenalized_tail: carriers.len(),
        start: Some(start),
        ..FitOptions::ridge(lambda)
    };

    Ok(match logistic::fit_with(&extended_z, y, &opts) {
        Ok(ext) => {
            let raw_gain = 2.0 * (ext.log_likelihood - base.log_likelihood);
            SpecResult {
                deviance: raw_gain.max(0.0),
                raw_gain,
                base_fit: base,
                extended_fit: Some(ext),
                degraded: false,
            }
        }
        Err(_) => SpecResult {
            deviance: 0.0,
            raw_gain: 0.0,
            base_fit: base,
            extended_fit: None,
            degraded: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(family: &dyn CarrierFamily, mu: f64, eta: f64) -> Vec<f64> {
        family
            .carriers(&[mu], &[eta])
            .unwrap()
            .into_iter()
            .map(|c| c[0])
            .collect()
    }

    #[test]
    fn carrier_counts_follow_the_table() {
        let counts: Vec<(&str, usize)> = all_families()
            .iter()
            .map(|f| (f.name(), f.carrier_count()))
            .collect();
        assert_eq!(
            counts,
            vec![
                ("pregibon", 2),
                ("stukel", 2),
                ("prentice", 2),
                ("guerrero-johnson", 1),
                ("morgan", 1),
                ("aranda", 1),
            ]
        );
    }

    #[test]
    fn pregibon_at_one_half() {
        let w = one(&Pregibon, 0.5, 0.0);
        assert_eq!(w[0], 0.0);
        assert!((w[1] + 0.4804530139182014).abs() < 1e-12);
    }

    #[test]
    fn stukel_splits_on_sign() {
        assert_eq!(one(&Stukel, sigmoid(2.0), 2.0), vec![2.0, 0.0]);
        assert_eq!(one(&Stukel, sigmoid(-2.0), -2.0), vec![0.0, -2.0]);
    }

    #[test]
    fn single_carrier_values() {
        assert!((one(&Aranda, 0.5, 0.0)[0] + 0.3862943611198906).abs() < 1e-12);
        assert_eq!(one(&GuerreroJohnson, 0.8, 3.0)[0], 4.5);
        assert_eq!(one(&Morgan, 0.2, -2.0)[0], -8.0);
        let p = one(&Prentice, 0.25, 0.0);
        assert!((p[0] - (-(0.25_f64).ln() / 0.75)).abs() < 1e-15);
        assert!((p[1] - (-(0.75_f64).ln() / 0.25)).abs() < 1e-15);
    }

    #[test]
    fn carriers_are_finite_over_clipped_range() {
        for fam in all_families() {
            for mu in [0.0, 1e-300, 1e-12, 0.3, 1.0 - 1e-12, 1.0] {
                let eta = (clip_prob(mu) / (1.0 - clip_prob(mu))).ln();
                for c in fam.carriers(&[mu], &[eta]).unwrap() {
                    assert!(c[0].is_finite(), "{} at {mu}", fam.name());
                }
            }
        }
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        assert!(matches!(
            Pregibon.carriers(&[0.5, 1.5], &[0.0, 0.0]),
            Err(Error::InvalidProbability { row: 1, .. })
        ));
        assert!(matches!(
            Aranda.carriers(&[f64::NAN], &[0.0]),
            Err(Error::InvalidProbability { row: 0, .. })
        ));
    }

    #[test]
    fn registry_lookup_is_case_insensitive() {
        assert_eq!(carrier_family("PREGIBON").unwrap().name(), "pregibon");
        assert_eq!(carrier_family("Preigbon").unwrap().name(), "pregibon");
        assert_eq!(
            carrier_family("Guerrero_Johnson").unwrap().name(),
            "guerrero-johnson"
        );
        assert!(matches!(
            carrier_family("probit"),
            Err(Error::UnknownStrategy { .. })
        ));
    }

    fn sample_design(n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        (Matrix::from_rows(&rows).unwrap(), xs)
    }

    #[test]
    fn nested_gain_is_nonnegative_without_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for rep in 0..10 {
            let (z, xs) = sample_design(400, &mut rng);
            let y: Vec<f64> = xs
                .iter()
                .map(|&x| f64::from(rng.random::<f64>() < sigmoid(0.5 * x + 0.2 * rep as f64)))
                .collect();
            for fam in all_families() {
                let r = spec_deviance(&z, &y, 0.0, fam.as_ref()).unwrap();
                if !r.degraded {
                    assert!(r.raw_gain >= -1e-8, "{}: {}", fam.name(), r.raw_gain);
                }
                assert!(r.deviance >= 0.0);
            }
        }
    }

    #[test]
    fn deviance_is_row_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (z, xs) = sample_design(300, &mut rng);
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| f64::from(rng.random::<f64>() < sigmoid(x * x / 4.0 - 1.0)))
            .collect();
        let mut perm: Vec<usize> = (0..300).collect();
        perm.reverse();
        perm.swap(3, 150);
        let zp = z.select_rows(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        for fam in all_families() {
            let a = spec_deviance(&z, &y, 0.0, fam.as_ref()).unwrap().deviance;
            let b = spec_deviance(&zp, &yp, 0.0, fam.as_ref()).unwrap().deviance;
            assert!(
                (a - b).abs() <= 1e-8 * (1.0 + a.abs()),
                "{}: {a} vs {b}",
                fam.name()
            );
        }
    }

    #[test]
    fn constant_carrier_degrades_to_zero() {
        // Intercept-only base: η̂ is constant, so the Guerrero-Johnson
        // carrier duplicates the intercept and the extended fit is singular.
        let z = Matrix::from_vec(6, 1, vec![1.0; 6]).unwrap();
        let r = spec_deviance(&z, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0], 0.0, &GuerreroJohnson).unwrap();
        assert!(r.degraded);
        assert_eq!(r.deviance, 0.0);
    }
}
