//! The `G(j, k)` recursion that generates multi-step Jacobians of a periodic
//! orbit, cosine products, and the identities and inequalities it satisfies.
//!
//! Indices are signed and wrap cyclically over the period: `s_k` and `α_k`
//! are read at `k mod N`, so `G(0, N)` runs over the whole unrolled period
//! with `α_N = α_0`.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::GRAZING_TOL;

/// Segment lengths and angles of incidence of one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GContext {
    s: Vec<f64>,
    alpha: Vec<f64>,
    #[serde(skip)]
    cos: Vec<f64>,
}

impl GContext {
    pub fn new(s: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if s.len() != alpha.len() {
            return Err(Error::Domain(format!(
                "{} segment lengths for {} angles",
                s.len(),
                alpha.len()
            )));
        }
        if s.len() < 2 {
            return Err(Error::Domain(format!("period {} < 2", s.len())));
        }
        if let Some(x) = s.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Domain(format!("segment length {x} is not positive")));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.abs() < FRAC_PI_2 - GRAZING_TOL)) {
            return Err(Error::Domain(format!("angle {a} is grazing or invalid")));
        }
        let cos = alpha.iter().map(|a| a.cos()).collect();
        Ok(Self { s, alpha, cos })
    }

    /// Period `N`.
    pub fn period(&self) -> usize {
        self.s.len()
    }

    fn idx(&self, k: i64) -> usize {
        k.rem_euclid(self.s.len() as i64) as usize
    }

    pub fn s(&self, k: i64) -> f64 {
        self.s[self.idx(k)]
    }

    pub fn alpha(&self, k: i64) -> f64 {
        self.alpha[self.idx(k)]
    }

    pub fn cos_alpha(&self, k: i64) -> f64 {
        self.cos[self.idx(k)]
    }

    fn forward_coeff(&self, k: i64) -> f64 {
        2.0 * self.s(k - 1) + self.cos_alpha(k - 1) + self.cos_alpha(k)
    }

    /// `G(j, k)` for `k ≥ j − 1`.
    pub fn g(&self, j: i64, k: i64) -> Result<f64> {
        if k < j - 1 {
            return Err(Error::Domain(format!("G({j}, {k}) needs k >= j - 1")));
        }
        Ok(*self.g_row(j, k).last().expect("row is never empty"))
    }

    /// `[G(j, j−1), G(j, j), …, G(j, k_max)]`, evaluated iteratively.
    pub fn g_row(&self, j: i64, k_max: i64) -> Vec<f64> {
        let len = (k_max - j + 2).max(1) as usize;
        let mut row = Vec::with_capacity(len);
        row.push(0.0);
        if len > 1 {
            row.push(1.0);
        }
        for k in j + 1..=k_max {
            let n = row.len();
            let c = self.cos_alpha(k - 1);
            row.push(self.forward_coeff(k) * row[n - 1] - c * c * row[n - 2]);
        }
        row
    }

    /// `G(j, k)` through the recursion in the first index, running from
    /// `G(k+1, k) = 0`, `G(k, k) = 1` down to `j`.
    pub fn g_flipped(&self, j: i64, k: i64) -> Result<f64> {
        if k < j - 1 {
            return Err(Error::Domain(format!("G({j}, {k}) needs k >= j - 1")));
        }
        let (mut next, mut cur) = (0.0, 1.0);
        if j == k + 1 {
            return Ok(0.0);
        }
        for i in (j..k).rev() {
            let c = self.cos_alpha(i + 1);
            let g = (2.0 * self.s(i) + self.cos_alpha(i) + c) * cur - c * c * next;
            next = cur;
            cur = g;
        }
        Ok(cur)
    }

    /// `cos α_j ⋯ cos α_{k−1}`; the empty product is 1.
    pub fn pcos(&self, j: i64, k: i64) -> f64 {
        (j..k).map(|i| self.cos_alpha(i)).product()
    }

    /// `(−1)^{N+1} pcos(j, k)`; the sign depends on the full period `N`.
    pub fn p_tilde(&self, j: i64, k: i64) -> f64 {
        let sign = if self.period() % 2 == 1 { 1.0 } else { -1.0 };
        sign * self.pcos(j, k)
    }

    /// `G(j, k)` and its four signed combinations.
    pub fn variants(&self, j: i64, k: i64) -> Result<GVariants> {
        if k < j {
            return Err(Error::Domain(format!("variants({j}, {k}) need k >= j")));
        }
        let g = self.g(j, k)?;
        let left = self.cos_alpha(j) * self.g(j + 1, k)?;
        let right = self.cos_alpha(k) * self.g(j, k - 1)?;
        Ok(GVariants {
            g,
            minus_left: g - left,
            minus_right: g - right,
            plus_left: g + left,
            plus_right: g + right,
            p_tilde: self.p_tilde(j, k),
        })
    }

    /// `D = G(0,N) − cos²α_0 G(1,N−1) + 2 p̃(0,N)`.
    pub fn d(&self) -> f64 {
        let n = self.period() as i64;
        let c0 = self.cos_alpha(0);
        self.g(0, n).unwrap() - c0 * c0 * self.g(1, n - 1).unwrap() + 2.0 * self.p_tilde(0, n)
    }

    /// Largest additive term of `D`, for scaled degeneracy tests.
    pub fn d_scale(&self) -> f64 {
        let n = self.period() as i64;
        let c0 = self.cos_alpha(0);
        let terms = [
            self.g(0, n).unwrap(),
            c0 * c0 * self.g(1, n - 1).unwrap(),
            2.0 * self.pcos(0, n),
        ];
        terms.iter().fold(0.0, |m, t| m.max(t.abs()))
    }

    /// `D` expanded through one step of the recursion:
    /// `2 s_{N−1} G(0,N−1) + cos α_0 G⁻ₗ(0,N−1) + cos α_{N−1} G⁻ᵣ(0,N−1) + 2 p̃(0,N)`.
    pub fn d_expanded(&self) -> f64 {
        let n = self.period() as i64;
        let v = self.variants(0, n - 1).unwrap();
        2.0 * self.s(n - 1) * v.g
            + self.cos_alpha(0) * v.minus_left
            + self.cos_alpha(n - 1) * v.minus_right
            + 2.0 * self.p_tilde(0, n)
    }

    /// Residual of `G(j,k−1)G(j+1,k) − G(j,k)G(j+1,k−1) = pcos(j+1,k)²`.
    ///
    /// At `k = j` the identity degenerates to `0·1 − 1·0`; the out-of-range
    /// `G(j+1, j−1)` and the reversed product are taken as 0 there.
    pub fn check_det_identity(&self, j: i64, k: i64) -> Result<Residual> {
        if k < j {
            return Err(Error::Domain(format!(
                "det identity needs j <= k, got ({j}, {k})"
            )));
        }
        if k == j {
            return Ok(Residual::new(0.0, &[]));
        }
        let a = self.g(j, k - 1)? * self.g(j + 1, k)?;
        let b = self.g(j, k)? * self.g(j + 1, k - 1)?;
        let p = self.pcos(j + 1, k).powi(2);
        Ok(Residual::new(a - b - p, &[a, b, p]))
    }

    /// Residual of `G(i,k) = G(i,j)G(j,k) − cos²α_j G(i,j−1)G(j+1,k)`.
    pub fn check_partition_identity(&self, i: i64, j: i64, k: i64) -> Result<Residual> {
        if !(i <= j && j <= k) {
            return Err(Error::Domain(format!(
                "partition identity needs i <= j <= k, got ({i}, {j}, {k})"
            )));
        }
        let c = self.cos_alpha(j);
        let lhs = self.g(i, k)?;
        let a = self.g(i, j)? * self.g(j, k)?;
        let b = c * c * self.g(i, j - 1)? * self.g(j + 1, k)?;
        Ok(Residual::new(lhs - (a - b), &[lhs, a, b]))
    }

    /// The six bounds on `G(j, k)`, `j < k`.
    ///
    /// The upper bounds of (a) and (d) are equalities at `k = j + 1` and are
    /// compared non-strictly there; everything else is strict.
    pub fn check_inequalities(&self, j: i64, k: i64) -> Result<[bool; 6]> {
        if k <= j {
            return Err(Error::Domain(format!(
                "inequalities need j < k, got ({j}, {k})"
            )));
        }
        let g = self.g(j, k)?;
        let g_prev = self.g(j, k - 1)?;
        let g_next = self.g(j + 1, k)?;
        let base = k == j + 1;
        let upper = |bound: f64| if base { g <= bound } else { g < bound };

        let (sk, ck1, ck) = (self.s(k - 1), self.cos_alpha(k - 1), self.cos_alpha(k));
        let (sj, cj, cj1) = (self.s(j), self.cos_alpha(j), self.cos_alpha(j + 1));
        Ok([
            (2.0 * sk + ck) * g_prev < g && upper((2.0 * sk + ck1 + ck) * g_prev),
            ck * g_prev < g,
            g > self.pcos(j + 1, k + 1),
            (2.0 * sj + cj) * g_next < g && upper((2.0 * sj + cj + cj1) * g_next),
            cj * g_next < g,
            g > self.pcos(j, k),
        ])
    }
}

/// `G(j,k)` with the signed combinations `G ∓ cos α_j G(j+1,k)` (left) and
/// `G ∓ cos α_k G(j,k−1)` (right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GVariants {
    pub g: f64,
    pub minus_left: f64,
    pub minus_right: f64,
    pub plus_left: f64,
    pub plus_right: f64,
    pub p_tilde: f64,
}

/// An identity residual together with the magnitude it is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    fn new(value: f64, terms: &[f64]) -> Self {
        let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        Self { value, scale }
    }

    pub fn relative(&self) -> f64 {
        self.value.abs() / self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn axial() -> GContext {
        GContext::new(vec![2.0, 2.0], vec![0.0, 0.0]).unwrap()
    }

    fn ctx_strategy() -> impl Strategy<Value = GContext> {
        (2usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.1f64..10.0, n),
                proptest::collection::vec(-1.4f64..1.4, n),
            )
                .prop_map(|(s, a)| GContext::new(s, a).unwrap())
        })
    }

    #[test]
    fn base_cases() {
        let c = axial();
        assert_eq!(c.g(3, 2).unwrap(), 0.0);
        assert_eq!(c.g(3, 3).unwrap(), 1.0);
        assert_eq!(c.g(0, 1).unwrap(), 6.0);
        assert!(c.g(3, 1).is_err());
    }

    #[test]
    fn axial_d() {
        let c = axial();
        // G(0,2) = 6·6 − 1 = 35, G(1,1) = 1, p̃(0,2) = −1
        assert_eq!(c.g(0, 2).unwrap(), 35.0);
        assert_eq!(c.d(), 35.0 - 1.0 - 2.0);
        assert_relative_eq!(c.d(), c.d_expanded(), max_relative = 1e-15);
    }

    #[test]
    fn cosine_products() {
        let c = GContext::new(vec![1.0, 2.0], vec![0.3, -0.5]).unwrap();
        assert_eq!(c.pcos(4, 4), 1.0);
        assert_relative_eq!(c.pcos(0, 2), 0.3f64.cos() * 0.5f64.cos());
        assert_relative_eq!(c.p_tilde(0, 2), -c.pcos(0, 2));
        let zero = GContext::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
        for j in 0..4 {
            for k in j..8 {
                assert_eq!(zero.pcos(j, k), 1.0);
            }
        }
        assert_eq!(zero.p_tilde(0, 3), 1.0);
    }

    #[test]
    fn base_case_identities() {
        let c = GContext::new(vec![1.5, 0.7, 3.0], vec![0.2, -1.0, 0.6]).unwrap();
        assert_eq!(c.check_det_identity(1, 1).unwrap().value, 0.0);
        assert_eq!(c.check_partition_identity(0, 2, 2).unwrap().value, 0.0);
        assert_eq!(c.check_partition_identity(1, 1, 4).unwrap().value, 0.0);
    }

    #[test]
    fn integer_lengths_give_exact_identities() {
        let c = GContext::new(vec![1.0, 3.0, 2.0, 5.0], vec![0.0; 4]).unwrap();
        for j in 0..4 {
            for k in j..j + 8 {
                assert_eq!(c.check_det_identity(j, k).unwrap().value, 0.0);
            }
        }
    }

    #[test]
    fn inequality_base_case_is_boundary() {
        let c = axial();
        // (a) reads 4 < 6 <= 6 at k = j + 1
        assert!(c.check_inequalities(0, 1).unwrap().iter().all(|&b| b));
        assert_eq!(c.g(0, 1).unwrap(), 2.0 * 2.0 + 1.0 + 1.0);
    }

    #[test]
    fn domain_errors() {
        let c = axial();
        assert!(c.check_inequalities(2, 2).is_err());
        assert!(c.check_partition_identity(2, 1, 3).is_err());
        assert!(GContext::new(vec![1.0], vec![0.0]).is_err());
        assert!(GContext::new(vec![1.0, -1.0], vec![0.0, 0.0]).is_err());
        assert!(GContext::new(vec![1.0, 1.0], vec![0.0, FRAC_PI_2]).is_err());
    }

    proptest! {
        #[test]
        fn flipped_recursion_agrees(c in ctx_strategy(), j in -3i64..3, span in 0i64..20) {
            let a = c.g(j, j + span).unwrap();
            let b = c.g_flipped(j, j + span).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn g_is_positive(c in ctx_strategy(), j in 0i64..4, span in 0i64..15) {
            prop_assert!(c.g(j, j + span).unwrap() > 0.0);
        }

        #[test]
        fn identities_hold(c in ctx_strategy(), i in 0i64..3, a in 0i64..6, b in 0i64..6) {
            let (j, k) = (i + a, i + a + b);
            prop_assert!(c.check_det_identity(j, k).unwrap().relative() < 1e-10);
            prop_assert!(c.check_partition_identity(i, j, k).unwrap().relative() < 1e-10);
        }

        #[test]
        fn d_forms_agree(c in ctx_strategy()) {
            let n = c.period() as i64;
            prop_assert!((c.d() - c.d_expanded()).abs() <= 1e-12 * c.d().abs());
            prop_assert!(c.d() > 2.0 * c.s(n - 1) * c.g(0, n - 1).unwrap());
        }

        #[test]
        fn variant_relations(c in ctx_strategy(), j in 0i64..4, span in 0i64..8) {
            let k = j + span;
            let v = c.variants(j, k).unwrap();
            let left = 2.0 * c.cos_alpha(j) * c.g(j + 1, k).unwrap();
            let right = 2.0 * c.cos_alpha(k) * c.g(j, k - 1).unwrap();
            prop_assert!((v.plus_left - v.minus_left - left).abs() <= 1e-12 * v.plus_left.abs());
            prop_assert!((v.plus_right - v.minus_right - right).abs() <= 1e-12 * v.plus_right.abs());
            prop_assert_eq!(v.p_tilde.abs(), c.pcos(j, k));
        }
    }
}
