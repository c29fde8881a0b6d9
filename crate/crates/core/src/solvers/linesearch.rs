//! Strong Wolfe line search with bracketing and zoom.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_zoom: usize,
    pub max_bracket: usize,
    /// Largest step the bracketing phase may try.
    pub alpha_max: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_zoom: 50,
            max_bracket: 50,
            alpha_max: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub value: f64,
    /// Both Wolfe conditions hold at `alpha`.
    pub satisfied: bool,
    pub evaluations: usize,
}

struct Search<'a, F> {
    phi: &'a mut F,
    phi0: f64,
    dphi0: f64,
    p: WolfeParams,
    evals: usize,
    /// Best point with sufficient decrease seen so far.
    best: Option<(f64, f64)>,
}

impl<F> Search<'_, F>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    fn eval(&mut self, alpha: f64) -> Result<(f64, f64)> {
        self.evals += 1;
        let (v, d) = (self.phi)(alpha)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.armijo(alpha, v) && self.best.is_none_or(|(_, bv)| v < bv) {
            self.best = Some((alpha, v));
        }
        Ok((v, d))
    }

    fn armijo(&self, alpha: f64, v: f64) -> bool {
        v <= self.phi0 + self.p.c1 * alpha * self.dphi0
    }

    fn curvature(&self, d: f64) -> bool {
        d.abs() <= -self.p.c2 * self.dphi0
    }

    fn done(&self, alpha: f64, value: f64) -> LineSearchResult {
        LineSearchResult {
            alpha,
            value,
            satisfied: true,
            evaluations: self.evals,
        }
    }

    fn give_up(&self) -> LineSearchResult {
        match self.best {
            Some((alpha, value)) => LineSearchResult {
                alpha,
                value,
                satisfied: false,
                evaluations: self.evals,
            },
            None => LineSearchResult {
                alpha: 0.0,
                value: self.phi0,
                satisfied: false,
                evaluations: self.evals,
            },
        }
    }

    fn zoom(
        &mut self,
        mut lo: (f64, f64, f64),
        mut hi: (f64, f64),
    ) -> Result<LineSearchResult> {
        for _ in 0..self.p.max_zoom {
            let (a_lo, v_lo, d_lo) = lo;
            let (a_hi, v_hi) = hi;
            let w = a_hi - a_lo;
            // quadratic through (lo, φ, φ') and (hi, φ)
            let denom = 2.0 * (v_hi - v_lo - d_lo * w);
            let mut alpha = a_lo - d_lo * w * w / denom;
            let (a, b) = (a_lo.min(a_hi), a_lo.max(a_hi));
            let margin = 1e-3 * (b - a);
            if !alpha.is_finite() || alpha <= a || alpha >= b {
                alpha = 0.5 * (a + b);
            } else {
                alpha = alpha.clamp(a + margin, b - margin);
            }
            if b - a <= f64::EPSILON * b.max(1e-300) {
                break;
            }
            let (v, d) = self.eval(alpha)?;
            if !self.armijo(alpha, v) || v >= v_lo {
                hi = (alpha, v);
            } else {
                if self.curvature(d) {
                    return Ok(self.done(alpha, v));
                }
                if d * (a_hi - a_lo) >= 0.0 {
                    hi = (a_lo, v_lo);
                }
                lo = (alpha, v, d);
            }
        }
        Ok(self.give_up())
    }
}

/// Finds `α` with `φ(α) ≤ φ(0) + c₁αφ'(0)` and `|φ'(α)| ≤ c₂|φ'(0)|`.
///
/// `phi` returns `(φ(α), φ'(α))`. When the conditions cannot be met the best
/// sufficient-decrease point is returned with `satisfied = false`, or
/// `α = 0` if there is none.
pub fn wolfe_line_search<F>(
    mut phi: F,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    params: WolfeParams,
) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(dphi0 < 0.0) {
        return Err(Error::NonDescent { slope: dphi0 });
    }
    let mut s = Search {
        phi: &mut phi,
        phi0,
        dphi0,
        p: params,
        evals: 0,
        best: None,
    };
    let mut prev = (0.0, phi0, dphi0);
    let mut alpha = alpha0.min(params.alpha_max);
    for i in 0..params.max_bracket {
        let (v, d) = s.eval(alpha)?;
        if !s.armijo(alpha, v) || (i > 0 && v >= prev.1) {
            return s.zoom(prev, (alpha, v));
        }
        if s.curvature(d) {
            return Ok(s.done(alpha, v));
        }
        if d >= 0.0 {
            return s.zoom((alpha, v, d), (prev.0, prev.1));
        }
        if alpha >= params.alpha_max {
            break;
        }
        prev = (alpha, v, d);
        alpha = (2.0 * alpha).min(params.alpha_max);
    }
    Ok(s.give_up())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(m: f64) -> impl FnMut(f64) -> Result<(f64, f64)> {
        move |a: f64| Ok(((a - m).powi(2), 2.0 * (a - m)))
    }

    #[test]
    fn exact_minimizer_accepted() {
        let r = wolfe_line_search(quad(1.0), 1.0, -2.0, 1.0, WolfeParams::default()).unwrap();
        assert_eq!(r.alpha, 1.0);
        assert!(r.satisfied && r.evaluations <= 3);
    }

    #[test]
    fn ascent_is_rejected() {
        let e = wolfe_line_search(|a| Ok((a, 1.0)), 0.0, 1.0, 1.0, WolfeParams::default());
        assert!(matches!(e, Err(Error::NonDescent { .. })));
    }

    #[test]
    fn short_minimizer() {
        let m = 0.3;
        let r = wolfe_line_search(quad(m), m * m, -2.0 * m, 1.0, WolfeParams::default()).unwrap();
        assert!(r.satisfied);
        assert!((r.alpha - m).powi(2) < m * m);
    }

    #[test]
    fn steep_function_shrinks_fast() {
        let m = 1e-9;
        let r = wolfe_line_search(quad(m), m * m, -2.0 * m, 1.0, WolfeParams::default()).unwrap();
        assert!(r.satisfied, "{r:?}");
        assert!(r.value < m * m);
    }

    #[test]
    fn far_minimizer_brackets_outward() {
        let m = 100.0;
        let r = wolfe_line_search(quad(m), m * m, -2.0 * m, 1.0, WolfeParams::default()).unwrap();
        assert!(r.satisfied && r.alpha > 10.0);
    }
}
