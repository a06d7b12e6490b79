//! Full-batch optimizers: L-BFGS with a strong-Wolfe line search, and Adam.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math::{abs, sqrt};

/// Source of the `seconds` column of a trace.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always reports zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Seconds since construction.
#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl WallClock {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Cumulative number of objective evaluations.
    pub eval: usize,
    pub loss: f64,
    pub grad_inf: f64,
    pub seconds: f64,
}

/// One record per accepted iterate, starting with the initial point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    fn push(&mut self, eval: usize, loss: f64, grad: &[f64], clock: &dyn Clock) {
        self.records.push(TraceRecord {
            eval,
            loss,
            grad_inf: inf_norm(grad),
            seconds: clock.seconds(),
        });
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Record with the largest `eval` not exceeding `n`.
    pub fn at_eval(&self, n: usize) -> Option<&TraceRecord> {
        self.records.iter().take_while(|r| r.eval <= n).last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradTol,
    MaxEvals,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub status: Status,
    pub iters: usize,
    pub evals: usize,
    pub trace: TrainTrace,
}

/// An objective error, with the progress made before it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("objective failed after {evals} evaluations: {error}")]
pub struct OptimError {
    #[source]
    pub error: Error,
    pub evals: usize,
    /// Last accepted iterate (the starting point if none was accepted).
    pub theta: Vec<f64>,
    pub trace: TrainTrace,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| m.max(abs(*v)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_evals: usize,
    pub max_iters: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Stop once `||grad||_inf` falls to this value.
    pub grad_tol: f64,
    /// Trial steps per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 20,
            max_evals: 600,
            max_iters: usize::MAX,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            grad_tol: 1e-8,
            max_line_search: 40,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got {} and {}",
                self.wolfe_c1,
                self.wolfe_c2
            )));
        }
        if self.memory == 0 || self.max_evals == 0 || self.max_line_search == 0 {
            return Err(Error::InvalidConfig(
                "L-BFGS memory and budgets must be positive".into(),
            ));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Domain {
                what: "gradient tolerance",
                value: self.grad_tol,
            });
        }
        Ok(())
    }
}

/// Objective evaluations with a shared budget.
struct Counted<'a, F> {
    f: &'a mut F,
    n: usize,
}

impl<F> Counted<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), Error>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), Error> {
        self.n += 1;
        (self.f)(x)
    }
}

struct Point {
    a: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

enum Search {
    Found(Point),
    Failed,
    Budget,
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * sqrt(disc);
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe bracketing and zoom.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    obj: &mut Counted<'_, F>,
    x: &[f64],
    p: &[f64],
    f0: f64,
    d0: f64,
    a_init: f64,
    opts: &LbfgsOptions,
    budget: usize,
) -> Result<Search, Error>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), Error>,
{
    let (c1, c2) = (opts.wolfe_c1, opts.wolfe_c2);
    let mut trials = 0;
    let mut probe = |obj: &mut Counted<'_, F>, a: f64| -> Result<Option<Point>, Error> {
        if obj.n >= budget || trials >= opts.max_line_search {
            return Ok(None);
        }
        trials += 1;
        let xt: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + a * pi).collect();
        let (f, g) = obj.eval(&xt)?;
        let d = dot(&g, p);
        Ok(Some(Point { a, f, d, g }))
    };
    let armijo = |pt: &Point| pt.f.is_finite() && pt.f <= f0 + c1 * pt.a * d0;
    let curvature = |pt: &Point| pt.d.is_finite() && abs(pt.d) <= -c2 * d0;

    let mut prev = Point {
        a: 0.0,
        f: f0,
        d: d0,
        g: Vec::new(),
    };
    let mut a = a_init;
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        let Some(cur) = probe(obj, a)? else {
            return Ok(if obj.n >= budget {
                Search::Budget
            } else {
                Search::Failed
            });
        };
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Ok(Search::Found(cur));
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        let next = cubic_min(prev.a, prev.f, prev.d, cur.a, cur.f, cur.d)
            .filter(|t| *t > cur.a)
            .unwrap_or(4.0 * cur.a)
            .clamp(2.0 * cur.a, 1e6 * cur.a);
        a = next;
        prev = cur;
        first = false;
    }

    // lo satisfies Armijo and has the lowest value seen; the minimizer lies
    // between lo and hi.
    loop {
        let width = hi.a - lo.a;
        if abs(width) <= f64::EPSILON * abs(lo.a).max(1e-300) {
            return Ok(Search::Failed);
        }
        let mid = 0.5 * (lo.a + hi.a);
        let a = if hi.f.is_finite() && hi.d.is_finite() {
            let (l, h) = (lo.a.min(hi.a), lo.a.max(hi.a));
            match cubic_min(lo.a, lo.f, lo.d, hi.a, hi.f, hi.d) {
                Some(t) if t > l + 0.1 * (h - l) && t < h - 0.1 * (h - l) => t,
                _ => mid,
            }
        } else {
            mid
        };
        let Some(cur) = probe(obj, a)? else {
            return Ok(if obj.n >= budget {
                Search::Budget
            } else {
                Search::Failed
            });
        };
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok(Search::Found(cur));
            }
            if cur.d * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
}

/// L-BFGS with the two-loop recursion.
///
/// The first step length is `min(1, 1/||g||_inf)`; later iterations start at
/// 1 with the initial inverse Hessian `s'y / y'y`. Curvature pairs with
/// `s'y <= 1e-12 ||s|| ||y||` are dropped. A failed line search clears the
/// memory and retries once from steepest descent before giving up.
pub fn lbfgs_minimize<F>(
    mut objective: F,
    theta0: Vec<f64>,
    opts: &LbfgsOptions,
    clock: &dyn Clock,
) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), Error>,
{
    let mut trace = TrainTrace::default();
    let fail = |error, evals, theta, trace| {
        Err(OptimError {
            error,
            evals,
            theta,
            trace,
        })
    };
    if let Err(e) = opts.validate() {
        return fail(e, 0, theta0, trace);
    }
    let mut obj = Counted {
        f: &mut objective,
        n: 0,
    };
    let mut x = theta0;
    let (mut f, mut g) = match obj.eval(&x) {
        Ok(v) => v,
        Err(e) => return fail(e, 1, x, trace),
    };
    if !f.is_finite() {
        return fail(
            Error::Domain {
                what: "initial loss",
                value: f,
            },
            1,
            x,
            trace,
        );
    }
    trace.push(obj.n, f, &g, clock);

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iters = 0;
    let status = loop {
        if inf_norm(&g) <= opts.grad_tol {
            break Status::GradTol;
        }
        if obj.n >= opts.max_evals {
            break Status::MaxEvals;
        }
        if iters >= opts.max_iters {
            break Status::MaxIters;
        }

        // two-loop recursion
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = vec![0.0; mem.len()];
        for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
            alphas[i] = rho * dot(s, &q);
            q.iter_mut()
                .zip(y)
                .for_each(|(qi, yi)| *qi -= alphas[i] * yi);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (i, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &q);
            q.iter_mut()
                .zip(s)
                .for_each(|(qi, si)| *qi += (alphas[i] - b) * si);
        }
        let mut p = q;
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) {
            mem.clear();
            p = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &p);
        }
        let a0 = if iters == 0 && mem.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let found = match line_search(&mut obj, &x, &p, f, d0, a0, opts, opts.max_evals) {
            Ok(Search::Found(pt)) => pt,
            // a stale curvature model gets one retry along -g
            Ok(Search::Failed) if !mem.is_empty() => {
                mem.clear();
                p = g.iter().map(|v| -v).collect();
                d0 = dot(&g, &p);
                let a0 = (1.0 / inf_norm(&g)).min(1.0);
                match line_search(&mut obj, &x, &p, f, d0, a0, opts, opts.max_evals) {
                    Ok(Search::Found(pt)) => pt,
                    Ok(Search::Failed) => break Status::LineSearchFailed,
                    Ok(Search::Budget) => break Status::MaxEvals,
                    Err(e) => return fail(e, obj.n, x, trace),
                }
            }
            Ok(Search::Failed) => break Status::LineSearchFailed,
            Ok(Search::Budget) => break Status::MaxEvals,
            Err(e) => return fail(e, obj.n, x, trace),
        };
        debug_assert!(found.f <= f + opts.wolfe_c1 * found.a * d0);
        debug_assert!(abs(found.d) <= -opts.wolfe_c2 * d0);

        let s: Vec<f64> = p.iter().map(|v| found.a * v).collect();
        let y: Vec<f64> = found.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        f = found.f;
        g = found.g;
        iters += 1;
        trace.push(obj.n, f, &g, clock);

        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
    };
    Ok(OptimResult {
        theta: x,
        value: f,
        grad: g,
        status,
        iters,
        evals: obj.n,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamOptions {
    pub lr: f64,
    pub beta1m: f64,
    pub beta2m: f64,
    pub eps_hat: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1m: 0.9,
            beta2m: 0.999,
            eps_hat: 1e-8,
            max_iters: 600,
            grad_tol: 0.0,
        }
    }
}

/// Adam with bias correction, one evaluation per iteration. Returns the last
/// evaluated iterate.
pub fn adam_minimize<F>(
    mut objective: F,
    theta0: Vec<f64>,
    opts: &AdamOptions,
    clock: &dyn Clock,
) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), Error>,
{
    let mut trace = TrainTrace::default();
    if !(opts.lr > 0.0) || !(0.0..1.0).contains(&opts.beta1m) || !(0.0..1.0).contains(&opts.beta2m)
    {
        return Err(OptimError {
            error: Error::InvalidConfig("Adam needs lr > 0 and moment decays in [0, 1)".into()),
            evals: 0,
            theta: theta0,
            trace,
        });
    }
    let n = theta0.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut x = theta0;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let mut last = None;
    let mut status = Status::MaxIters;
    for k in 1..=opts.max_iters {
        let (f, g) = match objective(&x) {
            Ok(r) => r,
            Err(error) => {
                return Err(OptimError {
                    error,
                    evals: k,
                    theta: x,
                    trace,
                })
            }
        };
        trace.push(k, f, &g, clock);
        if inf_norm(&g) <= opts.grad_tol || k == opts.max_iters {
            if k < opts.max_iters {
                status = Status::GradTol;
            }
            last = Some((f, g));
            break;
        }
        b1t *= opts.beta1m;
        b2t *= opts.beta2m;
        for i in 0..n {
            m[i] = opts.beta1m * m[i] + (1.0 - opts.beta1m) * g[i];
            v[i] = opts.beta2m * v[i] + (1.0 - opts.beta2m) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1t);
            let vh = v[i] / (1.0 - b2t);
            x[i] -= opts.lr * mh / (sqrt(vh) + opts.eps_hat);
        }
    }
    let (value, grad) = last.unwrap_or((f64::NAN, Vec::new()));
    let evals = trace.records.len();
    Ok(OptimResult {
        theta: x,
        value,
        grad,
        status,
        iters: evals,
        evals,
        trace,
    })
}
