//! Query-counted black-box access to a vector-valued map.
//!
//! Every analysis in this crate touches the target function only through
//! [`BlackBox::evaluate`], so the query counter is an exact audit of oracle
//! access. Wrapped closures must be deterministic; evaluation itself holds no
//! locks beyond one atomic increment, so boxes are safe to share across
//! threads when the closure is reentrant (which wrapped functions declare at
//! construction).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

type BoxedFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Deviation anchor: a base point and the raw output recorded there.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub point: Vec<f64>,
    pub output: Vec<f64>,
}

/// A black-box map `R^d_in -> R^d_out` with an atomic query counter.
#[derive(Clone)]
pub struct BlackBox {
    d_in: usize,
    d_out: usize,
    func: BoxedFn,
    counter: Arc<AtomicU64>,
    anchor: Option<Arc<Anchor>>,
    reentrant: bool,
}

impl std::fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBox")
            .field("d_in", &self.d_in)
            .field("d_out", &self.d_out)
            .field("queries", &self.queries())
            .field("anchored", &self.anchor.is_some())
            .finish()
    }
}

impl BlackBox {
    /// Wraps a deterministic closure. Dimensions must be positive.
    pub fn new(
        d_in: usize,
        d_out: usize,
        func: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        assert!(d_in >= 1 && d_out >= 1, "black box dimensions must be positive");
        BlackBox {
            d_in,
            d_out,
            func: Arc::new(func),
            counter: Arc::new(AtomicU64::new(0)),
            anchor: None,
            reentrant: true,
        }
    }

    /// Marks the wrapped closure as unsafe to call from multiple threads at
    /// once; purely a declaration consumed by callers that parallelize.
    pub fn non_reentrant(mut self) -> Self {
        self.reentrant = false;
        self
    }

    /// The linear map `x -> a x`.
    pub fn linear(a: Matrix) -> Self {
        let d_in = a.cols();
        let d_out = a.rows();
        BlackBox::new(d_in, d_out, move |x| a.matvec(x))
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn reentrant(&self) -> bool {
        self.reentrant
    }

    /// Total queries issued through this box and every box sharing its
    /// counter (anchored views share their parent's).
    pub fn queries(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn anchor(&self) -> Option<&Anchor> {
        self.anchor.as_deref()
    }

    /// Evaluates the map, costing exactly one query.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::InvalidInput(format!(
                "input length {} does not match d_in {}",
                x.len(),
                self.d_in
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input contains non-finite values".into()));
        }
        self.counter.fetch_add(1, Ordering::SeqCst);
        let y = (self.func)(x);
        if y.len() != self.d_out {
            return Err(Error::InvalidInput(format!(
                "wrapped function returned length {}, expected d_out {}",
                y.len(),
                self.d_out
            )));
        }
        Ok(y)
    }

    /// Deviation view around `x_star`: the returned box computes
    /// `h -> f(x_star + h) - f(x_star)`, which maps 0 to 0. Recording
    /// `f(x_star)` costs one query; afterwards each deviation evaluation
    /// costs one. The view shares this box's counter, so totals aggregate.
    pub fn anchored(&self, x_star: &[f64]) -> Result<BlackBox> {
        let f_star = self.evaluate(x_star)?;
        let parent = Arc::clone(&self.func);
        let base = x_star.to_vec();
        let offset = f_star.clone();
        let d_in = self.d_in;
        let func: BoxedFn = Arc::new(move |h: &[f64]| {
            let shifted: Vec<f64> = (0..d_in).map(|i| base[i] + h[i]).collect();
            let y = parent(&shifted);
            y.iter().zip(&offset).map(|(a, b)| a - b).collect()
        });
        Ok(BlackBox {
            d_in: self.d_in,
            d_out: self.d_out,
            func,
            counter: Arc::clone(&self.counter),
            anchor: Some(Arc::new(Anchor { point: x_star.to_vec(), output: f_star })),
            reentrant: self.reentrant,
        })
    }

    /// Output of the *underlying* map at a point given in original
    /// coordinates: `f(x)` for a plain box, `g(x - x_star) + f(x_star)` for
    /// an anchored view. Costs one query.
    pub fn evaluate_original(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.anchor {
            None => self.evaluate(x),
            Some(a) => {
                if x.len() != self.d_in {
                    return Err(Error::InvalidInput(format!(
                        "input length {} does not match d_in {}",
                        x.len(),
                        self.d_in
                    )));
                }
                let h: Vec<f64> = x.iter().zip(&a.point).map(|(v, b)| v - b).collect();
                let g = self.evaluate(&h)?;
                Ok(g.iter().zip(&a.output).map(|(v, o)| v + o).collect())
            }
        }
    }

    /// Original-space point translated into this box's input coordinates
    /// (identity for plain boxes, `x - x_star` for anchored views).
    pub fn to_local(&self, x: &[f64]) -> Vec<f64> {
        match &self.anchor {
            None => x.to_vec(),
            Some(a) => x.iter().zip(&a.point).map(|(v, b)| v - b).collect(),
        }
    }
}
