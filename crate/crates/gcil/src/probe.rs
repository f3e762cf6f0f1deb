//! Multinomial logistic regression fitted by L-BFGS, used as the frozen
//! linear probe.
//!
//! The objective is the classic L2-regularized cross-entropy
//! `0.5·Σ‖w_k‖² + C·Σ_i log-loss_i` with unpenalized intercepts — the same
//! parameterization scikit-learn uses, so probe numbers are comparable to
//! the wider literature. The solver is deterministic: zero initialization,
//! two-loop L-BFGS recursion with a strong-Wolfe line search, no randomness
//! anywhere.

use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Result};

/// Fitted probe parameters.
#[derive(Debug, Clone)]
pub struct ProbeFit {
    /// K×d weight matrix.
    pub weights: Array2<f64>,
    /// K intercepts.
    pub intercepts: Array1<f64>,
    pub iterations: usize,
    pub grad_inf_norm: f64,
}

/// Solver knobs. The defaults converge far past F1 resolution on every
/// dataset here.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    /// Inverse regularization strength (multiplies the data term).
    pub c: f64,
    pub max_iter: usize,
    /// Stop when the gradient's infinity norm falls below this.
    pub tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            c: 1.0,
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

/// Fits the multinomial model on `(x, y)`. `y` entries must lie in
/// `0..num_classes`.
pub fn fit_multinomial(
    x: &Array2<f64>,
    y: &[u32],
    num_classes: usize,
    opts: &ProbeOptions,
) -> Result<ProbeFit> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::Probe("empty training set".into()));
    }
    if y.len() != n {
        return Err(Error::Probe(format!(
            "feature rows ({n}) and labels ({}) disagree",
            y.len()
        )));
    }
    if num_classes < 2 {
        return Err(Error::Probe(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::Probe(format!(
            "label {bad} outside 0..{num_classes}"
        )));
    }
    if !(opts.c > 0.0) {
        return Err(Error::Probe(format!(
            "regularization C must be positive, got {}",
            opts.c
        )));
    }

    // Parameter layout: K rows of (d weights + 1 intercept), flattened.
    let k = num_classes;
    let dim = k * (d + 1);
    let objective = LogRegObjective { x, y, k, c: opts.c };
    let (params, iterations, grad_inf_norm) =
        lbfgs(&objective, Array1::zeros(dim), opts.max_iter, opts.tol)?;

    let mut weights = Array2::zeros((k, d));
    let mut intercepts = Array1::zeros(k);
    for cls in 0..k {
        let row = &params.as_slice().expect("contiguous")[cls * (d + 1)..(cls + 1) * (d + 1)];
        for j in 0..d {
            weights[[cls, j]] = row[j];
        }
        intercepts[cls] = row[d];
    }
    Ok(ProbeFit {
        weights,
        intercepts,
        iterations,
        grad_inf_norm,
    })
}

/// Class scores (pre-softmax logits), N×K.
pub fn decision_function(fit: &ProbeFit, x: &Array2<f64>) -> Array2<f64> {
    let mut scores = x.dot(&fit.weights.t());
    for mut row in scores.rows_mut() {
        row += &fit.intercepts;
    }
    scores
}

/// Argmax prediction; ties resolve to the lowest class index.
pub fn predict(fit: &ProbeFit, x: &Array2<f64>) -> Vec<u32> {
    decision_function(fit, x)
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

/// (macro-F1, micro-F1) over `0..num_classes`. Classes never seen in either
/// vector contribute 0 to the macro average; micro-F1 of single-label
/// prediction is exactly accuracy.
pub fn f1_scores(y_true: &[u32], y_pred: &[u32], num_classes: usize) -> (f64, f64) {
    assert_eq!(y_true.len(), y_pred.len());
    let k = num_classes;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t as usize, p as usize);
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut macro_sum = 0.0;
    for c in 0..k {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            macro_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    let macro_f1 = macro_sum / k as f64;
    let correct: usize = tp.iter().sum();
    let micro_f1 = correct as f64 / y_true.len().max(1) as f64;
    (macro_f1, micro_f1)
}

struct LogRegObjective<'a> {
    x: &'a Array2<f64>,
    y: &'a [u32],
    k: usize,
    c: f64,
}

impl LogRegObjective<'_> {
    /// Loss and gradient at `params`.
    fn eval(&self, params: ArrayView1<f64>) -> (f64, Array1<f64>) {
        let (n, d) = self.x.dim();
        let k = self.k;
        let p = params.as_slice().expect("contiguous");

        let mut weights = Array2::zeros((k, d));
        let mut intercepts = vec![0.0; k];
        for cls in 0..k {
            let row = &p[cls * (d + 1)..(cls + 1) * (d + 1)];
            for j in 0..d {
                weights[[cls, j]] = row[j];
            }
            intercepts[cls] = row[d];
        }

        // Softmax probabilities via the log-sum-exp shift.
        let mut logits = self.x.dot(&weights.t());
        for mut row in logits.rows_mut() {
            for (v, b) in row.iter_mut().zip(&intercepts) {
                *v += b;
            }
        }
        let mut data_loss = 0.0;
        let mut prob = logits; // reused in place
        for (i, mut row) in prob.rows_mut().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            let yi = self.y[i] as usize;
            data_loss += -(row[yi] / z).ln();
            for v in row.iter_mut() {
                *v /= z;
            }
        }

        // Residual P − Y drives the data gradient.
        for (i, mut row) in prob.rows_mut().into_iter().enumerate() {
            row[self.y[i] as usize] -= 1.0;
        }
        let grad_w = prob.t().dot(self.x); // K×d
        let mut grad = Array1::zeros(k * (d + 1));
        {
            let g = grad.as_slice_mut().expect("contiguous");
            for cls in 0..k {
                let row = &mut g[cls * (d + 1)..(cls + 1) * (d + 1)];
                for j in 0..d {
                    row[j] = self.c * grad_w[[cls, j]] + weights[[cls, j]];
                }
                row[d] = self.c * prob.column(cls).sum();
            }
        }
        let _ = n;
        let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
        (reg + self.c * data_loss, grad)
    }
}

/// Two-loop L-BFGS with a strong-Wolfe line search. Returns the final
/// parameters, the number of outer iterations, and the final gradient
/// infinity norm.
fn lbfgs(
    obj: &LogRegObjective<'_>,
    mut params: Array1<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(Array1<f64>, usize, f64)> {
    const MEMORY: usize = 10;
    let (mut loss, mut grad) = obj.eval(params.view());
    let mut s_list: Vec<Array1<f64>> = Vec::new();
    let mut y_list: Vec<Array1<f64>> = Vec::new();
    let mut rho_list: Vec<f64> = Vec::new();

    let inf_norm = |g: &Array1<f64>| g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));

    let mut iterations = 0;
    for it in 0..max_iter {
        let gnorm = inf_norm(&grad);
        if gnorm <= tol {
            return Ok((params, it, gnorm));
        }
        iterations = it + 1;

        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let mut alphas = vec![0.0; s_list.len()];
        for i in (0..s_list.len()).rev() {
            let a = rho_list[i] * s_list[i].dot(&q);
            alphas[i] = a;
            q.scaled_add(-a, &y_list[i]);
        }
        if let (Some(s), Some(y)) = (s_list.last(), y_list.last()) {
            let scale = s.dot(y) / y.dot(y);
            q.mapv_inplace(|v| v * scale);
        }
        for i in 0..s_list.len() {
            let b = rho_list[i] * y_list[i].dot(&q);
            q.scaled_add(alphas[i] - b, &s_list[i]);
        }
        let direction = q.mapv(|v| -v);

        let dg0 = direction.dot(&grad);
        if !dg0.is_finite() || dg0 >= 0.0 {
            // Fall back to steepest descent if curvature info went stale.
            s_list.clear();
            y_list.clear();
            rho_list.clear();
            let direction = grad.mapv(|v| -v);
            let (np, nl, ng) = wolfe_search(obj, &params, loss, &grad, &direction)?;
            update_memory(
                &mut s_list, &mut y_list, &mut rho_list, MEMORY, &params, &np, &grad, &ng,
            );
            params = np;
            loss = nl;
            grad = ng;
            continue;
        }

        let (new_params, new_loss, new_grad) = wolfe_search(obj, &params, loss, &grad, &direction)?;
        update_memory(
            &mut s_list, &mut y_list, &mut rho_list, MEMORY, &params, &new_params, &grad,
            &new_grad,
        );
        params = new_params;
        loss = new_loss;
        grad = new_grad;
    }
    let gnorm = inf_norm(&grad);
    Ok((params, iterations, gnorm))
}

fn update_memory(
    s_list: &mut Vec<Array1<f64>>,
    y_list: &mut Vec<Array1<f64>>,
    rho_list: &mut Vec<f64>,
    memory: usize,
    old_params: &Array1<f64>,
    new_params: &Array1<f64>,
    old_grad: &Array1<f64>,
    new_grad: &Array1<f64>,
) {
    let s = new_params - old_params;
    let y = new_grad - old_grad;
    let sy = s.dot(&y);
    let guard = 1e-10 * s.dot(&s).sqrt() * y.dot(&y).sqrt();
    if sy > guard && sy > 0.0 {
        s_list.push(s);
        y_list.push(y);
        rho_list.push(1.0 / sy);
        if s_list.len() > memory {
            s_list.remove(0);
            y_list.remove(0);
            rho_list.remove(0);
        }
    }
}

/// Strong-Wolfe line search (c1=1e-4, c2=0.9): bracket then bisect-zoom.
fn wolfe_search(
    obj: &LogRegObjective<'_>,
    params: &Array1<f64>,
    f0: f64,
    g0: &Array1<f64>,
    direction: &Array1<f64>,
) -> Result<(Array1<f64>, f64, Array1<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_EVALS: usize = 30;

    let dg0 = direction.dot(g0);
    let eval_at = |alpha: f64| {
        let p = params + &(direction * alpha);
        let (f, g) = obj.eval(p.view());
        (p, f, g)
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut alpha = 1.0;
    let mut lo: Option<(f64, f64)> = None; // (alpha, f)
    let mut hi: Option<f64> = None;

    for _ in 0..MAX_EVALS {
        let (p, f, g) = eval_at(alpha);
        if !f.is_finite() {
            // step into overflow territory — shrink hard
            alpha *= 0.1;
            continue;
        }
        let dg = direction.dot(&g);
        if f > f0 + C1 * alpha * dg0 || f >= f_prev && alpha_prev > 0.0 {
            lo = Some((alpha_prev, f_prev));
            hi = Some(alpha);
            break;
        }
        if dg.abs() <= -C2 * dg0 {
            return Ok((p, f, g));
        }
        if dg >= 0.0 {
            lo = Some((alpha, f));
            hi = Some(alpha_prev);
            break;
        }
        alpha_prev = alpha;
        f_prev = f;
        alpha *= 2.0;
    }

    // Zoom phase: bisection keeps this robust and deterministic.
    let (mut alo, mut flo) = lo.unwrap_or((0.0, f0));
    let mut ahi = hi.unwrap_or(alpha);
    for _ in 0..MAX_EVALS {
        let amid = 0.5 * (alo + ahi);
        let (p, f, g) = eval_at(amid);
        let dg = direction.dot(&g);
        if !f.is_finite() || f > f0 + C1 * amid * dg0 || f >= flo {
            ahi = amid;
        } else {
            if dg.abs() <= -C2 * dg0 {
                return Ok((p, f, g));
            }
            if dg * (ahi - alo) >= 0.0 {
                ahi = alo;
            }
            alo = amid;
            flo = f;
        }
        if (ahi - alo).abs() < 1e-16 {
            break;
        }
    }
    // Accept the best sufficient-decrease point found; a fully stalled
    // search means we are at numerical convergence already.
    let (p, f, g) = eval_at(alo.max(1e-16));
    if f <= f0 {
        Ok((p, f, g))
    } else {
        Ok((params.clone(), f0, g0.clone()))
    }
}
