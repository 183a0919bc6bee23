//! Lorentzian dip fitting on ODMR traces.
//!
//! Model: `y(f) = B − Σ_i a_i · (Γ_i/2)² / ((f − f0_i)² + (Γ_i/2)²)`,
//! fitted by damped least squares (Levenberg–Marquardt) with the peaks
//! initialized from the deepest local minima. Iteration stops when the
//! relative residual change drops below 1e-9 or after 200 iterations;
//! non-convergence is reported on the result, with best-effort parameters.

use super::DetectError;

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_RTOL: f64 = 1e-9;

/// One fitted dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit {
    /// Center frequency, MHz.
    pub center_mhz: f64,
    /// Full width at half maximum, MHz.
    pub fwhm_mhz: f64,
    /// Fractional depth relative to the baseline.
    pub contrast: f64,
}

/// Result of fitting `n_peaks` Lorentzian dips to a trace.
#[derive(Debug, Clone)]
pub struct LorentzianFit {
    /// Off-resonance fluorescence level, counts.
    pub baseline: f64,
    /// Peaks sorted by center frequency.
    pub peaks: Vec<PeakFit>,
    /// L2 norm of the final residual, counts.
    pub residual_norm: f64,
    /// `residual_norm / ‖y‖`.
    pub relative_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LorentzianFit {
    /// The peak with the largest contrast.
    pub fn strongest_peak(&self) -> &PeakFit {
        self.peaks
            .iter()
            .max_by(|a, b| a.contrast.total_cmp(&b.contrast))
            .expect("fit holds at least one peak")
    }
}

/// Model and Jacobian row for one frequency. Parameter layout:
/// `[B, f0_1, Γ_1, a_1, (f0_2, Γ_2, a_2)]`.
fn model_row(f: f64, params: &[f64], jac: &mut [f64]) -> f64 {
    let n_peaks = (params.len() - 1) / 3;
    let mut y = params[0];
    jac[0] = 1.0;
    for p in 0..n_peaks {
        let (f0, fwhm, a) = (params[1 + 3 * p], params[2 + 3 * p], params[3 + 3 * p]);
        let h = fwhm / 2.0;
        let d = f - f0;
        let denom = d * d + h * h;
        let l = h * h / denom;
        y -= a * l;
        jac[1 + 3 * p] = -a * 2.0 * d * h * h / (denom * denom);
        jac[2 + 3 * p] = -a * h * d * d / (denom * denom);
        jac[3 + 3 * p] = -l;
    }
    y
}

fn sse(freqs: &[f64], counts: &[f64], params: &[f64]) -> f64 {
    let mut jac = vec![0.0; params.len()];
    freqs
        .iter()
        .zip(counts)
        .map(|(&f, &y)| {
            let m = model_row(f, params, &mut jac);
            (y - m) * (y - m)
        })
        .sum()
}

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
/// `A` is row-major `n × n`. Returns `None` for a (near-)singular system.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Initial parameter guess from the trace's deepest local minima.
fn initialize(freqs: &[f64], counts: &[f64], n_peaks: usize) -> Vec<f64> {
    let n = counts.len();
    // Baseline from the brighter half of the trace.
    let mut sorted = counts.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let top: &[f64] = &sorted[n / 2..];
    let baseline = top.iter().sum::<f64>() / top.len() as f64;

    // Candidate dips: local minima ranked by depth, then anything left.
    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| counts[i] <= counts[i - 1] && counts[i] <= counts[i + 1])
        .collect();
    candidates.sort_by(|&i, &j| counts[i].total_cmp(&counts[j]));

    let span = freqs[n - 1] - freqs[0];
    let min_sep = span / (2.0 * n_peaks as f64 + 2.0);
    let mut picked: Vec<usize> = Vec::new();
    for &i in &candidates {
        if picked.iter().all(|&j| (freqs[i] - freqs[j]).abs() >= min_sep) {
            picked.push(i);
        }
        if picked.len() == n_peaks {
            break;
        }
    }
    while picked.len() < n_peaks {
        // Degenerate trace; spread the remaining guesses over the grid.
        let k = picked.len();
        let idx = (n - 1) * (k + 1) / (n_peaks + 1);
        picked.push(idx.clamp(1, n - 2));
    }

    let mut params = vec![baseline];
    for &i in &picked {
        let depth = (baseline - counts[i]).max(1e-6 * baseline.abs().max(1.0));
        // Half-width estimate: walk outward until the trace recovers half
        // the depth.
        let half_level = counts[i] + depth / 2.0;
        let mut left = i;
        while left > 0 && counts[left] < half_level {
            left -= 1;
        }
        let mut right = i;
        while right < n - 1 && counts[right] < half_level {
            right += 1;
        }
        let mut fwhm = freqs[right] - freqs[left];
        if !(fwhm > 0.0) {
            fwhm = span / 10.0;
        }
        params.extend_from_slice(&[freqs[i], fwhm, depth]);
    }
    params
}

fn clamp_params(params: &mut [f64], freqs: &[f64]) {
    let (lo, hi) = (freqs[0], freqs[freqs.len() - 1]);
    let span = hi - lo;
    let n_peaks = (params.len() - 1) / 3;
    for p in 0..n_peaks {
        params[1 + 3 * p] = params[1 + 3 * p].clamp(lo, hi);
        params[2 + 3 * p] = params[2 + 3 * p].clamp(1e-6 * span, 10.0 * span);
        params[3 + 3 * p] = params[3 + 3 * p].max(0.0);
    }
}

/// Fit `n_peaks ∈ {1, 2}` Lorentzian dips to an ODMR trace.
pub fn fit_lorentzian(
    freqs_mhz: &[f64],
    counts: &[f64],
    n_peaks: usize,
) -> Result<LorentzianFit, DetectError> {
    if !(1..=2).contains(&n_peaks) {
        return Err(DetectError::BadPeakCount(n_peaks));
    }
    let need = 3 * (3 * n_peaks + 1);
    if freqs_mhz.len() != counts.len() || freqs_mhz.len() < need {
        return Err(DetectError::TraceTooShort {
            got: freqs_mhz.len().min(counts.len()),
            need,
            peaks: n_peaks,
        });
    }
    if freqs_mhz.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DetectError::GridNotIncreasing);
    }

    let n_params = 1 + 3 * n_peaks;
    let n = freqs_mhz.len();
    let mut params = initialize(freqs_mhz, counts, n_peaks);
    clamp_params(&mut params, freqs_mhz);

    let mut current_sse = sse(freqs_mhz, counts, &params);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    let mut jac_row = vec![0.0; n_params];
    while iterations < MAX_ITERATIONS {
        iterations += 1;

        // Accumulate JᵀJ and Jᵀr.
        let mut jtj = vec![0.0; n_params * n_params];
        let mut jtr = vec![0.0; n_params];
        for k in 0..n {
            let m = model_row(freqs_mhz[k], &params, &mut jac_row);
            let r = counts[k] - m;
            for i in 0..n_params {
                jtr[i] += jac_row[i] * r;
                for j in i..n_params {
                    jtj[i * n_params + j] += jac_row[i] * jac_row[j];
                }
            }
        }
        for i in 0..n_params {
            for j in 0..i {
                jtj[i * n_params + j] = jtj[j * n_params + i];
            }
        }

        // Damped normal equations; retry with stronger damping on failure.
        let mut step_accepted = false;
        for _ in 0..24 {
            let mut a = jtj.clone();
            for i in 0..n_params {
                let d = jtj[i * n_params + i];
                a[i * n_params + i] = d + lambda * d.max(1e-12);
            }
            let mut b = jtr.clone();
            if let Some(delta) = solve_linear(&mut a, &mut b, n_params) {
                let mut trial: Vec<f64> =
                    params.iter().zip(&delta).map(|(p, d)| p + d).collect();
                clamp_params(&mut trial, freqs_mhz);
                let trial_sse = sse(freqs_mhz, counts, &trial);
                if trial_sse.is_finite() && trial_sse <= current_sse {
                    let change = (current_sse - trial_sse) / current_sse.max(1e-300);
                    params = trial;
                    current_sse = trial_sse;
                    lambda = (lambda / 3.0).max(1e-12);
                    step_accepted = true;
                    if change < RESIDUAL_RTOL {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 3.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged || !step_accepted {
            converged = converged || !step_accepted && current_sse == 0.0;
            break;
        }
    }

    let baseline = params[0];
    let mut peaks: Vec<PeakFit> = (0..n_peaks)
        .map(|p| PeakFit {
            center_mhz: params[1 + 3 * p],
            fwhm_mhz: params[2 + 3 * p],
            contrast: if baseline.abs() > 1e-300 {
                (params[3 + 3 * p] / baseline).clamp(0.0, 1.0 - 1e-12)
            } else {
                0.0
            },
        })
        .collect();
    peaks.sort_by(|a, b| a.center_mhz.total_cmp(&b.center_mhz));

    let norm_y = counts.iter().map(|y| y * y).sum::<f64>().sqrt();
    let residual_norm = current_sse.sqrt();
    Ok(LorentzianFit {
        baseline,
        peaks,
        residual_norm,
        relative_residual: residual_norm / norm_y.max(1e-300),
        converged,
        iterations,
    })
}
