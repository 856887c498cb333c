//! Non-causal smoothing of coefficient paths.
//!
//! Three filter families are supported:
//!
//! * **Gaussian** — convolution with the scaled normal density
//!   `kappa_eps(t) = exp(-t^2 / (2 eps^2)) / (eps sqrt(2 pi))`, truncated at
//!   `truncation_radius * eps` (default 8, tail mass below 1e-15) and
//!   renormalized to unit mass;
//! * **exponential decay** — frequency gain `exp(-decay |nu|)`, whose time
//!   kernel is the Cauchy density with scale `decay`; truncated wide (64
//!   scales by default) because of its heavy tails;
//! * **ideal low-pass** — the indicator of `|nu| <= cutoff`, applied in the
//!   frequency domain on a zero-padded grid rather than as a truncated sinc,
//!   which would ring.
//!
//! All filters are non-causal: the output at `t` reads inputs after `t`.
//! Outside the extended grid the input is treated as zero, matching the
//! boundary-extension convention of [`crate::params::extend_boundary`].

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::params::{ParamPath, PathDomain};

/// Taps up to this count use direct convolution; larger kernels go through
/// the FFT. Both routes agree to 1e-10 and are cross-checked in tests.
const DIRECT_CONV_MAX_TAPS: usize = 257;

const GAUSSIAN_DEFAULT_RADIUS: f64 = 8.0;
const EXP_DECAY_DEFAULT_RADIUS: f64 = 64.0;

/// A smoothing-filter description.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    /// Gaussian mollifier with bandwidth `eps` (time units).
    Gaussian { eps: f64, truncation_radius: f64 },
    /// Ideal low-pass with the given angular-frequency cutoff. A cutoff of
    /// `f64::INFINITY` is the identity filter.
    IdealLowPass { cutoff: f64 },
    /// Exponential energy decay `exp(-decay |nu|)` (Cauchy kernel in time).
    ExpDecay { decay: f64, truncation_radius: f64 },
}

/// Filter family selector used when sweeping a bandwidth schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Gaussian,
    IdealLowPass,
    ExpDecay,
}

impl FilterSpec {
    pub fn gaussian(eps: f64) -> Self {
        FilterSpec::Gaussian {
            eps,
            truncation_radius: GAUSSIAN_DEFAULT_RADIUS,
        }
    }

    pub fn low_pass(cutoff: f64) -> Self {
        FilterSpec::IdealLowPass { cutoff }
    }

    pub fn exp_decay(decay: f64) -> Self {
        FilterSpec::ExpDecay {
            decay,
            truncation_radius: EXP_DECAY_DEFAULT_RADIUS,
        }
    }

    /// Builds the family member with bandwidth parameter `eps`: the Gaussian
    /// width, the Cauchy scale, or (for the low-pass) the cutoff `1/eps`, so
    /// that smaller `eps` always means less smoothing.
    pub fn from_bandwidth(kind: FilterKind, eps: f64) -> Self {
        match kind {
            FilterKind::Gaussian => FilterSpec::gaussian(eps),
            FilterKind::IdealLowPass => FilterSpec::low_pass(1.0 / eps),
            FilterKind::ExpDecay => FilterSpec::exp_decay(eps),
        }
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::Gaussian { .. } => FilterKind::Gaussian,
            FilterSpec::IdealLowPass { .. } => FilterKind::IdealLowPass,
            FilterSpec::ExpDecay { .. } => FilterKind::ExpDecay,
        }
    }

    /// Time scale of the kernel, `None` for the purely spectral low-pass.
    fn time_scale(&self) -> Option<(f64, f64)> {
        match *self {
            FilterSpec::Gaussian {
                eps,
                truncation_radius,
            } => Some((eps, truncation_radius)),
            FilterSpec::ExpDecay {
                decay,
                truncation_radius,
            } => Some((decay, truncation_radius)),
            FilterSpec::IdealLowPass { .. } => None,
        }
    }

    pub fn validate(&self, h: f64) -> Result<()> {
        match *self {
            FilterSpec::Gaussian {
                eps,
                truncation_radius,
            } => {
                if !(eps > 0.0 && truncation_radius > 0.0) {
                    return Err(Error::InvalidSpec("gaussian filter needs eps > 0".into()));
                }
                if eps < 2.0 * h {
                    return Err(Error::UnderResolved { eps, h });
                }
            }
            FilterSpec::ExpDecay {
                decay,
                truncation_radius,
            } => {
                if !(decay > 0.0 && truncation_radius > 0.0) {
                    return Err(Error::InvalidSpec(
                        "exp-decay filter needs decay > 0".into(),
                    ));
                }
                if decay < 2.0 * h {
                    return Err(Error::UnderResolved { eps: decay, h });
                }
            }
            FilterSpec::IdealLowPass { cutoff } => {
                let cutoff_ok = cutoff > 0.0;
                if !cutoff_ok {
                    return Err(Error::InvalidSpec(
                        "low-pass filter needs cutoff > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Discretized, truncated, unit-mass smoothing kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub h: f64,
    /// Support is `[-half_width, half_width]` in node counts.
    pub half_width: usize,
    /// `2 * half_width + 1` weights, symmetric, summing to one.
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, offset: isize) -> f64 {
        self.weights[(offset + self.half_width as isize) as usize]
    }

    /// Sum of `w_j * (j h)^2`, the discrete second moment.
    pub fn second_moment(&self) -> f64 {
        let w = self.half_width as isize;
        (-w..=w)
            .map(|j| self.weight(j) * (j as f64 * self.h).powi(2))
            .sum()
    }
}

/// Builds the time-domain kernel of a filter.
///
/// The ideal low-pass has no integrable time-domain kernel and is applied
/// spectrally; asking for its kernel is an error.
pub fn build_kernel(f: &FilterSpec, h: f64) -> Result<Kernel> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("step h = {h} must be positive")));
    }
    f.validate(h)?;
    let Some((scale, radius)) = f.time_scale() else {
        return Err(Error::NoTimeDomainKernel("ideal low-pass"));
    };
    let half_width = (radius * scale / h).round() as usize;
    let density: Box<dyn Fn(f64) -> f64> = match f {
        FilterSpec::Gaussian { eps, .. } => {
            let e = *eps;
            Box::new(move |t: f64| {
                (-0.5 * (t / e) * (t / e)).exp() / (e * (2.0 * std::f64::consts::PI).sqrt())
            })
        }
        FilterSpec::ExpDecay { decay, .. } => {
            let c = *decay;
            Box::new(move |t: f64| c / (std::f64::consts::PI * (c * c + t * t)))
        }
        FilterSpec::IdealLowPass { .. } => unreachable!(),
    };
    let w = half_width as isize;
    let mut weights: Vec<f64> = (-w..=w).map(|j| density(j as f64 * h)).collect();
    let mass: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= mass);
    Ok(Kernel {
        h,
        half_width,
        weights,
    })
}

/// Frequency gain of a filter at angular frequency `nu`.
pub fn kernel_frequency_response(f: &FilterSpec, nu: f64) -> f64 {
    match *f {
        FilterSpec::Gaussian { eps, .. } => (-0.5 * eps * eps * nu * nu).exp(),
        FilterSpec::IdealLowPass { cutoff } => {
            if nu.abs() <= cutoff {
                1.0
            } else {
                0.0
            }
        }
        FilterSpec::ExpDecay { decay, .. } => (-decay * nu.abs()).exp(),
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Full linear convolution of `x` (zero-extended) with the kernel.
///
/// Output has length `x.len() + 2 * half_width`; entry `j` is the result at
/// time offset `(j - half_width) * h` from `x[0]`.
pub(crate) fn convolve_full(x: &[f64], kernel: &Kernel) -> Vec<f64> {
    let n = x.len();
    let w = kernel.half_width;
    if kernel.taps() <= DIRECT_CONV_MAX_TAPS {
        let mut out = vec![0.0; n + 2 * w];
        for (j, o) in out.iter_mut().enumerate() {
            // out[j] = sum_k weight[k] * x[j - w - k], k in [-w, w].
            let t = j as isize - w as isize;
            let k_lo = (-(w as isize)).max(t - (n as isize - 1));
            let k_hi = (w as isize).min(t);
            let mut acc = 0.0;
            for k in k_lo..=k_hi {
                acc += kernel.weight(k) * x[(t - k) as usize];
            }
            *o = acc;
        }
        out
    } else {
        let m = next_pow2(n + 2 * w + 1);
        let mut xb = vec![Complex64::default(); m];
        for (i, &v) in x.iter().enumerate() {
            xb[i].re = v;
        }
        let mut kb = vec![Complex64::default(); m];
        kb[0].re = kernel.weight(0);
        for j in 1..=w {
            kb[j].re = kernel.weight(j as isize);
            kb[m - j].re = kernel.weight(-(j as isize));
        }
        fft_forward(&mut xb);
        fft_forward(&mut kb);
        for (a, b) in xb.iter_mut().zip(&kb) {
            *a *= b;
        }
        fft_inverse(&mut xb);
        // Circular index (j - w) mod m recovers the linear convolution since
        // m >= n + 2w + 1 leaves no wrap-around overlap.
        (0..n + 2 * w).map(|j| xb[(j + m - w) % m].re).collect()
    }
}

fn low_pass_values(x: &[f64], h: f64, cutoff: f64) -> Vec<f64> {
    let n = x.len();
    let m = next_pow2(2 * n);
    let mut buf = vec![Complex64::default(); m];
    for (i, &v) in x.iter().enumerate() {
        buf[i].re = v;
    }
    fft_forward(&mut buf);
    for (j, z) in buf.iter_mut().enumerate() {
        let nu = bin_frequency(j, m, h);
        if nu.abs() > cutoff {
            *z = Complex64::default();
        }
    }
    fft_inverse(&mut buf);
    buf[..n].iter().map(|z| z.re).collect()
}

/// Angular frequency of FFT bin `j` for an `m`-point transform at spacing `h`.
fn bin_frequency(j: usize, m: usize, h: f64) -> f64 {
    let signed = if j <= m / 2 {
        j as f64
    } else {
        j as f64 - m as f64
    };
    2.0 * std::f64::consts::PI * signed / (m as f64 * h)
}

/// Smooths a raw series sampled at spacing `h`, treating it as zero outside
/// its support.
pub fn mollify_values(x: &[f64], f: &FilterSpec, h: f64) -> Result<Vec<f64>> {
    f.validate(h)?;
    match f {
        FilterSpec::IdealLowPass { cutoff } => Ok(low_pass_values(x, h, *cutoff)),
        _ => {
            let kernel = build_kernel(f, h)?;
            let w = kernel.half_width;
            let full = convolve_full(x, &kernel);
            Ok(full[w..w + x.len()].to_vec())
        }
    }
}

/// Smooths the coefficients of a boundary-extended path.
///
/// For kernel filters the support must stay inside the extended grid when
/// the output is evaluated on the model window, i.e. the kernel half-width
/// may not exceed the flank length; this is what keeps the smoothed
/// volatility positive there.
pub fn mollify_path(path: &ParamPath, f: &FilterSpec) -> Result<ParamPath> {
    if path.domain != PathDomain::Extended {
        return Err(Error::NotExtended);
    }
    let h = path.grid.h();
    f.validate(h)?;
    if let Some((scale, radius)) = f.time_scale() {
        let half_width = (radius * scale / h).round() as usize;
        if half_width > path.grid.flank_steps() {
            return Err(Error::KernelWindowExceedsDomain {
                half_width: half_width as f64 * h,
                flank: path.grid.flank(),
            });
        }
    }
    Ok(ParamPath {
        grid: path.grid.clone(),
        a: mollify_values(&path.a, f, h)?,
        sigma: mollify_values(&path.sigma, f, h)?,
        factor: path.factor.clone(),
        domain: PathDomain::Extended,
    })
}

/// Checks the Fourier convolution identity `out_hat = gain * in_hat`.
///
/// Both components of the pair are zero-padded to at least twice their
/// length and transformed; the return value is the largest over frequency
/// bins and components of `|out_hat - gain(nu) * in_hat|`, relative to the
/// peak input spectrum. For kernel filters the convolution's spill beyond
/// the grid is reconstructed from the input first, so the comparison sees
/// the full linear convolution rather than its truncation.
pub fn spectral_identity_check(
    path: &ParamPath,
    mollified: &ParamPath,
    f: &FilterSpec,
) -> Result<f64> {
    if path.grid != mollified.grid {
        return Err(Error::GridMismatch);
    }
    let h = path.grid.h();
    f.validate(h)?;
    let kernel = match f {
        FilterSpec::IdealLowPass { .. } => None,
        _ => Some(build_kernel(f, h)?),
    };
    let mut worst = 0.0f64;
    for (input, output) in [(&path.a, &mollified.a), (&path.sigma, &mollified.sigma)] {
        let dev = component_deviation(input, output, f, kernel.as_ref(), h);
        worst = worst.max(dev);
    }
    Ok(worst)
}

fn component_deviation(
    x: &[f64],
    y: &[f64],
    f: &FilterSpec,
    kernel: Option<&Kernel>,
    h: f64,
) -> f64 {
    let n = x.len();
    let w = kernel.map_or(0, |k| k.half_width);
    let m = next_pow2((2 * n).max(n + 2 * w + 1));
    // Common time origin: buffer slot p holds time (p - w) * h from x[0].
    let mut xb = vec![Complex64::default(); m];
    for (i, &v) in x.iter().enumerate() {
        xb[w + i].re = v;
    }
    let mut yb = vec![Complex64::default(); m];
    match kernel {
        Some(k) => {
            let full = convolve_full(x, k);
            for (j, slot) in yb.iter_mut().enumerate().take(n + 2 * w) {
                slot.re = if j >= w && j < w + n {
                    y[j - w]
                } else {
                    full[j]
                };
            }
        }
        None => {
            for (i, &v) in y.iter().enumerate() {
                yb[w + i].re = v;
            }
        }
    }
    fft_forward(&mut xb);
    fft_forward(&mut yb);
    let peak = xb.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..m {
        let gain = kernel_frequency_response(f, bin_frequency(j, m, h));
        let dev = (yb[j] - xb[j] * gain).norm();
        worst = worst.max(dev);
    }
    worst / peak
}
