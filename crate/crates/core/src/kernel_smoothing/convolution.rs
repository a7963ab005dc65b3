//! Kernel self-convolution constants `K*(x)` and `K₂*` that enter the
//! variance of the parallelism statistic.

use super::kernel::KernelSpec;

const TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

/// `K*(x) = ∫_{-1}^{1-2|x|} K(v) K(v + 2|x|) dv`; zero for `|x| >= 1`.
pub fn kstar(kernel: KernelSpec, x: f64) -> f64 {
    let shift = 2.0 * x.abs();
    let upper = 1.0 - shift;
    if upper <= -1.0 {
        return 0.0;
    }
    adaptive_simpson(&|v| kernel.eval(v) * kernel.eval(v + shift), -1.0, upper, TOL)
}

/// `K₂* = ∫_{-1}^{1} K*(v)^2 dv`.
pub fn kstar2(kernel: KernelSpec) -> f64 {
    // K* is even and may have a kink at 0, so integrate one half.
    2.0 * adaptive_simpson(&|v| kstar(kernel, v).powi(2), 0.0, 1.0, TOL)
}

/// Cached pair of convolution constants for a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConvolution {
    pub kernel: KernelSpec,
    pub kstar0: f64,
    pub kstar2: f64,
}

impl KernelConvolution {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            kstar0: kstar(kernel, 0.0),
            kstar2: kstar2(kernel),
        }
    }

    pub fn kstar(&self, x: f64) -> f64 {
        kstar(self.kernel, x)
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Force a few levels so polynomial pieces are not accepted by accident.
    if depth == 0 || (depth < MAX_DEPTH - 3 && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
