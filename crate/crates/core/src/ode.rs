//! Explicit Runge-Kutta integrators for complex linear systems.

use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("output times must be sorted and not before the initial time")]
    UnsortedTimes,
}

fn axpy(out: &mut [C64], y: &[C64], h: f64, k: &[C64]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(k) {
        *o = a + b * h;
    }
}

/// Classical 4th-order Runge-Kutta with a fixed maximum step; each output
/// time is hit exactly by shortening the last step of every interval.
pub fn rk4<F>(mut f: F, t0: f64, y0: &[C64], times: &[f64], max_step: f64) -> Result<Vec<Vec<C64>>, OdeError>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(OdeError::UnsortedTimes);
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]);
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        let steps = (span / max_step).ceil().max(0.0) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                f(t, &y, &mut k1);
                axpy(&mut tmp, &y, 0.5 * h, &k1);
                f(t + 0.5 * h, &tmp, &mut k2);
                axpy(&mut tmp, &y, 0.5 * h, &k2);
                f(t + 0.5 * h, &tmp, &mut k3);
                axpy(&mut tmp, &y, h, &k3);
                f(t + h, &tmp, &mut k4);
                for i in 0..n {
                    y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
                }
                t += h;
            }
        }
        t = target;
        out.push(y.clone());
    }
    Ok(out)
}

/// Adaptive Dormand-Prince 5(4) integrator.
#[derive(Clone, Copy, Debug)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for DormandPrince {
    fn default() -> Self {
        DormandPrince {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-3,
            max_step: 0.1,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl DormandPrince {
    pub fn integrate<F>(&self, mut f: F, t0: f64, y0: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>, OdeError>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
            return Err(OdeError::UnsortedTimes);
        }
        let n = y0.len();
        let zero = C64::default();
        let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![zero; n]).collect();
        let mut tmp = vec![zero; n];
        let mut y_new = vec![zero; n];
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut h = self.initial_step.min(self.max_step);
        let mut out = Vec::with_capacity(times.len());
        f(t, &y, &mut k[0]);

        for &target in times {
            while t < target {
                let last = t + h >= target;
                let step = if last { target - t } else { h };
                if step < 1e-14 * (1.0 + t.abs()) && !last {
                    return Err(OdeError::StepUnderflow(t));
                }
                let stage = |tmp: &mut Vec<C64>, k: &Vec<Vec<C64>>, coeffs: &[(usize, f64)]| {
                    for i in 0..n {
                        let mut acc = y[i];
                        for &(s, a) in coeffs {
                            acc += k[s][i] * (a * step);
                        }
                        tmp[i] = acc;
                    }
                };
                stage(&mut tmp, &k, &[(0, A21)]);
                f(t + C2 * step, &tmp, &mut k[1]);
                stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
                f(t + C3 * step, &tmp, &mut k[2]);
                stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
                f(t + C4 * step, &tmp, &mut k[3]);
                stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
                f(t + C5 * step, &tmp, &mut k[4]);
                stage(&mut tmp, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
                f(t + step, &tmp, &mut k[5]);
                for i in 0..n {
                    y_new[i] = y[i]
                        + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * step;
                }
                f(t + step, &y_new, &mut k[6]);
                let mut err_sq = 0.0;
                for i in 0..n {
                    let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7)
                        * step;
                    let scale = self.atol + self.rtol * y[i].norm().max(y_new[i].norm());
                    err_sq += (e.norm() / scale).powi(2);
                }
                let err = (err_sq / n.max(1) as f64).sqrt();
                if err <= 1.0 {
                    t = if last { target } else { t + step };
                    std::mem::swap(&mut y, &mut y_new);
                    let (first, rest) = k.split_at_mut(6);
                    std::mem::swap(&mut first[0], &mut rest[0]);
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !(last && err <= 1.0) {
                    h = (step * factor).min(self.max_step);
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // y' = -i ω y - γ y
    fn decay(t: f64) -> C64 {
        C64::new(0.0, -2.0 * t).exp() * (-0.3 * t).exp()
    }

    fn rhs(_t: f64, y: &[C64], dy: &mut [C64]) {
        dy[0] = C64::new(-0.3, -2.0) * y[0];
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let times = [0.5, 1.0, 3.0];
        let coarse = rk4(rhs, 0.0, &[C64::new(1.0, 0.0)], &times, 0.02).unwrap();
        let fine = rk4(rhs, 0.0, &[C64::new(1.0, 0.0)], &times, 0.01).unwrap();
        let ec = (coarse[2][0] - decay(3.0)).norm();
        let ef = (fine[2][0] - decay(3.0)).norm();
        assert!(ef < 1e-8);
        let ratio = ec / ef;
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn dormand_prince_hits_requested_times() {
        let times = [0.0, 0.1, 2.0, 2.0, 7.5];
        let out = DormandPrince::default()
            .integrate(rhs, 0.0, &[C64::new(1.0, 0.0)], &times)
            .unwrap();
        for (t, y) in times.iter().zip(&out) {
            assert!((y[0] - decay(*t)).norm() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn unsorted_times_rejected() {
        assert_eq!(
            rk4(rhs, 0.0, &[C64::new(1.0, 0.0)], &[1.0, 0.5], 0.1).unwrap_err(),
            OdeError::UnsortedTimes
        );
    }
}
