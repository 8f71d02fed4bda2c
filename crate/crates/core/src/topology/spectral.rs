//! Periodic 3-D FFTs over the node lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, forward, inverse }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..3 {
            self.axis(data, axis, &self.forward[axis]);
        }
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..3 {
            self.axis(data, axis, &self.inverse[axis]);
        }
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn axis(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let [nx, ny, nz] = self.dims;
        match axis {
            0 => data.par_chunks_mut(nx).for_each(|line| plan.process(line)),
            1 => data.par_chunks_mut(nx * ny).for_each(|plane| {
                let mut line = vec![Complex64::default(); ny];
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = plane[i + nx * j];
                    }
                    plan.process(&mut line);
                    for j in 0..ny {
                        plane[i + nx * j] = line[j];
                    }
                }
            }),
            _ => {
                let plane = nx * ny;
                let lines: Vec<Vec<Complex64>> = (0..plane)
                    .into_par_iter()
                    .map(|col| {
                        let mut line: Vec<Complex64> = (0..nz).map(|k| data[col + plane * k]).collect();
                        plan.process(&mut line);
                        line
                    })
                    .collect();
                for (col, line) in lines.into_iter().enumerate() {
                    for (k, v) in line.into_iter().enumerate() {
                        data[col + plane * k] = v;
                    }
                }
            }
        }
    }
}

/// Angle `2π m / n` of mode `m` along an axis of length `n`.
#[inline]
pub(crate) fn mode_angle(m: usize, n: usize) -> f64 {
    2.0 * PI * m as f64 / n as f64
}

/// Physical wavenumber of mode `m`, aliased into `[-n/2, n/2)`.
#[inline]
pub(crate) fn wavenumber(m: usize, n: usize, h: f64) -> f64 {
    let s = if 2 * m >= n { m as f64 - n as f64 } else { m as f64 };
    2.0 * PI * s / (n as f64 * h)
}
