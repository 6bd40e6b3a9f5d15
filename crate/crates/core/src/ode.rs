//! Fixed-step classical Runge-Kutta integration over flat `f64` state vectors.

/// Scratch buffers for [`rk4_step`], sized once per integration.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Rk4 {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advances `y` in place by one step of size `h` for the autonomous system `y' = f(y)`.
    pub fn step<F>(&mut self, y: &mut [f64], h: f64, f: &mut F)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = y.len();
        f(y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_fourth_order() {
        // y'' = -y over one period; halving h should cut the error by ~16.
        let err = |steps: usize| {
            let mut y = vec![1.0, 0.0];
            let h = 2.0 * std::f64::consts::PI / steps as f64;
            let mut rk = Rk4::new(2);
            let mut f = |s: &[f64], out: &mut [f64]| {
                out[0] = s[1];
                out[1] = -s[0];
            };
            for _ in 0..steps {
                rk.step(&mut y, h, &mut f);
            }
            ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt()
        };
        let ratio = err(64) / err(128);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
