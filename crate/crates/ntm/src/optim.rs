//! RMSprop and global-norm clipping.

use matcap_core::Mat;

pub const RMS_DECAY: f64 = 0.99;
pub const RMS_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    /// Running mean of squared gradients, one matrix per parameter.
    pub acc: Vec<Mat>,
}

impl RmsProp {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        RmsProp {
            decay: RMS_DECAY,
            eps: RMS_EPS,
            acc: shapes.into_iter().map(|(r, c)| Mat::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[Mat]) -> Self {
        Self::new(params.iter().map(Mat::shape))
    }

    /// `acc <- d acc + (1-d) g^2`, `theta <- theta - lr g / (sqrt(acc) + eps)`.
    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count");
        assert_eq!(params.len(), self.acc.len(), "parameter/accumulator count");
        let d = self.decay;
        for ((p, g), a) in params.iter_mut().zip(grads).zip(&mut self.acc) {
            assert_eq!(p.shape(), g.shape(), "parameter/gradient shape");
            for ((x, gi), ai) in p.data_mut().iter_mut().zip(g.data()).zip(a.data_mut()) {
                *ai = d * *ai + (1.0 - d) * gi * gi;
                *x -= lr * gi / (ai.sqrt() + self.eps);
            }
        }
    }
}

pub fn global_norm(grads: &[Mat]) -> f64 {
    grads.iter().map(Mat::frobenius_norm_sq).sum::<f64>().sqrt()
}

/// Rescales so the global norm is at most `max_norm`; returns the norm before.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}
