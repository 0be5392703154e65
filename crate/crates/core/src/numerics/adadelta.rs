use super::{NumericsError, ParamStore, Tensor};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// AdaDelta running averages, one pair of tensors per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDelta {
    rho: f64,
    eps: f64,
    sq_grad: Vec<Tensor>,
    sq_delta: Vec<Tensor>,
}

impl AdaDelta {
    pub fn new(params: &ParamStore, rho: f64, eps: f64) -> Self {
        assert!(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
        assert!(eps > 0.0, "eps must be positive");
        let zeros = || -> Vec<Tensor> { params.ids().map(|id| Tensor::zeros(params.value(id).shape())).collect() };
        Self {
            rho,
            eps,
            sq_grad: zeros(),
            sq_delta: zeros(),
        }
    }

    /// Restores saved running averages; shapes must match `params`.
    pub fn from_state(
        params: &ParamStore,
        rho: f64,
        eps: f64,
        sq_grad: Vec<Tensor>,
        sq_delta: Vec<Tensor>,
    ) -> Result<Self, NumericsError> {
        for (i, id) in params.ids().enumerate() {
            let want = params.value(id).shape();
            for t in [sq_grad.get(i), sq_delta.get(i)] {
                match t {
                    Some(t) if t.shape() == want => {}
                    Some(t) => {
                        return Err(NumericsError::ShapeMismatch {
                            op: "adadelta_state",
                            left: want.to_vec(),
                            right: t.shape().to_vec(),
                        })
                    }
                    None => return Err(NumericsError::Empty("adadelta_state")),
                }
            }
        }
        if sq_grad.len() != params.len() || sq_delta.len() != params.len() {
            return Err(NumericsError::Empty("adadelta_state"));
        }
        let mut opt = Self::new(params, rho, eps);
        opt.sq_grad = sq_grad;
        opt.sq_delta = sq_delta;
        Ok(opt)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Running average of squared gradients for parameter `index`.
    pub fn sq_grad(&self, index: usize) -> &Tensor {
        &self.sq_grad[index]
    }

    /// Running average of squared updates for parameter `index`.
    pub fn sq_delta(&self, index: usize) -> &Tensor {
        &self.sq_delta[index]
    }

    /// Applies one update using the gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamStore) {
        let (values, grads) = params.values_and_grads_mut();
        for (i, (x, g)) in values.iter_mut().zip(grads).enumerate() {
            update_slice(
                x.data_mut(),
                g.data(),
                self.sq_grad[i].data_mut(),
                self.sq_delta[i].data_mut(),
                self.rho,
                self.eps,
            );
        }
    }
}

/// Elementwise AdaDelta update.
pub fn update_slice(x: &mut [f64], g: &[f64], eg2: &mut [f64], edx2: &mut [f64], rho: f64, eps: f64) {
    for (((x, &g), eg2), edx2) in x.iter_mut().zip(g).zip(eg2.iter_mut()).zip(edx2.iter_mut()) {
        // Exact-zero gradients leave both the parameter and its state alone.
        if g == 0.0 {
            continue;
        }
        *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
        let dx = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
        *edx2 = rho * *edx2 + (1.0 - rho) * dx * dx;
        *x += dx;
    }
}
