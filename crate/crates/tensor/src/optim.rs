use crate::error::{Result, TensorError};
use crate::{ParamStore, Scalar};

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn step<T: Scalar>(&self, params: &mut ParamStore<T>) -> Result<()> {
        sgd_step(params, self.lr, self.momentum, self.weight_decay)
    }
}

/// `buf <- momentum*buf + grad + wd*value; value <- value - lr*buf`
///
/// Fails before touching any value if some parameter has no gradient.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(TensorError::MissingGradient(p.name.clone()));
    }
    let lr = T::from_f64_lossy(lr);
    let mu = T::from_f64_lossy(momentum);
    let wd = T::from_f64_lossy(weight_decay);
    for p in params.iter_mut() {
        let grad = p.grad.as_ref().expect("checked above");
        let values = p.value.data_mut();
        let buf = p.momentum.data_mut();
        for ((v, b), &g) in values.iter_mut().zip(buf.iter_mut()).zip(grad.data()) {
            *b = mu * *b + g + wd * *v;
            *v = *v - lr * *b;
        }
    }
    Ok(())
}
