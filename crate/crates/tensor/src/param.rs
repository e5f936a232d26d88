use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Gradients, Graph, Var};
use crate::{Scalar, Tensor};

/// A named trainable tensor with its gradient and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub momentum: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let momentum = Tensor::zeros(value.shape());
        Self { name: name.into(), value, grad: None, momentum }
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.fill(T::zero()),
            None => self.grad = Some(Tensor::zeros(self.value.shape())),
        }
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

/// Graph handles of a [`ParamStore`] bound into one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: HashMap<String, Var>,
    order: Vec<Var>,
}

impl Bound {
    /// Binds `names[i]` to `vars[i]`; used to feed externally created leaves.
    pub fn from_pairs(names: &[String], vars: &[Var]) -> Self {
        let vars_map = names.iter().cloned().zip(vars.iter().copied()).collect();
        Self { vars: vars_map, order: vars.to_vec() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        self.params.push(Parameter::new(name, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name).map(|p| &p.value).ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Creates one differentiable leaf per parameter.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let names = self.names();
        let vars: Vec<Var> = self.params.iter().map(|p| g.input(p.value.clone())).collect();
        Bound::from_pairs(&names, &vars)
    }

    /// Adds `scale * d(out)/d(param)` to every parameter's gradient.
    ///
    /// Parameters the output does not depend on receive an explicit zero.
    pub fn accumulate_grads(&mut self, bound: &Bound, grads: &Gradients<T>, scale: T) -> Result<()> {
        for p in &mut self.params {
            let var = bound.get(&p.name)?;
            let acc = p.grad.get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            if let Some(g) = grads.get(var) {
                if scale == T::one() {
                    acc.add_assign(g)?;
                } else {
                    acc.add_assign(&g.map(|v| v * scale))?;
                }
            }
        }
        Ok(())
    }

    /// Converts values to another precision; gradients and momentum reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { params: self.params.iter().map(|p| Parameter::new(p.name.clone(), p.value.cast())).collect() }
    }
}

/// Fan-in scaled uniform initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, bound, rng)
}
