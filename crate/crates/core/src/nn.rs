//! Parameter storage and the small layer types the blocks are built from.

use std::collections::HashMap;
use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tride_autodiff::init::{kaiming_uniform, uniform};
use tride_autodiff::{ConvGeom, LstmWeights, Real, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::text::embed::fnv1a64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameters of one model, in creation order.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
    seed: u64,
}

impl<T: Real> ParamStore<T> {
    /// Parameters added to this store are initialised from per-name RNG
    /// streams derived from `seed`, so two models that share a layer name
    /// start with identical values for it.
    pub fn new(seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            seed,
        }
    }

    pub fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(name.as_bytes()))
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter '{name}'");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        ParamId(id)
    }

    pub fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let mut rng = self.rng_for(name);
        let t = kaiming_uniform(shape, fan_in, &mut rng);
        self.add(name, t)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let mut rng = self.rng_for(name);
        let t = uniform(shape, bound, &mut rng);
        self.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Puts every parameter on `tape`, as gradient leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Bound { vars }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
            seed: self.seed,
        }
    }

    pub fn to_named_f32(&self) -> Vec<(String, Tensor<f32>)> {
        self.names.iter().cloned().zip(self.tensors.iter().map(Tensor::cast)).collect()
    }

    /// Overwrites parameters from named tensors; every parameter must be
    /// present with a matching shape.
    pub fn load_named(&mut self, named: &[(String, Tensor<f32>)]) -> Result<()> {
        let lookup: HashMap<&str, &Tensor<f32>> = named.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, slot) in self.names.iter().zip(self.tensors.iter_mut()) {
            let t = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::contract(format!("checkpoint lacks parameter '{name}'")))?;
            if t.shape() != slot.shape() {
                return Err(Error::dim(format!(
                    "parameter '{name}': checkpoint shape {:?}, model shape {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.cast();
        }
        Ok(())
    }
}

/// Parameters placed on one tape.
pub struct Bound<'t, T: Real> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    /// Wraps vars that stand for a store's parameters, in store order (as in
    /// gradient checks, where parameters are perturbed as ordinary inputs).
    pub fn from_vars(vars: Vec<Var<'t, T>>) -> Self {
        Bound { vars }
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }
}

impl<'t, T: Real> Index<ParamId> for Bound<'t, T> {
    type Output = Var<'t, T>;

    fn index(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }
}

/// Square convolution with optional bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        bias: bool,
    ) -> Self {
        let weight = store.kaiming(&format!("{name}.weight"), &[c_out, c_in, k, k], c_in * k * k);
        let bias = bias.then(|| store.zeros(&format!("{name}.bias"), &[c_out]));
        Conv { weight, bias, geom }
    }

    /// Stride-1 "same" convolution.
    pub fn same<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        Self::new(store, name, c_in, c_out, k, ConvGeom::same(k, 1), true)
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(x.conv2d(p[self.weight], self.bias.map(|b| p[b]), self.geom)?)
    }
}

/// Affine map stored as `[in × out]` so row-batched inputs multiply directly.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.kaiming(&format!("{name}.weight"), &[d_in, d_out], d_in);
        let bias = store.zeros(&format!("{name}.bias"), &[d_out]);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    /// `[N × in] → [N × out]`.
    pub fn rows<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(x.matmul(p[self.weight])?.add(p[self.bias])?)
    }

    /// `[in] → [out]`.
    pub fn vector<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = self.rows(p, x.reshape(vec![1, self.d_in])?)?;
        Ok(y.reshape(vec![self.d_out])?)
    }
}

/// Parameters of one LSTM cell (input C → hidden C_t).
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d_in: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmParams {
            w_ih: store.uniform(&format!("{name}.w_ih"), &[4 * hidden, d_in], bound),
            w_hh: store.uniform(&format!("{name}.w_hh"), &[4 * hidden, hidden], bound),
            bias: store.zeros(&format!("{name}.bias"), &[4 * hidden]),
            hidden,
        }
    }

    pub fn weights<'t, T: Real>(&self, p: &Bound<'t, T>) -> LstmWeights<'t, T> {
        LstmWeights {
            w_ih: p[self.w_ih],
            w_hh: p[self.w_hh],
            bias: p[self.bias],
        }
    }
}
