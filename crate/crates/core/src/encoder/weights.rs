use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ModelConfig;
use crate::error::{bail, Result};
use crate::numcore::Tensor;
use crate::rng::{self, streams};

/// Initialisation scale of projection and embedding matrices.
pub const INIT_STD: f32 = 0.02;

/// One pre-norm transformer block. Matrices are `[in×out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_gamma: T,
    pub ln1_beta: T,
    pub q_weight: T,
    pub q_bias: T,
    pub k_weight: T,
    pub k_bias: T,
    pub v_weight: T,
    pub v_bias: T,
    pub o_weight: T,
    pub o_bias: T,
    pub ln2_gamma: T,
    pub ln2_beta: T,
    pub ffn_in_weight: T,
    pub ffn_in_bias: T,
    pub ffn_out_weight: T,
    pub ffn_out_bias: T,
}

const LAYER_FIELDS: [&str; 16] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.q.weight",
    "attn.q.bias",
    "attn.k.weight",
    "attn.k.bias",
    "attn.v.weight",
    "attn.v.bias",
    "attn.o.weight",
    "attn.o.bias",
    "ln2.gamma",
    "ln2.beta",
    "ffn.in.weight",
    "ffn.in.bias",
    "ffn.out.weight",
    "ffn.out.bias",
];

impl<T> LayerWeights<T> {
    fn fields(&self) -> [&T; 16] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.q_weight,
            &self.q_bias,
            &self.k_weight,
            &self.k_bias,
            &self.v_weight,
            &self.v_bias,
            &self.o_weight,
            &self.o_bias,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.ffn_in_weight,
            &self.ffn_in_bias,
            &self.ffn_out_weight,
            &self.ffn_out_bias,
        ]
    }

    fn fields_mut(&mut self) -> [&mut T; 16] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.q_weight,
            &mut self.q_bias,
            &mut self.k_weight,
            &mut self.k_bias,
            &mut self.v_weight,
            &mut self.v_bias,
            &mut self.o_weight,
            &mut self.o_bias,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.ffn_in_weight,
            &mut self.ffn_in_bias,
            &mut self.ffn_out_weight,
            &mut self.ffn_out_bias,
        ]
    }

    fn from_fields(mut it: impl Iterator<Item = T>) -> Option<Self> {
        Some(Self {
            ln1_gamma: it.next()?,
            ln1_beta: it.next()?,
            q_weight: it.next()?,
            q_bias: it.next()?,
            k_weight: it.next()?,
            k_bias: it.next()?,
            v_weight: it.next()?,
            v_bias: it.next()?,
            o_weight: it.next()?,
            o_bias: it.next()?,
            ln2_gamma: it.next()?,
            ln2_beta: it.next()?,
            ffn_in_weight: it.next()?,
            ffn_in_bias: it.next()?,
            ffn_out_weight: it.next()?,
            ffn_out_bias: it.next()?,
        })
    }
}

/// All encoder parameters. `T` is a [`Tensor`] at rest or a tape handle
/// during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub token_embeddings: T,
    pub position_embeddings: T,
    pub layers: Vec<LayerWeights<T>>,
    pub final_ln_gamma: T,
    pub final_ln_beta: T,
    /// `[hidden×vocab]` projection; `None` when tied to the token embeddings.
    pub mlm_weight: Option<T>,
    pub mlm_bias: T,
    pub cls_weight: T,
    pub cls_bias: T,
}

impl<T> ModelWeights<T> {
    /// Parameters in manifest order with their canonical names.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out: Vec<(String, &T)> = Vec::new();
        out.push(("embeddings.token".into(), &self.token_embeddings));
        out.push(("embeddings.position".into(), &self.position_embeddings));
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.fields()) {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("final_ln.gamma".into(), &self.final_ln_gamma));
        out.push(("final_ln.beta".into(), &self.final_ln_beta));
        if let Some(w) = &self.mlm_weight {
            out.push(("mlm.weight".into(), w));
        }
        out.push(("mlm.bias".into(), &self.mlm_bias));
        out.push(("cls.weight".into(), &self.cls_weight));
        out.push(("cls.bias".into(), &self.cls_bias));
        out
    }

    /// Applies `f` to every parameter in manifest order.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &T) -> core::result::Result<U, E>) -> core::result::Result<ModelWeights<U>, E> {
        let named = self.named();
        let mut mapped = Vec::with_capacity(named.len());
        for (name, t) in &named {
            mapped.push(f(name, t)?);
        }
        Ok(ModelWeights::<U>::from_ordered(mapped, self.layers.len(), self.mlm_weight.is_some())
            .expect("manifest order is self-consistent"))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelWeights<U> {
        self.try_map::<U, core::convert::Infallible>(|n, t| Ok(f(n, t)))
            .unwrap_or_else(|e| match e {})
    }

    /// Mutable parameters in manifest order.
    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = Vec::new();
        out.push(&mut self.token_embeddings);
        out.push(&mut self.position_embeddings);
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        out.push(&mut self.final_ln_gamma);
        out.push(&mut self.final_ln_beta);
        if let Some(w) = &mut self.mlm_weight {
            out.push(w);
        }
        out.push(&mut self.mlm_bias);
        out.push(&mut self.cls_weight);
        out.push(&mut self.cls_bias);
        out
    }

    fn from_ordered(values: Vec<T>, layers: usize, untied: bool) -> Option<Self> {
        let mut it = values.into_iter();
        let token_embeddings = it.next()?;
        let position_embeddings = it.next()?;
        let mut ls = Vec::with_capacity(layers);
        for _ in 0..layers {
            ls.push(LayerWeights::from_fields(&mut it)?);
        }
        let final_ln_gamma = it.next()?;
        let final_ln_beta = it.next()?;
        let mlm_weight = if untied { Some(it.next()?) } else { None };
        let w = Self {
            token_embeddings,
            position_embeddings,
            layers: ls,
            final_ln_gamma,
            final_ln_beta,
            mlm_weight,
            mlm_bias: it.next()?,
            cls_weight: it.next()?,
            cls_bias: it.next()?,
        };
        it.next().is_none().then_some(w)
    }

    /// Whether a named parameter is exempt from weight decay.
    pub fn is_no_decay(name: &str) -> bool {
        name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta")
    }
}

/// Expected `(name, shape)` manifest for `config`.
pub fn manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = config.hidden_dim;
    let f = config.ffn_dim;
    let v = config.vocab_size;
    let layer_shapes: [Vec<usize>; 16] = [
        alloc::vec![h],
        alloc::vec![h],
        alloc::vec![h, h],
        alloc::vec![h],
        alloc::vec![h, h],
        alloc::vec![h],
        alloc::vec![h, h],
        alloc::vec![h],
        alloc::vec![h, h],
        alloc::vec![h],
        alloc::vec![h],
        alloc::vec![h],
        alloc::vec![h, f],
        alloc::vec![f],
        alloc::vec![f, h],
        alloc::vec![h],
    ];
    let skeleton = ModelWeights {
        token_embeddings: alloc::vec![v, h],
        position_embeddings: alloc::vec![config.max_positions, h],
        layers: (0..config.num_layers)
            .map(|_| LayerWeights::from_fields(layer_shapes.iter().cloned()).expect("16 shapes"))
            .collect(),
        final_ln_gamma: alloc::vec![h],
        final_ln_beta: alloc::vec![h],
        mlm_weight: (!config.tie_mlm_head).then(|| alloc::vec![h, v]),
        mlm_bias: alloc::vec![v],
        cls_weight: alloc::vec![h, config.num_tags],
        cls_bias: alloc::vec![config.num_tags],
    };
    skeleton
        .named()
        .into_iter()
        .map(|(n, s)| (n, s.clone()))
        .collect()
}

impl ModelWeights<Tensor> {
    /// Seeded initialisation: matrices `N(0, 0.02²)`, norm scales one,
    /// everything else zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, streams::INIT);
        let tensors = manifest(config)
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".gamma") {
                    Tensor::full(&shape, 1.0)
                } else if shape.len() == 2 {
                    Tensor::randn(&shape, INIT_STD, &mut r)
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        Ok(Self::from_ordered(tensors, config.num_layers, !config.tie_mlm_head).expect("manifest matches layout"))
    }

    /// All-zero weights of the right shapes.
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = manifest(config).into_iter().map(|(_, s)| Tensor::zeros(&s)).collect();
        Self::from_ordered(tensors, config.num_layers, !config.tie_mlm_head).expect("manifest matches layout")
    }

    /// Rebuilds weights from named tensors, checking names and shapes
    /// against the manifest of `config`.
    pub fn from_named(config: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = manifest(config);
        if tensors.len() != expected.len() {
            bail!(
                Contract,
                "{} tensors supplied, config expects {}",
                tensors.len(),
                expected.len()
            );
        }
        let mut values = Vec::with_capacity(tensors.len());
        for ((name, t), (ename, eshape)) in tensors.into_iter().zip(expected) {
            if name != ename {
                bail!(Contract, "tensor `{name}` where `{ename}` was expected");
            }
            if t.shape() != &eshape[..] {
                bail!(Contract, "tensor `{name}` has shape {:?}, expected {eshape:?}", t.shape());
            }
            values.push(t);
        }
        Ok(Self::from_ordered(values, config.num_layers, !config.tie_mlm_head).expect("manifest matches layout"))
    }

    /// Checks shapes against `config` and that every value is finite.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = manifest(config);
        let named = self.named();
        if named.len() != expected.len() {
            bail!(Contract, "weights do not match config layout");
        }
        for ((name, t), (_, shape)) in named.iter().zip(&expected) {
            if t.shape() != &shape[..] {
                bail!(Contract, "tensor `{name}` has shape {:?}, expected {shape:?}", t.shape());
            }
            if !t.is_finite() {
                bail!(Numeric, "tensor `{name}` holds non-finite values");
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Bitwise equality of every tensor.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let a = self.named();
        let b = other.named();
        a.len() == b.len() && a.iter().zip(&b).all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    /// Name → tensor lookup.
    pub fn by_name(&self) -> BTreeMap<String, &Tensor> {
        self.named().into_iter().collect()
    }
}
