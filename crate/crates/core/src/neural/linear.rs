use crate::autodiff::{Element, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Affine map `x · Wᵀ + b` with `W: [out x in]`, `b: [out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    in_features: usize,
    out_features: usize,
}

impl Linear {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.register(format!("{name}.weight"), &[out_features, in_features])?,
            bias: store.register(format!("{name}.bias"), &[out_features])?,
            in_features,
            out_features,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        if tape.shape(x).last() != Some(&self.in_features) {
            return Err(Error::shape(
                "linear",
                tape.shape(x),
                &[self.out_features, self.in_features],
            ));
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul_t(x, w)?;
        tape.add(xw, b)
    }
}
