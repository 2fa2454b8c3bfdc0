use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Binding, Conv2d, Linear, ParamStore};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A compact CNN classifier: two stride-2 conv blocks, global average
/// pooling, linear head. Used as a co-teaching peer and as the clean-trained
/// evaluation classifier (its pooled features double as the embedding space
/// for the distribution metrics).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallCnnConfig {
    pub image_size: usize,
    pub image_channels: usize,
    pub num_classes: usize,
    pub width: usize,
}

impl SmallCnnConfig {
    pub fn desk_scale(num_classes: usize) -> Self {
        SmallCnnConfig {
            image_size: 32,
            image_channels: 3,
            num_classes,
            width: 16,
        }
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % 4 != 0 {
            return Err(Error::invalid_spec(format!(
                "classifier image_size {} not divisible by 4",
                self.image_size
            )));
        }
        if self.num_classes < 2 || self.width == 0 {
            return Err(Error::invalid_spec(
                "classifier needs num_classes >= 2 and width >= 1",
            ));
        }
        Ok(())
    }
}

pub struct SmallCnn {
    pub config: SmallCnnConfig,
    conv1: Conv2d,
    conv2: Conv2d,
    head: Linear,
}

impl SmallCnn {
    pub fn build<T: Scalar>(
        config: SmallCnnConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let conv1 = Conv2d::new(store, "cls.c1", config.image_channels, w, 3, 2, 1, true, rng);
        let conv2 = Conv2d::new(store, "cls.c2", w, 2 * w, 3, 2, 1, true, rng);
        let head = Linear::new(store, "cls.head", 2 * w, config.num_classes, rng);
        Ok(SmallCnn {
            config,
            conv1,
            conv2,
            head,
        })
    }

    /// Pooled penultimate features, (N, 2*width).
    pub fn features<'t, T: Scalar>(
        &self,
        p: &Binding<'t, T>,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.len() != 4
            || shape[1] != self.config.image_channels
            || shape[2] != self.config.image_size
            || shape[3] != self.config.image_size
        {
            return Err(Error::invalid_input(format!(
                "classifier expects (N,{},{},{}), got {:?}",
                self.config.image_channels, self.config.image_size, self.config.image_size, shape
            )));
        }
        let h = self.conv1.forward(p, x).relu();
        let h = self.conv2.forward(p, h).relu();
        let hs = h.shape();
        let (n, c) = (hs[0], hs[1]);
        Ok(h.sum_to(&[n, c, 1, 1])
            .scale(T::from_f64(1.0 / (hs[2] * hs[3]) as f64))
            .reshape(&[n, c]))
    }

    /// Class logits, (N, num_classes).
    pub fn logits<'t, T: Scalar>(&self, p: &Binding<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.head.forward(p, self.features(p, x)?))
    }
}
