use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};

/// Target-domain conditioning of a batch: either one categorical label per
/// sample or one binary attribute vector per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Conditioning {
    Labels(Vec<usize>),
    Attributes(Vec<Vec<bool>>),
}

impl Conditioning {
    pub fn batch_len(&self) -> usize {
        match self {
            Conditioning::Labels(l) => l.len(),
            Conditioning::Attributes(a) => a.len(),
        }
    }

    pub fn validate(&self, num_domains: usize) -> Result<()> {
        match self {
            Conditioning::Labels(labels) => {
                if let Some(&bad) = labels.iter().find(|&&y| y >= num_domains) {
                    return Err(Error::invalid_input(format!(
                        "label {bad} out of range for {num_domains} domains"
                    )));
                }
            }
            Conditioning::Attributes(attrs) => {
                if let Some(bad) = attrs.iter().find(|a| a.len() != num_domains) {
                    return Err(Error::invalid_input(format!(
                        "attribute vector of length {}, expected {num_domains}",
                        bad.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The conditioning planes as a dense (N, c, H, W) array.
pub fn one_hot_planes<T: Scalar>(
    cond: &Conditioning,
    num_domains: usize,
    n: usize,
    h: usize,
    w: usize,
) -> Result<ArrayD<T>> {
    cond.validate(num_domains)?;
    if cond.batch_len() != n {
        return Err(Error::invalid_input(format!(
            "conditioning batch {} does not match image batch {n}",
            cond.batch_len()
        )));
    }
    let mut planes = ArrayD::<T>::zeros(IxDyn(&[n, num_domains, h, w]));
    match cond {
        Conditioning::Labels(labels) => {
            for (i, &y) in labels.iter().enumerate() {
                planes
                    .slice_mut(ndarray::s![i, y, .., ..].as_ref())
                    .fill(T::one());
            }
        }
        Conditioning::Attributes(attrs) => {
            for (i, a) in attrs.iter().enumerate() {
                for (j, &bit) in a.iter().enumerate() {
                    if bit {
                        planes
                            .slice_mut(ndarray::s![i, j, .., ..].as_ref())
                            .fill(T::one());
                    }
                }
            }
        }
    }
    Ok(planes)
}

/// Broadcast the target label as constant spatial planes and concatenate
/// them onto the image's channel axis: (N,C,H,W) -> (N,C+c,H,W).
pub fn condition_concat<'t, T: Scalar>(
    x: Var<'t, T>,
    cond: &Conditioning,
    num_domains: usize,
) -> Result<Var<'t, T>> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(Error::invalid_input(format!(
            "expected NCHW image batch, got shape {shape:?}"
        )));
    }
    let planes = one_hot_planes::<T>(cond, num_domains, shape[0], shape[2], shape[3])?;
    let planes = x.tape().constant(planes);
    Ok(x.concat_c(&[planes]))
}
