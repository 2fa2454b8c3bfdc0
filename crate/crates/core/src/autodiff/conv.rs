use crate::scalar::Scalar;
use ndarray::{Array2, ArrayD, Ix4};

/// Geometry of a conv between an image (N,C,H,W) and its patch matrix.
///
/// `channels/height/width` always describe the image side of the pair, so the
/// same geometry drives both `im2col` and its adjoint `col2im`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn rows(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// (N,C,H,W) -> (N*OH*OW, C*KH*KW). Out-of-image taps read as zero.
pub(crate) fn im2col<T: Scalar>(x: &ArrayD<T>, g: ConvGeom) -> ArrayD<T> {
    let x4 = x.view().into_dimensionality::<Ix4>().unwrap();
    assert_eq!(
        x4.shape(),
        [g.batch, g.channels, g.height, g.width],
        "im2col input shape"
    );
    let (oh, ow, kk) = (g.out_h(), g.out_w(), g.patch_len());
    let mut out = Array2::<T>::zeros((g.rows(), kk));
    let xs = x4.as_standard_layout();
    let xs = xs.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let (h, w) = (g.height as isize, g.width as isize);
    for n in 0..g.batch {
        let x_n = n * g.channels * g.height * g.width;
        for oy in 0..oh {
            let iy0 = (oy * g.stride) as isize - g.pad as isize;
            for ox in 0..ow {
                let ix0 = (ox * g.stride) as isize - g.pad as isize;
                let row = ((n * oh + oy) * ow + ox) * kk;
                for c in 0..g.channels {
                    let x_c = x_n + c * g.height * g.width;
                    let r_c = row + c * g.kh * g.kw;
                    for ky in 0..g.kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        // clip the kx range to the image border
                        let kx_lo = (-ix0).max(0) as usize;
                        let kx_hi = (w - ix0).clamp(0, g.kw as isize) as usize;
                        if kx_lo >= kx_hi {
                            continue;
                        }
                        let src = x_c + iy as usize * g.width + (ix0 + kx_lo as isize) as usize;
                        let dst = r_c + ky * g.kw + kx_lo;
                        os[dst..dst + (kx_hi - kx_lo)]
                            .copy_from_slice(&xs[src..src + (kx_hi - kx_lo)]);
                    }
                }
            }
        }
    }
    out.into_dyn()
}

/// (N*OH*OW, C*KH*KW) -> (N,C,H,W) scatter-add; exact adjoint of `im2col`.
pub(crate) fn col2im<T: Scalar>(cols: &ArrayD<T>, g: ConvGeom) -> ArrayD<T> {
    let c2 = cols.view().into_dimensionality::<ndarray::Ix2>().unwrap();
    let (oh, ow, kk) = (g.out_h(), g.out_w(), g.patch_len());
    assert_eq!(c2.shape(), [g.rows(), kk], "col2im input shape");
    let mut out = ArrayD::<T>::zeros(ndarray::IxDyn(&[g.batch, g.channels, g.height, g.width]));
    let cs = c2.as_standard_layout();
    let cs = cs.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let (h, w) = (g.height as isize, g.width as isize);
    for n in 0..g.batch {
        let x_n = n * g.channels * g.height * g.width;
        for oy in 0..oh {
            let iy0 = (oy * g.stride) as isize - g.pad as isize;
            for ox in 0..ow {
                let ix0 = (ox * g.stride) as isize - g.pad as isize;
                let row = ((n * oh + oy) * ow + ox) * kk;
                for c in 0..g.channels {
                    let x_c = x_n + c * g.height * g.width;
                    let r_c = row + c * g.kh * g.kw;
                    for ky in 0..g.kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let kx_lo = (-ix0).max(0) as usize;
                        let kx_hi = (w - ix0).clamp(0, g.kw as isize) as usize;
                        if kx_lo >= kx_hi {
                            continue;
                        }
                        let dst = x_c + iy as usize * g.width + (ix0 + kx_lo as isize) as usize;
                        let src = r_c + ky * g.kw + kx_lo;
                        for k in 0..(kx_hi - kx_lo) {
                            os[dst + k] = os[dst + k] + cs[src + k];
                        }
                    }
                }
            }
        }
    }
    out
}
