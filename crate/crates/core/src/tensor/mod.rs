//! Dense tensors and the CP, Tucker and tensor-train low-rank formats.

mod cp;
mod dense;
pub mod linalg;
mod tt;
mod tucker;

pub use cp::{cp_als, khatri_rao, AlsOptions, CpDecomp};
pub use dense::{gemm, increment, permute_data, strides, DenseTensor};
pub use tt::{tt_svd, TtDecomp, TtTruncation};
pub use tucker::{tucker_hooi, TuckerDecomp};

/// Materialises a low-rank format as a dense tensor.
pub trait Reconstruct {
    fn reconstruct(&self) -> DenseTensor;
}
