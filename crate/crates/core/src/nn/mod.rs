//! Minimal differentiable numeric core.
//!
//! Every layer is a pair of functions: a forward pass that returns its output
//! together with whatever the backward pass needs, and a backward pass that
//! maps the output gradient to the input gradient while returning parameter
//! gradients. Activations are row-major `rows × width` buffers. Everything is
//! generic over [`Real`] so gradients can be checked in `f64` against the
//! same code that trains in `f32`.

mod act;
mod attention;
mod conv;
mod gemm;
mod linear;
mod norm;

pub use act::{gelu, gelu_backward, sigmoid};
pub use attention::{attention_backward, attention_forward, AttnCache, AttnGrads, AttnWeights};
pub use conv::{conv_backward, conv_forward, conv_out_size, ConvCache, ConvShape};
pub use gemm::{gemm, mm, mm_nt, mm_tn, Real};
pub use linear::{linear_backward, linear_forward};
pub use norm::{layernorm_backward, layernorm_forward, LnCache};

/// Add `src` into `dst` elementwise.
pub fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
