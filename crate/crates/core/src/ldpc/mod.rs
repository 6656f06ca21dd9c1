//! LDPC codes: alist I/O, systematic encoding, construction, sum-product
//! decoding, and the decoder's MMSE transfer curve.

pub mod alist;
pub mod bp;
pub mod code;
pub mod construct;
pub mod curve;
pub mod estimate;
pub mod nle;

pub use alist::{load_alist, write_alist};
pub use bp::{bp_decode, bp_decode_with, BpOptions, BpResult, LLR_CLIP};
pub use code::LdpcCode;
pub use construct::{count_four_cycles, regular_code};
pub use curve::{CodeTransferCurve, CurveSample};
pub use estimate::{block_mse, estimate_transfer_curve, CURVE_SETTLE_ITERS};
pub use nle::{decoder_nle, DecoderNle, Modulation};
