//! Dense reverse-mode differentiation and the layers, initializers and
//! optimizer the encoder is trained with. Everything is `f64`.

mod checkpoint;
mod gradcheck;
mod init;
mod nn;
mod optim;
mod params;
mod tape;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use gradcheck::{finite_diff_by_param, finite_diff_check, GradCheck};
pub use init::{uniform, xavier_uniform};
pub use nn::{dropout, fwt, gin_conv, inverse_softplus, softplus, FwtConfig, GinConv, Linear, Mlp, Mode};
pub use optim::{cosine_lr, Adam};
pub use params::{Bound, Param, ParamGrads, ParamId, ParamStore};
pub use tape::{Grads, Mat, Tape, Var};
