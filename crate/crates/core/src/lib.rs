//! Community capacity-limitation pricing: data model, prosumer dispatch,
//! LinDistFlow network, single-level bi-level assembly, baselines and
//! independent solution checking.

pub mod baselines;
pub mod bilevel;
pub mod cases;
pub mod dispatch;
pub mod error;
pub mod instance;
pub mod load;
pub mod network;
pub mod synth;
pub mod validation;

pub use error::{CoreError, Result};
