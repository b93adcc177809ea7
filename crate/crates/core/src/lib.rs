//! Random-edge graph neural networks for distributed power control.
//!
//! The pipeline: drop transceivers on the plane ([`topology`]), fade the
//! links per slot ([`channel`]), map each channel matrix to transmit powers
//! with a polynomial graph-filter network ([`regnn`]), score the powers by
//! sum rate ([`objective`]), and ascend ([`trainers`]) either per period or
//! across periods through a meta-learned initialization. [`oracles`] holds
//! the slow independent checks the test suites compare against.
//!
//! All numerics are generic over the scalar type through [`Real`] so the
//! same code runs in `f32` and `f64`; geometry stays in `f64`. Every random
//! draw flows through the seeded streams in [`rng`], so equal seeds give
//! equal bytes on disk.

pub mod channel;
pub mod error;
pub mod linalg;
pub mod num;
pub mod objective;
pub mod oracles;
pub mod regnn;
pub mod rng;
pub mod topology;
pub mod trainers;

pub use error::{Error, Result};
pub use num::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Episode64 = channel::ChannelEpisode<f64>;
pub type Params64 = regnn::RegnnParams<f64>;
pub type TaskData64 = trainers::TaskData<f64>;
pub type TrainConfig64 = trainers::TrainConfig<f64>;
pub type MetaState64 = trainers::MetaState<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type Episode32 = channel::ChannelEpisode<f32>;
pub type Params32 = regnn::RegnnParams<f32>;
pub type TaskData32 = trainers::TaskData<f32>;
pub type TrainConfig32 = trainers::TrainConfig<f32>;
pub type MetaState32 = trainers::MetaState<f32>;
