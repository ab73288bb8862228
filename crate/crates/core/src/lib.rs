//! Beam-search sampling, pass-rate testing and P2Value-prioritized experience
//! replay for building code-model fine-tuning data.
//!
//! The pipeline has three phases: [`beam::sample_phase`] stores each task's
//! top-k programs in a [`replay::ReplayBuffer`], [`harness::test_phase`]
//! annotates them with pass rates, and [`trainer::build_minibatch`] draws a
//! prioritized minibatch. [`trainer::btp_loop`] closes the loop on the
//! built-in [`beam::ToyLm`].

pub mod beam;
pub mod bridge;
pub mod harness;
pub mod replay;
pub mod seed;
pub mod trainer;
