//! Quadrotor gap traversal with soft actor-critic.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases
//! below pin the common instantiations. Training runs in `f64`.

pub mod checkpoint;
pub mod dynamics;
pub mod geometry;
pub mod real;
pub mod rng;
pub mod sacnet;
pub mod sim2real;
pub mod trainer;
pub mod world;

pub type QuadrotorParamsF64 = dynamics::QuadrotorParams<f64>;
pub type QuadrotorParamsF32 = dynamics::QuadrotorParams<f32>;
pub type RigidBodyStateF64 = dynamics::RigidBodyState<f64>;
pub type RigidBodyStateF32 = dynamics::RigidBodyState<f32>;
pub type GapEnvF64 = world::GapEnv<f64>;
pub type GapEnvF32 = world::GapEnv<f32>;
pub type WorldConfigF64 = world::WorldConfig<f64>;
pub type WorldConfigF32 = world::WorldConfig<f32>;
pub type MlpF64 = sacnet::Mlp<f64>;
pub type MlpF32 = sacnet::Mlp<f32>;
pub type SacAgentF64 = sacnet::SacAgent<f64>;
pub type SacAgentF32 = sacnet::SacAgent<f32>;
pub type CheckpointF64 = checkpoint::Checkpoint<f64>;
