//! Hardware-aware search for multiplication-reduced hybrid networks: the
//! network search space, training-free scores, an analytical model of a
//! three-chunk FPGA accelerator, and the searches over both.

pub mod accel;
pub mod cosearch;
pub mod repro;
pub mod search_space;
pub mod workloads;
pub mod zeroshot;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Space(#[from] search_space::SpaceError),
    #[error(transparent)]
    Accel(#[from] accel::AccelError),
    #[error(transparent)]
    ZeroShot(#[from] zeroshot::ZeroShotError),
    #[error("constraint rejected every candidate")]
    EmptyPopulation,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
