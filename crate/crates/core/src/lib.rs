//! Graph test-time training: a GNN classifier trained jointly with
//! self-supervised objectives and fine-tuned per test graph.

pub mod analysis;
pub mod augment;
pub mod config;
pub mod graphdata;
pub mod models;
pub mod optim;
pub mod seed;
pub mod ssl;
pub mod synth;
pub mod tensor;
pub mod theory;
pub mod ttt;
