//! Asynchronous advantage actor-critic on grid minigames with a
//! screen/minimap/flat observation model and composite function+pixel actions.

pub mod a3c;
pub mod ckpt;
pub mod env;
pub mod net;
pub mod numcore;
