//! Benchmark environments.

pub mod lasertag;
pub mod lightdark;
pub mod tinychain;

pub use lasertag::{LaserTag, LaserTagAction, LaserTagSpec, LaserTagState};
pub use lightdark::{LightDark, LightDarkSpec, LightDarkState};
pub use tinychain::{brute_force_icvar, OracleMode, OracleValue, TinyChain, TinyChainSpec};
