pub mod denoisers;
pub mod diffusion;
pub mod edit;
mod fsutil;
pub mod layout;
pub mod pipeline;
pub mod planner;
