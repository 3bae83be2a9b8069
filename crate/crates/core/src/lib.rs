pub mod ad;
pub mod bench;
pub mod cegis;
pub mod expr;
pub mod falsifier;
pub mod lqr;
pub mod network;
pub mod roa;
pub mod system;
pub mod training;
