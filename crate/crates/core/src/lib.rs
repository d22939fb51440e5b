pub mod bicluster;
pub mod data;
pub mod error;
pub mod integration;
pub mod interact;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod regulation;
pub mod seed;
pub mod simbench;
