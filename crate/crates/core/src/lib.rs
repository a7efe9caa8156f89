//! Settlement analysis for longest-chain protocols: characteristic strings,
//! forks, the reach and relative-margin recursions, the online canonical
//! adversary, exact settlement probabilities, analytic tail bounds and an
//! executable settlement game.

pub mod adversary;
pub mod charstring;
pub mod exactprob;
pub mod fork;
pub mod game;
pub mod gfbounds;
pub mod margin;
pub mod stats;
pub mod verify;

pub use charstring::{BernoulliParams, CharString, MartingaleSource};
pub use fork::{Fork, Tine};
