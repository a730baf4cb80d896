//! Monitor placement and estimation for quantum network tomography.
//!
//! * [`net`] holds the network model and monitor-to-link paths.
//! * [`qfi`] assembles quantum Fisher information and Cramér-Rao bounds.
//! * [`ilp`] builds and solves the placement programs.
//! * [`star`] constructs optimal plans for star networks in closed form.
//! * [`sim`] simulates probes and runs estimation studies.

pub mod ilp;
pub mod net;
pub mod qfi;
pub mod sim;
pub mod star;
