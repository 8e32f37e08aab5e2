//! Controlled low-temperature Kawasaki dynamics as a discounted Markov decision process.
//!
//! * [`lattice`] lattice-gas configurations, energies and bonds
//! * [`kawasaki`] Metropolis chain, first interchanges, relaxation and rollouts
//! * [`auxmdp`] the reduced MDP over rectangles and its geometric kernel oracle
//! * [`solver`] generic finite discounted MDP solvers
//! * [`verify`] checks of optimal action sets, value formulas and kernels
//! * [`landscape`] minimax energy barriers and stability levels

pub mod auxmdp;
pub mod kawasaki;
pub mod landscape;
pub mod lattice;
pub mod solver;
pub mod verify;
