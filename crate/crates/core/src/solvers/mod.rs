//! Elliptic and transport kernels.

pub mod divcurl;
pub mod poisson;
pub mod transport;

pub use divcurl::{div_curl_reconstruct, DivCurl};
pub use poisson::{neumann_laplacian, poisson_dirichlet, poisson_neumann, DirichletSolver, NeumannData, NeumannSolution, SOLVER_RTOL};
pub use transport::{transport_chains, transport_solve, Chain, Direction};
