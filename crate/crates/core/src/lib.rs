pub mod asymptotics;
pub mod brute;
pub mod dump;
pub mod error;
mod geometry;
pub mod network;
mod tree;
pub mod landscape;
pub mod measures;
pub mod point;
pub mod quantizer;
pub mod render;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
pub use measures::{ahlfors_constants, grid_discretize, AhlforsEstimate, Atom, AxisBox, DensitySpec, DiscreteMeasure, GriddedDensity};
pub use point::Point;
pub use transport::{transport_plan, w1_distance};
pub use solver::{optimize_geometry, solve_bot, SolverConfig};
pub use network::{alpha_mass, edge_flows, Edge, NodeKind, Topology, TransportNetwork};
pub use brute::{brute_force_bot, OracleMode};
pub use landscape::{compute_landscape, cost_identity_check, holder_estimate, marginal_cost, sink_samples, HolderEstimate, LandscapeField, SinkLandscape};
pub use quantizer::{improve_sites, mass_optimal, partition_equivalence_check, solve_quantization, solve_quantization_warm, Quantizer, QuantizerConfig};
pub use asymptotics::{basin_stats, delone_constants, delone_report, density_compare, energy_equidistribution, inner_outer_ball_check, quantizer_landscapes, scaling_fit, sweep, BallRow, BasinRow, DeloneReport, DeloneRow, DensityReport, DensityRow, ScalingReport};
pub use dump::{Dump, NetworkDump, QuantizerDump};
