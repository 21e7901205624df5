//! Network topologies and the random channel / node-state processes.

mod channel;
mod node_state;
mod topology;

pub use channel::ChannelProcess;
pub use node_state::{NodeStateMode, NodeStateProcess};
pub use topology::{
    assign_nearest, base_station_grid, generate_adhoc, generate_adhoc_in_area, generate_cellular,
    generate_cellular_with_gamma, NetworkTopology, Point, TopologyDoc, DEFAULT_GAMMA,
};
