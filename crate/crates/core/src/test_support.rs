use crate::quasipoly::Gains;
use crate::topology::{spectrum, Spectrum, Topology};

/// Six agents: 1-5, 1-2, 3-6 and 4-6 bidirectional, plus 1->3, 5->2, 5->3,
/// 2->4 and 4->5 (0-based here).
pub(crate) fn six_agent_topology() -> Topology {
    let edges = [
        (0, 4),
        (4, 0),
        (0, 1),
        (1, 0),
        (0, 2),
        (4, 1),
        (4, 2),
        (1, 3),
        (2, 5),
        (5, 2),
        (3, 4),
        (3, 5),
        (5, 3),
    ];
    Topology::from_edges(6, &edges).unwrap()
}

pub(crate) fn six_agent_spectrum() -> Spectrum {
    spectrum(&six_agent_topology().c_matrix().unwrap()).unwrap()
}

pub(crate) fn reference_gains() -> Gains {
    Gains::new(1.0, 0.5).unwrap()
}
