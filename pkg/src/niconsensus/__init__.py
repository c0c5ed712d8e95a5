"""Output-feedback consensus of networked nonlinear negative-imaginary systems.

Plants on the nodes of a connected graph are coupled through output strictly
negative-imaginary controllers on its edges in positive feedback. The package
builds such networks, simulates them with fixed-step RK4 and checks the
dissipation, Lyapunov and consensus properties along the computed
trajectories.
"""

from .analysis import (
    check_lyapunov_decrease,
    check_ni_dissipation,
    check_osni_dissipation,
    check_steady_state_consequence,
    consensus_error,
    detect_steady_state,
    lyapunov_series,
    sample_positive_definite,
    total_storage,
)
from .dynamics import IntegratorConfig, SystemModel, Trajectory, output_rate, rk4_step, simulate
from .models import (
    FirstOrderOsniParams,
    NonlinearitySpec,
    PendulumParams,
    SecondOrderOsniParams,
    cubic_osni_controller,
    make_first_order_osni,
    make_pendulum,
    make_second_order_osni,
    osni_residual_first_order,
    osni_residual_second_order,
)
from .network import (
    ClosedLoopSystem,
    ConnectivityError,
    close_loop,
    edge_inputs,
    node_inputs,
    parallel_compose,
    simulate_closed_loop,
)
from .topology import (
    apply_incidence,
    apply_incidence_transpose,
    build_graph,
    is_connected,
    laplacian,
    orient,
)

__version__ = "0.1.0"
