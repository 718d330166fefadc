"""Design solver for on-demand multimodal transit networks.

Selects which bus connections (and at which frequency) to open on top of a
fixed rail network and on-demand shuttles, minimizing opening cost plus
passenger routing cost while capping the legs of every passenger route.
"""

from .instance import (
    CostParams,
    Instance,
    InstanceParseError,
    InstanceValidationError,
    RailLine,
    Stop,
    Trip,
    generate_synthetic,
    great_circle_distance,
    load_instance,
    save_instance,
    travel_time,
)
from .network import Arc, Mode, arc_fixed_cost, build_arcs, delta_sets, trip_arc_cost

__version__ = "0.1.0"
