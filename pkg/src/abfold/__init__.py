"""AB off-lattice protein folding with two-phase differential evolution."""

from .model import (
    AbSequence,
    EnergyBreakdown,
    LocalMoveOutcome,
    MonomerClass,
    SequenceError,
    angles_from_direction,
    compute_positions,
    direction_from_angles,
    energy_auxiliary,
    energy_original,
    kd_transform,
    local_movement,
    pair_coefficient,
    parse_ab_sequence,
    wrap_angle,
)

__version__ = "0.1.0"
