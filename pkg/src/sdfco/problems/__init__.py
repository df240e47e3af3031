"""Concrete problem instances: unit-ball benchmarks and the aircraft sizing task."""

from .disk import (
    BallDiscipline,
    ball_projection_oracle,
    build_first_coordinate_problem,
    build_hypersphere_problem,
    exact_halfline_network,
    make_disk_dataset,
    make_halfline_dataset,
)
from .aircraft import (
    AircraftConstants,
    AeroDiscipline,
    PropulsionDiscipline,
    aero,
    battery,
    build_aircraft_problem,
    motor,
    propeller,
    wing_weight,
)

__all__ = [
    "BallDiscipline",
    "ball_projection_oracle",
    "build_first_coordinate_problem",
    "build_hypersphere_problem",
    "exact_halfline_network",
    "make_disk_dataset",
    "make_halfline_dataset",
    "AircraftConstants",
    "AeroDiscipline",
    "PropulsionDiscipline",
    "aero",
    "battery",
    "build_aircraft_problem",
    "motor",
    "propeller",
    "wing_weight",
]
