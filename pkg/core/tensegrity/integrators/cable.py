"""
Générateur de forces des câbles et modèle d'actionneur (filtre du premier ordre).
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch

from config.settings import Config
from ..errors import DegenerateCableError, NonFiniteError
from ..model.state import RobotState, RodState, attachment_world
from ..model.topology import Topology

logger = logging.getLogger(__name__)

MIN_CABLE_LENGTH = 1e-9


class CableEndpoints(NamedTuple):
    """Points, vitesses et bras de levier monde des deux extrémités de chaque câble, (B, C, 3)."""
    point_a: torch.Tensor
    velocity_a: torch.Tensor
    arm_a: torch.Tensor
    point_b: torch.Tensor
    velocity_b: torch.Tensor
    arm_b: torch.Tensor


class CableForce(NamedTuple):
    force: torch.Tensor       # force sur l'extrémité a (−force sur b)
    tension: torch.Tensor
    length: torch.Tensor
    direction: torch.Tensor   # unitaire, de a vers b


def cable_endpoints(state: RobotState, topology: Topology) -> CableEndpoints:
    rods = topology.cable_rods
    offsets = topology.cable_offsets.to(state.position)
    sides = []
    for side in (0, 1):
        index = rods[:, side]
        rod = RodState(state.position[:, index], state.orientation[:, index], state.lin_vel[:, index],
                       state.ang_vel[:, index])
        sides.append(attachment_world(rod, offsets[:, side]))
    (pa, va, ra), (pb, vb, rb) = sides
    return CableEndpoints(pa, va, ra, pb, vb, rb)


def effective_rest_length(rest_length: torch.Tensor, motor: torch.Tensor, motor_scale: torch.Tensor) -> torch.Tensor:
    """l_rest + w·c"""
    return rest_length + motor * motor_scale


def cable_force(point_a: torch.Tensor, velocity_a: torch.Tensor,
                point_b: torch.Tensor, velocity_b: torch.Tensor,
                stiffness, damping, rest_length,
                unilateral: bool = True, cable_id: Optional[int] = None) -> CableForce:
    """
    Ressort de Hooke et amortissement projeté sur la direction du câble.

    Args:
        point_a, velocity_a: Extrémité m1 (..., 3)
        point_b, velocity_b: Extrémité m2 (..., 3)
        stiffness, damping: K (N/m) et k (N·s/m)
        rest_length: Longueur au repos effective (m)
        unilateral: Câble détendu ou en compression → force nulle
        cable_id: Identifiant rapporté en cas d'erreur (sinon indice dans la dernière dimension)

    Returns:
        CableForce avec la force sur m1; m2 reçoit l'opposé
    """
    delta = point_b - point_a
    length = torch.linalg.vector_norm(delta, dim=-1)
    if bool((length < MIN_CABLE_LENGTH).any()):
        bad = (length < MIN_CABLE_LENGTH).nonzero()[0]
        raise DegenerateCableError(cable_id if cable_id is not None else int(bad[-1]), float(length[tuple(bad)]))

    direction = delta / length.unsqueeze(-1)
    stretch_rate = ((velocity_b - velocity_a) * direction).sum(dim=-1)
    tension = stiffness * (length - rest_length) + damping * stretch_rate
    if unilateral:
        tension = torch.where(length > rest_length, tension.clamp(min=0.0), torch.zeros_like(tension))

    force = tension.unsqueeze(-1) * direction
    if not bool(torch.isfinite(force).all()):
        bad = (~torch.isfinite(force)).any(dim=-1).nonzero()[0]
        raise NonFiniteError(f"force du câble {cable_id if cable_id is not None else int(bad[-1])}")
    return CableForce(force, tension, length, direction)


def cable_wrenches(state: RobotState, topology: Topology, stiffness: torch.Tensor, damping: torch.Tensor,
                   rest_lengths: torch.Tensor, unilateral: bool = True):
    """
    Forces et couples résultants des câbles sur chaque barre, (B, N, 3) chacun.
    """
    ends = cable_endpoints(state, topology)
    result = cable_force(ends.point_a, ends.velocity_a, ends.point_b, ends.velocity_b,
                         stiffness, damping, rest_lengths, unilateral=unilateral)
    force_a = result.force
    force_b = -result.force
    torque_a = torch.cross(ends.arm_a, force_a, dim=-1)
    torque_b = torch.cross(ends.arm_b, force_b, dim=-1)

    rods = topology.cable_rods
    forces = torch.zeros_like(state.position)
    torques = torch.zeros_like(state.position)
    forces = forces.index_add(1, rods[:, 0], force_a).index_add(1, rods[:, 1], force_b)
    torques = torques.index_add(1, rods[:, 0], torque_a).index_add(1, rods[:, 1], torque_b)
    return forces, torques, result


@dataclass(frozen=True)
class ActuatorState:
    """
    Positions moteur w (B, C), dernière consigne u et constante de temps du filtre.
    """
    motor: torch.Tensor
    command: Optional[torch.Tensor] = None
    tau: float = Config.ACTUATOR_TAU
    clamped: int = 0


def clamp_command(command: torch.Tensor, limit: float = Config.CONTROL_LIMIT, warn: bool = True):
    """Borne les consignes à [-limit, limit]; renvoie (consignes, nombre de valeurs bornées)."""
    outside = int((command.abs() > limit).sum())
    if outside and warn:
        logger.warning(f"⚠️ {outside} consigne(s) hors de [-{limit:g}, {limit:g}], bornée(s)")
    return command.clamp(-limit, limit), outside


def actuator_step(actuator: ActuatorState, command: torch.Tensor, dt: float,
                  limit: float = Config.CONTROL_LIMIT, warn: bool = True) -> ActuatorState:
    """
    w ← w + (u/limit − w)·Δt/τ

    Le gain Δt/τ est plafonné à 1 pour les grands pas (le filtre atteint alors la consigne).
    """
    command = torch.as_tensor(command, dtype=actuator.motor.dtype)
    command, outside = clamp_command(command, limit, warn=warn)
    target = command / limit
    gain = min(dt / actuator.tau, 1.0)
    motor = actuator.motor + (target - actuator.motor) * gain
    return ActuatorState(motor, command, actuator.tau, actuator.clamped + outside)
