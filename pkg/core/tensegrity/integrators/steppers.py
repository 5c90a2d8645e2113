"""
Schémas d'intégration du robot complet : implicite par éléments et Euler semi-implicite.

Les deux schémas partagent la même fin de pas : impulsions de contact, barres fixées
mises à zéro, puis mise à jour des poses avec les nouvelles vitesses.
"""
import logging
from typing import Optional

import torch

from config.settings import Config
from ..errors import NonFiniteError
from ..model.params import PhysicalParams
from ..model.rotation import integrate_quaternion, quat_to_matrix
from ..model.state import RobotState, RodState, attachment_world
from ..model.topology import Topology
from ..collision.interaction_graph import InteractionGraph
from ..collision.response import apply_contact_impulses
from .cable import cable_endpoints, cable_wrenches, effective_rest_length
from .element_system import ElementSystem, build_element_system, solve_element_system

logger = logging.getLogger(__name__)

COUPLINGS = ('jacobi', 'gauss-seidel')


def world_inverse_inertia(orientation: torch.Tensor, body_inverse: torch.Tensor) -> torch.Tensor:
    """I⁻¹ monde = R diag(I⁻¹ barre) Rᵀ, (B, N, 3, 3)."""
    rotation = quat_to_matrix(orientation)
    return rotation @ torch.diag_embed(body_inverse.to(orientation)) @ rotation.transpose(-1, -2)


def gravity_vector(gravity: float, dtype=torch.float64) -> torch.Tensor:
    return torch.tensor([0.0, 0.0, -gravity], dtype=dtype)


def _external_accel(state: RobotState, params: PhysicalParams, gravity: float,
                    external_force: Optional[torch.Tensor]) -> torch.Tensor:
    accel = gravity_vector(gravity, state.position.dtype).expand_as(state.position)
    if external_force is not None:
        accel = accel + external_force / params.mass.to(state.position).unsqueeze(-1)
    return accel


def _finish_step(state: RobotState, topology: Topology, params: PhysicalParams, lin_vel: torch.Tensor,
                 ang_vel: torch.Tensor, inv_inertia: torch.Tensor, dt: float, gravity: float,
                 contacts: Optional[InteractionGraph], friction_epsilon: float, source: str) -> RobotState:
    free = (~topology.pinned_mask).to(lin_vel.dtype).reshape(1, -1, 1)
    lin_vel = lin_vel * free
    ang_vel = ang_vel * free
    if contacts is not None:
        # Seuil au moins 2gΔt : la gravité d'un seul pas ne fait jamais rebondir
        threshold = max(Config.RESTITUTION_THRESHOLD, 2.0 * gravity * dt)
        lin_vel, ang_vel = apply_contact_impulses(contacts, state, lin_vel, ang_vel, params, inv_inertia, dt,
                                                  friction_epsilon=friction_epsilon,
                                                  restitution_threshold=threshold, pinned=topology.pinned_mask)
        lin_vel = lin_vel * free
        ang_vel = ang_vel * free

    position = state.position + dt * lin_vel
    orientation = integrate_quaternion(state.orientation, ang_vel, dt)
    if bool(topology.pinned_mask.any()):
        pinned = topology.pinned_mask.reshape(1, -1, 1)
        orientation = torch.where(pinned, state.orientation, orientation)

    result = RobotState(position, orientation, lin_vel, ang_vel, state.motor, state.time + dt)
    if not result.is_finite():
        raise NonFiniteError(f"état après le pas {source}")
    return result


def _element_labels(topology: Topology):
    return [f"câble {c}/extrémité {side}" for c in range(topology.n_cables) for side in (0, 1)]


def implicit_step(state: RobotState, topology: Topology, params: PhysicalParams, dt: float,
                  gravity: float = Config.GRAVITY, coupling: str = Config.COUPLING,
                  unilateral: bool = Config.UNILATERAL_CABLES, contacts: Optional[InteractionGraph] = None,
                  external_force: Optional[torch.Tensor] = None, external_torque: Optional[torch.Tensor] = None,
                  condition_limit: Optional[float] = Config.CONDITION_LIMIT,
                  friction_epsilon: float = Config.FRICTION_EPSILON) -> RobotState:
    """
    Pas implicite : un système 21x21 par élément (câble, extrémité), incréments de vitesse sommés par barre.

    Args:
        state: État à t (positions moteur déjà mises à jour par l'actionneur)
        params: Valeurs physiques (K, k, m, contact)
        dt: Pas de temps, de Δt_r jusqu'à l'intervalle d'échantillonnage T
        coupling: 'jacobi' (données figées à t) ou 'gauss-seidel' (éléments traités dans l'ordre des câbles)
        contacts: Graphe d'interaction de l'instant t, None sans contact
        external_force: Force externe par barre (B, N, 3), traitée comme la gravité

    Raises:
        SingularElementError: Système d'un élément singulier ou trop mal conditionné
    """
    if coupling not in COUPLINGS:
        raise ValueError(f"couplage inconnu: {coupling}")
    dtype = state.position.dtype
    masses = params.mass.to(dtype)
    inv_inertia = world_inverse_inertia(state.orientation, params.body_inverse_inertia(topology))
    accel = _external_accel(state, params, gravity, external_force)
    incident = topology.incident_counts.to(dtype)

    lin_vel = state.lin_vel + dt * accel * (incident == 0).to(dtype).reshape(1, -1, 1)
    ang_vel = state.ang_vel
    if external_torque is not None:
        ang_vel = ang_vel + dt * (inv_inertia @ external_torque.unsqueeze(-1)).squeeze(-1)

    if topology.n_cables:
        rods = topology.cable_rods.reshape(-1)
        others = topology.cable_rods.flip(-1).reshape(-1)
        offsets = topology.cable_offsets.to(dtype)
        rest = effective_rest_length(params.rest_lengths.to(dtype), state.motor, params.motor_scales.to(dtype))
        stiffness = params.stiffness.repeat_interleave(2)
        damping = params.damping.repeat_interleave(2)
        rest = rest.repeat_interleave(2, dim=-1)
        element_accel = accel[:, rods] / incident[rods].reshape(1, -1, 1)
        labels = _element_labels(topology)

        if coupling == 'jacobi':
            ends = cable_endpoints(state, topology)
            batch = state.batch_size

            def interleave(side_0, side_1):
                return torch.stack((side_0, side_1), dim=2).reshape(batch, -1, 3)

            system = build_element_system(
                state.position[:, rods], state.lin_vel[:, rods], state.ang_vel[:, rods],
                interleave(ends.arm_a, ends.arm_b), masses[rods], inv_inertia[:, rods],
                interleave(ends.point_b, ends.point_a), interleave(ends.velocity_b, ends.velocity_a),
                stiffness, damping, rest, dt, external_accel=element_accel, unilateral=unilateral)
            solution = solve_element_system(system, condition_limit, labels)
            lin_vel = lin_vel.index_add(1, rods, solution.lin_vel - state.lin_vel[:, rods])
            ang_vel = ang_vel.index_add(1, rods, solution.ang_vel - state.ang_vel[:, rods])
        else:
            own_offsets = offsets.reshape(-1, 3)
            other_offsets = offsets.flip(1).reshape(-1, 3)
            n_rods = state.n_rods

            def current(index):
                return RodState(state.position[:, index], state.orientation[:, index], lin_vel[:, index],
                                ang_vel[:, index])

            for e in range(rods.numel()):
                rod, other = int(rods[e]), int(others[e])
                _, _, arm = attachment_world(current(rod), own_offsets[e])
                other_point, other_velocity, _ = attachment_world(current(other), other_offsets[e])
                system = build_element_system(
                    state.position[:, rod], lin_vel[:, rod], ang_vel[:, rod], arm, masses[rod],
                    inv_inertia[:, rod], other_point, other_velocity, stiffness[e], damping[e], rest[:, e], dt,
                    external_accel=element_accel[:, e], unilateral=unilateral, element=labels[e])
                solution = solve_element_system(ElementSystem(system.A.unsqueeze(1), system.b.unsqueeze(1)),
                                                condition_limit, [labels[e]])
                select = (torch.arange(n_rods) == rod).reshape(1, -1, 1)
                lin_vel = torch.where(select, solution.lin_vel, lin_vel)
                ang_vel = torch.where(select, solution.ang_vel, ang_vel)

    return _finish_step(state, topology, params, lin_vel, ang_vel, inv_inertia, dt, gravity, contacts,
                        friction_epsilon, "implicite")


def semi_implicit_step(state: RobotState, topology: Topology, params: PhysicalParams, dt: float,
                       gravity: float = Config.GRAVITY, unilateral: bool = Config.UNILATERAL_CABLES,
                       contacts: Optional[InteractionGraph] = None,
                       external_force: Optional[torch.Tensor] = None,
                       external_torque: Optional[torch.Tensor] = None,
                       friction_epsilon: float = Config.FRICTION_EPSILON) -> RobotState:
    """
    Euler semi-implicite : vitesses depuis les forces à t, puis positions avec les nouvelles vitesses.

    La mise à jour de rotation inclut le terme gyroscopique ω × (I ω).
    """
    dtype = state.position.dtype
    masses = params.mass.to(dtype).reshape(1, -1, 1)
    inv_inertia = world_inverse_inertia(state.orientation, params.body_inverse_inertia(topology))

    forces = masses * gravity_vector(gravity, dtype)
    torques = torch.zeros_like(state.ang_vel)
    if topology.n_cables:
        rest = effective_rest_length(params.rest_lengths.to(dtype), state.motor, params.motor_scales.to(dtype))
        cable_forces, cable_torques, _ = cable_wrenches(state, topology, params.stiffness, params.damping,
                                                        rest, unilateral=unilateral)
        forces = forces + cable_forces
        torques = torques + cable_torques
    if external_force is not None:
        forces = forces + external_force
    if external_torque is not None:
        torques = torques + external_torque

    lin_vel = state.lin_vel + dt * forces / masses
    inertia = world_inverse_inertia(state.orientation, 1.0 / params.body_inverse_inertia(topology))
    momentum = (inertia @ state.ang_vel.unsqueeze(-1)).squeeze(-1)
    gyroscopic = torch.cross(state.ang_vel, momentum, dim=-1)
    ang_vel = state.ang_vel + dt * (inv_inertia @ (torques - gyroscopic).unsqueeze(-1)).squeeze(-1)

    return _finish_step(state, topology, params, lin_vel, ang_vel, inv_inertia, dt, gravity, contacts,
                        friction_epsilon, "semi-implicite")
