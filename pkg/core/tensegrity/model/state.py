"""
État du robot : pose et vitesses de chaque barre, positions moteur des câbles.

Disposition du vecteur plat (pack_state), 13 composantes par barre, barres dans l'ordre :
    [p_x, p_y, p_z, q_w, q_x, q_y, q_z, v_x, v_y, v_z, w_x, w_y, w_z]

Encodage sans rotation utilisé par la perte (loss_encoding), 12 composantes par barre :
    [extrémité -z (3), extrémité +z (3), v (3), w (3)]  → 72 composantes pour 6 barres.
"""
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import torch

from .rotation import axis_to_quaternion, quat_between, quat_multiply, quat_rotate
from ..errors import ConfigurationError
from .topology import Topology, superball_geometry

DTYPE = torch.float64
STATE_WIDTH = 13
ENCODING_WIDTH = 12


@dataclass(frozen=True)
class RodState:
    """Pose et vitesses d'une barre (dimensions de lot en tête autorisées)."""
    position: torch.Tensor
    orientation: torch.Tensor
    lin_vel: torch.Tensor
    ang_vel: torch.Tensor


@dataclass(frozen=True)
class RobotState:
    """
    État complet du robot, en lot.

    Formes : position/lin_vel/ang_vel (B, N, 3), orientation (B, N, 4), motor (B, C).
    """
    position: torch.Tensor
    orientation: torch.Tensor
    lin_vel: torch.Tensor
    ang_vel: torch.Tensor
    motor: torch.Tensor
    time: float = 0.0

    @property
    def batch_size(self) -> int:
        return self.position.shape[0]

    @property
    def n_rods(self) -> int:
        return self.position.shape[1]

    @property
    def rods(self) -> List[RodState]:
        return [self.rod(i) for i in range(self.n_rods)]

    def rod(self, index: int) -> RodState:
        return RodState(self.position[:, index], self.orientation[:, index],
                        self.lin_vel[:, index], self.ang_vel[:, index])

    def replace(self, **changes) -> "RobotState":
        return replace(self, **changes)

    def detach(self) -> "RobotState":
        return RobotState(self.position.detach(), self.orientation.detach(), self.lin_vel.detach(),
                          self.ang_vel.detach(), self.motor.detach(), self.time)

    def expand(self, batch: int) -> "RobotState":
        """Réplique un état de lot 1 sur `batch` échantillons."""
        return RobotState(*(t.expand(batch, *t.shape[1:]).clone() for t in self.tensors()), time=self.time)

    def select(self, index) -> "RobotState":
        return RobotState(*(t[index] for t in self.tensors()), time=self.time)

    def tensors(self) -> Tuple[torch.Tensor, ...]:
        return self.position, self.orientation, self.lin_vel, self.ang_vel, self.motor

    def is_finite(self) -> bool:
        return all(bool(torch.isfinite(t).all()) for t in self.tensors())

    @classmethod
    def at_rest(cls, positions, orientations, n_cables: int = 0, time: float = 0.0) -> "RobotState":
        """État immobile d'un lot unique à partir de positions (N, 3) et d'orientations (N, 4)."""
        position = torch.as_tensor(positions, dtype=DTYPE).reshape(1, -1, 3)
        orientation = torch.as_tensor(orientations, dtype=DTYPE).reshape(1, -1, 4)
        zeros = torch.zeros_like(position)
        return cls(position, orientation, zeros, zeros.clone(),
                   torch.zeros(1, n_cables, dtype=DTYPE), time)


def pack_state(state: RobotState) -> torch.Tensor:
    """Vecteur plat (B, 13 N) selon la disposition documentée en tête de module."""
    blocks = torch.cat((state.position, state.orientation, state.lin_vel, state.ang_vel), dim=-1)
    return blocks.reshape(state.batch_size, STATE_WIDTH * state.n_rods)


def unpack_state(vector: torch.Tensor, n_rods: int, motor: Optional[torch.Tensor] = None,
                 time: float = 0.0) -> RobotState:
    """Inverse exact de pack_state (aucune renormalisation)."""
    vector = torch.as_tensor(vector, dtype=DTYPE)
    blocks = vector.reshape(-1, n_rods, STATE_WIDTH)
    if motor is None:
        motor = torch.zeros(blocks.shape[0], 0, dtype=DTYPE)
    return RobotState(blocks[..., 0:3], blocks[..., 3:7], blocks[..., 7:10], blocks[..., 10:13], motor, time)


def attachment_world(rod: RodState, offset: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Point d'attache en repère monde.

    Args:
        rod: État de la barre
        offset: Décalage dans le repère barre (..., 3)

    Returns:
        Tuple (point, vitesse, bras de levier r) avec
        point = p + R·offset et vitesse = v + ω × (R·offset)
    """
    offset = torch.as_tensor(offset, dtype=DTYPE)
    arm = quat_rotate(rod.orientation, offset.expand_as(rod.position) if offset.dim() < rod.position.dim() else offset)
    point = rod.position + arm
    velocity = rod.lin_vel + torch.cross(rod.ang_vel, arm, dim=-1)
    return point, velocity, arm


def rod_endpoints(state: RobotState, topology: Topology) -> Tuple[torch.Tensor, torch.Tensor]:
    """Extrémités -z et +z de chaque barre, (B, N, 3) chacune."""
    axis = torch.zeros_like(state.position)
    axis[..., 2] = topology.half_lengths.to(state.position)
    arm = quat_rotate(state.orientation, axis)
    return state.position - arm, state.position + arm


def loss_encoding(state: RobotState, topology: Topology) -> torch.Tensor:
    """Encodage sans rotation (B, 12 N) : deux extrémités, vitesse linéaire et angulaire."""
    low, high = rod_endpoints(state, topology)
    blocks = torch.cat((low, high, state.lin_vel, state.ang_vel), dim=-1)
    return blocks.reshape(state.batch_size, ENCODING_WIDTH * state.n_rods)


def center_of_mass(state: RobotState, masses: torch.Tensor) -> torch.Tensor:
    """Centre de masse (B, 3) : moyenne des centres des barres pondérée par les masses."""
    weights = masses.to(state.position).reshape(1, -1, 1)
    return (state.position * weights).sum(dim=1) / weights.sum(dim=1)


def com_velocity(state: RobotState, masses: torch.Tensor) -> torch.Tensor:
    weights = masses.to(state.lin_vel).reshape(1, -1, 1)
    return (state.lin_vel * weights).sum(dim=1) / weights.sum(dim=1)


def superball_rest_state(topology: Topology, clearance: float = 0.0, n_batch: int = 1) -> RobotState:
    """
    Pose d'équilibre SUPERball, immobile, posée sur une face triangulaire fermée.

    La face (h, 0, a), (a, h, 0), (0, a, h) est tournée vers −z : trois sphères d'extrémité
    touchent le sol à la même hauteur, la plus basse à `clearance` du sol.
    """
    if topology.n_rods != 6:
        raise ConfigurationError("la pose de repos SUPERball exige 6 barres")
    centers, axes, _ = superball_geometry(topology.rods[0].length)
    face_down = quat_between([1.0, 1.0, 1.0], [0.0, 0.0, -1.0])
    positions = quat_rotate(face_down.expand(6, 4), torch.tensor(centers, dtype=DTYPE))
    orientations = torch.stack([quat_multiply(face_down, axis_to_quaternion(a)) for a in axes])
    state = RobotState.at_rest(positions, orientations, n_cables=topology.n_cables)
    low, high = rod_endpoints(state, topology)
    lowest = torch.minimum(low[..., 2], high[..., 2]) - topology.radii
    position = state.position.clone()
    position[..., 2] += clearance - lowest.min()
    return state.replace(position=position).expand(n_batch)
