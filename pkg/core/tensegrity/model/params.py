"""
Valeurs physiques numériques consommées par les intégrateurs et la réponse au contact.
"""
from dataclasses import dataclass

import torch

from .topology import Topology


@dataclass(frozen=True)
class PhysicalParams:
    """
    Paramètres physiques sous forme de tenseurs (éventuellement reliés au graphe).

    Formes : stiffness/damping/rest_lengths/motor_scales (C,), mass (N,), contact scalaires.
    """
    stiffness: torch.Tensor
    damping: torch.Tensor
    mass: torch.Tensor
    ground_stiffness: torch.Tensor
    ground_damping: torch.Tensor
    friction: torch.Tensor
    restitution: torch.Tensor
    rest_lengths: torch.Tensor
    motor_scales: torch.Tensor

    @classmethod
    def from_topology(cls, topology: Topology) -> "PhysicalParams":
        def scalar(value):
            return torch.tensor(value, dtype=torch.float64)
        return cls(
            stiffness=torch.tensor([c.stiffness for c in topology.cables], dtype=torch.float64),
            damping=torch.tensor([c.damping for c in topology.cables], dtype=torch.float64),
            mass=torch.tensor([r.mass for r in topology.rods], dtype=torch.float64),
            ground_stiffness=scalar(topology.contact.stiffness),
            ground_damping=scalar(topology.contact.damping),
            friction=scalar(topology.contact.friction),
            restitution=scalar(topology.contact.restitution),
            rest_lengths=topology.rest_lengths,
            motor_scales=topology.motor_scales,
        )

    def body_inverse_inertia(self, topology: Topology) -> torch.Tensor:
        """Inverse de l'inertie dans le repère barre, diagonale (N, 3)."""
        return 1.0 / (self.mass.unsqueeze(-1) * topology.unit_inertia)

    def detach(self) -> "PhysicalParams":
        return PhysicalParams(**{name: getattr(self, name).detach() for name in self.__dataclass_fields__})
