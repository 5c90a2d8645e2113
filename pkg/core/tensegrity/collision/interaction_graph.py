"""
Graphe d'interaction dynamique : tous les contacts candidats d'un pas, en lot.

Le nombre de candidats est fixe (2 par barre pour le sol, 1 par paire de barres),
seul le masque `active` change d'un pas à l'autre.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional

import torch

from ..model.state import RobotState
from ..model.topology import Topology
from .checker import GROUND, Contact, ground_terms, segment_terms

logger = logging.getLogger(__name__)

CHECKER_MODES = ('differentiable', 'opaque', 'oracle')


@dataclass(frozen=True)
class InteractionGraph:
    """
    Contacts candidats; ordre : (barre, extrémité) pour le sol puis paires (a < b).

    Formes : rod_a/rod_b (K,), point/normal/arm_a/arm_b (B, K, 3), depth/active (B, K).
    """
    rod_a: torch.Tensor
    rod_b: torch.Tensor
    point: torch.Tensor
    normal: torch.Tensor
    depth: torch.Tensor
    arm_a: torch.Tensor
    arm_b: torch.Tensor
    active: torch.Tensor

    @property
    def size(self) -> int:
        return int(self.rod_a.numel())

    def active_count(self) -> torch.Tensor:
        return self.active.sum(dim=-1)

    @property
    def is_empty(self) -> bool:
        return not bool(self.active.any())

    def contacts(self, state: RobotState, sample: int = 0) -> List[Contact]:
        """Contacts actifs d'un échantillon du lot, dans l'ordre déterministe du graphe."""
        result = []
        for k in range(self.size):
            if not bool(self.active[sample, k]):
                continue
            a, b = int(self.rod_a[k]), int(self.rod_b[k])
            velocity = state.lin_vel[sample, a] + torch.cross(state.ang_vel[sample, a], self.arm_a[sample, k], dim=-1)
            if b != GROUND:
                velocity = velocity - (state.lin_vel[sample, b]
                                       + torch.cross(state.ang_vel[sample, b], self.arm_b[sample, k], dim=-1))
            result.append(Contact(a, b, self.point[sample, k], self.normal[sample, k],
                                  self.depth[sample, k].clamp(min=0.0), velocity))
        return result

    def detach(self) -> "InteractionGraph":
        return InteractionGraph(self.rod_a, self.rod_b, self.point.detach(), self.normal.detach(),
                                self.depth.detach(), self.arm_a.detach(), self.arm_b.detach(), self.active)

    @classmethod
    def empty(cls, batch: int, dtype=torch.float64) -> "InteractionGraph":
        vec = torch.zeros(batch, 0, 3, dtype=dtype)
        scalar = torch.zeros(batch, 0, dtype=dtype)
        index = torch.zeros(0, dtype=torch.long)
        return cls(index, index, vec, vec, scalar, vec, vec, scalar.bool())


def rod_pairs(n_rods: int):
    return list(itertools.combinations(range(n_rods), 2))


def build_interaction_graph(state: RobotState, topology: Topology, ground: Optional[float] = 0.0,
                            mode: str = 'differentiable', rod_contacts: bool = True) -> InteractionGraph:
    """
    Construit le graphe du pas courant.

    Args:
        state: État en lot
        topology: Géométrie des capsules
        ground: Hauteur du sol, None pour désactiver le sol
        mode: 'differentiable' ou 'opaque' (valeurs identiques, gradients coupés)
        rod_contacts: Inclure les paires barre-barre
    """
    if mode not in ('differentiable', 'opaque'):
        raise ValueError(f"mode de détection inconnu: {mode}")
    n_rods = state.n_rods
    batch = state.batch_size
    parts = []

    if ground is not None:
        terms = ground_terms(state.position, state.orientation, topology.half_lengths, topology.radii, ground)
        rods = torch.arange(n_rods).repeat_interleave(2)
        parts.append((rods, torch.full_like(rods, GROUND),
                      terms.point.reshape(batch, -1, 3), terms.normal.reshape(batch, -1, 3),
                      terms.depth.reshape(batch, -1), terms.arm.reshape(batch, -1, 3),
                      torch.zeros(batch, 2 * n_rods, 3, dtype=state.position.dtype),
                      terms.active.reshape(batch, -1)))

    pairs = rod_pairs(n_rods) if rod_contacts else []
    if pairs:
        a = torch.tensor([p[0] for p in pairs], dtype=torch.long)
        b = torch.tensor([p[1] for p in pairs], dtype=torch.long)
        terms = segment_terms(state.position[:, a], state.orientation[:, a], topology.half_lengths[a], topology.radii[a],
                              state.position[:, b], state.orientation[:, b], topology.half_lengths[b], topology.radii[b])
        parts.append((a, b, terms.point, terms.normal, terms.depth, terms.arm_a, terms.arm_b, terms.active))

    if not parts:
        return InteractionGraph.empty(batch)
    fields = [torch.cat([part[i] for part in parts], dim=0 if i < 2 else 1) for i in range(8)]
    graph = InteractionGraph(*fields)
    return graph.detach() if mode == 'opaque' else graph
