"""
Détection de collisions différentiable : capsule-sol et capsule-capsule.

Tous les calculs sont des fonctions lisses de l'état (hors bascules de branches),
les gradients traversent donc le détecteur.
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import torch

from ..model.rotation import quat_rotate
from ..model.state import RodState
from ..model.topology import RodSpec

logger = logging.getLogger(__name__)

GROUND = -1
CONTACT_TOLERANCE = 1e-12
PARALLEL_EPS = 1e-12
NORMAL_EPS = 1e-12


@dataclass(frozen=True)
class Contact:
    """Contact actif entre deux corps (rod_b = GROUND pour le sol)."""
    rod_a: int
    rod_b: int
    point: torch.Tensor
    normal: torch.Tensor
    depth: torch.Tensor
    relative_velocity: torch.Tensor

    @property
    def pair(self) -> Tuple[int, int]:
        return self.rod_a, self.rod_b

    @property
    def with_ground(self) -> bool:
        return self.rod_b == GROUND


class GroundTerms(NamedTuple):
    point: torch.Tensor     # (..., 2, 3)
    normal: torch.Tensor
    depth: torch.Tensor     # (..., 2)
    arm: torch.Tensor       # (..., 2, 3) depuis le centre de la barre
    active: torch.Tensor    # (..., 2) bool


class SegmentTerms(NamedTuple):
    point: torch.Tensor
    normal: torch.Tensor    # pousse a hors de b
    depth: torch.Tensor
    arm_a: torch.Tensor
    arm_b: torch.Tensor
    active: torch.Tensor


def capsule_segment(position: torch.Tensor, orientation: torch.Tensor, half_length) -> Tuple[torch.Tensor, torch.Tensor]:
    """Extrémités (-z, +z) de l'axe de la capsule."""
    half = torch.as_tensor(half_length, dtype=position.dtype)
    zero = torch.zeros_like(half)
    axis = torch.stack((zero, zero, half), dim=-1).expand_as(position)
    arm = quat_rotate(orientation, axis)
    return position - arm, position + arm


def ground_terms(position: torch.Tensor, orientation: torch.Tensor, half_length, radius,
                 ground: float = 0.0) -> GroundTerms:
    """
    Sphères d'extrémité contre le plan z = ground.

    depth = ground + radius − z_extrémité, normale (0, 0, 1), point sur la surface de la sphère.
    """
    low, high = capsule_segment(position, orientation, half_length)
    centers = torch.stack((low, high), dim=-2)
    radius = torch.as_tensor(radius, dtype=position.dtype).unsqueeze(-1)
    depth = ground + radius - centers[..., 2]
    normal = torch.zeros_like(centers)
    normal[..., 2] = 1.0
    point = centers - radius.unsqueeze(-1) * normal
    arm = point - position.unsqueeze(-2)
    return GroundTerms(point, normal, depth, arm, depth >= -CONTACT_TOLERANCE)


def closest_points_on_segments(p1: torch.Tensor, q1: torch.Tensor, p2: torch.Tensor, q2: torch.Tensor):
    """
    Points les plus proches entre les segments [p1, q1] et [p2, q2].

    Segments parallèles : s est pris au milieu de l'intervalle de recouvrement
    (ou à l'extrémité la plus proche sans recouvrement).

    Returns:
        Tuple (s, t, c1, c2) avec c1 = p1 + s·d1 et c2 = p2 + t·d2
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = (d1 * d1).sum(-1)
    e = (d2 * d2).sum(-1)
    b = (d1 * d2).sum(-1)
    c = (d1 * r).sum(-1)
    f = (d2 * r).sum(-1)
    denom = a * e - b * b

    parallel = denom <= PARALLEL_EPS * a * e
    safe_denom = torch.where(parallel, torch.ones_like(denom), denom)
    s_general = ((b * f - c * e) / safe_denom).clamp(0.0, 1.0)

    # projection de [p2, q2] sur la droite 1
    s_p2 = -c / a
    s_q2 = (b - c) / a
    lo = torch.minimum(s_p2, s_q2).clamp(min=0.0)
    hi = torch.maximum(s_p2, s_q2).clamp(max=1.0)
    s_overlap = 0.5 * (lo + hi)
    s_apart = torch.where(torch.maximum(s_p2, s_q2) < 0.0, torch.zeros_like(a), torch.ones_like(a))
    s_parallel = torch.where(lo <= hi, s_overlap, s_apart)

    s = torch.where(parallel, s_parallel, s_general)
    t = (b * s + f) / e
    below, above = t < 0.0, t > 1.0
    s = torch.where(below, (-c / a).clamp(0.0, 1.0), torch.where(above, ((b - c) / a).clamp(0.0, 1.0), s))
    t = t.clamp(0.0, 1.0)

    c1 = p1 + s.unsqueeze(-1) * d1
    c2 = p2 + t.unsqueeze(-1) * d2
    return s, t, c1, c2


def segment_terms(position_a, orientation_a, half_a, radius_a,
                  position_b, orientation_b, half_b, radius_b) -> SegmentTerms:
    p1, q1 = capsule_segment(position_a, orientation_a, half_a)
    p2, q2 = capsule_segment(position_b, orientation_b, half_b)
    _, _, c1, c2 = closest_points_on_segments(p1, q1, p2, q2)

    gap = c1 - c2
    dist = torch.linalg.vector_norm(gap, dim=-1)
    normal = gap / dist.clamp(min=NORMAL_EPS).unsqueeze(-1)
    radius_a = torch.as_tensor(radius_a, dtype=dist.dtype)
    radius_b = torch.as_tensor(radius_b, dtype=dist.dtype)
    depth = radius_a + radius_b - dist
    point = 0.5 * ((c1 - radius_a.unsqueeze(-1) * normal) + (c2 + radius_b.unsqueeze(-1) * normal))
    return SegmentTerms(point, normal, depth, point - position_a, point - position_b, depth > 0.0)


def _point_velocity(rod: RodState, arm: torch.Tensor) -> torch.Tensor:
    return rod.lin_vel + torch.cross(rod.ang_vel, arm, dim=-1)


def capsule_ground_check(rod: RodState, spec: RodSpec, ground: float = 0.0, rod_index: int = 0) -> List[Contact]:
    """
    Contacts (0 à 2) des sphères d'extrémité d'une barre avec le sol.

    Args:
        rod: État d'une barre (sans dimension de lot)
        spec: Longueur et rayon de la capsule
        ground: Hauteur du sol (m)
    """
    terms = ground_terms(rod.position, rod.orientation, spec.half_length, spec.radius, ground)
    contacts = []
    for end in range(2):
        if bool(terms.active[end]):
            arm = terms.arm[end]
            contacts.append(Contact(rod_index, GROUND, terms.point[end], terms.normal[end],
                                    terms.depth[end].clamp(min=0.0), _point_velocity(rod, arm)))
    return contacts


def capsule_capsule_check(rod_a: RodState, spec_a: RodSpec, rod_b: RodState, spec_b: RodSpec,
                          indices: Tuple[int, int] = (0, 1)) -> Optional[Contact]:
    """Contact entre deux capsules (normale dirigée de b vers a), ou None."""
    terms = segment_terms(rod_a.position, rod_a.orientation, spec_a.half_length, spec_a.radius,
                          rod_b.position, rod_b.orientation, spec_b.half_length, spec_b.radius)
    if not bool(terms.active):
        return None
    relative = _point_velocity(rod_a, terms.arm_a) - _point_velocity(rod_b, terms.arm_b)
    return Contact(indices[0], indices[1], terms.point, terms.normal, terms.depth, relative)
