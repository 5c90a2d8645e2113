"""
Topologie statique du robot : barres, câbles, points d'attache et paramètres nominaux.
Chargeable depuis un document JSON.
"""
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch

from config.settings import Config
from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

Vector3 = Tuple[float, float, float]


@dataclass(frozen=True)
class RodSpec:
    """Barre rigide modélisée comme une capsule de densité uniforme, axe z du repère barre."""
    mass: float
    length: float
    radius: float

    def __post_init__(self):
        if self.mass <= 0 or self.length <= 0 or self.radius < 0:
            raise ConfigurationError(f"barre invalide: {self}")

    @property
    def half_length(self) -> float:
        return 0.5 * self.length

    @property
    def unit_inertia(self) -> Vector3:
        """Inertie par kilogramme (cylindre plein), diagonale dans le repère barre."""
        transverse = (3.0 * self.radius ** 2 + self.length ** 2) / 12.0
        return (transverse, transverse, 0.5 * self.radius ** 2)

    @property
    def inertia(self) -> Vector3:
        return tuple(self.mass * value for value in self.unit_inertia)

    @property
    def inverse_inertia(self) -> Vector3:
        return tuple(1.0 / value for value in self.inertia)


@dataclass(frozen=True)
class CableEndpoint:
    rod: int
    offset: Vector3


@dataclass(frozen=True)
class CableSpec:
    endpoint_a: CableEndpoint
    endpoint_b: CableEndpoint
    stiffness: float
    damping: float
    rest_length: float
    motor_scale: float = Config.MOTOR_SCALE

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping < 0 or self.rest_length <= 0:
            raise ConfigurationError(f"câble invalide: K={self.stiffness}, k={self.damping}, "
                                     f"l_rest={self.rest_length}")


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = Config.GROUND_STIFFNESS
    damping: float = Config.GROUND_DAMPING
    friction: float = Config.GROUND_FRICTION
    restitution: float = Config.GROUND_RESTITUTION

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping < 0 or self.friction < 0:
            raise ConfigurationError(f"paramètres de contact invalides: {self}")
        if not 0.0 <= self.restitution <= 1.0:
            raise ConfigurationError(f"restitution hors de [0, 1]: {self.restitution}")

    def stiffness_gate(self, min_mass: float, dt: float) -> bool:
        """Condition de raideur K/m > 1/Δt² (direction correcte du gradient au contact)."""
        return self.stiffness / min_mass > 1.0 / dt ** 2


@dataclass(frozen=True)
class Topology:
    rods: Tuple[RodSpec, ...]
    cables: Tuple[CableSpec, ...]
    contact: ContactParams = field(default_factory=ContactParams)
    pinned: Tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.pinned:
            object.__setattr__(self, "pinned", tuple(False for _ in self.rods))
        if len(self.pinned) != len(self.rods):
            raise ConfigurationError("le masque de barres fixées n'a pas la bonne taille")
        for i, cable in enumerate(self.cables):
            for end in (cable.endpoint_a, cable.endpoint_b):
                if not 0 <= end.rod < len(self.rods):
                    raise ConfigurationError(f"câble {i}: barre {end.rod} inexistante")

    @property
    def n_rods(self) -> int:
        return len(self.rods)

    @property
    def n_cables(self) -> int:
        return len(self.cables)

    @cached_property
    def adjacency(self) -> Dict[int, List[Tuple[int, int]]]:
        """Pour chaque barre, la liste (câble, côté) des éléments incidents (côté 0 = a, 1 = b)."""
        table: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(self.n_rods)}
        for c, cable in enumerate(self.cables):
            table[cable.endpoint_a.rod].append((c, 0))
            table[cable.endpoint_b.rod].append((c, 1))
        return table

    def is_connected(self) -> bool:
        if self.n_rods <= 1:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            rod = queue.popleft()
            for c, side in self.adjacency[rod]:
                cable = self.cables[c]
                other = cable.endpoint_b.rod if side == 0 else cable.endpoint_a.rod
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        return len(seen) == self.n_rods

    # Tenseurs précalculés pour les calculs en lot
    @cached_property
    def cable_rods(self) -> torch.Tensor:
        return torch.tensor([[c.endpoint_a.rod, c.endpoint_b.rod] for c in self.cables],
                            dtype=torch.long).reshape(-1, 2)

    @cached_property
    def cable_offsets(self) -> torch.Tensor:
        return torch.tensor([[c.endpoint_a.offset, c.endpoint_b.offset] for c in self.cables],
                            dtype=torch.float64).reshape(-1, 2, 3)

    @cached_property
    def rest_lengths(self) -> torch.Tensor:
        return torch.tensor([c.rest_length for c in self.cables], dtype=torch.float64)

    @cached_property
    def motor_scales(self) -> torch.Tensor:
        return torch.tensor([c.motor_scale for c in self.cables], dtype=torch.float64)

    @cached_property
    def half_lengths(self) -> torch.Tensor:
        return torch.tensor([r.half_length for r in self.rods], dtype=torch.float64)

    @cached_property
    def radii(self) -> torch.Tensor:
        return torch.tensor([r.radius for r in self.rods], dtype=torch.float64)

    @cached_property
    def unit_inertia(self) -> torch.Tensor:
        return torch.tensor([r.unit_inertia for r in self.rods], dtype=torch.float64)

    @cached_property
    def pinned_mask(self) -> torch.Tensor:
        return torch.tensor(self.pinned, dtype=torch.bool)

    @cached_property
    def incident_counts(self) -> torch.Tensor:
        return torch.tensor([len(self.adjacency[i]) for i in range(self.n_rods)], dtype=torch.float64)

    def with_pinned(self, rods: Sequence[int]) -> "Topology":
        mask = tuple(i in set(rods) for i in range(self.n_rods))
        return Topology(self.rods, self.cables, self.contact, mask)


def rod_end_offsets(length: float) -> Tuple[Vector3, Vector3]:
    """Points d'attache par défaut : les deux extrémités de la barre."""
    return (0.0, 0.0, -0.5 * length), (0.0, 0.0, 0.5 * length)


def superball_geometry(length: float = Config.ROD_LENGTH):
    """
    Géométrie d'équilibre de la tenségrité à six barres (octaèdre étendu).

    Les barres vont par paires parallèles aux axes x, y, z; l'écart au centre vaut
    le quart de la longueur, ce qui aligne la résultante des quatre câbles de chaque
    extrémité sur l'axe de la barre lorsque les tensions sont égales.

    Returns:
        Tuple (centres des barres, axes des barres, paires de nœuds câblés)
        où chaque nœud est (barre, côté) avec côté 0 = extrémité -z, 1 = +z.
    """
    offset = 0.25 * length
    centers, axes = [], []
    for axis in range(3):
        for sign in (1.0, -1.0):
            # barres parallèles à l'axe `axis`, décalées sur l'axe précédent
            center = [0.0, 0.0, 0.0]
            center[(axis + 2) % 3] = sign * offset
            direction = [0.0, 0.0, 0.0]
            direction[axis] = 1.0
            centers.append(tuple(center))
            axes.append(tuple(direction))

    nodes = []
    for rod, (center, direction) in enumerate(zip(centers, axes)):
        for side, s in enumerate((-1.0, 1.0)):
            point = tuple(c + s * 0.5 * length * d for c, d in zip(center, direction))
            nodes.append(((rod, side), point))

    # câble = nœud le plus proche sur une barre non parallèle
    edge = math.sqrt(6.0) * offset
    pairs = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            (rod_i, _), p_i = nodes[i]
            (rod_j, _), p_j = nodes[j]
            if rod_i // 2 == rod_j // 2:
                continue
            if abs(math.dist(p_i, p_j) - edge) < 1e-9:
                pairs.append((nodes[i][0], nodes[j][0]))
    return centers, axes, pairs


def superball_topology(mass: float = Config.ROD_MASS,
                       length: float = Config.ROD_LENGTH,
                       radius: float = Config.ROD_RADIUS,
                       stiffness: float = Config.CABLE_STIFFNESS,
                       damping: float = Config.CABLE_DAMPING,
                       rest_length: float = Config.CABLE_REST_LENGTH,
                       motor_scale: float = Config.MOTOR_SCALE,
                       contact: Optional[ContactParams] = None) -> Topology:
    """Topologie SUPERball par défaut : 6 barres, 24 câbles attachés aux extrémités (≈1.031 m au repos)."""
    _, _, pairs = superball_geometry(length)
    ends = rod_end_offsets(length)
    rods = tuple(RodSpec(mass, length, radius) for _ in range(6))
    cables = tuple(
        CableSpec(CableEndpoint(a_rod, ends[a_side]), CableEndpoint(b_rod, ends[b_side]),
                  stiffness, damping, rest_length, motor_scale)
        for (a_rod, a_side), (b_rod, b_side) in pairs
    )
    return Topology(rods, cables, contact or ContactParams())


def topology_from_dict(doc: Dict) -> Topology:
    """Construit une topologie depuis le document JSON {rods, cables, contact}."""
    try:
        rods = tuple(RodSpec(float(r["mass"]), float(r["length"]), float(r.get("radius", Config.ROD_RADIUS)))
                     for r in doc["rods"])
        cables = []
        for c in doc["cables"]:
            ends = []
            for key in ("a", "b"):
                rod = int(c[key]["rod"])
                offset = c[key].get("offset")
                if offset is None:
                    # extrémité par défaut : "end" = +z, "start" = -z
                    start, stop = rod_end_offsets(rods[rod].length)
                    offset = stop if c[key].get("end", "end") == "end" else start
                ends.append(CableEndpoint(rod, tuple(float(x) for x in offset)))
            cables.append(CableSpec(ends[0], ends[1], float(c["K"]), float(c["k"]),
                                    float(c["rest_length"]), float(c.get("motor_scale", Config.MOTOR_SCALE))))
        contact_doc = doc.get("contact", {})
        contact = ContactParams(
            stiffness=float(contact_doc.get("Kg", Config.GROUND_STIFFNESS)),
            damping=float(contact_doc.get("kg", Config.GROUND_DAMPING)),
            friction=float(contact_doc.get("mu", Config.GROUND_FRICTION)),
            restitution=float(contact_doc.get("e", Config.GROUND_RESTITUTION)),
        )
        pinned = tuple(bool(p) for p in doc.get("pinned", ())) or ()
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ConfigurationError(f"document de topologie invalide: {e}") from e

    topology = Topology(rods, tuple(cables), contact, pinned)
    if not topology.is_connected():
        logger.warning("Topologie non connexe: ce n'est pas une tenségrité valide")
    return topology


def topology_to_dict(topology: Topology) -> Dict:
    return {
        "rods": [{"mass": r.mass, "length": r.length, "radius": r.radius} for r in topology.rods],
        "cables": [
            {
                "a": {"rod": c.endpoint_a.rod, "offset": list(c.endpoint_a.offset)},
                "b": {"rod": c.endpoint_b.rod, "offset": list(c.endpoint_b.offset)},
                "K": c.stiffness,
                "k": c.damping,
                "rest_length": c.rest_length,
                "motor_scale": c.motor_scale,
            }
            for c in topology.cables
        ],
        "contact": {
            "Kg": topology.contact.stiffness,
            "kg": topology.contact.damping,
            "mu": topology.contact.friction,
            "e": topology.contact.restitution,
        },
        "pinned": list(topology.pinned),
    }


def load_topology(path: Union[str, Path]) -> Topology:
    path = Path(path)
    try:
        with open(path, "r") as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"topologie introuvable: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"topologie illisible ({path}): {e}") from e
    topology = topology_from_dict(doc)
    logger.info(f"Topologie chargée depuis {path}: {topology.n_rods} barres, {topology.n_cables} câbles")
    return topology
