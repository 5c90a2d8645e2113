"""
Flux de contacts externe (une ligne JSON par contact) pour le mode 'oracle'.

Format d'une ligne :
    {"step": 12, "sample": 0, "pair": [3, -1], "point": [x, y, z], "normal": [nx, ny, nz], "depth": 0.002}

`pair[1] = -1` désigne le sol. Les contacts d'un pas absents du flux sont considérés inexistants.
"""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, TextIO, Union

import torch

from ..errors import ConfigurationError
from ..model.state import RobotState
from .checker import GROUND
from .interaction_graph import InteractionGraph

logger = logging.getLogger(__name__)


def record_contacts(graph: InteractionGraph, step: int, stream: TextIO) -> int:
    """
    Écrit les contacts actifs du graphe dans le flux.

    Returns:
        Nombre de lignes écrites
    """
    written = 0
    active = graph.active.nonzero().tolist()
    for sample, k in active:
        record = {
            "step": int(step),
            "sample": int(sample),
            "pair": [int(graph.rod_a[k]), int(graph.rod_b[k])],
            "point": graph.point[sample, k].detach().tolist(),
            "normal": graph.normal[sample, k].detach().tolist(),
            "depth": float(graph.depth[sample, k].detach().clamp(min=0.0)),
        }
        stream.write(json.dumps(record) + "\n")
        written += 1
    return written


def read_contacts(path: Union[str, Path]) -> Dict[int, List[dict]]:
    """Lit un flux et regroupe les enregistrements par pas."""
    path = Path(path)
    by_step = defaultdict(list)
    try:
        with open(path, "r") as f:
            for number, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    by_step[int(record["step"])].append(record)
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise ConfigurationError(f"flux de contacts invalide ({path}:{number}): {e}") from e
    except FileNotFoundError as e:
        raise ConfigurationError(f"flux de contacts introuvable: {path}") from e
    logger.info(f"Flux de contacts chargé: {sum(len(v) for v in by_step.values())} contacts "
                f"sur {len(by_step)} pas")
    return dict(by_step)


def graph_from_records(records: List[dict], state: RobotState) -> InteractionGraph:
    """
    Graphe d'interaction à partir d'enregistrements externes.

    Les valeurs sont des constantes : aucun gradient ne traverse le détecteur externe.
    Chaque enregistrement devient un candidat; l'échantillon visé est le seul actif.
    """
    batch = state.batch_size
    if not records:
        return InteractionGraph.empty(batch, dtype=state.position.dtype)

    dtype = state.position.dtype
    n = len(records)
    rod_a = torch.tensor([r["pair"][0] for r in records], dtype=torch.long)
    rod_b = torch.tensor([r["pair"][1] for r in records], dtype=torch.long)
    samples = torch.tensor([r.get("sample", 0) for r in records], dtype=torch.long)
    if bool((rod_a < 0).any()) or bool((rod_a >= state.n_rods).any()) or bool((rod_b >= state.n_rods).any()):
        raise ConfigurationError("flux de contacts: indice de barre hors limites")
    if bool((samples >= batch).any()):
        raise ConfigurationError("flux de contacts: échantillon hors du lot")

    point = torch.tensor([r["point"] for r in records], dtype=dtype).expand(batch, n, 3)
    normal = torch.tensor([r["normal"] for r in records], dtype=dtype)
    normal = (normal / torch.linalg.vector_norm(normal, dim=-1, keepdim=True)).expand(batch, n, 3)
    depth = torch.tensor([r["depth"] for r in records], dtype=dtype).expand(batch, n)

    position = state.position.detach()
    arm_a = point - position[:, rod_a]
    arm_b = (point - position[:, rod_b.clamp(min=0)]) * (rod_b != GROUND).to(dtype).unsqueeze(-1)
    active = samples.unsqueeze(0) == torch.arange(batch).unsqueeze(-1)
    return InteractionGraph(rod_a, rod_b, point.clone(), normal.clone(), depth.clone(), arm_a, arm_b, active)


class ContactOracle:
    """Source de contacts rejouée pas par pas depuis un flux."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.records = read_contacts(self.path)

    def graph(self, step: int, state: RobotState) -> InteractionGraph:
        return graph_from_records(self.records.get(int(step), []), state)

    @property
    def steps(self) -> List[int]:
        return sorted(self.records)
