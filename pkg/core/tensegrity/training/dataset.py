"""
Trajectoires échantillonnées et format de fichier (JSON lines).

Une ligne par instant échantillonné :
    {"t": 0.1, "rods": [{"p": [3], "q": [4], "v": [3], "w": [3]}, ...], "u": [24], "motor": [24]}

`u` est la commande appliquée sur la fenêtre qui commence à t, `motor` la position
des moteurs à t (zéros si absent). Arborescence d'un jeu de données :
    <dir>/meta.json, <dir>/{train,val,test}/traj_000.jsonl
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import torch

from ..errors import ConfigurationError
from ..model.state import DTYPE, RobotState

logger = logging.getLogger(__name__)

ROLES = ('train', 'val', 'test')
TIME_TOLERANCE = 1e-9


@dataclass
class SampledTrajectory:
    """
    États échantillonnés d'une trajectoire (lot = instants) et commandes par fenêtre.

    Formes : states (K, N, ...), controls (K, C).
    """
    times: List[float]
    states: RobotState
    controls: torch.Tensor
    role: str = 'train'
    name: str = ''

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"rôle de trajectoire inconnu: {self.role}")
        if len(self.times) != self.states.batch_size or self.controls.shape[0] != len(self.times):
            raise ConfigurationError(f"trajectoire {self.name}: tailles incohérentes "
                                     f"({len(self.times)} instants, {self.states.batch_size} états, "
                                     f"{self.controls.shape[0]} commandes)")
        steps = [b - a for a, b in zip(self.times, self.times[1:])]
        if any(s <= 0 for s in steps):
            raise ConfigurationError(f"trajectoire {self.name}: instants non strictement croissants")
        if steps and max(steps) - min(steps) > TIME_TOLERANCE * max(1.0, self.times[-1]):
            raise ConfigurationError(f"trajectoire {self.name}: intervalle d'échantillonnage non constant")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def interval(self) -> float:
        return self.times[1] - self.times[0] if len(self.times) > 1 else 0.0

    def tuples(self) -> Tuple[RobotState, torch.Tensor, RobotState]:
        """Tuples [(X_t, U_t), X_{t+T}] en lot : (départs, commandes (K-1, C), arrivées)."""
        if len(self) < 2:
            raise ConfigurationError(f"trajectoire {self.name}: au moins deux instants requis")
        starts = self.states.select(slice(0, -1))
        targets = self.states.select(slice(1, None))
        return starts, self.controls[:-1], targets

    def state_at(self, index: int) -> RobotState:
        return self.states.select(slice(index, index + 1)).replace(time=self.times[index])


@dataclass
class Dataset:
    """Trajectoires par rôle et métadonnées de génération (scénario, barres fixées, T)."""
    train: List[SampledTrajectory] = field(default_factory=list)
    val: List[SampledTrajectory] = field(default_factory=list)
    test: List[SampledTrajectory] = field(default_factory=list)
    meta: Dict = field(default_factory=dict)

    def split(self, role: str) -> List[SampledTrajectory]:
        if role not in ROLES:
            raise ConfigurationError(f"rôle inconnu: {role}")
        return getattr(self, role)

    @property
    def n_points(self) -> int:
        return sum(len(t) for role in ROLES for t in self.split(role))


def trajectory_to_records(trajectory: SampledTrajectory) -> List[Dict]:
    states = trajectory.states
    records = []
    for k, t in enumerate(trajectory.times):
        rods = [{
            "p": states.position[k, i].tolist(),
            "q": states.orientation[k, i].tolist(),
            "v": states.lin_vel[k, i].tolist(),
            "w": states.ang_vel[k, i].tolist(),
        } for i in range(states.n_rods)]
        records.append({"t": float(t), "rods": rods, "u": trajectory.controls[k].tolist(),
                        "motor": states.motor[k].tolist()})
    return records


def trajectory_from_records(records: List[Dict], role: str = 'train', name: str = '') -> SampledTrajectory:
    if not records:
        raise ConfigurationError(f"trajectoire {name} vide")
    try:
        times = [float(r["t"]) for r in records]

        def field_of(key):
            return torch.tensor([[rod[key] for rod in r["rods"]] for r in records], dtype=DTYPE)

        position, orientation, lin_vel, ang_vel = (field_of(k) for k in ("p", "q", "v", "w"))
        controls = torch.tensor([r["u"] for r in records], dtype=DTYPE)
        if any("motor" in r for r in records):
            motor = torch.tensor([r.get("motor", [0.0] * controls.shape[-1]) for r in records], dtype=DTYPE)
        else:
            motor = torch.zeros_like(controls)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"trajectoire {name} invalide: {e}") from e
    states = RobotState(position, orientation, lin_vel, ang_vel, motor, times[0])
    return SampledTrajectory(times, states, controls, role, name)


def save_trajectory(trajectory: SampledTrajectory, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        for record in trajectory_to_records(trajectory):
            f.write(json.dumps(record) + "\n")


def load_trajectory(path: Union[str, Path], role: str = 'train') -> SampledTrajectory:
    path = Path(path)
    try:
        with open(path, 'r') as f:
            records = [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError as e:
        raise ConfigurationError(f"trajectoire introuvable: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"trajectoire illisible ({path}): {e}") from e
    return trajectory_from_records(records, role, path.stem)


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    for role in ROLES:
        for i, trajectory in enumerate(dataset.split(role)):
            save_trajectory(trajectory, directory / role / f"traj_{i:03d}.jsonl")
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "meta.json", 'w') as f:
        json.dump(dataset.meta, f, indent=2)
    logger.info(f"✅ Jeu de données écrit dans {directory}: " + ", ".join(
        f"{role}={len(dataset.split(role))}" for role in ROLES))
    return directory


def load_dataset(directory: Union[str, Path], required: Tuple[str, ...] = ('train', 'val')) -> Dataset:
    """
    Charge {train,val,test}/*.jsonl et meta.json.

    Raises:
        ConfigurationError: Répertoire absent ou rôle requis vide
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"jeu de données introuvable: {directory}")
    dataset = Dataset()
    for role in ROLES:
        files = sorted((directory / role).glob("*.jsonl"))
        dataset.split(role).extend(load_trajectory(path, role) for path in files)
    for role in required:
        if not dataset.split(role):
            raise ConfigurationError(f"jeu de données {directory}: aucune trajectoire '{role}'")
    meta_path = directory / "meta.json"
    if meta_path.exists():
        with open(meta_path, 'r') as f:
            dataset.meta = json.load(f)
    logger.info(f"Jeu de données chargé depuis {directory} ({dataset.n_points} points)")
    return dataset

