"""
Entraînement récurrent (rétropropagation à travers le temps) et calendrier progressif.

Phase 1 : intégration implicite, Δt part de T et est divisé par deux quand la perte
de validation stagne; une fois Δt = Δt_r, c'est le pas d'apprentissage qui est divisé.
Phase 2 : intégration semi-implicite à Δt_r, repartant des meilleurs paramètres, pas
d'apprentissage divisé par deux à chaque stagnation. Chaque phase s'arrête quand
lr ≤ lr_floor (ou après max_epochs).
"""
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import torch

from config.settings import Config
from ..autodiff import GradientTape, clip_gradients, gradient_norm
from ..engine import EngineConfig, IntegratorMode, ParameterSet, TensegrityEngine
from ..errors import ConfigurationError, NonFiniteError, SingularElementError, TrainingDivergenceError
from ..model.state import RobotState, loss_encoding
from ..model.topology import Topology
from .dataset import Dataset, SampledTrajectory
from .ground_truth import scenario_engine_config, scenario_topology

logger = logging.getLogger(__name__)

PHASES = ('both', 'implicit-only')
HISTORY_COLUMNS = ('epoch', 'phase', 'dt', 'lr', 'train_loss', 'val_loss', 'seconds')


@dataclass
class TrainSchedule:
    """Constantes du calendrier : T = 0.1 s, lr₀ = 0.1, Δt_r = 1 ms, plancher 1e-4."""
    interval: float = Config.SAMPLE_INTERVAL
    lr: float = Config.LEARNING_RATE
    engine_dt: float = Config.ENGINE_DT
    lr_floor: float = Config.LR_FLOOR
    patience: int = Config.PATIENCE
    min_improvement: float = Config.MIN_IMPROVEMENT
    max_epochs: int = Config.MAX_EPOCHS_PER_PHASE
    grad_clip: float = Config.GRAD_CLIP
    phases: str = 'both'

    def __post_init__(self):
        if self.phases not in PHASES:
            raise ConfigurationError(f"phases inconnues: {self.phases}")
        if not 0 < self.engine_dt <= self.interval:
            raise ConfigurationError(f"il faut 0 < Δt_r ≤ T (Δt_r={self.engine_dt}, T={self.interval})")
        if self.lr <= 0 or self.lr_floor <= 0 or self.patience < 1 or self.max_epochs < 1:
            raise ConfigurationError("calendrier d'entraînement invalide")

    @classmethod
    def from_dict(cls, config: Mapping) -> "TrainSchedule":
        schedule = dict(config.get('schedule', {}))
        engine_dt = config.get('engine', {}).get('dt', Config.ENGINE_DT)
        return cls(engine_dt=float(engine_dt), **{k: v for k, v in schedule.items()
                                                  if k in cls.__dataclass_fields__ and k != 'engine_dt'})


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    dt: float
    lr: float
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainingResult:
    params: ParameterSet
    best_val: float
    history: List[EpochRecord] = field(default_factory=list)


def window_steps(interval: float, dt: float):
    """Nombre de pas pour couvrir T et pas effectif T/n (n = ⌈T/Δt⌉)."""
    steps = max(1, math.ceil(interval / dt - 1e-9))
    return steps, interval / steps


def mse_loss(predicted: RobotState, target: RobotState, topology: Topology) -> torch.Tensor:
    """Erreur quadratique moyenne sur l'encodage sans rotation (extrémités, vitesses)."""
    a = loss_encoding(predicted, topology)
    b = loss_encoding(target, topology)
    if a.shape != b.shape:
        raise ConfigurationError(f"encodages incompatibles: {tuple(a.shape)} et {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def trajectory_loss(engine: TensegrityEngine, trajectory: SampledTrajectory) -> torch.Tensor:
    """Perte d'une trajectoire : tous ses tuples avancés de T en parallèle."""
    starts, controls, targets = trajectory.tuples()
    steps, _ = window_steps(trajectory.interval, engine.config.dt)
    predicted = engine.rollout(starts, controls.unsqueeze(1), n_steps=steps, hold_steps=steps).final
    return mse_loss(predicted, targets, engine.topology)


def evaluate_loss(engine: TensegrityEngine, trajectories: List[SampledTrajectory]) -> float:
    with torch.no_grad():
        losses = [float(trajectory_loss(engine, t)) for t in trajectories]
    return sum(losses) / len(losses) if losses else float('nan')


def _train_epoch(engine: TensegrityEngine, optimizer: torch.optim.Optimizer, trajectories: List[SampledTrajectory],
                 grad_clip: float, epoch: int) -> float:
    """Une époque : un lot par trajectoire, gradient écrêté à chaque lot."""
    params = engine.params
    losses = []
    for batch, trajectory in enumerate(trajectories):
        optimizer.zero_grad()
        with GradientTape() as tape:
            for name, parameter in params.named_parameters():
                tape.register(name, parameter)
            loss = trajectory_loss(engine, trajectory)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError("perte non finie", epoch, batch)
            try:
                grads = tape.gradient(loss)
            except NonFiniteError as e:
                raise TrainingDivergenceError(f"gradient non fini ({e.source})", epoch, batch) from e
        norm = float(gradient_norm(grads))
        if norm > grad_clip:
            logger.debug(f"Gradient écrêté: ‖g‖ = {norm:.3e} > {grad_clip:g}")
        grads = clip_gradients(grads, grad_clip)
        for name, parameter in params.named_parameters():
            parameter.grad = grads[name]
        optimizer.step()
        losses.append(float(loss))
    return sum(losses) / len(losses)


class _Stall:
    """Perte de validation « en baisse » : gain relatif > min_improvement sur les `patience` dernières époques."""

    def __init__(self, patience: int, min_improvement: float):
        self.patience = patience
        self.min_improvement = min_improvement
        self.reset(float('inf'), 0)

    def reset(self, reference: float, epoch: int):
        self.reference = reference
        self.last_gain = epoch

    def update(self, val_loss: float, epoch: int) -> bool:
        """Renvoie vrai si la perte stagne."""
        if val_loss < self.reference * (1.0 - self.min_improvement) or math.isinf(self.reference):
            self.reference = val_loss
            self.last_gain = epoch
        return epoch - self.last_gain >= self.patience


def _run_phase(name: str, engine: TensegrityEngine, dataset: Dataset, schedule: TrainSchedule,
               history: List[EpochRecord], best: Dict, dt: float, refine_dt: bool):
    """
    Boucle d'une phase; `best` ({'val', 'state'}) est mis à jour en place.

    Args:
        dt: Pas initial de la phase
        refine_dt: Divise Δt avant lr tant que Δt > Δt_r (phase 1)
    """
    params = engine.params
    lr = schedule.lr
    optimizer = torch.optim.Adam(params.parameters(), lr=lr)
    stall = _Stall(schedule.patience, schedule.min_improvement)
    epochs = 0
    first_epoch = len(history)

    while lr > schedule.lr_floor and epochs < schedule.max_epochs:
        steps, dt_eff = window_steps(schedule.interval, dt)
        current = engine.configured(dt=dt_eff)
        epoch = len(history)
        started = time.perf_counter()
        try:
            train_loss = _train_epoch(current, optimizer, dataset.train, schedule.grad_clip, epoch)
            val_loss = evaluate_loss(current, dataset.val)
        except (NonFiniteError, SingularElementError, TrainingDivergenceError) as e:
            if name == 'implicit' and epoch == first_epoch and steps == 1:
                raise TrainingDivergenceError(f"perte divergente à Δt = T ({e}), essayer un Δt initial plus petit",
                                              epoch) from e
            if isinstance(e, TrainingDivergenceError):
                raise
            raise TrainingDivergenceError(str(e), epoch) from e
        if not math.isfinite(val_loss):
            raise TrainingDivergenceError("perte de validation non finie", epoch)

        record = EpochRecord(epoch, name, dt_eff, lr, train_loss, val_loss, time.perf_counter() - started)
        history.append(record)
        logger.info(f"Époque {epoch} [{name}] Δt={dt_eff:.4g} lr={lr:.3g} "
                    f"perte={train_loss:.4e} validation={val_loss:.4e}")
        if val_loss < best['val']:
            best['val'] = val_loss
            best['state'] = {k: v.detach().clone() for k, v in params.state_dict().items()}

        epochs += 1
        if not stall.update(val_loss, epoch):
            continue
        if refine_dt and dt > schedule.engine_dt * (1 + 1e-9):
            dt = max(dt / 2.0, schedule.engine_dt)
            logger.info(f"Stagnation: Δt → {dt:.4g} s")
        else:
            lr /= 2.0
            for group in optimizer.param_groups:
                group['lr'] = lr
            logger.info(f"Stagnation: lr → {lr:.3g}")
        stall.reset(float("inf"), epoch)
    return dt


def train_progressive(dataset: Dataset, params: ParameterSet, topology: Topology,
                      schedule: Optional[TrainSchedule] = None,
                      engine_config: Optional[EngineConfig] = None) -> TrainingResult:
    """
    Identifie les paramètres selon le calendrier progressif.

    Les paramètres sont optimisés en place; le résultat porte une copie des meilleurs
    (perte de validation minimale sur l'ensemble des phases).

    Raises:
        TrainingDivergenceError: Perte NaN, ou divergence dès la première époque à Δt = T
    """
    schedule = schedule or TrainSchedule()
    scenario = dataset.meta.get('scenario', 'non-contact')
    topology = scenario_topology(topology, scenario)
    config = scenario_engine_config(engine_config or EngineConfig(dt=schedule.engine_dt), scenario)
    history: List[EpochRecord] = []
    best = {'val': float('inf'), 'state': {k: v.detach().clone() for k, v in params.state_dict().items()}}

    engine = TensegrityEngine(topology, params, config.replace(integrator=IntegratorMode.IMPLICIT))
    logger.info(f"Phase 1 (implicite): {len(dataset.train)} trajectoires d'entraînement, "
                f"{len(dataset.val)} de validation")
    _run_phase('implicit', engine, dataset, schedule, history, best, dt=schedule.interval, refine_dt=True)

    if schedule.phases == 'both':
        with torch.no_grad():
            params.load_state_dict(best['state'])
        engine = TensegrityEngine(topology, params, config.replace(integrator=IntegratorMode.SEMI_IMPLICIT))
        # la perte implicite n'est pas comparable : la phase 2 repart de sa propre référence
        best['val'] = evaluate_loss(engine.configured(dt=schedule.engine_dt), dataset.val)
        logger.info(f"Phase 2 (semi-implicite): validation initiale {best['val']:.4e}")
        _run_phase('semi-implicit', engine, dataset, schedule, history, best, dt=schedule.engine_dt,
                   refine_dt=False)

    identified = params.copy()
    with torch.no_grad():
        identified.load_state_dict(best['state'])
    logger.info(f"✅ Identification terminée: {len(history)} époques, validation {best['val']:.4e}, "
                f"paramètres {identified.to_dict()}")
    return TrainingResult(identified, best['val'], history)


def train_feedforward(dataset: Dataset, params: ParameterSet, topology: Topology,
                      schedule: Optional[TrainSchedule] = None,
                      engine_config: Optional[EngineConfig] = None) -> TrainingResult:
    """Référence non récurrente : un seul pas implicite de Δt = T par tuple, lr divisé à chaque stagnation."""
    schedule = schedule or TrainSchedule()
    scenario = dataset.meta.get('scenario', 'non-contact')
    topology = scenario_topology(topology, scenario)
    config = scenario_engine_config(engine_config or EngineConfig(dt=schedule.interval), scenario)
    engine = TensegrityEngine(topology, params, config.replace(integrator=IntegratorMode.IMPLICIT))
    history: List[EpochRecord] = []
    best = {'val': float('inf'), 'state': {k: v.detach().clone() for k, v in params.state_dict().items()}}
    _run_phase('feedforward', engine, dataset, schedule, history, best, dt=schedule.interval, refine_dt=False)
    identified = params.copy()
    with torch.no_grad():
        identified.load_state_dict(best['state'])
    return TrainingResult(identified, best['val'], history)


def write_loss_history(history: List[EpochRecord], path: Union[str, Path]) -> Path:
    """CSV epoch, phase, dt, lr, train_loss, val_loss, seconds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for record in history:
            writer.writerow(asdict(record))
    return path
