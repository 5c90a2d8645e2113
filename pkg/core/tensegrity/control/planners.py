"""
Planificateurs par échantillonnage à horizon glissant : tir aléatoire (RS),
méthode de l'entropie croisée (CEM) et MPPI.

À chacun des 50 pas de commande (0.1 s), le planificateur optimise une séquence de
10 commandes (1 s) par rollouts du moteur identifié, exécute la première commande
sur son modèle puis décale l'horizon. Les rollouts d'une itération partent en un
seul lot.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Union

import torch

from config.settings import Config
from ..engine import TensegrityEngine
from ..errors import ConfigurationError, NonFiniteError, TensegrityError
from ..model.state import RobotState, com_velocity
from .cost import rolling_cost

logger = logging.getLogger(__name__)

PLANNERS = ('rs', 'cem', 'mppi')
WEIGHT_TOLERANCE = 1e-12

CostFunction = Callable[[RobotState, torch.Tensor], torch.Tensor]


@dataclass
class PlannerConfig:
    """Réglages communs : 50 pas, 5 itérations de 40 échantillons, horizon 1 s."""
    steps: int = Config.PLAN_STEPS
    iterations: int = Config.PLAN_ITERATIONS
    samples: int = Config.PLAN_SAMPLES
    horizon_steps: int = int(round(Config.PLAN_HORIZON_SECONDS / Config.SAMPLE_INTERVAL))
    control_interval: float = Config.SAMPLE_INTERVAL
    temperature: float = Config.MPPI_LAMBDA
    sigma: float = Config.CONTROL_SIGMA
    elite_fraction: float = Config.CEM_ELITE_FRACTION
    control_limit: float = Config.CONTROL_LIMIT
    target_velocity: float = Config.TARGET_VELOCITY
    lateral_weight: float = Config.LATERAL_WEIGHT

    def __post_init__(self):
        if min(self.steps, self.iterations, self.samples, self.horizon_steps) < 1:
            raise ConfigurationError("planificateur: pas, itérations, échantillons et horizon doivent être ≥ 1")
        if self.temperature <= 0 or self.sigma <= 0 or self.control_limit <= 0 or self.control_interval <= 0:
            raise ConfigurationError("planificateur: λ, σ, borne et intervalle doivent être positifs")
        if not 0 < self.elite_fraction <= 1:
            raise ConfigurationError(f"fraction d'élites hors de ]0, 1]: {self.elite_fraction}")

    @property
    def n_elites(self) -> int:
        return max(1, math.ceil(self.elite_fraction * self.samples))

    @classmethod
    def from_dict(cls, config: Mapping) -> "PlannerConfig":
        """Depuis la configuration complète (sections planner, actuator et schedule)."""
        planner = config.get('planner', {})
        interval = float(config.get('schedule', {}).get('interval', Config.SAMPLE_INTERVAL))
        horizon = float(planner.get('horizon_seconds', Config.PLAN_HORIZON_SECONDS))
        return cls(
            steps=int(planner.get('steps', Config.PLAN_STEPS)),
            iterations=int(planner.get('iterations', Config.PLAN_ITERATIONS)),
            samples=int(planner.get('samples', Config.PLAN_SAMPLES)),
            horizon_steps=max(1, int(round(horizon / interval))),
            control_interval=interval,
            temperature=float(planner.get('temperature', Config.MPPI_LAMBDA)),
            sigma=float(planner.get('sigma', Config.CONTROL_SIGMA)),
            elite_fraction=float(planner.get('elite_fraction', Config.CEM_ELITE_FRACTION)),
            control_limit=float(config.get('actuator', {}).get('control_limit', Config.CONTROL_LIMIT)),
            target_velocity=float(planner.get('target_velocity', Config.TARGET_VELOCITY)),
            lateral_weight=float(planner.get('lateral_weight', Config.LATERAL_WEIGHT)),
        )


@dataclass
class Plan:
    """Séquence de commandes (K, C), une par pas de commande de `dt` secondes."""
    controls: torch.Tensor
    dt: float = Config.SAMPLE_INTERVAL

    def __len__(self) -> int:
        return self.controls.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def check_bounds(self, limit: float = Config.CONTROL_LIMIT):
        peak = float(self.controls.abs().max()) if self.controls.numel() else 0.0
        if peak > limit:
            raise ConfigurationError(f"plan hors des bornes: |u| = {peak:.3f} > {limit:g}")

    def to_dict(self) -> Dict:
        return {"dt": self.dt, "controls": self.controls.detach().tolist()}

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f)
        logger.info(f"✅ Plan de {len(self)} commandes écrit dans {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], limit: float = Config.CONTROL_LIMIT) -> "Plan":
        path = Path(path)
        try:
            with open(path, 'r') as f:
                doc = json.load(f)
            plan = cls(torch.tensor(doc["controls"], dtype=torch.float64), float(doc["dt"]))
        except FileNotFoundError as e:
            raise ConfigurationError(f"plan introuvable: {path}") from e
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"plan illisible ({path}): {e}") from e
        if plan.controls.dim() != 2:
            raise ConfigurationError(f"plan {path}: commandes de forme {tuple(plan.controls.shape)}")
        plan.check_bounds(limit)
        return plan


def finite_costs(costs: torch.Tensor, source: str) -> torch.Tensor:
    """NaN → +inf; lève NonFiniteError si aucun coût n'est fini."""
    costs = torch.where(torch.isnan(costs), torch.full_like(costs, math.inf), costs)
    if not bool(torch.isfinite(costs).any()):
        raise NonFiniteError(source)
    return costs


def mppi_weights(costs: torch.Tensor, temperature: float) -> torch.Tensor:
    """Poids softmin exp(−(c − c_min)/λ), normalisés à 1."""
    costs = finite_costs(costs, "coûts MPPI")
    shifted = costs - costs[torch.isfinite(costs)].min()
    weights = torch.softmax(-shifted / temperature, dim=0)
    total = float(weights.sum())
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise TensegrityError(f"poids MPPI mal normalisés: somme {total!r}")
    return weights


def cem_refit(samples: torch.Tensor, costs: torch.Tensor, n_elites: int):
    """Moyenne et écart type (population) des n_elites meilleurs échantillons."""
    costs = finite_costs(costs, "coûts CEM")
    order = torch.argsort(costs)[:n_elites]
    elites = samples[order]
    return elites.mean(dim=0), elites.std(dim=0, unbiased=False)


class RecedingHorizonPlanner:
    """
    Base commune : évaluation des séquences en lot et boucle à horizon glissant.

    `cost_fn(state, sequences) → (S,)` remplace le rollout du moteur (paysages de coût fixes).
    Le moteur n'est lu qu'en lecture; une somme de contrôle de ses paramètres est
    vérifiée avant et après la planification.
    """

    name = 'base'

    def __init__(self, engine: TensegrityEngine, config: Optional[PlannerConfig] = None,
                 generator: Optional[torch.Generator] = None, cost_fn: Optional[CostFunction] = None):
        self.engine = engine
        self.config = config or PlannerConfig()
        self.generator = generator
        self.cost_fn = cost_fn
        steps = self.config.control_interval / engine.config.dt
        self.steps_per_control = int(round(steps))
        if self.steps_per_control < 1 or abs(steps - self.steps_per_control) > 1e-6:
            raise ConfigurationError(f"intervalle de commande {self.config.control_interval} s non multiple "
                                     f"de Δt={engine.config.dt}")
        self.masses = engine.physical().mass.detach()
        self.cost_history: List[torch.Tensor] = []

    @property
    def n_cables(self) -> int:
        return self.engine.topology.n_cables

    def _shape(self, n_samples: int):
        return n_samples, self.config.horizon_steps, self.n_cables

    def clamp(self, controls: torch.Tensor) -> torch.Tensor:
        limit = self.config.control_limit
        return controls.clamp(-limit, limit)

    @torch.no_grad()
    def _rollout_costs(self, state: RobotState, sequences: torch.Tensor) -> torch.Tensor:
        batch = state.expand(sequences.shape[0]) if state.batch_size == 1 else state
        result = self.engine.rollout(batch, sequences, hold_steps=self.steps_per_control,
                                     record_every=self.steps_per_control, checkpoint=False)
        velocities = torch.stack([com_velocity(s, self.masses) for s in result.samples], dim=-2)
        return rolling_cost(velocities, self.config.target_velocity, self.config.lateral_weight)

    def evaluate(self, state: RobotState, sequences: torch.Tensor) -> torch.Tensor:
        """
        Coût de roulement de chaque séquence (S, H, C) depuis l'état courant.

        Une erreur du moteur sur le lot entraîne une évaluation séquence par séquence;
        les séquences fautives reçoivent un coût NaN.
        """
        if self.cost_fn is not None:
            costs = self.cost_fn(state, sequences)
        else:
            try:
                costs = self._rollout_costs(state, sequences)
            except TensegrityError as e:
                logger.warning(f"⚠️ Rollout du lot échoué ({e}), évaluation séquence par séquence")
                costs = torch.stack([self._single_cost(state, seq) for seq in sequences])
        self.cost_history.append(costs.detach().clone())
        return costs

    def _single_cost(self, state: RobotState, sequence: torch.Tensor) -> torch.Tensor:
        try:
            return self._rollout_costs(state, sequence.unsqueeze(0))[0]
        except TensegrityError:
            return torch.tensor(math.nan, dtype=torch.float64)

    def initial_nominal(self) -> torch.Tensor:
        return torch.zeros(self.config.horizon_steps, self.n_cables, dtype=torch.float64)

    def optimize(self, state: RobotState, nominal: torch.Tensor) -> torch.Tensor:
        """Séquence optimisée (H, C) depuis `state` en partant de `nominal`."""
        raise NotImplementedError

    def control_step(self, state: RobotState, nominal: Optional[torch.Tensor] = None):
        """
        Un pas d'horizon glissant.

        Returns:
            (commande à appliquer (C,), séquence nominale décalée pour le pas suivant)
        """
        nominal = self.initial_nominal() if nominal is None else nominal
        self.cost_history = []
        optimized = self.clamp(self.optimize(state, nominal))
        shifted = torch.cat((optimized[1:], torch.zeros_like(optimized[:1])))
        return optimized[0], shifted

    def plan(self, state: RobotState) -> Plan:
        """Plan complet de config.steps commandes exécutées sur le modèle du planificateur."""
        checksum = self.engine.params.checksum()
        current = state.detach()
        nominal = None
        controls = []
        for k in range(self.config.steps):
            control, nominal = self.control_step(current, nominal)
            controls.append(control)
            with torch.no_grad():
                current = self.engine.rollout(current, control.reshape(1, 1, -1),
                                              hold_steps=self.steps_per_control, checkpoint=False).final
            best = min(float(c.min()) for c in self.cost_history) if self.cost_history else math.nan
            logger.debug(f"{self.name} pas {k + 1}/{self.config.steps}: meilleur coût {best:.4f}")
        if self.engine.params.checksum() != checksum:
            raise TensegrityError("paramètres du moteur modifiés pendant la planification")
        plan = Plan(torch.stack(controls), self.config.control_interval)
        plan.check_bounds(self.config.control_limit)
        logger.info(f"✅ Plan {self.name}: {len(plan)} commandes ({plan.duration:g} s)")
        return plan


class RandomShootingPlanner(RecedingHorizonPlanner):
    """Séquences uniformes dans les bornes; la meilleure de toutes les itérations est retenue."""

    name = 'rs'

    def optimize(self, state, nominal):
        limit = self.config.control_limit
        best, best_cost = None, math.inf
        for _ in range(self.config.iterations):
            u = torch.rand(self._shape(self.config.samples), generator=self.generator, dtype=torch.float64)
            samples = (2.0 * u - 1.0) * limit
            costs = self.evaluate(state, samples)
            costs = torch.where(torch.isnan(costs), torch.full_like(costs, math.inf), costs)
            index = int(torch.argmin(costs))
            if best is None or float(costs[index]) < best_cost:
                best, best_cost = samples[index], float(costs[index])
        if not math.isfinite(best_cost):
            logger.warning("⚠️ Tir aléatoire: aucun coût fini, séquence conservée au hasard")
        return best


class CEMPlanner(RecedingHorizonPlanner):
    """Gaussienne ajustée sur les élites (25 % par défaut) à chaque itération."""

    name = 'cem'

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.variance_history: List[float] = []

    def optimize(self, state, nominal):
        mean = nominal
        std = torch.full_like(nominal, self.config.sigma)
        self.variance_history = []
        for _ in range(self.config.iterations):
            noise = torch.randn(self._shape(self.config.samples), generator=self.generator, dtype=torch.float64)
            samples = self.clamp(mean + std * noise)
            costs = self.evaluate(state, samples)
            mean, std = cem_refit(samples, costs, self.config.n_elites)
            self.variance_history.append(float((std ** 2).mean()))
        return mean


class MPPIPlanner(RecedingHorizonPlanner):
    """Perturbations gaussiennes σ de la séquence nominale, moyenne pondérée par exp(−coût/λ)."""

    name = 'mppi'

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.last_weights: Optional[torch.Tensor] = None

    def optimize(self, state, nominal):
        for _ in range(self.config.iterations):
            noise = torch.randn(self._shape(self.config.samples), generator=self.generator, dtype=torch.float64)
            samples = self.clamp(nominal + self.config.sigma * noise)
            costs = self.evaluate(state, samples)
            weights = mppi_weights(costs, self.config.temperature)
            nominal = (weights.reshape(-1, 1, 1) * samples).sum(dim=0)
            self.last_weights = weights
        return nominal


PLANNER_CLASSES = {
    'rs': RandomShootingPlanner,
    'cem': CEMPlanner,
    'mppi': MPPIPlanner,
}


def make_planner(name: str, engine: TensegrityEngine, config: Optional[PlannerConfig] = None,
                 generator: Optional[torch.Generator] = None, cost_fn: Optional[CostFunction] = None
                 ) -> RecedingHorizonPlanner:
    if name not in PLANNER_CLASSES:
        raise ConfigurationError(f"planificateur inconnu: {name} (choix: {', '.join(PLANNERS)})")
    return PLANNER_CLASSES[name](engine, config, generator, cost_fn)


def mppi_plan(initial_state: RobotState, engine: TensegrityEngine, config: Optional[PlannerConfig] = None,
              generator: Optional[torch.Generator] = None) -> Plan:
    return MPPIPlanner(engine, config, generator).plan(initial_state)


def cem_plan(initial_state: RobotState, engine: TensegrityEngine, config: Optional[PlannerConfig] = None,
             generator: Optional[torch.Generator] = None) -> Plan:
    return CEMPlanner(engine, config, generator).plan(initial_state)


def rs_plan(initial_state: RobotState, engine: TensegrityEngine, config: Optional[PlannerConfig] = None,
            generator: Optional[torch.Generator] = None) -> Plan:
    return RandomShootingPlanner(engine, config, generator).plan(initial_state)
