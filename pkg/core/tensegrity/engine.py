"""
Moteur physique différentiable : actionneurs → câbles → contacts → intégrateur.

Le moteur avance l'état d'un pas Δt_r (1 ms par défaut) et enchaîne les pas en
rollout avec maintien d'ordre zéro des commandes basse fréquence.
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, TextIO, Union

import torch
from torch import nn

from config.settings import Config
from .autodiff import checkpointed_rollout
from .collision import ContactOracle, InteractionGraph, build_interaction_graph, record_contacts
from .errors import ConfigurationError, EquilibriumError, TensegrityError, with_step
from .integrators import COUPLINGS, ActuatorState, actuator_step, implicit_step, semi_implicit_step
from .model import PhysicalParams, RobotState, Topology, pack_state

logger = logging.getLogger(__name__)

RESTITUTION_CLAMP = 1e-6
POSITIVE_PARAMETERS = ('stiffness', 'damping', 'mass', 'ground_stiffness', 'ground_damping', 'friction')
PARAMETER_NAMES = POSITIVE_PARAMETERS + ('restitution',)

ForceField = Callable[[RobotState], torch.Tensor]


class IntegratorMode(Enum):
    IMPLICIT = "implicit"
    SEMI_IMPLICIT = "semi-implicit"


class CheckerMode(Enum):
    DIFFERENTIABLE = "differentiable"
    OPAQUE = "opaque"
    ORACLE = "oracle"


@dataclass(frozen=True)
class EngineConfig:
    """Réglages du moteur (Δt_r, intégrateur, couplage, câbles unilatéraux, gravité, détecteur)."""
    dt: float = Config.ENGINE_DT
    integrator: IntegratorMode = IntegratorMode(Config.INTEGRATOR)
    coupling: str = Config.COUPLING
    unilateral: bool = Config.UNILATERAL_CABLES
    gravity: float = Config.GRAVITY
    checker: CheckerMode = CheckerMode.DIFFERENTIABLE
    ground: Optional[float] = 0.0
    rod_contacts: bool = True
    checkpoint_every: int = Config.CHECKPOINT_EVERY
    condition_limit: Optional[float] = Config.CONDITION_LIMIT
    tau: float = Config.ACTUATOR_TAU
    control_limit: float = Config.CONTROL_LIMIT
    oracle_path: Optional[str] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, 'integrator', IntegratorMode(self.integrator))
            object.__setattr__(self, 'checker', CheckerMode(self.checker))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if not self.dt > 0:
            raise ConfigurationError(f"Δt doit être strictement positif: {self.dt}")
        if self.coupling not in COUPLINGS:
            raise ConfigurationError(f"couplage inconnu: {self.coupling}")
        if self.tau <= 0 or self.control_limit <= 0:
            raise ConfigurationError("constante de temps et borne de commande doivent être positives")

    def replace(self, **changes) -> "EngineConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, config: Mapping) -> "EngineConfig":
        """Depuis la configuration complète (sections engine et actuator)."""
        engine = config.get('engine', {})
        actuator = config.get('actuator', {})
        return cls(
            dt=float(engine.get('dt', Config.ENGINE_DT)),
            integrator=engine.get('integrator', Config.INTEGRATOR),
            coupling=engine.get('coupling', Config.COUPLING),
            unilateral=bool(engine.get('unilateral_cables', Config.UNILATERAL_CABLES)),
            gravity=float(engine.get('gravity', Config.GRAVITY)),
            checker=engine.get('checker', 'differentiable'),
            ground=engine.get('ground', 0.0),
            rod_contacts=bool(engine.get('rod_contacts', True)),
            checkpoint_every=int(engine.get('checkpoint_every', Config.CHECKPOINT_EVERY)),
            condition_limit=engine.get('condition_limit', Config.CONDITION_LIMIT),
            tau=float(actuator.get('tau', Config.ACTUATOR_TAU)),
            control_limit=float(actuator.get('control_limit', Config.CONTROL_LIMIT)),
            oracle_path=engine.get('oracle_path'),
        )


class ParameterSet(nn.Module):
    """
    Paramètres physiques entraînables.

    Les grandeurs positives sont stockées en logarithme, la restitution e en logit
    (bornée à [1e-6, 1 − 1e-6]). En mode lié, un seul K, k et m pour tout le robot;
    sinon un K et un k par câble et une masse par barre.
    """

    def __init__(self, stiffness, damping, mass, ground_stiffness=Config.GROUND_STIFFNESS,
                 ground_damping=Config.GROUND_DAMPING, friction=Config.GROUND_FRICTION,
                 restitution=Config.GROUND_RESTITUTION):
        super().__init__()
        values = dict(stiffness=stiffness, damping=damping, mass=mass, ground_stiffness=ground_stiffness,
                      ground_damping=ground_damping, friction=friction)
        for name, value in values.items():
            value = torch.as_tensor(value, dtype=torch.float64).reshape(-1)
            if not bool((value > 0).all()):
                raise ConfigurationError(f"paramètre {name} doit être strictement positif: {value.tolist()}")
            self.register_parameter(f"log_{name}", nn.Parameter(value.log()))
        e = torch.as_tensor(restitution, dtype=torch.float64).reshape(-1)
        if not bool(((e >= 0) & (e <= 1)).all()):
            raise ConfigurationError(f"restitution hors de [0, 1]: {e.tolist()}")
        self.logit_restitution = nn.Parameter(torch.logit(e.clamp(RESTITUTION_CLAMP, 1 - RESTITUTION_CLAMP)))

    @property
    def stiffness(self) -> torch.Tensor:
        return self.log_stiffness.exp()

    @property
    def damping(self) -> torch.Tensor:
        return self.log_damping.exp()

    @property
    def mass(self) -> torch.Tensor:
        return self.log_mass.exp()

    @property
    def ground_stiffness(self) -> torch.Tensor:
        return self.log_ground_stiffness.exp()

    @property
    def ground_damping(self) -> torch.Tensor:
        return self.log_ground_damping.exp()

    @property
    def friction(self) -> torch.Tensor:
        return self.log_friction.exp()

    @property
    def restitution(self) -> torch.Tensor:
        return torch.sigmoid(self.logit_restitution)

    @property
    def tied(self) -> bool:
        return self.log_stiffness.numel() == 1 and self.log_mass.numel() == 1

    def physical(self, topology: Topology) -> PhysicalParams:
        """Valeurs numériques développées aux dimensions de la topologie (reliées au graphe)."""
        def expand(value, size, name):
            if value.numel() == 1:
                return value.expand(size)
            if value.numel() != size:
                raise ConfigurationError(f"{name}: {value.numel()} valeurs pour {size} éléments")
            return value

        return PhysicalParams(
            stiffness=expand(self.stiffness, topology.n_cables, 'stiffness'),
            damping=expand(self.damping, topology.n_cables, 'damping'),
            mass=expand(self.mass, topology.n_rods, 'mass'),
            ground_stiffness=self.ground_stiffness.reshape(()),
            ground_damping=self.ground_damping.reshape(()),
            friction=self.friction.reshape(()),
            restitution=self.restitution.reshape(()),
            rest_lengths=topology.rest_lengths,
            motor_scales=topology.motor_scales,
        )

    def to_dict(self) -> Dict[str, Union[float, List[float]]]:
        result = {}
        for name in PARAMETER_NAMES:
            value = getattr(self, name).detach()
            result[name] = float(value) if value.numel() == 1 else value.tolist()
        return result

    @classmethod
    def from_dict(cls, values: Mapping) -> "ParameterSet":
        try:
            return cls(**{name: values[name] for name in PARAMETER_NAMES if name in values})
        except TypeError as e:
            raise ConfigurationError(f"jeu de paramètres incomplet: {e}") from e

    @classmethod
    def from_topology(cls, topology: Topology, tied: bool = True) -> "ParameterSet":
        """Valeurs nominales de la topologie (premier câble et première barre en mode lié)."""
        stiffness = [c.stiffness for c in topology.cables] or [Config.CABLE_STIFFNESS]
        damping = [c.damping for c in topology.cables] or [Config.CABLE_DAMPING]
        mass = [r.mass for r in topology.rods]
        if tied:
            stiffness, damping, mass = stiffness[:1], damping[:1], mass[:1]
        contact = topology.contact
        return cls(stiffness, damping, mass, contact.stiffness, contact.damping, contact.friction,
                   contact.restitution)

    def perturbed(self, spread: float = 4.0, generator: Optional[torch.Generator] = None,
                  names=('stiffness', 'damping', 'mass')) -> "ParameterSet":
        """Copie tirée log-uniformément dans [x/spread, x·spread] pour les paramètres nommés."""
        values = {name: getattr(self, name).detach().clone() for name in PARAMETER_NAMES}
        for name in names:
            u = torch.rand(values[name].shape, generator=generator, dtype=torch.float64)
            values[name] = values[name] * torch.exp((2.0 * u - 1.0) * math.log(spread))
        return ParameterSet(**values)

    def copy(self) -> "ParameterSet":
        return ParameterSet(**{name: getattr(self, name).detach().clone() for name in PARAMETER_NAMES})

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


@dataclass
class RolloutResult:
    final: RobotState
    samples: List[RobotState] = field(default_factory=list)

    @property
    def times(self) -> List[float]:
        return [s.time for s in self.samples]


def com_drag(coefficient: float) -> ForceField:
    """Amortissement visqueux −c·v appliqué à chaque barre (écart de modèle de la vérité terrain)."""
    def force(state: RobotState) -> torch.Tensor:
        return -coefficient * state.lin_vel
    return force


class TensegrityEngine:
    """
    Moteur complet pour une topologie et un jeu de paramètres.

    `diagnostics` compte les pas, les contacts, les échecs de la condition de raideur
    et les commandes bornées. Sous point de reprise, les pas recalculés pendant la
    rétropropagation sont comptés de nouveau.
    """

    def __init__(self, topology: Topology, params: Optional[ParameterSet] = None,
                 config: Optional[EngineConfig] = None, force_field: Optional[ForceField] = None,
                 oracle: Optional[ContactOracle] = None):
        self.topology = topology
        self.params = params if params is not None else ParameterSet.from_topology(topology)
        self.config = config or EngineConfig()
        self.force_field = force_field
        self.oracle = oracle
        if self.config.checker is CheckerMode.ORACLE and self.oracle is None:
            if not self.config.oracle_path:
                raise ConfigurationError("mode oracle sans flux de contacts (engine.oracle_path)")
            self.oracle = ContactOracle(self.config.oracle_path)
        self._recorder: Optional[TextIO] = None
        self._gate_warned = False
        self.diagnostics = {
            'steps': 0,
            'contacts': 0,
            'max_contacts': 0,
            'gate_failures': 0,
            'clamped_commands': 0,
        }
        logger.debug(f"Moteur initialisé: {topology.n_rods} barres, {topology.n_cables} câbles, "
                     f"{self.config.integrator.value}, Δt={self.config.dt:g} s")

    def configured(self, **changes) -> "TensegrityEngine":
        """Même topologie et mêmes paramètres (partagés), réglages modifiés."""
        return TensegrityEngine(self.topology, self.params, self.config.replace(**changes),
                                self.force_field, self.oracle)

    def physical(self) -> PhysicalParams:
        return self.params.physical(self.topology)

    def contacts(self, state: RobotState, step_index: int = 0) -> Optional[InteractionGraph]:
        config = self.config
        if config.checker is CheckerMode.ORACLE:
            graph = self.oracle.graph(step_index, state)
        elif config.ground is None and not config.rod_contacts:
            return None
        else:
            graph = build_interaction_graph(state, self.topology, ground=config.ground,
                                            mode=config.checker.value, rod_contacts=config.rod_contacts)
        if self._recorder is not None:
            record_contacts(graph, step_index, self._recorder)
        return graph

    def _check_gate(self, graph: InteractionGraph, physical: PhysicalParams, dt: float):
        active = int(graph.active_count().max()) if graph.size else 0
        self.diagnostics['contacts'] += int(graph.active.sum()) if graph.size else 0
        self.diagnostics['max_contacts'] = max(self.diagnostics['max_contacts'], active)
        if not active:
            return
        ratio = float(physical.ground_stiffness.detach()) / float(physical.mass.detach().min())
        if ratio <= 1.0 / dt ** 2:
            self.diagnostics['gate_failures'] += 1
            if not self._gate_warned:
                logger.warning(f"⚠️ Condition de raideur non satisfaite: K_g/m = {ratio:.3e} ≤ 1/Δt² = "
                               f"{1.0 / dt ** 2:.3e}, direction du gradient au contact non garantie")
                self._gate_warned = True

    def step(self, state: RobotState, command: Optional[torch.Tensor] = None, step_index: int = 0,
             physical: Optional[PhysicalParams] = None) -> RobotState:
        """
        Un pas du moteur : actionneur, câbles, contacts, intégration.

        Args:
            state: État X_t (lot B)
            command: Commandes (B, C) ou (C,) dans [-limit, limit]; None → commande nulle
            step_index: Indice du pas (messages d'erreur, flux oracle)
            physical: Valeurs physiques précalculées (sinon tirées de self.params)

        Returns:
            État X_{t+Δt}
        """
        try:
            return self._step(state, command, step_index, physical)
        except TensegrityError as e:
            if getattr(e, 'step', None) is not None:
                raise
            raise with_step(e, step_index) from e

    def _step(self, state, command, step_index, physical):
        config = self.config
        dt = config.dt
        physical = physical if physical is not None else self.physical()
        n_cables = self.topology.n_cables
        if command is None:
            command = torch.zeros(state.batch_size, n_cables, dtype=state.position.dtype)
        command = torch.as_tensor(command, dtype=state.position.dtype)
        if command.shape[-1] != n_cables:
            raise ConfigurationError(f"commande de dimension {command.shape[-1]}, {n_cables} câbles attendus")

        actuator = actuator_step(ActuatorState(state.motor, tau=config.tau), command, dt,
                                 limit=config.control_limit, warn=self.diagnostics['clamped_commands'] == 0)
        self.diagnostics['clamped_commands'] += actuator.clamped
        state = state.replace(motor=actuator.motor.expand(state.batch_size, n_cables))

        graph = self.contacts(state, step_index)
        if graph is not None:
            self._check_gate(graph, physical, dt)
        external = self.force_field(state) if self.force_field is not None else None

        if config.integrator is IntegratorMode.IMPLICIT:
            result = implicit_step(state, self.topology, physical, dt, gravity=config.gravity,
                                   coupling=config.coupling, unilateral=config.unilateral, contacts=graph,
                                   external_force=external, condition_limit=config.condition_limit)
        else:
            result = semi_implicit_step(state, self.topology, physical, dt, gravity=config.gravity,
                                        unilateral=config.unilateral, contacts=graph, external_force=external)
        self.diagnostics['steps'] += 1
        return result

    def rollout(self, state: RobotState, controls: Optional[torch.Tensor] = None, n_steps: Optional[int] = None,
                hold_steps: int = 1, record_every: Optional[int] = None, start_step: int = 0,
                checkpoint: Optional[bool] = None) -> RolloutResult:
        """
        Enchaîne n_steps pas; la commande k est maintenue pendant hold_steps pas.

        Args:
            controls: Commandes basse fréquence (B, K, C) ou (K, C); None → nulles
            n_steps: Nombre de pas (défaut K·hold_steps)
            hold_steps: Pas du moteur par commande (100 pour 10 Hz à 1 kHz)
            record_every: Enregistre l'état tous les `record_every` pas (échantillons du rollout)
            start_step: Indice du premier pas (flux oracle)
            checkpoint: Points de reprise du graphe; par défaut actifs dès que le gradient est suivi
        """
        dtype = state.position.dtype
        if controls is not None:
            controls = torch.as_tensor(controls, dtype=dtype)
            if controls.dim() == 2:
                controls = controls.unsqueeze(0)
            if n_steps is None:
                n_steps = controls.shape[1] * hold_steps
        if n_steps is None:
            raise ValueError("n_steps requis sans commandes")
        if hold_steps < 1:
            raise ValueError("hold_steps doit être ≥ 1")

        physical = self.physical()
        dt = self.config.dt
        t0 = state.time
        samples: List[RobotState] = []

        def advance(i, carry):
            current = RobotState(*carry, time=t0 + i * dt)
            command = None
            if controls is not None:
                command = controls[:, min(i // hold_steps, controls.shape[1] - 1)]
            return self.step(current, command, start_step + i, physical).tensors()

        def on_segment(stop, carry):
            if record_every:
                samples.append(RobotState(*carry, time=t0 + stop * dt))

        every = record_every or self.config.checkpoint_every
        enabled = torch.is_grad_enabled() if checkpoint is None else checkpoint
        carry = checkpointed_rollout(advance, state.tensors(), n_steps, every=every, enabled=enabled,
                                     on_segment=on_segment)
        return RolloutResult(RobotState(*carry, time=t0 + n_steps * dt), samples)

    @torch.no_grad()
    def settle(self, state: RobotState, steps: int = Config.SETTLE_STEPS,
               tolerance: float = Config.SETTLE_TOLERANCE, window: int = Config.SETTLE_WINDOW) -> RobotState:
        """
        Laisse le robot se stabiliser sans commande (pré-stabilisation d'une pose de repos).

        S'arrête dès que ‖X_{t+1} − X_t‖ ≤ tolerance pendant `window` pas consécutifs.

        Raises:
            EquilibriumError: Pas de repos statique en `steps` pas
        """
        physical = self.physical()
        current = state
        change = math.inf
        calm = 0
        for i in range(steps):
            following = self.step(current, None, i, physical)
            change = float(torch.linalg.vector_norm(pack_state(following) - pack_state(current), dim=-1).max())
            current = following
            calm = calm + 1 if change <= tolerance else 0
            if calm >= window:
                break
        if calm < window:
            raise EquilibriumError(steps, change)
        drift = float((current.position - state.position).norm(dim=-1).max())
        graph = self.contacts(current, i)
        supports = int(graph.active_count().min()) if graph is not None and graph.size else 0
        logger.info(f"✅ Stabilisation en {i + 1} pas: ‖ΔX‖ = {change:.1e}, déplacement {drift:.3e} m, "
                    f"{supports} contacts")
        return current.replace(time=state.time)

    @torch.no_grad()
    def record(self, state: RobotState, path: Union[str, Path], controls: Optional[torch.Tensor] = None,
               n_steps: Optional[int] = None, hold_steps: int = 1) -> RobotState:
        """Simule en écrivant les contacts détectés de chaque pas dans un flux oracle."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as stream:
            self._recorder = stream
            try:
                final = self.rollout(state, controls, n_steps=n_steps, hold_steps=hold_steps,
                                     checkpoint=False).final
            finally:
                self._recorder = None
        logger.info(f"Flux de contacts écrit dans {path}")
        return final
