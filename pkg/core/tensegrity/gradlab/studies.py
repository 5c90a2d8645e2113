"""
Études de gradient : balayage de la hauteur initiale de la balle, collisions multiples
et vérification des gradients du moteur par différences finies.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch

from ..autodiff import GradientTape, central_difference, relative_error
from ..collision import GROUND, Contact, contact_impulse, effective_mass
from ..engine import EngineConfig, ParameterSet, TensegrityEngine
from ..errors import ConfigurationError, GradientCheckError
from ..model.state import loss_encoding, superball_rest_state
from ..model.topology import ContactParams, RodSpec, Topology, superball_topology
from .ball import METHODS, STEPS, BallState, count_contacts, simulate
from .theorem import impulse_step, theorem1_check

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ('x0', 'loss_naive', 'loss_toi', 'loss_ani', 'grad_naive', 'grad_toi', 'grad_ani')
STUDY_MODES = ('differentiable', 'opaque')
CHECK_COLUMNS = ('name', 'value', 'reference', 'error', 'tolerance', 'passed')

EXACT_TOLERANCE = 1e-12
OVERLAY_TOLERANCE = 1e-8
INDUCTION_TOLERANCE = 1e-10
BPTT_TOLERANCE = 1e-3
ADJOINT_TOLERANCE = 1e-4


def step_gradient(method: str, x: float, v: float, dt: float) -> float:
    """∂x'/∂x sur un seul pas de la balle."""
    with GradientTape() as tape:
        leaf = tape.watch("x", x)
        next_state = STEPS[method](BallState(leaf, v), dt)
        return float(tape.gradient(next_state.x)["x"])


def final_height(method: str, x0: float, v0: float, dt: float, n_steps: int,
                 gravity: float = 0.0) -> Tuple[float, float, int]:
    """Hauteur finale x_T, gradient ∂x_T/∂x_0 et nombre de contacts."""
    with GradientTape() as tape:
        leaf = tape.watch("x0", x0)
        states = simulate(method, leaf, v0, dt, n_steps, gravity)
        grad = float(tape.gradient(states[-1].x)["x0"])
    return float(states[-1].x), grad, count_contacts(states)


def ball_sweep(n_points: int = 100, x_range: Tuple[float, float] = (0.05, 1.45), v0: float = -1.0,
               dt: float = 0.01, n_steps: int = 100, gravity: float = 0.0) -> List[Dict]:
    """
    Perte L = x_T et gradient ∂L/∂x_0 des trois intégrations pour n_points hauteurs.

    Les lignes portent aussi `contacts` (nombre de pas de contact avec l'intégration TOI).
    """
    if n_points < 1:
        raise ConfigurationError(f"nombre de points invalide: {n_points}")
    heights = torch.linspace(x_range[0], x_range[1], n_points, dtype=torch.float64).tolist()
    rows = []
    for x0 in heights:
        row = {'x0': x0}
        for method in METHODS:
            loss, grad, contacts = final_height(method, x0, v0, dt, n_steps, gravity)
            row[f'loss_{method}'] = loss
            row[f'grad_{method}'] = grad
            if method == 'toi':
                row['contacts'] = contacts
        rows.append(row)
    return rows


def check_sweep(rows: List[Dict], v0: float, dt: float) -> List[str]:
    """Échecs du balayage (liste vide si tout est conforme)."""
    failures = []
    offset = 2.0 * abs(v0) * dt + EXACT_TOLERANCE
    for row in rows:
        x0 = row['x0']
        if abs(row['grad_ani'] - row['grad_toi']) > EXACT_TOLERANCE:
            failures.append(f"balayage x0={x0:.4f}: gradients ANI et TOI différents")
        gap = abs(row['loss_ani'] - row['loss_toi'])
        if row['contacts']:
            if not (math.copysign(1, row['grad_ani']) == math.copysign(1, row['grad_toi'])
                    == -math.copysign(1, row['grad_naive'])):
                failures.append(f"balayage x0={x0:.4f}: signes des gradients incohérents")
            if gap > offset:
                failures.append(f"balayage x0={x0:.4f}: écart de perte {gap:.3e} > {offset:.3e}")
        elif gap > OVERLAY_TOLERANCE:
            failures.append(f"balayage x0={x0:.4f}: pertes ANI/TOI différentes sans contact ({gap:.3e})")
    return failures


def write_sweep_csv(rows: List[Dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, extrasaction='ignore')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(float(row[key])) for key in SWEEP_COLUMNS})
    return path


@dataclass
class MultiCollisionReport:
    n_contacts: int
    mode: str
    autodiff: float
    closed_form: float
    printed_product: float
    relative_error: float
    positions: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.autodiff > 0 and self.relative_error <= INDUCTION_TOLERANCE


def multi_collision_gradient_study(n_contacts: int, mode: str = 'differentiable', mass: float = 1.0,
                                   dt: float = 1e-3, stiffness: float = 1e3, x0: float = -1e-3,
                                   v0: float = -1.0, damping: float = 0.0) -> MultiCollisionReport:
    """
    ∂x_end/∂K sur n pas de contact consécutifs du modèle par impulsion.

    Forme close (vitesses détachées) :
        différentiable  Σ_i (−x_i Δt²/m) · (1 − KΔt²/m)^(n−1−i)
        opaque          Σ_i (−x̃_i Δt²/m)
    Le produit (−x_0Δt²/m)·∏_{i≥1}(1 − x_iΔt²/m) est rapporté pour son signe.
    """
    if n_contacts < 1:
        raise ConfigurationError(f"au moins un contact requis: {n_contacts}")
    if mode not in STUDY_MODES:
        raise ConfigurationError(f"mode de détecteur inconnu: {mode}")

    with GradientTape() as tape:
        K = tape.watch("K", stiffness)
        x = torch.tensor(x0, dtype=torch.float64)
        v = torch.tensor(v0, dtype=torch.float64)
        positions = []
        for i in range(n_contacts):
            if float(x) >= 0.0:
                raise ConfigurationError(f"la balle quitte le sol après {i} contacts")
            positions.append(float(x))
            x, v = impulse_step(x, v, K, damping, mass, dt, opaque=(mode == 'opaque'))
        autodiff = float(tape.gradient(x)["K"])

    h = dt ** 2 / mass
    if mode == 'opaque':
        closed = sum(-p * h for p in positions)
    else:
        factor = 1.0 - stiffness * h
        closed = sum(-p * h * factor ** (n_contacts - 1 - i) for i, p in enumerate(positions))
    printed = -positions[0] * h * math.prod(1.0 - p * h for p in positions[1:])

    report = MultiCollisionReport(n_contacts, mode, autodiff, closed, printed,
                                  relative_error(autodiff, closed), positions)
    logger.debug(f"Collisions multiples n={n_contacts} ({mode}): ∂x/∂K = {autodiff:.6e}, "
                 f"forme close {closed:.6e}")
    return report


@dataclass
class GradientCheck:
    name: str
    value: float
    reference: float
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _check(name: str, value, reference, tolerance: float, absolute: bool = False) -> GradientCheck:
    value = torch.as_tensor(value, dtype=torch.float64)
    reference = torch.as_tensor(reference, dtype=torch.float64)
    if absolute:
        error = float(torch.linalg.vector_norm(value - reference))
    else:
        error = relative_error(value, reference)
    return GradientCheck(name, float(value.reshape(-1)[0]), float(reference.reshape(-1)[0]), error, tolerance)


def contact_step_checks(x: float = -3e-3, v: float = -1.0, dt: float = 0.01) -> List[GradientCheck]:
    """Gradient du pas de contact : +1 (naïf), −1 (TOI), −1 (ANI)."""
    expected = {'naive': 1.0, 'toi': -1.0, 'ani': -1.0}
    return [_check(f"pas de contact {method}", step_gradient(method, x, v, dt), expected[method],
                   EXACT_TOLERANCE, absolute=True) for method in METHODS]


def theorem_checks(mass: float = 1.0, dt: float = 1e-3) -> List[GradientCheck]:
    """K = 2m/Δt² donne −1; ∂x'/∂x = 1 − Δt²K/m autour de la frontière."""
    checks = []
    report = theorem1_check(2.0 * mass / dt ** 2, mass, dt)
    checks.append(_check("raideur K=2m/Δt²", report.gradient, -1.0, EXACT_TOLERANCE, absolute=True))
    for scale in (0.5, 1.0, 3.0):
        report = theorem1_check(scale * mass / dt ** 2, mass, dt)
        checks.append(_check(f"gradient 1−Δt²K/m (K={scale:g}m/Δt²)", report.gradient,
                             report.analytic_gradient, EXACT_TOLERANCE, absolute=True))
    return checks


def contact_impulse_checks(mass: float = 1.0, dt: float = 1e-3, penetration: float = 1e-4) -> List[GradientCheck]:
    """
    Barre verticale sur son extrémité basse (masse effective m), K = 2m/Δt², e = 1 :
    rebond v' = −v, ∂x'/∂x = −1 et ∂J_n/∂K = Δt·d > 0.
    """
    spec = RodSpec(mass=mass, length=1.0, radius=0.05)
    inv_inertia = torch.diag(torch.tensor(spec.inverse_inertia, dtype=torch.float64))
    normal = torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64)
    arm = torch.tensor([0.0, 0.0, -0.5 * spec.length - spec.radius], dtype=torch.float64)
    m_eff = effective_mass(mass, inv_inertia, arm, normal)

    with GradientTape() as tape:
        stiffness = tape.watch("K", 2.0 * mass / dt ** 2)
        height = tape.watch("x", -penetration)
        contact = Contact(0, GROUND, arm, normal, -height, torch.tensor([0.0, 0.0, -1.0], dtype=torch.float64))
        params = ContactParams(stiffness=stiffness, damping=0.0, friction=0.0, restitution=1.0)
        impulse = contact_impulse(contact, params, m_eff, dt)
        velocity = -1.0 + impulse[2] / m_eff
        d_stiffness = tape.gradient(impulse[2], ["K"], retain_graph=True)["K"]
        d_height = tape.gradient(height + dt * velocity, ["x"])["x"]

    return [
        _check("masse effective sur l'axe", m_eff, mass, EXACT_TOLERANCE),
        _check("rebond élastique K=2m/Δt²", float(velocity), 1.0, EXACT_TOLERANCE, absolute=True),
        _check("impulsion ∂x'/∂x", float(d_height), -1.0, OVERLAY_TOLERANCE, absolute=True),
        _check("impulsion ∂J/∂K = Δt·d", float(d_stiffness), dt * penetration, OVERLAY_TOLERANCE),
    ]


def _suspended_setup(generator: Optional[torch.Generator]):
    topology = superball_topology().with_pinned([0])
    config = EngineConfig(ground=None, rod_contacts=False)
    state = superball_rest_state(topology, clearance=2.0)
    kick = 0.05 * torch.randn(state.lin_vel.shape, generator=generator, dtype=torch.float64)
    kick[:, 0] = 0.0
    state = state.replace(lin_vel=kick)
    controls = 20.0 * (2.0 * torch.rand(1, 1, topology.n_cables, generator=generator, dtype=torch.float64) - 1.0)
    return topology, config, state, controls


def _values_loss(topology: Topology, config: EngineConfig, state, controls, target, steps: int):
    def loss(values: torch.Tensor) -> torch.Tensor:
        params = ParameterSet(values[0], values[1], values[2])
        engine = TensegrityEngine(topology, params, config)
        final = engine.rollout(state, controls, n_steps=steps, hold_steps=steps).final
        return ((loss_encoding(final, topology) - target) ** 2).mean()
    return loss


def _autodiff_vs_fd(name: str, topology, config, state, controls, steps: int, values: Sequence[float],
                    target_values: Sequence[float], tolerance: float, sign_flip: bool) -> List[GradientCheck]:
    with torch.no_grad():
        target_engine = TensegrityEngine(topology, ParameterSet(*target_values), config)
        target = loss_encoding(target_engine.rollout(state, controls, n_steps=steps, hold_steps=steps).final,
                               topology)
    params = ParameterSet(*values)
    engine = TensegrityEngine(topology, params, config)
    with GradientTape() as tape:
        for leaf_name in ('log_stiffness', 'log_damping', 'log_mass'):
            tape.register(leaf_name, getattr(params, leaf_name))
        final = engine.rollout(state, controls, n_steps=steps, hold_steps=steps).final
        loss = ((loss_encoding(final, topology) - target) ** 2).mean()
        grads = tape.gradient(loss, ['log_stiffness', 'log_damping', 'log_mass'])
    # d/dθ = d/dlogθ / θ
    autodiff = torch.stack([grads[f'log_{key}'].reshape(()) / v
                            for key, v in zip(('stiffness', 'damping', 'mass'), values)])
    if sign_flip:
        autodiff = -autodiff
    fd = central_difference(_values_loss(topology, config, state, controls, target, steps),
                            torch.tensor(values, dtype=torch.float64), step=1e-6, relative=True)
    return [_check(f"{name} ∂L/∂{key}", autodiff[i], fd[i], tolerance)
            for i, key in enumerate(('K', 'k', 'm'))]


def engine_gradient_checks(steps: int = 100, seed: int = 0, sign_flip: bool = False) -> List[GradientCheck]:
    """
    Gradients du moteur contre différences finies centrées :
    rollout semi-implicite sans contact de `steps` pas (BPTT), puis un pas implicite (adjoint).
    """
    generator = torch.Generator().manual_seed(seed)
    topology, config, state, controls = _suspended_setup(generator)
    values = (1e4, 1e3, 10.0)
    target_values = (1.2e4, 0.8e3, 11.0)
    checks = _autodiff_vs_fd("BPTT", topology, config, state, controls, steps, values, target_values,
                             BPTT_TOLERANCE, sign_flip)
    implicit = config.replace(integrator='implicit', dt=0.01)
    checks += _autodiff_vs_fd("adjoint implicite", topology, implicit, state, controls, 1, values,
                              target_values, ADJOINT_TOLERANCE, sign_flip)
    return checks


def write_checks_csv(checks: List[GradientCheck], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CHECK_COLUMNS)
        writer.writeheader()
        for check in checks:
            writer.writerow({**asdict(check), 'passed': check.passed})
    return path


def run_gradcheck(output_dir: Union[str, Path], sweep_points: int = 100, rollout_steps: int = 100,
                  seed: int = 0, sign_flip: bool = False) -> List[GradientCheck]:
    """
    Tous les contrôles de gradient; écrit ball_sweep.csv, multi_collision.csv et gradcheck.csv.

    Raises:
        GradientCheckError: Liste des contrôles hors tolérance
    """
    output_dir = Path(output_dir)
    v0, dt = -1.0, 0.01
    rows = ball_sweep(sweep_points, v0=v0, dt=dt)
    write_sweep_csv(rows, output_dir / "ball_sweep.csv")
    failures = check_sweep(rows, v0, dt)

    toi_states = simulate('toi', 1.0, -1.0, dt, 200)
    checks = [_check("énergie TOI", float(toi_states[-1].x), 1.0, 1e-10, absolute=True)]
    checks += contact_step_checks()
    checks += theorem_checks()
    checks += contact_impulse_checks()

    reports = [multi_collision_gradient_study(n, mode) for mode in STUDY_MODES for n in range(1, 6)]
    with open(output_dir / "multi_collision.csv", 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=('n_contacts', 'mode', 'autodiff', 'closed_form',
                                               'printed_product', 'relative_error'), extrasaction='ignore')
        writer.writeheader()
        for report in reports:
            writer.writerow(asdict(report))
    for report in reports:
        checks.append(GradientCheck(f"collisions multiples n={report.n_contacts} ({report.mode})",
                                    report.autodiff, report.closed_form,
                                    report.relative_error if report.autodiff > 0 else math.inf,
                                    INDUCTION_TOLERANCE))
        if report.printed_product <= 0:
            failures.append(f"produit imprimé négatif (n={report.n_contacts}, {report.mode})")

    checks += engine_gradient_checks(rollout_steps, seed, sign_flip)
    write_checks_csv(checks, output_dir / "gradcheck.csv")

    failures += [f"{c.name} (erreur {c.error:.3e} > {c.tolerance:.0e})" for c in checks if not c.passed]
    passed = sum(c.passed for c in checks)
    logger.info(f"Contrôles de gradient: {passed}/{len(checks)} réussis, balayage de {len(rows)} hauteurs")
    if failures:
        raise GradientCheckError(failures)
    logger.info(f"✅ Tous les contrôles de gradient réussis ({output_dir})")
    return checks
