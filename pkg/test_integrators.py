#!/usr/bin/env python3
"""
Tests des forces de câble, de l'actionneur et des schémas d'intégration.
"""
import pytest
import torch

from core.tensegrity.errors import DegenerateCableError, SingularElementError
from core.tensegrity.integrators import (ActuatorState, ElementSystem, actuator_step, build_element_system,
                                         cable_force, clamp_command, effective_rest_length, element_residual,
                                         implicit_step, semi_implicit_step, solve_element_system)
from core.tensegrity.model import CableEndpoint, CableSpec, PhysicalParams, RobotState, RodSpec, Topology, skew


def vec(*values):
    return torch.tensor(values, dtype=torch.float64)


ORIGIN = vec(0.0, 0.0, 0.0)
STILL = vec(0.0, 0.0, 0.0)


def test_hooke_force_pulls_toward_other_end():
    """Câble de 2 m au repos à 1 m, K = 10 : tension 10 N vers l'autre extrémité."""
    result = cable_force(ORIGIN, STILL, vec(2.0, 0.0, 0.0), STILL, 10.0, 0.0, 1.0)
    assert float(result.tension) == pytest.approx(10.0)
    assert torch.allclose(result.force, vec(10.0, 0.0, 0.0))
    assert torch.allclose(result.direction, vec(1.0, 0.0, 0.0))


def test_damping_along_cable():
    """L'amortissement agit sur la vitesse d'allongement projetée."""
    result = cable_force(ORIGIN, STILL, vec(2.0, 0.0, 0.0), vec(1.0, 5.0, 0.0), 10.0, 3.0, 1.0)
    assert float(result.tension) == pytest.approx(13.0)


def test_slack_cable():
    """Câble détendu : aucune force en mode unilatéral, poussée en mode bilatéral."""
    slack = cable_force(ORIGIN, STILL, vec(0.5, 0.0, 0.0), STILL, 10.0, 0.0, 1.0)
    assert float(slack.force.abs().max()) == 0.0
    pushed = cable_force(ORIGIN, STILL, vec(0.5, 0.0, 0.0), STILL, 10.0, 0.0, 1.0, unilateral=False)
    assert float(pushed.tension) == pytest.approx(-5.0)
    assert float(pushed.force[0]) < 0.0


def test_degenerate_cable():
    with pytest.raises(DegenerateCableError) as info:
        cable_force(ORIGIN, STILL, ORIGIN.clone(), STILL, 10.0, 0.0, 1.0, cable_id=7)
    assert info.value.cable_id == 7
    assert info.value.exit_code == 2


def test_effective_rest_length():
    """l_rest + w·c"""
    rest = effective_rest_length(vec(1.0, 1.0), vec(0.5, -1.0), vec(0.2, 0.2))
    assert torch.allclose(rest, vec(1.1, 0.8))


def test_clamp_command_counts():
    command, count = clamp_command(vec(50.0, 150.0, -300.0), 100.0, warn=False)
    assert count == 2
    assert torch.equal(command, vec(50.0, 100.0, -100.0))


def test_actuator_first_order():
    """Gain Δt/τ, plafonné à 1 : à Δt = τ le moteur atteint la consigne."""
    motor = torch.zeros(1, 2, dtype=torch.float64)
    state = actuator_step(ActuatorState(motor, tau=0.1), vec(100.0, -50.0), dt=0.01, limit=100.0)
    assert torch.allclose(state.motor, torch.tensor([[0.1, -0.05]], dtype=torch.float64))
    reached = actuator_step(ActuatorState(motor, tau=0.1), vec(100.0, -50.0), dt=0.2, limit=100.0)
    assert torch.allclose(reached.motor, torch.tensor([[1.0, -0.5]], dtype=torch.float64))
    clamped = actuator_step(ActuatorState(motor, tau=0.1), vec(400.0, 0.0), dt=0.1, limit=100.0, warn=False)
    assert clamped.clamped == 1


def _element(stiffness=100.0, damping=1.0, rest_length=0.5, dt=0.01):
    inv_inertia = torch.eye(3, dtype=torch.float64) * 2.0
    return build_element_system(
        position=vec(0.0, 0.0, 1.0), lin_vel=vec(0.1, 0.0, 0.0), ang_vel=vec(0.0, 0.3, 0.0),
        arm=vec(0.0, 0.0, 0.5), mass=2.0, inv_inertia=inv_inertia,
        other_point=vec(1.0, 0.0, 1.5), other_velocity=vec(0.0, 0.0, 0.0),
        stiffness=stiffness, damping=damping, rest_length=rest_length, dt=dt,
        external_accel=vec(0.0, 0.0, -9.81))


def test_element_system_solution():
    """Le système 21x21 est résolu avec un résidu relatif négligeable."""
    system = _element()
    assert system.A.shape == (21, 21)
    solution = solve_element_system(system)
    x = torch.cat(tuple(solution))
    assert float(element_residual(system, x)) < 1e-12
    # la force du câble tire m1 vers m2 (+x)
    assert float(solution.force[0]) > 0.0
    # xR = x_t + Δt vR
    assert torch.allclose(solution.position, vec(0.0, 0.0, 1.0) + 0.01 * solution.lin_vel, atol=1e-12)


def test_element_slack_is_free_fall():
    """Câble détendu : vitesse du centre v + gΔt, aucune force."""
    solution = solve_element_system(_element(rest_length=5.0))
    assert float(solution.force.abs().max()) < 1e-12
    assert torch.allclose(solution.lin_vel, vec(0.1, 0.0, -0.0981), atol=1e-12)
    assert torch.allclose(solution.ang_vel, vec(0.0, 0.3, 0.0), atol=1e-12)


def test_singular_element():
    system = ElementSystem(torch.zeros(1, 21, 21, dtype=torch.float64), torch.ones(1, 21, dtype=torch.float64))
    with pytest.raises(SingularElementError) as info:
        solve_element_system(system, labels=["câble 3/extrémité 0"])
    assert "câble 3" in str(info.value)
    with pytest.raises(SingularElementError):
        solve_element_system(system, condition_limit=None)


def test_element_gradient_through_solve():
    """Le gradient traverse la résolution (résolution adjointe)."""
    stiffness = torch.tensor(100.0, dtype=torch.float64, requires_grad=True)
    system = _element(stiffness=stiffness)
    velocity = solve_element_system(system).lin_vel
    velocity[0].backward()
    assert torch.isfinite(stiffness.grad)
    assert float(stiffness.grad) > 0.0


def test_semi_implicit_conserves_momentum(rod_pair, rod_pair_state):
    """Sans gravité, les câbles sont des forces internes : la quantité de mouvement reste nulle."""
    params = PhysicalParams.from_topology(rod_pair)
    state = rod_pair_state
    for _ in range(20):
        state = semi_implicit_step(state, rod_pair, params, 1e-3, gravity=0.0)
    momentum = (state.lin_vel * params.mass.reshape(1, -1, 1)).sum(dim=1)
    assert float(momentum.abs().max()) < 1e-12
    # les barres se rapprochent
    assert float(state.lin_vel[0, 0, 0]) > 0.0
    assert float(state.lin_vel[0, 1, 0]) < 0.0


def test_implicit_matches_semi_implicit_for_small_dt(rod_pair, rod_pair_state):
    """Pour Δt petit, les deux schémas donnent les mêmes vitesses au premier ordre."""
    params = PhysicalParams.from_topology(rod_pair)
    dt = 1e-4
    explicit = semi_implicit_step(rod_pair_state, rod_pair, params, dt, gravity=0.0)
    implicit = implicit_step(rod_pair_state, rod_pair, params, dt, gravity=0.0)
    expected = 2 * 1000.0 * (1.2 - 1.0) * dt / 1.0
    assert float(explicit.lin_vel[0, 0, 0]) == pytest.approx(expected, rel=1e-9)
    assert torch.allclose(implicit.lin_vel, explicit.lin_vel, rtol=1e-2, atol=1e-9)
    assert float(implicit.ang_vel.abs().max()) < 1e-9


def test_gauss_seidel_close_to_jacobi(rod_pair, rod_pair_state):
    params = PhysicalParams.from_topology(rod_pair)
    jacobi = implicit_step(rod_pair_state, rod_pair, params, 1e-3, gravity=0.0, coupling='jacobi')
    sequential = implicit_step(rod_pair_state, rod_pair, params, 1e-3, gravity=0.0, coupling='gauss-seidel')
    assert torch.allclose(jacobi.lin_vel, sequential.lin_vel, rtol=5e-2, atol=1e-6)
    with pytest.raises(ValueError):
        implicit_step(rod_pair_state, rod_pair, params, 1e-3, coupling='newton')


def test_free_rod_falls():
    """Barre sans câble : v = −gΔt avec les deux schémas."""
    topology = Topology((RodSpec(2.0, 1.0, 0.05),), ())
    state = RobotState.at_rest([[0.0, 0.0, 3.0]], [[1.0, 0.0, 0.0, 0.0]])
    params = PhysicalParams.from_topology(topology)
    for step in (implicit_step, semi_implicit_step):
        result = step(state, topology, params, 0.01, gravity=9.81)
        assert torch.allclose(result.lin_vel, torch.tensor([[[0.0, 0.0, -0.0981]]], dtype=torch.float64))
        assert float(result.position[0, 0, 2]) == pytest.approx(3.0 - 0.000981)
        assert result.time == pytest.approx(0.01)


def test_pinned_rod_stays(rod_pair, rod_pair_state):
    """Une barre fixée garde pose et vitesse nulle."""
    pinned = rod_pair.with_pinned([0])
    params = PhysicalParams.from_topology(pinned)
    result = semi_implicit_step(rod_pair_state, pinned, params, 1e-3, gravity=9.81)
    assert float(result.lin_vel[0, 0].abs().max()) == 0.0
    assert torch.equal(result.position[0, 0], rod_pair_state.position[0, 0])
    assert torch.equal(result.orientation[0, 0], rod_pair_state.orientation[0, 0])
    assert float(result.lin_vel[0, 1, 0]) < 0.0


def _anchored_spring(stiffness=1e4, damping=1e3, mass=10.0):
    """Ressort unique entre une barre fixée à l'origine et une barre libre à 1.2 m (attaches aux centres)."""
    center = (0.0, 0.0, 0.0)
    rods = (RodSpec(mass, 1.0, 0.05), RodSpec(mass, 1.0, 0.05))
    cable = CableSpec(CableEndpoint(0, center), CableEndpoint(1, center), stiffness, damping, 1.0)
    topology = Topology(rods, (cable,)).with_pinned([0])
    state = RobotState.at_rest([[0.0, 0.0, 0.0], [1.2, 0.0, 0.0]], [[1.0, 0.0, 0.0, 0.0]] * 2, n_cables=1)
    return topology, PhysicalParams.from_topology(topology), state


def _spring_energy(state, params):
    stretch = torch.linalg.vector_norm(state.position[0, 1] - state.position[0, 0]) - 1.0
    kinetic = 0.5 * params.mass[1] * (state.lin_vel[0, 1] ** 2).sum()
    return float(kinetic + 0.5 * params.stiffness[0] * stretch ** 2)


def test_implicit_stable_where_semi_implicit_diverges():
    """K = 1e4, k = 1e3, m = 10 à Δt = 100 ms : l'implicite reste borné, le semi-implicite explose."""
    topology, params, start = _anchored_spring()
    initial = _spring_energy(start, params)

    state = start
    for _ in range(50):
        state = implicit_step(state, topology, params, 0.1, gravity=0.0, unilateral=False)
        assert state.is_finite()
        assert _spring_energy(state, params) <= initial

    state, ratio = start, 1.0
    for _ in range(50):
        state = semi_implicit_step(state, topology, params, 0.1, gravity=0.0, unilateral=False)
        ratio = _spring_energy(state, params) / initial
        if ratio > 10.0:
            break
    assert ratio > 10.0


@pytest.mark.parametrize("damping", [0.0, 1e3])
def test_implicit_energy_monotone(damping):
    """Sans apport extérieur, l'énergie décroît à chaque pas implicite, amorti ou non."""
    topology, params, state = _anchored_spring(damping=damping)
    energies = [_spring_energy(state, params)]
    for _ in range(100):
        state = implicit_step(state, topology, params, 0.01, gravity=0.0, unilateral=False)
        energies.append(_spring_energy(state, params))
    assert all(after <= before * (1.0 + 1e-12) for before, after in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]


def test_semi_implicit_energy_drift():
    """Ressort non amorti, 10⁴ pas de 1 ms : l'énergie moyenne sur 1 s dérive de moins de 0.5 %."""
    topology, params, state = _anchored_spring(damping=0.0)
    energies = []
    for _ in range(10_000):
        state = semi_implicit_step(state, topology, params, 1e-3, gravity=0.0, unilateral=False)
        energies.append(_spring_energy(state, params))
    first = sum(energies[:1000]) / 1000
    last = sum(energies[-1000:]) / 1000
    assert abs(last - first) / first <= 0.005


def _rows_by_hand(position, lin_vel, ang_vel, arm, mass, inv_inertia, other_point, other_velocity,
                  stiffness, damping, rest_length, dt, gravity):
    """Sept lignes de blocs écrites une à une, inconnues (F, xM, vM, xR, vR, ω, r)."""
    A = torch.zeros(21, 21, dtype=torch.float64)
    I = torch.eye(3, dtype=torch.float64)
    delta = position + arm - other_point
    d = delta / delta.norm()
    P = torch.outer(d, d)

    def put(row, col, block):
        A[3 * row:3 * row + 3, 3 * col:3 * col + 3] = block

    # xM = xR + r
    put(0, 1, I), put(0, 3, -I), put(0, 6, -I)
    # vM = vR + ω_t × r
    put(1, 2, I), put(1, 4, -I), put(1, 6, -skew(ang_vel))
    # F = K(m2 + l d − xM) + k P(v2 − vM)
    put(2, 0, I), put(2, 1, stiffness * I), put(2, 2, damping * P)
    # vR = v + Δt F/m + g Δt
    put(3, 4, I), put(3, 0, -(dt / mass) * I)
    # xR = x + Δt vR
    put(4, 3, I), put(4, 4, -dt * I)
    # ω = ω_t + Δt I⁻¹ (r × F)
    put(5, 5, I), put(5, 0, -dt * inv_inertia @ skew(arm))
    # r = r_t − Δt (r × ω)  soit  r + Δt [r×] ω = r_t
    put(6, 6, I), put(6, 5, dt * skew(arm))

    c1 = stiffness * (other_point + rest_length * d) + damping * (P @ other_velocity)
    b = torch.cat((torch.zeros(6, dtype=torch.float64), c1, lin_vel + gravity * dt, position, ang_vel, arm))
    return A, b


def test_element_system_matches_hand_assembly():
    """Assemblage du système 21x21 identique, coefficient par coefficient, à une écriture indépendante."""
    inv_inertia = torch.diag(vec(2.0, 3.0, 5.0))
    args = dict(position=vec(0.0, 0.0, 1.0), lin_vel=vec(0.1, 0.0, -0.2), ang_vel=vec(0.0, 0.3, 0.1),
                arm=vec(0.1, 0.0, 0.5), mass=2.0, inv_inertia=inv_inertia,
                other_point=vec(1.0, 0.2, 1.5), other_velocity=vec(0.0, -0.4, 0.0),
                stiffness=100.0, damping=1.5, rest_length=0.5, dt=0.01)
    gravity = vec(0.0, 0.0, -9.81)
    system = build_element_system(**args, external_accel=gravity)
    A, b = _rows_by_hand(**args, gravity=gravity)
    assert torch.allclose(system.A, A, rtol=0.0, atol=1e-12)
    assert torch.allclose(system.b, b, rtol=0.0, atol=1e-12)
