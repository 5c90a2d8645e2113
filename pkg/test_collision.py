#!/usr/bin/env python3
"""
Tests de la détection de collisions, du graphe d'interaction et de la réponse au contact.
"""
import io
from dataclasses import replace

import pytest
import torch

from core.tensegrity.collision import (GROUND, ContactOracle, apply_contact_impulses, build_interaction_graph,
                                       capsule_capsule_check, capsule_ground_check, closest_points_on_segments,
                                       contact_impulse, effective_mass, ground_terms, graph_from_records,
                                       read_contacts, record_contacts, solve_contacts)
from core.tensegrity.engine import ParameterSet, TensegrityEngine
from core.tensegrity.collision.checker import Contact
from core.tensegrity.errors import ConfigurationError
from core.tensegrity.integrators import world_inverse_inertia
from core.tensegrity.model import (ContactParams, PhysicalParams, RobotState, RodSpec, RodState, Topology,
                                   axis_to_quaternion, superball_rest_state)

SPEC = RodSpec(mass=1.0, length=1.0, radius=0.05)
UPRIGHT = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
ALONG_X = axis_to_quaternion([1.0, 0.0, 0.0])
ALONG_Y = axis_to_quaternion([0.0, 1.0, 0.0])


def vec(*values):
    return torch.tensor(values, dtype=torch.float64)


def rod(position, orientation, lin_vel=(0.0, 0.0, 0.0)):
    return RodState(vec(*position), orientation, vec(*lin_vel), vec(0.0, 0.0, 0.0))


def test_ground_depth_sign():
    """depth = sol + rayon − z : contact à profondeur nulle, inactif au-dessus."""
    touching = ground_terms(vec(0.0, 0.0, 0.55), UPRIGHT, 0.5, 0.05)
    assert abs(float(touching.depth[0])) < 1e-15
    assert bool(touching.active[0])
    assert not bool(touching.active[1])
    above = ground_terms(vec(0.0, 0.0, 0.56), UPRIGHT, 0.5, 0.05)
    assert not bool(above.active.any())


def test_lying_rod_two_contacts():
    """Barre couchée enfoncée de 1 cm : deux contacts, normale +z."""
    contacts = capsule_ground_check(rod((0.0, 0.0, 0.04), ALONG_X), SPEC, rod_index=3)
    assert len(contacts) == 2
    for contact in contacts:
        assert contact.with_ground and contact.rod_a == 3 and contact.rod_b == GROUND
        assert float(contact.depth) == pytest.approx(0.01)
        assert torch.allclose(contact.normal, vec(0.0, 0.0, 1.0))
        assert float(contact.point[2]) == pytest.approx(-0.01)


def test_closest_points_crossing():
    s, t, c1, c2 = closest_points_on_segments(vec(-1.0, 0.0, 0.0), vec(1.0, 0.0, 0.0),
                                              vec(0.0, -1.0, 1.0), vec(0.0, 1.0, 1.0))
    assert float(s) == pytest.approx(0.5) and float(t) == pytest.approx(0.5)
    assert torch.allclose(c1, vec(0.0, 0.0, 0.0)) and torch.allclose(c2, vec(0.0, 0.0, 1.0))


def test_closest_points_parallel_overlap():
    """Segments parallèles : milieu de l'intervalle de recouvrement."""
    s, t, c1, c2 = closest_points_on_segments(vec(0.0, 0.0, 0.0), vec(2.0, 0.0, 0.0),
                                              vec(1.0, 0.0, 1.0), vec(3.0, 0.0, 1.0))
    assert float(s) == pytest.approx(0.75)
    assert torch.allclose(c1, vec(1.5, 0.0, 0.0))
    assert torch.allclose(c2, vec(1.5, 0.0, 1.0))


def test_capsule_capsule_contact():
    """Barres croisées à 8 cm (rayons 5 cm) : profondeur 2 cm, normale de b vers a."""
    above = rod((0.0, 0.0, 0.08), ALONG_X, lin_vel=(0.0, 0.0, -1.0))
    below = rod((0.0, 0.0, 0.0), ALONG_Y)
    contact = capsule_capsule_check(above, SPEC, below, SPEC, indices=(2, 5))
    assert contact is not None
    assert contact.pair == (2, 5)
    assert float(contact.depth) == pytest.approx(0.02)
    assert torch.allclose(contact.normal, vec(0.0, 0.0, 1.0))
    assert float(contact.relative_velocity[2]) == pytest.approx(-1.0)
    far = rod((0.0, 0.0, 0.5), ALONG_X)
    assert capsule_capsule_check(far, SPEC, below, SPEC) is None


def test_graph_candidates(superball):
    """12 candidats sol et 15 paires; posé sur une face, trois contacts sol et aucun entre barres."""
    state = superball_rest_state(superball, clearance=0.0)
    graph = build_interaction_graph(state, superball)
    assert graph.size == 12 + 15
    ground = graph.rod_b == GROUND
    assert int(graph.active[0, ground].sum()) >= 3
    assert int(graph.active[0, ~ground].sum()) == 0
    contacts = graph.contacts(state)
    assert all(c.with_ground for c in contacts)


def test_graph_modes(superball):
    """Le mode opaque garde les valeurs mais coupe les gradients."""
    state = superball_rest_state(superball, clearance=0.0)
    position = state.position.clone().requires_grad_(True)
    state = state.replace(position=position)
    live = build_interaction_graph(state, superball, mode='differentiable')
    opaque = build_interaction_graph(state, superball, mode='opaque')
    assert live.depth.requires_grad
    assert not opaque.depth.requires_grad
    assert torch.equal(live.depth.detach(), opaque.depth)
    with pytest.raises(ValueError):
        build_interaction_graph(state, superball, mode='magique')
    empty = build_interaction_graph(state, superball, ground=None, rod_contacts=False)
    assert empty.size == 0 and empty.is_empty


def test_plastic_impulse_stops_normal_velocity():
    """e = 0 : l'impulsion annule la vitesse normale; e = 1 : elle l'inverse."""
    contact = Contact(0, GROUND, vec(0.0, 0.0, 0.0), vec(0.0, 0.0, 1.0), torch.tensor(0.0, dtype=torch.float64),
                      vec(0.0, 0.0, -1.0))
    plastic = ContactParams(stiffness=1e5, damping=0.0, friction=0.0, restitution=0.0)
    impulse = contact_impulse(contact, plastic, 1.0, 1e-3)
    assert torch.allclose(impulse, vec(0.0, 0.0, 1.0))
    elastic = ContactParams(stiffness=1e5, damping=0.0, friction=0.0, restitution=1.0)
    assert torch.allclose(contact_impulse(contact, elastic, 1.0, 1e-3), vec(0.0, 0.0, 2.0))


def test_separating_contact_no_impulse():
    contact = Contact(0, GROUND, vec(0.0, 0.0, 0.0), vec(0.0, 0.0, 1.0), torch.tensor(0.0, dtype=torch.float64),
                      vec(0.0, 0.0, 1.0))
    params = ContactParams(stiffness=1e5, damping=10.0, friction=1.0, restitution=0.0)
    assert float(contact_impulse(contact, params, 1.0, 1e-3).abs().max()) == 0.0


def test_friction_is_bounded():
    """Frottement de Coulomb : |J_f| ≤ μ J_n, opposé au glissement."""
    contact = Contact(0, GROUND, vec(0.0, 0.0, 0.0), vec(0.0, 0.0, 1.0), torch.tensor(0.0, dtype=torch.float64),
                      vec(1.0, 0.0, -1.0))
    params = ContactParams(stiffness=1e5, damping=0.0, friction=0.5, restitution=0.0)
    impulse = contact_impulse(contact, params, 1.0, 1e-3)
    assert float(impulse[2]) == pytest.approx(1.0)
    assert float(impulse[0]) == pytest.approx(-0.5, rel=1e-6)


def test_effective_mass_at_center():
    inv_inertia = torch.eye(3, dtype=torch.float64)
    zero_arm = vec(0.0, 0.0, 0.0)
    assert float(effective_mass(4.0, inv_inertia, zero_arm, vec(0.0, 0.0, 1.0))) == pytest.approx(4.0)
    two_bodies = effective_mass(4.0, inv_inertia, zero_arm, vec(0.0, 0.0, 1.0), 4.0, inv_inertia, zero_arm)
    assert float(two_bodies) == pytest.approx(2.0)


def test_impulses_on_falling_rod():
    """Barre couchée qui tombe : la vitesse verticale remonte, aucune rotation par symétrie."""
    topology = Topology((SPEC,), ())
    state = RobotState.at_rest([[0.0, 0.0, 0.049]], [ALONG_X.tolist()])
    state = state.replace(lin_vel=torch.tensor([[[0.0, 0.0, -1.0]]], dtype=torch.float64))
    params = PhysicalParams.from_topology(topology)
    graph = build_interaction_graph(state, topology)
    assert int(graph.active_count()) == 2
    inv_inertia = world_inverse_inertia(state.orientation, params.body_inverse_inertia(topology))
    lin_vel, ang_vel = apply_contact_impulses(graph, state, state.lin_vel, state.ang_vel, params, inv_inertia, 1e-3)
    assert float(lin_vel[0, 0, 2]) > -1.0
    # e = 0 : les deux extrémités s'arrêtent ensemble
    assert abs(float(lin_vel[0, 0, 2])) < 1e-9
    assert float(ang_vel.abs().max()) < 1e-9


def test_oracle_stream_replay(superball, tmp_path):
    """Contacts écrits puis relus : mêmes paires, profondeurs et normales, aucun gradient."""
    state = superball_rest_state(superball, clearance=-0.001)
    graph = build_interaction_graph(state, superball)
    buffer = io.StringIO()
    written = record_contacts(graph, 4, buffer)
    assert written == int(graph.active.sum())
    path = tmp_path / "contacts.jsonl"
    path.write_text(buffer.getvalue())

    oracle = ContactOracle(path)
    assert oracle.steps == [4]
    replay = oracle.graph(4, state)
    assert int(replay.active.sum()) == written
    expected = sorted((c.rod_a, c.rod_b, round(float(c.depth), 12)) for c in graph.contacts(state))
    replayed = sorted((c.rod_a, c.rod_b, round(float(c.depth), 12)) for c in replay.contacts(state))
    assert expected == replayed
    assert oracle.graph(5, state).size == 0


def test_oracle_stream_errors(superball, tmp_path):
    with pytest.raises(ConfigurationError):
        read_contacts(tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"step": 1, "pair": [0, -1]\n')
    with pytest.raises(ConfigurationError):
        read_contacts(bad)
    state = superball_rest_state(superball)
    record = {"step": 0, "sample": 0, "pair": [9, -1], "point": [0, 0, 0], "normal": [0, 0, 1], "depth": 0.0}
    with pytest.raises(ConfigurationError):
        graph_from_records([record], state)


def test_elastic_reflection_is_exact():
    """e = 1, K = 2m/Δt², enfoncement 1e-4, v = −1 : v' = +1 exactement et ∂x'/∂x = 1 − Δt²K/m = −1."""
    dt, mass = 1e-3, 1.0
    stiffness = torch.tensor(2.0 * mass / dt ** 2, dtype=torch.float64, requires_grad=True)
    height = torch.tensor(0.05 - 1e-4, dtype=torch.float64, requires_grad=True)
    depth = 0.05 - height
    contact = Contact(0, GROUND, vec(0.0, 0.0, 0.0), vec(0.0, 0.0, 1.0), depth, vec(0.0, 0.0, -1.0))
    params = ContactParams(stiffness=stiffness, damping=0.0, friction=0.0, restitution=1.0)

    impulse = contact_impulse(contact, params, mass, dt)
    velocity = -1.0 + impulse[2] / mass
    assert float(velocity) == 1.0
    assert float(impulse[:2].abs().max()) == 0.0

    (d_stiffness,) = torch.autograd.grad(impulse[2], stiffness, retain_graph=True)
    assert float(d_stiffness) == pytest.approx(dt * 1e-4, rel=1e-9)
    next_height = height + dt * velocity
    (d_height,) = torch.autograd.grad(next_height, height)
    assert float(d_height) == pytest.approx(-1.0, abs=1e-9)


def test_slow_contact_does_not_bounce():
    """Sous le seuil de vitesse de repos, le contact est plastique même avec e = 1."""
    contact = Contact(0, GROUND, vec(0.0, 0.0, 0.0), vec(0.0, 0.0, 1.0), torch.tensor(0.0, dtype=torch.float64),
                      vec(0.0, 0.0, -0.01))
    elastic = ContactParams(stiffness=1e5, damping=0.0, friction=0.0, restitution=1.0)
    impulse = contact_impulse(contact, elastic, 1.0, 1e-3, restitution_threshold=0.05)
    assert float(impulse[2]) == pytest.approx(0.01)


def test_flat_rod_elastic_drop():
    """Barre couchée lâchée avec e = 1 : elle rebondit sans tourner ni glisser et ne dépasse pas sa hauteur."""
    topology = Topology((SPEC,), ())
    params = ParameterSet([1e4], [1e3], [SPEC.mass], restitution=1.0)
    engine = TensegrityEngine(topology, params)
    start = RobotState.at_rest([[0.0, 0.0, 0.3]], [ALONG_X.tolist()])
    with torch.no_grad():
        result = engine.rollout(start, n_steps=1000, record_every=1, checkpoint=False)
    heights = [float(s.position[0, 0, 2]) for s in result.samples]
    assert min(heights) < 0.06
    assert max(heights) <= 0.3 + 1e-3
    # rebond : la barre remonte près de sa hauteur initiale
    assert max(heights[300:]) > 0.28
    for sample in result.samples:
        assert float(sample.lin_vel[0, 0, :2].abs().max()) < 1e-9
        assert float(sample.ang_vel.abs().max()) < 1e-9


def test_sliding_contact_on_friction_cone():
    """Point de masse 1 glissant : impulsion normale 0.1, frottement μ J_n opposé au glissement."""
    A = torch.eye(3, dtype=torch.float64).unsqueeze(0)
    free_velocity = torch.tensor([[[-0.1, 1.0, 0.0]]], dtype=torch.float64)
    solution = solve_contacts(A, free_velocity, torch.tensor([[True]]), restitution=0.0, friction=0.5)
    impulse = solution.impulse[0, 0]
    assert float(impulse[0]) == pytest.approx(0.1, rel=1e-8)
    assert float(impulse[1]) == pytest.approx(-0.05, rel=1e-8)
    assert abs(float(impulse[2])) < 1e-12
    assert bool(solution.sliding[0, 0])


def test_sticking_contact_stops_slip():
    """Frottement suffisant : la vitesse tangentielle du point s'annule."""
    A = torch.eye(3, dtype=torch.float64).unsqueeze(0)
    free_velocity = torch.tensor([[[-1.0, 0.2, -0.1]]], dtype=torch.float64)
    solution = solve_contacts(A, free_velocity, torch.tensor([[True]]), restitution=0.0, friction=1.0)
    post = free_velocity + solution.impulse
    assert float(post.abs().max()) < 1e-8
    assert not bool(solution.sliding[0, 0])


def _random_rod(generator, spread):
    position = spread * torch.randn(3, generator=generator, dtype=torch.float64)
    axis = torch.randn(3, generator=generator, dtype=torch.float64)
    velocity = torch.randn(3, generator=generator, dtype=torch.float64)
    return RodState(position, axis_to_quaternion(axis), velocity, vec(0.0, 0.0, 0.0))


def test_capsule_check_symmetric():
    """Échanger a et b garde la profondeur et inverse la normale."""
    generator = torch.Generator().manual_seed(11)
    hits = 0
    for _ in range(50):
        a, b = _random_rod(generator, 0.05), _random_rod(generator, 0.05)
        forward = capsule_capsule_check(a, SPEC, b, SPEC, indices=(0, 1))
        backward = capsule_capsule_check(b, SPEC, a, SPEC, indices=(1, 0))
        assert (forward is None) == (backward is None)
        if forward is None:
            continue
        hits += 1
        assert float(forward.depth) == pytest.approx(float(backward.depth), abs=1e-12)
        assert torch.allclose(forward.normal, -backward.normal, atol=1e-9)
        assert torch.allclose(forward.relative_velocity, -backward.relative_velocity, atol=1e-12)
    assert hits > 0


def _segment_distance_brute(p1, q1, p2, q2, samples=10_000):
    """Distance minimale par échantillonnage du premier segment et projection exacte sur le second."""
    s = torch.linspace(0.0, 1.0, samples, dtype=torch.float64).unsqueeze(-1)
    points = p1 + s * (q1 - p1)
    direction = q2 - p2
    t = (((points - p2) @ direction) / (direction @ direction)).clamp(0.0, 1.0).unsqueeze(-1)
    return float(torch.linalg.vector_norm(points - (p2 + t * direction), dim=-1).min())


def test_closest_points_against_brute_force():
    generator = torch.Generator().manual_seed(4)
    for _ in range(20):
        p1, q1, p2, q2 = torch.randn(4, 3, generator=generator, dtype=torch.float64)
        _, _, c1, c2 = closest_points_on_segments(p1, q1, p2, q2)
        exact = float(torch.linalg.vector_norm(c1 - c2))
        brute = _segment_distance_brute(p1, q1, p2, q2)
        assert exact <= brute + 1e-12
        assert abs(exact - brute) <= 1e-4


def test_coupled_elastic_reflection_gradients():
    """Barre verticale enfoncée de 1e-4 sur son extrémité : même rebond et mêmes gradients via le graphe."""
    topology = Topology((SPEC,), ())
    dt = 1e-3
    stiffness = torch.tensor(2.0 * SPEC.mass / dt ** 2, dtype=torch.float64, requires_grad=True)
    params = replace(PhysicalParams.from_topology(topology), ground_stiffness=stiffness,
                     ground_damping=torch.tensor(0.0, dtype=torch.float64),
                     friction=torch.tensor(0.0, dtype=torch.float64),
                     restitution=torch.tensor(1.0, dtype=torch.float64))
    height = torch.tensor(0.5 + SPEC.radius - 1e-4, dtype=torch.float64, requires_grad=True)
    zero = torch.zeros((), dtype=torch.float64)
    state = RobotState.at_rest([[0.0, 0.0, 0.0]], [UPRIGHT.tolist()])
    state = state.replace(position=torch.stack((zero, zero, height)).reshape(1, 1, 3),
                          lin_vel=torch.tensor([[[0.0, 0.0, -1.0]]], dtype=torch.float64))
    graph = build_interaction_graph(state, topology)
    assert int(graph.active_count()) == 1
    inv_inertia = world_inverse_inertia(state.orientation, params.body_inverse_inertia(topology))

    lin_vel, ang_vel = apply_contact_impulses(graph, state, state.lin_vel, state.ang_vel, params, inv_inertia, dt)
    velocity = lin_vel[0, 0, 2]
    assert float(velocity) == pytest.approx(1.0, abs=1e-8)
    assert float(ang_vel.abs().max()) < 1e-12
    (d_stiffness,) = torch.autograd.grad(velocity, stiffness, retain_graph=True)
    assert float(d_stiffness) == pytest.approx(dt * 1e-4 / SPEC.mass, rel=1e-6)
    (d_height,) = torch.autograd.grad(height + dt * velocity, height)
    assert float(d_height) == pytest.approx(-1.0, abs=1e-6)
