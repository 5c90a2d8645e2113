#!/usr/bin/env python3
"""
Tests des types du domaine : topologie, état, rotations.
"""
import json
import math

import pytest
import torch

from config.settings import Config
from core.tensegrity.errors import ConfigurationError
from core.tensegrity.integrators import cable_endpoints
from core.tensegrity.model import (ContactParams, RobotState, RodSpec, RodState, attachment_world, axis_to_quaternion,
                                   center_of_mass, integrate_quaternion, load_topology, loss_encoding, pack_state,
                                   quat_between, quat_rotate, quat_to_matrix, rod_endpoints, superball_geometry,
                                   superball_rest_state, topology_from_dict, topology_to_dict, unpack_state)


def test_superball_counts(superball):
    """Six barres, 24 câbles, graphe connexe."""
    assert superball.n_rods == 6
    assert superball.n_cables == 24
    assert superball.is_connected()
    # deux extrémités par barre, quatre câbles par extrémité
    assert superball.incident_counts.tolist() == [8.0] * 6


def test_superball_cable_lengths(superball):
    """À l'équilibre, tous les câbles mesurent √6·L/4 (≈1.031 m) et sont tendus."""
    state = superball_rest_state(superball)
    ends = cable_endpoints(state, superball)
    lengths = torch.linalg.vector_norm(ends.point_b - ends.point_a, dim=-1)
    expected = math.sqrt(6.0) * Config.ROD_LENGTH / 4.0
    assert torch.allclose(lengths, torch.full_like(lengths, expected), atol=1e-12)
    assert abs(expected - 1.031) < 1e-3
    assert bool((lengths > superball.rest_lengths).all())


def test_superball_geometry_pairs():
    """Chaque extrémité porte exactement quatre câbles."""
    _, _, pairs = superball_geometry()
    assert len(pairs) == 24
    nodes = [node for pair in pairs for node in pair]
    assert all(nodes.count(node) == 4 for node in set(nodes))


@pytest.mark.parametrize("clearance", [0.0, 0.5])
def test_rest_state_clearance(superball, clearance):
    """La sphère d'extrémité la plus basse est à `clearance` du sol."""
    state = superball_rest_state(superball, clearance=clearance)
    low, high = rod_endpoints(state, superball)
    lowest = torch.minimum(low[..., 2], high[..., 2]) - superball.radii
    assert abs(float(lowest.min()) - clearance) < 1e-12
    assert float(state.lin_vel.abs().max()) == 0.0


def test_rest_state_requires_six_rods(rod_pair):
    with pytest.raises(ConfigurationError):
        superball_rest_state(rod_pair)


def test_pack_unpack_exact(superball):
    """unpack_state est l'inverse exact de pack_state (pas de renormalisation)."""
    state = superball_rest_state(superball, n_batch=2)
    generator = torch.Generator().manual_seed(3)
    state = state.replace(lin_vel=torch.randn(state.lin_vel.shape, generator=generator, dtype=torch.float64))
    vector = pack_state(state)
    assert vector.shape == (2, 13 * 6)
    restored = unpack_state(vector, 6, motor=state.motor)
    for a, b in zip(state.tensors(), restored.tensors()):
        assert torch.equal(a, b)


def test_loss_encoding_width(superball):
    """Encodage sans rotation : 72 composantes pour 6 barres."""
    state = superball_rest_state(superball)
    assert loss_encoding(state, superball).shape == (1, 72)


def test_axis_to_quaternion():
    """Le quaternion aligne l'axe z de la barre sur l'axe demandé."""
    z = torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64)
    for axis in ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 1.0, 1.0]):
        target = torch.tensor(axis, dtype=torch.float64)
        target = target / target.norm()
        rotated = quat_rotate(axis_to_quaternion(axis), z)
        assert torch.allclose(rotated, target, atol=1e-12)


def test_rotation_matrix_matches_rotate():
    q = axis_to_quaternion([0.3, -0.2, 0.9])
    v = torch.tensor([0.1, 2.0, -0.5], dtype=torch.float64)
    assert torch.allclose(quat_to_matrix(q) @ v, quat_rotate(q, v), atol=1e-12)


def test_integrate_quaternion_stays_unit():
    """L'orientation reste normalisée après intégration."""
    q = axis_to_quaternion([1.0, 0.0, 0.0]).reshape(1, 4)
    omega = torch.tensor([[3.0, -1.0, 2.0]], dtype=torch.float64)
    for _ in range(100):
        q = integrate_quaternion(q, omega, 0.01)
    assert abs(float(q.norm()) - 1.0) < 1e-12


def test_center_of_mass_weighted():
    positions = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]
    orientations = [[1.0, 0.0, 0.0, 0.0]] * 2
    state = RobotState.at_rest(positions, orientations)
    com = center_of_mass(state, torch.tensor([1.0, 2.0], dtype=torch.float64))
    assert torch.allclose(com, torch.tensor([[2.0, 0.0, 0.0]], dtype=torch.float64))


def test_topology_document(superball, tmp_path):
    """Document JSON écrit puis relu : mêmes barres, câbles et contact."""
    path = tmp_path / "topology.json"
    with open(path, "w") as f:
        json.dump(topology_to_dict(superball), f)
    loaded = load_topology(path)
    assert loaded.rods == superball.rods
    assert loaded.cables == superball.cables
    assert loaded.contact == superball.contact


def test_default_topology_file():
    """Le fichier de topologie livré décrit SUPERball."""
    topology = load_topology(Config.DEFAULT_TOPOLOGY_PATH)
    assert topology.n_rods == 6
    assert topology.n_cables == 24


def test_topology_errors(tmp_path):
    """Fichier absent, document invalide ou indice de barre inconnu → ConfigurationError."""
    with pytest.raises(ConfigurationError):
        load_topology(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ pas du json")
    with pytest.raises(ConfigurationError):
        load_topology(bad)
    doc = {"rods": [{"mass": 1.0, "length": 1.0}],
           "cables": [{"a": {"rod": 0}, "b": {"rod": 4}, "K": 1.0, "k": 0.0, "rest_length": 1.0}]}
    with pytest.raises(ConfigurationError):
        topology_from_dict(doc)


def test_invalid_specs():
    with pytest.raises(ConfigurationError):
        RodSpec(mass=0.0, length=1.0, radius=0.05)
    with pytest.raises(ConfigurationError):
        ContactParams(restitution=1.5)


def test_stiffness_gate():
    """K/m > 1/Δt² : 1e5 N/m pour 10 kg passe à 1 kHz, pas 1e3 N/m."""
    assert ContactParams(stiffness=1e5).stiffness_gate(10.0, 1e-3) is False
    assert ContactParams(stiffness=1e8).stiffness_gate(10.0, 1e-3) is True
    assert ContactParams(stiffness=1e3).stiffness_gate(10.0, 0.01) is False


def test_with_pinned(superball):
    pinned = superball.with_pinned([0])
    assert pinned.pinned == (True, False, False, False, False, False)
    assert superball.pinned == (False,) * 6


def test_rest_state_face_down(superball):
    """Pose de repos sur une face : trois sphères au sol à la même hauteur, CdM au-dessus du triangle."""
    state = superball_rest_state(superball)
    low, high = rod_endpoints(state, superball)
    bottoms = (torch.cat((low[0], high[0])) - torch.tensor([0.0, 0.0, Config.ROD_RADIUS]))
    touching = bottoms[bottoms[:, 2] < 1e-9]
    assert touching.shape[0] == 3
    assert float(touching[:, 2].abs().max()) < 1e-12
    # le centre de masse se projette au centre de la face
    com = center_of_mass(state, torch.ones(6, dtype=torch.float64))[0]
    assert torch.allclose(touching[:, :2].mean(dim=0), com[:2], atol=1e-12)


def test_quat_between():
    for source, target in (([1.0, 1.0, 1.0], [0.0, 0.0, -1.0]), ([0.0, 0.0, 1.0], [0.0, 0.0, -1.0]),
                           ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])):
        s = torch.tensor(source, dtype=torch.float64)
        t = torch.tensor(target, dtype=torch.float64)
        rotated = quat_rotate(quat_between(s, t), s / s.norm())
        assert torch.allclose(rotated, t / t.norm(), atol=1e-12)


def test_attachment_world_quarter_turn():
    """Quart de tour autour de z : le décalage (1, 0, 0) devient (0, 1, 0)."""
    quarter = torch.tensor([math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)], dtype=torch.float64)
    rod = RodState(torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64), quarter,
                   torch.tensor([0.5, 0.0, 0.0], dtype=torch.float64),
                   torch.tensor([0.0, 0.0, 2.0], dtype=torch.float64))
    point, velocity, arm = attachment_world(rod, torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))
    assert torch.allclose(arm, torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64), atol=1e-12)
    assert torch.allclose(point, torch.tensor([1.0, 3.0, 3.0], dtype=torch.float64), atol=1e-12)
    # v + ω × r
    assert torch.allclose(velocity, torch.tensor([-1.5, 0.0, 0.0], dtype=torch.float64), atol=1e-12)


def test_attachment_world_jacobian():
    """Jacobienne automatique du point et de sa vitesse contre différences centrées (pas 1e-6)."""
    generator = torch.Generator().manual_seed(5)
    x0 = torch.randn(13, generator=generator, dtype=torch.float64)
    x0[3:7] = x0[3:7] / x0[3:7].norm()
    offset = torch.tensor([0.1, -0.2, 0.8], dtype=torch.float64)

    def attach(x):
        point, velocity, _ = attachment_world(RodState(x[0:3], x[3:7], x[7:10], x[10:13]), offset)
        return torch.cat((point, velocity))

    analytic = torch.autograd.functional.jacobian(attach, x0)
    h = 1e-6
    numeric = torch.stack([(attach(x0 + h * e) - attach(x0 - h * e)) / (2.0 * h)
                           for e in torch.eye(13, dtype=torch.float64)], dim=-1)
    assert float((analytic - numeric).abs().max() / analytic.abs().max()) <= 1e-5


def test_cable_endpoints_use_attachments(superball):
    """Les extrémités de câble sont les points d'attache en repère monde."""
    state = superball_rest_state(superball)
    state = state.replace(ang_vel=torch.full_like(state.ang_vel, 0.3))
    ends = cable_endpoints(state, superball)
    cable = superball.cables[5]
    rod = state.rod(cable.endpoint_a.rod)
    point, velocity, _ = attachment_world(rod, torch.tensor(cable.endpoint_a.offset, dtype=torch.float64))
    assert torch.allclose(ends.point_a[:, 5], point, atol=1e-12)
    assert torch.allclose(ends.velocity_a[:, 5], velocity, atol=1e-12)
