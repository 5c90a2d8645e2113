#!/usr/bin/env python3
"""
Tests de la vérité terrain, des jeux de données et de l'identification des paramètres.
"""
import csv

import pytest
import torch

from core.tensegrity.autodiff import clip_gradients, gradient_norm
from core.tensegrity.engine import EngineConfig, ParameterSet, TensegrityEngine
from core.tensegrity.errors import ConfigurationError
from core.tensegrity.model import superball_rest_state, superball_topology
from core.tensegrity.settings import default_config
from core.tensegrity.training import (SampledTrajectory, TrainSchedule, data_budget, evaluate_com_error,
                                      generate_dataset, generate_ground_truth, load_dataset, load_trajectory,
                                      mse_loss, random_commands, save_dataset, train_feedforward, train_progressive,
                                      trajectory_loss, window_steps, write_loss_history)
from core.tensegrity.training import progressive
from core.tensegrity.training.ground_truth import (ROLLING_SPEED, initial_states, scenario_engine_config,
                                                   scenario_topology)


def hidden_params():
    return ParameterSet.from_dict(default_config()['parameters']['hidden'])


@pytest.fixture(scope="module")
def small_dataset():
    """Trois points à 10 Hz par trajectoire (0.3 s), robot suspendu."""
    return generate_dataset(superball_topology(), hidden_params(), 'non-contact', n_train=2, n_val=1, n_test=1,
                            seconds=0.3, generator=torch.Generator().manual_seed(0))


def test_window_steps():
    """n = ⌈T/Δt⌉ et pas effectif T/n."""
    assert window_steps(0.1, 0.001) == (100, pytest.approx(0.001))
    steps, dt = window_steps(0.1, 0.03)
    assert steps == 4
    assert dt == pytest.approx(0.025)
    assert window_steps(0.1, 0.1)[0] == 1


def test_data_budget():
    """(10 + 10)·50 points contre 50·5·40·10 : rapport 0.01."""
    budget = data_budget()
    assert budget['identification'] == 1000
    assert budget['policy'] == 100000
    assert budget['ratio'] == pytest.approx(0.01)


def test_random_commands_bounds():
    commands = random_commands(3, 5, 24, 100.0, torch.Generator().manual_seed(1))
    assert commands.shape == (3, 5, 24)
    assert float(commands.abs().max()) <= 100.0


def test_schedule_validation():
    schedule = TrainSchedule.from_dict(default_config())
    assert schedule.engine_dt == 0.001
    assert schedule.interval == pytest.approx(0.1)
    assert schedule.phases == 'both'
    with pytest.raises(ConfigurationError):
        TrainSchedule(phases='tout')
    with pytest.raises(ConfigurationError):
        TrainSchedule(interval=0.1, engine_dt=0.2)
    with pytest.raises(ConfigurationError):
        TrainSchedule(lr=0.0)


def test_sampled_trajectory_validation(superball):
    """Instants strictement croissants et régulièrement espacés."""
    states = superball_rest_state(superball, n_batch=3)
    controls = torch.zeros(3, 24, dtype=torch.float64)
    trajectory = SampledTrajectory([0.0, 0.1, 0.2], states, controls)
    assert trajectory.interval == pytest.approx(0.1)
    starts, windows, targets = trajectory.tuples()
    assert starts.batch_size == 2 and windows.shape == (2, 24) and targets.batch_size == 2
    with pytest.raises(ConfigurationError):
        SampledTrajectory([0.0, 0.2, 0.1], states, controls)
    with pytest.raises(ConfigurationError):
        SampledTrajectory([0.0, 0.1, 0.3], states, controls)
    with pytest.raises(ConfigurationError):
        SampledTrajectory([0.0, 0.1], states, controls)
    with pytest.raises(ConfigurationError):
        SampledTrajectory([0.0, 0.1, 0.2], states, controls, role='apprentissage')


def test_mse_loss_shape_mismatch(superball):
    a = superball_rest_state(superball, n_batch=2)
    b = superball_rest_state(superball, n_batch=3)
    assert float(mse_loss(a, a, superball)) == 0.0
    with pytest.raises(ConfigurationError):
        mse_loss(a, b, superball)


def test_mse_loss_mean_over_components(superball):
    """Barre 1 décalée de 0.3 en x : seules ses deux extrémités changent, soit 2·0.09 / 72."""
    target = superball_rest_state(superball)
    position = target.position.clone()
    position[0, 1, 0] += 0.3
    shifted = target.replace(position=position)
    assert float(mse_loss(shifted, target, superball)) == pytest.approx(2 * 0.09 / 72, rel=1e-9)


def test_scenarios(superball):
    """Suspendu : barre 0 fixée et pas de sol; roulant : vitesse horizontale bornée."""
    pinned = scenario_topology(superball, 'non-contact')
    assert pinned.pinned[0] and not any(pinned.pinned[1:])
    assert scenario_engine_config(EngineConfig(), 'non-contact').ground is None
    assert scenario_engine_config(EngineConfig(), 'rolling').ground == 0.0
    with pytest.raises(ConfigurationError):
        scenario_topology(superball, 'vol')
    state = initial_states(superball, 'rolling', 4, torch.Generator().manual_seed(2))
    speed = torch.linalg.vector_norm(state.lin_vel[:, 0], dim=-1)
    low, high = ROLLING_SPEED
    assert bool(((speed >= low) & (speed <= high)).all())
    assert float(state.lin_vel[..., 2].abs().max()) == 0.0


def test_incompatible_sample_rate(superball):
    with pytest.raises(ConfigurationError):
        generate_ground_truth(superball, hidden_params(), n_traj=1, seconds=1.0, sample_rate=3.0)


def test_generated_dataset_layout(small_dataset):
    assert len(small_dataset.train) == 2
    assert len(small_dataset.val) == 1 and len(small_dataset.test) == 1
    trajectory = small_dataset.train[0]
    assert trajectory.times == pytest.approx([0.0, 0.1, 0.2])
    assert trajectory.controls.shape == (3, 24)
    assert small_dataset.meta['pinned'] == [0]
    # barre 0 fixée : elle ne bouge pas
    assert torch.equal(trajectory.states.position[0, 0], trajectory.states.position[-1, 0])
    assert float((trajectory.states.position[-1, 1:] - trajectory.states.position[0, 1:]).abs().max()) > 0.0


def test_dataset_save_load(small_dataset, tmp_path):
    """Écrit puis relu : mêmes instants, états et commandes."""
    save_dataset(small_dataset, tmp_path / "data")
    loaded = load_dataset(tmp_path / "data", required=('train', 'val', 'test'))
    assert loaded.meta['scenario'] == 'non-contact'
    assert loaded.n_points == small_dataset.n_points
    original, restored = small_dataset.train[1], loaded.train[1]
    assert restored.times == original.times
    assert torch.equal(restored.controls, original.controls)
    for a, b in zip(original.states.tensors(), restored.states.tensors()):
        assert torch.equal(a, b)


def test_dataset_errors(small_dataset, tmp_path):
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path / "absent")
    partial = small_dataset.__class__(train=small_dataset.train, meta=small_dataset.meta)
    save_dataset(partial, tmp_path / "partial")
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path / "partial")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"t": 0.0, "rods": [{"p": [0, 0, 0]}], "u": []}\n')
    with pytest.raises(ConfigurationError):
        load_trajectory(bad)


def test_hidden_parameters_reproduce_data(small_dataset):
    """Avec les paramètres cachés, la perte et l'erreur du CdM sont nulles (aux arrondis près)."""
    topology = scenario_topology(superball_topology(), 'non-contact')
    config = scenario_engine_config(EngineConfig(), 'non-contact')
    engine = TensegrityEngine(topology, hidden_params(), config)
    with torch.no_grad():
        loss = trajectory_loss(engine, small_dataset.train[0])
    assert float(loss) < 1e-12
    report = evaluate_com_error(hidden_params(), superball_topology(), small_dataset.test)
    assert report.final_mean < 1e-8
    assert len(report.times) == 3


def test_nominal_parameters_have_error(small_dataset):
    topology = scenario_topology(superball_topology(), 'non-contact')
    engine = TensegrityEngine(topology, ParameterSet.from_topology(topology),
                              scenario_engine_config(EngineConfig(), 'non-contact'))
    with torch.no_grad():
        assert float(trajectory_loss(engine, small_dataset.train[0])) > 1e-8


@pytest.mark.slow
def test_progressive_training_runs(small_dataset, tmp_path):
    """Phase implicite courte : historique écrit, meilleure perte finie."""
    params = ParameterSet.from_topology(superball_topology())
    schedule = TrainSchedule(interval=0.1, engine_dt=0.05, max_epochs=2, phases='implicit-only')
    result = train_progressive(small_dataset, params, superball_topology(), schedule)
    assert 1 <= len(result.history) <= 2
    assert result.history[0].phase == 'implicit'
    assert result.history[0].dt == pytest.approx(0.1)
    assert result.best_val < float('inf')
    path = write_loss_history(result.history, tmp_path / "loss.csv")
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == len(result.history)
    assert set(rows[0]) == {'epoch', 'phase', 'dt', 'lr', 'train_loss', 'val_loss', 'seconds'}


def _offset_params():
    """Paramètres cachés décalés de 20 à 25 %, point de départ des identifications."""
    hidden = default_config()['parameters']['hidden']
    return ParameterSet.from_dict({**hidden, 'stiffness': hidden['stiffness'] * 1.25,
                                   'damping': hidden['damping'] * 0.8, 'mass': hidden['mass'] * 1.2})


@pytest.fixture(scope="module")
def identified(small_dataset):
    """Calendrier complet (implicite puis semi-implicite) jusqu'à Δt_r = 1 ms."""
    schedule = TrainSchedule(interval=0.1, engine_dt=0.001, max_epochs=40, patience=3)
    return train_progressive(small_dataset, _offset_params(), superball_topology(), schedule)


@pytest.mark.slow
def test_identification_recovers_hidden_parameters(identified):
    """Raideur, amortissement et masse à moins de 5 % des valeurs cachées."""
    hidden = default_config()['parameters']['hidden']
    found = identified.params.to_dict()
    for name in ('stiffness', 'damping', 'mass'):
        value = found[name][0] if isinstance(found[name], list) else found[name]
        assert value == pytest.approx(hidden[name], rel=0.05), name


@pytest.mark.slow
def test_semi_implicit_phase_lowers_loss(identified):
    """La meilleure validation semi-implicite passe sous la meilleure validation implicite."""
    implicit = [r.val_loss for r in identified.history if r.phase == 'implicit']
    semi_implicit = [r.val_loss for r in identified.history if r.phase == 'semi-implicit']
    assert implicit and semi_implicit
    assert min(semi_implicit) < min(implicit)


@pytest.mark.slow
def test_recurrent_beats_feedforward(small_dataset, identified):
    """Erreur du CdM sur le test : le modèle récurrent fait mieux qu'un unique pas de T."""
    schedule = TrainSchedule(interval=0.1, engine_dt=0.001, max_epochs=40, patience=3)
    feedforward = train_feedforward(small_dataset, _offset_params(), superball_topology(), schedule)
    recurrent_error = evaluate_com_error(identified.params, superball_topology(), small_dataset.test)
    feedforward_error = evaluate_com_error(feedforward.params, superball_topology(), small_dataset.test)
    assert recurrent_error.final_mean < feedforward_error.final_mean


def test_training_clips_each_batch(small_dataset, monkeypatch):
    """Chaque lot passe par clip_gradients avec le seuil du calendrier."""
    calls = []

    def recording_clip(grads, max_norm):
        clipped = clip_gradients(grads, max_norm)
        calls.append((max_norm, float(gradient_norm(clipped))))
        return clipped

    monkeypatch.setattr(progressive, 'clip_gradients', recording_clip)
    schedule = TrainSchedule(interval=0.1, engine_dt=0.1, max_epochs=1, phases='implicit-only', grad_clip=1e-6)
    train_progressive(small_dataset, ParameterSet.from_topology(superball_topology()), superball_topology(), schedule)
    assert len(calls) == len(small_dataset.train)
    for max_norm, norm in calls:
        assert max_norm == 1e-6
        assert norm <= 1e-6 * (1 + 1e-9)
