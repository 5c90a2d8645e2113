"""Jeux de données, vérité terrain, entraînement progressif et évaluation."""
from .dataset import (ROLES, SampledTrajectory, Dataset, save_dataset, load_dataset, save_trajectory,
                      load_trajectory, trajectory_to_records, trajectory_from_records)
from .ground_truth import SCENARIOS, generate_ground_truth, generate_dataset, random_commands
from .progressive import (TrainSchedule, EpochRecord, TrainingResult, mse_loss, trajectory_loss, evaluate_loss,
                          train_progressive, train_feedforward, write_loss_history, window_steps)
from .evaluation import ComErrorReport, evaluate_com_error, predict_samples, data_budget

__all__ = [
    'ROLES', 'SampledTrajectory', 'Dataset', 'save_dataset', 'load_dataset', 'save_trajectory', 'load_trajectory',
    'trajectory_to_records', 'trajectory_from_records',
    'SCENARIOS', 'generate_ground_truth', 'generate_dataset', 'random_commands',
    'TrainSchedule', 'EpochRecord', 'TrainingResult', 'mse_loss', 'trajectory_loss', 'evaluate_loss',
    'train_progressive', 'train_feedforward', 'write_loss_history', 'window_steps',
    'ComErrorReport', 'evaluate_com_error', 'predict_samples', 'data_budget',
]
