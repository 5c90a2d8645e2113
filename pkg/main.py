#!/usr/bin/env python3
"""
Point d'entrée du moteur tenségrité.

Sous-commandes :
    simulate   génère un jeu de données de vérité terrain (JSON lines)
    identify   identifie K, k, m par entraînement progressif
    plan       planifie le roulement (rs, cem, mppi) et rejoue le plan sur la vérité terrain
    gradcheck  balayages de la balle 1D et contrôles de gradient du moteur

Codes de sortie : 0 succès, 2 configuration, 3 divergence, 4 contrôle de gradient.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

# Ajouter le chemin du projet
sys.path.insert(0, str(Path(__file__).parent))

from config.settings import Config
from core.tensegrity.control import PLANNERS, PlannerConfig, make_planner, transfer_evaluate, write_trace
from core.tensegrity.engine import EngineConfig, ParameterSet, TensegrityEngine, com_drag
from core.tensegrity.errors import ConfigurationError, TensegrityError
from core.tensegrity.gradlab import run_gradcheck
from core.tensegrity.model import load_topology, superball_rest_state
from core.tensegrity.settings import RunConfig, make_generator
from core.tensegrity.training import (SCENARIOS, TrainSchedule, data_budget, evaluate_com_error, generate_dataset,
                                      load_dataset, save_dataset, train_progressive, write_loss_history)
from core.tensegrity.training.ground_truth import MISMATCH_DRAG

logger = logging.getLogger(__name__)

# Flux de générateurs indépendants par composant stochastique
DATASET_STREAM = 0
INIT_STREAM = 1
PLANNER_STREAM = 2


def setup_logging(level: str = "INFO", log_file: Optional[Path] = None):
    """Configure le logging."""
    handlers = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Moteur physique différentiable pour robots de tenségrité")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="Fichier de configuration YAML ou JSON")
    common.add_argument('--seed', type=int, help="Graine (TENSEGRID_SEED prioritaire)")
    common.add_argument('--workers', type=int, help="Nombre de threads de calcul")
    common.add_argument('--output', help="Répertoire de sortie")

    sub = parser.add_subparsers(dest='command', required=True)

    simulate = sub.add_parser('simulate', parents=[common], help="Générer la vérité terrain")
    simulate.add_argument('--scenario', choices=SCENARIOS)
    simulate.add_argument('--seconds', type=float)
    simulate.add_argument('--sample-hz', type=float)
    simulate.add_argument('--mismatch', action='store_true', help="Écart de modèle et bruit de mesure")
    simulate.add_argument('--dataset', help="Répertoire du jeu de données (défaut <output>/dataset)")

    identify = sub.add_parser('identify', parents=[common], help="Identifier les paramètres")
    identify.add_argument('--dataset', help="Répertoire du jeu de données (défaut <output>/dataset)")
    identify.add_argument('--phase', choices=('both', 'implicit-only'))

    plan = sub.add_parser('plan', parents=[common], help="Planifier et transférer")
    # le choix est validé par make_planner (code de sortie 2)
    plan.add_argument('--planner', help=f"Algorithme ({', '.join(PLANNERS)})")
    plan.add_argument('--params', help="Paramètres identifiés (JSON) ou 'random'")
    plan.add_argument('--closed-loop', action='store_true', help="Replanifier sur la vérité terrain")

    gradcheck = sub.add_parser('gradcheck', parents=[common], help="Contrôles de gradient")
    gradcheck.add_argument('--sweep-points', type=int)
    gradcheck.add_argument('--inject-fault', action='store_true',
                           help="Inverse le signe des gradients du moteur (doit échouer)")
    return parser


def _topology(run: RunConfig):
    path = Path(run.config['topology']['path'])
    if not path.is_absolute() and not path.exists():
        # chemins relatifs à la racine du projet
        path = Path(Config.BASE_DIR) / path
    return load_topology(path)


def _dataset_dir(run: RunConfig, override: Optional[str]) -> Path:
    return Path(override) if override else Path(run.output_dir) / 'dataset'


def _hidden_params(run: RunConfig) -> ParameterSet:
    return ParameterSet.from_dict(run.config['parameters']['hidden'])


def _write_json(document, path: Path) -> Path:
    with open(path, 'w') as f:
        json.dump(document, f, indent=2)
    return path


def cmd_simulate(run: RunConfig, args) -> int:
    dataset_cfg = run.config['dataset']
    scenario = args.scenario or dataset_cfg['scenario']
    seconds = args.seconds if args.seconds is not None else float(dataset_cfg['seconds'])
    sample_hz = args.sample_hz if args.sample_hz is not None else float(dataset_cfg['sample_hz'])
    mismatch = args.mismatch or bool(dataset_cfg.get('mismatch', False))

    dataset = generate_dataset(
        _topology(run), _hidden_params(run), scenario,
        n_train=int(dataset_cfg['n_train']), n_val=int(dataset_cfg['n_val']), n_test=int(dataset_cfg['n_test']),
        seconds=seconds, sample_rate=sample_hz, engine_config=EngineConfig.from_dict(run.config),
        mismatch=mismatch, generator=make_generator(run.seed, DATASET_STREAM))
    save_dataset(dataset, _dataset_dir(run, args.dataset))
    return 0


def cmd_identify(run: RunConfig, args) -> int:
    dataset = load_dataset(_dataset_dir(run, args.dataset))
    topology = _topology(run)
    schedule = TrainSchedule.from_dict(run.config)
    if args.phase:
        schedule.phases = args.phase
    parameters = run.config['parameters']
    initial = ParameterSet.from_dict(parameters['nominal']).perturbed(
        float(parameters.get('init_spread', 4.0)), make_generator(run.seed, INIT_STREAM))
    logger.info(f"Paramètres initiaux: {initial.to_dict()}")

    engine_config = EngineConfig.from_dict(run.config)
    result = train_progressive(dataset, initial, topology, schedule, engine_config)

    output = Path(run.output_dir)
    _write_json(result.params.to_dict(), output / 'params_identified.json')
    write_loss_history(result.history, output / 'loss_history.csv')
    summary = {'best_val': result.best_val, 'epochs': len(result.history), 'budget': data_budget()}
    if dataset.test:
        report = evaluate_com_error(result.params, topology, dataset.test, engine_config,
                                    dataset.meta.get('scenario', 'non-contact'))
        summary.update(com_error_final=report.final_mean, com_error_relative=report.relative_mean)
    _write_json(summary, output / 'identification.json')
    logger.info(f"✅ Paramètres identifiés écrits dans {output / 'params_identified.json'}")
    return 0


def _planning_params(run: RunConfig, spec: Optional[str]) -> ParameterSet:
    if spec == 'random':
        parameters = run.config['parameters']
        return ParameterSet.from_dict(parameters['nominal']).perturbed(
            float(parameters.get('init_spread', 4.0)), make_generator(run.seed, INIT_STREAM))
    path = Path(spec) if spec else Path(run.output_dir) / 'params_identified.json'
    try:
        with open(path, 'r') as f:
            return ParameterSet.from_dict(json.load(f))
    except FileNotFoundError as e:
        raise ConfigurationError(f"paramètres introuvables: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"paramètres illisibles ({path}): {e}") from e


def cmd_plan(run: RunConfig, args) -> int:
    name = args.planner or run.config['planner'].get('name', 'mppi')
    topology = _topology(run)
    engine_config = EngineConfig.from_dict(run.config)
    model = TensegrityEngine(topology, _planning_params(run, args.params), engine_config)
    planner = make_planner(name, model, PlannerConfig.from_dict(run.config), make_generator(run.seed, PLANNER_STREAM))

    initial = model.settle(superball_rest_state(topology))
    plan = planner.plan(initial)
    output = Path(run.output_dir)
    plan.save(output / f'plan_{name}.json')

    mismatch = bool(run.config['dataset'].get('mismatch', False))
    ground_truth = TensegrityEngine(topology, _hidden_params(run), engine_config,
                                    force_field=com_drag(MISMATCH_DRAG) if mismatch else None)
    result = transfer_evaluate(plan, ground_truth, initial, closed_loop=args.closed_loop,
                               planner=planner if args.closed_loop else None)
    write_trace(result, output / f'transfer_{name}.csv')
    return 0


def cmd_gradcheck(run: RunConfig, args) -> int:
    gradcheck = run.config.get('gradcheck', {})
    sweep_points = args.sweep_points or int(gradcheck.get('sweep_points', 100))
    run_gradcheck(run.output_dir, sweep_points=sweep_points,
                  rollout_steps=int(gradcheck.get('rollout_steps', 100)), seed=run.seed,
                  sign_flip=args.inject_fault)
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'identify': cmd_identify,
    'plan': cmd_plan,
    'gradcheck': cmd_gradcheck,
}


def main(argv=None) -> int:
    """Fonction principale; renvoie le code de sortie."""
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        run = RunConfig.build(args.command, args.config, args.seed, args.workers, args.output)
        system = run.config['system']
        level = 'DEBUG' if system.get('debug_mode') else system.get('log_level', 'INFO')
        setup_logging(level, Path(run.output_dir) / 'tensegrity.log')
        run.apply()
        logger.info(f"Démarrage '{run.command}' (graine {run.seed}, {run.workers} worker(s))")
        return COMMANDS[args.command](run, args)
    except TensegrityError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Interruption par l'utilisateur")
        return 1
    except Exception as e:
        logger.error(f"Erreur: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
