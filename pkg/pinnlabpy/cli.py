"""
Command-line entry point: `pinnlab {train,sweep,landscape,oracle}`.

Experiments are described by JSON manifests; flags only select paths, the
seed, the worker count, an epoch cap for smoke runs and verbosity.
"""

import argparse
import copy
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import (
    ArtifactConflictError,
    CapabilityError,
    ConfigurationError,
    DegenerateDirectionError,
    DivergenceError,
    DomainError,
    ParseError,
    UndefinedErrorMetric,
)
from .evaluation import (
    DEFAULT_THRESHOLD,
    THRESHOLDS,
    Prediction,
    SweepGrid,
    economical_minima_report,
    evaluate_run,
    field_l2_error,
    sweep,
)
from .io import (
    _coerce_float,
    _coerce_int,
    config_hash,
    load_checkpoint,
    load_json,
    run_directory,
    save_checkpoint,
    write_artifact,
    write_frame_csv,
    write_json,
)
from .landscape import trajectory_landscapes
from .oracles import allen_cahn_reference, pendulum_reference, self_convergence, toy_reference
from .training import RunTrace, TrainConfig, build_model, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
THREADS_ENV = "PINNLAB_THREADS"
AC_CONVERGENCE_BOUND = 1e-4


# ------------------- Manifest sections -------------------
class OracleSettings:
    ''' Which reference solution to generate and on what grid. '''
    def __init__(self, system: str, y0: Optional[float] = None, T: float = 1.0, dt: float = 1e-3,
                 nx: int = 256, refine: bool = False) -> None:
        if system not in ("pendulum", "toy", "allen-cahn"):
            raise ConfigurationError(f"no reference solution for system '{system}'")
        if system != "allen-cahn" and y0 is None:
            raise ConfigurationError(f"{system} reference needs an initial value")
        if not (T > 0 and dt > 0):
            raise ConfigurationError("T and dt must be positive")
        self.system: str = system
        self.y0: Optional[float] = y0
        self.T: float = T
        self.dt: float = dt
        self.nx: int = nx
        self.refine: bool = refine

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'OracleSettings':
        y0 = None
        if data.get('y0_deg') is not None:
            y0 = float(np.radians(_coerce_float(data['y0_deg'], 'y0_deg')))
        elif data.get('y0') is not None:
            y0 = _coerce_float(data['y0'], 'y0')
        return OracleSettings(
            system=data.get('system', ''),
            y0=y0,
            T=_coerce_float(data.get('T', 1.0), 'T'),
            dt=_coerce_float(data.get('dt', 1e-3), 'dt'),
            nx=_coerce_int(data.get('nx', 256), 'nx'),
            refine=bool(data.get('refine', False))
        )

    def to_dict(self) -> Dict[str, Any]:
        return {'system': self.system, 'y0': self.y0, 'T': self.T, 'dt': self.dt,
                'nx': self.nx, 'refine': self.refine}


class LandscapeSettings:
    ''' Horizons, grid and truncation for projecting the loss around a recorded run. '''
    def __init__(
        self,
        horizons: List[float],
        resolution: Tuple[int, int] = (41, 41),
        n_col: int = 1024,
        seed: int = 0,
        threshold: Optional[float] = None,
        log_scale: bool = False,
        checkpoints: Optional[List[int]] = None,
        run: int = 0
    ) -> None:
        if not horizons or any(not T > 0 for T in horizons):
            raise ConfigurationError("landscape horizons must be a non-empty list of positive values")
        if checkpoints is not None and len(checkpoints) != 3:
            raise ConfigurationError("landscape checkpoints must name three epochs (initial, middle, final)")
        self.horizons: List[float] = list(horizons)
        self.resolution: Tuple[int, int] = (int(resolution[0]), int(resolution[1]))
        self.n_col: int = n_col
        self.seed: int = seed
        self.threshold: Optional[float] = threshold
        self.log_scale: bool = log_scale
        self.checkpoints: Optional[List[int]] = checkpoints
        self.run: int = run

    @staticmethod
    def from_dict(data: Dict[str, Any], seed: int = 0) -> 'LandscapeSettings':
        threshold = data.get('threshold')
        checkpoints = data.get('checkpoints')
        return LandscapeSettings(
            horizons=[_coerce_float(T, 'horizons') for T in data.get('horizons', [])],
            resolution=tuple(_coerce_int(r, 'resolution') for r in data.get('resolution', (41, 41))),
            n_col=_coerce_int(data.get('n_col', 1024), 'n_col'),
            seed=_coerce_int(data.get('seed', seed), 'seed'),
            threshold=_coerce_float(threshold, 'threshold') if threshold is not None else None,
            log_scale=bool(data.get('log_scale', False)),
            checkpoints=[_coerce_int(c, 'checkpoints') for c in checkpoints] if checkpoints is not None else None,
            run=_coerce_int(data.get('run', 0), 'run')
        )

    def to_dict(self) -> Dict[str, Any]:
        return {'horizons': self.horizons, 'resolution': list(self.resolution), 'n_col': self.n_col,
                'seed': self.seed, 'threshold': self.threshold, 'log_scale': self.log_scale,
                'checkpoints': self.checkpoints, 'run': self.run}


def _section(data: Dict[str, Any], name: str, required: Sequence[str] = ()) -> Dict[str, Any]:
    section = data[name]
    if not isinstance(section, dict):
        raise ConfigurationError(f"'{name}' must be an object, got {type(section).__name__}")
    missing = [key for key in required if key not in section]
    if missing:
        raise ConfigurationError(f"'{name}' is missing {', '.join(repr(k) for k in missing)}")
    return section


class ExperimentManifest:
    '''
    One experiment: training runs, a sweep grid, an economical-minima study,
    landscape and oracle settings, and where the artifacts go.
    '''
    def __init__(
        self,
        experiment_id: str,
        output_dir: str = "runs",
        seed: int = 0,
        train: Optional[List[Dict[str, Any]]] = None,
        sweep: Optional[SweepGrid] = None,
        economical: Optional[Dict[str, Any]] = None,
        landscape: Optional[LandscapeSettings] = None,
        oracle: Optional[OracleSettings] = None
    ) -> None:
        if not isinstance(experiment_id, str) or not experiment_id:
            raise TypeError("experiment_id must be a non-empty string")
        self.experiment_id: str = experiment_id
        self.output_dir: str = output_dir
        self.seed: int = seed
        self.train: List[Dict[str, Any]] = list(train or [])
        self.sweep: Optional[SweepGrid] = sweep
        self.economical: Optional[Dict[str, Any]] = economical
        self.landscape: Optional[LandscapeSettings] = landscape
        self.oracle: Optional[OracleSettings] = oracle

    def __repr__(self) -> str:
        parts = [name for name in ("train", "sweep", "economical", "landscape", "oracle") if getattr(self, name)]
        return f"ExperimentManifest({self.experiment_id}, sections={parts})"

    def train_configs(self, max_epochs: Optional[int] = None) -> List[TrainConfig]:
        configs = []
        for i, data in enumerate(self.train):
            try:
                configs.append(TrainConfig.from_dict(data))
            except (TypeError, KeyError) as e:
                raise ConfigurationError(f"'train' entry {i}: {e}") from e
        if max_epochs is not None:
            configs = [c.with_epochs(max_epochs) if c.epochs > max_epochs else c for c in configs]
        return configs

    @staticmethod
    def from_dict(data: Dict[str, Any], seed_override: Optional[int] = None,
                  output_override: Optional[str] = None) -> 'ExperimentManifest':
        if not isinstance(data, dict):
            raise ConfigurationError("manifest must be a JSON object")
        experiment = data.get('experiment')
        if not isinstance(experiment, str) or not experiment:
            raise ConfigurationError("manifest needs an 'experiment' id (a non-empty string)")
        seed = seed_override if seed_override is not None else _coerce_int(data.get('seed', 0), 'seed')
        runs = data.get('train', [])
        runs = [runs] if isinstance(runs, dict) else runs
        if not isinstance(runs, list):
            raise ConfigurationError("'train' must be an object or a list of objects")
        train_dicts = []
        for i, run in enumerate(runs):
            if not isinstance(run, dict):
                raise ConfigurationError(f"'train' entry {i} must be an object, got {type(run).__name__}")
            run = copy.deepcopy(run)
            if seed_override is not None or 'seed' not in run:
                run['seed'] = seed
                if seed_override is not None:
                    run.setdefault('network', {})['seed'] = seed
            train_dicts.append(run)
        grid = None
        if data.get('sweep'):
            sweep_data = dict(_section(data, 'sweep', ('base',)))
            if seed_override is not None or 'base_seed' not in sweep_data:
                sweep_data['base_seed'] = seed
            grid = SweepGrid.from_dict(sweep_data)
        economical = _section(data, 'economical', ('system', 'y0')) if data.get('economical') else None
        landscape = LandscapeSettings.from_dict(_section(data, 'landscape'), seed) if data.get('landscape') else None
        oracle = OracleSettings.from_dict(_section(data, 'oracle')) if data.get('oracle') else None
        return ExperimentManifest(
            experiment_id=experiment,
            output_dir=output_override or data.get('output_dir', 'runs'),
            seed=seed,
            train=train_dicts,
            sweep=grid,
            economical=economical,
            landscape=landscape,
            oracle=oracle
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'experiment': self.experiment_id,
            'output_dir': self.output_dir,
            'seed': self.seed,
            'train': self.train,
            'sweep': self.sweep.to_dict() if self.sweep else None,
            'economical': self.economical,
            'landscape': self.landscape.to_dict() if self.landscape else None,
            'oracle': self.oracle.to_dict() if self.oracle else None,
        }


def load_manifest(path: str, seed_override: Optional[int] = None,
                  output_override: Optional[str] = None) -> ExperimentManifest:
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    data = load_json(path)
    try:
        return ExperimentManifest.from_dict(data, seed_override, output_override)
    except (TypeError, KeyError) as e:
        raise ConfigurationError(f"{path}: {e}") from e


# ------------------- Artifacts -------------------
def checkpoint_stem(run_dir: str, epoch: int) -> str:
    return os.path.join(run_dir, f"theta_{epoch:07d}")


def write_run(run_dir: str, config: TrainConfig, trace: RunTrace) -> Dict[str, Any]:
    ''' Losses CSV, checkpoints, an ODE prediction table and the run metadata. '''
    write_frame_csv(trace.to_frame(), os.path.join(run_dir, "losses.csv"))
    for epoch, params in sorted(trace.checkpoints.items()):
        save_checkpoint(params, config.network, checkpoint_stem(run_dir, epoch), epoch, {'config_hash': config.hash})
    meta = trace.metadata()
    meta['config'] = config.to_dict()
    system = config.system
    model = build_model(config)
    if system.name in ("pendulum", "toy"):
        outcome = evaluate_run(config, trace, model)
        meta['outcome'] = outcome.to_dict()
        prediction = Prediction.from_model(model, trace.final_params, system.T)
        reference = system.reference()
        write_frame_csv(pd.DataFrame({
            't': prediction.times,
            'y': prediction.y,
            'y_t': prediction.ydot,
            'reference': reference.at(prediction.times, "y"),
        }), os.path.join(run_dir, "prediction.csv"))
    elif system.name == "allen-cahn":
        reference = system.reference()
        meta['field_errors'] = {
            'full': field_l2_error(model, trace.final_params, reference),
            't0': field_l2_error(model, trace.final_params, reference, (0.0, 0.0)),
            'late': field_l2_error(model, trace.final_params, reference, (system.T / 2, system.T)),
        }
    write_json(meta, os.path.join(run_dir, "run.json"))
    logger.info("wrote run artifacts to %s", run_dir)
    return meta


def _run_dir(manifest: ExperimentManifest, digest: str) -> str:
    return run_directory(manifest.output_dir, manifest.experiment_id, digest)


# ------------------- Commands -------------------
def cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest, args.seed, args.output_dir)
    configs = manifest.train_configs(args.max_epochs)
    if not configs:
        raise ConfigurationError(f"{args.manifest} has no 'train' section")
    status = EXIT_OK
    for config in configs:
        run_dir = _run_dir(manifest, config.hash)
        trace = train(config)
        meta = write_run(run_dir, config, trace)
        print(f"{config.system.name} T={config.system.T:g} seed={config.seed}: {len(trace)} epochs, "
              f"min L_f={trace.min_l_f:.4e} -> {run_dir}")
        if 'outcome' in meta:
            print(f"  L2={meta['outcome']['l2']:.4f} class={meta['outcome']['label']}")
        if trace.diverged:
            print(f"diverged: {trace.failure}", file=sys.stderr)
            status = EXIT_DIVERGED
    return status


def cmd_sweep(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest, args.seed, args.output_dir)
    if manifest.sweep is None and not manifest.economical:
        raise ConfigurationError(f"{args.manifest} has neither a 'sweep' nor an 'economical' section")
    if manifest.sweep is not None:
        grid = manifest.sweep
        digest = config_hash({'sweep': grid.to_dict(), 'max_epochs': args.max_epochs})
        out = _run_dir(manifest, digest)
        result = sweep(grid, args.threads, args.max_epochs)
        write_frame_csv(result.to_frame(), os.path.join(out, "sweep.csv"))
        write_frame_csv(result.table(), os.path.join(out, "sweep_cells.csv"))
        write_frame_csv(result.success_rates(THRESHOLDS), os.path.join(out, "sweep_thresholds.csv"))
        write_artifact(os.path.join(out, "sweep.md"), result.markdown().encode("utf-8"))
        write_json({'grid': grid.to_dict(), 'runs': len(result), 'max_epochs': args.max_epochs},
                   os.path.join(out, "sweep.json"))
        result.display_table()
    if manifest.economical:
        eco = dict(manifest.economical)
        digest = config_hash({'economical': eco, 'seed': manifest.seed, 'max_epochs': args.max_epochs})
        out = _run_dir(manifest, digest)
        report = economical_minima_report(
            system=eco['system'],
            y0s=eco['y0'],
            approaches=eco.get('approaches', ("data-guided", "physics-driven")),
            seeds=eco.get('seeds'),
            overrides=eco.get('overrides'),
            workers=args.threads,
            max_epochs=args.max_epochs,
            threshold=eco.get('threshold', DEFAULT_THRESHOLD)
        )
        write_frame_csv(report.frame, os.path.join(out, "economical.csv"))
        write_frame_csv(report.medians().reset_index(), os.path.join(out, "economical_medians.csv"))
        report.display_summary()
    return EXIT_OK


def cmd_landscape(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest, args.seed, args.output_dir)
    settings = manifest.landscape
    if settings is None:
        raise ConfigurationError(f"{args.manifest} has no 'landscape' section")
    configs = manifest.train_configs(args.max_epochs)
    if not configs or settings.run >= len(configs):
        raise ConfigurationError("landscape needs the training run it projects around in the 'train' section")
    config = configs[settings.run]
    run_dir = os.path.join(manifest.output_dir, manifest.experiment_id, config.hash[:12])
    epochs = settings.checkpoints or [config.checkpoints[0], config.checkpoints[len(config.checkpoints) // 2],
                                      config.checkpoints[-1]]
    thetas = []
    for epoch in epochs:
        stem = checkpoint_stem(run_dir, epoch)
        if not os.path.exists(stem + ".f64"):
            raise FileNotFoundError(f"missing checkpoint {stem}.f64 (run `pinnlab train` first)")
        params, _, _ = load_checkpoint(stem)
        thetas.append(params)
    model = build_model(config)
    grids = trajectory_landscapes(config.system, model, thetas[0], thetas[1], thetas[2], settings.horizons,
                                  settings.resolution, None, settings.n_col, settings.seed, settings.threshold,
                                  settings.log_scale, args.threads)
    out = _run_dir(manifest, config_hash({'landscape': settings.to_dict(), 'run': config.hash}))
    for grid in grids:
        csv_path, _ = grid.export(out, f"landscape_T{grid.T:g}")
        print(f"T={grid.T:g}: {csv_path}")
    return EXIT_OK


def _oracle_settings(args: argparse.Namespace) -> OracleSettings:
    if args.target.endswith(".json"):
        manifest = load_manifest(args.target, args.seed, args.output_dir)
        if manifest.oracle is None:
            raise ConfigurationError(f"{args.target} has no 'oracle' section")
        return manifest.oracle
    data: Dict[str, Any] = {'system': args.target, 'refine': args.refine}
    for key in ('y0', 'y0_deg', 'T', 'dt', 'nx'):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    return OracleSettings.from_dict(data)


def cmd_oracle(args: argparse.Namespace) -> int:
    settings = _oracle_settings(args)
    meta: Dict[str, Any] = {'settings': settings.to_dict()}
    if settings.system == "pendulum":
        reference = pendulum_reference(settings.y0, settings.T, settings.dt)
    elif settings.system == "toy":
        reference = toy_reference(settings.y0, settings.T, int(round(settings.T / settings.dt)) + 1)
    else:
        reference = allen_cahn_reference(settings.nx, settings.dt, settings.T)
        if settings.refine:
            fine = allen_cahn_reference(2 * settings.nx, settings.dt, settings.T)
            diff = self_convergence(reference, fine)
            meta['self_convergence'] = {'nx_fine': 2 * settings.nx, 'max_difference': diff,
                                        'converged': diff <= AC_CONVERGENCE_BOUND}
            print(f"self-convergence nx={settings.nx} vs {2 * settings.nx}: {diff:.3e}")
    meta['metadata'] = reference.metadata
    out = args.output or os.path.join(run_directory(args.output_dir or "runs", "oracle",
                                                    config_hash(settings.to_dict())), "reference.csv")
    reference.export_csv(out)
    write_json(meta, os.path.splitext(out)[0] + ".json")
    print(f"{settings.system} reference: {reference.times.size} time nodes -> {out}")
    return EXIT_OK


# ------------------- Entry point -------------------
def _threads(value: Optional[int]) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get(THREADS_ENV)
    return max(1, _coerce_int(env, THREADS_ENV)) if env else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinnlab", description="Fixed points and PINN training failures.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the manifest's global seed")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default: ${THREADS_ENV} or 1; 1 is bitwise reproducible)")
    common.add_argument("--max-epochs", type=int, default=None, help="cap every epoch count (smoke runs)")
    common.add_argument("--output-dir", default=None, help="override the manifest's output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in (
        ("train", cmd_train, "train the runs of a manifest"),
        ("sweep", cmd_sweep, "run a manifest's sweep grid and economical-minima study"),
        ("landscape", cmd_landscape, "project the physics loss around a recorded run"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("manifest")
        p.set_defaults(handler=handler)
    p = sub.add_parser("oracle", parents=[common], help="write a reference solution")
    p.add_argument("target", help="system name or a manifest with an 'oracle' section")
    p.add_argument("--y0", type=float, default=None)
    p.add_argument("--y0-deg", dest="y0_deg", type=float, default=None)
    p.add_argument("--T", dest="T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--refine", action="store_true", help="also solve at 2*nx and report self-convergence")
    p.add_argument("-o", "--output", default=None, help="CSV path (default: content-addressed under the output dir)")
    p.set_defaults(handler=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.threads = _threads(args.threads)
        return args.handler(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, CapabilityError, ParseError, ArtifactConflictError, DomainError,
            DegenerateDirectionError, UndefinedErrorMetric) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
