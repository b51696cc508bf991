"""
Deterministic experiment sweeps.

A sweep expands an ExperimentConfig into tasks, one per (epsilon, seed, mode),
runs them in order or on a process pool, writes each task's files under its
own name and finally writes the records index from the parent process.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from .errors import LorenzShadowError
from .exports import (
    export_chain,
    export_crossings,
    export_orbit_1d,
    export_orbit_2d,
    export_probe_orbit,
    flow_report_payload,
    write_csv,
    write_json,
)
from .flow_core import FlowSpec
from .flow_shadow import FlowConstants, derive_flow_constants, run_flow_pipeline
from .logger import log_performance, run_context
from .map_core import LorenzMapSpec, MapConstants, derive_map_constants
from .shadow_1d import run_1d_pipeline, shadow_bound_ok
from .shadow_2d import komuro_probe, run_map_pipeline
from .spec_loader import ExperimentConfig, fingerprint

logger = logging.getLogger(__name__)

T = TypeVar('T')

RECORD_COLUMNS = [
    'kind', 'epsilon', 'seed', 'mode', 'n_steps', 'passed', 'max_error',
    'x_error', 'y_error', 'gamma_exact', 'error', 'config_fingerprint',
    'constants_fingerprint',
]


@dataclass
class RunRecord:
    """Outcome of one seeded run; everything except wall_time is deterministic."""
    kind: str
    epsilon: float
    seed: int
    mode: str
    n_steps: int
    passed: bool
    max_error: float
    config_fingerprint: str
    constants: Dict[str, Any] = field(default_factory=dict)
    x_error: Optional[float] = None
    y_error: Optional[float] = None
    gamma_exact: Optional[bool] = None
    error: Optional[str] = None
    files: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def constants_fingerprint(self) -> str:
        return fingerprint(self.constants)

    def row(self) -> List[Any]:
        return [
            self.kind, self.epsilon, self.seed, self.mode, self.n_steps, self.passed,
            self.max_error, self.x_error, self.y_error, self.gamma_exact, self.error,
            self.config_fingerprint, self.constants_fingerprint,
        ]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['constants_fingerprint'] = self.constants_fingerprint
        return data


@dataclass(frozen=True)
class MapTask:
    spec: LorenzMapSpec
    constants: MapConstants
    seed: int
    mode: str
    n_steps: int
    out_dir: Path
    config_fingerprint: str


@dataclass(frozen=True)
class FlowTask:
    fs: FlowSpec
    constants: FlowConstants
    seed: int
    mode: str
    n_steps: int
    out_dir: Path
    config_fingerprint: str
    samples_per_step: int = 50


def _eps_dir(root: Path, kind: str, epsilon: float) -> Path:
    return root / kind / f"eps-{epsilon!r}"


def _failed(task: Any, kind: str, error: LorenzShadowError, epsilon: float, constants: Dict[str, Any]) -> RunRecord:
    logger.warning(f"{kind} run seed={task.seed} mode={task.mode} failed: {error}")
    return RunRecord(
        kind=kind,
        epsilon=epsilon,
        seed=task.seed,
        mode=task.mode,
        n_steps=task.n_steps,
        passed=False,
        max_error=math.inf,
        config_fingerprint=task.config_fingerprint,
        constants=constants,
        error=f"{type(error).__name__}: {error}",
    )


def _map_records(task: MapTask) -> List[RunRecord]:
    started = time.perf_counter()
    c = task.constants
    stem = f"seed-{task.seed}_{task.mode}"
    records = []

    try:
        run = run_1d_pipeline(task.spec, c, task.n_steps, task.seed, task.mode)
        path = export_orbit_1d(task.out_dir / f"{stem}_1d.csv", run.orbit, run.result)
        records.append(RunRecord(
            kind='1d',
            epsilon=c.epsilon,
            seed=task.seed,
            mode=task.mode,
            n_steps=task.n_steps,
            passed=shadow_bound_ok(run.result, c) and run.invariants.passed,
            max_error=run.result.max_error,
            config_fingerprint=task.config_fingerprint,
            constants=c.to_dict(),
            gamma_exact=run.result.gamma_exact,
            files=[path.name],
            extra={
                'invariant_violations': len(run.invariants.violations),
                'max_defect': run.result.max_defect,
                'pullback_width': run.result.pullback_width,
            },
        ))
    except LorenzShadowError as e:
        records.append(_failed(task, '1d', e, c.epsilon, c.to_dict()))

    try:
        run2 = run_map_pipeline(task.spec, c, task.n_steps, task.seed, task.mode)
        path = export_orbit_2d(task.out_dir / f"{stem}_2d.csv", run2.orbit.points, run2.result)
        eps = c.epsilon
        records.append(RunRecord(
            kind='2d',
            epsilon=eps,
            seed=task.seed,
            mode=task.mode,
            n_steps=task.n_steps,
            passed=(
                run2.report.passed
                and run2.result.x_error <= eps / 8.0
                and run2.result.y_error <= 7.0 * eps / 8.0
            ),
            max_error=run2.report.sup_distance,
            config_fingerprint=task.config_fingerprint,
            constants=c.to_dict(),
            x_error=run2.result.x_error,
            y_error=run2.result.y_error,
            gamma_exact=run2.result.result_1d.gamma_exact,
            files=[path.name],
            extra={'contraction_failures': len(run2.contraction_failures), 'verification': run2.report.to_dict()},
        ))
    except LorenzShadowError as e:
        records.append(_failed(task, '2d', e, c.epsilon, c.to_dict()))

    elapsed = time.perf_counter() - started
    for record in records:
        record.wall_time = elapsed / len(records)
    return records


def _flow_records(task: FlowTask) -> List[RunRecord]:
    started = time.perf_counter()
    c = task.constants
    constants = c.to_dict()
    stem = f"seed-{task.seed}_{task.mode}"
    try:
        run = run_flow_pipeline(task.fs, c, task.n_steps, task.seed, task.mode, task.samples_per_step)
    except LorenzShadowError as e:
        return [_failed(task, 'flow', e, c.epsilon, constants)]

    files = [
        export_chain(task.out_dir / f"{stem}_chain.csv", run.chain).name,
        export_crossings(task.out_dir / f"{stem}_crossings.csv", run.crossings).name,
        export_orbit_2d(task.out_dir / f"{stem}_crossing-orbit.csv", run.projection.w, run.map_result).name,
        write_json(
            task.out_dir / f"{stem}_report.json",
            flow_report_payload(run.report, fingerprint(constants)),
        ).name,
    ]
    return [RunRecord(
        kind='flow',
        epsilon=c.epsilon,
        seed=task.seed,
        mode=task.mode,
        n_steps=task.n_steps,
        passed=run.report.passed,
        max_error=run.report.sup_distance,
        config_fingerprint=task.config_fingerprint,
        constants=constants,
        gamma_exact=run.report.terminal_ray_ok,
        files=files,
        extra={
            'crossings': len(run.crossings),
            'cases': {str(k): run.projection.cases.count(k) for k in (1, 2, 3)},
            'report': run.report.to_dict(),
        },
        wall_time=time.perf_counter() - started,
    )]


@log_performance(logger, threshold_seconds=60.0)
def run_map_task(task: MapTask) -> List[RunRecord]:
    """The 1d and the planar run for one seed; each writes its orbit CSV."""
    with run_context(eps=task.constants.epsilon, seed=task.seed, mode=task.mode):
        return _map_records(task)


@log_performance(logger, threshold_seconds=300.0)
def run_flow_task(task: FlowTask) -> List[RunRecord]:
    with run_context(flow_eps=task.constants.epsilon, seed=task.seed, mode=task.mode):
        return _flow_records(task)


def execute(tasks: Sequence[T], worker: Callable[[T], List[RunRecord]], jobs: int = 1) -> List[RunRecord]:
    """Run tasks and return their records in task order, whatever the completion order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [record for task in tasks for record in worker(task)]

    results: Dict[int, List[RunRecord]] = {}
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        futures = {executor.submit(worker, task): i for i, task in enumerate(tasks)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [record for i in range(len(tasks)) for record in results[i]]


def write_records(out_dir: Path, records: Sequence[RunRecord], name: str = 'records') -> Path:
    """records.csv holds the deterministic columns; records.json adds wall times and details."""
    write_json(out_dir / f"{name}.json", [r.to_dict() for r in records])
    return write_csv(out_dir / f"{name}.csv", RECORD_COLUMNS, (r.row() for r in records))


def map_tasks(config: ExperimentConfig, out_dir: Path, epsilons: Optional[Sequence[float]] = None,
              modes: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None,
              n_steps: Optional[int] = None) -> List[MapTask]:
    tasks = []
    for epsilon in epsilons or config.epsilons:
        constants = derive_map_constants(config.map_spec, epsilon)
        for mode in modes or config.modes:
            for seed in seeds or config.seeds:
                tasks.append(MapTask(
                    spec=config.map_spec,
                    constants=constants,
                    seed=seed,
                    mode=mode,
                    n_steps=n_steps or config.n_steps,
                    out_dir=_eps_dir(out_dir, 'map', epsilon),
                    config_fingerprint=config.fingerprint,
                ))
    return tasks


def flow_tasks(config: ExperimentConfig, out_dir: Path, epsilons: Optional[Sequence[float]] = None,
               modes: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None,
               n_steps: Optional[int] = None, samples_per_step: int = 50) -> List[FlowTask]:
    """Derives the flow constants once per epsilon and records them next to the runs."""
    fs = config.flow_spec if config.flow_spec is not None else FlowSpec(map=config.map_spec)
    sweep = config.flow_sweep
    tasks = []
    for epsilon in epsilons or sweep.epsilons:
        constants = derive_flow_constants(fs, epsilon)
        eps_dir = _eps_dir(out_dir, 'flow', epsilon)
        write_json(eps_dir / 'constants.json', {
            'constants': constants.to_dict(),
            'fingerprint': fingerprint(constants.to_dict()),
        })
        for mode in modes or sweep.modes:
            for seed in seeds or config.seeds:
                tasks.append(FlowTask(
                    fs=fs,
                    constants=constants,
                    seed=seed,
                    mode=mode,
                    n_steps=n_steps or sweep.n_steps,
                    out_dir=eps_dir,
                    config_fingerprint=config.fingerprint,
                    samples_per_step=samples_per_step,
                ))
    return tasks


def run_probe(spec: LorenzMapSpec, config: ExperimentConfig, out_dir: Path,
              seed: Optional[int] = None, delta: Optional[float] = None,
              n_steps: Optional[int] = None, grid_step: float = 1e-5) -> Dict[str, Any]:
    """komuro_probe with the report JSON pointing at its orbit CSV."""
    settings = config.probe
    seed = settings.seed if seed is None else seed
    report = komuro_probe(
        spec,
        epsilon_star=settings.epsilon_star,
        delta=settings.delta if delta is None else delta,
        n_steps=n_steps or settings.n_steps,
        seed=seed,
        search_budget=settings.search_budget,
        step=grid_step,
    )
    stem = f"probe_seed-{seed}"
    orbit_path = export_probe_orbit(out_dir / f"{stem}_orbit.csv", spec, report.orbit.points)
    payload = report.to_dict()
    payload['orbit_file'] = orbit_path.name
    payload['config_fingerprint'] = config.fingerprint
    write_json(out_dir / f"{stem}.json", payload)
    return payload
