"""Command line interface for lorenz-shadow."""

import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Type

import click

from config.settings import Config, get_config

from .errors import ConstantSearchError, LorenzShadowError, SpecValidationError
from .exports import export_trajectory
from .flow_core import FlowSpec, FlowState, sample_trajectory
from .flow_shadow import FLOW_MODES, check_flow_constants, derive_flow_constants
from .harness import (
    execute,
    flow_tasks,
    map_tasks,
    run_flow_task,
    run_map_task,
    run_probe,
    write_records,
)
from .logger import LogOperation, get_logger, log_exceptions, setup_logging
from .map_core import PlanarPoint, check_conditions, derive_eta0, derive_map_constants
from .seeding import derive_seed
from .shadow_1d import MODES
from .shadow_2d import PROBE_RADIUS
from .spec_loader import ExperimentConfig, experiment_config_from_dict, load_experiment_config

logger = get_logger("cli")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2

REFERENCE_DOCUMENT = {
    "map": {"alpha": {"c": 1.95, "rho": 0.75}, "beta": {"d": 0.3, "e_plus": 0.65, "e_minus": -0.65}, "mu0": 0.02},
    "flow": {"lambda1": 2.0, "lambda2": 5.0, "lambda3": 1.0, "tube_time": 1.0},
}


def _load(config_path: Optional[str], settings: Type[Config]) -> ExperimentConfig:
    """Experiment config from --config, or the reference map and flow; exits 2 if unreadable."""
    try:
        if config_path is None:
            return experiment_config_from_dict(
                REFERENCE_DOCUMENT, default_output=settings.OUTPUT_DIR, default_master=settings.MASTER_SEED
            )
        return load_experiment_config(
            config_path, default_output=settings.OUTPUT_DIR, default_master=settings.MASTER_SEED
        )
    except SpecValidationError as e:
        click.echo(f"❌ Invalid configuration: {e}", err=True)
        sys.exit(EXIT_BAD_CONFIG)


def parse_seeds(value: Optional[str], master_seed: int) -> Optional[List[int]]:
    """
    "N" means the first N seeds derived from the master seed, "a-b" an
    inclusive range and "a,b,c" an explicit list.
    """
    if value is None:
        return None
    value = value.strip()
    try:
        if ',' in value:
            seeds = [int(part) for part in value.split(',') if part.strip()]
        elif '-' in value.lstrip('-'):
            lo, hi = value.split('-', 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [derive_seed(master_seed, 'run', k) for k in range(int(value))]
    except ValueError:
        raise click.BadParameter(f"cannot parse seeds {value!r}")
    if len(set(seeds)) != len(seeds):
        raise click.BadParameter("seeds must be distinct")
    return seeds


def _out_dir(out: Optional[str], experiment: ExperimentConfig) -> Path:
    path = Path(out) if out is not None else experiment.output_dir
    path.mkdir(parents=True, exist_ok=True)
    return path


def _summarize(records: Sequence, label: str) -> int:
    failed = [r for r in records if not r.passed]
    if failed:
        click.echo(f"❌ {len(failed)} of {len(records)} {label} runs failed:", err=True)
        for r in failed[:20]:
            detail = r.error or f"max_error={r.max_error:.6g}"
            click.echo(f"    {r.kind} eps={r.epsilon} seed={r.seed} mode={r.mode}: {detail}", err=True)
        return EXIT_CHECK_FAILED
    worst = max((r.max_error for r in records), default=0.0)
    click.echo(f"✅ all {len(records)} {label} runs passed (largest error {worst:.6g})")
    return EXIT_OK


@log_exceptions(logger)
def _conditions_ok(experiment: ExperimentConfig, grid_n: int) -> Tuple[bool, List[str]]:
    report = check_conditions(experiment.map_spec, grid_n=grid_n, beta_bound=experiment.beta_bound)
    lines = []
    for row in report.rows:
        mark = "✅" if row.passed else "❌"
        lines.append(f"{mark} condition ({row.condition}): {row.detail}  [mu={row.mu:g}, margin={row.margin:.6g}]")
    return report.passed, lines


@click.group()
@click.option('--env', 'env_name', default=None,
              help='Configuration name (development, production, testing)')
@click.pass_context
def main(ctx: click.Context, env_name: Optional[str]) -> None:
    """lorenz-shadow - parameter-shifted shadowing for Lorenz maps and flows."""
    settings = get_config(env_name)
    settings.init_dirs()
    setup_logging(settings)
    ctx.obj = settings


@main.command()
@click.option('--config', 'config_path', default=None, type=click.Path(), help='Experiment config JSON')
@click.option('--epsilon', 'epsilons', multiple=True, type=float, help='Accuracy to derive constants for')
@click.option('--flow/--no-flow', default=True, help='Also derive and falsify the flow constants')
@click.pass_obj
def check(settings: Type[Config], config_path: Optional[str], epsilons: Tuple[float, ...], flow: bool) -> None:
    """Certify the map conditions and derive the shadowing constants."""
    experiment = _load(config_path, settings)
    ok, lines = _conditions_ok(experiment, settings.CONDITION_GRID)
    click.echo(f"Conditions ({experiment.beta_bound} β bound, grid {settings.CONDITION_GRID}):")
    for line in lines:
        click.echo(f"  {line}")
    if not ok:
        click.echo("❌ map conditions fail", err=True)
        sys.exit(EXIT_CHECK_FAILED)

    try:
        eta0 = derive_eta0(experiment.map_spec)
        click.echo(f"✅ eta0 = {eta0:.6g}")
        for epsilon in epsilons or experiment.epsilons:
            constants = derive_map_constants(experiment.map_spec, epsilon)
            click.echo(
                f"✅ epsilon={epsilon}: epsilon1={constants.epsilon1:.6g}, "
                f"delta={constants.delta:.6g}, mu_hat={constants.mu_hat:.6g}"
            )
    except LorenzShadowError as e:
        click.echo(f"❌ {e}", err=True)
        sys.exit(EXIT_CHECK_FAILED)

    if flow:
        fs = experiment.flow_spec if experiment.flow_spec is not None else FlowSpec(map=experiment.map_spec)
        for epsilon in experiment.flow_sweep.epsilons:
            try:
                with LogOperation(logger, "flow constants", flow_eps=epsilon):
                    constants = derive_flow_constants(fs, epsilon)
            except ConstantSearchError as e:
                click.echo(f"❌ flow constants at epsilon={epsilon}: {e}", err=True)
                sys.exit(EXIT_CHECK_FAILED)
            failures = check_flow_constants(fs, constants, seed=settings.MASTER_SEED + 2)
            if failures:
                click.echo(f"❌ falsified flow constants: {', '.join(failures)}", err=True)
                sys.exit(EXIT_CHECK_FAILED)
            click.echo(
                f"✅ flow epsilon={epsilon}: tau_hat={constants.tau_hat:.6g}, eta0={constants.eta0:.6g}, "
                f"xi0={constants.xi0:.6g}, delta_hat={constants.delta_hat:.6g}"
            )
    click.echo("✅ All checks passed")


@main.command('shadow-map')
@click.option('--config', 'config_path', default=None, type=click.Path(), help='Experiment config JSON')
@click.option('--seeds', default=None, help='N, a-b or a,b,c')
@click.option('--epsilon', 'epsilons', multiple=True, type=float, help='Target accuracy (repeatable)')
@click.option('--steps', type=int, default=None, help='Pseudo-orbit length')
@click.option('--mode', 'modes', multiple=True, type=click.Choice(MODES), help='Generator mode (repeatable)')
@click.option('--out', default=None, type=click.Path(), help='Output directory')
@click.option('--jobs', type=int, default=None, help='Worker processes')
@click.pass_obj
def shadow_map(settings: Type[Config], config_path: Optional[str], seeds: Optional[str],
               epsilons: Tuple[float, ...], steps: Optional[int], modes: Tuple[str, ...],
               out: Optional[str], jobs: Optional[int]) -> None:
    """Shadow seeded map pseudo-orbits in one and two dimensions."""
    experiment = _load(config_path, settings)
    ok, lines = _conditions_ok(experiment, settings.CONDITION_GRID)
    if not ok:
        for line in lines:
            click.echo(f"  {line}", err=True)
        click.echo("❌ map conditions fail", err=True)
        sys.exit(EXIT_CHECK_FAILED)

    out_dir = _out_dir(out, experiment)
    started = time.perf_counter()
    try:
        tasks = map_tasks(experiment, out_dir, epsilons or None, modes or None,
                          parse_seeds(seeds, settings.MASTER_SEED), steps)
    except LorenzShadowError as e:
        click.echo(f"❌ {e}", err=True)
        sys.exit(EXIT_CHECK_FAILED)
    with LogOperation(logger, f"map sweep of {len(tasks)} tasks"):
        records = execute(tasks, run_map_task, jobs or settings.JOBS)
    index = write_records(out_dir / 'map', records)
    click.echo(f"📁 records written to {index} ({time.perf_counter() - started:.1f}s)")
    sys.exit(_summarize(records, 'map'))


@main.command('shadow-flow')
@click.option('--config', 'config_path', default=None, type=click.Path(), help='Experiment config JSON')
@click.option('--seeds', default=None, help='N, a-b or a,b,c')
@click.option('--epsilon', 'epsilons', multiple=True, type=float, help='Target accuracy (repeatable)')
@click.option('--steps', type=int, default=None, help='Chain length before splitting')
@click.option('--mode', 'modes', multiple=True, type=click.Choice(FLOW_MODES), help='Generator mode (repeatable)')
@click.option('--out', default=None, type=click.Path(), help='Output directory')
@click.option('--jobs', type=int, default=None, help='Worker processes')
@click.pass_obj
def shadow_flow(settings: Type[Config], config_path: Optional[str], seeds: Optional[str],
                epsilons: Tuple[float, ...], steps: Optional[int], modes: Tuple[str, ...],
                out: Optional[str], jobs: Optional[int]) -> None:
    """Shadow seeded (delta, tau)-chains of the shifted flow."""
    experiment = _load(config_path, settings)
    ok, lines = _conditions_ok(experiment, settings.CONDITION_GRID)
    if not ok:
        for line in lines:
            click.echo(f"  {line}", err=True)
        click.echo("❌ map conditions fail", err=True)
        sys.exit(EXIT_CHECK_FAILED)

    out_dir = _out_dir(out, experiment)
    started = time.perf_counter()
    try:
        with LogOperation(logger, "flow constants"):
            tasks = flow_tasks(experiment, out_dir, epsilons or None, modes or None,
                               parse_seeds(seeds, settings.MASTER_SEED), steps, settings.SAMPLES_PER_STEP)
    except LorenzShadowError as e:
        click.echo(f"❌ {e}", err=True)
        sys.exit(EXIT_CHECK_FAILED)
    with LogOperation(logger, f"flow sweep of {len(tasks)} tasks"):
        records = execute(tasks, run_flow_task, jobs or settings.JOBS)
    index = write_records(out_dir / 'flow', records)
    click.echo(f"📁 records written to {index} ({time.perf_counter() - started:.1f}s)")
    sys.exit(_summarize(records, 'flow'))


@main.command()
@click.option('--config', 'config_path', default=None, type=click.Path(), help='Experiment config JSON')
@click.option('--seeds', default=None, help='N, a-b or a,b,c (one probe per seed)')
@click.option('--delta', type=float, default=None, help='Pseudo-orbit tolerance of the probe')
@click.option('--steps', type=int, default=None, help='Probe orbit length')
@click.option('--out', default=None, type=click.Path(), help='Output directory')
@click.pass_obj
def probe(settings: Type[Config], config_path: Optional[str], seeds: Optional[str],
          delta: Optional[float], steps: Optional[int], out: Optional[str]) -> None:
    """Search for an unshadowable pseudo-orbit of the unshifted map."""
    experiment = _load(config_path, settings)
    out_dir = _out_dir(out, experiment) / 'probe'
    chosen = parse_seeds(seeds, settings.MASTER_SEED) or [experiment.probe.seed]
    grid_step = 2.0 * PROBE_RADIUS / (settings.PROBE_GRID - 1)
    for seed in chosen:
        try:
            payload = run_probe(experiment.map_spec, experiment, out_dir, seed=seed, delta=delta,
                                n_steps=steps, grid_step=grid_step)
        except LorenzShadowError as e:
            click.echo(f"❌ probe seed={seed}: {e}", err=True)
            sys.exit(EXIT_CHECK_FAILED)
        mark = "🔍" if payload['found'] else "ℹ️"
        click.echo(
            f"{mark} seed={seed}: bound={payload['bound']:.6g} "
            f"(epsilon*={payload['epsilon_star']}, delta={payload['delta']}) -> {payload['orbit_file']}"
        )
        if payload['notice']:
            click.echo(f"    {payload['notice']}")


@main.command()
@click.option('--config', 'config_path', default=None, type=click.Path(), help='Experiment config JSON')
@click.option('--x', 'x0', type=float, required=True, help='Start x on Sigma')
@click.option('--y', 'y0', type=float, default=0.0, help='Start y on Sigma')
@click.option('--mu', type=float, default=0.0, help='Parameter shift')
@click.option('--duration', type=float, default=5.0, help='Length of the sampled trajectory')
@click.option('--samples', type=int, default=500, help='Number of sample times')
@click.option('--out', default=None, type=click.Path(), help='Output directory')
@click.pass_obj
def trajectory(settings: Type[Config], config_path: Optional[str], x0: float, y0: float, mu: float,
               duration: float, samples: int, out: Optional[str]) -> None:
    """Sample a flow trajectory from a point of Sigma to CSV."""
    experiment = _load(config_path, settings)
    fs = experiment.flow_spec if experiment.flow_spec is not None else FlowSpec(map=experiment.map_spec)
    times = [duration * k / max(1, samples - 1) for k in range(samples)]
    try:
        positions, modes = sample_trajectory(fs, mu, FlowState.on_section(PlanarPoint(x0, y0)), times)
    except LorenzShadowError as e:
        click.echo(f"❌ {e}", err=True)
        sys.exit(EXIT_CHECK_FAILED)
    path = export_trajectory(_out_dir(out, experiment) / f"trajectory_x-{x0!r}_mu-{mu!r}.csv", times, positions, modes)
    click.echo(f"📁 {len(times)} samples written to {path}")


@main.command()
def version() -> None:
    """Show version information."""
    from . import __version__
    click.echo(f"lorenz-shadow version {__version__}")


if __name__ == '__main__':
    main()
