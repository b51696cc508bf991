"""CSV and JSON writers. Identical inputs give byte-identical files."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np

from .flow_shadow import CrossingSequence, FlowShadowReport, InterpolatedChain
from .map_core import LorenzMapSpec, eval_map_mu_batch
from .shadow_1d import PseudoOrbit1D, ShadowResult1D
from .shadow_2d import ShadowResult2D
from .spec_loader import _plain

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    if value is None:
        return ''
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.debug(f"wrote {count} rows to {path}")
    return path


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, sort_keys=True, indent=2, default=_plain, ensure_ascii=False)
        f.write('\n')
    return path


def export_orbit_1d(path: PathLike, orbit: PseudoOrbit1D, result: ShadowResult1D) -> Path:
    """Columns n, x_n, alpha_n_z, abs_error."""
    n = min(len(orbit.points), len(result.orbit))
    rows = (
        (k, float(orbit.points[k]), float(result.orbit[k]), abs(float(result.orbit[k]) - float(orbit.points[k])))
        for k in range(n)
    )
    return write_csv(path, ['n', 'x_n', 'alpha_n_z', 'abs_error'], rows)


def export_orbit_2d(path: PathLike, points: np.ndarray, result: ShadowResult2D) -> Path:
    """Columns n, x_n, y_n, Lx_n, Ly_n, err_n with (Lx_n, Ly_n) = L^n(z)."""
    n = min(len(points), len(result.orbit))
    rows = []
    for k in range(n):
        px, py = float(points[k, 0]), float(points[k, 1])
        qx, qy = float(result.orbit[k, 0]), float(result.orbit[k, 1])
        rows.append((k, px, py, qx, qy, float(np.hypot(qx - px, qy - py))))
    return write_csv(path, ['n', 'x_n', 'y_n', 'Lx_n', 'Ly_n', 'err_n'], rows)


def export_probe_orbit(path: PathLike, spec: LorenzMapSpec, points: np.ndarray) -> Path:
    """
    Probe orbits have no shadow, so (Lx_n, Ly_n) is the image L(p_(n-1)) and
    err_n the step defect; row 0 repeats p_0 with zero defect.
    """
    images = np.empty_like(points)
    images[0] = points[0]
    if len(points) > 1:
        previous = points[:-1]
        safe = np.where(previous[:, 0] == 0.0, 1.0, previous[:, 0])
        mapped = np.column_stack(eval_map_mu_batch(spec, 0.0, safe, previous[:, 1]))
        images[1:] = np.where((previous[:, 0] == 0.0)[:, None], points[1:], mapped)
    rows = (
        (k, float(points[k, 0]), float(points[k, 1]), float(images[k, 0]), float(images[k, 1]),
         float(np.hypot(*(images[k] - points[k]))))
        for k in range(len(points))
    )
    return write_csv(path, ['n', 'x_n', 'y_n', 'Lx_n', 'Ly_n', 'err_n'], rows)


def export_trajectory(path: PathLike, times: Sequence[float], positions: np.ndarray, modes: List[str]) -> Path:
    rows = (
        (float(t), float(p[0]), float(p[1]), float(p[2]), m)
        for t, p, m in zip(times, positions, modes)
    )
    return write_csv(path, ['t', 'x', 'y', 'z', 'mode'], rows)


def export_chain(path: PathLike, chain: InterpolatedChain) -> Path:
    return write_csv(path, ['segment', 't', 'x', 'y', 'z', 'is_connector'], chain.rows())


def export_crossings(path: PathLike, crossings: CrossingSequence) -> Path:
    rows = (
        (i, c.step, c.point.x, c.point.y, 'connector' if c.via_connector else 'segment')
        for i, c in enumerate(crossings.crossings)
    )
    return write_csv(path, ['i', 'n_i', 'y_x', 'y_y', 'provenance'], rows)


def flow_report_payload(report: FlowShadowReport, constants_fingerprint: Optional[str]) -> dict:
    payload = report.to_dict()
    payload['constants_fingerprint'] = constants_fingerprint
    return payload
