"""JSON documents for map specs, flow specs and experiment configs."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from jsonschema import ValidationError, validate

from .errors import ParameterError, SpecValidationError
from .flow_core import FlowSpec
from .map_core import AlphaSpec, BetaSpec, LorenzMapSpec
from .seeding import derive_seed

logger = logging.getLogger(__name__)

NUMBER = {"type": "number"}

MAP_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "alpha": {
            "type": "object",
            "properties": {"c": {"type": "number", "exclusiveMinimum": 0}, "rho": NUMBER},
            "required": ["c", "rho"],
            "additionalProperties": False,
        },
        "beta": {
            "type": "object",
            "properties": {"d": {"type": "number", "minimum": 0}, "e_plus": NUMBER, "e_minus": NUMBER},
            "required": ["d", "e_plus", "e_minus"],
            "additionalProperties": False,
        },
        "mu0": {"type": "number", "minimum": 0},
    },
    "required": ["alpha", "beta", "mu0"],
    "additionalProperties": False,
}

FLOW_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "lambda1": {"type": "number", "exclusiveMinimum": 0},
        "lambda2": {"type": "number", "exclusiveMinimum": 0},
        "lambda3": {"type": "number", "exclusiveMinimum": 0},
        "tube_time": {"type": "number", "exclusiveMinimum": 0},
        "map": MAP_SCHEMA,
        # sweep settings for shadow-flow
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "n_steps": {"type": "integer", "minimum": 1},
        "modes": {"type": "array", "items": {"enum": ["noise", "gamma", "terminal", "stall"]}},
    },
    "required": ["lambda1", "lambda2", "lambda3", "tube_time"],
    "additionalProperties": False,
}

PROBE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "epsilon_star": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "minimum": 0},
        "n_steps": {"type": "integer", "minimum": 1},
        "search_budget": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "map": MAP_SCHEMA,
        "flow": FLOW_SCHEMA,
        "epsilons": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "seeds": {"type": "array", "items": {"type": "integer"}, "uniqueItems": True},
        "master_seed": {"type": "integer"},
        "n_runs": {"type": "integer", "minimum": 1},
        "n_steps": {"type": "integer", "minimum": 1},
        "modes": {
            "type": "array",
            "items": {"enum": ["noise", "gamma-crossing", "gamma-terminal"]},
            "minItems": 1,
        },
        "output_dir": {"type": "string"},
        "probe": PROBE_SCHEMA,
        "beta_bound": {"enum": ["strict", "weak"]},
    },
    "required": ["map"],
    "additionalProperties": False,
}


@dataclass
class ProbeSettings:
    epsilon_star: float = 0.05
    delta: float = 1e-4
    n_steps: int = 40
    search_budget: int = 16
    seed: int = 0


@dataclass
class FlowSweep:
    epsilons: List[float] = field(default_factory=lambda: [0.6])
    n_steps: int = 100
    modes: List[str] = field(default_factory=lambda: ['noise', 'gamma'])


@dataclass
class ExperimentConfig:
    """A parsed and validated experiment document."""
    map_spec: LorenzMapSpec
    flow_spec: Optional[FlowSpec]
    epsilons: List[float]
    seeds: List[int]
    n_steps: int
    modes: List[str]
    output_dir: Path
    probe: ProbeSettings
    flow_sweep: FlowSweep
    beta_bound: str = 'strict'
    source: Optional[Path] = None
    document: Dict[str, Any] = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.document)


def load_json_document(path: Union[str, Path]) -> Any:
    """Read a JSON file, raising SpecValidationError when it cannot be parsed."""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise SpecValidationError(f"document not found: {path}")
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"invalid JSON in {path}: {e}")


def validate_document(doc: Any, schema: Dict[str, Any], label: str = "document") -> None:
    try:
        validate(doc, schema)
    except ValidationError as e:
        where = "/".join(str(part) for part in e.absolute_path) or "<root>"
        raise SpecValidationError(f"{label} invalid at {where}: {e.message}")


def map_spec_from_dict(doc: Dict[str, Any]) -> LorenzMapSpec:
    validate_document(doc, MAP_SCHEMA, "map spec")
    try:
        return LorenzMapSpec(
            alpha=AlphaSpec(c=float(doc['alpha']['c']), rho=float(doc['alpha']['rho'])),
            beta=BetaSpec(
                d=float(doc['beta']['d']),
                e_plus=float(doc['beta']['e_plus']),
                e_minus=float(doc['beta']['e_minus']),
            ),
            mu0=float(doc['mu0']),
        )
    except ParameterError as e:
        raise SpecValidationError(f"map spec rejected: {e}")


def map_spec_to_dict(spec: LorenzMapSpec) -> Dict[str, Any]:
    return spec.to_dict()


def flow_spec_from_dict(doc: Dict[str, Any], map_spec: Optional[LorenzMapSpec] = None) -> FlowSpec:
    """
    Build a FlowSpec from {lambda1, lambda2, lambda3, tube_time, map}.

    An embedded map block wins over map_spec; with neither the reference map is used.
    """
    validate_document(doc, FLOW_SCHEMA, "flow spec")
    if 'map' in doc:
        map_spec = map_spec_from_dict(doc['map'])
    try:
        return FlowSpec(
            map=map_spec if map_spec is not None else LorenzMapSpec(),
            lambda1=float(doc['lambda1']),
            lambda2=float(doc['lambda2']),
            lambda3=float(doc['lambda3']),
            tube_time=float(doc['tube_time']),
        )
    except ParameterError as e:
        raise SpecValidationError(f"flow spec rejected: {e}")


def flow_spec_to_dict(fs: FlowSpec) -> Dict[str, Any]:
    return fs.to_dict()


def _seeds(doc: Dict[str, Any], default_master: int) -> List[int]:
    if 'seeds' in doc:
        return [int(s) for s in doc['seeds']]
    master = int(doc.get('master_seed', default_master))
    return [derive_seed(master, 'run', k) for k in range(int(doc.get('n_runs', 10)))]


def experiment_config_from_dict(
    doc: Dict[str, Any], source: Optional[Path] = None, default_output: Union[str, Path] = 'runs',
    default_master: int = 0,
) -> ExperimentConfig:
    validate_document(doc, EXPERIMENT_SCHEMA, "experiment config")
    map_spec = map_spec_from_dict(doc['map'])
    flow_doc = doc.get('flow')
    flow_spec = flow_spec_from_dict(flow_doc, map_spec) if flow_doc is not None else None

    sweep = FlowSweep()
    if flow_doc is not None:
        sweep = FlowSweep(
            epsilons=[float(e) for e in flow_doc.get('epsilons', sweep.epsilons)],
            n_steps=int(flow_doc.get('n_steps', sweep.n_steps)),
            modes=list(flow_doc.get('modes', sweep.modes)),
        )

    return ExperimentConfig(
        map_spec=map_spec,
        flow_spec=flow_spec,
        epsilons=[float(e) for e in doc.get('epsilons', [0.64, 0.32])],
        seeds=_seeds(doc, default_master),
        n_steps=int(doc.get('n_steps', 1000)),
        modes=list(doc.get('modes', ['noise'])),
        output_dir=Path(doc.get('output_dir', default_output)),
        probe=ProbeSettings(**doc.get('probe', {})),
        flow_sweep=sweep,
        beta_bound=doc.get('beta_bound', 'strict'),
        source=source,
        document=doc,
    )


def load_experiment_config(
    path: Union[str, Path], default_output: Union[str, Path] = 'runs', default_master: int = 0
) -> ExperimentConfig:
    """Parse and validate an experiment document; any problem raises SpecValidationError."""
    path = Path(path)
    doc = load_json_document(path)
    config = experiment_config_from_dict(doc, path, default_output, default_master)
    logger.info(f"loaded experiment config {path.name} ({len(config.seeds)} seeds)")
    return config


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace; floats keep their shortest round-trip repr."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=_plain, ensure_ascii=False)


def fingerprint(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()
