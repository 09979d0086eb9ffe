"""
Experiment configuration.

An experiment file is a JSON object with optional blocks:

    defaults    system and estimator parameters (overrides fasris/defaults.json)
    sweep       {"kind": "ports" | "size" | "elements" | "point", "values": [...]}
    estimators  subset of ["CLT", "CLT-BC", "CLT-IID", "MC"]
    simulation  {"trials", "seed", "chunk_size", "workers"}
    output      {"path", "format"}

Resolution order: packaged defaults, then the file, then CLI overrides.
Every field is validated; failures raise ConfigError naming the dotted field.
"""
import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from fasris.canonical import config_run_id
from fasris.corr import MU_MODES, PortGeometry
from fasris.moments import LinkBudget
from fasris.outage import (
    BLOCK_COUNT_MODES,
    ESTIMATOR_ORDER,
    THRESHOLD_MODES,
    TRUNCATION_MODES,
    Estimator,
    EstimatorSettings,
    RadioParams,
    TruncationPolicy,
)

DEFAULTS_PATH = Path(__file__).parent / "defaults.json"

SWEEP_KINDS = ("ports", "size", "elements", "point")
OUTPUT_FORMATS = ("csv", "jsonl")

# Blocks merged key by key; the others are replaced wholesale.
MERGED_BLOCKS = ("defaults", "simulation", "output")


class ConfigError(ValueError):
    """Invalid experiment configuration. `field` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class SystemConfig:
    """One operating point: port geometry, link budget and radio parameters."""
    geometry: PortGeometry
    budget: LinkBudget
    radio: RadioParams

    def at(self, kind: str, value) -> "SystemConfig":
        """The same system with the swept parameter set to value."""
        if kind == "ports":
            return replace(self, geometry=replace(self.geometry, num_ports=int(value)))
        if kind == "size":
            return replace(self, geometry=replace(self.geometry, normalized_size=float(value)))
        if kind == "elements":
            return replace(self, budget=replace(self.budget, num_elements=int(value)))
        if kind == "point":
            return self
        raise ValueError(f"Unknown sweep kind: {kind!r}")


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    values: Tuple[Any, ...] = ()

    def points(self) -> List[Any]:
        """Swept values in order; a single None for a point run."""
        return list(self.values) if self.kind != "point" else [None]


@dataclass(frozen=True)
class SimulationSettings:
    trials: int
    seed: int
    chunk_size: int
    workers: int = 1


@dataclass(frozen=True)
class OutputSettings:
    path: Optional[str]
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved and validated experiment."""
    system: SystemConfig
    sweep: SweepSpec
    estimators: Tuple[Estimator, ...]
    settings: EstimatorSettings
    simulation: SimulationSettings
    output: OutputSettings
    mvn_dimension_cap: int
    resolved: Dict[str, Any]

    @property
    def run_id(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved configuration, output block excluded."""
        return config_run_id({k: v for k, v in self.resolved.items() if k != "output"})


# ================================================================
# LOADING AND MERGING
# ================================================================

def load_packaged_defaults() -> Dict[str, Any]:
    """Fresh copy of fasris/defaults.json."""
    with open(DEFAULTS_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def merge_config(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Overlay overrides on base.

    Raises:
        ConfigError: On unknown blocks or unknown keys inside merged blocks
    """
    if not isinstance(overrides, dict):
        raise ConfigError("<root>", "experiment must be a JSON object")
    merged = copy.deepcopy(base)
    for block, value in overrides.items():
        if block not in base:
            raise ConfigError(block, "unknown configuration block")
        if block in MERGED_BLOCKS:
            if not isinstance(value, dict):
                raise ConfigError(block, "must be an object")
            for key, item in value.items():
                if key not in base[block]:
                    raise ConfigError(f"{block}.{key}", "unknown key")
                merged[block][key] = copy.deepcopy(item)
        else:
            merged[block] = copy.deepcopy(value)
    return merged


def load_experiment(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Resolve packaged defaults, an optional experiment file and CLI overrides.

    Args:
        path: Experiment JSON file (None = packaged defaults only)
        overrides: Block-structured overrides, e.g. {"simulation": {"seed": 7}}

    Raises:
        ConfigError: If the file cannot be read or any field is invalid
    """
    resolved = load_packaged_defaults()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                file_values = json.load(f)
        except FileNotFoundError:
            raise ConfigError("<file>", f"experiment file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"{path} is not valid JSON: {e}")
        resolved = merge_config(resolved, file_values)
    if overrides:
        resolved = merge_config(resolved, overrides)
    return build_experiment(resolved)


# ================================================================
# FIELD VALIDATION
# ================================================================

def _number(block: Dict[str, Any], key: str, path: str, positive: bool = True) -> float:
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{path}.{key}", f"must be > 0, got {value!r}")
    return float(value)


def _integer(block: Dict[str, Any], key: str, path: str, minimum: int = 1) -> int:
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _choice(block: Dict[str, Any], key: str, path: str, choices: Tuple[str, ...]) -> str:
    value = block[key]
    if value not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {list(choices)}, got {value!r}")
    return value


def _gain(block: Dict[str, Any], key: str, path: str) -> float:
    """Average power gain, given directly or as {distance, path_loss_exponent}."""
    value = block[key]
    if isinstance(value, dict):
        expected = {"distance", "path_loss_exponent"}
        if set(value) != expected:
            raise ConfigError(f"{path}.{key}", f"needs exactly the keys {sorted(expected)}")
        distance = _number(value, "distance", f"{path}.{key}")
        exponent = _number(value, "path_loss_exponent", f"{path}.{key}")
        return distance ** (-exponent)
    return _number(block, key, path)


def _system(defaults: Dict[str, Any]) -> SystemConfig:
    path = "defaults"
    geometry = PortGeometry(
        num_ports=_integer(defaults, "num_ports", path),
        normalized_size=_number(defaults, "normalized_size", path),
    )
    budget = LinkBudget(
        num_elements=_integer(defaults, "num_elements", path),
        gain_bs_ris=_gain(defaults, "gain_bs_ris", path),
        gain_ris_user=_gain(defaults, "gain_ris_user", path),
    )
    radio = RadioParams(
        transmit_power=_number(defaults, "transmit_power", path),
        noise_power=_number(defaults, "noise_power", path),
        target_rate=_number(defaults, "target_rate", path),
        threshold_mode=_choice(defaults, "threshold_mode", path, THRESHOLD_MODES),
        threshold_scale=_number(defaults, "threshold_scale", path),
    )
    return SystemConfig(geometry, budget, radio)


def _settings(defaults: Dict[str, Any], seed: int, num_ports: int) -> EstimatorSettings:
    path = "defaults"
    mode = _choice(defaults, "truncation", path, TRUNCATION_MODES)
    half_width = None
    if mode == "fixed":
        if defaults["truncation_half_width"] is None:
            raise ConfigError(f"{path}.truncation_half_width", "required for fixed truncation")
        half_width = _number(defaults, "truncation_half_width", path)
    truncation = TruncationPolicy(
        mode=mode,
        num_std=_number(defaults, "truncation_num_std", path),
        half_width=half_width,
    )

    mu = _number(defaults, "mu", path)
    if not mu < 1.0:
        raise ConfigError(f"{path}.mu", f"must lie strictly inside (0, 1), got {mu}")
    mass_fraction = _number(defaults, "mass_fraction", path)
    if not mass_fraction <= 1.0:
        raise ConfigError(f"{path}.mass_fraction", f"must lie in (0, 1], got {mass_fraction}")

    block_sizes = defaults["block_sizes"]
    if block_sizes is not None:
        if not isinstance(block_sizes, list) or not block_sizes:
            raise ConfigError(f"{path}.block_sizes", "must be null or a non-empty list")
        for idx, size in enumerate(block_sizes):
            if isinstance(size, bool) or not isinstance(size, int) or size < 1:
                raise ConfigError(f"{path}.block_sizes[{idx}]", f"must be a positive integer, got {size!r}")
        if sum(block_sizes) != num_ports:
            raise ConfigError(
                f"{path}.block_sizes", f"sizes sum to {sum(block_sizes)}, expected num_ports={num_ports}"
            )
        block_sizes = tuple(block_sizes)

    replicates = _integer(defaults, "mvn_replicates", path, minimum=2)
    return EstimatorSettings(
        chebyshev_nodes=_integer(defaults, "chebyshev_nodes", path),
        truncation=truncation,
        mvn_budget=_integer(defaults, "mvn_budget", path),
        mvn_replicates=replicates,
        seed=seed,
        mu=mu,
        mu_mode=_choice(defaults, "mu_mode", path, MU_MODES),
        eigen_threshold=_number(defaults, "eigen_threshold", path),
        block_count_mode=_choice(defaults, "block_count_mode", path, BLOCK_COUNT_MODES),
        mass_fraction=mass_fraction,
        block_sizes=block_sizes,
    )


def _sweep(sweep: Any) -> SweepSpec:
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "must be an object")
    unknown = set(sweep) - {"kind", "values"}
    if unknown:
        raise ConfigError(f"sweep.{sorted(unknown)[0]}", "unknown key")
    if "kind" not in sweep:
        raise ConfigError("sweep.kind", "missing")
    kind = _choice(sweep, "kind", "sweep", SWEEP_KINDS)
    values = sweep.get("values", [])
    if not isinstance(values, list):
        raise ConfigError("sweep.values", "must be a list")
    if kind == "point":
        if values:
            raise ConfigError("sweep.values", "must be empty for a point run")
        return SweepSpec(kind)
    if not values:
        raise ConfigError("sweep.values", "must be non-empty")

    checked = []
    for idx, value in enumerate(values):
        holder = {f"values[{idx}]": value}
        if kind in ("ports", "elements"):
            checked.append(_integer(holder, f"values[{idx}]", "sweep"))
        else:
            checked.append(_number(holder, f"values[{idx}]", "sweep"))
    if any(b <= a for a, b in zip(checked, checked[1:])):
        raise ConfigError("sweep.values", "must be strictly increasing")
    return SweepSpec(kind, tuple(checked))


def _estimators(names: Any) -> Tuple[Estimator, ...]:
    if not isinstance(names, list) or not names:
        raise ConfigError("estimators", "must be a non-empty list")
    chosen = set()
    for idx, name in enumerate(names):
        try:
            chosen.add(Estimator(name))
        except ValueError:
            valid = [e.value for e in Estimator]
            raise ConfigError(f"estimators[{idx}]", f"must be one of {valid}, got {name!r}")
    if len(chosen) != len(names):
        raise ConfigError("estimators", "duplicate estimator")
    return tuple(sorted(chosen, key=ESTIMATOR_ORDER.__getitem__))


def build_experiment(resolved: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a fully merged configuration dict.

    Raises:
        ConfigError: Naming the first invalid field
    """
    defaults = resolved["defaults"]
    simulation_block = resolved["simulation"]
    output_block = resolved["output"]

    simulation = SimulationSettings(
        trials=_integer(simulation_block, "trials", "simulation"),
        seed=_integer(simulation_block, "seed", "simulation", minimum=0),
        chunk_size=_integer(simulation_block, "chunk_size", "simulation"),
        workers=_integer(simulation_block, "workers", "simulation"),
    )
    out_path = output_block["path"]
    if out_path is not None and not isinstance(out_path, str):
        raise ConfigError("output.path", f"must be a string or null, got {out_path!r}")
    output = OutputSettings(path=out_path, format=_choice(output_block, "format", "output", OUTPUT_FORMATS))

    try:
        system = _system(defaults)
        settings = _settings(defaults, simulation.seed, system.geometry.num_ports)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("defaults", str(e)) from e

    sweep = _sweep(resolved["sweep"])
    if settings.block_sizes is not None and sweep.kind == "ports":
        raise ConfigError("defaults.block_sizes", "explicit block sizes cannot be combined with a ports sweep")

    return ExperimentConfig(
        system=system,
        sweep=sweep,
        estimators=_estimators(resolved["estimators"]),
        settings=settings,
        simulation=simulation,
        output=output,
        mvn_dimension_cap=_integer(defaults, "mvn_dimension_cap", "defaults"),
        resolved=resolved,
    )
