"""Scenario configuration loaded from one YAML file.

One human-readable tree drives every command.  The required ``run``
block sets duration, dt, and seed; the optional ``device``,
``thermal``, ``tlf``, and ``recipe`` blocks override the reference
defaults field by field; top-level scalars (``helium``, ``t_mxc``,
``v_sd``, ``p_set``) select the scenario variant.  Validation is
strict: unknown keys are rejected (with a spelling suggestion when one
is close), wrong types are rejected, and every error names the full
dotted path of the offending key.  ``resolved_tree`` materializes the
fully defaulted configuration for the output manifest, so a run can be
re-derived from its artifacts alone.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, fields

import yaml

from .device import DeviceParams
from .errors import ConfigError
from .scenarios import (
    DEFAULT_BATH_TEMPERATURE,
    DEFAULT_SET_POWER,
    REFERENCE_BIAS,
    reference_device,
)
from .synth import NoiseRecipe
from .thermal import ThermalParams
from .tlf import FluctuatorParams

#: recipe-block keys (NoiseRecipe fields minus the seed, which comes
#: from run.seed, and the fluctuator, which comes from the tlf block).
_RECIPE_KEYS = tuple(
    f.name
    for f in fields(NoiseRecipe)
    if f.name not in ("seed", "fluctuator")
)
_DEVICE_KEYS = tuple(f.name for f in fields(DeviceParams))
_THERMAL_KEYS = tuple(f.name for f in fields(ThermalParams))
_TLF_KEYS = tuple(f.name for f in fields(FluctuatorParams))
_RUN_KEYS = ("duration", "dt", "seed", "output_dir")
_TOP_KEYS = (
    "run",
    "device",
    "thermal",
    "tlf",
    "recipe",
    "helium",
    "t_mxc",
    "v_sd",
    "p_set",
)


@dataclass(frozen=True)
class RunConfig:
    """Trace extent and reproducibility envelope of one run."""

    duration: float
    dt: float
    seed: int
    output_dir: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved configuration for one command invocation."""

    run: RunConfig
    device: DeviceParams
    thermal: ThermalParams
    tlf: FluctuatorParams | None
    recipe: NoiseRecipe
    helium: bool = False
    t_mxc: float = DEFAULT_BATH_TEMPERATURE
    v_sd: float = REFERENCE_BIAS
    p_set: float = DEFAULT_SET_POWER


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check_keys(node: dict, allowed: tuple, path: str) -> None:
    for key in node:
        if not isinstance(key, str):
            raise ConfigError(
                f"keys must be strings, got {key!r}", path or "<root>"
            )
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed, n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(
                f"unknown key{suffix}; allowed: {', '.join(allowed)}",
                _join(path, key),
            )


def _mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(
            f"expected a mapping, got {type(node).__name__}", path
        )
    return node


def _float(node: dict, key: str, path: str, default=None, required=False):
    if key not in node:
        if required:
            raise ConfigError("missing required key", _join(path, key))
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(
            f"expected a number, got {value!r}", _join(path, key)
        )
    return float(value)


def _int(node: dict, key: str, path: str, default=None, required=False):
    if key not in node:
        if required:
            raise ConfigError("missing required key", _join(path, key))
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(
            f"expected an integer, got {value!r}", _join(path, key)
        )
    return value


def _str(node: dict, key: str, path: str, default=None):
    if key not in node:
        return default
    value = node[key]
    # Manifests materialize unset optional strings as explicit nulls.
    if value is None:
        return default
    if not isinstance(value, str):
        raise ConfigError(
            f"expected a string, got {value!r}", _join(path, key)
        )
    return value


def _bool(node: dict, key: str, path: str, default=False):
    if key not in node:
        return default
    value = node[key]
    if not isinstance(value, bool):
        raise ConfigError(
            f"expected true/false, got {value!r}", _join(path, key)
        )
    return value


def _build_block(node: dict, keys: tuple, path: str, defaults, cls):
    """Construct a params dataclass from a block, defaulting per field."""
    _check_keys(node, keys, path)
    kwargs = {}
    for key in keys:
        base = getattr(defaults, key) if defaults is not None else None
        kwargs[key] = _float(node, key, path, default=base)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc


def parse_config(
    tree,
    seed: int | None = None,
    output_dir: str | None = None,
) -> ScenarioConfig:
    """Validate a parsed YAML tree into a :class:`ScenarioConfig`.

    ``seed`` and ``output_dir`` override the run block (command-line
    flags win over the file).  Raises :class:`ConfigError` with the
    dotted key path on any problem.
    """
    tree = _mapping(tree, "<root>")
    _check_keys(tree, _TOP_KEYS, "")

    run_node = tree.get("run")
    if run_node is None:
        raise ConfigError("missing required key", "run")
    run_node = _mapping(run_node, "run")
    _check_keys(run_node, _RUN_KEYS, "run")
    run = RunConfig(
        duration=_float(run_node, "duration", "run", required=True),
        dt=_float(run_node, "dt", "run", required=True),
        seed=_int(run_node, "seed", "run", required=True)
        if seed is None
        else seed,
        output_dir=_str(run_node, "output_dir", "run")
        if output_dir is None
        else output_dir,
    )
    if run.duration <= 0:
        raise ConfigError("duration must be positive", "run.duration")
    if run.dt <= 0:
        raise ConfigError("dt must be positive", "run.dt")
    if run.seed < 0:
        raise ConfigError("seed must be non-negative", "run.seed")

    device = _build_block(
        _mapping(tree.get("device"), "device"),
        _DEVICE_KEYS,
        "device",
        reference_device(),
        DeviceParams,
    )
    thermal = _build_block(
        _mapping(tree.get("thermal"), "thermal"),
        _THERMAL_KEYS,
        "thermal",
        ThermalParams(),
        ThermalParams,
    )

    fluctuator = None
    if tree.get("tlf") is not None:
        tlf_node = _mapping(tree["tlf"], "tlf")
        _check_keys(tlf_node, _TLF_KEYS, "tlf")
        kwargs = {
            key: _float(tlf_node, key, "tlf")
            for key in _TLF_KEYS
            if key in tlf_node
        }
        if "asymmetry" not in kwargs or "barrier" not in kwargs:
            missing = "asymmetry" if "asymmetry" not in kwargs else "barrier"
            raise ConfigError("missing required key", _join("tlf", missing))
        try:
            fluctuator = FluctuatorParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc), "tlf") from exc

    helium = _bool(tree, "helium", "")
    t_mxc = _float(tree, "t_mxc", "", default=DEFAULT_BATH_TEMPERATURE)
    v_sd = _float(tree, "v_sd", "", default=REFERENCE_BIAS)
    p_set = _float(tree, "p_set", "", default=DEFAULT_SET_POWER)
    if t_mxc <= 0:
        raise ConfigError("t_mxc must be positive", "t_mxc")
    if p_set < 0:
        raise ConfigError("p_set must be non-negative", "p_set")

    recipe_node = _mapping(tree.get("recipe"), "recipe")
    _check_keys(recipe_node, _RECIPE_KEYS, "recipe")
    kwargs = {}
    for key in _RECIPE_KEYS:
        if key == "jump_distribution":
            value = _str(recipe_node, key, "recipe")
        elif key in ("pink_modes_per_decade", "relaxation_modes"):
            value = _int(recipe_node, key, "recipe")
        else:
            value = _float(recipe_node, key, "recipe")
        if value is not None:
            kwargs[key] = value
    if fluctuator is not None and "fluctuator_temperature" not in kwargs:
        kwargs["fluctuator_temperature"] = t_mxc
    try:
        recipe = NoiseRecipe(seed=run.seed, fluctuator=fluctuator, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "recipe") from exc

    return ScenarioConfig(
        run=run,
        device=device,
        thermal=thermal,
        tlf=fluctuator,
        recipe=recipe,
        helium=helium,
        t_mxc=t_mxc,
        v_sd=v_sd,
        p_set=p_set,
    )


def load_config(
    path,
    seed: int | None = None,
    output_dir: str | None = None,
) -> ScenarioConfig:
    """Read and validate a YAML scenario file."""
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return parse_config(tree, seed=seed, output_dir=output_dir)


def default_config(
    seed: int = 0,
    duration: float = 43200.0,
    dt: float = 0.1,
) -> ScenarioConfig:
    """The all-defaults configuration used when no file is given."""
    return parse_config({"run": {"duration": duration, "dt": dt, "seed": seed}})


def resolved_tree(config: ScenarioConfig) -> dict:
    """Materialize every field, defaults included, for the manifest."""
    tree = {
        "run": {
            "duration": config.run.duration,
            "dt": config.run.dt,
            "seed": config.run.seed,
            "output_dir": config.run.output_dir,
        },
        "device": {
            key: getattr(config.device, key) for key in _DEVICE_KEYS
        },
        "thermal": {
            key: getattr(config.thermal, key) for key in _THERMAL_KEYS
        },
        "tlf": None
        if config.tlf is None
        else {key: getattr(config.tlf, key) for key in _TLF_KEYS},
        "recipe": {
            key: getattr(config.recipe, key) for key in _RECIPE_KEYS
        },
        "helium": config.helium,
        "t_mxc": config.t_mxc,
        "v_sd": config.v_sd,
        "p_set": config.p_set,
    }
    return tree
