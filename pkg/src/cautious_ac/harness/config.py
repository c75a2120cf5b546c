"""Run configuration: JSON schema, validation and conversion to library objects.

A config file is a single JSON object::

    {
      "env":  {"kind": "random", "params": {"num_states": 8, "num_actions": 4}, "seed": 3},
      "algo": {"name": "cac", "kappa": 0.2, "tau": 0.1, "iterations": 200,
               "zeta": {"mode": "adaptive"}},
      "repeats": 5,
      "eval_every": 1,
      "emit": "csv",
      "output_path": "runs/cac.csv"
    }

``compare`` additionally reads ``presets`` (a list of ``{"label", "algo"}``
overrides applied on top of ``algo``) and ``sweep`` reads ``sweep``, a grid of
``kappa``, ``tau``, ``zeta`` and ``noise_sigma`` values.  Unknown keys are
rejected.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from ..algorithms import Adaptive, AlgoConfig, ExactLowerBound, Fixed
from ..cautious import ZetaMovingState
from ..envs import EnvSpec
from ..regularizers import RegParams

__all__ = ["ConfigError", "RunConfig", "CONFIG_SCHEMA", "load_config", "parse_config", "algo_from_dict", "zeta_label"]

ALGORITHMS = ("cac", "cvi", "spi", "cpi")

_NUMBER = {"type": "number"}
_ZETA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "mode": {"const": "adaptive"},
                "nu_a": {"type": "number", "minimum": 0, "maximum": 1},
                "nu_maxdiff": {"type": "number", "minimum": 0, "maximum": 1},
                "negative_constant": {"type": ["number", "null"], "maximum": 0},
                "guard": {"type": "boolean"},
            },
            "required": ["mode"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"mode": {"const": "fixed"}, "value": {"type": "number", "minimum": 0, "maximum": 1}},
            "required": ["mode", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"mode": {"const": "exact"}, "horizon_const": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["mode"],
            "additionalProperties": False,
        },
    ]
}

_ALGO_PROPS = {
    "name": {"enum": list(ALGORITHMS)},
    "kappa": {"type": "number", "minimum": 0},
    "tau": {"type": "number", "minimum": 0},
    "iterations": {"type": "integer", "minimum": 1},
    "zeta": _ZETA,
    "eval_tol": {"type": "number", "exclusiveMinimum": 0},
    "noise_sigma": {"type": "number", "minimum": 0},
    "seed": {"type": "integer"},
    "epsilon": {"type": "number", "minimum": 0},
    "advantage": {"enum": ["soft", "task"]},
    "evaluate_pre_interpolation": {"type": "boolean"},
    "state_weighting": {"enum": ["exact", "sampled"]},
    "window": {"type": "integer", "minimum": 1},
    "samples_per_iter": {"type": "integer", "minimum": 1},
    "stop_tol": {"type": ["number", "null"], "minimum": 0},
}

_ALGO = {"type": "object", "properties": _ALGO_PROPS, "additionalProperties": False}

_ENV = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["random", "chain", "gridworld", "pendulum"]},
        "params": {"type": "object"},
        "seed": {"type": "integer"},
        "discount": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "env": _ENV,
        "algo": _ALGO,
        "repeats": {"type": "integer", "minimum": 1},
        "eval_every": {"type": "integer", "minimum": 1},
        "emit": {"enum": ["csv", "json"]},
        "output_path": {"type": "string"},
        "presets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"label": {"type": "string", "minLength": 1}, "algo": _ALGO},
                "required": ["label", "algo"],
                "additionalProperties": False,
            },
        },
        "sweep": {
            "type": "object",
            "properties": {
                "kappa": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "tau": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "zeta": {
                    "type": "array",
                    "items": {"oneOf": [{"enum": ["adaptive", "exact"]}, {"type": "number", "minimum": 0, "maximum": 1}]},
                    "minItems": 1,
                },
                "noise_sigma": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["env"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid or unreadable run configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    env: EnvSpec
    algo: dict
    repeats: int = 1
    eval_every: int = 1
    output_path: Optional[str] = None
    emit: str = "csv"
    presets: tuple = ()
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, compare=False)


def zeta_from_dict(entry):
    mode = entry.get("mode", "adaptive")
    if mode == "fixed":
        return Fixed(float(entry["value"]))
    if mode == "exact":
        return ExactLowerBound(float(entry.get("horizon_const", 1.0)))
    state = ZetaMovingState(
        nu_a=entry.get("nu_a", 0.01),
        nu_maxdiff=entry.get("nu_maxdiff", 0.001),
        negative_constant=entry.get("negative_constant"),
        guard=entry.get("guard", True),
    )
    return Adaptive(state)


def zeta_label(mode):
    if isinstance(mode, Fixed):
        return f"fixed({mode.value!r})"
    if isinstance(mode, ExactLowerBound):
        return "exact"
    return "adaptive"


def algo_from_dict(algo, seed=None):
    """Split an ``algo`` mapping into ``(name, AlgoConfig)``.

    ``seed`` overrides the configured base seed.  ``cvi`` and ``spi`` pin
    ``zeta`` to 1 and ``spi`` pins ``tau`` to 0; ``cpi`` defaults to the
    exact lower-bound coefficient.
    """
    name = algo.get("name", "cac")
    kappa = algo.get("kappa", 0.2)
    tau = algo.get("tau", 0.1)
    if name == "spi":
        tau = 0.0
    zeta_cfg = algo.get("zeta", {"mode": "exact"} if name == "cpi" else {"mode": "adaptive"})
    if name in ("cvi", "spi"):
        zeta_cfg = {"mode": "fixed", "value": 1.0}
    kwargs = {k: algo[k] for k in _PASSTHROUGH if k in algo}
    if seed is not None:
        kwargs["seed"] = seed
    try:
        reg = RegParams(kappa, tau) if name != "cpi" else RegParams()
        cfg = AlgoConfig(reg=reg, zeta_mode=zeta_from_dict(zeta_cfg), **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if name == "cvi" and tau <= 0:
        raise ConfigError("cvi needs tau > 0")
    if name == "spi" and kappa <= 0:
        raise ConfigError("spi needs kappa > 0")
    return name, cfg


_PASSTHROUGH = (
    "iterations",
    "eval_tol",
    "noise_sigma",
    "seed",
    "epsilon",
    "advantage",
    "evaluate_pre_interpolation",
    "state_weighting",
    "window",
    "samples_per_iter",
    "stop_tol",
)


def parse_config(data):
    """Validate a decoded JSON object and build a :class:`RunConfig`."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    env = data["env"]
    spec = EnvSpec(env["kind"], dict(env.get("params", {})), env.get("seed", 0), env.get("discount", 0.99))
    cfg = RunConfig(
        env=spec,
        algo=dict(data.get("algo", {})),
        repeats=data.get("repeats", 1),
        eval_every=data.get("eval_every", 1),
        output_path=data.get("output_path"),
        emit=data.get("emit", "csv"),
        presets=tuple((p["label"], p["algo"]) for p in data.get("presets", ())),
        sweep=dict(data.get("sweep", {})),
        raw=data,
    )
    # surface bad algorithm settings before any run starts
    algo_from_dict(cfg.algo)
    for _, over in cfg.presets:
        algo_from_dict({**cfg.algo, **over})
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data)
