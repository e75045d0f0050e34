"""Configuration files, validation and run manifests.

One JSON document is the single source of truth for a run; CLI flags may
override scalar fields via dotted paths.  Unknown keys are rejected, hard
constraint violations are fatal, parameter-regime conditions only warn.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone

from . import experiment
from .besov import DyadicPartition
from .noise import SeedSpec
from .scheme import SchemeParams
from .wick import InitialCondition


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


DEFAULT_CONFIG = {
    "master_seed": 20240,
    "scheme": {
        "N": 64,
        "M": 4096,
        "T": 1.0,
        "alpha": 0.3,
        "beta": 0.31,
        "gamma": 0.65,
        "a": [0.0, 0.0, 0.0, -1.0],
        "initial": {"kind": "zero"},
        "divisor_oversample": 2,
        "partition": "sharp",
    },
    "experiment": {
        "N_list": [4, 8, 16, 32],
        "M_list": [8, 32, 128, 512],
        "N_ref": 64,
        "M_ref": 4096,
        "samples": 200,
        "p": 2.0,
        "metric": experiment.METRIC_X,
        "kappa": 0.01,
        "kappa1": None,
        "eval_steps": 256,
        "space_steps": 512,
        "metric_oversample": 2,
        "metric_refine": True,
    },
    "wick_stats": {"cutoff": 16, "samples": 10000},
    "workers": None,
}

_INITIAL_KEYS = {
    "zero": {"kind"},
    "modes": {"kind", "modes"},
    "rough": {"kind", "decay_alpha"},
}


def _merge(defaults, user, path, problems):
    """Deep merge with unknown-key rejection; returns a fresh dict."""
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            problems.append(f"unknown key {where!r}")
            continue
        if key == "initial":
            out[key] = value
        elif isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, where, problems)
        else:
            out[key] = value
    return out


def _check_initial(spec, problems):
    if not isinstance(spec, dict) or "kind" not in spec:
        problems.append("scheme.initial must be an object with a 'kind'")
        return
    kind = spec["kind"]
    allowed = _INITIAL_KEYS.get(kind)
    if allowed is None:
        problems.append(f"scheme.initial.kind must be one of {sorted(_INITIAL_KEYS)}")
        return
    for key in spec:
        if key not in allowed:
            problems.append(f"unknown key 'scheme.initial.{key}' for kind {kind!r}")
    if kind == "modes":
        modes = spec.get("modes")
        if not isinstance(modes, list) or any(len(row) != 4 for row in modes):
            problems.append("scheme.initial.modes must be [[m1, m2, re, im], ...]")


@dataclass
class Config:
    raw: dict
    master_seed: int
    scheme_params: SchemeParams
    experiment: experiment.ExperimentConfig
    wick_stats_cutoff: int
    wick_stats_samples: int
    workers: int | None
    warnings: list

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _build_initial(spec, alpha, n_ref, master_seed) -> InitialCondition:
    kind = spec["kind"]
    if kind == "zero":
        return InitialCondition.zero()
    if kind == "modes":
        modes = {(int(m1), int(m2)): complex(re, im) for m1, m2, re, im in spec["modes"]}
        return InitialCondition.from_modes(modes)
    decay = spec.get("decay_alpha")
    if decay is None:
        decay = max(alpha - 0.05, alpha / 2.0)
    return InitialCondition.rough(float(decay), int(n_ref), int(master_seed))


def parse_config_dict(user: dict) -> Config:
    problems = []
    raw = _merge(DEFAULT_CONFIG, user, "", problems)
    _check_initial(raw["scheme"]["initial"], problems)
    if problems:
        raise ConfigError(problems)

    master = int(raw["master_seed"])
    sch, exp = raw["scheme"], raw["experiment"]
    a = tuple(float(c) for c in sch["a"])
    if len(a) != 4:
        raise ConfigError(["scheme.a must have exactly four coefficients"])
    initial = _build_initial(sch["initial"], float(sch["alpha"]), exp["N_ref"], master)
    partition = DyadicPartition(sch["partition"])
    seed = SeedSpec(master, 0, base_steps=int(exp["M_ref"]))
    params = SchemeParams(
        cutoff=int(sch["N"]), steps=int(sch["M"]), horizon=float(sch["T"]),
        alpha=float(sch["alpha"]), beta=float(sch["beta"]), gamma=float(sch["gamma"]),
        a=a, initial=initial, seed=seed,
        divisor_oversample=int(sch["divisor_oversample"]), partition=partition)
    expcfg = experiment.ExperimentConfig(
        template=params,
        N_list=[int(n) for n in exp["N_list"]],
        M_list=[int(m) for m in exp["M_list"]],
        N_ref=int(exp["N_ref"]), M_ref=int(exp["M_ref"]),
        samples=int(exp["samples"]), p=float(exp["p"]), metric=exp["metric"],
        kappa=float(exp["kappa"]),
        kappa1=None if exp["kappa1"] is None else float(exp["kappa1"]),
        eval_steps=int(exp["eval_steps"]),
        space_steps=None if exp["space_steps"] is None else int(exp["space_steps"]),
        metric_oversample=int(exp["metric_oversample"]),
        metric_refine=bool(exp["metric_refine"]),
        workers=raw["workers"])

    errors, warnings = params.validate()
    errors += expcfg.validate()
    if params.steps > 0 and expcfg.M_ref % params.steps != 0:
        errors.append(f"scheme.M = {params.steps} must divide M_ref = {expcfg.M_ref} "
                      "(paths are generated on the reference grid)")
    if errors:
        raise ConfigError(errors)
    return Config(
        raw=raw, master_seed=master, scheme_params=params, experiment=expcfg,
        wick_stats_cutoff=int(raw["wick_stats"]["cutoff"]),
        wick_stats_samples=int(raw["wick_stats"]["samples"]),
        workers=raw["workers"], warnings=warnings)


def parse_config(path, overrides=None) -> Config:
    """Load a JSON config file, apply dotted-path overrides, validate."""
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError([f"config parse error at line {err.lineno}, "
                           f"column {err.colno}: {err.msg}"]) from err
    if not isinstance(user, dict):
        raise ConfigError(["config root must be a JSON object"])
    for key, value in (overrides or {}).items():
        _apply_override(user, key, value)
    return parse_config_dict(user)


def _apply_override(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError([f"cannot override through non-object {part!r}"])
    node[parts[-1]] = value


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path, command: str, config: Config, started: str,
                   finished: str, summary: dict) -> None:
    from . import __version__

    payload = {
        "tool_version": __version__,
        "command": command,
        "config_hash": config.config_hash(),
        "config": config.raw,
        "master_seed": config.master_seed,
        "started_at": started,
        "finished_at": finished,
        "summary": summary,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
