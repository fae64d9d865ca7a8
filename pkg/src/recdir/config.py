"""Experiment configuration files.

Two encodings of one schema are accepted. The INI form has one section per
study; list values are comma separated::

    [sweep]
    a_grid = -0.8, -0.4, 0.0, 0.4, 0.8
    n_seeds = 50

The JSON form is an object of objects with the same section and key names::

    {"sweep": {"a_grid": [-0.8, -0.4, 0.0, 0.4, 0.8], "n_seeds": 50}}

Missing keys take the defaults of the corresponding config class. Unknown
sections or keys are errors.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import asdict, fields, is_dataclass

from .errors import ConfigError, RecdirError
from .mcharness import SweepConfig
from .mlpx import StudyConfig, TrainConfig
from .taskspace import TaskDataConfig, TaskStudyConfig

_INT, _FLOAT, _STR, _INTS, _FLOATS = "int", "float", "str", "int list", "float list"

SCHEMA = {
    "sweep": {
        "a_grid": _FLOATS, "gamma_grid": _FLOATS, "sigma_s_grid": _FLOATS, "sigma_e_grid": _FLOATS,
        "n_train": _INT, "n_eval": _INT, "n_seeds": _INT, "horizon": _INT, "burn_in": _INT,
        "max_fail_frac": _FLOAT,
    },
    "taskspace": {
        "n_tasks": _INT, "n_box_samples": _INT, "n_starts": _INT,
        "n_train": _INT, "n_test": _INT, "input_std": _FLOAT, "noise_std": _FLOAT,
    },
    "ettm1": {
        "n_train_grid": _INTS, "n_seeds": _INT, "column": _STR, "train_frac": _FLOAT,
        "max_fail_frac": _FLOAT, "p": _INT, "horizon": _INT, "width": _INT, "lr": _FLOAT,
        "epochs": _INT, "batch_size": _INT, "full_batch_below": _INT, "loss_mode": _STR,
    },
}


def _convert(section: str, key: str, value, kind: str):
    where = f"[{section}] {key}"
    try:
        if kind == _STR:
            if not isinstance(value, str):
                raise TypeError
            return value.strip()
        if kind in (_INTS, _FLOATS):
            if isinstance(value, str):
                items = [v for v in (s.strip() for s in value.split(",")) if v]
            elif isinstance(value, (list, tuple)):
                items = list(value)
            else:
                raise TypeError
            conv = _to_int if kind == _INTS else float
            return tuple(conv(v) for v in items)
        if kind == _INT:
            return _to_int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind}, got {value!r}") from None


def _to_int(v) -> int:
    if isinstance(v, bool):
        raise TypeError
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError
        return int(v)
    if isinstance(v, str):
        return int(v.strip())
    return int(v)


def parse_sections(raw: dict) -> dict:
    """Validate raw ``{section: {key: value}}`` against the schema and convert values."""
    out = {}
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table of keys")
        conv = {}
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            conv[key] = _convert(section, key, value, SCHEMA[section][key])
        out[section] = conv
    return out


def load_config(path) -> dict:
    """Read a config file; ``.json`` files are parsed as JSON, anything else as INI."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if str(path).endswith(".json"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    else:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        raw = {s: dict(cp[s]) for s in cp.sections()}
    return parse_sections(raw)


def _build(factory, values: dict):
    try:
        return factory(**values)
    except RecdirError as exc:
        raise ConfigError(str(exc)) from None


def sweep_config(sections: dict) -> SweepConfig:
    return _build(SweepConfig, sections.get("sweep", {}))


def taskspace_config(sections: dict) -> TaskStudyConfig:
    body = dict(sections.get("taskspace", {}))
    data_keys = {f.name for f in fields(TaskDataConfig)}
    data = _build(TaskDataConfig, {k: body.pop(k) for k in list(body) if k in data_keys})
    return _build(TaskStudyConfig, {**body, "data": data})


def ettm1_config(sections: dict) -> StudyConfig:
    body = dict(sections.get("ettm1", {}))
    train_keys = {f.name for f in fields(TrainConfig)} - {"n_train", "seed"}
    train = _build(TrainConfig, {k: body.pop(k) for k in list(body) if k in train_keys})
    return _build(StudyConfig, {**body, "train": train})


def snapshot(cfg) -> dict:
    """JSON-ready dict of a config object, nested configs flattened into one section."""
    if not is_dataclass(cfg):
        raise TypeError("expected a config dataclass")
    flat = {}
    for k, v in asdict(cfg).items():
        if k == "train":
            v = {kk: vv for kk, vv in v.items() if kk not in ("n_train", "seed")}
        if isinstance(v, dict):
            flat.update(v)
        else:
            flat[k] = v
    return {k: list(v) if isinstance(v, tuple) else v for k, v in flat.items()}
