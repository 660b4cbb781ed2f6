"""Named system families, built from JSON-style specs.

A spec is a dict with a ``name`` key plus family parameters, or
``{"file": path}`` pointing at such a dict on disk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from afm.errors import ConfigInvalid
from afm.iomap import IOMap
from afm.stability import LureSystem, Nonlinearity
from afm.statespace import StateSpaceSystem, contractive_tanh, io_map_of, linear_system, tapped_delay_realization
from afm.tcn import ReluFilterMap, ReluNet, TCNModel, relu_filter_map

__all__ = ["BuiltSystem", "build_system", "REGISTRY"]


@dataclass
class BuiltSystem:
    name: str
    F: IOMap
    state_space: StateSpaceSystem | None = None
    lure: LureSystem | None = None
    spec: dict | None = None


def _need(spec, key, path):
    if key not in spec:
        raise ConfigInvalid(f"{path}.{key}", "required field missing")
    return spec[key]


def _only(spec, allowed, path):
    extra = sorted(set(spec) - set(allowed) - {"name"})
    if extra:
        raise ConfigInvalid(f"{path}.{extra[0]}", "unknown field")


def _linear(spec, path):
    _only(spec, {"a", "b", "c"}, path)
    sys = linear_system(_need(spec, "a", path), _need(spec, "b", path), spec.get("c", 1.0))
    return BuiltSystem("linear", io_map_of(sys), state_space=sys)


def _tanh(spec, path):
    _only(spec, {"a", "b", "c"}, path)
    sys = contractive_tanh(_need(spec, "a", path), _need(spec, "b", path), spec.get("c", 1.0))
    return BuiltSystem("contractive_tanh", io_map_of(sys), state_space=sys)


def _lure(spec, path):
    _only(spec, {"A", "B", "C", "psi", "gamma"}, path)
    psi = spec.get("psi", {"kind": "tanh", "gain": 1.0})
    try:
        psi = Nonlinearity(**psi)
    except TypeError as exc:
        raise ConfigInvalid(f"{path}.psi", str(exc)) from exc
    lure = LureSystem(_need(spec, "A", path), _need(spec, "B", path), _need(spec, "C", path),
                      psi, float(_need(spec, "gamma", path)))
    sys = lure.to_system()
    return BuiltSystem("lure", io_map_of(sys), state_space=sys, lure=lure)


def _relu_filter(spec, path):
    _only(spec, {"C", "lambda", "horizon", "h"}, path)
    F: ReluFilterMap = relu_filter_map(float(spec.get("C", 1.0)), float(_need(spec, "lambda", path)),
                                       spec.get("horizon"), spec.get("h"))
    return BuiltSystem("relu_filter", F)


def _tcn(spec, path):
    _only(spec, {"net"}, path)
    model = TCNModel(ReluNet.from_json(_need(spec, "net", path)))
    return BuiltSystem("tcn", model)


def _tapped_delay(spec, path):
    _only(spec, {"net"}, path)
    net = ReluNet.from_json(_need(spec, "net", path))
    sys = tapped_delay_realization(net.forward, net.input_dim - 1)
    return BuiltSystem("tapped_delay", io_map_of(sys), state_space=sys)


REGISTRY = {
    "linear": _linear,
    "contractive_tanh": _tanh,
    "lure": _lure,
    "relu_filter": _relu_filter,
    "tcn": _tcn,
    "tapped_delay": _tapped_delay,
}


def build_system(spec: dict, path: str = "system", base_dir: Path | None = None) -> BuiltSystem:
    if not isinstance(spec, dict):
        raise ConfigInvalid(path, "system spec must be an object")
    if "file" in spec:
        _only(spec, {"file"}, path)
        p = Path(spec["file"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        try:
            spec = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"{path}.file", str(exc)) from exc
        return build_system(spec, path, p.parent)
    name = spec.get("name")
    if name not in REGISTRY:
        raise ConfigInvalid(f"{path}.name", f"unknown system {name!r}; known: {sorted(REGISTRY)}")
    try:
        built = REGISTRY[name](spec, path)
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(path, str(exc)) from exc
    built.spec = spec
    return built
