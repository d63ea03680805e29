"""Run configuration: defaults, JSON ingestion, overrides and object construction.

A config is one JSON document with a ``version`` field. ``resolve_config``
fills every default, applies overrides and validates; the result is the
canonical form written to ``config.resolved.json`` and hashed into every
output.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .cce import CceConfig, PulseSequence, config_hash
from .constants import PhysicalConstants, constants_from_overrides
from .ensemble import EnsembleSpec, near_zero_state, sample_bath_state
from .geometry import DotEnvelope, SpinBath, generate_diamond_bath, generate_double_dot_bath
from .hamiltonians import BathState
from .models import CentralSpinModel, DoubleDotModel, DrivenSpinModel, NVModel
from .scenarios import generate_driven_bath, remainder_overhauser_sigma, sample_frozen_overhauser

CONFIG_VERSION = 1

SCENARIOS = {"nv": NVModel, "dqd": DoubleDotModel, "driven": DrivenSpinModel}

# the swept model field per scenario
FIELD_KEYS = {"nv": "B_gauss", "dqd": "B_tesla", "driven": "detuning_khz"}

MODEL_DEFAULTS = {
    "nv": {"B_gauss": 0.0, "epsilon_khz": 100.0},
    "dqd": {"J_ex_ghz": -0.24, "B_tesla": 1.0, "frozen_overhauser_khz": 0.0},
    "driven": {"rabi_khz": 100.0, "detuning_khz": 0.0, "bath_field": 1000.0},
}

BATH_DEFAULTS = {
    "nv": {"file": None, "seed": 0, "abundance": 0.011, "radius": 3.0, "exclusion": 0.5,
           "max_sites": None, "nearest": None},
    "driven": {"file": None, "seed": 0, "abundance": 0.011, "radius": 3.0, "exclusion": 0.5,
               "max_sites": None, "nearest": None},
    "dqd": {"file": None, "seeds": [0, 1], "L_z": 6.0, "rho_0": 30.0, "cutoff": 0.5,
            "max_sites": 1000, "separation": 100.0, "nearest": None},
}

BASE_DEFAULTS: dict[str, Any] = {
    "version": CONFIG_VERSION,
    "scenario": "nv",
    "state": {"kind": "near_zero", "seed": 0, "target_khz": 0.0},
    "sequence": {"kind": "hahn", "switch_fractions": []},
    "times": {"start": 0.0, "stop": 2.0, "num": 101},
    "cce": {"max_order": 2, "pair_cutoff": None, "mode": "modified", "workers": None},
    "ensemble": {"enabled": False, "n_exact_avg": 10, "n_far_samples": 1, "seed": 0, "max_states": 4096},
    "sweep": {"values": None, "start": None, "stop": None, "step": None, "t2_method": "crossing",
              "keep_curves": False},
    "exact": {"compare": False, "method": "eig"},
    "bath_scale": 1.0,
    "outdir": "out",
    "constants": {},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _merge(base: dict, extra: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and key != "constants":
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def defaults_for(scenario: str) -> dict[str, Any]:
    if scenario not in SCENARIOS:
        raise ConfigError(f"config key 'scenario': unknown scenario {scenario!r}")
    d = copy.deepcopy(BASE_DEFAULTS)
    d["scenario"] = scenario
    d["model"] = copy.deepcopy(MODEL_DEFAULTS[scenario])
    d["bath"] = copy.deepcopy(BATH_DEFAULTS[scenario])
    if scenario == "driven":
        d["sequence"]["kind"] = "rotary"
        d["sequence"]["switch_fractions"] = [0.5]
    return d


def set_path(doc: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested dict, creating intermediate objects."""
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"config key {dotted!r}: {k!r} is not an object")
    node[keys[-1]] = value


def parse_value(text: str) -> Any:
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _number(doc, path, lo=None, hi=None, integer=False, allow_none=False):
    node = doc
    for k in path.split("."):
        node = node[k]
    if node is None and allow_none:
        return
    ok = isinstance(node, (int, float)) and not isinstance(node, bool) and math.isfinite(node)
    if ok and integer:
        ok = float(node).is_integer()
    if ok and lo is not None:
        ok = node >= lo
    if ok and hi is not None:
        ok = node <= hi
    if not ok:
        raise ConfigError(f"config key {path!r}: invalid value {node!r}")


def _choice(doc, path, options):
    node = doc
    for k in path.split("."):
        node = node[k]
    if node not in options:
        raise ConfigError(f"config key {path!r}: {node!r} is not one of {sorted(options)}")


def resolve_config(raw: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> dict:
    """Defaults filled, overrides applied (dotted keys), validated."""
    raw = dict(raw or {})
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config key 'version': unsupported version {version!r}")
    merged_raw: dict[str, Any] = copy.deepcopy(raw)
    for key, value in (overrides or {}).items():
        set_path(merged_raw, key, value)
    scenario = merged_raw.get("scenario", BASE_DEFAULTS["scenario"])
    doc = _merge(defaults_for(scenario), merged_raw)
    _validate(doc)
    return doc


def _validate(doc: dict) -> None:
    sc = doc["scenario"]
    _choice(doc, "state.kind", {"near_zero", "random"})
    _number(doc, "state.seed", 0, integer=True)
    _number(doc, "state.target_khz")
    _choice(doc, "sequence.kind", {"fid", "hahn", "rotary"})
    if doc["sequence"]["kind"] == "rotary" and sc != "driven":
        raise ConfigError("config key 'sequence.kind': rotary echo needs scenario 'driven'")
    fr = doc["sequence"]["switch_fractions"]
    if not isinstance(fr, list) or any(not isinstance(f, (int, float)) or not 0 < f < 1 for f in fr):
        raise ConfigError(f"config key 'sequence.switch_fractions': invalid value {fr!r}")
    _number(doc, "times.start", 0)
    _number(doc, "times.stop", 0)
    _number(doc, "times.num", 1, integer=True)
    if doc["times"]["stop"] < doc["times"]["start"]:
        raise ConfigError("config key 'times.stop': must not precede times.start")
    _number(doc, "cce.max_order", 1, integer=True)
    _choice(doc, "cce.mode", {"modified", "original"})
    _number(doc, "cce.workers", 1, integer=True, allow_none=True)
    pc = doc["cce"]["pair_cutoff"]
    if isinstance(pc, list):
        if not pc or any(not isinstance(c, (int, float)) or c <= 0 for c in pc):
            raise ConfigError(f"config key 'cce.pair_cutoff': invalid value {pc!r}")
    else:
        _number(doc, "cce.pair_cutoff", 0, allow_none=True)
    try:
        cce_config(doc)
    except ValueError as exc:
        raise ConfigError(f"config key 'cce.pair_cutoff': {exc}") from None
    _number(doc, "ensemble.n_exact_avg", 0, integer=True)
    _number(doc, "ensemble.n_far_samples", 1, integer=True)
    _number(doc, "ensemble.seed", 0, integer=True)
    _number(doc, "ensemble.max_states", 1, integer=True)
    _choice(doc, "sweep.t2_method", {"crossing", "fit"})
    _choice(doc, "exact.method", {"eig", "leapfrog"})
    _number(doc, "bath_scale", 0)
    if not isinstance(doc["outdir"], str):
        raise ConfigError("config key 'outdir': must be a string")
    try:
        constants_from_overrides(doc["constants"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'constants': {exc}") from None
    for key, default in MODEL_DEFAULTS[sc].items():
        if key == "frozen_overhauser_khz" and doc["model"][key] in ("rms", "sample"):
            continue
        _number(doc, f"model.{key}")
    b = doc["bath"]
    if b["file"] is not None and not isinstance(b["file"], str):
        raise ConfigError("config key 'bath.file': must be a path string")
    _number(doc, "bath.nearest", 1, integer=True, allow_none=True)
    _number(doc, "bath.max_sites", 1, integer=True, allow_none=True)
    if sc == "dqd":
        s = b["seeds"]
        if not isinstance(s, list) or len(s) != 2 or any(not isinstance(x, int) or x < 0 for x in s):
            raise ConfigError(f"config key 'bath.seeds': need two non-negative integers, got {s!r}")
        _number(doc, "bath.L_z", 0)
        _number(doc, "bath.rho_0", 0)
        _number(doc, "bath.cutoff", 0, 1)
        _number(doc, "bath.separation", 0)
    else:
        _number(doc, "bath.seed", 0, integer=True)
        _number(doc, "bath.abundance", 0, 1)
        _number(doc, "bath.radius", 0, 6)
        _number(doc, "bath.exclusion", 0)
    try:
        build_model(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'model': {exc}") from None


def load_config(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    if "version" not in doc:
        raise ConfigError("config key 'version': missing")
    return doc


def canonical(doc: Mapping) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def resolved_hash(doc: Mapping) -> str:
    return config_hash(dict(doc))


def constants_of(doc: Mapping) -> PhysicalConstants:
    return constants_from_overrides(doc["constants"])


def cce_config(doc: Mapping) -> CceConfig:
    c = doc["cce"]
    pc = c["pair_cutoff"]
    cut = float("inf") if pc is None else (tuple(float(x) for x in pc) if isinstance(pc, list) else float(pc))
    return CceConfig(max_order=int(c["max_order"]), pair_cutoff=cut, mode=c["mode"], workers=c["workers"])


def sequence_of(doc: Mapping) -> PulseSequence:
    s = doc["sequence"]
    if s["kind"] == "rotary":
        return PulseSequence.rotary(switch_fractions=tuple(float(f) for f in s["switch_fractions"]))
    return PulseSequence.fid() if s["kind"] == "fid" else PulseSequence.hahn()


def time_grid(doc: Mapping) -> np.ndarray:
    t = doc["times"]
    return np.linspace(float(t["start"]), float(t["stop"]), int(t["num"]))


def build_model(doc: Mapping, bath: SpinBath | None = None, **field_override) -> CentralSpinModel:
    """Model for the resolved config; a symbolic DQD frozen field needs ``bath``."""
    sc = doc["scenario"]
    params = {k: doc["model"][k] for k in MODEL_DEFAULTS[sc]}
    params.update(field_override)
    if sc == "dqd" and isinstance(params["frozen_overhauser_khz"], str):
        if bath is None:
            params["frozen_overhauser_khz"] = 0.0
        elif params["frozen_overhauser_khz"] == "rms":
            params["frozen_overhauser_khz"] = remainder_overhauser_sigma(bath)
        else:
            params["frozen_overhauser_khz"] = sample_frozen_overhauser(bath, doc["state"]["seed"])
    params = {k: float(v) for k, v in params.items()}
    return SCENARIOS[sc](**params, constants=constants_of(doc), bath_scale=float(doc["bath_scale"]))


def build_bath(doc: Mapping) -> SpinBath:
    b = doc["bath"]
    consts = constants_of(doc)
    if b["file"] is not None:
        bath = SpinBath.load(b["file"])
    elif doc["scenario"] == "dqd":
        bath = generate_double_dot_bath(tuple(b["seeds"]), DotEnvelope(float(b["L_z"]), float(b["rho_0"])),
                                        cutoff=float(b["cutoff"]), max_sites=b["max_sites"],
                                        separation=float(b["separation"]), constants=consts)
    else:
        gen = generate_driven_bath if doc["scenario"] == "driven" else generate_diamond_bath
        bath = gen(int(b["seed"]), abundance=float(b["abundance"]), radius=float(b["radius"]),
                   exclusion=float(b["exclusion"]), max_sites=b["max_sites"], constants=consts)
    if b["nearest"] is not None:
        bath = bath.nearest(int(b["nearest"]))
    return bath


def build_state(doc: Mapping, bath: SpinBath, model: CentralSpinModel) -> BathState:
    s = doc["state"]
    if s["kind"] == "random":
        return sample_bath_state(bath, int(s["seed"]))
    return near_zero_state(bath, int(s["seed"]), model.projection, float(s["target_khz"]))


def ensemble_of(doc: Mapping) -> EnsembleSpec:
    e = doc["ensemble"]
    return EnsembleSpec(int(e["n_exact_avg"]), int(e["n_far_samples"]), int(e["seed"]), int(e["max_states"]))


def sweep_fields(doc: Mapping) -> np.ndarray:
    s = doc["sweep"]
    if s["values"] is not None:
        vals = np.asarray(s["values"], dtype=float)
    elif None not in (s["start"], s["stop"], s["step"]):
        if s["step"] <= 0:
            raise ConfigError("config key 'sweep.step': must be positive")
        n = int(math.floor((s["stop"] - s["start"]) / s["step"] + 1e-9)) + 1
        vals = s["start"] + s["step"] * np.arange(max(n, 0))
    else:
        vals = np.array([])
    if vals.size == 0:
        raise ConfigError("config key 'sweep': empty field grid")
    return vals
