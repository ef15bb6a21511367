"""Sectioned INI run configuration: parsing and fail-fast validation.

Every key is validated before any compute starts; unknown sections or keys are
rejected with the offending location in the message.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .divergence import DivergenceKind
from .flows import BUILTIN_SYSTEMS, Domain, DynamicsSpec, IntegratorConfig, build_system
from .ulam import GridPartition, SamplingPlan


class ConfigError(ValueError):
    pass


_SCHEMES = ("rk4", "euler_maruyama", "stratonovich_heun")
_DIAGNOSTICS = ("ftdr", "ftle_max", "ftle_min", "ftle_stoch")
_DIVERGENCES = ("kl", "hellinger", "total_variation", "chi_squared",
                "chi_alpha", "alpha")

_KNOWN_KEYS = {
    "time": {"t0", "tau", "dt", "scheme"},
    "grid": {"torus", "bounds_x", "bounds_y", "bounds_z", "nx", "ny", "nz",
             "slice_axis", "slice_value"},
    "sampling": {"samples_per_box", "realizations", "master_seed",
                 "bin_refine", "directions"},
    "diagnostic": {"kind", "divergence", "alpha"},
}
_SYSTEM_KEYS = {
    "double_gyre": {"name", "sigma", "A", "eps", "omega"},
    "hills_vortex": {"name", "sigma", "U", "a0", "a1", "a2"},
    "linear": {"name", "sigma", "matrix"},
    "translation": {"name", "sigma", "velocity"},
}


@dataclass
class RunConfig:
    spec: DynamicsSpec
    cfg: IntegratorConfig
    partition: GridPartition
    plan: SamplingPlan
    t0: float
    tau: float
    master_seed: int
    diagnostic: str
    divergence: DivergenceKind
    slice_axis: Optional[int] = None
    slice_value: float = 0.0
    raw: dict = field(default_factory=dict)


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _get(section, key, conv, where, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{where}] missing required key '{key}'")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{where}] key '{key}': cannot parse {raw!r} ({exc})")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (A vs a)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}")

    sections = set(parser.sections())
    required = {"system", "time", "grid", "sampling", "diagnostic"}
    missing = required - sections
    if missing:
        raise ConfigError(f"missing sections: {sorted(missing)}")
    unknown = sections - required
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")

    for name in ("time", "grid", "sampling", "diagnostic"):
        extra = set(parser[name]) - _KNOWN_KEYS[name]
        if extra:
            raise ConfigError(f"[{name}] unknown keys: {sorted(extra)}")

    # [system]
    sys_sec = parser["system"]
    name = sys_sec.get("name")
    if name not in BUILTIN_SYSTEMS:
        raise ConfigError(f"[system] unknown system name {name!r}; "
                          f"expected one of {BUILTIN_SYSTEMS}")
    extra = set(sys_sec) - _SYSTEM_KEYS[name]
    if extra:
        raise ConfigError(f"[system] unknown keys for {name}: {sorted(extra)}")
    params = {}
    for key in sys_sec:
        if key == "name":
            continue
        if key == "sigma":
            params["sigma"] = _get(sys_sec, "sigma", _floats, "system")
        elif key == "matrix":
            rows = [_floats(r) for r in sys_sec["matrix"].split(";")]
            params["matrix"] = rows
        elif key == "velocity":
            params["velocity"] = _get(sys_sec, "velocity", _floats, "system")
        else:
            params[key] = _get(sys_sec, key, float, "system")
    try:
        spec = build_system(name, params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[system] {exc}")

    # [time]
    tsec = parser["time"]
    t0 = _get(tsec, "t0", float, "time", default=0.0)
    tau = _get(tsec, "tau", float, "time", required=True)
    dt = _get(tsec, "dt", float, "time", default=1e-2)
    scheme = _get(tsec, "scheme", str, "time",
                  default="rk4" if not spec.is_stochastic else "euler_maruyama")
    if scheme not in _SCHEMES:
        raise ConfigError(f"[time] unknown scheme {scheme!r}")
    if tau == 0.0:
        raise ConfigError("[time] tau must be nonzero")
    try:
        cfg = IntegratorConfig(scheme, dt)
    except ValueError as exc:
        raise ConfigError(f"[time] {exc}")
    if scheme == "rk4" and spec.is_stochastic:
        raise ConfigError("[time] rk4 cannot integrate a stochastic system")
    if spec.has_state_dependent_noise and scheme == "euler_maruyama":
        raise ConfigError("[time] state-dependent noise needs stratonovich_heun")

    # [grid]
    gsec = parser["grid"]
    nx = _get(gsec, "nx", int, "grid", required=True)
    ny = _get(gsec, "ny", int, "grid", required=True)
    nz = _get(gsec, "nz", int, "grid")
    if "torus" in gsec:
        if spec.dim != 2 or nz is not None:
            raise ConfigError("[grid] torus grids are two-dimensional")
        lengths = _get(gsec, "torus", _floats, "grid")
        if len(lengths) != 2:
            raise ConfigError("[grid] torus needs two lengths")
        if spec.domain.kind == "torus2d" and tuple(lengths) != spec.domain.lengths:
            raise ConfigError(f"[grid] torus {lengths} does not match the "
                              f"system domain {spec.domain.lengths}")
        domain = Domain.torus2d(*lengths)
        counts = (nx, ny)
    else:
        axes = ["bounds_x", "bounds_y"] + (["bounds_z"] if nz is not None else [])
        bounds = []
        for key in axes:
            pair = _get(gsec, key, _floats, "grid", required=True)
            if len(pair) != 2 or pair[1] <= pair[0]:
                raise ConfigError(f"[grid] {key} must be 'lo hi' with hi > lo")
            bounds.append(tuple(pair))
        if len(bounds) != spec.dim:
            raise ConfigError(f"[grid] {len(bounds)} axes for a {spec.dim}-d system")
        domain = Domain.box(bounds)
        counts = (nx, ny) if nz is None else (nx, ny, nz)
    if any(c < 1 for c in counts):
        raise ConfigError("[grid] box counts must be positive")
    partition = GridPartition(domain, counts)

    slice_axis = None
    slice_value = 0.0
    if "slice_axis" in gsec:
        axis_name = gsec["slice_axis"].strip().lower()
        if axis_name not in ("x", "y", "z"):
            raise ConfigError("[grid] slice_axis must be x, y or z")
        slice_axis = "xyz".index(axis_name)
        slice_value = _get(gsec, "slice_value", float, "grid", default=0.0)
        if partition.dim != 3:
            raise ConfigError("[grid] slice_axis applies to 3-d grids only")

    # [sampling]
    ssec = parser["sampling"]
    try:
        plan = SamplingPlan(
            samples_per_box=_get(ssec, "samples_per_box", int, "sampling",
                                 default=4),
            realizations=_get(ssec, "realizations", int, "sampling", default=1),
            bin_refine=_get(ssec, "bin_refine", int, "sampling", default=1),
            directions=_get(ssec, "directions", int, "sampling", default=8))
    except ValueError as exc:
        raise ConfigError(f"[sampling] {exc}")
    master_seed = _get(ssec, "master_seed", int, "sampling", default=0)

    # [diagnostic]
    dsec = parser["diagnostic"]
    kind = _get(dsec, "kind", str, "diagnostic", required=True)
    if kind not in _DIAGNOSTICS:
        raise ConfigError(f"[diagnostic] unknown kind {kind!r}")
    div_name = _get(dsec, "divergence", str, "diagnostic", default="kl")
    if div_name not in _DIVERGENCES:
        raise ConfigError(f"[diagnostic] unknown divergence {div_name!r}")
    alpha = _get(dsec, "alpha", float, "diagnostic")
    try:
        divergence = DivergenceKind(div_name, alpha)
    except ValueError as exc:
        raise ConfigError(f"[diagnostic] {exc}")

    if kind == "ftdr" and not spec.is_stochastic and plan.realizations != 1:
        raise ConfigError("[sampling] deterministic systems require "
                          "realizations = 1")

    return RunConfig(spec=spec, cfg=cfg, partition=partition, plan=plan,
                     t0=t0, tau=tau, master_seed=master_seed, diagnostic=kind,
                     divergence=divergence, slice_axis=slice_axis,
                     slice_value=slice_value,
                     raw={s: dict(parser[s]) for s in parser.sections()})


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    return parse_config(text)
