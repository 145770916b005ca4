"""Run configuration: one YAML file, validated with line references.

Unknown keys are errors, so a typo never silently falls back to a default.
``dump_config`` prints the resolved form (every default filled in), and
parsing that text gives back an equal :class:`Config`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
import yaml

from .errors import NetworkError, ParseError, ValidationError
from .network import NetworkSpec, ReactionNetwork, validate_network

ENGINES = ("ssa", "pdmp", "both")
PROFILES = ("constant", "sine", "cosine", "polynomial")
OBSERVABLE_KINDS = ("inner_product", "point_value", "macro_count", "jump_count")


# -- profiles (initial data and test functions) --------------------------------


@dataclass(frozen=True)
class Profile:
    """A closed-form function on [0, 1].

    ``constant``: value; ``sine``/``cosine``: mean + amplitude * sin/cos(2 pi
    wavenumber x); ``polynomial``: ascending coefficients.
    """

    kind: str = "constant"
    value: float = 1.0
    mean: float = 0.0
    amplitude: float = 0.0
    wavenumber: int = 1
    coefficients: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "sine":
            return self.mean + self.amplitude * np.sin(2.0 * np.pi * self.wavenumber * x)
        if self.kind == "cosine":
            return self.mean + self.amplitude * np.cos(2.0 * np.pi * self.wavenumber * x)
        return np.polynomial.Polynomial(self.coefficients)(x) * np.ones_like(x)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"profile": "constant", "value": self.value}
        if self.kind == "polynomial":
            return {"profile": "polynomial", "coefficients": list(self.coefficients)}
        return {"profile": self.kind, "mean": self.mean, "amplitude": self.amplitude,
                "wavenumber": self.wavenumber}


# -- sections ------------------------------------------------------------------


@dataclass(frozen=True)
class GridSection:
    N: int
    k: int = 1


@dataclass(frozen=True)
class ScaleSection:
    mu: float


@dataclass(frozen=True)
class HorizonSection:
    T: float
    dt_out: float


@dataclass(frozen=True)
class InitialSection:
    f0: Profile
    d0: tuple


@dataclass(frozen=True)
class PdmpSection:
    M: int = 256
    h: float = 1e-3


@dataclass(frozen=True)
class EnsembleSection:
    R: int = 1
    root_seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class GuardSection:
    positivity: bool = True
    truncation_n: Optional[float] = None


@dataclass(frozen=True)
class BudgetSection:
    max_events: int = 10**10
    max_jumps: int = 10**6
    wall_seconds: Optional[float] = None


@dataclass(frozen=True)
class ObservableEntry:
    kind: str
    name: str = ""
    f: Optional[Profile] = None
    x0: Optional[float] = None
    ell: Optional[int] = None


@dataclass(frozen=True)
class AnalysisSection:
    ladder: tuple = ()
    times: tuple = ()
    observables: tuple = ()
    dynkin_times: tuple = ()
    reference_M: int = 512
    reference_h: float = 5e-4
    reference_factor: int = 4


@dataclass(frozen=True)
class Config:
    grid: GridSection
    scale: ScaleSection
    horizon: HorizonSection
    network: dict
    initial: InitialSection
    engine: str = "ssa"
    pdmp_solver: PdmpSection = PdmpSection()
    ensemble: EnsembleSection = EnsembleSection()
    guards: GuardSection = GuardSection()
    budgets: BudgetSection = BudgetSection()
    analysis: AnalysisSection = AnalysisSection()

    def network_spec(self) -> NetworkSpec:
        spec = NetworkSpec.from_dict(self.network)
        if self.guards.truncation_n is not None:
            spec.truncation_n = self.guards.truncation_n
        return spec

    def build_network(self) -> ReactionNetwork:
        return validate_network(self.network_spec())

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = _plain(val)
        return out


def _plain(val):
    if isinstance(val, Profile):
        return val.to_dict()
    if hasattr(val, "__dataclass_fields__"):
        return {f.name: _plain(getattr(val, f.name)) for f in fields(val)}
    if isinstance(val, (list, tuple)):
        return [_plain(v) for v in val]
    if isinstance(val, dict):
        return {k: _plain(v) for k, v in val.items()}
    return val


# -- YAML with line numbers ----------------------------------------------------


def _load(text: str):
    """Parse YAML into plain objects plus a map from dotted key to line number."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", exc)), None if mark is None else mark.line + 1)
    if node is None:
        raise ParseError("empty config", 1)
    lines: dict[str, int] = {}

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
                lines[f"{path}.{k.value}" if path else str(k.value)] = k.start_mark.line + 1
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                walk(v, f"{path}[{i}]")

    walk(node, "")
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping", 1)
    return data, lines


class _Checker:
    """Collects validation errors while reading typed values out of the raw tree."""

    def __init__(self, lines: dict):
        self.lines = lines
        self.errors: list[tuple[str, str, int | None]] = []

    def err(self, key: str, reason: str):
        line = self.lines.get(key)
        if line is None and "." in key:
            line = self.lines.get(key.rsplit(".", 1)[0])
        self.errors.append((key, reason, line))

    def section(self, raw: dict, name: str, allowed: tuple, required: bool = True) -> dict:
        sec = raw.get(name)
        if sec is None:
            if required:
                self.err(name, "missing required section")
            return {}
        if not isinstance(sec, dict):
            self.err(name, "must be a mapping")
            return {}
        for key in sec:
            if key not in allowed:
                self.err(f"{name}.{key}", f"unknown key (allowed: {', '.join(allowed)})")
        return sec

    def get(self, sec: dict, path: str, conv, default=..., check=None, reason="invalid value"):
        key = path.rsplit(".", 1)[-1]
        if key not in sec or sec[key] is None:
            if default is ...:
                self.err(path, "missing required key")
                return None
            return default
        try:
            val = conv(sec[key])
        except (TypeError, ValueError):
            self.err(path, f"cannot convert {sec[key]!r} ({conv.__name__} expected)")
            return None
        if check is not None and not check(val):
            self.err(path, reason)
            return None
        return val


def _int(v):
    if isinstance(v, bool):
        raise TypeError("bool")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError("not an integer")
        return int(v)
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise TypeError("bool")
    return float(v)


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("bool expected")
    return v


def _profile(ck: _Checker, raw, path: str) -> Optional[Profile]:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Profile("constant", value=float(raw))
    if isinstance(raw, list):
        try:
            return Profile("polynomial", coefficients=tuple(float(c) for c in raw))
        except (TypeError, ValueError):
            ck.err(path, "polynomial coefficients must be numbers")
            return None
    if not isinstance(raw, dict):
        ck.err(path, "expected a number, a coefficient list or a profile mapping")
        return None
    allowed = ("profile", "value", "mean", "amplitude", "wavenumber", "coefficients")
    for key in raw:
        if key not in allowed:
            ck.err(f"{path}.{key}", f"unknown key (allowed: {', '.join(allowed)})")
    kind = raw.get("profile", "constant")
    if kind not in PROFILES:
        ck.err(f"{path}.profile", f"unknown profile {kind!r} (known: {', '.join(PROFILES)})")
        return None
    if kind == "constant":
        return Profile("constant", value=ck.get(raw, f"{path}.value", _float, 1.0))
    if kind == "polynomial":
        coeffs = raw.get("coefficients")
        if not isinstance(coeffs, list) or not coeffs:
            ck.err(f"{path}.coefficients", "polynomial profile needs a nonempty coefficient list")
            return None
        return Profile("polynomial", coefficients=tuple(float(c) for c in coeffs))
    return Profile(
        kind,
        mean=ck.get(raw, f"{path}.mean", _float, 0.0),
        amplitude=ck.get(raw, f"{path}.amplitude", _float, 0.0),
        wavenumber=ck.get(raw, f"{path}.wavenumber", _int, 1),
    )


def _float_list(ck: _Checker, raw, path: str) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        ck.err(path, "expected a list")
        return ()
    try:
        return tuple(float(x) for x in raw)
    except (TypeError, ValueError):
        ck.err(path, "entries must be numbers")
        return ()


def _observables(ck: _Checker, raw, path: str) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        ck.err(path, "expected a list of observables")
        return ()
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, dict):
            ck.err(p, "observable must be a mapping")
            continue
        for key in item:
            if key not in ("kind", "name", "f", "x0", "ell"):
                ck.err(f"{p}.{key}", "unknown key (allowed: kind, name, f, x0, ell)")
        kind = item.get("kind")
        if kind not in OBSERVABLE_KINDS:
            ck.err(f"{p}.kind", f"unknown observable kind {kind!r}")
            continue
        f = _profile(ck, item["f"], f"{p}.f") if item.get("f") is not None else None
        if kind == "inner_product" and f is None:
            ck.err(f"{p}.f", "inner_product needs a test function")
        x0 = ck.get(item, f"{p}.x0", _float, None, lambda v: 0.0 <= v <= 1.0, "x0 must lie in [0, 1]")
        ell = ck.get(item, f"{p}.ell", _int, None, lambda v: v >= 1, "ell is 1-based")
        if kind == "point_value" and x0 is None:
            ck.err(f"{p}.x0", "point_value needs x0")
        if kind == "macro_count" and ell is None:
            ck.err(f"{p}.ell", "macro_count needs ell")
        out.append(ObservableEntry(kind, str(item.get("name", "")), f, x0, ell))
    return tuple(out)


def config_from_dict(raw: dict, lines: dict | None = None) -> Config:
    ck = _Checker(lines or {})
    top = ("grid", "scale", "horizon", "network", "initial", "engine", "pdmp_solver", "ensemble", "guards",
           "budgets", "analysis")
    for key in raw:
        if key not in top:
            ck.err(key, f"unknown section (allowed: {', '.join(top)})")

    pos = lambda v: v > 0  # noqa: E731
    g = ck.section(raw, "grid", ("N", "k"))
    N = ck.get(g, "grid.N", _int, ..., pos, "must be a positive integer")
    k = ck.get(g, "grid.k", _int, 1, pos, "must be a positive integer")
    if N is not None and k is not None and N % k:
        ck.err("grid.N", "not a multiple of k")

    s = ck.section(raw, "scale", ("mu",))
    mu = ck.get(s, "scale.mu", _float, ..., pos, "must be positive")

    h = ck.section(raw, "horizon", ("T", "dt_out"))
    T = ck.get(h, "horizon.T", _float, ..., pos, "must be positive")
    dt_out = ck.get(h, "horizon.dt_out", _float, T, pos, "must be positive")
    if T is not None and dt_out is not None and dt_out > T * (1 + 1e-12):
        ck.err("horizon.dt_out", "must not exceed T")

    net_raw = raw.get("network")
    if not isinstance(net_raw, dict):
        ck.err("network", "missing required section" if net_raw is None else "must be a mapping")
        net_raw = {}
    else:
        allowed = ("preset", "params") if "preset" in net_raw else ("reactions", "u_max", "d_max", "rho1",
                                                                     "truncation_n")
        for key in net_raw:
            if key not in allowed:
                ck.err(f"network.{key}", f"unknown key (allowed: {', '.join(allowed)})")

    ini = ck.section(raw, "initial", ("f0", "d0"))
    f0 = _profile(ck, ini["f0"], "initial.f0") if ini.get("f0") is not None else None
    if ini and ini.get("f0") is None:
        ck.err("initial.f0", "missing required key")
    d0_raw = ini.get("d0", [0] * (k or 1))
    d0 = None
    if not isinstance(d0_raw, list):
        ck.err("initial.d0", "expected a list of nonnegative integers")
    else:
        try:
            d0 = tuple(_int(x) for x in d0_raw)
        except (TypeError, ValueError):
            ck.err("initial.d0", "entries must be integers")
        if d0 is not None:
            if any(x < 0 for x in d0):
                ck.err("initial.d0", "entries must be nonnegative")
            if k is not None and len(d0) != k:
                ck.err("initial.d0", f"length {len(d0)} does not match k={k}")

    engine = raw.get("engine", "ssa")
    if engine not in ENGINES:
        ck.err("engine", f"must be one of {', '.join(ENGINES)}")

    p = ck.section(raw, "pdmp_solver", ("M", "h"), required=False)
    pdmp = PdmpSection(ck.get(p, "pdmp_solver.M", _int, 256, lambda v: v >= 2, "must be >= 2"),
                       ck.get(p, "pdmp_solver.h", _float, 1e-3, pos, "must be positive"))
    if pdmp.M is not None and k is not None and pdmp.M % k:
        ck.err("pdmp_solver.M", "not a multiple of k")

    e = ck.section(raw, "ensemble", ("R", "root_seed", "workers"), required=False)
    ens = EnsembleSection(
        ck.get(e, "ensemble.R", _int, 1, lambda v: v >= 1, "must be >= 1"),
        ck.get(e, "ensemble.root_seed", _int, 0, lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
        ck.get(e, "ensemble.workers", _int, 1, lambda v: v >= 1, "must be >= 1"),
    )

    gd = ck.section(raw, "guards", ("positivity", "truncation_n"), required=False)
    guards = GuardSection(ck.get(gd, "guards.positivity", _bool, True),
                          ck.get(gd, "guards.truncation_n", _float, None, pos, "must be positive"))

    b = ck.section(raw, "budgets", ("max_events", "max_jumps", "wall_seconds"), required=False)
    budgets = BudgetSection(
        ck.get(b, "budgets.max_events", _int, 10**10, pos, "must be positive"),
        ck.get(b, "budgets.max_jumps", _int, 10**6, pos, "must be positive"),
        ck.get(b, "budgets.wall_seconds", _float, None, pos, "must be positive"),
    )

    a = ck.section(raw, "analysis", ("ladder", "times", "observables", "dynkin_times", "reference_M",
                                     "reference_h", "reference_factor"), required=False)
    ladder = []
    for i, rung in enumerate(a.get("ladder") or []):
        if rung == "pdmp":
            ladder.append("pdmp")
        elif isinstance(rung, list) and len(rung) == 2:
            try:
                ladder.append((_int(rung[0]), _float(rung[1])))
            except (TypeError, ValueError):
                ck.err(f"analysis.ladder[{i}]", "rung must be [N, mu]")
        else:
            ck.err(f"analysis.ladder[{i}]", "rung must be [N, mu] or 'pdmp'")
    analysis = AnalysisSection(
        tuple(ladder),
        _float_list(ck, a.get("times"), "analysis.times"),
        _observables(ck, a.get("observables"), "analysis.observables"),
        _float_list(ck, a.get("dynkin_times"), "analysis.dynkin_times"),
        ck.get(a, "analysis.reference_M", _int, 512, lambda v: v >= 2, "must be >= 2"),
        ck.get(a, "analysis.reference_h", _float, 5e-4, pos, "must be positive"),
        ck.get(a, "analysis.reference_factor", _int, 4, lambda v: v >= 2, "must be >= 2"),
    )
    if T is not None:
        for key, ts in (("analysis.times", analysis.times), ("analysis.dynkin_times", analysis.dynkin_times)):
            if any(not 0 < t <= T * (1 + 1e-12) for t in ts):
                ck.err(key, "times must lie in (0, T]")

    if ck.errors:
        raise ValidationError(ck.errors)
    cfg = Config(
        GridSection(N, k), ScaleSection(mu), HorizonSection(T, dt_out), dict(net_raw), InitialSection(f0, d0),
        engine, pdmp, ens, guards, budgets, analysis,
    )
    try:
        cfg.build_network()
    except NetworkError as exc:
        raise ValidationError([("network", str(v), ck.lines.get("network")) for v in exc.violations] or
                              [("network", str(exc), ck.lines.get("network"))]) from exc
    except TypeError as exc:  # bad preset parameters
        raise ValidationError([("network.params", str(exc), ck.lines.get("network.params"))]) from exc
    return cfg


def parse_config_text(text: str) -> Config:
    raw, lines = _load(text)
    return config_from_dict(raw, lines)


def parse_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not valid UTF-8: {exc}")
    return parse_config_text(text)


def dump_config(cfg: Config) -> str:
    """Resolved YAML text; ``parse_config_text(dump_config(c)) == c``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()
