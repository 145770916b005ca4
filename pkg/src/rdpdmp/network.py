"""Reaction networks: classes, polynomial rate laws, macrosite weights.

Four reaction classes are supported:

``RC``
    fast onsite reactions of the continuous species, rate ``mu * lam(u)``.
``S1``
    fast mixed reactions, rate ``mu * lam(u, d)``; they never change ``d``.
``RDC_SLOW``
    slow mixed reactions acting on a whole macrosite, rate
    ``lam(sum_j a_j u_j, d_l)``; they add ``gamma_c * b_j`` to every site.
``RD``
    slow reactions of the discrete species only, rate ``lam(d_l)``.

Rates are sparse polynomials ``sum c_ij * y1**i * y2**j`` where ``y1`` is a
concentration and ``y2`` a count.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadArity,
    BadStoichiometry,
    MixedFastWithDJump,
    NegativeRate,
    NegativeRateAtRuntime,
    NetworkError,
    UnnormalizedWeight,
)

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12


class ReactionClass(str, enum.Enum):
    RC = "RC"
    S1 = "S1"
    RDC_SLOW = "RDC_SLOW"
    RD = "RD"

    @property
    def is_fast(self) -> bool:
        return self in (ReactionClass.RC, ReactionClass.S1)


@dataclass(frozen=True)
class RatePolynomial:
    """Sparse bivariate polynomial with terms ``(i, j, coeff)``."""

    terms: tuple[tuple[int, int, float], ...]

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]]) -> "RatePolynomial":
        acc: dict[tuple[int, int], float] = {}
        for t in triples:
            if len(t) != 3:
                raise ValueError(f"rate term must be [i, j, coeff], got {t!r}")
            i, j, c = t
            if int(i) != i or int(j) != j or i < 0 or j < 0:
                raise ValueError(f"exponents must be nonnegative integers, got {t!r}")
            key = (int(i), int(j))
            acc[key] = acc.get(key, 0.0) + float(c)
        return cls(tuple((i, j, c) for (i, j), c in sorted(acc.items()) if c != 0.0))

    @classmethod
    def constant(cls, c: float) -> "RatePolynomial":
        return cls.from_triples([(0, 0, c)])

    @property
    def arity(self) -> int:
        uses_1 = any(i > 0 for i, _, _ in self.terms)
        uses_2 = any(j > 0 for _, j, _ in self.terms)
        return 2 if (uses_1 and uses_2) else 1

    @property
    def degree_y1(self) -> int:
        return max((i for i, _, _ in self.terms), default=0)

    @property
    def degree_y2(self) -> int:
        return max((j for _, j, _ in self.terms), default=0)

    def __call__(self, y1, y2=0.0):
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        out = np.zeros(np.broadcast(y1, y2).shape)
        for i, j, c in self.terms:
            out = out + c * y1**i * y2**j
        return out[()] if out.ndim == 0 else out

    def abs_sum(self, y1, y2=0.0):
        """Sum of absolute term values; the scale used for roundoff tolerance."""
        y1 = np.abs(np.asarray(y1, dtype=float))
        y2 = np.abs(np.asarray(y2, dtype=float))
        out = np.zeros(np.broadcast(y1, y2).shape)
        for i, j, c in self.terms:
            out = out + abs(c) * y1**i * y2**j
        return out[()] if out.ndim == 0 else out

    def d_dy1(self) -> "RatePolynomial":
        return RatePolynomial.from_triples((i - 1, j, c * i) for i, j, c in self.terms if i > 0)

    def to_triples(self) -> list[list[float]]:
        return [[i, j, c] for i, j, c in self.terms]


@dataclass(frozen=True)
class WeightFunction:
    """Polynomial weight on [0, 1], coefficients in ascending powers of x."""

    coefficients: tuple[float, ...]
    normalize: bool = False

    @classmethod
    def constant(cls, c: float = 1.0) -> "WeightFunction":
        return cls((float(c),))

    @property
    def kind(self) -> str:
        return "constant" if len(self.coefficients) == 1 else "polynomial"

    @property
    def poly(self) -> np.polynomial.Polynomial:
        return np.polynomial.Polynomial(self.coefficients)

    def __call__(self, x):
        return self.poly(x)

    def integral(self, lo, hi):
        anti = self.poly.integ()
        return anti(hi) - anti(lo)

    def min_on_unit_interval(self) -> float:
        p = self.poly
        cands = [0.0, 1.0]
        if len(self.coefficients) > 2:
            for r in p.deriv().roots():
                if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0:
                    cands.append(float(r.real))
        return float(min(p(np.array(cands))))

    def normalized(self) -> "WeightFunction":
        total = self.integral(0.0, 1.0)
        if total <= 0:
            raise UnnormalizedWeight("weight integrates to a nonpositive value")
        return WeightFunction(tuple(c / total for c in self.coefficients), normalize=False)


def _bump(s: float) -> float:
    # C-infinity transition: 1 on [0, 1], 0 on [2, inf)
    if s <= 1.0:
        return 1.0
    if s >= 2.0:
        return 0.0
    x = s - 1.0
    p = math.exp(-1.0 / (1.0 - x))
    q = math.exp(-1.0 / x)
    return p / (p + q)


@dataclass(frozen=True)
class TruncationSpec:
    """Rate cutoff ``lam_n(y) = eta(|y|^2 / n^2) * lam(y)``."""

    n: float

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("truncation radius must be positive")

    @staticmethod
    def eta(s):
        if np.ndim(s) == 0:
            return _bump(float(s))
        return np.vectorize(_bump, otypes=[float])(s)

    def factor(self, y1, y2=0.0):
        return self.eta((np.square(y1) + np.square(y2)) / (self.n * self.n))


@dataclass(frozen=True)
class Reaction:
    cls: ReactionClass
    gamma_c: int
    gamma_d: int
    rate: RatePolynomial
    a_weight: WeightFunction | None = None
    b_weight: WeightFunction | None = None
    name: str = ""

    def rate_args(self, y1, y2):
        """Pick the arguments the class actually depends on."""
        if self.cls is ReactionClass.RC:
            return y1, 0.0
        if self.cls is ReactionClass.RD:
            return 0.0, y2
        return y1, y2


@dataclass
class NetworkSpec:
    """Unvalidated network description, as read from a config file."""

    reactions: list[Reaction]
    u_max: float = 10.0
    d_max: int = 1
    rho1: float | None = None
    truncation_n: float | None = None

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "NetworkSpec":
        if "preset" in raw:
            return preset_spec(raw["preset"], **dict(raw.get("params") or {}))
        reactions = [reaction_from_dict(r, idx) for idx, r in enumerate(raw.get("reactions") or [])]
        return cls(
            reactions=reactions,
            u_max=float(raw.get("u_max", 10.0)),
            d_max=int(raw.get("d_max", 1)),
            rho1=None if raw.get("rho1") is None else float(raw["rho1"]),
            truncation_n=None if raw.get("truncation_n") is None else float(raw["truncation_n"]),
        )


def _weight_from_raw(raw) -> WeightFunction | None:
    if raw is None:
        return None
    if isinstance(raw, Mapping):
        return WeightFunction(tuple(float(c) for c in raw["coefficients"]), bool(raw.get("normalize", False)))
    if isinstance(raw, (int, float)):
        return WeightFunction((float(raw),))
    return WeightFunction(tuple(float(c) for c in raw))


def reaction_from_dict(raw: Mapping[str, Any], idx: int = 0) -> Reaction:
    try:
        cls = ReactionClass(str(raw["class"]))
    except (KeyError, ValueError):
        raise NetworkError(f"reaction {idx}: unknown or missing class {raw.get('class')!r}", idx)
    return Reaction(
        cls=cls,
        gamma_c=int(raw.get("gamma_c", 0)),
        gamma_d=int(raw.get("gamma_d", 0)),
        rate=RatePolynomial.from_triples(raw.get("rate") or []),
        a_weight=_weight_from_raw(raw.get("a_weight")),
        b_weight=_weight_from_raw(raw.get("b_weight")),
        name=str(raw.get("name", f"r{idx}")),
    )


def reaction_to_dict(r: Reaction) -> dict:
    out: dict[str, Any] = {
        "name": r.name,
        "class": r.cls.value,
        "gamma_c": r.gamma_c,
        "gamma_d": r.gamma_d,
        "rate": r.rate.to_triples(),
    }
    if r.a_weight is not None:
        out["a_weight"] = list(r.a_weight.coefficients)
    if r.b_weight is not None:
        out["b_weight"] = list(r.b_weight.coefficients)
    return out


@dataclass(frozen=True)
class ReactionNetwork:
    """A validated, immutable reaction network."""

    reactions: tuple[Reaction, ...]
    u_max: float
    d_max: int
    truncation: TruncationSpec | None = None
    rho1: float | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def indices(self, *classes: ReactionClass) -> list[int]:
        return [i for i, r in enumerate(self.reactions) if r.cls in classes]

    @property
    def fast(self) -> list[int]:
        """Global indices of RC then S1 reactions."""
        return self.indices(ReactionClass.RC) + self.indices(ReactionClass.S1)

    @property
    def slow(self) -> list[int]:
        """Global indices of RDC_SLOW then RD reactions."""
        return self.indices(ReactionClass.RDC_SLOW) + self.indices(ReactionClass.RD)

    def to_dict(self) -> dict:
        return {
            "reactions": [reaction_to_dict(r) for r in self.reactions],
            "u_max": self.u_max,
            "d_max": self.d_max,
            "rho1": self.rho1,
            "truncation_n": None if self.truncation is None else self.truncation.n,
        }


def _check_reaction(idx: int, r: Reaction, u_max: float, d_max: int) -> list[NetworkError]:
    errs: list[NetworkError] = []
    label = r.name or str(idx)
    if r.cls.is_fast and r.gamma_d != 0:
        errs.append(MixedFastWithDJump(f"reaction {label}: fast class {r.cls.value} with gamma_d={r.gamma_d}", idx))
    if r.cls.is_fast and r.gamma_c == 0:
        errs.append(BadStoichiometry(f"reaction {label}: fast reaction leaves C unchanged", idx))
    if r.cls is ReactionClass.RD and r.gamma_c != 0:
        errs.append(BadStoichiometry(f"reaction {label}: RD reaction with gamma_c={r.gamma_c}", idx))
    if not r.cls.is_fast and r.gamma_d == 0:
        errs.append(BadStoichiometry(f"reaction {label}: slow reaction must change D", idx))

    if r.cls is ReactionClass.RC and r.rate.degree_y2 > 0:
        errs.append(BadArity(f"reaction {label}: RC rate must depend on the concentration only", idx))
    if r.cls is ReactionClass.RD and r.rate.degree_y1 > 0:
        errs.append(BadArity(f"reaction {label}: RD rate must depend on the count only", idx))

    if r.cls is ReactionClass.RDC_SLOW:
        for which, w in (("a", r.a_weight), ("b", r.b_weight)):
            if w is None:
                errs.append(UnnormalizedWeight(f"reaction {label}: missing {which}_weight", idx))
            elif w.min_on_unit_interval() < 0:
                errs.append(UnnormalizedWeight(f"reaction {label}: {which}_weight is negative on [0,1]", idx))
        if r.a_weight is not None and not r.a_weight.normalize:
            total = r.a_weight.integral(0.0, 1.0)
            if abs(total - 1.0) > WEIGHT_TOL:
                errs.append(UnnormalizedWeight(f"reaction {label}: a_weight integrates to {total!r}, not 1", idx))
    elif r.a_weight is not None or r.b_weight is not None:
        errs.append(BadStoichiometry(f"reaction {label}: weights only apply to RDC_SLOW", idx))

    # dense sampling of the validation box
    u = np.linspace(0.0, u_max, 64)
    d = np.arange(d_max + 1, dtype=float)
    if r.cls is ReactionClass.RC:
        y1, y2 = u, np.zeros(1)
    elif r.cls is ReactionClass.RD:
        y1, y2 = np.zeros(1), d
    else:
        y1, y2 = u, d
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    vals = r.rate(Y1, Y2)
    tol = 1e-12 * r.rate.abs_sum(Y1, Y2)
    bad = np.argwhere(vals < -tol)
    if bad.size:
        a, b = bad[0]
        pt = (float(Y1[a, b]), float(Y2[a, b]))
        errs.append(NegativeRate(f"reaction {label}: rate {float(vals[a, b])!r} < 0 at {pt}", idx, pt))
    return errs


def validate_network(raw: NetworkSpec | Mapping[str, Any]) -> ReactionNetwork:
    """Validate a network description.

    Raises the first :class:`NetworkError` found, with every violation listed
    in its ``violations`` attribute. Soft problems (assumption checks) end up
    in ``ReactionNetwork.warnings``.
    """
    spec = raw if isinstance(raw, NetworkSpec) else NetworkSpec.from_dict(raw)
    if not spec.u_max > 0 or not spec.d_max > 0:
        raise NetworkError("validation bounds u_max and d_max must be positive")

    errs: list[NetworkError] = []
    reactions = []
    for idx, r in enumerate(spec.reactions):
        errs.extend(_check_reaction(idx, r, spec.u_max, spec.d_max))
        if r.a_weight is not None and r.a_weight.normalize and not errs:
            r = Reaction(r.cls, r.gamma_c, r.gamma_d, r.rate, r.a_weight.normalized(), r.b_weight, r.name)
        reactions.append(r)
    if errs:
        first = errs[0]
        first.violations = errs
        raise first

    trunc = TruncationSpec(spec.truncation_n) if spec.truncation_n else None
    net = ReactionNetwork(tuple(reactions), float(spec.u_max), int(spec.d_max), trunc, spec.rho1)
    warns = list(network_warnings(net))
    for w in warns:
        log.warning(w)
    return ReactionNetwork(net.reactions, net.u_max, net.d_max, trunc, spec.rho1, tuple(warns))


def network_warnings(net: ReactionNetwork) -> Iterable[str]:
    if not net.fast:
        yield "no RC or S1 reactions: the debit function F is identically zero"

    d = np.arange(net.d_max + 1, dtype=float)
    u = np.linspace(0.0, net.u_max, 64)
    if net.rho1 is not None:
        if np.any(debit_F(0.0, d, net) < 0):
            yield "F(0, d) < 0 for some sampled d: positivity of the flow is not guaranteed"
        above = np.linspace(net.rho1, max(2.0 * net.rho1, net.u_max), 65)[1:]
        U, D = np.meshgrid(above, d, indexing="ij")
        if np.any(debit_F(U, D, net) >= 0):
            yield f"F(y1, d) >= 0 for some sampled y1 > rho1={net.rho1}: flow may not stay bounded"

    for idx, r in enumerate(net.reactions):
        label = r.name or str(idx)
        if r.cls.is_fast and r.gamma_c < 0:
            if np.any(np.asarray(r.rate(0.0, d)) > 0):
                yield f"reaction {label}: consumes C but its rate does not vanish at u=0"
        if not r.cls.is_fast and r.gamma_d < 0:
            low_d = np.arange(-r.gamma_d, dtype=float)
            y1 = u if r.cls is ReactionClass.RDC_SLOW else np.zeros(1)
            U, D = np.meshgrid(y1, low_d, indexing="ij")
            if np.any(r.rate(U, D) > 0):
                yield f"reaction {label}: rate does not vanish where the jump would make D negative"


def eval_rate(r: Reaction, y1, y2=0.0, trunc: TruncationSpec | None = None):
    """Evaluate ``lam_r`` (times the truncation factor if given).

    Raises NegativeRateAtRuntime if the polynomial is negative beyond
    roundoff.
    """
    a1, a2 = r.rate_args(y1, y2)
    val = r.rate(a1, a2)
    tol = 1e-12 * r.rate.abs_sum(a1, a2)
    if np.any(val < -tol):
        raise NegativeRateAtRuntime(f"reaction {r.name}: rate {np.min(val)!r} < 0 at y1={y1!r}, y2={y2!r}")
    val = np.maximum(val, 0.0)
    if trunc is not None:
        val = val * trunc.factor(a1, a2)
    return val[()] if np.ndim(val) == 0 else val


def debit_F(y1, y2, net: ReactionNetwork):
    """Net production rate of C by fast reactions, ``sum gamma_c * lam``."""
    out = np.zeros(np.broadcast(np.asarray(y1, float), np.asarray(y2, float)).shape)
    for idx in net.fast:
        r = net.reactions[idx]
        out = out + r.gamma_c * eval_rate(r, y1, y2, net.truncation)
    return out[()] if out.ndim == 0 else out


# -- presets ------------------------------------------------------------------


def toggle_field_spec(
    a: float = 1.0,
    b: float = 1.0,
    kappa: float = 2.0,
    c: float = 4.0,
    e: float = 1.0,
    b_on: float = 4.0,
    u_max: float = 10.0,
) -> NetworkSpec:
    """The canonical example network.

    C is produced at rate ``a`` and degraded at rate ``b*u``; an active gene
    (d=1) on a macrosite degrades C further at rate ``kappa*u*d``. The gene
    switches on at rate ``c * <a u>_l * (1-d)``, removing ``b_on`` molecules
    from every site of the macrosite, and off at rate ``e*d``.
    """
    rx = [
        Reaction(ReactionClass.RC, +1, 0, RatePolynomial.constant(a), name="production"),
        Reaction(ReactionClass.RC, -1, 0, RatePolynomial.from_triples([(1, 0, b)]), name="degradation"),
        Reaction(ReactionClass.S1, -1, 0, RatePolynomial.from_triples([(1, 1, kappa)]), name="repression"),
        Reaction(
            ReactionClass.RDC_SLOW,
            -1,
            +1,
            RatePolynomial.from_triples([(1, 0, c), (1, 1, -c)]),
            a_weight=WeightFunction.constant(1.0),
            b_weight=WeightFunction.constant(b_on),
            name="activation",
        ),
        Reaction(ReactionClass.RD, 0, -1, RatePolynomial.from_triples([(0, 1, e)]), name="deactivation"),
    ]
    rho1 = a / b
    return NetworkSpec(rx, u_max=u_max, d_max=1, rho1=rho1)


def linear_spec(a: float = 2.0, b: float = 1.0, u_max: float = 10.0) -> NetworkSpec:
    """Birth at rate ``a`` and death at rate ``b*u`` on every site."""
    rx = [
        Reaction(ReactionClass.RC, +1, 0, RatePolynomial.constant(a), name="birth"),
        Reaction(ReactionClass.RC, -1, 0, RatePolynomial.from_triples([(1, 0, b)]), name="death"),
    ]
    return NetworkSpec(rx, u_max=u_max, d_max=1, rho1=a / b)


def diffusion_only_spec(u_max: float = 10.0) -> NetworkSpec:
    return NetworkSpec([], u_max=u_max, d_max=1)


PRESETS = {
    "toggle_field": toggle_field_spec,
    "linear": linear_spec,
    "diffusion_only": diffusion_only_spec,
}


def preset_spec(name: str, **params) -> NetworkSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise NetworkError(f"unknown network preset {name!r}; known: {sorted(PRESETS)}")
    return factory(**params)


def toggle_field(**params) -> ReactionNetwork:
    return validate_network(toggle_field_spec(**params))
