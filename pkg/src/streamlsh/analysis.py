"""Closed-form success probabilities, index sizes and retained-copy curves.

Everything here is a pure function of its arguments.  The cumulative forms
average the per-item success probability over a radius region, integrating
similarity with adaptive Simpson quadrature and summing age exactly over
whole ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import DomainError, ValidationError
from .policies import Smooth

QUAD_TOL = 1e-6


@dataclass(frozen=True)
class ThresholdAge:
    """Threshold seen analytically: items live while ``age < t_age``."""

    t_age: float

    def __post_init__(self):
        if not self.t_age > 0:
            raise ValidationError(f"t_age must be positive, got {self.t_age!r}")

    @classmethod
    def from_size(cls, t_size: float, mu: float, phi: float = 1.0) -> "ThresholdAge":
        return cls(t_size / (mu * phi))

    @property
    def last_age(self) -> int:
        """Largest integer age still retained."""
        return math.ceil(self.t_age) - 1


AnalyticPolicy = Union[ThresholdAge, Smooth]


@dataclass(frozen=True)
class SPParams:
    k: int
    L: int
    policy: AnalyticPolicy
    s: float
    a: float
    z: float = 1.0

    def __post_init__(self):
        _check_kl(self.k, self.L)
        _check_unit("s", self.s)
        _check_unit("z", self.z)
        if self.a < 0:
            raise ValidationError("age must be non-negative")
        if not isinstance(self.policy, (ThresholdAge, Smooth)):
            raise ValidationError("only Threshold and Smooth have closed-form success probabilities")


@dataclass(frozen=True)
class RadiusParams:
    r_sim: float
    r_age: int
    r_quality: float = 0.0
    r_pop: float | None = None

    def __post_init__(self):
        _check_unit("R_sim", self.r_sim)
        _check_unit("R_quality", self.r_quality)
        if self.r_pop is not None:
            _check_unit("R_pop", self.r_pop)
        if self.r_age < 0 or int(self.r_age) != self.r_age:
            raise ValidationError(f"R_age must be a non-negative integer, got {self.r_age!r}")


def _check_unit(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {x!r}")


def _check_kl(k: int, L: int) -> None:
    if k < 1 or L < 1:
        raise ValidationError("k and L must be positive")


def lsh_success(k: int, L: int, s, keep=1.0):
    """``1 - (1 - keep * s**k)**L``; vectorized over numpy inputs."""
    return 1.0 - (1.0 - keep * np.power(s, k)) ** L


def sp_threshold(k: int, L: int, s: float, a: float, z: float, t_age: float) -> float:
    """Threshold: ``1 - (1 - s^k z)^L`` while ``a < t_age``, else 0."""
    if a >= t_age:
        return 0.0
    return float(lsh_success(k, L, s, z))


def sp_smooth(k: int, L: int, p: float, s: float, a: float, z: float) -> float:
    """Smooth: ``1 - (1 - p^a s^k z)^L``."""
    return float(lsh_success(k, L, s, z * p ** a))


def success_probability(params: SPParams) -> float:
    pol = params.policy
    if isinstance(pol, ThresholdAge):
        return sp_threshold(params.k, params.L, params.s, params.a, params.z, pol.t_age)
    return sp_smooth(params.k, params.L, pol.p, params.s, params.a, params.z)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(lo, hi, fa, fm, fb, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(lo, mid, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(mid, hi, fm, frm, fb, right, tol / 2, depth - 1))

    if b == a:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def _ages(policy: AnalyticPolicy, r_age: int) -> np.ndarray:
    """Ages with non-zero retention inside ``[0, r_age]``."""
    last = r_age if isinstance(policy, Smooth) else min(r_age, policy.last_age)
    return np.arange(0, last + 1, dtype=np.float64)


def _age_keep(policy: AnalyticPolicy, ages: np.ndarray) -> np.ndarray:
    if isinstance(policy, Smooth):
        return policy.p ** ages
    return np.ones_like(ages)


def _check_radius(r_sim: float, r_age: int) -> None:
    _check_unit("R_sim", r_sim)
    if r_sim >= 1.0:
        raise DomainError("similarity radius 1 leaves an empty integration interval")
    if r_age < 0 or int(r_age) != r_age:
        raise ValidationError(f"R_age must be a non-negative integer, got {r_age!r}")


def csp(policy: AnalyticPolicy, k: int, L: int, r_sim: float, r_age: int, z: float = 1.0,
        tol: float = QUAD_TOL) -> float:
    """Mean success probability over ``s ~ U[r_sim, 1]`` and ``a ~ U{0..r_age}``.

    Threshold contributes zero for ages ``>= t_age`` but those ages still count
    in the normalization.
    """
    _check_kl(k, L)
    _check_radius(r_sim, r_age)
    ages = _ages(policy, int(r_age))
    if ages.size == 0:
        return 0.0
    keep = _age_keep(policy, ages) * z

    def integrand(s: float) -> float:
        return float(np.sum(lsh_success(k, L, s, keep)))

    total = adaptive_simpson(integrand, r_sim, 1.0, tol=tol * 1e-3 * (1.0 - r_sim) * (r_age + 1))
    return total / ((1.0 - r_sim) * (r_age + 1))


# -- quality-aware cumulative success ------------------------------------


@dataclass(frozen=True)
class UniformQuality:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValidationError("uniform quality bounds must satisfy 0 <= lo < hi <= 1")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class PointQuality:
    z: float = 1.0

    def __post_init__(self):
        _check_unit("quality", self.z)

    @property
    def mean(self) -> float:
        return self.z


QualityDistribution = Union[UniformQuality, PointQuality]


def csp_quality(variant: str, k: int, L: int, p: float, r_sim: float, r_age: int, r_quality: float,
                quality: QualityDistribution = UniformQuality(), tol: float = QUAD_TOL) -> float:
    """Cumulative success of Smooth(p) over items with quality ``>= r_quality``.

    ``variant`` is ``"sensitive"`` (insert with probability = quality) or
    ``"insensitive"`` (always insert); the caller chooses ``p`` per variant.

    Raises:
        DomainError: the quality distribution has no mass in ``[r_quality, 1]``.
    """
    if variant not in ("sensitive", "insensitive"):
        raise ValidationError(f"variant must be 'sensitive' or 'insensitive', got {variant!r}")
    _check_unit("R_quality", r_quality)
    policy = Smooth(p)
    if isinstance(quality, PointQuality):
        if quality.z < r_quality:
            raise DomainError("no quality mass above the quality radius")
        return csp(policy, k, L, r_sim, r_age, z=quality.z if variant == "sensitive" else 1.0, tol=tol)
    lo = max(r_quality, quality.lo)
    if lo >= quality.hi:
        raise DomainError("quality radius leaves an empty integration interval")
    if variant == "insensitive":
        return csp(policy, k, L, r_sim, r_age, z=1.0, tol=tol)
    _check_radius(r_sim, r_age)
    keep_a = _age_keep(policy, _ages(policy, int(r_age)))

    def inner(z: float) -> float:
        return adaptive_simpson(lambda s: float(np.sum(lsh_success(k, L, s, keep_a * z))), r_sim, 1.0,
                                tol=tol * 1e-3)

    total = adaptive_simpson(inner, lo, quality.hi, tol=tol * 1e-3 * (r_age + 1))
    return total / ((quality.hi - lo) * (1.0 - r_sim) * (r_age + 1))


def quality_insensitive_p(p_sensitive: float, mean_quality: float) -> float:
    """Retention factor giving the insensitive variant the same expected size.

    Solves ``phi / (1 - p_s) = 1 / (1 - p_i)``.
    """
    return 1.0 - (1.0 - p_sensitive) / mean_quality


def csp_empirical(policy: AnalyticPolicy, k: int, L: int, s: Sequence[float], a: Sequence[float],
                  z: Sequence[float] | None = None) -> float:
    """Mean success probability over observed ``(s, a, z)`` triples (empirical density)."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    z = np.ones_like(s) if z is None else np.asarray(z, dtype=np.float64)
    if s.size == 0:
        raise DomainError("no samples inside the radius")
    if isinstance(policy, Smooth):
        keep = z * policy.p ** a
    else:
        keep = np.where(a < policy.t_age, z, 0.0)
    return float(np.mean(lsh_success(k, L, s, keep)))


# -- popularity ------------------------------------------------------------


def sb(p: float, u: float, rho: float, z: float) -> float:
    """Steady-state probability that an item is present in its bucket: ``zu rho / (1 - p(1 - zu rho))``."""
    if not (0.0 < p <= 1.0 and 0.0 < u <= 1.0):
        raise ValidationError("p and u must lie in (0, 1]")
    _check_unit("rho", rho)
    _check_unit("z", z)
    x = z * u * rho
    denom = 1.0 - p * (1.0 - x)
    if denom == 0.0:
        raise DomainError("bucket probability is 0/0 for p = 1 and z*u*rho = 0")
    return x / denom


def sp_dynapop(k: int, L: int, p: float, u: float, s: float, w: float, z: float) -> float:
    """Success probability with popularity re-indexing under Smooth(p)."""
    _check_kl(k, L)
    _check_unit("s", s)
    return float(lsh_success(k, L, s, sb(p, u, w, z)))


def expected_index_size(mu: float, phi: float, p: float, L: int) -> float:
    """Steady-state total entries under Smooth: ``mu phi / (1 - p) * L``."""
    if mu <= 0 or not (0.0 <= phi <= 1.0) or not (0.0 < p < 1.0) or L < 1:
        raise ValidationError("need mu > 0, phi in [0, 1], p in (0, 1), L >= 1")
    return mu * phi / (1.0 - p) * L


def expected_copies(policy: AnalyticPolicy, L: int, z: float, a: float) -> float:
    if isinstance(policy, Smooth):
        return z * L * policy.p ** a
    return z * L if a < policy.t_age else 0.0


def check_equal_capacity(sizes: dict[str, float], rel_tol: float = 0.10) -> None:
    """Raise if any two expected sizes differ by more than ``rel_tol`` of the largest."""
    if not sizes:
        return
    lo, hi = min(sizes.values()), max(sizes.values())
    if hi <= 0 or (hi - lo) / hi > rel_tol:
        detail = ", ".join(f"{k}={v:.6g}" for k, v in sizes.items())
        raise ValidationError(f"configurations do not have equal capacity within {rel_tol:.0%}: {detail}")


# -- figure presets ----------------------------------------------------------


def zipf_ranks(n: int) -> list[tuple[int, float]]:
    return [(r, 1.0 / r) for r in range(1, n + 1)]


def preset_rows(name: str, k: int = 10, L: int = 15, p: float = 0.95) -> list[dict]:
    """Sweep tables reproducing the shapes of the analytical figures."""
    t_age = 1.0 / (1.0 - p)
    threshold = ThresholdAge(t_age)
    smooth = Smooth(p)
    rows: list[dict] = []
    if name == "fig2":
        for z in (1.0, 0.5):
            for a in range(61):
                rows.append({"figure": name, "z": z, "age": a,
                             "threshold": expected_copies(threshold, L, z, a),
                             "smooth": expected_copies(smooth, L, z, a)})
    elif name == "fig3":
        for a in range(0, 61, 2):
            for s in np.round(np.arange(0.5, 1.0001, 0.02), 4):
                rows.append({"figure": name, "s": float(s), "age": a,
                             "threshold": sp_threshold(k, L, float(s), a, 1.0, t_age),
                             "smooth": sp_smooth(k, L, p, float(s), a, 1.0)})
    elif name in ("fig4a", "fig4b", "fig4"):
        sims = {"fig4a": (0.8,), "fig4b": (0.9,), "fig4": (0.8, 0.9)}[name]
        for r_sim in sims:
            for r_age in range(10, 101, 10):
                rows.append({"figure": name, "R_sim": r_sim, "R_age": r_age,
                             "threshold": csp(threshold, k, L, r_sim, r_age),
                             "smooth": csp(smooth, k, L, r_sim, r_age)})
    elif name == "fig5":
        rows = preset_rows("fig4", k, L, p)
        for r in rows:
            r["figure"] = name
    elif name in ("fig6", "fig6a", "fig6b"):
        qualities = {"fig6a": (0.5,), "fig6b": (0.9,), "fig6": (0.5, 0.9)}[name]
        p_ins = quality_insensitive_p(p, 0.5)
        for r_q in qualities:
            for r_age in range(10, 101, 10):
                rows.append({"figure": name, "R_sim": 0.8, "R_quality": r_q, "R_age": r_age,
                             "sensitive": csp_quality("sensitive", k, L, p, 0.8, r_age, r_q),
                             "insensitive": csp_quality("insensitive", k, L, p_ins, 0.8, r_age, r_q)})
    elif name in ("fig7", "fig7a", "fig7b"):
        if name in ("fig7", "fig7a"):
            for u in (0.25, 0.5, 1.0):
                for r, w in zipf_ranks(100):
                    rows.append({"figure": "fig7a", "p": p, "u": u, "rank": r, "rho": w, "sb": sb(p, u, w, 1.0)})
        if name in ("fig7", "fig7b"):
            for pp in (0.8, 0.9, 0.95, 0.99):
                for r, w in zipf_ranks(100):
                    rows.append({"figure": "fig7b", "p": pp, "u": 1.0, "rank": r, "rho": w, "sb": sb(pp, 1.0, w, 1.0)})
    elif name == "fig8":
        for s in (0.7, 0.8, 0.9):
            for r, w in zipf_ranks(100):
                rows.append({"figure": name, "s": s, "rank": r, "w": w,
                             "sp": sp_dynapop(k, L, p, 1.0, s, w, 1.0)})
    else:
        raise ValidationError(f"unknown preset {name!r}")
    return rows


PRESETS = ("fig2", "fig3", "fig4", "fig4a", "fig4b", "fig5", "fig6", "fig6a", "fig6b", "fig7", "fig7a", "fig7b", "fig8")


def grid_rows(function: str, grid: dict[str, Iterable[float]], fixed: dict[str, float]) -> list[dict]:
    """Evaluate one analysis function over the Cartesian product of ``grid``."""
    import itertools

    funcs: dict[str, Callable[..., float]] = {
        "sp_smooth": lambda k, L, p, s, a, z=1.0: sp_smooth(int(k), int(L), p, s, a, z),
        "sp_threshold": lambda k, L, t_age, s, a, z=1.0: sp_threshold(int(k), int(L), s, a, z, t_age),
        "csp_smooth": lambda k, L, p, r_sim, r_age: csp(Smooth(p), int(k), int(L), r_sim, int(r_age)),
        "csp_threshold": lambda k, L, t_age, r_sim, r_age: csp(ThresholdAge(t_age), int(k), int(L), r_sim, int(r_age)),
        "sb": lambda p, u, rho, z=1.0: sb(p, u, rho, z),
        "sp_dynapop": lambda k, L, p, u, s, w, z=1.0: sp_dynapop(int(k), int(L), p, u, s, w, z),
        "expected_index_size": lambda mu, phi, p, L: expected_index_size(mu, phi, p, int(L)),
        "expected_copies_smooth": lambda L, p, z, a: expected_copies(Smooth(p), int(L), z, a),
        "expected_copies_threshold": lambda L, t_age, z, a: expected_copies(ThresholdAge(t_age), int(L), z, a),
    }
    if function not in funcs:
        raise ValidationError(f"unknown function {function!r}; choose from {sorted(funcs)}")
    names = list(grid)
    rows = []
    for combo in itertools.product(*(list(grid[n]) for n in names)):
        args = dict(fixed)
        args.update(zip(names, combo))
        try:
            value = funcs[function](**args)
        except TypeError as exc:
            raise ValidationError(f"{function}: {exc}") from exc
        rows.append({**args, "function": function, "value": value})
    return rows
