"""Shared domain types: trait grid, quadrature, resource functions, parameters, state.

The trait axis is the real line truncated to ``[x_lo, x_hi]`` and sampled
uniformly.  Integrals over traits are trapezoid sums with the grid weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import ClassVar

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class SimulationError(RuntimeError):
    """Raised when a time integration leaves the admissible state space.

    ``state`` is a dump ``{"t", "u", "v"}`` of the last state for post-mortem.
    """

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state


# ---------------------------------------------------------------------------
# grid and quadrature


@dataclass(frozen=True)
class TraitGrid:
    x_lo: float
    x_hi: float
    n: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi)):
            raise ValidationError("grid bounds must be finite")
        if not self.x_lo < self.x_hi:
            raise ValidationError(f"need x_lo < x_hi, got {self.x_lo} >= {self.x_hi}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 3:
            raise ValidationError(f"need an integer n >= 3, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        x = np.linspace(self.x_lo, self.x_hi, int(self.n))
        w = np.full(int(self.n), self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @property
    def spacing(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n - 1)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    def nearest_index(self, x: float) -> int:
        return int(np.clip(round((x - self.x_lo) / self.spacing), 0, self.n - 1))


def make_grid(x_lo: float, x_hi: float, n: int) -> TraitGrid:
    return TraitGrid(float(x_lo), float(x_hi), n)


def quadrature(grid: TraitGrid, f) -> float:
    """Trapezoid integral of the sampled function ``f`` over the grid."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise ValidationError(f"expected a vector of length {grid.n}, got shape {f.shape}")
    return float(np.dot(grid.weights, f))


# ---------------------------------------------------------------------------
# resource functions (closed registry of parametric families)


class ResourceFunction:
    """Base class; subclasses are frozen dataclasses evaluated with ``f(x)``."""

    family: ClassVar[str]

    def __call__(self, x):
        raise NotImplementedError

    def sample(self, grid: TraitGrid) -> np.ndarray:
        return np.asarray(self(grid.nodes), dtype=float)

    def to_dict(self) -> dict:
        out = {"family": self.family}
        out.update({f.name: getattr(self, f.name) for f in fields(self)})
        return out


@dataclass(frozen=True)
class Constant(ResourceFunction):
    family: ClassVar[str] = "constant"
    level: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.level)


@dataclass(frozen=True)
class GaussianBump(ResourceFunction):
    """``base + amplitude * exp(-(x - center)^2 / (2 width^2))``."""

    family: ClassVar[str] = "gaussian"
    base: float
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError("gaussian width must be > 0")

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.base + self.amplitude * np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class CosineBump(ResourceFunction):
    """Raised-cosine bump of half-width ``halfwidth``, equal to ``base`` outside."""

    family: ClassVar[str] = "cosine"
    base: float
    amplitude: float
    center: float
    halfwidth: float

    def __post_init__(self):
        if self.halfwidth <= 0:
            raise ValidationError("cosine halfwidth must be > 0")

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.halfwidth
        bump = 0.5 * (1.0 + np.cos(np.pi * np.clip(z, -1.0, 1.0)))
        return self.base + self.amplitude * bump


@dataclass(frozen=True)
class TwoPeaks(ResourceFunction):
    family: ClassVar[str] = "two_peaks"
    base: float
    amp1: float
    center1: float
    width1: float
    amp2: float
    center2: float
    width2: float

    def __post_init__(self):
        if self.width1 <= 0 or self.width2 <= 0:
            raise ValidationError("two_peaks widths must be > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        z1 = (x - self.center1) / self.width1
        z2 = (x - self.center2) / self.width2
        return self.base + self.amp1 * np.exp(-0.5 * z1 * z1) + self.amp2 * np.exp(-0.5 * z2 * z2)


RESOURCE_FAMILIES: dict[str, type[ResourceFunction]] = {
    cls.family: cls for cls in (Constant, GaussianBump, CosineBump, TwoPeaks)
}


def resource_from_dict(spec: dict) -> ResourceFunction:
    """Build a resource function from ``{"family": ..., <parameters>}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in RESOURCE_FAMILIES:
        raise ValidationError(
            f"unknown resource family {family!r}; expected one of {sorted(RESOURCE_FAMILIES)}"
        )
    cls = RESOURCE_FAMILIES[family]
    names = [f.name for f in fields(cls)]
    unknown = sorted(set(spec) - set(names))
    missing = [k for k in names if k not in spec]
    if unknown:
        raise ValidationError(f"unknown key(s) {unknown} for family {family!r}")
    if missing:
        raise ValidationError(f"missing key(s) {missing} for family {family!r}")
    values = {}
    for k in names:
        try:
            values[k] = float(spec[k])
        except (TypeError, ValueError):
            raise ValidationError(f"{family}.{k} must be a real number, got {spec[k]!r}") from None
        if not math.isfinite(values[k]):
            raise ValidationError(f"{family}.{k} must be finite")
    return cls(**values)


# ---------------------------------------------------------------------------
# parameters and state


@dataclass(frozen=True)
class ModelParams:
    """Competition coefficients and resource functions.

    ``m_bar`` is the constant rate of ``v`` in the mutation-free model; ``m``
    is the trait-dependent rate used by the diffusive model.
    """

    b: float
    c: float
    m_bar: float
    d: ResourceFunction
    m: ResourceFunction = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        for name in ("b", "c", "m_bar"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValidationError(f"params.{name} must be > 0, got {val}")


@dataclass
class PopulationState:
    """Densities of both species on the grid at time ``t``.

    Masses are recomputed from ``u`` and ``v`` on every access.
    """

    grid: TraitGrid
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    NEGATIVE_TOL: ClassVar[float] = -1e-12

    def __post_init__(self):
        self.u = self._check(self.u, "u")
        self.v = self._check(self.v, "v")

    def _check(self, a, name):
        a = np.array(a, dtype=float)
        if a.shape != (self.grid.n,):
            raise ValidationError(f"{name} must have length {self.grid.n}, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise SimulationError(f"{name} has non-finite entries", {"t": self.t, name: a})
        if a.min() < self.NEGATIVE_TOL:
            raise SimulationError(
                f"{name} has negative entries (min {a.min():.3e})", {"t": self.t, name: a}
            )
        np.maximum(a, 0.0, out=a)
        return a

    @property
    def r1(self) -> float:
        return quadrature(self.grid, self.u)

    @property
    def r2(self) -> float:
        return quadrature(self.grid, self.v)

    def copy(self) -> "PopulationState":
        return PopulationState(self.grid, self.u.copy(), self.v.copy(), self.t)


# ---------------------------------------------------------------------------
# concentration diagnostics


@dataclass(frozen=True)
class ConcentrationMetrics:
    peak_location: float
    mass_fraction_near_peak: float
    half_mass_width: float


def concentration_metrics(grid: TraitGrid, u, reference: float, eps: float) -> ConcentrationMetrics:
    """Grid-level measures of how closely ``u`` resembles a point mass.

    ``mass_fraction_near_peak`` is the share of the total mass carried by
    nodes within ``eps`` of ``reference``.  ``half_mass_width`` is the width
    of the smallest contiguous node window around the argmax holding half
    of the mass, grown greedily towards the heavier neighbour.
    """
    u = np.asarray(u, dtype=float)
    total = quadrature(grid, u)
    ipk = int(np.argmax(u))
    if total <= 0:
        return ConcentrationMetrics(float(grid.nodes[ipk]), 0.0, 0.0)
    cell = grid.weights * u
    near = np.abs(grid.nodes - reference) <= eps * (1 + 1e-12)
    frac = float(min(1.0, max(0.0, cell[near].sum() / total)))

    lo = hi = ipk
    acc = cell[ipk]
    while acc < 0.5 * total and (lo > 0 or hi < grid.n - 1):
        left = cell[lo - 1] if lo > 0 else -1.0
        right = cell[hi + 1] if hi < grid.n - 1 else -1.0
        if left >= right:
            lo -= 1
            acc += left
        else:
            hi += 1
            acc += right
    width = float(grid.nodes[hi] - grid.nodes[lo])
    return ConcentrationMetrics(float(grid.nodes[ipk]), frac, width)


# ---------------------------------------------------------------------------
# standing assumptions of the mutation-free model


@dataclass(frozen=True)
class AssumptionReport:
    initial_masses_positive: bool
    resource_bounded: bool
    single_maximizer: bool
    limit_pair_positive: bool
    tail_negative: bool
    r1_0: float
    r2_0: float
    d_min: float
    d_max: float
    xbar: float
    r1_star: float
    r2_star: float
    beta_R: float
    messages: tuple[str, ...] = ()

    @property
    def mandatory_ok(self) -> bool:
        return self.initial_masses_positive and self.resource_bounded and self.single_maximizer

    @property
    def all_ok(self) -> bool:
        return self.mandatory_ok and self.limit_pair_positive and self.tail_negative


def support_mask(u0, rtol: float = 0.0) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    return u0 > rtol * (u0.max() if u0.size else 0.0)


def peak_of(d_values, mask) -> tuple[float, int, bool]:
    """Return ``(d_M, index, unique)`` for the maximum of ``d`` over ``mask``."""
    d_values = np.asarray(d_values, dtype=float)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return float("nan"), -1, False
    dm = d_values[idx].max()
    ties = idx[d_values[idx] >= dm - 1e-14 * max(1.0, abs(dm))]
    return float(dm), int(ties[0]), ties.size == 1


def validate_assumptions(params: ModelParams, grid: TraitGrid, u0, v0) -> AssumptionReport:
    """Check positivity of initial masses, bounds on ``d``, the limit pair and tail sign.

    Report-only: nothing is raised for failed checks.
    """
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != (grid.n,) or v0.shape != (grid.n,):
        raise ValidationError("initial data must be sized to the grid")
    msgs = []
    r1_0, r2_0 = quadrature(grid, u0), quadrature(grid, v0)
    init_ok = bool(0 < r1_0 < np.inf and 0 < r2_0 < np.inf and u0.min() >= 0 and v0.min() >= 0)
    if not init_ok:
        msgs.append(f"initial masses must be positive and finite (r1(0)={r1_0}, r2(0)={r2_0})")

    d = params.d.sample(grid)
    d_min, d_max = float(d.min()), float(d.max())
    bounded = bool(np.all(np.isfinite(d)) and 0 < d_min < d_max)
    if not bounded:
        msgs.append(f"need 0 < d_m < d_M on the grid, got d_m={d_min}, d_M={d_max}")

    omega = support_mask(u0)
    dM, ipk, unique = peak_of(d, omega)
    xbar = float(grid.nodes[ipk]) if ipk >= 0 else float("nan")
    if not unique:
        msgs.append("max of d over supp u0 is not attained at a single node")

    b, c, mb = params.b, params.c, params.m_bar
    det = 1.0 - b * c
    if abs(det) <= 1e-12 or not math.isfinite(dM):
        r1s = r2s = float("nan")
        pair_ok = False
        msgs.append("limit-pair system is singular (bc = 1)")
    else:
        r1s = (dM - b * mb) / det
        r2s = (mb - c * dM) / det
        pair_ok = bool(r1s > 0 and r2s > 0)
        if not pair_ok:
            msgs.append(f"limit pair not positive: r1*={r1s:.6g}, r2*={r2s:.6g}")

    if pair_ok:
        centre = 0.5 * (grid.x_lo + grid.x_hi)
        half = 0.5 * grid.length
        band = np.abs(grid.nodes - centre) >= 0.9 * half
        beta = float(np.max(d[band] - r1s - b * r2s))
        tail_ok = beta < 0
        if not tail_ok:
            msgs.append(f"tail growth rate not negative: beta_R={beta:.3e}")
    else:
        beta, tail_ok = float("nan"), False

    return AssumptionReport(
        initial_masses_positive=init_ok,
        resource_bounded=bounded,
        single_maximizer=unique,
        limit_pair_positive=pair_ok,
        tail_negative=tail_ok,
        r1_0=r1_0,
        r2_0=r2_0,
        d_min=d_min,
        d_max=d_max,
        xbar=xbar,
        r1_star=r1s,
        r2_star=r2s,
        beta_R=beta,
        messages=tuple(msgs),
    )
