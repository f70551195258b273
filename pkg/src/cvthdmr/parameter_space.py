"""
Input domains, product densities and seeded sample sets.

Every density here factorizes across dimensions, so sampling and QMC
mapping go through the 1-D inverse CDF of the marginal. Randomness comes
from numpy's Philox counter-based generator with one child stream per
dimension (``SeedSequence(seed).spawn(p)``), which keeps column ``i`` of a
sample set independent of how many other columns are drawn.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy import special

from .errors import ParameterError, PreconditionError

KINDS = ("uniform", "beta", "normal")

# Generator.random() returns k * 2**-53; shifting by half a step keeps
# every draw strictly inside (0, 1) so the normal inverse CDF stays finite.
_HALF_ULP = 2.0**-54


@dataclass(frozen=True)
class ProductDensity:
    """A product of identical (or per-dimension uniform) 1-D marginals.

    Parameters
    ----------
    kind : {"uniform", "beta", "normal"}
    lower, upper : tuple of float
        Box bounds for ``uniform``. A single entry is broadcast to every
        dimension; otherwise the length fixes the dimension.
    alpha, beta : float
        Shape parameters of the standard beta law on [0, 1].
    """

    kind: str = "uniform"
    lower: tuple = (0.0,)
    upper: tuple = (1.0,)
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown density kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "lower", tuple(float(v) for v in np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", tuple(float(v) for v in np.atleast_1d(self.upper)))
        if self.kind == "uniform":
            if len(self.lower) != len(self.upper):
                raise ParameterError("lower and upper bounds differ in length")
            lo, hi = np.array(self.lower), np.array(self.upper)
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo >= hi):
                raise ParameterError(f"uniform bounds need lower < upper, got {self.lower} / {self.upper}")
        elif self.kind == "beta":
            if not (self.alpha > 0 and self.beta > 0):
                raise ParameterError(f"beta shape parameters must be positive, got {self.alpha}, {self.beta}")

    @classmethod
    def uniform(cls, lower=0.0, upper=1.0) -> "ProductDensity":
        return cls("uniform", lower=lower, upper=upper)

    @classmethod
    def beta_law(cls, alpha: float, beta: float) -> "ProductDensity":
        return cls("beta", alpha=float(alpha), beta=float(beta))

    @classmethod
    def normal(cls) -> "ProductDensity":
        return cls("normal")

    def box(self, p: int):
        """Support box as two length-``p`` arrays (infinite for the normal law)."""
        if self.kind == "uniform":
            lo = np.broadcast_to(np.array(self.lower), (p,)) if len(self.lower) in (1, p) else None
            hi = np.broadcast_to(np.array(self.upper), (p,)) if len(self.upper) in (1, p) else None
            if lo is None:
                raise ParameterError(f"uniform density has {len(self.lower)} bounds, asked for dimension {p}")
            return lo.astype(float).copy(), hi.astype(float).copy()
        if self.kind == "beta":
            return np.zeros(p), np.ones(p)
        return np.full(p, -np.inf), np.full(p, np.inf)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Map an ``(n, p)`` array of probabilities through the marginal inverse CDFs."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.box(u.shape[-1])
            return lo + (hi - lo) * u
        if self.kind == "beta":
            return beta_ppf(u, self.alpha, self.beta)
        return normal_ppf(u)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "uniform":
            d.update(lower=list(self.lower), upper=list(self.upper))
        elif self.kind == "beta":
            d.update(alpha=self.alpha, beta=self.beta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProductDensity":
        kind = d.get("kind")
        if kind == "uniform":
            return cls.uniform(d.get("lower", 0.0), d.get("upper", 1.0))
        if kind == "beta":
            return cls.beta_law(d["alpha"], d["beta"])
        if kind == "normal":
            return cls.normal()
        raise ParameterError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------------------------
# 1-D inverse CDFs


def beta_ppf(u, a: float, b: float, max_iter: int = 200) -> np.ndarray:
    """Inverse regularized incomplete beta function, elementwise.

    Bisection on ``betainc`` with Newton steps accepted only when they land
    strictly inside the current bracket, so every element converges and the
    output depends on nothing but ``u``. The starting bracket comes from a
    coarse table of the same inverse, which cuts the iteration count for
    large QMC point sets.
    """
    u = np.asarray(u, dtype=float)
    flat = u.ravel()
    grid_u, grid_x = _beta_table(float(a), float(b))
    k = np.clip(np.searchsorted(grid_u, flat, side="right") - 1, 0, grid_u.size - 2)
    lo, hi = grid_x[k].copy(), grid_x[k + 1].copy()
    x = _bracketed_beta_inverse(flat, a, b, lo, hi, max_iter)
    x = np.where(flat <= 0, 0.0, np.where(flat >= 1, 1.0, x))
    return x.reshape(u.shape)


def _bracketed_beta_inverse(u, a, b, lo, hi, max_iter):
    x = 0.5 * (lo + hi)
    log_norm = special.betaln(a, b)
    active = np.arange(u.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        xa, ua = x[active], u[active]
        F = special.betainc(a, b, xa) - ua
        below = F < 0
        lo[active] = np.where(below, xa, lo[active])
        hi[active] = np.where(below, hi[active], xa)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            dens = np.exp((a - 1) * np.log(xa) + (b - 1) * np.log1p(-xa) - log_norm)
            newton = xa - F / dens
        la, ha = lo[active], hi[active]
        ok = np.isfinite(newton) & (newton > la) & (newton < ha)
        x_new = np.where(ok, newton, 0.5 * (la + ha))
        # stop once the iterate stops moving or the bracket has collapsed
        done = (F == 0) | (np.abs(x_new - xa) <= 2e-16 * np.maximum(xa, 1e-300)) | (ha - la <= 4e-16 * ha)
        x[active] = np.where(F == 0, xa, x_new)
        active = active[~done]
    return x


@functools.lru_cache(maxsize=16)
def _beta_table(a: float, b: float, size: int = 513):
    grid_u = np.linspace(0.0, 1.0, size)
    inner = _bracketed_beta_inverse(grid_u[1:-1].copy(), a, b, np.zeros(size - 2), np.ones(size - 2), 400)
    grid_x = np.concatenate(([0.0], inner, [1.0]))
    grid_x.setflags(write=False)
    return grid_u, grid_x


# Acklam's rational approximation to the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_ppf(u) -> np.ndarray:
    """Standard normal quantile: rational approximation plus one Halley correction."""
    u = np.asarray(u, dtype=float)
    x = np.empty_like(u)
    low = u < _P_LOW
    high = u > 1 - _P_LOW
    mid = ~(low | high)

    q = u[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
    x[mid] = num / den

    for mask, sign, pv in ((low, 1.0, u[low]), (high, -1.0, 1 - u[high])):
        q = np.sqrt(-2 * np.log(pv))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        x[mask] = sign * num / den

    with np.errstate(over="ignore", invalid="ignore"):
        # residual from the nearer tail, so 1 - Phi does not cancel for u near 1
        upper = u > 0.5
        e = np.where(upper, (1 - u) - 0.5 * special.erfc(x / np.sqrt(2)), 0.5 * special.erfc(-x / np.sqrt(2)) - u)
        d = e * np.sqrt(2 * np.pi) * np.exp(0.5 * x * x)
        refined = x - d / (1 + 0.5 * x * d)
    return np.where(np.isfinite(refined), refined, x)


# ---------------------------------------------------------------------------
# sample sets


@dataclass(frozen=True)
class SampleSet:
    """``N`` draws from a product density, stored as an ``(N, p)`` array."""

    points: np.ndarray
    seed: int
    density: ProductDensity = field(default_factory=ProductDensity)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ParameterError(f"sample set needs shape (N>=1, p>=1), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("sample coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> Path:
        """Write ``x1..xp`` columns plus a ``.json`` sidecar with seed and density."""
        path = Path(path)
        header = ",".join(f"x{i + 1}" for i in range(self.dim))
        np.savetxt(path, self.points, delimiter=",", header=header, comments="", fmt="%.17g")
        meta = {"seed": int(self.seed), "density": self.density.to_dict(), "n": len(self), "p": self.dim}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        path = Path(path)
        pts = read_points_csv(path)
        side = path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
            return cls(pts, int(meta.get("seed", 0)), ProductDensity.from_dict(meta["density"]))
        return cls(pts, 0)


def read_points_csv(path) -> np.ndarray:
    """Numeric rows of a CSV file; ``#`` comment lines and a header row are skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if lines:
        try:
            [float(v) for v in lines[0].split(",")]
        except ValueError:
            lines = lines[1:]
    if not lines:
        raise ParameterError(f"no data rows in {path}")
    try:
        pts = np.array([[float(v) for v in ln.split(",")] for ln in lines])
    except ValueError as exc:
        raise ParameterError(f"non-numeric or ragged data in {path}: {exc}") from exc
    return pts


def sample(density: ProductDensity, p: int, n: int, seed: int) -> SampleSet:
    """Draw ``n`` iid points in dimension ``p``; bitwise reproducible for a given seed."""
    if p < 1 or n < 1:
        raise ParameterError(f"need p >= 1 and N >= 1, got p={p}, N={n}")
    if seed < 0:
        raise ParameterError("seed must be non-negative")
    density.box(p)  # validates the bound count against p
    streams = SeedSequence(int(seed)).spawn(p)
    u = np.empty((n, p))
    for i, child in enumerate(streams):
        u[:, i] = Generator(Philox(child)).random(n) + _HALF_ULP
    return SampleSet(density.ppf(u), int(seed), density)


def pdf(density: ProductDensity, x) -> np.ndarray | float:
    """Joint density at one point or at each row of an ``(n, p)`` array.

    Points outside the support get density 0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    p = x.shape[1]
    if density.kind == "uniform":
        lo, hi = density.box(p)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        out = np.where(inside, 1.0 / np.prod(hi - lo), 0.0)
    elif density.kind == "beta":
        a, b = density.alpha, density.beta
        inside = np.all((x >= 0) & (x <= 1), axis=1)
        xc = np.clip(x, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = (a - 1) * np.log(xc) + (b - 1) * np.log1p(-xc) - special.betaln(a, b)
        out = np.where(inside, np.exp(logs.sum(axis=1)), 0.0)
    else:
        out = np.exp(-0.5 * np.sum(x * x, axis=1)) / (2 * np.pi) ** (p / 2)
    return float(out[0]) if single else out


def bounding_box(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension minimum and maximum of a sample set or ``(N, p)`` array."""
    pts = X.points if isinstance(X, SampleSet) else np.asarray(X, dtype=float)
    pts = np.atleast_2d(pts)
    if pts.shape[0] == 0:
        raise PreconditionError("bounding box of an empty sample set")
    return pts.min(axis=0), pts.max(axis=0)
