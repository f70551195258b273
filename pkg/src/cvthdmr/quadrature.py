"""
Integration of surrogates against the input density, and error measures.

QMC integrals use the unscrambled Halton sequence (bases = first ``p``
primes), starting at index 1 so the origin (which the normal inverse CDF
would send to -inf) is never used, and mapped through the density's
inverse CDF.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .cut_hdmr import CutHdmrExpansion
from .errors import ParameterError, UnsupportedMethodError
from .multi_anchor import CvtHdmrModel
from .parameter_space import ProductDensity

QMC_POINTS = 2**20
REFERENCE_POINTS = 2**22
_CHUNK = 2**17


def halton_uniform(p: int, n: int, start: int = 1) -> np.ndarray:
    """Points ``start .. start+n-1`` of the unscrambled Halton sequence in ``[0, 1)^p``."""
    engine = qmc.Halton(d=p, scramble=False)
    if start:
        engine.fast_forward(start)
    return engine.random(n)


@functools.lru_cache(maxsize=4)
def qmc_points(density: ProductDensity, p: int, n: int = QMC_POINTS) -> np.ndarray:
    """Cached Halton points mapped to ``density`` (read-only)."""
    pts = np.empty((n, p))
    for lo in range(0, n, _CHUNK):
        k = min(_CHUNK, n - lo)
        pts[lo:lo + k] = density.ppf(halton_uniform(p, k, start=1 + lo))
    pts.setflags(write=False)
    return pts


def _as_function(surrogate) -> Callable:
    if isinstance(surrogate, CvtHdmrModel):
        return surrogate.predict
    if isinstance(surrogate, CutHdmrExpansion):
        return surrogate.evaluate
    if callable(surrogate):
        return surrogate
    raise ParameterError(f"cannot integrate object of type {type(surrogate).__name__}")


def _surrogate_dim(surrogate):
    if isinstance(surrogate, (CvtHdmrModel, CutHdmrExpansion)):
        return surrogate.p
    return getattr(surrogate, "p", None)


def qmc_mean(func: Callable, points: np.ndarray, chunk: int = _CHUNK) -> np.ndarray:
    """Average of ``func`` over the rows of ``points``; fixed chunk order."""
    total = None
    for lo in range(0, points.shape[0], chunk):
        vals = np.asarray(func(points[lo:lo + chunk]), dtype=float).reshape(min(chunk, points.shape[0] - lo), -1)
        s = vals.sum(axis=0)
        total = s if total is None else total + s
    return total / points.shape[0]


def integrate_surrogate(surrogate, density: ProductDensity, method: str = "qmc",
                        n_points: int = QMC_POINTS, gl_order: int = 20, p: int | None = None) -> np.ndarray:
    """Integral of a surrogate against ``density``, one value per output component.

    ``method="qmc"`` averages over Halton points; ``"per-term-tensor"``
    integrates every component term of a single expansion with tensor
    Gauss-Legendre on the uniform box (terms of order <= 3 only).
    """
    p = _surrogate_dim(surrogate) if p is None else p
    if p is None:
        raise ParameterError("pass p= when integrating a plain callable")
    if method == "qmc":
        return qmc_mean(_as_function(surrogate), qmc_points(density, p, n_points))
    if method == "per-term-tensor":
        return _per_term_tensor(surrogate, density, gl_order)
    raise ParameterError(f"unknown integration method {method!r}")


def integrate_orders(model: CvtHdmrModel, density: ProductDensity, n_points: int = QMC_POINTS,
                     average: bool = False, order: int | None = None) -> np.ndarray:
    """QMC integrals of each order's contribution, ``(order + 1, m)``.

    The cumulative sum over the first axis gives the integral of the model
    truncated at every order up to ``order`` in one pass.
    """
    pts = qmc_points(density, model.p, n_points)
    f = model.average_orders if average else model.predict_orders
    total = None
    for lo in range(0, pts.shape[0], _CHUNK):
        s = f(pts[lo:lo + _CHUNK], order).sum(axis=1)
        total = s if total is None else total + s
    return total / pts.shape[0]


def _per_term_tensor(surrogate, density, gl_order):
    if isinstance(surrogate, CvtHdmrModel):
        if surrogate.L != 1:
            raise UnsupportedMethodError("per-term-tensor integration needs a single expansion")
        surrogate = surrogate.expansions[0]
    if not isinstance(surrogate, CutHdmrExpansion):
        raise UnsupportedMethodError("per-term-tensor integration needs a cut-HDMR expansion")
    if density.kind != "uniform":
        raise UnsupportedMethodError("per-term-tensor integration supports the uniform density only")
    if surrogate.order > 3:
        raise UnsupportedMethodError("per-term-tensor integration handles terms of order <= 3")
    lo, hi = density.box(surrogate.p)
    x, w = leggauss(gl_order)
    w = w / 2.0  # probability weights on each interval
    total = surrogate.f0.copy()
    for s in range(1, surrogate.order + 1):
        for u in itertools.combinations(range(surrogate.p), s):
            axes = [lo[i] + (hi[i] - lo[i]) * (x + 1) / 2 for i in u]
            coords = np.array(list(itertools.product(*axes)))
            weights = np.prod(np.array(list(itertools.product(*([w] * s)))), axis=1)
            vals = surrogate.eval_component(u, coords)
            total = total + weights @ vals
    return total


def relative_integral_error(reference, value) -> float:
    """``|reference - value| / |reference|`` (Euclidean norm for vector responses)."""
    ref = np.atleast_1d(np.asarray(reference, dtype=float))
    val = np.atleast_1d(np.asarray(value, dtype=float))
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise ZeroDivisionError("relative error with a zero reference integral")
    return float(np.linalg.norm(ref - val)) / denom


@dataclass(frozen=True)
class ReferenceIntegral:
    value: np.ndarray
    first_half: np.ndarray
    second_half: np.ndarray

    @property
    def discrepancy(self) -> float:
        """Relative gap between the two half-sequence estimates."""
        return float(np.linalg.norm(self.first_half - self.second_half) / np.linalg.norm(self.value))


def reference_integral(func: Callable, density: ProductDensity, p: int,
                       n_points: int = REFERENCE_POINTS) -> ReferenceIntegral:
    """High-resolution QMC integral of a model, with a half-sequence diagnostic."""
    if n_points < 2 or n_points % 2:
        raise ParameterError("reference integral needs an even number of points")
    half = n_points // 2
    sums = []
    for start in (1, 1 + half):
        total = None
        for lo in range(0, half, _CHUNK):
            k = min(_CHUNK, half - lo)
            pts = density.ppf(halton_uniform(p, k, start=start + lo))
            vals = np.asarray(func(pts), dtype=float).reshape(k, -1).sum(axis=0)
            total = vals if total is None else total + vals
        sums.append(total)
    return ReferenceIntegral((sums[0] + sums[1]) / n_points, sums[0] / half, sums[1] / half)


@dataclass(frozen=True)
class ErrorReport:
    """Error summary for one surrogate.

    ``E`` and ``V`` are the sample mean and unbiased sample variance of the
    relative squared error over ``n_samples`` test points; ``excluded``
    counts test points with a zero response norm.
    """

    epsilon: float = float("nan")
    E: float = float("nan")
    V: float = float("nan")
    n_samples: int = 0
    excluded: int = 0
    method: str = ""


def relative_squared_errors(truth, approx) -> tuple[np.ndarray, int]:
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    approx = np.asarray(approx, dtype=float).reshape(truth.shape)
    num = np.einsum("ij,ij->i", truth - approx, truth - approx)
    den = np.einsum("ij,ij->i", truth, truth)
    keep = den > 0
    return num[keep] / den[keep], int((~keep).sum())


def error_stats_from_responses(truth, approx, method: str = "") -> ErrorReport:
    rho, excluded = relative_squared_errors(truth, approx)
    if rho.size == 0:
        raise ParameterError("no test sample has a non-zero response")
    V = float(rho.var(ddof=1)) if rho.size > 1 else 0.0
    return ErrorReport(E=float(rho.mean()), V=V, n_samples=int(rho.size), excluded=excluded, method=method)


def error_stats(model, oracle, test_set, method: str = "", predictor: Callable | None = None) -> ErrorReport:
    """Mean and variance of ``|u - u_hat|^2 / |u|^2`` over a test set.

    ``predictor`` overrides how the model is queried (e.g.
    ``model.predict_average``).
    """
    pts = test_set.points if hasattr(test_set, "points") else np.atleast_2d(np.asarray(test_set, dtype=float))
    predict = predictor or _as_function(model)
    return error_stats_from_responses(oracle(pts), predict(pts), method)
