"""
Model oracles for the two benchmark problems.

* ``quadrature_test``: the product-power function whose integral over the
  uniform unit cube is exactly 1.
* A stochastic diffusion problem ``-div(a grad u) = f`` on the unit square
  with ``u = 0`` on the boundary. The log-diffusivity is a truncated
  Karhunen-Loeve expansion of a squared-exponential covariance; the PDE is
  discretized by 5-point finite differences and solved with conjugate
  gradients.

Grids: the solver uses ``n x n`` interior nodes, ``h = 1/(n+1)``. Nodal
fields that include the boundary have shape ``(n+2, n+2)`` and are indexed
``[ix, iy]``. Solutions are returned as interior values flattened
row-major (``m = n*n``); boundary zeros are added only on export.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.random import Generator, Philox
from scipy.interpolate import RegularGridInterpolator

from .cut_hdmr import ModelOracle
from .errors import ConvergenceError, DomainError, ParameterError

log = logging.getLogger(__name__)

KL_MAX_GRID = 31
DIFFUSION_SCALE = 1.2
DIFFUSION_PREFACTOR = 0.1
CORRELATION_PARAM = 0.5


# ---------------------------------------------------------------------------
# quadrature test function


def quadrature_test(x, p: int | None = None) -> np.ndarray:
    """``(1 + 1/p)^p * prod(x_i^(1/p))`` for one point or each row of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    p = x.shape[1] if p is None else p
    if x.shape[1] != p:
        raise ParameterError(f"expected dimension {p}, got {x.shape[1]}")
    if np.any(x < 0):
        raise DomainError("quadrature test function is undefined for negative coordinates")
    out = (1.0 + 1.0 / p) ** p * np.prod(x ** (1.0 / p), axis=1)
    return out[0] if single else out


def quadrature_oracle(p: int = 6) -> ModelOracle:
    return ModelOracle(lambda X: quadrature_test(X, p), p, 1, reentrant=True, name="quadrature")


# ---------------------------------------------------------------------------
# Karhunen-Loeve basis


@dataclass(frozen=True)
class KLBasis:
    """Dominant eigenpairs of the covariance on a closed ``(n+2)^2`` node grid.

    ``values`` are continuum-scaled (``h^2`` times the matrix eigenvalues);
    ``modes[k]`` is normalized so that ``h^2 * sum(modes[k]**2) == 1``.
    """

    n: int
    values: np.ndarray
    modes: np.ndarray
    residuals: np.ndarray
    iterations: int

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 2)


def covariance_matrix(n: int, corr: float = CORRELATION_PARAM) -> np.ndarray:
    """Dense ``exp(-|x - x'|^2 / corr)`` over all nodes of the closed grid."""
    g = np.linspace(0.0, 1.0, n + 2)
    X, Y = np.meshgrid(g, g, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    d2 = (P[:, None, 0] - P[None, :, 0]) ** 2 + (P[:, None, 1] - P[None, :, 1]) ** 2
    return np.exp(-d2 / corr)


def kl_decompose(n: int, p: int, corr: float = CORRELATION_PARAM, tol: float = 1e-10,
                 max_iter: int = 5000, guard: int = 6, seed: int = 0) -> KLBasis:
    """Top-``p`` eigenpairs by block power iteration with locking.

    The block carries ``guard`` extra columns so that clusters of equal
    eigenvalues straddling index ``p`` still converge. A column is locked
    (deflated out of further iterations) once it and every column before
    it have a residual ``|C v - mu v| <= tol * mu_1``.
    """
    C = covariance_matrix(n, corr)
    N = C.shape[0]
    if not 1 <= p <= N:
        raise ParameterError(f"need 1 <= p <= {N} KL terms, got {p}")
    b = min(N, p + guard)
    rng = Generator(Philox(seed))
    Q, _ = np.linalg.qr(rng.standard_normal((N, b)))
    locked = np.empty((N, 0))
    locked_mu = []
    res = np.full(b, np.inf)
    it = 0
    while locked.shape[1] < p:
        if it >= max_iter:
            raise ConvergenceError(f"KL eigensolver did not converge in {max_iter} iterations; residuals {res}",
                                   history=res)
        it += 1
        if locked.shape[1]:
            Q = Q - locked @ (locked.T @ Q)
            Q, _ = np.linalg.qr(Q)
        Z = C @ Q
        H = Q.T @ Z
        mu, S = np.linalg.eigh(0.5 * (H + H.T))
        order = np.argsort(mu)[::-1]
        mu, S = mu[order], S[:, order]
        V = Q @ S
        CV = Z @ S
        res = np.linalg.norm(CV - V * mu, axis=0)
        scale = locked_mu[0] if locked_mu else mu[0]
        k = 0
        while k < V.shape[1] and locked.shape[1] + k < p and res[k] <= tol * scale:
            k += 1
        if k:
            locked = np.column_stack([locked, V[:, :k]])
            locked_mu.extend(mu[:k].tolist())
        Q, _ = np.linalg.qr(CV[:, k:])
    h = 1.0 / (n + 1)
    mu = np.array(locked_mu)
    order = np.argsort(mu, kind="stable")[::-1]
    vecs = locked[:, order]
    # deterministic sign: largest-magnitude entry positive
    for j in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] = -vecs[:, j]
    final_res = np.linalg.norm(C @ vecs - vecs * mu[order], axis=0)
    modes = (vecs / h).T.reshape(p, n + 2, n + 2)
    return KLBasis(n, h * h * mu[order], modes, final_res, it)


# ---------------------------------------------------------------------------
# diffusion problem


def default_source(x, y):
    return 4.0 + np.sin(2 * np.pi * x) * np.sin(4 * np.pi * y)


@dataclass(frozen=True)
class DiffusionProblem:
    """Grid, KL basis and constants of the stochastic diffusion problem.

    Build with :meth:`create`. ``modes`` are the KL eigenfunctions sampled
    on the solver's closed grid (interpolated bilinearly when the KL basis
    was computed on a coarser grid).
    """

    n: int
    p: int
    kl: KLBasis
    modes: np.ndarray
    scale: float = DIFFUSION_SCALE
    prefactor: float = DIFFUSION_PREFACTOR
    face: str = "arithmetic"
    tol: float = 1e-10
    source: Callable = field(default=default_source, compare=False)

    @classmethod
    def create(cls, n: int = 63, p: int = 5, kl_grid: int | None = None, corr: float = CORRELATION_PARAM,
               face: str = "arithmetic", tol: float = 1e-10, source: Callable = default_source) -> "DiffusionProblem":
        if n < 1:
            raise ParameterError("need at least one interior node")
        if face not in ("arithmetic", "harmonic"):
            raise ParameterError(f"face coefficient must be 'arithmetic' or 'harmonic', got {face!r}")
        kn = min(n, KL_MAX_GRID) if kl_grid is None else kl_grid
        kl = kl_decompose(kn, p, corr)
        if kn == n:
            modes = kl.modes.copy()
        else:
            g = np.linspace(0.0, 1.0, n + 2)
            X, Y = np.meshgrid(g, g, indexing="ij")
            modes = np.stack([RegularGridInterpolator((kl.grid, kl.grid), kl.modes[k])((X, Y))
                              for k in range(p)])
        modes.setflags(write=False)
        return cls(n, p, kl, modes, face=face, tol=tol, source=source)

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def m(self) -> int:
        return self.n * self.n

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 2)

    def metadata(self) -> dict:
        return {
            "n": self.n, "p": self.p, "h": self.h, "m": self.m, "kl_grid": self.kl.n,
            "kl_eigenvalues": self.kl.values.tolist(), "scale": self.scale, "prefactor": self.prefactor,
            "face": self.face, "tol": self.tol,
            "kl_normalization": "lambda = h^2 * matrix eigenvalue; h^2 * sum(mode^2) = 1 on the KL grid",
        }


def assemble_diffusion(problem: DiffusionProblem, xi) -> np.ndarray:
    """Nodal diffusion coefficient on the closed grid, shape ``(n+2, n+2)``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (problem.p,):
        raise ParameterError(f"expected {problem.p} random inputs, got shape {xi.shape}")
    coef = np.sqrt(problem.kl.values) * xi
    expo = np.tensordot(coef, problem.modes, axes=1)
    return problem.prefactor * np.exp(problem.scale * expo)


def diffusion_matrix(a: np.ndarray, h: float, face: str = "arithmetic") -> sp.csr_matrix:
    """5-point matrix of ``-div(a grad .)`` on interior nodes, ``u = 0`` on the boundary."""
    n = a.shape[0] - 2
    c = a[1:-1, 1:-1]
    if face == "arithmetic":
        mean = lambda s, t: 0.5 * (s + t)  # noqa: E731
    else:
        mean = lambda s, t: 2.0 * s * t / (s + t)  # noqa: E731
    east, west = mean(c, a[2:, 1:-1]), mean(c, a[:-2, 1:-1])
    north, south = mean(c, a[1:-1, 2:]), mean(c, a[1:-1, :-2])
    idx = np.arange(n * n).reshape(n, n)
    rows = [idx.ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel()]
    cols = [idx.ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel()]
    vals = [(east + west + north + south).ravel(), -east[:-1, :].ravel(), -west[1:, :].ravel(),
            -north[:, :-1].ravel(), -south[:, 1:].ravel()]
    A = sp.csr_matrix((np.concatenate(vals) / (h * h), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n * n, n * n))
    A.sort_indices()
    return A


def _norm(v):
    return float(np.sqrt((v * v).sum()))


def conjugate_gradient(A, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None):
    """Unpreconditioned CG from a zero start.

    Returns ``(x, iterations, history)``. Convergence is declared on the
    true residual ``|b - Ax| / |b|``; if the recursively updated residual
    drifted, the iteration restarts from the current iterate.
    """
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros_like(b)
    bnorm = _norm(b)
    if bnorm == 0.0:
        return x, 0, [0.0]
    r = b.copy()
    p = r.copy()
    rr = (r * r).sum()
    history = [1.0]
    it = 0
    while it < max_iter:
        Ap = A @ p
        alpha = rr / (p * Ap).sum()
        x += alpha * p
        r -= alpha * Ap
        rr_new = (r * r).sum()
        it += 1
        rel = np.sqrt(rr_new) / bnorm
        history.append(float(rel))
        if rel <= tol:
            true_rel = _norm(b - A @ x) / bnorm
            if true_rel <= tol:
                return x, it, history
            r = b - A @ x
            p = r.copy()
            rr = (r * r).sum()
            continue
        p *= rr_new / rr
        p += r
        rr = rr_new
    raise ConvergenceError(f"CG did not reach relative residual {tol} in {max_iter} iterations "
                           f"(last {history[-1]:.3e})", history=history)


def solve_field(a: np.ndarray, f_interior: np.ndarray, tol: float = 1e-10, face: str = "arithmetic",
                max_iter: int | None = None):
    """Solve with a given nodal coefficient and interior source; returns ``(u, iterations, residual)``."""
    n = a.shape[0] - 2
    A = diffusion_matrix(a, 1.0 / (n + 1), face)
    b = np.ascontiguousarray(f_interior, dtype=float).ravel()
    u, its, hist = conjugate_gradient(A, b, tol, 10 * n * n if max_iter is None else max_iter)
    residual = _norm(b - A @ u) / _norm(b)
    if residual > tol:
        raise ConvergenceError(f"linear solve returned with relative residual {residual:.3e}", history=hist)
    return u.reshape(n, n), its, residual


def interior_source(problem: DiffusionProblem, source: Callable | None = None) -> np.ndarray:
    g = problem.grid[1:-1]
    X, Y = np.meshgrid(g, g, indexing="ij")
    return (source or problem.source)(X, Y)


def solve(problem: DiffusionProblem, xi, source: Callable | None = None) -> np.ndarray:
    """Interior solution for one random input, flattened row-major (length ``n*n``)."""
    a = assemble_diffusion(problem, xi)
    u, _, _ = solve_field(a, interior_source(problem, source), problem.tol, problem.face)
    return u.ravel()


def diffusion_oracle(problem: DiffusionProblem) -> ModelOracle:
    f_int = interior_source(problem)

    def run(X):
        out = np.empty((X.shape[0], problem.m))
        for k, xi in enumerate(X):
            a = assemble_diffusion(problem, xi)
            u, _, _ = solve_field(a, f_int, problem.tol, problem.face)
            out[k] = u.ravel()
        return out

    return ModelOracle(run, problem.p, problem.m, reentrant=True, name="diffusion")


def with_boundary(u_interior: np.ndarray, n: int) -> np.ndarray:
    full = np.zeros((n + 2, n + 2))
    full[1:-1, 1:-1] = np.asarray(u_interior).reshape(n, n)
    return full


def export_field_csv(path, field_values: np.ndarray, n: int) -> None:
    """Write ``x,y,value`` rows over the closed grid.

    ``field_values`` is either a closed-grid ``(n+2, n+2)`` array (e.g. a
    diffusion coefficient) or interior values, which get zero boundary.
    """
    v = np.asarray(field_values, dtype=float)
    if v.size == n * n:
        v = with_boundary(v, n)
    v = v.reshape(n + 2, n + 2)
    g = np.linspace(0.0, 1.0, n + 2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u"])
        for i in range(n + 2):
            for j in range(n + 2):
                w.writerow([repr(float(g[i])), repr(float(g[j])), repr(float(v[i, j]))])
