"""
Centroidal Voronoi tessellation of a finite sample set (Lloyd iteration).

Clusters are numbered from 0 internally; exported tables use 1-based
cluster labels.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox

from .errors import ParameterError, PreconditionError
from .parameter_space import SampleSet, bounding_box

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 500


class EmptyClusterError(PreconditionError):
    """Raised by :func:`centroids` when some cluster has no members."""

    def __init__(self, empty):
        super().__init__(f"empty clusters: {list(empty)}")
        self.empty = list(empty)


def _points(X) -> np.ndarray:
    return X.points if isinstance(X, SampleSet) else np.atleast_2d(np.asarray(X, dtype=float))


def squared_distances(X, generators) -> np.ndarray:
    """``(N, L)`` squared Euclidean distances, computed by explicit differences.

    The expanded ``|x|^2 - 2 x.z + |z|^2`` form is avoided because its
    rounding can flip ties between equidistant generators.
    """
    pts = _points(X)
    gen = np.atleast_2d(np.asarray(generators, dtype=float))
    if gen.shape[1] != pts.shape[1]:
        raise ParameterError(f"generators have dimension {gen.shape[1]}, samples {pts.shape[1]}")
    out = np.empty((pts.shape[0], gen.shape[0]))
    for l, z in enumerate(gen):
        d = pts - z
        out[:, l] = np.einsum("ij,ij->i", d, d)
    return out


def assign(X, generators) -> np.ndarray:
    """Index of the nearest generator for every sample (lowest index wins ties)."""
    gen = np.atleast_2d(np.asarray(generators, dtype=float))
    if gen.shape[0] < 1:
        raise ParameterError("need at least one generator")
    return np.argmin(squared_distances(X, gen), axis=1)


def centroids(X, assignments, L: int) -> np.ndarray:
    """Arithmetic mean of each cluster, as an ``(L, p)`` array."""
    pts = _points(X)
    assignments = np.asarray(assignments)
    counts = np.bincount(assignments, minlength=L)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClusterError(empty)
    out = np.empty((L, pts.shape[1]))
    for l in range(L):
        out[l] = pts[assignments == l].sum(axis=0) / counts[l]
    return out


def energy(X, assignments, generators) -> tuple[np.ndarray, float]:
    """Per-cluster Voronoi energies and their total."""
    pts = _points(X)
    gen = np.atleast_2d(np.asarray(generators, dtype=float))
    assignments = np.asarray(assignments)
    d = pts - gen[assignments]
    per_sample = np.einsum("ij,ij->i", d, d)
    per_cluster = np.array([per_sample[assignments == l].sum() for l in range(gen.shape[0])])
    return per_cluster, float(per_cluster.sum())


@dataclass(frozen=True)
class VoronoiPartition:
    """Result of a Lloyd run.

    ``history`` holds the total energy after every centroid update, so a
    caller can check that it never increased.
    """

    assignments: np.ndarray
    centroids: np.ndarray
    counts: np.ndarray
    energies: np.ndarray
    total_energy: float
    converged: bool = True
    iterations: int = 0
    history: tuple = field(default=())

    @property
    def L(self) -> int:
        return self.centroids.shape[0]

    def members(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == l)

    def summary(self) -> dict:
        return {
            "L": self.L,
            "centroids": self.centroids.tolist(),
            "counts": self.counts.tolist(),
            "energies": self.energies.tolist(),
            "total_energy": self.total_energy,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def write_assignments_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point_index", "cluster"])
            for i, l in enumerate(self.assignments):
                w.writerow([i, int(l) + 1])

    def write_centroids_csv(self, path) -> None:
        p = self.centroids.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster", *(f"x{i + 1}" for i in range(p)), "count", "energy"])
            for l in range(self.L):
                w.writerow([l + 1, *(repr(float(v)) for v in self.centroids[l]),
                            int(self.counts[l]), repr(float(self.energies[l]))])


def farthest_point_init(pts: np.ndarray, L: int, seed: int) -> np.ndarray:
    """Greedy farthest-point seeding.

    The first generator is the sample nearest to a seeded uniform draw in
    the bounding box; each next one is the sample farthest from all chosen
    so far. Nothing depends on sample order except exact distance ties.
    """
    lo, hi = bounding_box(pts)
    start = lo + (hi - lo) * Generator(Philox(int(seed))).random(pts.shape[1])
    chosen = [int(np.argmin(squared_distances(pts, start[None, :])[:, 0]))]
    dmin = squared_distances(pts, pts[chosen[0]][None, :])[:, 0]
    for _ in range(1, L):
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, squared_distances(pts, pts[nxt][None, :])[:, 0])
    return pts[chosen].copy()


def _repair_empty(pts, labels, gens, empty):
    # move the sample farthest from its generator into each empty cluster
    for l in empty:
        d = pts - gens[labels]
        dist = np.einsum("ij,ij->i", d, d)
        counts = np.bincount(labels, minlength=gens.shape[0])
        dist[counts[labels] <= 1] = -1.0  # never empty another cluster
        k = int(np.argmax(dist))
        gens[l] = pts[k]
        labels[k] = l
    return labels, gens


def lloyd(X, L: int, seed: int = 0, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          init=None) -> VoronoiPartition:
    """Lloyd iteration to a centroidal Voronoi tessellation of ``X``.

    Parameters
    ----------
    X : SampleSet or array of shape (N, p)
    L : int
        Number of clusters, ``1 <= L <= N``.
    seed : int
        Seeds the farthest-point initialisation.
    tol : float
        Stop when no centroid moves more than this (Euclidean).
    max_iter : int
        Iteration cap; hitting it returns the current partition with
        ``converged=False``.
    init : array of shape (L, p), optional
        Explicit initial generators instead of farthest-point seeding.
    """
    pts = _points(X)
    N = pts.shape[0]
    if not 1 <= L <= N:
        raise ParameterError(f"cluster count must satisfy 1 <= L <= N={N}, got {L}")
    gens = farthest_point_init(pts, L, seed) if init is None else np.array(init, dtype=float)
    if gens.shape != (L, pts.shape[1]):
        raise ParameterError(f"initial generators must have shape {(L, pts.shape[1])}")

    history = []
    converged = False
    it = 0
    labels = assign(pts, gens)
    while it < max_iter:
        it += 1
        counts = np.bincount(labels, minlength=L)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            labels, gens = _repair_empty(pts, labels, gens, empty)
        new = centroids(pts, labels, L)
        shift = float(np.sqrt(np.max(np.sum((new - gens) ** 2, axis=1))))
        gens = new
        history.append(energy(pts, labels, gens)[1])
        new_labels = assign(pts, gens)
        if shift <= tol or (np.array_equal(new_labels, labels) and not empty.size):
            labels = new_labels
            converged = True
            break
        labels = new_labels

    # final labels are the Voronoi sets of the returned generators; the
    # generators are recomputed as their centroids so z_l = mean(X_l) holds
    counts = np.bincount(labels, minlength=L)
    if np.all(counts > 0):
        final = centroids(pts, labels, L)
        if float(np.sqrt(np.max(np.sum((final - gens) ** 2, axis=1)))) > tol:
            converged = False
        gens = final
    per_cluster, total = energy(pts, labels, gens)
    if not converged:
        log.warning("Lloyd iteration stopped after %d steps without converging", it)
    log.info("CVT L=%d: E_total=%.6g after %d iterations", L, total, it)
    return VoronoiPartition(
        assignments=labels,
        centroids=gens,
        counts=np.bincount(labels, minlength=L),
        energies=per_cluster,
        total_energy=total,
        converged=converged,
        iterations=it,
        history=tuple(history),
    )
