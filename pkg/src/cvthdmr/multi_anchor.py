"""
Multiple-anchor surrogates: one cut-HDMR expansion per CVT centroid.

A query is answered by the expansion whose anchor is nearest (lowest index
on ties). The averaging baseline and the single-anchor baselines live here
too; a single-anchor surrogate is just a model with one expansion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .cut_hdmr import CutHdmrExpansion, ModelOracle, build_expansion, select_nodes
from .cvt import VoronoiPartition, assign, lloyd, squared_distances
from .errors import ParameterError, PreconditionError
from .parameter_space import SampleSet, bounding_box

log = logging.getLogger(__name__)

NODE_SCOPES = ("global", "cluster")


@dataclass
class CvtHdmrModel:
    """``L`` expansions plus the anchors used for nearest-anchor dispatch."""

    expansions: list
    partition: VoronoiPartition | None = None
    node_scope: str = "global"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.expansions:
            raise ParameterError("a model needs at least one expansion")
        dims = {(e.p, e.m, e.order) for e in self.expansions}
        if len(dims) != 1:
            raise ParameterError(f"expansions disagree on (p, m, r): {sorted(dims)}")
        self.anchors = np.array([e.anchor for e in self.expansions])
        self.anchors.setflags(write=False)

    @property
    def L(self) -> int:
        return len(self.expansions)

    @property
    def p(self) -> int:
        return self.expansions[0].p

    @property
    def m(self) -> int:
        return self.expansions[0].m

    @property
    def order(self) -> int:
        return self.expansions[0].order

    @property
    def total_evals(self) -> int:
        return int(sum(e.build_evals for e in self.expansions))

    def dispatch(self, x) -> np.ndarray:
        """Index of the expansion used for each row of ``x``."""
        return assign(np.atleast_2d(np.asarray(x, dtype=float)), self.anchors)

    def weights(self, x) -> np.ndarray:
        """One-hot ``(M, L)`` selection weights."""
        lab = self.dispatch(x)
        w = np.zeros((lab.size, self.L))
        w[np.arange(lab.size), lab] = 1.0
        return w

    def predict_orders(self, x, order: int | None = None) -> np.ndarray:
        """Per-order contributions of the dispatched expansion, ``(order + 1, M, m)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        order = self.order if order is None else min(int(order), self.order)
        lab = self.dispatch(x)
        out = np.empty((order + 1, x.shape[0], self.m))
        for l, e in enumerate(self.expansions):
            idx = np.flatnonzero(lab == l)
            if idx.size:
                out[:, idx] = e.order_contributions(x[idx], order)
        return out

    def predict(self, x, order: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        lab = self.dispatch(x2)
        out = np.empty((x2.shape[0], self.m))
        for l, e in enumerate(self.expansions):
            idx = np.flatnonzero(lab == l)
            if idx.size:
                out[idx] = e.evaluate(x2[idx], order)
        return out[0] if single else out

    __call__ = predict

    def predict_average(self, x, order: int | None = None) -> np.ndarray:
        """Plain mean of all expansions (the averaging baseline)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        acc = np.zeros((x2.shape[0], self.m))
        for e in self.expansions:
            acc += e.evaluate(x2, order)
        acc /= self.L
        return acc[0] if single else acc

    def average_orders(self, x, order: int | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acc = None
        for e in self.expansions:
            c = e.order_contributions(x, order)
            acc = c if acc is None else acc + c
        return acc / self.L

    def to_dict(self) -> dict:
        summary = None
        if self.partition is not None:
            summary = self.partition.summary()
        return {
            "L": self.L,
            "p": self.p,
            "m": self.m,
            "r": self.order,
            "node_scope": self.node_scope,
            "metadata": self.metadata,
            "partition": summary,
        }


def _node_box(X: np.ndarray, anchor: np.ndarray, fallback=None):
    lo, hi = bounding_box(X)
    if fallback is not None:
        flat = lo >= hi
        lo = np.where(flat, fallback[0], lo)
        hi = np.where(flat, fallback[1], hi)
    return np.minimum(lo, anchor), np.maximum(hi, anchor)


def node_sets_for(anchor, box, K: int) -> list:
    lo, hi = box
    return [select_nodes(float(lo[i]), float(hi[i]), float(anchor[i]), K, i) for i in range(anchor.size)]


def build(oracle: ModelOracle, X, L: int, r: int, K: int = 7, node_scope: str = "global",
          seed: int = 0, explicit: bool = False, tol: float = 1e-9, max_iter: int = 500) -> CvtHdmrModel:
    """Cluster ``X`` into ``L`` cells and build one expansion per centroid.

    ``node_scope="global"`` spreads every anchor's nodes over the bounding
    box of all of ``X``; ``"cluster"`` uses the bounding box of that
    anchor's own cell.
    """
    pts = X.points if isinstance(X, SampleSet) else np.atleast_2d(np.asarray(X, dtype=float))
    if node_scope not in NODE_SCOPES:
        raise ParameterError(f"node_scope must be one of {NODE_SCOPES}, got {node_scope!r}")
    if not 1 <= r <= pts.shape[1]:
        raise ParameterError(f"truncation order must satisfy 1 <= r <= p, got {r}")
    if not explicit and K < 3:
        raise ParameterError(f"need K >= 3 nodes per dimension, got {K}")
    part = lloyd(pts, L, seed=seed, tol=tol, max_iter=max_iter)
    global_box = bounding_box(pts)
    expansions = []
    for l in range(L):
        anchor = part.centroids[l]
        node_sets = None
        if not explicit:
            if node_scope == "global":
                box = _node_box(pts, anchor)
            else:
                box = _node_box(pts[part.assignments == l], anchor, fallback=global_box)
            node_sets = node_sets_for(anchor, box, K)
        expansions.append(build_expansion(oracle, anchor, node_sets, r, explicit=explicit))
    model = CvtHdmrModel(expansions, part, node_scope,
                         {"seed": int(seed), "r": int(r), "K": int(K), "L": int(L),
                          "explicit": bool(explicit), "N": int(pts.shape[0])})
    model.metadata["total_evals"] = model.total_evals
    log.info("built CVT-HDMR L=%d r=%d K=%d scope=%s with %d evaluations",
             L, r, K, node_scope, model.total_evals)
    return model


def build_single(oracle: ModelOracle, anchor, X, r: int, K: int = 7, explicit: bool = False,
                 label: str = "single") -> CvtHdmrModel:
    """One-expansion model at a given anchor, nodes over the bounding box of ``X``."""
    pts = X.points if isinstance(X, SampleSet) else np.atleast_2d(np.asarray(X, dtype=float))
    anchor = np.array(anchor, dtype=float)
    node_sets = None if explicit else node_sets_for(anchor, _node_box(pts, anchor), K)
    exp = build_expansion(oracle, anchor, node_sets, r, explicit=explicit)
    return CvtHdmrModel([exp], None, "global",
                        {"anchor_strategy": label, "r": int(r), "K": int(K), "L": 1,
                         "explicit": bool(explicit), "total_evals": exp.build_evals})


def anchor_mean_point(oracle: ModelOracle | None, X, responses=None) -> tuple[np.ndarray, int]:
    """Sample whose response is closest to the mean response over ``X``.

    ``responses`` may be supplied; otherwise the oracle is evaluated on
    every sample (and those evaluations are counted by the oracle).
    Returns the point and its index.
    """
    pts = X.points if isinstance(X, SampleSet) else np.atleast_2d(np.asarray(X, dtype=float))
    if pts.shape[0] == 0:
        raise PreconditionError("mean-point anchor of an empty sample set")
    if responses is None:
        if oracle is None:
            raise ParameterError("need either an oracle or precomputed responses")
        responses = oracle(pts)
    resp = np.asarray(responses, dtype=float).reshape(pts.shape[0], -1)
    mean = resp.mean(axis=0)
    k = int(np.argmin(squared_distances(resp, mean[None, :])[:, 0]))
    return pts[k].copy(), k


def anchor_random(source, seed: int, from_samples: bool = False) -> np.ndarray:
    """Seeded random anchor.

    ``source`` is either a ``(lower, upper)`` box, drawn from uniformly, or
    a sample set; with ``from_samples`` one sample is picked uniformly,
    otherwise a uniform draw from the sample set's bounding box.
    """
    rng = Generator(Philox(int(seed)))
    if isinstance(source, tuple) and len(source) == 2 and not isinstance(source, SampleSet):
        lo, hi = (np.asarray(b, dtype=float) for b in source)
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise ParameterError("random anchors need a bounded box")
        return lo + (hi - lo) * rng.random(lo.size)
    pts = source.points if isinstance(source, SampleSet) else np.atleast_2d(np.asarray(source, dtype=float))
    if from_samples:
        return pts[int(rng.integers(pts.shape[0]))].copy()
    lo, hi = bounding_box(pts)
    return lo + (hi - lo) * rng.random(lo.size)
