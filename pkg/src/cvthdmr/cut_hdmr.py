"""
Anchored (cut-) HDMR expansions with Lagrange-interpolated component terms.

An expansion is built around one anchor point. For every index set ``u``
with ``1 <= |u| <= r`` the model is sampled on the tensor grid of node
values along the dimensions in ``u``, every other coordinate pinned to the
anchor. A component term is the interpolated slice minus all of its lower
order sub-terms and the anchor response, so it vanishes whenever one of its
coordinates sits at the anchor value.

Responses are always 2-D arrays ``(n_points, m)`` internally; the public
evaluators return a 1-D response when handed a single point.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb, prod
from typing import Callable, Iterable

import numpy as np

from .errors import OracleError, ParameterError

log = logging.getLogger(__name__)

# target number of floats per intermediate (points x responses) block
_BLOCK_FLOATS = 1 << 21


class ModelOracle:
    """Counts evaluations of a vectorized model ``f: (n, p) -> (n, m)``.

    Parameters
    ----------
    func : callable
        Takes an ``(n, p)`` array, returns an ``(n, m)`` (or ``(n,)`` when
        ``m == 1``) array.
    p, m : int
        Input and output dimension.
    reentrant : bool
        Whether ``func`` may be called from several threads at once.
    cache : bool
        Memoize responses by exact input coordinates; cache hits are not
        counted as evaluations.
    """

    def __init__(self, func: Callable, p: int, m: int = 1, reentrant: bool = True,
                 cache: bool = False, name: str = "oracle"):
        self.func = func
        self.p = int(p)
        self.m = int(m)
        self.reentrant = reentrant
        self.name = name
        self.eval_count = 0
        self._cache = {} if cache else None

    def __repr__(self):
        return f"ModelOracle({self.name!r}, p={self.p}, m={self.m}, evals={self.eval_count})"

    def _raw(self, X: np.ndarray) -> np.ndarray:
        try:
            out = np.asarray(self.func(X), dtype=float)
        except OracleError:
            raise
        except Exception as exc:
            bad = self._locate_failure(X)
            raise OracleError(f"{self.name} failed: {exc}", point=bad) from exc
        out = out.reshape(X.shape[0], self.m)
        finite = np.all(np.isfinite(out), axis=1)
        if not finite.all():
            bad = X[np.flatnonzero(~finite)[0]].copy()
            raise OracleError(f"{self.name} returned a non-finite response", point=bad)
        self.eval_count += X.shape[0]
        return out

    def _locate_failure(self, X):
        if X.shape[0] == 1:
            return X[0].copy()
        for row in X:
            try:
                self.func(row[None, :])
            except Exception:
                return row.copy()
        return None

    def __call__(self, X) -> np.ndarray:
        """Evaluate at one point (returns ``(m,)``) or at each row of ``(n, p)``."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.p:
            raise ParameterError(f"{self.name} expects dimension {self.p}, got {X.shape[1]}")
        if self._cache is None:
            out = self._raw(X)
        else:
            keys = [row.tobytes() for row in X]
            missing = {}
            for k, row in zip(keys, X):
                if k not in self._cache and k not in missing:
                    missing[k] = row
            if missing:
                vals = self._raw(np.array(list(missing.values())))
                self._cache.update(zip(missing.keys(), vals))
            out = np.array([self._cache[k] for k in keys])
        return out[0] if single else out


# ---------------------------------------------------------------------------
# 1-D nodes and Lagrange weights


@dataclass(frozen=True)
class NodeSet:
    """Interpolation nodes along one input dimension.

    ``nodes[anchor_position]`` is the anchor coordinate in that dimension.
    """

    dim: int
    nodes: np.ndarray
    anchor_position: int

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ParameterError("a node set needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError(f"nodes must be strictly increasing: {nodes}")
        if not 0 <= self.anchor_position < nodes.size:
            raise ParameterError("anchor position out of range")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_weights", barycentric_weights(nodes))

    @property
    def K(self) -> int:
        return self.nodes.size

    @property
    def anchor(self) -> float:
        return float(self.nodes[self.anchor_position])

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @classmethod
    def with_anchor(cls, dim: int, nodes, anchor: float) -> "NodeSet":
        nodes = np.asarray(nodes, dtype=float)
        hit = np.flatnonzero(nodes == anchor)
        if hit.size != 1:
            raise ParameterError(f"anchor coordinate {anchor!r} is not a node of dimension {dim}")
        return cls(dim, nodes, int(hit[0]))


def select_nodes(a: float, b: float, anchor: float, K: int, dim: int = 0) -> NodeSet:
    """Nodes on ``[a, b]`` that include the anchor coordinate.

    Start from ``{a, anchor, b}`` and keep inserting the midpoint of the
    widest gap (leftmost gap on ties) until there are ``K`` nodes.
    """
    if K < 3:
        raise ParameterError(f"need K >= 3 nodes to hold the box ends and the anchor, got {K}")
    if not a < b:
        raise ParameterError(f"node interval needs a < b, got [{a}, {b}]")
    if not a <= anchor <= b:
        raise ParameterError(f"anchor {anchor} lies outside [{a}, {b}]")
    # gaps within this relative margin count as equal, so decimal ties such
    # as 0.7-0.4 vs 1.0-0.7 resolve to the leftmost gap
    eps = 1e-12 * (b - a)
    # an anchor hugging a box end replaces that end, avoiding near-duplicate nodes
    lo = float(anchor) if anchor - a <= eps else float(a)
    hi = float(anchor) if b - anchor <= eps else float(b)
    nodes = sorted({lo, float(anchor), hi})
    while len(nodes) < K:
        gaps = np.diff(nodes)
        k = int(np.flatnonzero(gaps >= gaps.max() - eps)[0])
        nodes.insert(k + 1, 0.5 * (nodes[k] + nodes[k + 1]))
    return NodeSet.with_anchor(dim, nodes, float(anchor))


def barycentric_weights(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_basis(nodes, x) -> np.ndarray:
    """Values of the ``K`` Lagrange cardinal polynomials at ``x``.

    Uses the second barycentric form; a point that coincides with a node
    gets an exact one-hot row. Returns ``(K,)`` for scalar ``x`` and
    ``(len(x), K)`` otherwise. Points outside the node hull are
    extrapolated (see :func:`outside_hull`).
    """
    if isinstance(nodes, NodeSet):
        xs, w = nodes.nodes, nodes.weights
    else:
        xs = np.asarray(nodes, dtype=float)
        if np.unique(xs).size != xs.size:
            raise ParameterError("duplicate interpolation nodes")
        w = barycentric_weights(xs)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    diff = x[:, None] - xs[None, :]
    hit = diff == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w / diff
        out = terms / terms.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = hit[rows].astype(float)
    return out[0] if scalar else out


def outside_hull(node_sets: Iterable[NodeSet], x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    flag = np.zeros(x.shape[0], dtype=bool)
    for ns in node_sets:
        c = x[:, ns.dim]
        flag |= (c < ns.nodes[0]) | (c > ns.nodes[-1])
    return flag


# ---------------------------------------------------------------------------
# expansions


@dataclass(frozen=True)
class ComponentTable:
    """Model responses on the slice grid of one index set.

    ``values`` has shape ``(K_{i1}, ..., K_{is}, m)``.
    """

    index_set: tuple
    values: np.ndarray


def index_sets(p: int, r: int):
    """All index sets of size 1..r, by size then lexicographically."""
    for s in range(1, r + 1):
        yield from itertools.combinations(range(p), s)


def _proper_subsets(u: tuple):
    for s in range(1, len(u)):
        yield from itertools.combinations(u, s)


@dataclass
class CutHdmrExpansion:
    """A truncated anchored HDMR expansion of order ``order``.

    With ``explicit`` set, slices are evaluated by calling ``oracle``
    directly instead of interpolating stored tables; this removes the
    interpolation error for cheap analytic models.
    """

    anchor: np.ndarray
    f0: np.ndarray
    order: int
    node_sets: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    oracle: ModelOracle | None = None
    build_evals: int = 0

    def __post_init__(self):
        self.anchor = np.array(self.anchor, dtype=float)
        self.f0 = np.atleast_1d(np.array(self.f0, dtype=float))
        self.anchor.setflags(write=False)
        self.f0.setflags(write=False)

    @property
    def p(self) -> int:
        return self.anchor.size

    @property
    def m(self) -> int:
        return self.f0.size

    @property
    def explicit(self) -> bool:
        return self.oracle is not None

    # -- slices and components ------------------------------------------------

    def _slice(self, u: tuple, coords: np.ndarray) -> np.ndarray:
        # coords: (M, |u|) -> (M, m)
        if self.explicit:
            pts = np.broadcast_to(self.anchor, (coords.shape[0], self.p)).copy()
            pts[:, list(u)] = coords
            return self.oracle(pts)
        try:
            table = self.tables[u]
        except KeyError:
            raise ParameterError(f"index set {u} is not stored in this expansion") from None
        # contract one axis at a time; the first step is a single matrix product
        M = coords.shape[0]
        shape = table.values.shape
        R = lagrange_basis(self.node_sets[u[0]], coords[:, 0]) @ table.values.reshape(shape[0], -1)
        for j in range(1, len(u)):
            w = lagrange_basis(self.node_sets[u[j]], coords[:, j])
            R = np.einsum("ik,ikr->ir", w, R.reshape(M, shape[j], -1))
        return R.reshape(M, self.m)

    def _check_index_set(self, u) -> tuple:
        u = tuple(int(i) for i in u)
        if not u or list(u) != sorted(set(u)) or u[0] < 0 or u[-1] >= self.p:
            raise ParameterError(f"invalid index set {u}")
        if len(u) > self.order:
            raise ParameterError(f"index set {u} exceeds truncation order {self.order}")
        return u

    def eval_slice(self, u, coords) -> np.ndarray:
        """Interpolated model on the slice through the anchor spanned by ``u``."""
        u = self._check_index_set(u)
        coords = np.asarray(coords, dtype=float)
        single = coords.ndim == 1
        out = self._slice(u, np.atleast_2d(coords).reshape(-1, len(u)))
        return out[0] if single else out

    def eval_component(self, u, coords) -> np.ndarray:
        """Component term for index set ``u`` at coordinates ``coords`` (``(|u|,)`` or ``(M, |u|)``)."""
        u = self._check_index_set(u)
        coords = np.asarray(coords, dtype=float)
        single = coords.ndim == 1
        coords = np.atleast_2d(coords).reshape(-1, len(u))
        # embed the |u| coordinates into full points so the shared recursion applies
        x = np.broadcast_to(self.anchor, (coords.shape[0], self.p)).copy()
        x[:, list(u)] = coords
        subsets = [v for s in range(1, len(u) + 1) for v in itertools.combinations(u, s)]
        out = self._components(x, subsets)[u]
        return out[0] if single else out

    def _components(self, x: np.ndarray, subsets) -> dict:
        # subsets must be ordered so every proper subset precedes its supersets
        comps = {}
        for u in subsets:
            val = self._slice(u, x[:, list(u)]) - self.f0
            for v in _proper_subsets(u):
                val -= comps[v]
            comps[u] = val
        return comps

    def order_contributions(self, x, order: int | None = None) -> np.ndarray:
        """Per-order sums: ``out[0]`` is ``f0``, ``out[s]`` sums all ``|u| = s`` terms.

        ``x`` is ``(M, p)``; the result is ``(order + 1, M, m)``. Summing
        ``out[:r + 1]`` gives the expansion truncated at ``r``.
        """
        order = self.order if order is None else min(int(order), self.order)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.p:
            raise ParameterError(f"expansion has dimension {self.p}, got points of dimension {x.shape[1]}")
        M = x.shape[0]
        out = np.empty((order + 1, M, self.m))
        out[0] = self.f0
        sets = list(index_sets(self.p, order))
        if self.explicit:
            width = self.m
        else:
            width = max(self.tables[u].values[0].size for u in sets) if sets else self.m
        block = max(1, _BLOCK_FLOATS // max(width, 1 << 4))
        for lo in range(0, M, block):
            xb = x[lo:lo + block]
            comps = self._components(xb, sets)
            for s in range(1, order + 1):
                acc = np.zeros((xb.shape[0], self.m))
                for u in itertools.combinations(range(self.p), s):
                    acc += comps[u]
                out[s, lo:lo + block] = acc
        return out

    def evaluate(self, x, order: int | None = None, return_flags: bool = False):
        """Expansion value at one point or at every row of ``x``.

        With ``return_flags`` a boolean array marks points that had to be
        extrapolated beyond the node hull.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        contrib = self.order_contributions(x2, order)
        val = contrib[0].copy()
        for s in range(1, contrib.shape[0]):
            val += contrib[s]
        if single:
            val = val[0]
        if not return_flags:
            return val
        flags = np.zeros(x2.shape[0], dtype=bool) if self.explicit else outside_hull(self.node_sets, x2)
        return val, (bool(flags[0]) if single else flags)

    __call__ = evaluate

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        if self.explicit:
            raise ParameterError("explicit-slice expansions hold a live oracle and cannot be saved")
        return {
            "p": self.p,
            "m": self.m,
            "r": self.order,
            "anchor": self.anchor.tolist(),
            "f0": self.f0.tolist(),
            "build_evals": int(self.build_evals),
            "node_sets": [{"dim": ns.dim, "nodes": ns.nodes.tolist(), "anchor_position": ns.anchor_position}
                          for ns in self.node_sets],
            "tables": [{"index_set": list(u), "shape": list(t.values.shape), "values": t.values.ravel().tolist()}
                       for u, t in self.tables.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CutHdmrExpansion":
        node_sets = [NodeSet(int(n["dim"]), n["nodes"], int(n["anchor_position"])) for n in d["node_sets"]]
        tables = {}
        for t in d["tables"]:
            u = tuple(int(i) for i in t["index_set"])
            vals = np.array(t["values"], dtype=float).reshape(t["shape"])
            tables[u] = ComponentTable(u, vals)
        exp = cls(np.array(d["anchor"]), np.array(d["f0"]), int(d["r"]), node_sets, tables,
                  build_evals=int(d.get("build_evals", 0)))
        expected = sum(comb(exp.p, s) for s in range(1, exp.order + 1))
        if len(tables) != expected:
            raise ParameterError(f"expansion document has {len(tables)} tables, expected {expected}")
        return exp


def slice_points(anchor: np.ndarray, node_sets: list, u: tuple) -> np.ndarray:
    """Row-major grid of slice points for index set ``u``, shape ``(prod K, p)``."""
    grids = [node_sets[i].nodes for i in u]
    combos = np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, len(u))
    pts = np.broadcast_to(anchor, (combos.shape[0], anchor.size)).copy()
    pts[:, list(u)] = combos
    return pts


def build_expansion(oracle: ModelOracle, anchor, node_sets: list | None, order: int,
                    explicit: bool = False, cache: bool = True) -> CutHdmrExpansion:
    """Sample ``oracle`` on all slice grids of order <= ``order`` through ``anchor``.

    Points shared between slices (the anchor, lower-order lines inside
    planes, ...) are evaluated once when ``cache`` is on, which makes the
    evaluation count equal :func:`predicted_cost`. Evaluations are issued
    in a fixed order: anchor first, then index sets by size and
    lexicographically, each grid row-major.
    """
    anchor = np.array(anchor, dtype=float)
    p = anchor.size
    if p != oracle.p:
        raise ParameterError(f"anchor has dimension {p}, oracle expects {oracle.p}")
    if not 0 <= order <= p:
        raise ParameterError(f"truncation order must satisfy 0 <= r <= p={p}, got {order}")
    start = oracle.eval_count
    f0 = oracle(anchor[None, :])[0]
    if explicit:
        return CutHdmrExpansion(anchor, f0, order, list(node_sets or []), {}, oracle,
                                build_evals=oracle.eval_count - start)

    if node_sets is None or len(node_sets) != p:
        raise ParameterError("one node set per dimension is required")
    for i, ns in enumerate(node_sets):
        if ns.dim != i:
            raise ParameterError(f"node set {i} is labelled with dimension {ns.dim}")
        if ns.anchor != anchor[i]:
            raise ParameterError(f"anchor coordinate {anchor[i]!r} is not node {ns.anchor_position} of dimension {i}")

    sets = list(index_sets(p, order))
    grids = {u: slice_points(anchor, node_sets, u) for u in sets}
    if cache:
        known = {anchor.tobytes(): f0}
        pending = {}
        for u in sets:
            for row in grids[u]:
                key = row.tobytes()
                if key not in known and key not in pending:
                    pending[key] = row
        if pending:
            vals = oracle(np.array(list(pending.values())))
            known.update(zip(pending.keys(), vals))
        lookup = lambda pts: np.array([known[row.tobytes()] for row in pts])  # noqa: E731
    else:
        lookup = oracle

    tables = {}
    for u in sets:
        shape = tuple(node_sets[i].K for i in u) + (oracle.m,)
        tables[u] = ComponentTable(u, np.asarray(lookup(grids[u])).reshape(shape))
    evals = oracle.eval_count - start
    log.debug("built order-%d expansion at %s with %d evaluations", order, anchor, evals)
    return CutHdmrExpansion(anchor, f0, order, list(node_sets), tables, None, build_evals=evals)


def predicted_cost(p: int, r: int, K, L: int = 1) -> int:
    """Oracle evaluations needed for ``L`` cached builds of order ``r``.

    ``K`` is an int (same for every dimension and anchor), a length-``p``
    sequence, or an ``(L, p)`` nested sequence with per-anchor counts.
    """
    if not 0 <= r <= p:
        raise ParameterError(f"need 0 <= r <= p, got r={r}, p={p}")
    Ks = _per_anchor_K(p, K, L)
    return sum(1 + sum(prod(k[i] - 1 for i in u) for u in index_sets(p, r)) for k in Ks)


def raw_cost(p: int, r: int, K, L: int = 1) -> int:
    """Evaluations without deduplication: every slice grid evaluated in full."""
    Ks = _per_anchor_K(p, K, L)
    return sum(1 + sum(prod(k[i] for i in u) for u in index_sets(p, r)) for k in Ks)


def _per_anchor_K(p, K, L):
    K = np.asarray(K, dtype=int)
    if K.ndim == 0:
        return [[int(K)] * p] * L
    if K.ndim == 1:
        return [K.tolist()] * L
    if K.shape != (L, p):
        raise ParameterError(f"per-anchor node counts must have shape {(L, p)}")
    return K.tolist()
