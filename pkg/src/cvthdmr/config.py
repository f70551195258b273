"""
Experiment configuration.

Configurations are JSON objects. Keys (all optional; missing keys take the
defaults of the experiment kind)::

    kind          "quadrature" | "diffusion" | "custom"
    densities     list of density objects, e.g. {"kind": "uniform", "lower": [0.0], "upper": [1.0]}
                  (one bound is shared by all dimensions, or give p of them),
                  {"kind": "beta", "alpha": 0.9, "beta": 1.3}, {"kind": "normal"}
    N             number of samples in the clustering set X
    p             input dimension
    L             list of cluster counts
    r             list of truncation orders
    K             interpolation nodes per dimension
    node_scope    "global" | "cluster"
    explicit      evaluate slices through the model instead of interpolating
    seeds         {"samples": int, "cvt": int, "test": int, "random_anchor": int}
    n_test        Monte Carlo test samples (diffusion)
    n_qmc         QMC points for surrogate integrals (quadrature)
    n_reference   QMC points for the reference integral (quadrature)
    grid          interior grid nodes per side (diffusion)
    output_dir    where reports are written
    baselines     {"random_anchor": bool, "mean_point": bool, "ave_hdmr": bool}
    cluster_box   also build models whose nodes cover each cell (diffusion)

Every CSV written through :func:`write_csv` starts with a
``# config_hash=<hex>`` comment line followed by the header row.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError
from .multi_anchor import NODE_SCOPES
from .parameter_space import ProductDensity

KINDS = ("quadrature", "diffusion", "custom")
BASELINES = ("random_anchor", "mean_point", "ave_hdmr")
SEED_KEYS = ("samples", "cvt", "test", "random_anchor")


def _default_seeds():
    return {"samples": 0, "cvt": 0, "test": 1, "random_anchor": 2}


def _default_baselines():
    return {b: True for b in BASELINES}


@dataclass
class ExperimentConfig:
    kind: str = "quadrature"
    densities: list = field(default_factory=lambda: [{"kind": "uniform", "lower": [0.0], "upper": [1.0]},
                                                     {"kind": "beta", "alpha": 0.9, "beta": 1.3}])
    N: int = 20000
    p: int = 6
    L: list = field(default_factory=lambda: [1, 2, 3, 4])
    r: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    K: int = 7
    node_scope: str = "global"
    explicit: bool = True
    seeds: dict = field(default_factory=_default_seeds)
    n_test: int = 5000
    n_qmc: int = 2**20
    n_reference: int = 2**22
    grid: int = 63
    output_dir: str = "results"
    baselines: dict = field(default_factory=_default_baselines)
    cluster_box: bool = True

    @classmethod
    def quadrature(cls, **kw) -> "ExperimentConfig":
        cfg = cls(output_dir="results/quadrature")
        return cfg.replace(**kw)

    @classmethod
    def diffusion(cls, **kw) -> "ExperimentConfig":
        cfg = cls(kind="diffusion", densities=[{"kind": "normal"}], N=5000, p=5, r=[2], explicit=False,
                  output_dir="results/diffusion")
        return cfg.replace(**kw)

    @classmethod
    def for_kind(cls, kind: str, **kw) -> "ExperimentConfig":
        if kind == "diffusion":
            return cls.diffusion(**kw)
        if kind == "quadrature":
            return cls.quadrature(**kw)
        return cls(kind=kind).replace(**kw)

    def replace(self, **kw) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **kw)
        cfg.validate()
        return cfg

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.densities:
            raise ParameterError("at least one density is required")
        for d in self.densities:
            dens = ProductDensity.from_dict(d)
            if dens.kind == "uniform" and len(dens.lower) not in (1, self.p):
                raise ParameterError(f"uniform box has {len(dens.lower)} bounds for p={self.p}")
        for name in ("N", "p", "K", "n_test", "n_qmc", "n_reference", "grid"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        if not self.L or any(not isinstance(l, int) or l < 1 or l > self.N for l in self.L):
            raise ParameterError(f"L entries must be integers in [1, N], got {self.L}")
        if not self.r or any(not isinstance(r, int) or r < 1 or r > self.p for r in self.r):
            raise ParameterError(f"r entries must be integers in [1, p], got {self.r}")
        if not self.explicit and self.K < 3:
            raise ParameterError(f"K must be >= 3, got {self.K}")
        if self.node_scope not in NODE_SCOPES:
            raise ParameterError(f"node_scope must be one of {NODE_SCOPES}, got {self.node_scope!r}")
        if set(self.seeds) != set(SEED_KEYS) or any(not isinstance(s, int) or s < 0 for s in self.seeds.values()):
            raise ParameterError(f"seeds must map exactly {SEED_KEYS} to non-negative integers")
        if set(self.baselines) != set(BASELINES) or any(not isinstance(b, bool) for b in self.baselines.values()):
            raise ParameterError(f"baselines must map exactly {BASELINES} to booleans")
        if self.n_reference % 2:
            raise ParameterError("n_reference must be even")

    def density_objects(self) -> list:
        out = []
        for d in self.densities:
            dens = ProductDensity.from_dict(d)
            if dens.kind == "uniform" and len(dens.lower) == 1:
                dens = ProductDensity.uniform([dens.lower[0]] * self.p, [dens.upper[0]] * self.p)
            out.append(dens)
        return out

    # -- file form -------------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ParameterError("configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown configuration keys: {sorted(unknown)}")
        base = cls.for_kind(d.get("kind", "quadrature"))
        return base.replace(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"configuration is not valid JSON: {exc}") from exc

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParameterError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_json(text)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def fmt(v) -> str:
    """Stable text form for CSV cells (``repr`` for floats, so values round-trip)."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(float(v))
    if hasattr(v, "item"):
        return fmt(v.item())
    return str(v)


def write_csv(path, header: list, rows: list, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[str | None, list[dict]]:
    """Read a CSV written by :func:`write_csv`; returns (config hash, rows)."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    chash = None
    if lines and lines[0].startswith("# config_hash="):
        chash = lines[0].split("=", 1)[1]
        lines = lines[1:]
    return chash, list(csv.DictReader(lines))
