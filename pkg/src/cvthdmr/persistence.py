"""
Save and load expansions and multi-anchor models.

The file format is JSON Lines. The first line is a header naming the
format version and the sections that follow; every later line is one
section object with a ``"section"`` key; the last one is ``{"section":
"end"}``. Floats are written with ``repr`` precision, so a round trip is
bitwise exact. Because sections are listed up front, a truncated file is
reported by the name of the first missing or damaged section.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cut_hdmr import CutHdmrExpansion
from .cvt import VoronoiPartition
from .errors import LoadError
from .multi_anchor import CvtHdmrModel

FORMAT_VERSION = 1
MODEL_FORMAT = "cvthdmr-model"
EXPANSION_FORMAT = "cvthdmr-expansion"


def _write(path, fmt: str, sections: list[dict]) -> Path:
    path = Path(path)
    names = [s["section"] for s in sections]
    lines = [json.dumps({"section": "header", "format": fmt, "format_version": FORMAT_VERSION,
                         "sections": names})]
    lines += [json.dumps(s) for s in sections]
    lines.append(json.dumps({"section": "end"}))
    path.write_text("\n".join(lines) + "\n")
    return path


def _read(path, fmt: str) -> dict:
    path = Path(path)
    try:
        raw = path.read_text().splitlines()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    if not raw:
        raise LoadError("empty file, missing section 'header'", location=f"{path}:1")
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed section 'header': {exc.msg}", location=f"{path}:1") from exc
    if header.get("section") != "header" or header.get("format") != fmt:
        raise LoadError(f"not a {fmt} document", location=f"{path}:1")
    version = header.get("format_version")
    if not isinstance(version, int):
        raise LoadError("header carries no integer format_version", location=f"{path}:1")
    if version > FORMAT_VERSION:
        raise LoadError(f"format version {version} is newer than the supported version {FORMAT_VERSION}; "
                        "refusing to load", location=f"{path}:1")
    expected = list(header.get("sections", [])) + ["end"]
    found = {}
    for k, name in enumerate(expected):
        lineno = k + 2
        if lineno > len(raw):
            raise LoadError(f"missing section {name!r} (file truncated)", location=f"{path}:{lineno}")
        try:
            obj = json.loads(raw[lineno - 1])
        except json.JSONDecodeError as exc:
            raise LoadError(f"section {name!r} is truncated or malformed: {exc.msg}",
                            location=f"{path}:{lineno}") from exc
        if obj.get("section") != name:
            raise LoadError(f"expected section {name!r}, found {obj.get('section')!r}", location=f"{path}:{lineno}")
        found[name] = obj
    return found


def save_expansion(exp: CutHdmrExpansion, path) -> Path:
    body = exp.to_dict()
    body["section"] = "expansion"
    return _write(path, EXPANSION_FORMAT, [body])


def load_expansion(path) -> CutHdmrExpansion:
    doc = _read(path, EXPANSION_FORMAT)
    try:
        return CutHdmrExpansion.from_dict(doc["expansion"])
    except (KeyError, ValueError, TypeError) as exc:
        raise LoadError(f"invalid expansion content: {exc}", location=f"{path}:section 'expansion'") from exc


def save_model(model: CvtHdmrModel, path) -> Path:
    summary = model.to_dict()
    summary["section"] = "model"
    sections = [summary]
    for l, e in enumerate(model.expansions):
        body = e.to_dict()
        body["section"] = f"expansion/{l}"
        sections.append(body)
    return _write(path, MODEL_FORMAT, sections)


def load_model(path) -> CvtHdmrModel:
    doc = _read(path, MODEL_FORMAT)
    head = doc.get("model")
    if head is None:
        raise LoadError("missing section 'model'", location=str(path))
    exps = []
    for l in range(int(head["L"])):
        name = f"expansion/{l}"
        if name not in doc:
            raise LoadError(f"missing section {name!r}", location=str(path))
        try:
            exps.append(CutHdmrExpansion.from_dict(doc[name]))
        except (KeyError, ValueError, TypeError) as exc:
            raise LoadError(f"invalid content in section {name!r}: {exc}", location=str(path)) from exc
    part = None
    ps = head.get("partition")
    if ps:
        # only the summary is stored; per-sample assignments are not persisted
        part = VoronoiPartition(
            assignments=np.empty(0, dtype=int),
            centroids=np.array(ps["centroids"], dtype=float),
            counts=np.array(ps["counts"], dtype=int),
            energies=np.array(ps["energies"], dtype=float),
            total_energy=float(ps["total_energy"]),
            converged=bool(ps["converged"]),
            iterations=int(ps["iterations"]),
        )
    return CvtHdmrModel(exps, part, head.get("node_scope", "global"), head.get("metadata", {}))
