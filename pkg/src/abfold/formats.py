"""Text formats: conformation files, XYZ export, traces and run results.

Angles are stored in degrees on disk and in radians in memory.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import asdict
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .model import AbSequence, MonomerClass, wrap_angle

__all__ = [
    "ConformationFormatError",
    "RESULTS_HEADER",
    "TRACE_HEADER",
    "parse_conformation",
    "format_conformation",
    "export_xyz",
    "write_trace",
    "format_results_csv",
    "format_results_json",
]

RESULTS_HEADER = ("label", "seed", "score", "nse", "time_s", "success",
                  "nse_phase1", "nse_phase2")
TRACE_HEADER = ("nse", "phase", "best_fitness", "best_score")

_TOKEN = re.compile(r"[^\s,{}]+")
_ELEMENT = {MonomerClass.A: "C", MonomerClass.B: "N"}


class ConformationFormatError(ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


def _tokens(text: str):
    """Yield (1-based offset, token), skipping '#' comment lines."""
    pos = 0
    for line in text.splitlines(keepends=True):
        if not line.lstrip().startswith("#"):
            for m in _TOKEN.finditer(line):
                yield pos + m.start() + 1, m.group()
        pos += len(line)


def parse_conformation(text: str, seq: Optional[AbSequence] = None) -> np.ndarray:
    """Read angles in degrees and return wrapped radians.

    Values may be separated by commas and/or whitespace and wrapped in
    braces. When ``seq`` is given the count must equal its dimension.
    """
    values = []
    for offset, tok in _tokens(text):
        try:
            v = float(tok)
        except ValueError:
            raise ConformationFormatError(
                f"non-numeric token {tok!r} at offset {offset}", offset) from None
        if not math.isfinite(v):
            raise ConformationFormatError(
                f"non-finite value {tok!r} at offset {offset}", offset)
        values.append(v)
    if seq is not None and len(values) != seq.dimension:
        raise ConformationFormatError(
            f"expected {seq.dimension} angles for a chain of {len(seq)} "
            f"monomers, got {len(values)}")
    if not values:
        raise ConformationFormatError("no angles found")
    return np.array([wrap_angle(math.radians(v)) for v in values])


def format_conformation(conf, per_line: int = 10) -> str:
    """Degrees inside braces, the layout accepted by :func:`parse_conformation`."""
    deg = [f"{math.degrees(float(v)):.10f}" for v in conf]
    rows = [", ".join(deg[i:i + per_line]) for i in range(0, len(deg), per_line)]
    return "{ " + ",\n  ".join(rows) + " }\n"


def export_xyz(seq: AbSequence, chain, label: Optional[str] = None,
               score: Optional[float] = None) -> str:
    """XYZ text: A monomers as carbon, B monomers as nitrogen."""
    chain = np.asarray(chain, dtype=float)
    if chain.shape != (len(seq), 3):
        raise ValueError(f"chain must have shape ({len(seq)}, 3)")
    name = label if label is not None else (seq.label or str(seq))
    comment = name if score is None else f"{name} score={score:.6f}"
    lines = [str(len(seq)), comment]
    for r, (x, y, z) in zip(seq.residues, chain):
        # normalize -0.0 so output is stable
        lines.append(f"{_ELEMENT[r]} {x + 0.0:.6f} {y + 0.0:.6f} {z + 0.0:.6f}")
    return "\n".join(lines) + "\n"


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def write_trace(trace: Iterable, sink: Optional[TextIO] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for ev in trace:
        w.writerow([ev.nse, ev.phase, _num(ev.best_fitness),
                    _num(ev.best_score)])
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def format_results_csv(records: Sequence, timing: bool = False) -> str:
    """One row per run. ``time_s`` stays empty unless ``timing`` is set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in records:
        w.writerow([r.label, r.seed, _num(r.score), r.nse,
                    _num(r.time_s) if timing else "",
                    "true" if r.success else "false",
                    r.nse_phase1, r.nse_phase2])
    return buf.getvalue()


def format_results_json(records: Sequence, stats=None,
                        timing: bool = False) -> str:
    rows = []
    for r in records:
        d = asdict(r)
        if not timing:
            for key in ("time_s", "time_phase1", "time_phase2"):
                d[key] = None
        rows.append(d)
    doc = {"records": rows}
    if stats is not None:
        agg = asdict(stats)
        if not timing:
            agg["t_mean"] = None
            agg["t_coef"] = None
        doc["aggregate"] = agg
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
