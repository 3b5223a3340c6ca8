"""Built-in instances, batch runs and the statistics used to compare them."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import AbSequence, parse_ab_sequence
from .optimizer import TARGET_TOLERANCE, OptimizerConfig, RunResult, run

__all__ = [
    "BenchmarkEntry",
    "RunRecord",
    "AggregateStats",
    "RankingTable",
    "builtin_benchmarks",
    "get_benchmark",
    "derive_seed",
    "run_batch",
    "aggregate",
    "confidence_interval",
    "mann_whitney_u",
    "rank_settings",
]

# Target scores used for the hit-the-target experiments.
_TARGETS = {
    "F13": 6.9961, "1CB3": 8.4589, "1BXP": 5.6104, "1BXL": 17.3962,
    "1EDP": 15.0092, "2ZNF": 18.3402, "F21": 16.5544, "1EDN": 21.4703,
    "2H3S": 21.1519,
}

# Best scores known for each instance.
_BEST_KNOWN = {
    "1BXP": 5.6104, "1CB3": 8.4589, "1BXL": 17.3962, "1EDP": 15.0092,
    "2ZNF": 18.3402, "1EDN": 21.4703, "2H3S": 21.1519, "1ARE": 25.2883,
    "2KGU": 53.6756, "1TZ4": 43.1890, "1TZ5": 50.2703, "1AGT": 66.2973,
    "1CRN": 95.3159, "2KAP": 89.5013, "1HVV": 101.6018, "1GK4": 112.3674,
    "1PCH": 166.7194, "2EWH": 257.0741, "F13": 6.9961, "F21": 16.5544,
    "F34": 31.3732, "F55": 54.9269, "F89": 86.4318,
}


@dataclass(frozen=True)
class BenchmarkEntry:
    label: str
    sequence: AbSequence
    target_score: Optional[float] = None
    best_known_score: Optional[float] = None
    # radians; None when no published vector exists
    reference_conformation: Optional[tuple] = None

    @property
    def length(self) -> int:
        return len(self.sequence)

    @property
    def dimension(self) -> int:
        return self.sequence.dimension

    def reference_array(self) -> Optional[np.ndarray]:
        if self.reference_conformation is None:
            return None
        return np.array(self.reference_conformation)


@dataclass(frozen=True)
class RunRecord:
    label: str
    seed: int
    score: float
    nse: int
    time_s: float
    success: bool
    nse_phase1: int
    nse_phase2: int
    time_phase1: float = 0.0
    time_phase2: float = 0.0

    @classmethod
    def from_result(cls, label: str, seed: int, result: RunResult) -> "RunRecord":
        # a success is charged the evaluations it took to reach the target
        nse = result.nse_at_success if result.success else result.nse_total
        return cls(label, seed, result.best_score, nse, result.wall_time,
                   result.success, result.nse_phase1, result.nse_phase2,
                   result.time_phase1, result.time_phase2)


@dataclass
class AggregateStats:
    n_runs: int
    n_success: int
    success_rate: float
    e_mean: float
    e_std: Optional[float]
    e_best: float
    nse_mean: Optional[float]
    nse_std: Optional[float]
    t_mean: Optional[float]
    ci_lo: Optional[float]
    ci_hi: Optional[float]
    nse_coef: Optional[float]
    t_coef: Optional[float]


@dataclass
class RankingTable:
    ranks: np.ndarray        # settings x sequences, integer ranks
    mean_ranks: np.ndarray   # one value per setting


def _read_data(name: str) -> str:
    return resources.files("abfold").joinpath("data", name).read_text()


def _parse_reference_file(text: str) -> Dict[str, List[float]]:
    out: Dict[str, List[float]] = {}
    label = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith(">"):
            label = line[1:].strip()
            out[label] = []
            continue
        out[label].extend(float(v) for v in line.replace(",", " ").split())
    return out


@lru_cache(maxsize=1)
def builtin_benchmarks() -> tuple:
    """All 23 built-in instances (18 peptide-derived, 5 Fibonacci)."""
    refs = _parse_reference_file(_read_data("reference_conformations.txt"))
    entries = []
    for line in _read_data("sequences.txt").splitlines():
        if not line.strip():
            continue
        label, text = line.split()
        seq = parse_ab_sequence(text, label=label)
        ref = refs.get(label)
        if ref is not None:
            if len(ref) != seq.dimension:
                raise RuntimeError(f"reference vector for {label} has "
                                   f"{len(ref)} values, expected {seq.dimension}")
            ref = tuple(math.radians(v) for v in ref)
        entries.append(BenchmarkEntry(label, seq, _TARGETS.get(label),
                                      _BEST_KNOWN.get(label), ref))
    return tuple(entries)


def get_benchmark(label: str) -> BenchmarkEntry:
    for entry in builtin_benchmarks():
        if entry.label.upper() == label.upper():
            return entry
    known = ", ".join(e.label for e in builtin_benchmarks())
    raise KeyError(f"unknown benchmark label {label!r} (known: {known})")


def derive_seed(base_seed: int, run_index: int) -> int:
    """Per-run seed: first 64-bit word of SeedSequence([base_seed, run_index])."""
    ss = np.random.SeedSequence([int(base_seed), int(run_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _one_run(args):
    label, seq, cfg = args
    return RunRecord.from_result(label, cfg.seed, run(seq, cfg))


def run_batch(entry: BenchmarkEntry, cfg: OptimizerConfig, n_runs: int,
              base_seed: int = 0, max_parallel: int = 1,
              seeds: Optional[Sequence[int]] = None) -> List[RunRecord]:
    """Independent runs ordered by run index.

    Seeds come from :func:`derive_seed` unless ``seeds`` lists them
    explicitly. Results do not depend on ``max_parallel``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    if seeds is None:
        seeds = [derive_seed(base_seed, k) for k in range(n_runs)]
    elif len(seeds) != n_runs:
        raise ValueError("need exactly one seed per run")
    jobs = [(entry.label, entry.sequence, replace(cfg, seed=int(s)))
            for s in seeds]
    workers = max(1, min(int(max_parallel), n_runs, os.cpu_count() or 1))
    if workers == 1:
        return [_one_run(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one_run, jobs))


def confidence_interval(nse_mean: float, n_r: int) -> tuple:
    """Rule-of-thumb 95% band ``(1 -+ 1.96 / sqrt(n_r)) * nse_mean``."""
    if n_r < 1:
        raise ValueError("n_r must be at least 1")
    if not nse_mean > 0:
        raise ValueError("nse_mean must be positive")
    half = 1.96 / math.sqrt(n_r)
    return (1.0 - half) * nse_mean, (1.0 + half) * nse_mean


def _std(values) -> Optional[float]:
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1))


def aggregate(records: Sequence[RunRecord],
              target_score: Optional[float] = None) -> AggregateStats:
    """Summary statistics of a batch.

    With ``target_score`` given, success is re-derived from the scores;
    otherwise the records' own flags are used.
    """
    if not records:
        raise ValueError("records must not be empty")
    # sort so floating-point sums do not depend on record order
    records = sorted(records, key=lambda r: (r.score, r.nse, r.seed, r.time_s))
    scores = np.array([r.score for r in records])
    if target_score is None:
        ok = [r.success for r in records]
    else:
        ok = [r.score >= target_score - TARGET_TOLERANCE for r in records]
    wins = [r for r, good in zip(records, ok) if good]
    n_r, n_s = len(records), len(wins)

    nse_mean = nse_std = t_mean = lo = hi = None
    if wins:
        nse = np.array(sorted(r.nse for r in wins), dtype=float)
        nse_mean = float(nse.mean())
        nse_std = _std(nse)
        t_mean = float(np.mean(sorted(r.time_s for r in wins)))
        lo, hi = confidence_interval(nse_mean, n_s)

    n1 = sum(r.nse_phase1 for r in records)
    n2 = sum(r.nse_phase2 for r in records)
    t1 = math.fsum(sorted(r.time_phase1 for r in records))
    t2 = math.fsum(sorted(r.time_phase2 for r in records))
    return AggregateStats(
        n_runs=n_r,
        n_success=n_s,
        success_rate=n_s / n_r,
        e_mean=float(scores.mean()),
        e_std=_std(scores),
        e_best=float(scores.max()),
        nse_mean=nse_mean,
        nse_std=nse_std,
        t_mean=t_mean,
        ci_lo=lo,
        ci_hi=hi,
        nse_coef=n1 / (n1 + n2) if n1 + n2 else None,
        t_coef=t1 / (t1 + t2) if t1 + t2 > 0 else None,
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


# Above this many observations the exact null distribution is replaced by
# the normal approximation.
_EXACT_LIMIT = 30


def _exact_two_sided(doubled_ranks: np.ndarray, n1: int, u_obs: float) -> float:
    """P(|U - mean| >= |u_obs - mean|) over all equally likely group labelings.

    Counts subsets by size and doubled rank sum (integers even with ties).
    """
    total = int(doubled_ranks.sum())
    # counts[k][s]: number of k-subsets with doubled rank sum s
    counts = [np.zeros(total + 1, dtype=object) for _ in range(n1 + 1)]
    counts[0][0] = 1
    for r in doubled_ranks.astype(int):
        for k in range(n1, 0, -1):
            counts[k][r:] = counts[k][r:] + counts[k - 1][:total + 1 - r]
    dist = counts[n1]
    n2 = len(doubled_ranks) - n1
    offset = n1 * (n1 + 1)  # doubled minimum rank sum
    mean = n1 * n2 / 2.0
    dev = abs(u_obs - mean)
    hit = 0
    for s in np.nonzero(dist)[0]:
        u = (s - offset) / 2.0
        if abs(u - mean) >= dev - 1e-9:
            hit += dist[s]
    return float(hit / sum(dist))


def mann_whitney_u(sample_a, sample_b) -> tuple:
    """Two-sided Mann-Whitney U test with midranks for ties.

    Returns ``(U, p)`` where ``U`` counts pairs with ``a > b`` (ties count
    one half). Small samples use the exact permutation distribution of the
    midranks; larger ones use the normal approximation with tie and
    continuity corrections.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    if np.all(pooled == pooled[0]):
        return u, 1.0
    n = n1 + n2
    if n <= _EXACT_LIMIT:
        return u, min(1.0, _exact_two_sided(2 * ranks, n1, u))
    mean = n1 * n2 / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    z = max(0.0, abs(u - mean) - 0.5) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return u, min(1.0, p)


def rank_settings(nse_means) -> RankingTable:
    """Competition ranks of settings (rows) per sequence (columns).

    Lower NSE_mean ranks first; ``None``/NaN entries share the worst rank
    available after all present values.
    """
    m = np.array([[np.nan if v is None else float(v) for v in row]
                  for row in nse_means], dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("need a non-empty settings x sequences matrix")
    n_set, n_seq = m.shape
    ranks = np.zeros((n_set, n_seq), dtype=int)
    for j in range(n_seq):
        col = m[:, j]
        present = ~np.isnan(col)
        for i in range(n_set):
            if present[i]:
                ranks[i, j] = 1 + int(np.sum(col[present] < col[i]))
            else:
                ranks[i, j] = 1 + int(present.sum())
    return RankingTable(ranks, ranks.mean(axis=1))
