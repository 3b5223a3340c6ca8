"""Two-phase differential evolution (DE2P) for the AB off-lattice model.

The first phase minimizes the auxiliary energy ``E_x`` (which rewards a
compact hydrophobic core); the second minimizes ``E_o`` directly and adds a
local search around the population best. Stagnation in the second phase
triggers a component reinitialization around the local best and returns to
the first phase; repeated fruitless component reinitializations trigger a full
random restart.

All heavy lifting happens in :mod:`abfold._kernels`. The functions here wrap
single steps for inspection and testing, and :func:`run` drives a full
optimization.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels as K
from .model import DEFAULT_LAMBDA, AbSequence

__all__ = [
    "TARGET_TOLERANCE",
    "StoppingCondition",
    "OptimizerConfig",
    "Individual",
    "Population",
    "BestTriple",
    "PhaseState",
    "TraceEvent",
    "RunResult",
    "make_rng",
    "init_population",
    "jde_parameters",
    "de_trial",
    "temporal_locality_trial",
    "local_search",
    "component_reinit",
    "reinitialize_step",
    "generation",
    "run",
]

TARGET_TOLERANCE = 1e-4
_CHUNK_EVALS = 200_000


@dataclass(frozen=True)
class StoppingCondition:
    """Any combination of bounds; the run stops at the first one satisfied."""

    target_score: Optional[float] = None
    nse_limit: Optional[int] = None
    time_limit: Optional[float] = None

    def __post_init__(self):
        if (self.target_score is None and self.nse_limit is None
                and self.time_limit is None):
            raise ValueError("at least one stopping bound is required")
        if self.nse_limit is not None and self.nse_limit < 1:
            raise ValueError("nse_limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")

    def reached(self, score: float) -> bool:
        return (self.target_score is not None
                and score >= self.target_score - TARGET_TOLERANCE)


@dataclass(frozen=True)
class OptimizerConfig:
    np: int = 100
    p_b: float = 20.0
    l_b: float = 20.0
    c: int = 10
    h_c: float = 35.0
    lambda_: float = DEFAULT_LAMBDA
    stopping: StoppingCondition = field(
        default_factory=lambda: StoppingCondition(nse_limit=10_000_000))
    seed: int = 0
    # "population" (default) or "global": which best vector mutation uses
    base: str = "population"
    # relative drop of the local best needed to count as a change; the
    # default sits above the rounding noise of incremental energies
    stall_tolerance: float = 1e-9
    # True: stagnation counts restart at every phase switch;
    # False: each phase keeps its own count across stints
    stall_reset: bool = True
    # "population" (default) or "global": which energy a local move must match
    local_search_reference: str = "population"
    # True: at each switch to phase 2 the local best restarts from the
    # population's best E_o; component reinits centre on the best local
    # best since the last random reinit, and random reinits count
    # component reinits since that vector last improved.
    # False: one local best carries over between cycles.
    rebase_local_best: bool = True

    def __post_init__(self):
        if self.np < 4:
            raise ValueError(f"population size must be at least 4, got {self.np}")
        for name in ("p_b", "l_b", "h_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if self.lambda_ < 0:
            raise ValueError("lambda must be non-negative")
        if not self.stall_tolerance >= 0:
            raise ValueError("stall_tolerance must be non-negative")
        if self.base not in ("population", "global"):
            raise ValueError("base must be 'population' or 'global'")
        if self.local_search_reference not in ("population", "global"):
            raise ValueError(
                "local_search_reference must be 'population' or 'global'")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def check_dimension(self, dimension: int):
        if self.c > dimension:
            raise ValueError(f"c = {self.c} exceeds the dimension {dimension}")

    def parameter_vector(self) -> np.ndarray:
        prm = np.zeros(K.PRM_SIZE)
        prm[K.P_PB] = self.p_b
        prm[K.P_LB] = self.l_b
        prm[K.P_C] = self.c
        prm[K.P_HC] = self.h_c
        prm[K.P_LAM] = self.lambda_
        target = self.stopping.target_score
        prm[K.P_EO_STOP] = (-math.inf if target is None
                            else -(target - TARGET_TOLERANCE))
        limit = self.stopping.nse_limit
        prm[K.P_NSE_LIMIT] = math.inf if limit is None else float(limit)
        prm[K.P_BASE_GLOBAL] = 1.0 if self.base == "global" else 0.0
        prm[K.P_STALL_TOL] = self.stall_tolerance
        prm[K.P_STALL_RESET] = 1.0 if self.stall_reset else 0.0
        prm[K.P_LS_GLOBAL] = 1.0 if self.local_search_reference == "global" else 0.0
        prm[K.P_REBASE] = 1.0 if self.rebase_local_best else 0.0
        return prm


@dataclass
class Individual:
    conformation: np.ndarray
    f: float
    cr: float
    fitness: float


@dataclass
class Population:
    """Structure-of-arrays population. ``e_o`` caches each member's E_o."""

    x: np.ndarray
    f: np.ndarray
    cr: np.ndarray
    fitness: np.ndarray
    e_o: np.ndarray

    @classmethod
    def empty(cls, size: int, dimension: int) -> "Population":
        return cls(np.zeros((size, dimension)), np.full(size, 0.5),
                   np.full(size, 0.9), np.full(size, np.inf),
                   np.full(size, np.inf))

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i) -> Individual:
        return Individual(self.x[i].copy(), float(self.f[i]),
                          float(self.cr[i]), float(self.fitness[i]))


@dataclass
class BestTriple:
    """Rows of ``x``: global, local and population best, then the best
    local best since the last random reinit (see ``rebase_local_best``)."""

    x: np.ndarray
    fitness: np.ndarray
    e_o: np.ndarray

    @classmethod
    def empty(cls, dimension: int) -> "BestTriple":
        return cls(np.zeros((K.N_BEST, dimension)), np.full(K.N_BEST, np.inf),
                   np.full(K.N_BEST, np.inf))

    def _pair(self, row):
        return self.x[row].copy(), float(self.fitness[row])

    @property
    def global_best(self):
        return self._pair(K.G)

    @property
    def local_best(self):
        return self._pair(K.LB)

    @property
    def population_best(self):
        return self._pair(K.PB)


@dataclass
class TraceEvent:
    nse: int
    phase: int
    best_fitness: float
    best_score: Optional[float]


class PhaseState:
    """Counters, phase flag, timing and the trace buffer of one run."""

    def __init__(self, seq: AbSequence, np_: int):
        d = seq.dimension
        self.cnt = np.zeros(K.CNT_SIZE, dtype=np.int64)
        self.cnt[K.FIRST_PHASE] = 1
        self.fst = np.full(K.FST_SIZE, np.inf)
        self.eo_best_x = np.zeros(d)
        cap = 2 * np_ * (len(seq) + 1) + 4096
        self.tr_nse = np.zeros(cap, dtype=np.int64)
        self.tr_phase = np.zeros(cap, dtype=np.int64)
        self.tr_fit = np.zeros(cap)
        self.time_phase1 = 0.0
        self.time_phase2 = 0.0
        self.trace: List[TraceEvent] = []

    @property
    def first_phase(self) -> bool:
        return bool(self.cnt[K.FIRST_PHASE])

    @property
    def evals_since_local_best_change(self) -> int:
        """Stagnation count of the active phase."""
        return int(self.cnt[K.STALL1 if self.first_phase else K.STALL2])

    @property
    def stall_phase1(self) -> int:
        return int(self.cnt[K.STALL1])

    @property
    def stall_phase2(self) -> int:
        return int(self.cnt[K.STALL2])

    @property
    def component_reinits_since_local_best_change(self) -> int:
        return int(self.cnt[K.COMP_STALL])

    @property
    def nse_total(self) -> int:
        return int(self.cnt[K.NSE])

    @property
    def nse_phase1(self) -> int:
        return int(self.cnt[K.NSE1])

    @property
    def nse_phase2(self) -> int:
        return int(self.cnt[K.NSE2])

    @property
    def component_reinits(self) -> int:
        return int(self.cnt[K.N_COMP])

    @property
    def random_reinits(self) -> int:
        return int(self.cnt[K.N_RAND])

    @property
    def generations(self) -> int:
        return int(self.cnt[K.N_GEN])

    @property
    def best_e_o(self) -> float:
        return float(self.fst[K.BEST_EO])

    @property
    def status(self) -> int:
        return int(self.cnt[K.STATUS])

    def drain_trace(self, sink: Optional[Callable[[TraceEvent], None]] = None):
        n = int(self.cnt[K.TRACE_N])
        for k in range(n):
            phase = int(self.tr_phase[k])
            fit = float(self.tr_fit[k])
            event = TraceEvent(int(self.tr_nse[k]), phase, fit,
                               -fit if phase == 2 else None)
            self.trace.append(event)
            if sink is not None:
                sink(event)
        self.cnt[K.TRACE_N] = 0


@dataclass
class RunResult:
    best_conformation: np.ndarray
    best_score: float
    success: bool
    nse_total: int
    nse_at_success: Optional[int]
    wall_time: float
    nse_phase1: int
    nse_phase2: int
    time_phase1: float
    time_phase2: float
    trace: List[TraceEvent]
    global_best_fitness: float = math.nan
    generations: int = 0
    component_reinits: int = 0
    random_reinits: int = 0
    seed: Optional[int] = None


def make_rng(seed: int) -> np.random.Generator:
    """The generator used for every run: PCG64 seeded through SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


@functools.lru_cache(maxsize=64)
def _tables(seq: AbSequence):
    return seq.coefficient_matrix(), np.ascontiguousarray(seq.hydrophobic_mask)


def _kernel_args(seq, pop, bests, state, cfg, rng):
    cc, is_a = _tables(seq)
    return (pop.x, pop.f, pop.cr, pop.fitness, pop.e_o, bests.x,
            bests.fitness, bests.e_o, state.eo_best_x, state.cnt, state.fst,
            cfg.parameter_vector(), len(seq), cc, is_a, rng, state.tr_nse,
            state.tr_phase, state.tr_fit)


def init_population(seq: AbSequence, cfg: OptimizerConfig,
                    rng: np.random.Generator):
    """Random population evaluated with E_x; all three bests set to BEST(P)."""
    cfg.check_dimension(seq.dimension)
    pop = Population.empty(cfg.np, seq.dimension)
    bests = BestTriple.empty(seq.dimension)
    state = PhaseState(seq, cfg.np)
    K.init_population(*_kernel_args(seq, pop, bests, state, cfg, rng))
    return pop, bests, state


def jde_parameters(f: float, cr: float, rng) -> tuple:
    """Self-adapted ``(F, Cr)`` for one trial.

    Each value is regenerated with probability 0.1. ``rng`` only needs a
    ``random()`` method, so draws can be scripted in tests.
    """
    u_f = rng.random()
    v_f = rng.random() if u_f < 0.1 else 0.0
    u_cr = rng.random()
    v_cr = rng.random() if u_cr < 0.1 else 0.0
    return K.jde_sample(u_f, v_f, u_cr, v_cr, f, cr)


def de_trial(pop: Population, base, i: int, f: float, cr: float,
             rng: np.random.Generator, return_donors: bool = False):
    """DE/best/1/bin trial vector for individual ``i``."""
    if len(pop) < 4:
        raise ValueError("at least 4 individuals are needed to draw donors")
    u = np.empty(pop.x.shape[1])
    r1, r2 = K.de_trial(pop.x, np.ascontiguousarray(base, dtype=float), i,
                        f, cr, rng, u)
    if return_donors:
        return u, (int(r1), int(r2))
    return u


def temporal_locality_trial(base, u, x_i) -> np.ndarray:
    """Second trial ``base + (u - x_i) / 2`` that repeats a successful step."""
    base = np.ascontiguousarray(base, dtype=float)
    out = np.empty_like(base)
    K.temporal_locality(base, np.ascontiguousarray(u, dtype=float),
                        np.ascontiguousarray(x_i, dtype=float), out)
    return out


def local_search(seq: AbSequence, pop: Population, bests: BestTriple,
                 state: PhaseState, cfg: OptimizerConfig, x_i,
                 rng: np.random.Generator) -> bool:
    """Try one local movement per monomer ``n = 2 .. L-1`` on the population best.

    Improvements (``E_o`` not worse) overwrite the population-best slot in
    place. Returns True if a stopping bound was hit.
    """
    cc, _ = _tables(seq)
    stop = K.local_search(
        pop.x, pop.fitness, pop.e_o, bests.x, bests.fitness, bests.e_o,
        np.array(x_i, dtype=float), len(seq), cc, state.cnt, state.fst,
        cfg.parameter_vector(), state.eo_best_x, rng, state.tr_nse,
        state.tr_phase, state.tr_fit, np.empty((len(seq), 3)),
        np.empty(6, dtype=np.int64), np.empty(6), np.empty(2, dtype=np.int64),
        np.empty((2, 3)))
    return bool(stop)


def component_reinit(local_best, c: int, rng: np.random.Generator) -> np.ndarray:
    src = np.ascontiguousarray(local_best, dtype=float)
    if not 0 <= c <= src.shape[0]:
        raise ValueError(f"c must be within 0..{src.shape[0]}, got {c}")
    out = np.empty_like(src)
    K.component_reinit(src, c, rng, out, np.empty(src.shape[0], dtype=np.int64))
    return out


def reinitialize_step(seq, pop, bests, state, cfg, rng) -> bool:
    """End-of-generation local-best update, phase switch and restarts."""
    return bool(K.reinitialize(*_kernel_args(seq, pop, bests, state, cfg, rng)))


def generation(seq, pop, bests, state, cfg, rng) -> bool:
    """One full generation including the reinitialization step."""
    return bool(K.generation(*_kernel_args(seq, pop, bests, state, cfg, rng)))


def run(seq: AbSequence, cfg: OptimizerConfig,
        rng: Optional[np.random.Generator] = None,
        trace_sink: Optional[Callable[[TraceEvent], None]] = None) -> RunResult:
    """Optimize ``seq`` until a bound in ``cfg.stopping`` is met.

    ``rng`` defaults to ``make_rng(cfg.seed)``. Trace events are collected in
    the result and, if given, also passed to ``trace_sink`` as they arrive.
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    cfg.check_dimension(seq.dimension)
    time_limit = cfg.stopping.time_limit
    clock = time.perf_counter

    t0 = clock()
    pop, bests, state = init_population(seq, cfg, rng)
    state.time_phase1 += clock() - t0
    state.drain_trace(trace_sink)

    args = _kernel_args(seq, pop, bests, state, cfg, rng)
    while state.status == K.RUNNING:
        if time_limit is not None and clock() - t0 >= time_limit:
            break
        first = state.first_phase
        t1 = clock()
        K.advance(*args, _CHUNK_EVALS)
        dt = clock() - t1
        if first:
            state.time_phase1 += dt
        else:
            state.time_phase2 += dt
        state.drain_trace(trace_sink)
    wall = clock() - t0

    success = state.status == K.HIT_TARGET
    return RunResult(
        best_conformation=state.eo_best_x.copy(),
        best_score=-state.best_e_o,
        success=success,
        nse_total=state.nse_total,
        nse_at_success=int(state.cnt[K.NSE_SUCCESS]) if success else None,
        wall_time=wall,
        nse_phase1=state.nse_phase1,
        nse_phase2=state.nse_phase2,
        time_phase1=state.time_phase1,
        time_phase2=state.time_phase2,
        trace=state.trace,
        global_best_fitness=float(bests.fitness[K.G]),
        generations=state.generations,
        component_reinits=state.component_reinits,
        random_reinits=state.random_reinits,
        seed=cfg.seed,
    )
