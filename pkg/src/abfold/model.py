"""Three-dimensional AB off-lattice protein model.

A chain of ``L`` monomers, each hydrophobic (``A``) or hydrophilic (``B``),
with unit bonds. A conformation is the vector of ``D = 2L - 5`` angles in
radians: the bond angles ``theta_1 .. theta_{L-2}`` followed by the torsions
``beta_1 .. beta_{L-3}``. Energies follow the internal convention that lower
is better; reported scores are the negated ``E_o``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K

__all__ = [
    "MonomerClass",
    "AbSequence",
    "EnergyBreakdown",
    "LocalMoveOutcome",
    "SequenceError",
    "parse_ab_sequence",
    "kd_transform",
    "wrap_angle",
    "compute_positions",
    "pair_coefficient",
    "energy_original",
    "energy_auxiliary",
    "direction_from_angles",
    "angles_from_direction",
    "local_movement",
    "DEFAULT_LAMBDA",
]

DEFAULT_LAMBDA = 1000.0

# Kyte-Doolittle split into the two monomer classes.
KD_HYDROPHOBIC = frozenset("IVPLCMAG")
KD_HYDROPHILIC = frozenset("DEHFKNQRSTWY")


class SequenceError(ValueError):
    """Raised for malformed or too-short monomer sequences."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class MonomerClass(enum.Enum):
    A = "A"  # hydrophobic
    B = "B"  # hydrophilic


_COEFF = {
    (MonomerClass.A, MonomerClass.A): 1.0,
    (MonomerClass.B, MonomerClass.B): 0.5,
    (MonomerClass.A, MonomerClass.B): -0.5,
    (MonomerClass.B, MonomerClass.A): -0.5,
}


@dataclass(frozen=True)
class AbSequence:
    """An AB monomer string. ``L >= 3`` so that ``D >= 1``."""

    residues: tuple
    label: Optional[str] = None

    def __post_init__(self):
        residues = tuple(MonomerClass(r) if isinstance(r, str) else r
                         for r in self.residues)
        if len(residues) < 3:
            raise SequenceError(
                f"sequence has {len(residues)} monomers, at least 3 required")
        object.__setattr__(self, "residues", residues)

    @classmethod
    def from_string(cls, text: str, label: Optional[str] = None) -> "AbSequence":
        return cls(tuple(MonomerClass(ch) for ch in text), label)

    def __len__(self):
        return len(self.residues)

    def __str__(self):
        return "".join(r.value for r in self.residues)

    @property
    def length(self) -> int:
        return len(self.residues)

    @property
    def dimension(self) -> int:
        return 2 * len(self.residues) - 5

    @property
    def hydrophobic_mask(self) -> np.ndarray:
        return np.array([r is MonomerClass.A for r in self.residues])

    def coefficient_matrix(self) -> np.ndarray:
        """Symmetric ``L x L`` matrix of pair coefficients."""
        a = self.hydrophobic_mask
        cc = np.where(a[:, None] & a[None, :], 1.0,
                      np.where(~a[:, None] & ~a[None, :], 0.5, -0.5))
        return np.ascontiguousarray(cc)


@dataclass
class EnergyBreakdown:
    """Components of one evaluation.

    ``e_o`` is stored as ``e_bb + e_lj`` and ``e_x`` as
    ``(e_o + e_hc) + lambda_``; the auxiliary fields stay ``None`` for a
    plain :func:`energy_original` evaluation.
    """

    e_bb: float
    e_lj: float
    e_o: float = field(init=False)
    e_hc: Optional[float] = None
    lambda_: Optional[float] = None
    e_x: Optional[float] = field(default=None, init=False)
    n_hydrophobic: int = 0
    centroid: Optional[tuple] = None

    def __post_init__(self):
        self.e_o = self.e_bb + self.e_lj
        if self.e_hc is not None and self.lambda_ is not None:
            self.e_x = (self.e_o + self.e_hc) + self.lambda_

    @property
    def score(self) -> float:
        """Reported energy value (higher is better)."""
        return -self.e_o


@dataclass
class LocalMoveOutcome:
    feasible: bool
    conformation: np.ndarray
    chain: np.ndarray
    breakdown: EnergyBreakdown
    moved_monomers: frozenset


def parse_ab_sequence(text: str, label: Optional[str] = None) -> AbSequence:
    """Parse A/B text; whitespace and ``>`` header lines are ignored.

    Raises :class:`SequenceError` naming the 1-based character offset of the
    first invalid character.
    """
    residues = []
    offset = 0
    for line in text.splitlines(keepends=True):
        if line.lstrip().startswith(">"):
            offset += len(line)
            continue
        for ch in line:
            offset += 1
            if ch.isspace():
                continue
            up = ch.upper()
            if up not in "AB":
                raise SequenceError(
                    f"invalid monomer {ch!r} at offset {offset}", offset)
            residues.append(MonomerClass(up))
    return AbSequence(tuple(residues), label)


def kd_transform(one_letter: str) -> AbSequence:
    """Map one-letter amino-acid codes to the A/B alphabet."""
    out = []
    for ch in one_letter:
        if ch.isspace():
            continue
        up = ch.upper()
        if up in KD_HYDROPHOBIC:
            out.append(MonomerClass.A)
        elif up in KD_HYDROPHILIC:
            out.append(MonomerClass.B)
        else:
            raise SequenceError(f"unknown amino acid code {ch!r}")
    return AbSequence(tuple(out))


def wrap_angle(x: float) -> float:
    """Map an angle into ``(-pi, pi]``."""
    if not math.isfinite(x):
        raise ValueError(f"cannot wrap non-finite angle {x!r}")
    if -math.pi < x <= math.pi:
        return float(x)
    y = x - 2.0 * math.pi * math.floor((x + math.pi) / (2.0 * math.pi))
    if y <= -math.pi:
        y += 2.0 * math.pi
    elif y > math.pi:
        y -= 2.0 * math.pi
    return float(y)


def _check_dimension(seq: AbSequence, conf) -> np.ndarray:
    x = np.ascontiguousarray(conf, dtype=float)
    if x.shape != (seq.dimension,):
        raise ValueError(
            f"conformation has {x.size} angles, sequence of length "
            f"{len(seq)} needs {seq.dimension}")
    return x


def _length_for(conf: np.ndarray) -> int:
    d = conf.shape[0]
    if d < 1 or d % 2 == 0:
        raise ValueError(f"{d} angles do not match any chain (D = 2L - 5)")
    return (d + 5) // 2


def compute_positions(conf) -> np.ndarray:
    """Monomer coordinates as an ``(L, 3)`` array."""
    x = np.ascontiguousarray(conf, dtype=float)
    n_mono = _length_for(x)
    out = np.empty((n_mono, 3))
    K.positions(x, n_mono, out)
    return out


def pair_coefficient(a: MonomerClass, b: MonomerClass) -> float:
    return _COEFF[(MonomerClass(a), MonomerClass(b))]


def energy_original(seq: AbSequence, conf) -> EnergyBreakdown:
    x = _check_dimension(seq, conf)
    pos = compute_positions(x)
    return EnergyBreakdown(
        K.bend_energy(x, len(seq)),
        K.lj_energy(pos, len(seq), seq.coefficient_matrix()))


def energy_auxiliary(seq: AbSequence, conf,
                     lambda_: float = DEFAULT_LAMBDA) -> EnergyBreakdown:
    """Original energy plus the hydrophobic-core term and the phase offset."""
    if lambda_ < 0:
        raise ValueError("lambda must be non-negative")
    x = _check_dimension(seq, conf)
    pos = compute_positions(x)
    n_mono = len(seq)
    e_hc, cx, cy, cz, n_a = K.core_energy(pos, n_mono, seq.hydrophobic_mask)
    return EnergyBreakdown(
        K.bend_energy(x, n_mono),
        K.lj_energy(pos, n_mono, seq.coefficient_matrix()),
        e_hc=e_hc,
        lambda_=float(lambda_),
        n_hydrophobic=int(n_a),
        centroid=(cx, cy, cz) if n_a else None,
    )


def direction_from_angles(theta: float, beta: float) -> np.ndarray:
    cb = math.cos(beta)
    return np.array([math.cos(theta) * cb, math.sin(theta) * cb,
                     math.sin(beta)])


def angles_from_direction(v: Sequence[float],
                          fallback_theta: float = 0.0) -> tuple:
    """Inverse of :func:`direction_from_angles` with ``beta`` in [-pi/2, pi/2].

    A vertical direction leaves ``theta`` undetermined; ``fallback_theta``
    is returned for it.
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, |v| = {norm}")
    return K.angles_from_vector(v[0], v[1], v[2], float(fallback_theta))


def local_movement(seq: AbSequence, conf, chain, breakdown: EnergyBreakdown,
                   n: int, d_theta: float, d_beta: float) -> LocalMoveOutcome:
    """Displace at most two consecutive monomers, keeping all others fixed.

    The bond entering monomer ``n + 1`` (1-based, ``2 <= n <= L - 1``) is
    turned by ``(d_theta, d_beta)``; the torsion delta is ignored for
    ``n = 2``. When monomer ``n + 3`` exists, monomer ``n + 2`` is rebuilt on
    the circle of points at unit distance from both ``n + 1`` and ``n + 3``
    (the one nearest its old place) and the affected angles are recomputed.
    Each recomputed (theta, beta) pair keeps whichever of its two equivalent
    forms lies nearest the previous angles, so bend energy only changes
    where the geometry does.
    The energy is updated in O(L) from ``breakdown``.
    """
    x = _check_dimension(seq, conf)
    n_mono = len(seq)
    if not 2 <= n <= n_mono - 1:
        raise ValueError(f"n must be in 2..{n_mono - 1}, got {n}")
    pos = np.ascontiguousarray(chain, dtype=float)
    ang_idx = np.empty(6, dtype=np.int64)
    ang_val = np.empty(6)
    moved = np.empty(2, dtype=np.int64)
    new_pos = np.empty((2, 3))
    ok, n_ang, n_moved, e_bb, e_lj = K.local_move(
        x, pos, n_mono, seq.coefficient_matrix(), n, float(d_theta),
        float(d_beta), breakdown.e_bb, breakdown.e_lj, ang_idx, ang_val,
        moved, new_pos)
    if not ok:
        return LocalMoveOutcome(False, x.copy(), pos.copy(), breakdown,
                                frozenset())
    new_x = x.copy()
    new_x[ang_idx[:n_ang]] = ang_val[:n_ang]
    new_chain = pos.copy()
    new_chain[moved[:n_moved]] = new_pos[:n_moved]
    return LocalMoveOutcome(
        True, new_x, new_chain, EnergyBreakdown(e_bb, e_lj),
        frozenset(int(m) + 1 for m in moved[:n_moved]))
