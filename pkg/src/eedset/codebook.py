"""Finite decision sets and the receiver-side decision rule.

The receiver picks the codebook beam with the largest gain, then the power
level with the largest utility at that gain, and feeds back both indices.
Ties go to the lowest beam index and to the lowest power.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ee_model import EeConstants, UtilityCase, utility
from .errors import ContractViolation
from .linalg_channel import UNIT_NORM_TOL, as_channel, beam_gains

# rows per chunk are chosen so one chunk holds about this many grid entries
_CHUNK_ENTRIES = 1 << 20


def _bits_of(m: int) -> Optional[int]:
    b = m.bit_length() - 1
    return b if m >= 1 and (1 << b) == m else None


@dataclass(frozen=True)
class PowerSet:
    levels: np.ndarray

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float).ravel()
        if levels.size < 1 or not np.all(np.isfinite(levels)):
            raise ContractViolation("power set must hold finite levels")
        if np.any(levels < 0) or np.any(np.diff(levels) <= 0):
            raise ContractViolation("power levels must be non-negative and strictly increasing")
        if _bits_of(levels.size) is None:
            raise ContractViolation(f"power set size {levels.size} is not a power of two")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def b1(self) -> int:
        return _bits_of(self.levels.size)

    def __len__(self):
        return self.levels.size


@dataclass(frozen=True)
class BeamSet:
    """Beamforming codebook stored as an ``(nt, m2)`` matrix, one beam per column."""

    omega: np.ndarray

    def __post_init__(self):
        omega = np.array(self.omega, dtype=complex)
        if omega.ndim == 1:
            omega = omega[:, None]
        if omega.ndim != 2 or omega.shape[1] < 1:
            raise ContractViolation(f"codebook must be an (nt, m2) matrix, got {omega.shape}")
        if not np.all(np.isfinite(omega)):
            raise ContractViolation("codebook has non-finite entries")
        norms = np.linalg.norm(omega, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ContractViolation("codebook columns must be unit-norm")
        if _bits_of(omega.shape[1]) is None:
            raise ContractViolation(f"codebook size {omega.shape[1]} is not a power of two")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @property
    def nt(self) -> int:
        return self.omega.shape[0]

    @property
    def b2(self) -> int:
        return _bits_of(self.omega.shape[1])

    def __len__(self):
        return self.omega.shape[1]


@dataclass(frozen=True)
class FeedbackBudget:
    b1: int
    b2: int
    rate_r: float = 800.0
    t0: float = 0.01

    def __post_init__(self):
        if self.b1 < 0 or self.b2 < 0 or int(self.b1) != self.b1 or int(self.b2) != self.b2:
            raise ContractViolation("feedback bits must be non-negative integers")
        if self.b1 + self.b2 > self.capacity:
            raise ContractViolation(
                f"B1 + B2 = {self.b1 + self.b2} exceeds the feedback budget R t0 = {self.capacity:g}"
            )

    @property
    def capacity(self) -> float:
        # R t0 is a bit count; guard against 800 * 0.01 rounding below 8
        return self.rate_r * self.t0 * (1 + 1e-12)


@dataclass(frozen=True)
class DecisionSet:
    powers: PowerSet
    beams: BeamSet
    budget: Optional[FeedbackBudget] = None

    def __post_init__(self):
        if self.budget is not None:
            FeedbackBudget(self.powers.b1, self.beams.b2, self.budget.rate_r, self.budget.t0)


class Decision(NamedTuple):
    power_index: int
    beam_index: int


def uniform_power_grid(b1: int, pmax: float) -> PowerSet:
    """``2**b1`` equally spaced levels from 0 to ``pmax``; ``b1 = 0`` gives ``{pmax}``."""
    if b1 < 0:
        raise ContractViolation("b1 must be >= 0")
    if b1 == 0:
        return PowerSet(np.array([pmax], dtype=float))
    m1 = 1 << b1
    return PowerSet(np.arange(m1) / (m1 - 1) * pmax)


def select_beam(h, beams: BeamSet) -> tuple[int, float]:
    """Index of the codebook beam maximizing ``||H w||^2`` and that gain."""
    h = as_channel(h)
    if h.shape[1] != beams.nt:
        raise ContractViolation("channel and codebook antenna counts differ")
    g = beam_gains(h[None], beams.omega)[0]
    j = int(np.argmax(g))
    return j, float(g[j])


def select_power(case: UtilityCase, h, beams: BeamSet, powers: PowerSet, k: EeConstants) -> Decision:
    j, g = select_beam(h, beams)
    i, _ = PowerGrid(case, powers.levels, k).decide(np.array([g]))
    return Decision(int(i[0]), j)


class PowerGrid:
    """Utility of every level of a power set, for many gains at once.

    Level-only factors are computed once, so each (gain, level) entry costs
    one division or product, one exp or log1p, and one product. Values agree
    with :func:`eedset.ee_model.utility` up to rounding.
    """

    def __init__(self, case: UtilityCase, levels: np.ndarray, k: EeConstants):
        self.case = case
        self.levels = np.asarray(levels, dtype=float)
        with np.errstate(divide="ignore"):
            if case is UtilityCase.CASE_II:
                self._inner = -(k.c * k.sigma2) / self.levels
                self._scale = k.r0_raw / (self.levels + k.p0)
            else:
                self._inner = self.levels / k.sigma2
                self._scale = 1.0 / (self.levels + k.p0)

    def utilities(self, g: np.ndarray) -> np.ndarray:
        """Array of shape ``g.shape + (m1,)``."""
        g = np.asarray(g, dtype=float)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.case is UtilityCase.CASE_II:
                x = self._inner / g
                np.exp(x, out=x)
            else:
                x = self._inner * g
                np.log1p(x, out=x)
        x *= self._scale
        return x

    def decide(self, g: np.ndarray):
        """Best level index for every gain (lowest level on ties) and its utility."""
        grid = self.utilities(g)
        idx = np.argmax(grid, axis=-1)
        return idx, np.take_along_axis(grid, idx[..., None], axis=-1)[..., 0]


def decide_batch(case: UtilityCase, hs: np.ndarray, omega: np.ndarray, levels: np.ndarray, k: EeConstants):
    """Decision rule over a channel batch, for one codebook ``(nt, m2)`` or a
    stack of codebooks ``(s, nt, m2)``.

    Returns ``(power_idx, beam_idx, gains, utilities)`` with shape ``(n,)``
    (or ``(s, n)``): chosen indices, the achieved ``||H w||^2`` and the
    utility of the chosen pair.
    """
    grid = PowerGrid(case, levels, k)
    n = hs.shape[0]
    stack = omega.shape[:-2]
    per_row = max(levels.size, omega.shape[-1] * hs.shape[1]) * max(1, int(np.prod(stack)))
    rows = max(1, _CHUNK_ENTRIES // per_row)
    parts = []
    for start in range(0, n, rows):
        g = beam_gains(hs[start:start + rows], omega)
        j = np.argmax(g, axis=-1)
        gj = np.take_along_axis(g, j[..., None], axis=-1)[..., 0]
        i, u = grid.decide(gj)
        parts.append((i, j, gj, u))
    # chunks are along channels (axis 0); callers expect channels last
    out = [np.concatenate(col, axis=0) for col in zip(*parts)]
    return tuple(np.moveaxis(a, 0, -1) for a in out)


def _floats(xs) -> list[float]:
    return [float(x) for x in xs]


def codebook_to_json(beams: BeamSet, powers: Optional[PowerSet] = None) -> str:
    """Serialize a decision set. Beams are listed column-major as ``[re, im]``
    pairs; floats use the shortest repr that round-trips exactly."""
    doc = {
        "b1": powers.b1 if powers is not None else None,
        "b2": beams.b2,
        "nt": beams.nt,
        "powers": _floats(powers.levels) if powers is not None else [],
        "beams": [[float(z.real), float(z.imag)] for z in beams.omega.T.ravel()],
    }
    return json.dumps(doc, indent=1) + "\n"


def codebook_from_json(text: str) -> tuple[BeamSet, Optional[PowerSet]]:
    doc = json.loads(text)
    try:
        nt = int(doc["nt"])
        pairs = np.asarray(doc["beams"], dtype=float)
        omega = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(-1, nt).T
        beams = BeamSet(omega)
        powers = PowerSet(np.asarray(doc["powers"], dtype=float)) if doc.get("powers") else None
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ContractViolation(f"malformed codebook document: {exc}") from exc
    if doc.get("b2") is not None and doc["b2"] != beams.b2:
        raise ContractViolation("b2 does not match the number of beams")
    if powers is not None and doc.get("b1") is not None and doc["b1"] != powers.b1:
        raise ContractViolation("b1 does not match the number of power levels")
    return beams, powers


def bits_for(m: int) -> int:
    b = _bits_of(m)
    if b is None:
        raise ContractViolation(f"{m} is not a power of two")
    return b

