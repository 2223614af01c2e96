"""Conventional CSI-quantization baselines.

* Lloyd-Max and uniform scalar quantizers for the effective channel gain.
* Random vector quantization (RVQ): codebooks of i.i.d. uniform-on-sphere
  beams, used with the same receiver-side decision rule as designed sets.
* The conventional scheme: the receiver quantizes the dominant right singular
  vector component by component (B2 bits in total) and the resulting gain
  (B1 bits); the transmitter then applies the continuous optimal power at
  the quantized gain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codebook import BeamSet
from .ee_model import EeConstants, UtilityCase, optimal_power
from .errors import ContractViolation
from .linalg_channel import RngStream, as_channel, beam_gains, dominant_right_pair, dominant_right_pairs, random_unit_vectors

LM, UNIFORM = "LM", "Uniform"


@dataclass(frozen=True)
class ScalarQuantizer:
    """Quantizer with increasing ``representatives`` separated by ``boundaries``.

    A value equal to a boundary falls in the cell to its right.
    """

    boundaries: np.ndarray
    representatives: np.ndarray
    provenance: str = ""
    history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float).ravel()
        r = np.asarray(self.representatives, dtype=float).ravel()
        if r.size < 1 or b.size != r.size - 1:
            raise ContractViolation("need M representatives and M-1 boundaries")
        if np.any(np.diff(r) <= 0) or np.any(b < r[:-1]) or np.any(b > r[1:]):
            raise ContractViolation("boundaries must interleave increasing representatives")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "representatives", r)

    @property
    def levels(self) -> int:
        return self.representatives.size

    def cell(self, x):
        return np.searchsorted(self.boundaries, x, side="right")

    def quantize(self, x):
        out = self.representatives[self.cell(x)]
        return float(out) if np.ndim(out) == 0 else out

    def distortion(self, samples) -> float:
        x = np.asarray(samples, dtype=float)
        return float(np.mean((x - self.quantize(x)) ** 2))

    def to_json(self) -> str:
        return json.dumps({
            "boundaries": [float(v) for v in self.boundaries],
            "representatives": [float(v) for v in self.representatives],
            "provenance": self.provenance,
        }, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScalarQuantizer":
        doc = json.loads(text)
        return cls(np.asarray(doc["boundaries"], dtype=float), np.asarray(doc["representatives"], dtype=float),
                   doc.get("provenance", ""))


def _midpoints(r: np.ndarray) -> np.ndarray:
    return 0.5 * (r[:-1] + r[1:])


def _nn_distortion(x: np.ndarray, reps: np.ndarray) -> float:
    q = reps[np.searchsorted(_midpoints(reps), x, side="right")]
    return math.fsum(((x - q) ** 2).tolist()) / x.size


def lloyd_max_train(samples, bits: int, tol: float = 1e-9, max_iter: int = 1000) -> ScalarQuantizer:
    """Lloyd-Max quantizer with ``2**bits`` cells fitted to ``samples``.

    Alternates nearest-neighbour boundaries (midpoints) and centroid
    representatives until the relative distortion change drops below ``tol``
    or the partition stops changing. ``history`` holds the distortion of each
    iterate and is non-increasing.

    A cell that loses all its samples gets its representative moved into the
    most populated cell, halfway between that cell's centroid and its
    farthest sample. When there are no more distinct samples than cells,
    each distinct value becomes a representative (zero distortion, fewer
    than ``2**bits`` cells).
    """
    if bits < 0:
        raise ContractViolation("bits must be >= 0")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ContractViolation("need finite samples")
    m = 1 << bits
    distinct = np.unique(x)
    if distinct.size <= m:
        return ScalarQuantizer(_midpoints(distinct), distinct, f"lloyd-max on {x.size} samples", (0.0,))

    reps = np.quantile(x, (np.arange(m) + 0.5) / m)
    if np.any(np.diff(reps) <= 0):
        reps = distinct[np.round(np.linspace(0, distinct.size - 1, m)).astype(int)]
    history = [_nn_distortion(x, reps)]
    prev_starts = None
    for _ in range(max_iter):
        starts = np.searchsorted(x, _midpoints(reps), side="left")
        edges = np.concatenate(([0], starts, [x.size]))
        counts = np.diff(edges)
        if prev_starts is not None and np.array_equal(starts, prev_starts):
            break
        prev_starts = starts
        full = counts > 0
        new = reps.copy()
        new[full] = np.add.reduceat(x, edges[:-1][full]) / counts[full]
        empty = np.flatnonzero(~full)
        if empty.size:
            new = _repair_empty(x, edges, counts, new, empty[0])
        reps = new
        history.append(_nn_distortion(x, reps))
        if history[-2] - history[-1] <= tol * history[-2]:
            break
    return ScalarQuantizer(_midpoints(reps), reps, f"lloyd-max on {x.size} samples", tuple(history))


def _repair_empty(x, edges, counts, reps, empty_idx):
    order = np.argsort(-counts, kind="stable")
    for cell in order:
        seg = x[edges[cell]:edges[cell + 1]]
        if seg.size >= 2 and seg[0] < seg[-1]:
            c = reps[cell]
            far = seg[0] if c - seg[0] > seg[-1] - c else seg[-1]
            reps = reps.copy()
            reps[empty_idx] = 0.5 * (c + far)
            reps = np.sort(reps)
            if np.all(np.diff(reps) > 0):
                return reps
            break
    return reps


def uniform_quantizer(lo: float, hi: float, bits: int) -> ScalarQuantizer:
    """``2**bits`` equal-width cells on ``[lo, hi]`` with midpoint representatives.

    Inputs outside the range fall in the end cells.
    """
    if not hi > lo:
        raise ContractViolation("uniform quantizer needs hi > lo")
    if bits < 0:
        raise ContractViolation("bits must be >= 0")
    m = 1 << bits
    width = (hi - lo) / m
    edges = lo + width * np.arange(1, m)
    reps = lo + width * (np.arange(m) + 0.5)
    return ScalarQuantizer(edges, reps, f"uniform on [{lo!r}, {hi!r}]")


def uniform_quantize(x, lo: float, hi: float, bits: int):
    """Arithmetic form of :func:`uniform_quantizer` that also works for very
    large ``bits`` (no tables are built)."""
    x = np.asarray(x, dtype=float)
    m = 2.0**bits
    width = (hi - lo) / m
    idx = np.clip(np.floor((x - lo) / width), 0, m - 1)
    return lo + (idx + 0.5) * width


@dataclass(frozen=True)
class RvqCodebook:
    beams: BeamSet
    rng: Optional[RngStream] = None


def rvq_generate(nt: int, b2: int, rng: RngStream) -> RvqCodebook:
    """``2**b2`` i.i.d. uniform unit vectors in C^nt."""
    if b2 < 0:
        raise ContractViolation("b2 must be >= 0")
    return RvqCodebook(BeamSet(random_unit_vectors(rng.generator(), nt, 1 << b2)), rng)


def component_bits(b2: int, nt: int) -> np.ndarray:
    """Bits per real component of an ``nt``-vector, ordered
    ``re(v1), im(v1), re(v2), ...``; leftover bits go to the first components."""
    n = 2 * nt
    bits = np.full(n, b2 // n, dtype=np.int64)
    bits[: b2 % n] += 1
    return bits


def quantize_beams(v: np.ndarray, b2: int) -> np.ndarray:
    """Scalar-quantize the real components of unit vectors ``v`` (rows) over
    ``[-1, 1]`` and renormalize. A vector quantized to all zeros becomes ``e1``."""
    v = np.atleast_2d(v)
    n, nt = v.shape
    comps = np.empty((n, 2 * nt))
    comps[:, 0::2], comps[:, 1::2] = v.real, v.imag
    for col, bits in enumerate(component_bits(b2, nt)):
        comps[:, col] = uniform_quantize(comps[:, col], -1.0, 1.0, int(bits)) if bits else 0.0
    q = comps[:, 0::2] + 1j * comps[:, 1::2]
    norms = np.linalg.norm(q, axis=1)
    zero = norms == 0
    q[zero] = 0.0
    q[zero, 0] = 1.0
    norms[zero] = 1.0
    return q / norms[:, None]


def _row_gains(hs: np.ndarray, w: np.ndarray) -> np.ndarray:
    y = np.einsum("nij,nj->ni", hs, w)
    return np.sum(y.real**2 + y.imag**2, axis=1)


def _powers_at(case: UtilityCase, ghat: np.ndarray, k: EeConstants) -> np.ndarray:
    p = np.zeros_like(ghat)
    pos = ghat > 0
    if np.any(pos):
        p[pos] = optimal_power(case, ghat[pos], k)
    return np.clip(p, 0.0, k.pmax)


def conventional_decide(case: UtilityCase, h, gain_q: Optional[ScalarQuantizer], beam_bits: int,
                        k: EeConstants) -> tuple[float, np.ndarray]:
    """Transmit power and beam under the conventional quantize-the-CSI scheme.

    ``gain_q=None`` feeds the gain back exactly.
    """
    h = as_channel(h)
    _, v, _ = dominant_right_pair(h)
    w = quantize_beams(v, beam_bits)[0]
    g = float(_row_gains(h[None], w[None])[0])
    ghat = g if gain_q is None else gain_q.quantize(g)
    return float(_powers_at(case, np.array([ghat]), k)[0]), w


@dataclass
class ConventionalScheme:
    """Gain quantizer (Lloyd-Max or uniform) plus component-quantized beams."""

    case: UtilityCase
    kind: str
    b1: int
    b2: int
    k: EeConstants
    gain_q: Optional[ScalarQuantizer] = None

    def fit(self, train_hs: np.ndarray) -> "ConventionalScheme":
        """Train the gain quantizer on ``||H w_hat||^2`` over a training batch."""
        _, v, _ = dominant_right_pairs(train_hs)
        g = _row_gains(train_hs, quantize_beams(v, self.b2))
        if self.kind == LM:
            self.gain_q = lloyd_max_train(g, self.b1)
        elif self.kind == UNIFORM:
            self.gain_q = uniform_quantizer(0.0, float(g.max()), self.b1)
        else:
            raise ContractViolation(f"unknown conventional scheme {self.kind!r}")
        return self

    def decide(self, hs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chosen powers and achieved gains ``||H w_hat||^2`` for each channel."""
        _, v, _ = dominant_right_pairs(hs)
        g = _row_gains(hs, quantize_beams(v, self.b2))
        ghat = g if self.gain_q is None else self.gain_q.quantize(g)
        return _powers_at(self.case, ghat, self.k), g


def rvq_best_gains(hs: np.ndarray, b2: int, rng: RngStream) -> np.ndarray:
    """Per-channel best gain over one RVQ draw (used for the monotonicity check)."""
    cb = rvq_generate(hs.shape[2], b2, rng).beams
    return beam_gains(hs, cb.omega).max(axis=-1)
