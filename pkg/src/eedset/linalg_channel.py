"""Rayleigh channel sampling, beam gains and dominant right singular pairs.

Channels are stored as complex numpy arrays. A single channel has shape
``(nr, nt)``; a batch has shape ``(n, nr, nt)``. Beamforming vectors have
shape ``(nt,)`` and codebooks shape ``(nt, m2)`` (one beam per column).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation

UNIT_NORM_TOL = 1e-9
POWER_ITER_RTOL = 1e-12
POWER_ITER_MAX = 10_000


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    A stream is a value: it never carries mutable generator state. Sub-streams
    are addressed by a key path, so every consumer can derive its own
    generator independently of evaluation order.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(ss))


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{what} has non-finite entries")


def as_channel(h) -> np.ndarray:
    """Validate and return a single ``(nr, nt)`` complex channel matrix."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
        raise ContractViolation(f"channel must be a non-empty 2-D matrix, got shape {h.shape}")
    _check_finite(h, "channel")
    return h


def as_beam(w) -> np.ndarray:
    """Validate and return a unit-norm complex beamforming vector."""
    w = np.asarray(w, dtype=complex)
    if w.ndim != 1 or w.size < 1:
        raise ContractViolation(f"beam must be a non-empty vector, got shape {w.shape}")
    _check_finite(w, "beam")
    if abs(np.linalg.norm(w) - 1.0) > UNIT_NORM_TOL:
        raise ContractViolation(f"beam norm {np.linalg.norm(w)!r} is not 1")
    return w


def complex_gaussian(gen: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts i.i.d. Normal(0, 1/2)."""
    z = gen.standard_normal((*np.atleast_1d(shape), 2)) * np.sqrt(0.5)
    return z[..., 0] + 1j * z[..., 1]


def sample_channel(nr: int, nt: int, rng: RngStream) -> np.ndarray:
    return sample_channels(1, nr, nt, rng)[0]


def sample_channels(n: int, nr: int, nt: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. Rayleigh channels of shape ``(nr, nt)``."""
    if n < 1 or nr < 1 or nt < 1:
        raise ContractViolation(f"need n, nr, nt >= 1, got {(n, nr, nt)}")
    return complex_gaussian(rng.generator(), (n, nr, nt))


def normalize_columns(a: np.ndarray) -> np.ndarray:
    """Scale every column of ``a`` (shape ``(..., nt, m)``) to unit norm."""
    return a / np.linalg.norm(a, axis=-2, keepdims=True)


def random_unit_vectors(gen: np.random.Generator, nt: int, m: int) -> np.ndarray:
    """``m`` i.i.d. uniform-on-sphere vectors in C^nt as the columns of a matrix."""
    return normalize_columns(complex_gaussian(gen, (nt, m)))


def effective_gain(h, w) -> float:
    """Equivalent channel gain ``||H w||^2`` for a unit beam ``w``."""
    h = as_channel(h)
    w = as_beam(w)
    if w.shape[0] != h.shape[1]:
        raise ContractViolation(f"beam length {w.shape[0]} != channel columns {h.shape[1]}")
    y = h @ w
    return float(np.real(np.vdot(y, y)))


def beam_gains(hs: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Gains ``||H_l w_j||^2`` for a channel batch and one or more codebooks.

    ``hs`` has shape ``(n, nr, nt)`` and ``omega`` shape ``(..., nt, m)``;
    the result has shape ``(n, ..., m)``. Stacked codebooks go through a
    single matrix product.
    """
    n, nr, nt = hs.shape
    if omega.shape[-2] != nt:
        raise ContractViolation(f"codebook has {omega.shape[-2]} rows, channels have {nt} columns")
    stack = omega.shape[:-2]
    m = omega.shape[-1]
    flat = np.moveaxis(omega, -2, 0).reshape(nt, -1)
    y = hs.reshape(n * nr, nt) @ flat
    g = y.real**2 + y.imag**2
    if nr > 1:
        g = g.reshape(n, nr, -1).sum(axis=1)
    return g.reshape(n, *stack, m)


class DominantPair(NamedTuple):
    gain: float
    vector: np.ndarray
    degenerate: bool


def _start_vector(nt: int) -> np.ndarray:
    # e1 plus a small fixed perturbation so the start is never orthogonal to
    # the dominant direction for generic channels
    x = np.zeros(nt, dtype=complex)
    x[0] = 1.0
    x += 1e-3 * (np.arange(nt) + 1) * (1.0 + 0.5j)
    return x / np.linalg.norm(x)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate each row of ``v`` so its first non-negligible entry is real-positive."""
    mag = np.abs(v)
    thresh = 1e-12 * mag.max(axis=-1, keepdims=True)
    first = np.argmax(mag > thresh, axis=-1)
    lead = v[np.arange(v.shape[0]), first]
    phase = np.where(np.abs(lead) > 0, lead / np.where(lead == 0, 1, np.abs(lead)), 1.0)
    v = v * np.conj(phase)[:, None]
    rows = np.arange(v.shape[0])
    v[rows, first] = v[rows, first].real
    return v


def dominant_right_pairs(hs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched power iteration on ``H^H H``.

    Returns ``(gains, vectors, degenerate)`` with shapes ``(n,)``, ``(n, nt)``
    and ``(n,)``. Each element stops iterating as soon as its own eigenvalue
    estimate settles, so results do not depend on how a batch is partitioned.
    """
    hs = np.asarray(hs, dtype=complex)
    n, _, nt = hs.shape
    a = np.conj(np.swapaxes(hs, 1, 2)) @ hs
    x = np.tile(_start_vector(nt), (n, 1))
    lam = np.zeros(n)
    active = np.ones(n, dtype=bool)
    degenerate = np.zeros(n, dtype=bool)
    for _ in range(POWER_ITER_MAX):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        y = np.einsum("nij,nj->ni", a[idx], x[idx])
        ynorm = np.linalg.norm(y, axis=1)
        zero = ynorm == 0
        if zero.any():
            degenerate[idx[zero]] = True
            active[idx[zero]] = False
            idx, y, ynorm = idx[~zero], y[~zero], ynorm[~zero]
        lam_new = np.real(np.einsum("ni,ni->n", np.conj(x[idx]), y))
        x[idx] = y / ynorm[:, None]
        done = np.abs(lam_new - lam[idx]) < POWER_ITER_RTOL * np.abs(lam_new)
        lam[idx] = lam_new
        active[idx[done]] = False

    x[degenerate] = 0.0
    x[degenerate, 0] = 1.0
    v = _fix_phase(x)
    hv = np.einsum("nij,nj->ni", hs, v)
    gains = np.sum(hv.real**2 + hv.imag**2, axis=1)
    gains[degenerate] = 0.0
    return gains, v, degenerate


def dominant_right_pair(h) -> DominantPair:
    """Largest squared singular value of ``h`` and its right singular vector.

    ``v`` is unit-norm with its first non-zero entry real-positive, and the
    gain is recomputed as ``||H v||^2``. An all-zero matrix returns
    ``(0, e1)`` flagged degenerate.
    """
    h = as_channel(h)
    g, v, deg = dominant_right_pairs(h[None])
    return DominantPair(float(g[0]), v[0], bool(deg[0]))


def _column_names(nr: int, nt: int) -> list[str]:
    cols = []
    for i in range(nr):
        for j in range(nt):
            cols += [f"re_{i}_{j}", f"im_{i}_{j}"]
    return cols


def write_channels_csv(hs: np.ndarray, path) -> None:
    """Persist a channel batch; entries in row-major order, 17 significant digits."""
    hs = np.asarray(hs, dtype=complex)
    n, nr, nt = hs.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *_column_names(nr, nt)])
        flat = hs.reshape(n, nr * nt)
        for idx in range(n):
            row = [str(idx)]
            for z in flat[idx]:
                row += [format(z.real, ".17g"), format(z.imag, ".17g")]
            w.writerow(row)


def read_channels_csv(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "index" or len(rows) < 2:
        raise ContractViolation(f"{path}: not a channel batch file")
    header = rows[0][1:]
    last = header[-1].split("_")
    nr, nt = int(last[1]) + 1, int(last[2]) + 1
    if header != _column_names(nr, nt):
        raise ContractViolation(f"{path}: unexpected column layout")
    data = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    hs = (data[:, 0::2] + 1j * data[:, 1::2]).reshape(-1, nr, nt)
    _check_finite(hs, "channel batch")
    return hs
