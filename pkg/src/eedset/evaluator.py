"""Monte-Carlo fitness, QoS feasibility and the perfect-CSI reference.

Batch averages use :func:`math.fsum`, which rounds the exact sum once. The
result is therefore independent of channel order and of how a batch is split
across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codebook import BeamSet, PowerSet, decide_batch
from .ee_model import EeConstants, UtilityCase, benefit, continuous_optima, utility
from .errors import ContractViolation, DomainError
from .linalg_channel import RngStream, sample_channels


@dataclass(frozen=True, eq=False)
class ChannelBatch:
    """Immutable set of channel realizations shared by every fitness call."""

    channels: np.ndarray
    seed: Optional[int] = None
    stream_id: Optional[int] = None
    _csit: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        hs = np.array(self.channels, dtype=complex)
        if hs.ndim == 2:
            hs = hs[None]
        if hs.ndim != 3 or hs.shape[0] < 1:
            raise ContractViolation(f"channel batch must have shape (n, nr, nt), got {hs.shape}")
        if not np.all(np.isfinite(hs)):
            raise ContractViolation("channel batch has non-finite entries")
        hs.setflags(write=False)
        object.__setattr__(self, "channels", hs)

    @classmethod
    def sample(cls, n: int, nr: int, nt: int, rng: RngStream) -> "ChannelBatch":
        return cls(sample_channels(n, nr, nt, rng), seed=rng.seed, stream_id=rng.stream_id)

    def __len__(self):
        return self.channels.shape[0]

    @property
    def nt(self) -> int:
        return self.channels.shape[2]

    def csit(self, case: UtilityCase, k: EeConstants) -> np.ndarray:
        """Per-channel continuous-optimum utilities (cached per case and constants)."""
        key = (case, k)
        if key not in self._csit:
            _, u, _ = continuous_optima(case, self.channels, k)
            u.setflags(write=False)
            self._csit[key] = u
        return self._csit[key]


@dataclass(frozen=True)
class EvalReport:
    avg_utility: float
    avg_case2_benefit: float
    feasible: bool
    csit_utility: float
    loss_pct: float


def batch_mean(values) -> float:
    return _fsum_mean(np.asarray(values, dtype=float).ravel().tolist())


def decision_stats(case: UtilityCase, hs: np.ndarray, omega: np.ndarray, levels: np.ndarray, k: EeConstants):
    """Average utility and average Case II benefit of the decision rule.

    Hot path of the optimizer: takes raw arrays, no validation.
    """
    i, _, g, u = decide_batch(case, hs, omega, levels, k)
    return batch_mean(u), batch_mean(benefit(UtilityCase.CASE_II, levels[i], g, k))


def population_stats(case: UtilityCase, hs: np.ndarray, omegas: np.ndarray, levels: np.ndarray, k: EeConstants):
    """:func:`decision_stats` for a stack of codebooks ``(s, nt, m2)``.

    Returns two arrays of shape ``(s,)``; row ``r`` is bit-identical to
    ``decision_stats`` on ``omegas[r]`` alone.
    """
    i, _, g, u = decide_batch(case, hs, omegas, levels, k)
    v2 = benefit(UtilityCase.CASE_II, levels[i], g, k)
    return np.array([_fsum_mean(r) for r in u.tolist()]), np.array([_fsum_mean(r) for r in v2.tolist()])


def _fsum_mean(values: list) -> float:
    return math.fsum(values) / len(values)


def fitness(case: UtilityCase, batch: ChannelBatch, powers: PowerSet, beams: BeamSet, k: EeConstants) -> float:
    """Mean utility of the decision set over the batch."""
    return decision_stats(case, batch.channels, beams.omega, powers.levels, k)[0]


def qos_feasible(case: UtilityCase, batch: ChannelBatch, powers: PowerSet, beams: BeamSet,
                 k: EeConstants, r0: float) -> tuple[bool, float]:
    """Check the mean Case II benefit against ``r0``.

    Decisions follow ``case`` (the objective being optimized); the constraint
    itself always uses the Case II benefit.
    """
    _, avg = decision_stats(case, batch.channels, beams.omega, powers.levels, k)
    return avg >= r0, avg


def csit_utility(case: UtilityCase, batch: ChannelBatch, k: EeConstants) -> float:
    return batch_mean(batch.csit(case, k))


def optimality_loss(csit: float, achieved: float) -> float:
    """Relative loss in percent: ``100 (csit - achieved) / csit``."""
    if not csit > 0:
        raise DomainError(f"CSIT utility must be > 0, got {csit!r}")
    return 100.0 * (csit - achieved) / csit


def report(case: UtilityCase, batch: ChannelBatch, avg_utility: float, avg_case2: float,
           k: EeConstants, r0: float) -> EvalReport:
    csit = csit_utility(case, batch, k)
    return EvalReport(avg_utility, avg_case2, avg_case2 >= r0, csit, optimality_loss(csit, avg_utility))


def evaluate(case: UtilityCase, batch: ChannelBatch, powers: PowerSet, beams: BeamSet,
             k: EeConstants, r0: float) -> EvalReport:
    if beams.nt != batch.nt:
        raise ContractViolation("codebook and channel antenna counts differ")
    u, v2 = decision_stats(case, batch.channels, beams.omega, powers.levels, k)
    return report(case, batch, u, v2, k, r0)


def evaluate_decisions(case: UtilityCase, batch: ChannelBatch, powers: np.ndarray, gains: np.ndarray,
                       k: EeConstants, r0: float) -> EvalReport:
    """Report for arbitrary per-channel (power, achieved gain) decisions."""
    u = batch_mean(utility(case, powers, gains, k))
    v2 = batch_mean(benefit(UtilityCase.CASE_II, powers, gains, k))
    return report(case, batch, u, v2, k, r0)
