"""Energy-efficient decision sets for MIMO links with finite-rate feedback.

The transmitter picks a power level and a beamforming vector from finite
sets, using a few bits fed back by the receiver. This package designs those
sets with a hybrid invasive-weed / differential-evolution search, evaluates
them by Monte Carlo against the perfect-CSI optimum, and compares them with
conventional quantization baselines.
"""

from .codebook import BeamSet, DecisionSet, FeedbackBudget, PowerSet, uniform_power_grid
from .ee_model import EeConstants, UtilityCase, optimal_power, utility
from .errors import ConfigError, ContractViolation, DomainError
from .evaluator import ChannelBatch, EvalReport, evaluate
from .iwo_de import IwoDeParams, optimize
from .linalg_channel import RngStream

__version__ = "0.1.0"
