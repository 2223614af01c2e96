"""Sweeps over the feedback split (B1 power bits, B2 beam bits).

Every point trains on one channel batch and reports on a disjoint held-out
batch. Random streams are derived from ``(seed, method, b1, b2)``, so a point
gives the same record whether it runs alone, in a sweep, or in a worker
process.

Configuration files are INI-style (``key = value`` under sections
``[experiment]``, ``[constants]``, ``[iwo]`` and ``[sweep]``).
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .baselines import LM, UNIFORM, ConventionalScheme, rvq_generate
from .codebook import FeedbackBudget, PowerSet, uniform_power_grid
from .ee_model import EeConstants, UtilityCase
from .errors import ConfigError, ContractViolation
from .evaluator import ChannelBatch, evaluate, evaluate_decisions
from .iwo_de import IwoDeParams, OptimizeResult, optimize
from .linalg_channel import RngStream

IWODE, RVQ = "IWODE", "RVQ"
METHODS = (IWODE, LM, UNIFORM, RVQ)
_METHOD_ID = {m: i for i, m in enumerate(METHODS)}
SWEEP_KINDS = ("b2", "b1", "joint")

# stream ids; algorithm streams hang below _ALGO keyed by (method, b1, b2)
_TRAIN, _EVAL, _ALGO = 1, 2, 3


@dataclass(frozen=True)
class SweepSpec:
    kind: str = "b2"
    b1_fixed: int = 4
    b2_fixed: int = 6
    total_bits: int = 8
    grid: tuple[int, ...] = tuple(range(1, 9))

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ConfigError(f"sweep kind must be one of {SWEEP_KINDS}, got {self.kind!r}")
        if not self.grid or min(self.grid) < 0:
            raise ConfigError("sweep grid must be a non-empty list of bit counts >= 0")

    def points(self) -> list[tuple[int, int]]:
        """``(b1, b2)`` pairs in grid order."""
        if self.kind == "b2":
            return [(self.b1_fixed, b) for b in self.grid]
        if self.kind == "b1":
            return [(b, self.b2_fixed) for b in self.grid]
        return [(self.total_bits - b, b) for b in self.grid if b <= self.total_bits]


@dataclass(frozen=True)
class ExperimentConfig:
    nt: int = 4
    nr: int = 1
    n_train: int = 1000
    n_eval: int = 5000
    case: UtilityCase = UtilityCase.CASE_II
    constants: EeConstants = EeConstants()
    r0: float = 3e5
    t0: float = 0.01
    rate_r: float = 800.0
    iwo: IwoDeParams = field(default_factory=lambda: IwoDeParams.for_antennas(4, t_max=100))
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = (1, 2, 3)
    rvq_draws: int = 10
    sweep: SweepSpec = SweepSpec()
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.nt < 1 or self.nr < 1:
            raise ConfigError("antenna counts must be >= 1")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("batch sizes must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.rvq_draws < 1:
            raise ConfigError("rvq_draws must be >= 1")
        if self.r0 < 0 or not self.t0 > 0 or not self.rate_r > 0:
            raise ConfigError("need r0 >= 0, t0 > 0 and rate_r > 0")

    def budget(self, b1: int, b2: int) -> FeedbackBudget:
        try:
            return FeedbackBudget(b1, b2, self.rate_r, self.t0)
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SweepRecord:
    case: str
    method: str
    b1: int
    b2: int
    seed: int
    avg_utility: float
    csit_utility: float
    loss_pct: float
    train_loss_pct: float
    feasible: bool
    wall_time_s: float


# ---------------------------------------------------------------- config I/O

_SECTIONS = {
    "experiment": {"nt", "nr", "n_train", "n_eval", "case", "r0", "t0", "rate_r", "methods", "seeds",
                   "rvq_draws", "workers", "timing"},
    "constants": {f.name for f in dataclasses.fields(EeConstants)},
    "iwo": {f.name for f in dataclasses.fields(IwoDeParams)},
    "sweep": {"kind", "b1_fixed", "b2_fixed", "total_bits", "grid"},
}


def _int_list(text: str) -> tuple[int, ...]:
    out = []
    for part in text.replace(",", " ").split():
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Build a config from INI text; missing keys keep their defaults.

    ``mu_ini``/``mu_end`` default to ``1/nt`` and ``1/(200 nt)``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        extra = set(cp[name]) - _SECTIONS[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in _SECTIONS}
    try:
        ex = sec["experiment"]
        kw: dict = {}
        for key in ("nt", "nr", "n_train", "n_eval", "rvq_draws", "workers"):
            if key in ex:
                kw[key] = int(ex[key])
        for key in ("r0", "t0", "rate_r"):
            if key in ex:
                kw[key] = float(ex[key])
        if "case" in ex:
            kw["case"] = UtilityCase.parse(ex["case"])
        if "methods" in ex:
            kw["methods"] = tuple(m.strip() for m in ex["methods"].replace(",", " ").split())
        if "seeds" in ex:
            kw["seeds"] = _int_list(ex["seeds"])
        if "timing" in ex:
            kw["timing"] = _bool(ex["timing"])
        kw["constants"] = EeConstants(**{key: float(v) for key, v in sec["constants"].items()})
        iwo = {}
        for key, v in sec["iwo"].items():
            iwo[key] = float(v) if key in ("gamma", "mu_ini", "mu_end", "f0", "cr") else int(v)
        iwo.setdefault("t_max", 100)
        kw["iwo"] = IwoDeParams.for_antennas(kw.get("nt", 4), **iwo)
        sw = {}
        for key, v in sec["sweep"].items():
            sw[key] = v.strip() if key == "kind" else _int_list(v) if key == "grid" else int(v)
        kw["sweep"] = SweepSpec(**sw)
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------- points

def batches(cfg: ExperimentConfig, seed: int) -> tuple[ChannelBatch, ChannelBatch]:
    """Training and held-out batches for ``seed`` (disjoint streams)."""
    train = ChannelBatch.sample(cfg.n_train, cfg.nr, cfg.nt, RngStream(seed, _TRAIN))
    held = ChannelBatch.sample(cfg.n_eval, cfg.nr, cfg.nt, RngStream(seed, _EVAL))
    return train, held


def algo_stream(seed: int, method: str, b1: int, b2: int) -> RngStream:
    return RngStream(seed, _ALGO, (_METHOD_ID[method], b1, b2))


def power_grid(cfg: ExperimentConfig, b1: int) -> PowerSet:
    return uniform_power_grid(b1, cfg.constants.pmax)


def design_iwode(cfg: ExperimentConfig, b1: int, b2: int, seed: int,
                 train: Optional[ChannelBatch] = None) -> tuple[PowerSet, OptimizeResult]:
    if train is None:
        train = batches(cfg, seed)[0]
    powers = power_grid(cfg, b1)
    res = optimize(cfg.case, train, powers, b2, cfg.iwo, cfg.constants, algo_stream(seed, IWODE, b1, b2), cfg.r0)
    return powers, res


def _fsum_mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def run_point(cfg: ExperimentConfig, b1: int, b2: int, method: str, seed: int,
              data: Optional[tuple[ChannelBatch, ChannelBatch]] = None) -> SweepRecord:
    """Design with ``method`` at ``(b1, b2)`` and report on the held-out batch."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    if b1 < 0 or b2 < 0:
        raise ConfigError("bit counts must be >= 0")
    cfg.budget(b1, b2)
    train, held = data if data is not None else batches(cfg, seed)
    k, case = cfg.constants, cfg.case
    start = time.perf_counter()
    if method == IWODE:
        powers, res = design_iwode(cfg, b1, b2, seed, train)
        rep = evaluate(case, held, powers, res.beams, k, cfg.r0)
        tr = evaluate(case, train, powers, res.beams, k, cfg.r0)
        avg, csit, loss, tr_loss, ok = rep.avg_utility, rep.csit_utility, rep.loss_pct, tr.loss_pct, rep.feasible
    elif method == RVQ:
        powers = power_grid(cfg, b1)
        reps, trs = [], []
        for d in range(cfg.rvq_draws):
            beams = rvq_generate(cfg.nt, b2, algo_stream(seed, RVQ, b1, b2).child(d)).beams
            reps.append(evaluate(case, held, powers, beams, k, cfg.r0))
            trs.append(evaluate(case, train, powers, beams, k, cfg.r0))
        avg = _fsum_mean(r.avg_utility for r in reps)
        csit = reps[0].csit_utility
        loss = _fsum_mean(r.loss_pct for r in reps)
        tr_loss = _fsum_mean(r.loss_pct for r in trs)
        ok = _fsum_mean(r.avg_case2_benefit for r in reps) >= cfg.r0
    else:
        scheme = ConventionalScheme(case, method, b1, b2, k).fit(train.channels)
        p, g = scheme.decide(held.channels)
        rep = evaluate_decisions(case, held, p, g, k, cfg.r0)
        p_tr, g_tr = scheme.decide(train.channels)
        tr = evaluate_decisions(case, train, p_tr, g_tr, k, cfg.r0)
        avg, csit, loss, tr_loss, ok = rep.avg_utility, rep.csit_utility, rep.loss_pct, tr.loss_pct, rep.feasible
    wall = time.perf_counter() - start if cfg.timing else 0.0
    return SweepRecord(case.value, method, b1, b2, seed, avg, csit, loss, tr_loss, bool(ok), wall)


# ---------------------------------------------------------------- sweeps

def _job(args):
    cfg, b1, b2, method, seed = args
    return run_point(cfg, b1, b2, method, seed)


def run_sweep(cfg: ExperimentConfig, spec: Optional[SweepSpec] = None) -> list[SweepRecord]:
    """All ``seed x point x method`` records, in that nesting order."""
    spec = spec or cfg.sweep
    pts = spec.points()
    for b1, b2 in pts:
        cfg.budget(b1, b2)
    jobs = [(cfg, b1, b2, m, s) for s in cfg.seeds for b1, b2 in pts for m in cfg.methods]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_job, jobs))
    out = []
    for seed in cfg.seeds:
        data = batches(cfg, seed)
        out += [run_point(cfg, b1, b2, m, seed, data) for b1, b2 in pts for m in cfg.methods]
    return out


def sweep_vary_b2(cfg: ExperimentConfig, b1: int = 4, grid: Sequence[int] = range(1, 9)) -> list[SweepRecord]:
    return run_sweep(cfg, SweepSpec("b2", b1_fixed=b1, grid=tuple(grid)))


def sweep_vary_b1(cfg: ExperimentConfig, b2: int = 6, grid: Sequence[int] = range(1, 9)) -> list[SweepRecord]:
    return run_sweep(cfg, SweepSpec("b1", b2_fixed=b2, grid=tuple(grid)))


def sweep_joint(cfg: ExperimentConfig, total: int = 8, grid: Sequence[int] = range(1, 9)) -> list[SweepRecord]:
    """Every split ``b1 + b2 = total``; ``b2 = total`` leaves the single level ``pmax``."""
    return run_sweep(cfg, SweepSpec("joint", total_bits=total, grid=tuple(grid)))


# ---------------------------------------------------------------- CSV

FIELDS = [f.name for f in dataclasses.fields(SweepRecord)]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def emit_csv(records: Sequence[SweepRecord], path) -> None:
    """Write records with a header row; reals carry 17 significant digits."""
    if not records:
        raise ContractViolation("no records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([_cell(getattr(r, name)) for name in FIELDS])


def read_csv(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in dataclasses.fields(SweepRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for name, text in row.items():
                t = types[name]
                if t == "int":
                    kw[name] = int(text)
                elif t == "float":
                    kw[name] = float(text)
                elif t == "bool":
                    kw[name] = text == "true"
                else:
                    kw[name] = text
            out.append(SweepRecord(**kw))
    return out
