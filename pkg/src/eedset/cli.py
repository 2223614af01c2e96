"""Command-line entry point.

Exit codes: 0 success, 2 bad configuration or arguments, 3 no feasible
result, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .baselines import ConventionalScheme, rvq_generate
from .codebook import codebook_from_json, codebook_to_json
from .errors import ConfigError, ContractViolation, DomainError
from .evaluator import ChannelBatch, evaluate, evaluate_decisions
from .linalg_channel import RngStream, read_channels_csv, sample_channels, write_channels_csv

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("eedset")


class _Infeasible(Exception):
    pass


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _report_dict(rep) -> dict:
    return {key: (float(v) if isinstance(v, float) else v) for key, v in dataclasses.asdict(rep).items()}


def _seed(args, cfg) -> int:
    return args.seed if args.seed is not None else cfg.seeds[0]


def _train_batch(args, cfg, seed) -> ChannelBatch:
    if getattr(args, "train_channels", None):
        return ChannelBatch(read_channels_csv(args.train_channels))
    return ex.batches(cfg, seed)[0]


def _eval_batch(args, cfg, seed) -> ChannelBatch:
    if getattr(args, "channels", None):
        return ChannelBatch(read_channels_csv(args.channels))
    return ChannelBatch.sample(cfg.n_eval, cfg.nr, cfg.nt, RngStream(seed, ex._EVAL))


def cmd_gen_channels(args, cfg) -> int:
    seed = _seed(args, cfg)
    n = args.n if args.n is not None else cfg.n_eval
    hs = sample_channels(n, cfg.nr, cfg.nt, RngStream(seed, args.stream))
    if args.out is None:
        raise ConfigError("gen-channels needs --out")
    write_channels_csv(hs, args.out)
    return EXIT_OK


def cmd_optimize(args, cfg) -> int:
    seed = _seed(args, cfg)
    cfg.budget(args.b1, args.b2)
    powers, res = ex.design_iwode(cfg, args.b1, args.b2, seed, _train_batch(args, cfg, seed))
    _write(args.out, codebook_to_json(res.beams, powers))
    trace_path = args.trace or (f"{args.out}.trace.csv" if args.out not in (None, "-") else None)
    if trace_path:
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best_fitness", "mean_fitness", "mu_t"])
            for t in res.trace:
                w.writerow([t.generation, format(t.best_fitness, ".17g"), format(t.mean_fitness, ".17g"),
                            format(t.mu_t, ".17g")])
    if not res.best.feasible:
        raise _Infeasible("no codebook met the QoS constraint")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    seed = _seed(args, cfg)
    beams, powers = codebook_from_json(Path(args.codebook).read_text())
    if powers is None:
        raise ConfigError("codebook file has no power levels")
    rep = evaluate(cfg.case, _eval_batch(args, cfg, seed), powers, beams, cfg.constants, cfg.r0)
    _write(args.out, json.dumps(_report_dict(rep), indent=1) + "\n")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_baseline(args, cfg) -> int:
    seed = _seed(args, cfg)
    cfg.budget(args.b1, args.b2)
    train = _train_batch(args, cfg, seed)
    held = _eval_batch(args, cfg, seed)
    doc = {"method": args.method, "b1": args.b1, "b2": args.b2, "seed": seed}
    if args.method == ex.RVQ:
        powers = ex.power_grid(cfg, args.b1)
        beams = rvq_generate(cfg.nt, args.b2, ex.algo_stream(seed, ex.RVQ, args.b1, args.b2).child(0)).beams
        rep = evaluate(cfg.case, held, powers, beams, cfg.constants, cfg.r0)
        doc["codebook"] = json.loads(codebook_to_json(beams, powers))
    else:
        scheme = ConventionalScheme(cfg.case, args.method, args.b1, args.b2, cfg.constants).fit(train.channels)
        p, g = scheme.decide(held.channels)
        rep = evaluate_decisions(cfg.case, held, p, g, cfg.constants, cfg.r0)
        doc["quantizer"] = json.loads(scheme.gain_q.to_json())
    doc["report"] = _report_dict(rep)
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_sweep(args, cfg) -> int:
    spec = dataclasses.replace(cfg.sweep, kind=args.kind) if args.kind else cfg.sweep
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    if args.timing:
        cfg = dataclasses.replace(cfg, timing=True)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    if args.out is None:
        raise ConfigError("sweep needs --out")
    records = ex.run_sweep(cfg, spec)
    ex.emit_csv(records, args.out)
    if not any(r.feasible for r in records):
        raise _Infeasible("every sweep point violates the QoS constraint")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [experiment], [constants], [iwo], [sweep]")
    common.add_argument("--seed", type=int, help="master seed (default: first seed in the config)")
    common.add_argument("--out", help="output file ('-' for stdout where allowed)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eedset", description="Energy-efficient finite-feedback decision sets.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-channels", parents=[common], help="write a channel batch CSV")
    g.add_argument("--n", type=int, help="number of channels (default n_eval)")
    g.add_argument("--stream", type=int, default=ex._EVAL, help="stream id (1 train, 2 held-out)")
    g.set_defaults(func=cmd_gen_channels)

    o = sub.add_parser("optimize", parents=[common], help="run IWO-DE and write a codebook JSON")
    o.add_argument("--b1", type=int, default=4)
    o.add_argument("--b2", type=int, default=3)
    o.add_argument("--train-channels", help="training batch CSV (default: sampled from the seed)")
    o.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("evaluate", parents=[common], help="evaluate a codebook JSON on a channel batch")
    e.add_argument("codebook")
    e.add_argument("--channels", help="channel batch CSV (default: held-out batch for the seed)")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", parents=[common], help="train and apply LM, Uniform or RVQ")
    b.add_argument("--method", choices=[ex.LM, ex.UNIFORM, ex.RVQ], required=True)
    b.add_argument("--b1", type=int, default=4)
    b.add_argument("--b2", type=int, default=3)
    b.add_argument("--train-channels")
    b.add_argument("--channels")
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("sweep", parents=[common], help="run a full sweep and write a CSV")
    s.add_argument("--kind", choices=ex.SWEEP_KINDS)
    s.add_argument("--workers", type=int)
    s.add_argument("--timing", action="store_true", help="record wall times (output is then not reproducible)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
        return args.func(args, cfg)
    except (ConfigError, ContractViolation, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except _Infeasible as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
