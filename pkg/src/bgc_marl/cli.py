"""Command-line entry point: ``bgc train | evaluate | distill | export-embeddings``.

Exit codes: 0 success, 1 invalid configuration or usage, 2 runtime failure.
The run directory is ``--run-dir``, else ``io.run_dir`` from the config, else
``$BGC_RUN_ROOT/<io.run_id>`` (``./runs`` when the variable is unset).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, parse_overrides
from .errors import CheckpointError, ConfigError
from .harness import distill_phase, export_embeddings, train
from .runner import Policy, evaluate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
RUN_ROOT_ENV = "BGC_RUN_ROOT"

log = logging.getLogger("bgc_marl")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bgc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("config")
    t.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    t.add_argument("--mixer", choices=("qmix", "vdn"))
    t.add_argument("--agent", choices=("bgc", "rnn"))
    t.add_argument("--seed", type=int)
    t.add_argument("--total-steps", type=_nonnegative)
    t.add_argument("--run-dir")

    e = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--config", help="config to rebuild the networks from (default: the one stored in the checkpoint)")
    e.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    e.add_argument("--episodes", type=_positive, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mode", choices=("teacher", "distilled"), default="teacher")
    e.add_argument("--out", help="also write the JSON record here")

    d = sub.add_parser("distill", help="train a communication-free student from a teacher checkpoint")
    d.add_argument("checkpoint")
    d.add_argument("--config")
    d.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    d.add_argument("--steps", type=_nonnegative)
    d.add_argument("--run-dir")

    x = sub.add_parser("export-embeddings", help="write per-agent group features of evaluation episodes as TSV")
    x.add_argument("checkpoint")
    x.add_argument("--out", required=True)
    x.add_argument("--config")
    x.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    x.add_argument("--episodes", type=_positive, default=10)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--mode", choices=("teacher", "distilled"), default="teacher")
    return p


def _resolve_run_dir(cfg: ExperimentConfig, explicit) -> Path:
    if explicit:
        return Path(explicit)
    if cfg.io.run_dir:
        return Path(cfg.io.run_dir)
    return Path(os.environ.get(RUN_ROOT_ENV, "runs")) / cfg.io.run_id


def _load(args):
    """Config from --config (validated against the checkpoint) or from the checkpoint itself."""
    overrides = parse_overrides(args.overrides)
    if args.config:
        cfg = load_config(args.config, overrides)
        return load_checkpoint(args.checkpoint, cfg)
    cfg, agent, mixer, student, meta = load_checkpoint(args.checkpoint)
    if overrides:
        data = cfg.to_dict()
        for section, values in overrides.items():
            data.setdefault(section, {}).update(values)
        cfg = ExperimentConfig.from_dict(data).validate()
        return load_checkpoint(args.checkpoint, cfg)
    return cfg, agent, mixer, student, meta


def cmd_train(args) -> int:
    overrides = parse_overrides(args.overrides)
    for flag, section, key in (("mixer", "model", "mixer"), ("agent", "model", "agent"), ("seed", "training", "seed"),
                               ("total_steps", "training", "total_env_steps")):
        value = getattr(args, flag)
        if value is not None:
            overrides.setdefault(section, {})[key] = str(value)
    cfg = load_config(args.config, overrides)
    # the location stays out of the config so checkpoints do not depend on where they are written
    run_dir = _resolve_run_dir(cfg, args.run_dir)
    result = train(cfg, run_dir)
    print(json.dumps({
        "run_dir": str(run_dir),
        "env_steps": result.state.env_steps,
        "train_steps": result.state.train_steps,
        "eval_win_rate": result.final_eval.win_rate,
        "eval_return": result.final_eval.mean_return,
        "checkpoints": [p.name for p in result.checkpoints],
    }, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg, agent, mixer, student, meta = _load(args)
    if args.mode == "distilled" and student is None:
        raise CheckpointError("checkpoint has no student network; run `bgc distill` first")
    policy = Policy(agent, cfg.model.knn_k, student=student, mode=args.mode)
    res = evaluate(policy, cfg.env, args.episodes, args.seed)
    record = {
        "checkpoint": str(args.checkpoint),
        "mode": args.mode,
        "episodes": args.episodes,
        "seed": args.seed,
        "win_rate": res.win_rate,
        "mean_return": res.mean_return,
        "wins": [int(w) for w in res.wins],
        "returns": res.returns,
    }
    text = json.dumps(record, sort_keys=True)
    print(f"win_rate {res.win_rate:.4f}  mean_return {res.mean_return:.6f}")
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg, agent, mixer, _, meta = _load(args)
    if not getattr(agent, "uses_graph", False):
        raise ConfigError("distillation needs a checkpoint of a BGC agent (model.agent = bgc)")
    run_dir = Path(args.run_dir) if args.run_dir else Path(args.checkpoint).resolve().parent / "distill"
    student, report = distill_phase(cfg, agent, steps=args.steps, run_dir=run_dir, mixer=mixer)
    summary = {k: v for k, v in report.items() if k != "loss_curve"}
    summary["student_checkpoint"] = str(run_dir / "student.pt")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    cfg, agent, mixer, student, meta = _load(args)
    if args.mode == "distilled" and student is None:
        raise CheckpointError("checkpoint has no student network; run `bgc distill` first")
    rows = export_embeddings(cfg, agent, args.out, args.episodes, student=student if args.mode == "distilled" else None,
                             seed=args.seed)
    print(json.dumps({"out": str(args.out), "rows": rows}))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "distill": cmd_distill,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv=None) -> int:
    torch.set_num_threads(1)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
