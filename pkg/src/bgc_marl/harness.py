"""Training loop, distillation phase and embedding export."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .agent import StudentNet
from .buffer import ReplayBuffer
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, save_config
from .learner import TrainState, batch_to_torch, make_train_state, train_step
from .objectives import distill_loss, total_loss
from .runner import EvalResult, Policy, eval_seeds, evaluate, run_episodes

log = logging.getLogger(__name__)

METRIC_KEYS = ("step", "episode", "td", "split", "distill", "epsilon", "eval_win_rate", "eval_return")


def anneal_epsilon(env_steps: int, start: float = 1.0, finish: float = 0.05, anneal_steps: int = 50_000) -> float:
    """Linear schedule from ``start`` at step 0 to ``finish`` at ``anneal_steps``, flat afterwards."""
    if env_steps < 0:
        raise ValueError("env_steps must be >= 0")
    if anneal_steps <= 0:
        return finish
    frac = min(env_steps / anneal_steps, 1.0)
    return start + frac * (finish - start)


class MetricsWriter:
    """Appends one JSON object per line; every record carries all METRIC_KEYS."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self.records = []

    def write(self, **values):
        rec = {k: values.get(k) for k in METRIC_KEYS}
        self.records.append(rec)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(rec) + "\n")
        return rec


def _run_dir(cfg: ExperimentConfig, run_dir) -> Optional[Path]:
    path = run_dir if run_dir is not None else (cfg.io.run_dir or None)
    if path is None:
        return None
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


@dataclass
class TrainResult:
    state: TrainState
    final_eval: EvalResult
    metrics: list
    checkpoints: list = field(default_factory=list)
    run_dir: Optional[Path] = None


def train(cfg: ExperimentConfig, run_dir=None) -> TrainResult:
    """Full training run, reproducible from the config and ``training.seed``."""
    cfg.validate()
    tr, env_cfg = cfg.training, cfg.env
    out = _run_dir(cfg, run_dir)
    if out is not None:
        save_config(cfg, out / "config.resolved.ini")
        (out / "metrics.jsonl").write_text("")
    metrics = MetricsWriter(out / "metrics.jsonl" if out else None)
    learner_ss, worker_ss = np.random.SeedSequence(tr.seed).spawn(2)
    state = make_train_state(cfg, seed=int(learner_ss.generate_state(1)[0]))
    worker_rngs = [np.random.default_rng(s) for s in worker_ss.spawn(tr.workers)]
    buffer = ReplayBuffer(tr.buffer_capacity, env_cfg)
    policy = Policy(state.agent, cfg.model.knn_k)
    next_eval = tr.eval_interval if tr.eval_interval > 0 else None
    next_ckpt = tr.checkpoint_interval if tr.checkpoint_interval > 0 else None
    checkpoints = []
    td_acc, split_acc = [], []
    eps = anneal_epsilon(0, tr.epsilon_start, tr.epsilon_finish, tr.epsilon_anneal_steps)

    def log_point():
        ev = evaluate(policy, env_cfg, tr.eval_episodes, tr.seed)
        rec = metrics.write(
            step=state.env_steps, episode=state.episodes,
            td=float(np.mean(td_acc)) if td_acc else None,
            split=float(np.mean(split_acc)) if split_acc else None,
            epsilon=eps, eval_win_rate=ev.win_rate, eval_return=ev.mean_return,
        )
        log.info("%s", rec)
        td_acc.clear()
        split_acc.clear()
        return ev

    def checkpoint(name):
        if out is None:
            return
        meta = {"env_steps": state.env_steps, "episodes": state.episodes, "train_steps": state.train_steps}
        checkpoints.append(save_checkpoint(out / name, cfg, state.agent, state.mixer, meta=meta))

    while state.env_steps < tr.total_env_steps:
        eps = anneal_epsilon(state.env_steps, tr.epsilon_start, tr.epsilon_finish, tr.epsilon_anneal_steps)
        seeds = [int(r.integers(2**31)) for r in worker_rngs]
        ro = run_episodes(policy, env_cfg, seeds, worker_rngs, eps, noise=True)
        buffer.insert(ro.batch)
        state.env_steps += int(ro.batch.lengths.sum())
        state.episodes += len(seeds)
        for _ in range(tr.train_steps_per_iteration):
            bd = train_step(state, buffer, cfg)
            if bd is not None:
                td_acc.append(bd.td)
                split_acc.append(bd.split)
        if next_eval is not None and state.env_steps >= next_eval:
            log_point()
            while next_eval <= state.env_steps:
                next_eval += tr.eval_interval
        if next_ckpt is not None and state.env_steps >= next_ckpt:
            checkpoint(f"ckpt_{state.env_steps:08d}.pt")
            while next_ckpt <= state.env_steps:
                next_ckpt += tr.checkpoint_interval
    final = log_point()
    checkpoint("final.pt")
    return TrainResult(state, final, metrics.records, checkpoints, out)


# ---------------------------------------------------------------------- distillation

def teacher_features(agent, bt):
    with torch.no_grad():
        return agent.forward_sequence(bt["inputs"], bt["masks"]).group_feature


def distill_phase(
    cfg: ExperimentConfig,
    agent,
    steps: Optional[int] = None,
    student: Optional[StudentNet] = None,
    run_dir=None,
    mixer=None,
):
    """Train a local-history student to reproduce the teacher's clustered group features.

    Episodes are played by the frozen teacher (greedy with
    ``training.distill_epsilon`` exploration). Returns (student, report).
    """
    tr, env_cfg = cfg.training, cfg.env
    if not getattr(agent, "uses_graph", False):
        raise ValueError("distillation needs a BGC teacher")
    steps = tr.distill_env_steps if steps is None else steps
    out = _run_dir(cfg, run_dir)
    model_ss, worker_ss, sample_ss = np.random.SeedSequence([tr.seed, 0xD15]).spawn(3)
    torch.manual_seed(int(model_ss.generate_state(1)[0]))
    if student is None:
        student = StudentNet.from_teacher(agent)
    for p in agent.parameters():
        p.requires_grad_(False)
    opt = torch.optim.Adam(student.parameters(), lr=tr.lr)
    rngs = [np.random.default_rng(s) for s in worker_ss.spawn(tr.workers)]
    sample_rng = np.random.default_rng(sample_ss)
    buffer = ReplayBuffer(min(tr.buffer_capacity, 1000), env_cfg)
    policy = Policy(agent, cfg.model.knn_k)
    metrics = MetricsWriter(out / "distill_metrics.jsonl" if out else None)
    if out is not None:
        (out / "distill_metrics.jsonl").write_text("")
    curve = []
    done = episodes = 0
    while done < steps:
        seeds = [int(r.integers(2**31)) for r in rngs]
        ro = run_episodes(policy, env_cfg, seeds, rngs, tr.distill_epsilon)
        buffer.insert(ro.batch)
        done += int(ro.batch.lengths.sum())
        episodes += len(seeds)
        losses = []
        for _ in range(tr.distill_steps_per_iteration):
            batch = buffer.sample(min(len(buffer), tr.distill_batch_size), sample_rng)
            bt = batch_to_torch(batch, env_cfg.n_actions, cfg.model.knn_k)
            target = teacher_features(agent, bt)[:, :-1]
            est, _ = student.forward_sequence(bt["inputs"])
            valid = bt["filled"].unsqueeze(-1) & torch.as_tensor(batch.alive[:, :-1])
            loss, bd = total_loss(distill=distill_loss(est[:, :-1], target, valid), lambda_distill=cfg.loss.lambda_distill)
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(student.parameters(), tr.grad_clip)
            opt.step()
            losses.append(bd.distill)
        if losses:
            curve.append(float(np.mean(losses)))
            metrics.write(step=done, episode=episodes, distill=curve[-1], epsilon=tr.distill_epsilon)
    for p in agent.parameters():
        p.requires_grad_(True)
    report = distill_report(cfg, agent, student, curve)
    report["distill_env_steps"] = done
    if out is not None:
        (out / "distill_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        if mixer is not None:
            save_checkpoint(out / "student.pt", cfg, agent, mixer, student=student, meta={"distill_env_steps": done})
    return student, report


def greedy_agreement(cfg: ExperimentConfig, agent, student, n_states: int, seed: int):
    """Fraction of alive-agent decisions where centralized and distilled greedy actions match,
    along teacher trajectories on held-out seeds, until ``n_states`` decisions were compared."""
    policy = Policy(agent, cfg.model.knn_k, student=student, mode="teacher")
    agree = compared = 0
    i = 0
    while compared < n_states:
        seeds = eval_seeds(seed, i + 8)[i:]
        ro = run_episodes(policy, cfg.env, seeds, [None] * len(seeds), compare=True)
        agree += ro.agree
        compared += ro.compared
        i += 8
    return agree / compared, compared


def distill_report(cfg: ExperimentConfig, agent, student, curve=()) -> dict:
    tr = cfg.training
    agreement, states = greedy_agreement(cfg, agent, student, tr.distill_agreement_states, tr.seed + 1)
    teacher = evaluate(Policy(agent, cfg.model.knn_k), cfg.env, tr.distill_eval_episodes, tr.seed)
    distilled = evaluate(Policy(agent, cfg.model.knn_k, student=student, mode="distilled"), cfg.env, tr.distill_eval_episodes, tr.seed)
    return {
        "agreement": agreement,
        "agreement_states": states,
        "teacher_win_rate": teacher.win_rate,
        "student_win_rate": distilled.win_rate,
        "win_rate_delta": distilled.win_rate - teacher.win_rate,
        "teacher_return": teacher.mean_return,
        "student_return": distilled.mean_return,
        "eval_episodes": tr.distill_eval_episodes,
        "loss_curve": list(curve),
    }


# ---------------------------------------------------------------------- embeddings

def export_embeddings(cfg: ExperimentConfig, agent, out_path, n_episodes: int, student=None, seed: int = 0, run_id=None):
    """Tab-separated rows: run id, timestep, agent, alive, x, y, group feature...

    One row per (timestep, agent) of greedy held-out episodes; the run id
    column is suffixed with the episode index (``run-e0``, ``run-e1``...). Features are the
    clustered g' in teacher mode, the student's estimate when a student is given.
    Returns the number of rows written.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if not getattr(agent, "uses_graph", False):
        raise ValueError("embedding export needs a BGC agent")
    run_id = cfg.io.run_id if run_id is None else run_id
    mode = "distilled" if student is not None else "teacher"
    policy = Policy(agent, cfg.model.knn_k, student=student, mode=mode)
    seeds = eval_seeds(seed, n_episodes)
    rows = 0
    out_path = Path(out_path)
    with open(out_path, "w") as fh:
        for start in range(0, n_episodes, 8):
            part = seeds[start:start + 8]
            ro = run_episodes(policy, cfg.env, part, [None] * len(part), record_features=True)
            for e, feats in enumerate(ro.features):
                for t in range(len(feats)):
                    for i in range(cfg.env.n_allies):
                        x, y = ro.batch.positions[e, t, i]
                        cols = [f"{run_id}-e{start + e}", str(t), str(i), str(int(ro.batch.alive[e, t, i])), f"{x:g}", f"{y:g}"]
                        cols += [f"{v:.6g}" for v in feats[t, i]]
                        fh.write("\t".join(cols) + "\n")
                        rows += 1
    return rows
