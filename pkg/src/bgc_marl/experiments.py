"""Desk-scale experiment protocol on the 4v4 skirmish.

Trains BGC+QMIX, BGC+VDN and plain VDN over several seeds at an identical
budget, evaluates each final policy on held-out episodes, and compares with
uniformly random play. ``python -m bgc_marl.experiments --out DIR`` runs it
standalone and writes ``results.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .harness import distill_phase, train
from .runner import Policy, evaluate, random_policy_returns, run_episodes, eval_seeds

log = logging.getLogger(__name__)

VARIANTS = {
    "bgc_qmix": ("bgc", "qmix"),
    "bgc_vdn": ("bgc", "vdn"),
    "vdn": ("rnn", "vdn"),
}


def desk_config(agent: str = "bgc", mixer: str = "qmix", seed: int = 0, total_env_steps: int = 200_000) -> ExperimentConfig:
    """Defaults plus the learner settings used for desk-scale runs."""
    cfg = ExperimentConfig()
    cfg.model.agent, cfg.model.mixer = agent, mixer
    cfg.training.seed = seed
    cfg.training.total_env_steps = total_env_steps
    cfg.training.batch_size = 32
    cfg.training.reward_scale = 20.0
    cfg.training.target_update_interval = 30
    cfg.training.eval_interval = 0
    cfg.training.checkpoint_interval = 0
    cfg.io.run_id = f"{agent}_{mixer}_s{seed}"
    return cfg.validate()


def pooled_sd(*groups) -> float:
    groups = [np.asarray(g, dtype=float) for g in groups]
    num = sum((len(g) - 1) * g.var(ddof=1) for g in groups)
    den = sum(len(g) - 1 for g in groups)
    return float(np.sqrt(num / den))


def grouping_distances(cfg: ExperimentConfig, agent, n_episodes: int = 50, seed: int = 0):
    """Mean Euclidean distance between clustered group features of alive agent pairs,
    split by whether the pair is adjacent in the attention mask."""
    from .topology import adjacency_mask

    adj_d, non_d = [], []
    policy = Policy(agent, cfg.model.knn_k)
    seeds = eval_seeds(seed, n_episodes)
    for start in range(0, n_episodes, 8):
        part = seeds[start:start + 8]
        ro = run_episodes(policy, cfg.env, part, [None] * len(part), record_features=True)
        for e, feats in enumerate(ro.features):
            for t in range(len(feats)):
                alive = ro.batch.alive[e, t]
                mask = adjacency_mask(ro.batch.positions[e, t], cfg.model.knn_k)
                idx = np.flatnonzero(alive)
                for a in range(len(idx)):
                    for b in range(a + 1, len(idx)):
                        i, j = idx[a], idx[b]
                        d = float(np.linalg.norm(feats[t, i] - feats[t, j]))
                        (adj_d if mask[i, j] else non_d).append(d)
    return float(np.mean(adj_d)) if adj_d else float("nan"), float(np.mean(non_d)) if non_d else float("nan"), len(adj_d), len(non_d)


def run_desk_scale(seeds=range(5), total_env_steps: int = 200_000, eval_episodes: int = 100, out_dir=None,
                   variants=tuple(VARIANTS), distill_steps: int = 50_000):
    """Run the whole protocol. Returns a JSON-serialisable dict plus the trained BGC+QMIX agents."""
    out = Path(out_dir) if out_dir else None
    results = {"seeds": list(seeds), "total_env_steps": total_env_steps, "eval_episodes": eval_episodes, "variants": {}}
    agents = {}
    for name in variants:
        agent_kind, mixer_kind = VARIANTS[name]
        per_seed = []
        for seed in seeds:
            cfg = desk_config(agent_kind, mixer_kind, seed, total_env_steps)
            t0 = time.time()
            res = train(cfg, out / cfg.io.run_id if out else None)
            ev = evaluate(Policy(res.state.agent, cfg.model.knn_k), cfg.env, eval_episodes, seed)
            per_seed.append({"seed": seed, "win_rate": ev.win_rate, "mean_return": ev.mean_return,
                             "seconds": round(time.time() - t0, 1)})
            agents[(name, seed)] = (cfg, res.state.agent, res.state.mixer)
            log.info("%s seed %d: win %.3f return %.3f", name, seed, ev.win_rate, ev.mean_return)
        results["variants"][name] = {
            "per_seed": per_seed,
            "win_rate": float(np.mean([r["win_rate"] for r in per_seed])),
            "mean_return": float(np.mean([r["mean_return"] for r in per_seed])),
        }
    rand = []
    for seed in seeds:
        rets, wins = random_policy_returns(desk_config(seed=seed).env, eval_episodes, seed)
        rand.append({"seed": seed, "mean_return": float(rets.mean()), "win_rate": float(wins.mean())})
    results["random"] = {"per_seed": rand, "mean_return": float(np.mean([r["mean_return"] for r in rand]))}

    if "bgc_qmix" in variants:
        bgc = [r["mean_return"] for r in results["variants"]["bgc_qmix"]["per_seed"]]
        rnd = [r["mean_return"] for r in rand]
        sd = pooled_sd(bgc, rnd) if len(bgc) > 1 else float("nan")
        results["return_margin"] = {"difference": float(np.mean(bgc) - np.mean(rnd)), "pooled_sd": sd,
                                    "in_sd": float((np.mean(bgc) - np.mean(rnd)) / sd) if sd > 0 else float("inf")}
        cfg, agent, mixer = agents[("bgc_qmix", seeds[0])]
        adj, non, n_adj, n_non = grouping_distances(cfg, agent, 50, seed=seeds[0])
        results["grouping"] = {"adjacent": adj, "non_adjacent": non, "adjacent_pairs": n_adj, "non_adjacent_pairs": n_non}
        if distill_steps:
            cfg.training.distill_env_steps = distill_steps
            _, report = distill_phase(cfg, agent, run_dir=(out / "distill") if out else None, mixer=mixer)
            results["distill"] = {k: v for k, v in report.items() if k != "loss_curve"}
            results["distill"]["loss_first"] = report["loss_curve"][0] if report["loss_curve"] else None
            results["distill"]["loss_last"] = report["loss_curve"][-1] if report["loss_curve"] else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return results, agents


def main(argv=None):
    p = argparse.ArgumentParser(description="desk-scale BGC experiment on the 4v4 skirmish")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--eval-episodes", type=int, default=100)
    args = p.parse_args(argv)
    torch.set_num_threads(1)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    results, _ = run_desk_scale(range(args.seeds), args.steps, args.eval_episodes, args.out)
    print(json.dumps(results, indent=2, sort_keys=True))


if __name__ == "__main__":  # pragma: no cover
    main()
