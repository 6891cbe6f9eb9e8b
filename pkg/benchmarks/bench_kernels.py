"""Compare the numba and numpy flavours of the hot kernels.

Run ``python3 benchmarks/bench_kernels.py``. Kernel timings call both
flavours in-process; the end-to-end line replays random episodes in a fresh
interpreter per flavour, since ``BGC_NUMBA`` is read at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bgc_marl import kernels
from bgc_marl._accel import HAVE_NUMBA
from bgc_marl.env import EnvConfig, SkirmishEnv

ENV_LOOP = """
import time, numpy as np
from bgc_marl.env import EnvConfig, SkirmishEnv
env = SkirmishEnv(EnvConfig()); rng = np.random.default_rng(0)
env.reset(0)
steps = 0; t = time.perf_counter()
for ep in range({episodes}):
    env.reset(ep); done = False
    while not done:
        av = env.avail_actions()
        a = [rng.choice(np.flatnonzero(r)) for r in av]
        done = env.step(a).terminated; steps += 1
print(steps / (time.perf_counter() - t))
"""


def _time(fn, number):
    fn()  # warm-up, also triggers jit compilation
    return min(timeit.repeat(fn, number=number, repeat=5)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--number", type=int, default=200)
    p.add_argument("--episodes", type=int, default=200)
    args = p.parse_args(argv)
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    cfg = EnvConfig()
    env = SkirmishEnv(cfg)
    env.reset(0)
    ap, ah, ep, eh = env.ally_pos, env.ally_hp, env.enemy_pos, env.enemy_hp
    pos = np.random.default_rng(0).uniform(0, 12, size=(256, cfg.n_allies, 2))
    actions = np.zeros(cfg.n_allies, dtype=np.int64)

    def resolve(fn):
        return lambda: fn(actions, ap.copy(), ah.copy(), ep.copy(), eh.copy(), float(cfg.damage),
                          float(cfg.attack_range), cfg.grid_width, cfg.grid_height, env._sentinel)

    cases = {
        "knn_graph_batch (256x4)": (lambda: kernels.knn_graph_batch_np(pos, 2), lambda: kernels.knn_graph_batch_nb(pos, 2)),
        "avail_actions": (
            lambda: kernels.avail_actions_np(ap, ah, ep, eh, cfg.grid_width, cfg.grid_height, float(cfg.attack_range)),
            lambda: kernels.avail_actions_nb(ap, ah, ep, eh, cfg.grid_width, cfg.grid_height, float(cfg.attack_range)),
        ),
        "observations": (
            lambda: kernels.observations_np(ap, ah, ep, eh, float(cfg.ally_hp), float(cfg.enemy_hp), float(cfg.sight_range)),
            lambda: kernels.observations_nb(ap, ah, ep, eh, float(cfg.ally_hp), float(cfg.enemy_hp), float(cfg.sight_range)),
        ),
        "resolve_step": (resolve(kernels.resolve_step_np), resolve(kernels.resolve_step_nb)),
    }
    print(f"{'kernel':28s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases.items():
        t_np, t_nb = _time(f_np, args.number), _time(f_nb, args.number)
        print(f"{name:28s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:8.1f}x")

    rates = {}
    for flag in ("0", "1"):
        out = subprocess.run([sys.executable, "-c", ENV_LOOP.format(episodes=args.episodes)],
                             env={**os.environ, "BGC_NUMBA": flag}, capture_output=True, text=True, check=True)
        rates[flag] = float(out.stdout.strip())
    print(f"env steps/s with random play: numpy {rates['0']:.0f}, numba {rates['1']:.0f} "
          f"({rates['1'] / rates['0']:.1f}x)")


if __name__ == "__main__":
    main()
