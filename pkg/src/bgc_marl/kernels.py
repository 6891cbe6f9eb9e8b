"""Hot inner loops of the skirmish environment and the kNN topology.

Every kernel has a numba version (``*_nb``) and a numpy version (``*_np``);
the public name points at one of them depending on ``BGC_NUMBA``. Both
flavours must agree exactly, which ``tests/test_kernels.py`` checks.

Action ids: 0 no-op, 1 north (+y), 2 south (-y), 3 east (+x), 4 west (-x),
5 + k attack enemy k.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

N_MOVE = 4
MOVE_DX = np.array([0, 0, 0, 1, -1], dtype=np.int64)
MOVE_DY = np.array([0, 1, -1, 0, 0], dtype=np.int64)
FEAT = 5


# ---------------------------------------------------------------- kNN

def knn_graph_batch_np(positions, k):
    """positions: (M, n, 2) float; returns (M, n, n) bool with k out-edges per row."""
    pos = np.asarray(positions, dtype=np.float64)
    m, n, _ = pos.shape
    out = np.zeros((m, n, n), dtype=np.bool_)
    if k == 0 or n == 1:
        return out
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    d2 = (diff * diff).sum(-1)
    idx = np.arange(n)
    d2[:, idx, idx] = np.inf
    # stable sort keeps the lower index first among equal distances
    order = np.argsort(d2, axis=-1, kind="stable")[:, :, :k]
    np.put_along_axis(out, order, True, axis=-1)
    return out


@njit
def knn_graph_batch_nb(positions, k):
    m, n, _ = positions.shape
    out = np.zeros((m, n, n), dtype=np.bool_)
    if k == 0 or n == 1:
        return out
    d2 = np.empty(n, dtype=np.float64)
    for b in range(m):
        for i in range(n):
            for j in range(n):
                if j == i:
                    d2[j] = np.inf
                else:
                    dx = positions[b, i, 0] - positions[b, j, 0]
                    dy = positions[b, i, 1] - positions[b, j, 1]
                    d2[j] = dx * dx + dy * dy
            order = np.argsort(d2, kind="mergesort")
            for r in range(k):
                out[b, i, order[r]] = True
    return out


# ---------------------------------------------------------------- available actions

def avail_actions_np(ally_pos, ally_hp, enemy_pos, enemy_hp, width, height, attack_range):
    n_a = ally_pos.shape[0]
    n_e = enemy_pos.shape[0]
    avail = np.zeros((n_a, 1 + N_MOVE + n_e), dtype=np.bool_)
    alive = ally_hp > 0
    avail[~alive, 0] = True
    avail[alive, 0] = True
    occupied = np.concatenate([ally_pos[alive], enemy_pos[enemy_hp > 0]])
    for a in range(1, 1 + N_MOVE):
        tx = ally_pos[:, 0] + MOVE_DX[a]
        ty = ally_pos[:, 1] + MOVE_DY[a]
        ok = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
        if len(occupied):
            hit = (occupied[None, :, 0] == tx[:, None]) & (occupied[None, :, 1] == ty[:, None])
            ok &= ~hit.any(axis=1)
        avail[:, a] = ok & alive
    diff = (ally_pos[:, None, :] - enemy_pos[None, :, :]).astype(np.float64)
    d2 = (diff * diff).sum(-1)
    in_range = (d2 <= attack_range * attack_range) & (enemy_hp > 0)[None, :] & alive[:, None]
    avail[:, 1 + N_MOVE:] = in_range
    return avail


@njit
def _occupied_nb(x, y, ally_pos, ally_hp, enemy_pos, enemy_hp):
    for j in range(ally_pos.shape[0]):
        if ally_hp[j] > 0 and ally_pos[j, 0] == x and ally_pos[j, 1] == y:
            return True
    for j in range(enemy_pos.shape[0]):
        if enemy_hp[j] > 0 and enemy_pos[j, 0] == x and enemy_pos[j, 1] == y:
            return True
    return False


@njit
def avail_actions_nb(ally_pos, ally_hp, enemy_pos, enemy_hp, width, height, attack_range):
    n_a = ally_pos.shape[0]
    n_e = enemy_pos.shape[0]
    avail = np.zeros((n_a, 1 + N_MOVE + n_e), dtype=np.bool_)
    r2 = attack_range * attack_range
    for i in range(n_a):
        avail[i, 0] = True
        if ally_hp[i] <= 0:
            continue
        for a in range(1, 1 + N_MOVE):
            tx = ally_pos[i, 0] + MOVE_DX[a]
            ty = ally_pos[i, 1] + MOVE_DY[a]
            if 0 <= tx < width and 0 <= ty < height:
                avail[i, a] = not _occupied_nb(tx, ty, ally_pos, ally_hp, enemy_pos, enemy_hp)
        for e in range(n_e):
            if enemy_hp[e] > 0:
                dx = float(ally_pos[i, 0] - enemy_pos[e, 0])
                dy = float(ally_pos[i, 1] - enemy_pos[e, 1])
                avail[i, 1 + N_MOVE + e] = dx * dx + dy * dy <= r2
    return avail


# ---------------------------------------------------------------- observations

def observations_np(ally_pos, ally_hp, enemy_pos, enemy_hp, ally_hp_max, enemy_hp_max, sight_range):
    n_a = ally_pos.shape[0]
    n_e = enemy_pos.shape[0]
    n_other = n_a - 1 + n_e
    obs = np.zeros((n_a, n_other * FEAT + 1), dtype=np.float64)
    units = np.concatenate([ally_pos, enemy_pos]).astype(np.float64)
    hp_frac = np.concatenate([ally_hp / ally_hp_max, enemy_hp / enemy_hp_max])
    alive = np.concatenate([ally_hp > 0, enemy_hp > 0])
    is_enemy = np.concatenate([np.zeros(n_a), np.ones(n_e)])
    for i in range(n_a):
        if ally_hp[i] <= 0:
            continue
        others = np.array([j for j in range(n_a + n_e) if j != i])
        rel = units[others] - units[i]
        dist = np.sqrt((rel * rel).sum(-1))
        vis = alive[others] & (dist <= sight_range)
        block = np.stack(
            [rel[:, 0] / sight_range, rel[:, 1] / sight_range, dist / sight_range, hp_frac[others], is_enemy[others]],
            axis=1,
        )
        block[~vis] = 0.0
        obs[i, :-1] = block.reshape(-1)
        obs[i, -1] = hp_frac[i]
    return obs


@njit
def observations_nb(ally_pos, ally_hp, enemy_pos, enemy_hp, ally_hp_max, enemy_hp_max, sight_range):
    n_a = ally_pos.shape[0]
    n_e = enemy_pos.shape[0]
    n_other = n_a - 1 + n_e
    obs = np.zeros((n_a, n_other * FEAT + 1), dtype=np.float64)
    for i in range(n_a):
        if ally_hp[i] <= 0:
            continue
        slot = 0
        for j in range(n_a + n_e):
            if j == i:
                continue
            if j < n_a:
                px, py, frac, enemy = ally_pos[j, 0], ally_pos[j, 1], ally_hp[j] / ally_hp_max, 0.0
                alive = ally_hp[j] > 0
            else:
                e = j - n_a
                px, py, frac, enemy = enemy_pos[e, 0], enemy_pos[e, 1], enemy_hp[e] / enemy_hp_max, 1.0
                alive = enemy_hp[e] > 0
            dx = float(px - ally_pos[i, 0])
            dy = float(py - ally_pos[i, 1])
            dist = np.sqrt(dx * dx + dy * dy)
            if alive and dist <= sight_range:
                base = slot * FEAT
                obs[i, base] = dx / sight_range
                obs[i, base + 1] = dy / sight_range
                obs[i, base + 2] = dist / sight_range
                obs[i, base + 3] = frac
                obs[i, base + 4] = enemy
            slot += 1
        obs[i, n_other * FEAT] = ally_hp[i] / ally_hp_max
    return obs


# ---------------------------------------------------------------- step resolution

def _resolve_step(actions, ally_pos, ally_hp, enemy_pos, enemy_hp, damage, attack_range, width, height, sentinel):
    """Apply one joint ally action, then the scripted enemy turn, in place.

    Allies resolve in index order: a move into a cell that became occupied
    earlier in the same step is dropped, attacks stack. Surviving enemies then
    act in index order: attack the nearest ally in range, else step greedily
    toward the nearest ally. Killed units jump to ``sentinel``.

    Returns (damage dealt to enemies, enemies killed, damage taken by allies).
    """
    n_a = ally_pos.shape[0]
    n_e = enemy_pos.shape[0]
    r2 = attack_range * attack_range
    dealt = 0.0
    kills = 0
    taken = 0.0
    for i in range(n_a):
        if ally_hp[i] <= 0:
            continue
        a = actions[i]
        if 1 <= a <= N_MOVE:
            tx = ally_pos[i, 0] + MOVE_DX[a]
            ty = ally_pos[i, 1] + MOVE_DY[a]
            free = 0 <= tx < width and 0 <= ty < height
            if free:
                for j in range(n_a):
                    if ally_hp[j] > 0 and ally_pos[j, 0] == tx and ally_pos[j, 1] == ty:
                        free = False
                for j in range(n_e):
                    if enemy_hp[j] > 0 and enemy_pos[j, 0] == tx and enemy_pos[j, 1] == ty:
                        free = False
            if free:
                ally_pos[i, 0] = tx
                ally_pos[i, 1] = ty
        elif a > N_MOVE:
            e = a - 1 - N_MOVE
            if enemy_hp[e] > 0:
                hit = min(damage, enemy_hp[e])
                enemy_hp[e] -= hit
                dealt += hit
                if enemy_hp[e] <= 0:
                    enemy_hp[e] = 0.0
                    kills += 1
                    enemy_pos[e, 0] = sentinel[0]
                    enemy_pos[e, 1] = sentinel[1]
    for e in range(n_e):
        if enemy_hp[e] <= 0:
            continue
        best = -1
        best_d2 = np.inf
        for j in range(n_a):
            if ally_hp[j] > 0:
                dx = float(ally_pos[j, 0] - enemy_pos[e, 0])
                dy = float(ally_pos[j, 1] - enemy_pos[e, 1])
                d2 = dx * dx + dy * dy
                if d2 < best_d2:
                    best_d2 = d2
                    best = j
        if best < 0:
            break
        if best_d2 <= r2:
            hit = min(damage, ally_hp[best])
            ally_hp[best] -= hit
            taken += hit
            if ally_hp[best] <= 0:
                ally_hp[best] = 0.0
                ally_pos[best, 0] = sentinel[0]
                ally_pos[best, 1] = sentinel[1]
            continue
        move = 0
        move_d2 = best_d2
        for a in range(1, 1 + N_MOVE):
            tx = enemy_pos[e, 0] + MOVE_DX[a]
            ty = enemy_pos[e, 1] + MOVE_DY[a]
            if not (0 <= tx < width and 0 <= ty < height):
                continue
            free = True
            for j in range(n_a):
                if ally_hp[j] > 0 and ally_pos[j, 0] == tx and ally_pos[j, 1] == ty:
                    free = False
            for j in range(n_e):
                if enemy_hp[j] > 0 and enemy_pos[j, 0] == tx and enemy_pos[j, 1] == ty:
                    free = False
            if not free:
                continue
            dx = float(ally_pos[best, 0] - tx)
            dy = float(ally_pos[best, 1] - ty)
            d2 = dx * dx + dy * dy
            if d2 < move_d2:
                move_d2 = d2
                move = a
        if move > 0:
            enemy_pos[e, 0] += MOVE_DX[move]
            enemy_pos[e, 1] += MOVE_DY[move]
    return dealt, kills, taken


resolve_step_np = _resolve_step
resolve_step_nb = njit(_resolve_step)


if USE_NUMBA:
    knn_graph_batch = knn_graph_batch_nb
    avail_actions = avail_actions_nb
    observations = observations_nb
    resolve_step = resolve_step_nb
else:
    knn_graph_batch = knn_graph_batch_np
    avail_actions = avail_actions_np
    observations = observations_np
    resolve_step = resolve_step_np
