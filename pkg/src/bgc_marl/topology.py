"""kNN agent topology: directed kNN edges, symmetric attention mask, normalized Laplacian."""
import numpy as np

from . import kernels
from .errors import ConfigError, ContractViolation

DEFAULT_K = 2


def knn_graph(positions, k: int = DEFAULT_K) -> np.ndarray:
    """Directed kNN adjacency for one set of positions.

    ``out[i, j]`` is True iff j is one of the k agents nearest to i (Euclidean,
    ties broken toward the lower index). No self edges.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
        raise ContractViolation(f"positions must have shape (n>=1, 2), got {pos.shape}")
    return knn_graph_batch(pos[None], k)[0]


def knn_graph_batch(positions, k: int = DEFAULT_K) -> np.ndarray:
    """Batched :func:`knn_graph` over a leading axis: (..., n, 2) -> (..., n, n)."""
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[-2]
    if not 0 <= k <= n - 1:
        raise ConfigError(f"kNN k must satisfy 0 <= k <= n-1 = {n - 1}, got {k}")
    lead = pos.shape[:-2]
    flat = np.ascontiguousarray(pos.reshape(-1, n, 2))
    return kernels.knn_graph_batch(flat, k).reshape(*lead, n, n)


def symmetrize_with_self_loops(directed) -> np.ndarray:
    d = np.asarray(directed, dtype=bool)
    if d.shape[-1] != d.shape[-2]:
        raise ContractViolation(f"adjacency must be square, got {d.shape}")
    eye = np.eye(d.shape[-1], dtype=bool)
    return d | np.swapaxes(d, -1, -2) | eye


def adjacency_mask(positions, k: int = DEFAULT_K) -> np.ndarray:
    """Attention mask from positions: kNN, symmetrized, with self-loops. Batched."""
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[-2]
    return symmetrize_with_self_loops(knn_graph_batch(pos, min(k, n - 1)))


def normalized_laplacian(mask) -> np.ndarray:
    """L = I - D^-1/2 A D^-1/2 with A the mask minus its diagonal.

    Nodes without off-diagonal neighbours get the identity row.
    """
    m = np.asarray(mask, dtype=bool)
    n = m.shape[0]
    adj = m.astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    deg = adj.sum(1)
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(n) - inv_sqrt[:, None] * adj * inv_sqrt[None, :]


def connected_components(mask) -> list[frozenset]:
    """Components of an undirected mask, as sets of agent indices."""
    m = np.asarray(mask, dtype=bool)
    n = m.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], set()
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.add(u)
            for v in np.flatnonzero(m[u] | m[:, u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(frozenset(comp))
    return comps
