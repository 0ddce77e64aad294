"""Dynamic-programming inner loops: DTW accumulation and Viterbi decoding.

Every kernel exists twice: an explicit-loop version compiled with numba
(``*_loop``) and a vectorised numpy version (``*_numpy``). Both perform the
same floating-point operations in the same order, so they agree bit for bit;
the module-level names pick one according to ``aud._accel.USE_NUMBA``.

Tie-breaking (shared by both paths):

* DTW prefers the diagonal step, then the vertical (advance in ``a`` only),
  then the horizontal step.
* Viterbi prefers the self-loop over entering a state, which places every
  state transition as early in time as the optimum allows. Among competing
  unit exits in a loop network the lowest unit index wins.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# DTW
# ---------------------------------------------------------------------------

def dtw_loop(cost, step, band):
    """Accumulate a local-cost matrix along monotonic warping paths.

    ``step`` is 1 (symmetric1) or 2 (symmetric2, diagonal steps weigh 2).
    Cells with ``|i - j| > band`` are forbidden. Returns the accumulated cost
    at the end cell and the number of cells on the chosen path; the cost is
    ``inf`` if no admissible path exists.
    """
    n, m = cost.shape
    w = 2.0 if step == 2 else 1.0
    acc = np.full((n, m), np.inf)
    plen = np.zeros((n, m), dtype=np.int64)
    acc[0, 0] = cost[0, 0]
    plen[0, 0] = 1
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            if abs(i - j) > band:
                continue
            c = cost[i, j]
            diag = np.inf
            vert = np.inf
            horiz = np.inf
            if i > 0 and j > 0:
                diag = acc[i - 1, j - 1] + w * c
            if i > 0:
                vert = acc[i - 1, j] + c
            if j > 0:
                horiz = acc[i, j - 1] + c
            if diag <= vert and diag <= horiz:
                acc[i, j] = diag
                plen[i, j] = plen[i - 1, j - 1] + 1 if i > 0 and j > 0 else 0
            elif vert <= horiz:
                acc[i, j] = vert
                plen[i, j] = plen[i - 1, j] + 1
            else:
                acc[i, j] = horiz
                plen[i, j] = plen[i, j - 1] + 1
    return acc[n - 1, m - 1], plen[n - 1, m - 1]


def dtw_numpy(cost, step, band):
    """Anti-diagonal vectorised twin of :func:`dtw_loop`."""
    n, m = cost.shape
    w = 2.0 if step == 2 else 1.0
    # padded by one row/column of inf so that index 0 means "outside"
    acc = np.full((n + 1, m + 1), np.inf)
    plen = np.zeros((n + 1, m + 1), dtype=np.int64)
    acc[1, 1] = cost[0, 0]
    plen[1, 1] = 1
    for s in range(1, n + m - 1):
        i = np.arange(max(0, s - m + 1), min(n - 1, s) + 1)
        j = s - i
        c = cost[i, j]
        diag = acc[i, j] + w * c
        vert = acc[i, j + 1] + c
        horiz = acc[i + 1, j] + c
        take_diag = (diag <= vert) & (diag <= horiz)
        take_vert = ~take_diag & (vert <= horiz)
        best = np.where(take_diag, diag, np.where(take_vert, vert, horiz))
        blen = np.where(
            take_diag, plen[i, j], np.where(take_vert, plen[i, j + 1], plen[i + 1, j])
        ) + 1
        outside = np.abs(i - j) > band
        best[outside] = np.inf
        blen[outside] = 0
        acc[i + 1, j + 1] = best
        plen[i + 1, j + 1] = blen
    return acc[n, m], plen[n, m]


# ---------------------------------------------------------------------------
# Viterbi over a forced left-to-right chain
# ---------------------------------------------------------------------------

def viterbi_chain_loop(logb, log_self, log_next):
    """Best path through a left-to-right chain without skips.

    ``logb`` is T x N emission log-likelihoods, ``log_self[s]`` the log
    self-loop and ``log_next[s]`` the log probability of moving from ``s`` to
    ``s + 1``. The path starts in state 0 and ends in state N-1; the final
    exit is not scored. Returns ``(score, path)``; ``score`` is ``-inf`` when
    T is too short for the chain.
    """
    T, N = logb.shape
    delta = np.full(N, NEG_INF)
    prev = np.empty(N)
    bp = np.zeros((T, N), dtype=np.int64)
    delta[0] = logb[0, 0]
    for t in range(1, T):
        for s in range(N):
            prev[s] = delta[s]
        for s in range(N):
            stay = prev[s] + log_self[s]
            enter = NEG_INF
            if s > 0:
                enter = prev[s - 1] + log_next[s - 1]
            if stay >= enter:
                delta[s] = stay + logb[t, s]
                bp[t, s] = s
            else:
                delta[s] = enter + logb[t, s]
                bp[t, s] = s - 1
    path = np.empty(T, dtype=np.int64)
    score = delta[N - 1]
    s = N - 1
    for t in range(T - 1, -1, -1):
        path[t] = s
        s = bp[t, s]
    return score, path


def viterbi_chain_numpy(logb, log_self, log_next):
    """State-vectorised twin of :func:`viterbi_chain_loop`."""
    T, N = logb.shape
    idx = np.arange(N)
    delta = np.full(N, NEG_INF)
    delta[0] = logb[0, 0]
    bp = np.zeros((T, N), dtype=np.int64)
    for t in range(1, T):
        stay = delta + log_self
        enter = np.full(N, NEG_INF)
        enter[1:] = delta[:-1] + log_next[:-1]
        take_stay = stay >= enter
        delta = np.where(take_stay, stay, enter) + logb[t]
        bp[t] = np.where(take_stay, idx, idx - 1)
    return delta[N - 1], _backtrack(bp, N - 1)


# ---------------------------------------------------------------------------
# Viterbi over a loop of units (any unit may follow any unit)
# ---------------------------------------------------------------------------

def viterbi_network_loop(logb, log_self, log_next, unit_first, unit_last, penalty):
    """Best path through a free loop of left-to-right units.

    ``unit_first``/``unit_last`` hold each unit's first and last state
    index (units laid out contiguously). ``log_next`` of a last state is the
    unit's exit log-probability; every unit entry adds ``penalty``. The path
    may start in any unit's first state and must end in a last state.
    """
    T, N = logb.shape
    U = unit_first.shape[0]
    is_first = np.zeros(N, dtype=np.bool_)
    for u in range(U):
        is_first[unit_first[u]] = True
    delta = np.full(N, NEG_INF)
    prev = np.empty(N)
    bp = np.zeros((T, N), dtype=np.int64)
    for u in range(U):
        f = unit_first[u]
        delta[f] = penalty + logb[0, f]
    for t in range(1, T):
        for s in range(N):
            prev[s] = delta[s]
        best_exit = NEG_INF
        best_src = unit_last[0]
        for u in range(U):
            e = unit_last[u]
            v = prev[e] + log_next[e]
            if v > best_exit:
                best_exit = v
                best_src = e
        entry = best_exit + penalty
        for s in range(N):
            stay = prev[s] + log_self[s]
            if is_first[s]:
                enter = entry
                src = best_src
            else:
                enter = prev[s - 1] + log_next[s - 1]
                src = s - 1
            if stay >= enter:
                delta[s] = stay + logb[t, s]
                bp[t, s] = s
            else:
                delta[s] = enter + logb[t, s]
                bp[t, s] = src
    score = NEG_INF
    s = unit_last[0]
    for u in range(U):
        e = unit_last[u]
        if delta[e] > score:
            score = delta[e]
            s = e
    path = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t] = s
        s = bp[t, s]
    return score, path


def viterbi_network_numpy(logb, log_self, log_next, unit_first, unit_last, penalty):
    """State-vectorised twin of :func:`viterbi_network_loop`."""
    T, N = logb.shape
    idx = np.arange(N)
    is_first = np.zeros(N, dtype=bool)
    is_first[unit_first] = True
    within = ~is_first
    delta = np.full(N, NEG_INF)
    delta[unit_first] = penalty + logb[0, unit_first]
    bp = np.zeros((T, N), dtype=np.int64)
    for t in range(1, T):
        exits = delta[unit_last] + log_next[unit_last]
        k = int(np.argmax(exits))
        entry = exits[k] + penalty
        stay = delta + log_self
        enter = np.full(N, NEG_INF)
        src = idx - 1
        enter[1:][within[1:]] = (delta[:-1] + log_next[:-1])[within[1:]]
        enter[is_first] = entry
        src[is_first] = unit_last[k]
        take_stay = stay >= enter
        delta = np.where(take_stay, stay, enter) + logb[t]
        bp[t] = np.where(take_stay, idx, src)
    k = int(np.argmax(delta[unit_last]))
    return delta[unit_last[k]], _backtrack(bp, unit_last[k])


def _backtrack(bp, last):
    T = bp.shape[0]
    path = np.empty(T, dtype=np.int64)
    s = last
    for t in range(T - 1, -1, -1):
        path[t] = s
        s = bp[t, s]
    return path


dtw_jit = njit(dtw_loop)
viterbi_chain_jit = njit(viterbi_chain_loop)
viterbi_network_jit = njit(viterbi_network_loop)

if USE_NUMBA:
    dtw_accumulate = dtw_jit
    viterbi_chain = viterbi_chain_jit
    viterbi_network = viterbi_network_jit
else:
    dtw_accumulate = dtw_numpy
    viterbi_chain = viterbi_chain_numpy
    viterbi_network = viterbi_network_numpy
