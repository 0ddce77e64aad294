"""Exhaustive reference implementations used as test oracles.

They enumerate every admissible path explicitly and share no code with the
package. Sums are formed in the same left-to-right order as the dynamic
programmes, so equality can be asserted exactly.
"""
import math


def euclid(x, y):
    return math.sqrt(sum((float(p) - float(q)) ** 2 for p, q in zip(x, y)))


def dtw_paths(n, m, band):
    """All monotone (0,0)->(n-1,m-1) paths as lists of (i, j, step)."""
    out = []

    def walk(i, j, acc):
        if (i, j) == (n - 1, m - 1):
            out.append(list(acc))
            return
        for di, dj, kind in ((1, 1, "d"), (1, 0, "v"), (0, 1, "h")):
            a, b = i + di, j + dj
            if a < n and b < m and abs(a - b) <= band:
                acc.append((a, b, kind))
                walk(a, b, acc)
                acc.pop()

    walk(0, 0, [])
    return out


def brute_dtw(a, b, symmetric2=False, band=None, normalize=True):
    """Minimal path cost by enumeration.

    Returns ``(value, lengths)`` where ``lengths`` is the set of cell counts
    among all minimal-cost paths.
    """
    n, m = len(a), len(b)
    band = max(n, m) if band is None else band
    best, lengths = math.inf, set()
    for path in dtw_paths(n, m, band):
        total = euclid(a[0], b[0])
        for i, j, kind in path:
            c = euclid(a[i], b[j])
            total = total + (2.0 * c if (kind == "d" and symmetric2) else c)
        if total < best:
            best, lengths = total, {len(path) + 1}
        elif total == best:
            lengths.add(len(path) + 1)
    if not normalize or best == math.inf:
        return best, lengths
    (length,) = lengths if len(lengths) == 1 else (None,)
    return (best / length if length else None), lengths


def _moves(s, log_self, log_next, first, last, penalty, network):
    """(next state, rank, list of log-terms in summation order) for every move from ``s``."""
    yield s, 0, [log_self[s]]
    if s in last:
        if network:
            for f in first:
                # rank among entries: lowest source unit first (source is s)
                yield f, 1 + s, [log_next[s], penalty]
        return
    yield s + 1, 1 + s, [log_next[s]]


def brute_viterbi(logb, log_self, log_next, first=None, last=None, penalty=0.0):
    """Best path by enumeration under the documented tie rule.

    Without ``first``/``last`` the model is a single forced chain (start in
    state 0, end in the last state). With them it is a free loop of units.
    Among exactly tied paths the one chosen reads, backwards from the final
    frame: lowest-unit final state, then at every step the self-loop before
    any entry, and among entries the lowest source state.

    Returns ``(score, path)``.
    """
    T, N = len(logb), len(logb[0])
    network = first is not None
    if not network:
        first, last = [0], [N - 1]
    firsts, lasts = set(first), set(last)

    starts = first if network else [0]
    best = {"score": -math.inf, "cands": []}

    def walk(t, s, score, seq, ranks):
        if t == T:
            if s not in lasts:
                return
            if score > best["score"]:
                best["score"], best["cands"] = score, [(list(seq), list(ranks))]
            elif score == best["score"]:
                best["cands"].append((list(seq), list(ranks)))
            return
        # the same state may be reachable by two moves (stay or re-entry of a
        # one-state unit); keep the better term sequence, stay on ties
        options = {}
        for nxt, rank, terms in _moves(s, log_self, log_next, firsts, lasts, penalty, network):
            val = score
            for term in terms:
                val = val + term
            if nxt not in options or val > options[nxt][0]:
                options[nxt] = (val, rank)
        for nxt, (val, rank) in options.items():
            v = val + logb[t][nxt]
            if v == -math.inf:
                continue
            seq.append(nxt)
            ranks.append(rank)
            walk(t + 1, nxt, v, seq, ranks)
            seq.pop()
            ranks.pop()

    for s0 in starts:
        v0 = (penalty + logb[0][s0]) if network else logb[0][s0]
        if v0 == -math.inf:
            continue
        walk(1, s0, v0, [s0], [])
    if not best["cands"]:
        return -math.inf, None

    def key(cand):
        seq, ranks = cand
        final_rank = last.index(seq[-1])
        return [final_rank] + list(reversed(ranks))

    seq, _ = min(best["cands"], key=key)
    return best["score"], seq


def chain_count(T, N):
    """Number of stay/advance paths of length T through N states."""
    return math.comb(T - 1, N - 1) if T >= N else 0
