"""Independent reference implementations for the tests.

Plain Python loops over nested lists; nothing here calls into the package's
numerical code, so agreement is a genuine second route to each number.
"""
import itertools
import math


def _lists(mdp):
    return mdp.kernel.tolist(), mdp.rewards.tolist(), mdp.p0.tolist()


def deterministic_policies(H, S, A):
    """Every deterministic policy as an H x S nested list."""
    for flat in itertools.product(range(A), repeat=H * S):
        yield [list(flat[h * S:(h + 1) * S]) for h in range(H)]


def rollout(K, R, p0, actions):
    """Exact expected return and state occupancies of a deterministic policy."""
    H, S = len(R), len(p0)
    dist = list(p0)
    occ = []
    total = 0.0
    for h in range(H):
        occ.append(list(dist))
        nxt = [0.0] * S
        for s in range(S):
            if dist[s] == 0.0:
                continue
            a = actions[h][s]
            total += dist[s] * R[h][s][a]
            for t in range(S):
                nxt[t] += dist[s] * K[h][s][a][t]
        dist = nxt
    return total, occ


def brute_force_value(mdp, cells=None):
    """max over deterministic policies of the expected return.

    ``cells`` restricts the enumeration to the listed (h, s) pairs, with
    action 0 elsewhere; use it when the remaining pairs are unreachable.
    """
    K, R, p0 = _lists(mdp)
    H, S, A = mdp.dims
    if cells is None:
        return max(rollout(K, R, p0, pi)[0] for pi in deterministic_policies(H, S, A))
    best = -math.inf
    for choice in itertools.product(range(A), repeat=len(cells)):
        pi = [[0] * S for _ in range(H)]
        for (h, s), a in zip(cells, choice):
            pi[h][s] = a
        best = max(best, rollout(K, R, p0, pi)[0])
    return best


def behavior_occupancy(mdp, probs):
    """d_h(s, a) of a stochastic policy given as an (H, S, A) array."""
    K, _, p0 = _lists(mdp)
    H, S, A = mdp.dims
    mu = probs.tolist()
    dist = list(p0)
    out = []
    for h in range(H):
        level = [[dist[s] * mu[h][s][a] for a in range(A)] for s in range(S)]
        out.append(level)
        nxt = [0.0] * S
        for s in range(S):
            for a in range(A):
                w = level[s][a]
                if w:
                    for t in range(S):
                        nxt[t] += w * K[h][s][a][t]
        dist = nxt
    return out


def coverage_by_enumeration(mdp, mu_probs, tol=1e-9):
    """(P, C*, number of optimal policies) by enumerating deterministic optimal policies.

    A policy is optimal when its expected return is within ``tol`` of the best.
    """
    K, R, p0 = _lists(mdp)
    H, S, A = mdp.dims
    results = [(pi, *rollout(K, R, p0, pi)) for pi in deterministic_policies(H, S, A)]
    best = max(v for _, v, _ in results)
    dmu = behavior_occupancy(mdp, mu_probs)
    P, C, count = math.inf, 0.0, 0
    for pi, v, occ in results:
        if v < best - tol:
            continue
        count += 1
        for h in range(H):
            for s in range(S):
                if occ[h][s] <= 0.0:
                    continue
                den = dmu[h][s][pi[h][s]]
                P = min(P, den)
                C = max(C, occ[h][s] / den if den > 0 else math.inf)
    return P, C, count


def vi_lcb_reference(n3, rewards, c_b, delta, n_trajectories, iota=None):
    """Straight-line pessimistic value iteration on integer counts.

    Sums over next states run left to right starting from the first term.
    Returns (Q, V, b, pi) as nested lists.
    """
    H, S, A = len(n3), len(n3[0]), len(n3[0][0])
    if iota is None:
        iota = math.log(2 * H * S * A * max(n_trajectories, 1) / delta)
    V = [[0.0] * S for _ in range(H + 1)]
    Q = [[[0.0] * A for _ in range(S)] for _ in range(H)]
    B = [[[0.0] * A for _ in range(S)] for _ in range(H)]
    pi = [[0] * S for _ in range(H)]
    for h in range(H - 1, -1, -1):
        v = V[h + 1]
        for s in range(S):
            for a in range(A):
                row = n3[h][s][a]
                tot = sum(row)
                p = [c / tot if tot > 0 else 0.0 for c in row]
                mean = p[0] * v[0]
                second = p[0] * (v[0] * v[0])
                for j in range(1, S):
                    mean = mean + p[j] * v[j]
                    second = second + p[j] * (v[j] * v[j])
                var = second - mean * mean
                if var < 0.0:
                    var = 0.0
                n_prime = float(tot) if tot > iota else iota
                b = c_b * math.sqrt(var * iota / n_prime) + c_b * H * iota / n_prime
                q = rewards[h][s][a] + mean - b
                B[h][s][a] = b
                Q[h][s][a] = q if q > 0.0 else 0.0
            best = 0
            for a in range(1, A):
                if Q[h][s][a] > Q[h][s][best]:
                    best = a
            pi[h][s] = best
            V[h][s] = Q[h][s][best]
    return Q, V, B, pi
