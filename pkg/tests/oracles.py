"""Reference implementations used only by the tests.

Each oracle follows a different route from the package code: explicit
mass transfer or a generic LP solver instead of the scalar dual, scipy's LP
instead of the in-house simplex, and plain Nash value iteration written
from the matrix-game LP.
"""

import numpy as np
from scipy.optimize import linprog


def greedy_worst_case(p0, v, sigma):
    """Move up to ``sigma`` mass from the highest values onto the lowest-value state."""
    p = np.array(p0, dtype=float)
    v = np.asarray(v, dtype=float)
    low = int(np.argmin(v))
    budget = min(sigma, 1.0 - p[low])
    for s in np.argsort(-v, kind="stable"):
        if budget <= 0:
            break
        if s == low:
            continue
        moved = min(p[s], budget)
        p[s] -= moved
        p[low] += moved
        budget -= moved
    return float(p @ v), p


def greedy_best_case(p0, v, sigma):
    val, p = greedy_worst_case(p0, -np.asarray(v, dtype=float), sigma)
    return -val, p


def lp_worst_case(p0, v, sigma):
    """inf P.v over the TV ball as an LP in (P, t) with t >= |P - p0|."""
    p0 = np.asarray(p0, dtype=float)
    v = np.asarray(v, dtype=float)
    S = len(p0)
    c = np.concatenate([v, np.zeros(S)])
    eye = np.eye(S)
    A_ub = np.block([[eye, -eye], [-eye, -eye], [np.zeros((1, S)), 0.5 * np.ones((1, S))]])
    b_ub = np.concatenate([p0, -p0, [sigma]])
    A_eq = np.concatenate([np.ones(S), np.zeros(S)])[None]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * (2 * S), method="highs")
    assert res.status == 0
    return float(res.fun)


def lp_matrix_value(N):
    """Value of max_w min_z w^T N z through scipy's LP."""
    N = np.asarray(N, dtype=float)
    m, n = N.shape
    # variables (w, v): maximize v s.t. (w^T N)_b >= v, sum w = 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-N.T, np.ones((n, 1))])
    A_eq = np.concatenate([np.ones(m), [0.0]])[None]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    assert res.status == 0
    return float(-res.fun), res.x[:m]


def nash_vi(P, r):
    """Standard (non-robust) zero-sum Nash value iteration with LP stage solves."""
    H, S, A, B, _ = P.shape
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Q = r[h] + P[h] @ V[h + 1]
        for s in range(S):
            V[h, s] = lp_matrix_value(Q[s])[0]
    return V


def worst_case_kernel_rows(P_rows, v, sigma):
    """Explicit minimizing kernel for each row, from the greedy transfer."""
    return np.array([greedy_worst_case(p, v, sigma)[1] for p in P_rows])
