"""Hot numeric kernels with numba and numpy implementations.

Each kernel exists as ``<name>_nb`` (compiled) and ``<name>_np``
(vectorised numpy). The un-suffixed name dispatches according to
:data:`lockinfer._accel.USE_NUMBA`. Both paths must agree bit-for-bit on the
outputs the rest of the package compares (rank counts) and to rounding on
the rest; the test-suite checks this.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# sign-split trapezoid
# --------------------------------------------------------------------------


@njit
def interval_contributions_nb(t, x):
    n = x.shape[0]
    pos = np.zeros(max(n - 1, 0))
    neg = np.zeros(max(n - 1, 0))
    for i in range(n - 1):
        x0 = x[i]
        x1 = x[i + 1]
        dt = t[i + 1] - t[i]
        if x0 >= 0.0 and x1 >= 0.0:
            pos[i] = 0.5 * (x0 + x1) * dt
        elif x0 <= 0.0 and x1 <= 0.0:
            neg[i] = 0.5 * (x0 + x1) * dt
        else:
            tc = x0 / (x0 - x1) * dt
            if x0 > 0.0:
                pos[i] = 0.5 * x0 * tc
                neg[i] = 0.5 * x1 * (dt - tc)
            else:
                neg[i] = 0.5 * x0 * tc
                pos[i] = 0.5 * x1 * (dt - tc)
    return pos, neg


def interval_contributions_np(t, x):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        return np.zeros(0), np.zeros(0)
    x0, x1 = x[:-1], x[1:]
    dt = np.diff(t)
    both_pos = (x0 >= 0.0) & (x1 >= 0.0)
    both_neg = (x0 <= 0.0) & (x1 <= 0.0) & ~both_pos
    cross = ~(both_pos | both_neg)

    trap = 0.5 * (x0 + x1) * dt
    pos = np.where(both_pos, trap, 0.0)
    neg = np.where(both_neg, trap, 0.0)

    denom = np.where(cross, x0 - x1, 1.0)
    tc = np.where(cross, x0 / denom * dt, 0.0)
    head = 0.5 * x0 * tc
    tail = 0.5 * x1 * (dt - tc)
    up = cross & (x0 > 0.0)
    down = cross & ~(x0 > 0.0)
    pos = pos + np.where(up, head, 0.0) + np.where(down, tail, 0.0)
    neg = neg + np.where(up, tail, 0.0) + np.where(down, head, 0.0)
    return pos, neg


def interval_contributions(t, x):
    """Per-interval positive and negative trapezoid areas.

    Intervals whose endpoints straddle zero are split at the linearly
    interpolated crossing, so ``pos.sum()`` and ``neg.sum()`` partition the
    signed integral exactly.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return interval_contributions_nb(t, x)
    return interval_contributions_np(t, x)


# --------------------------------------------------------------------------
# Gaussian log-scores and rank-of-truth counting
# --------------------------------------------------------------------------


def gaussian_logpdf(values, mean, sigma):
    """Normal log-density; the single formula every ranking path shares."""
    z = (np.asarray(values, dtype=np.float64) - mean) / sigma
    return -0.5 * z * z - (math.log(sigma) + LOG_SQRT_2PI)


@njit
def _logpdf_scalar(v, mean, sigma):
    z = (v - mean) / sigma
    return -0.5 * z * z - (math.log(sigma) + LOG_SQRT_2PI)


@njit
def mc_ranks_nb(theta_bar, sigma, cand, members, lexrank, truth):
    n_trials, n_phase = theta_bar.shape
    width = cand.shape[1]
    n_members = members.shape[0]
    ranks = np.empty(n_trials, dtype=np.int64)
    table = np.empty((n_phase, width))
    for tr in range(n_trials):
        for p in range(n_phase):
            for w in range(width):
                table[p, w] = _logpdf_scalar(cand[p, w], theta_bar[tr, p], sigma[p])
        ti = truth[tr]
        ts = table[0, members[ti, 0]]
        for p in range(1, n_phase):
            ts += table[p, members[ti, p]]
        tl = lexrank[ti]
        better = 0
        for m in range(n_members):
            s = table[0, members[m, 0]]
            for p in range(1, n_phase):
                s += table[p, members[m, p]]
            if s > ts or (s == ts and lexrank[m] < tl):
                better += 1
        ranks[tr] = better + 1
    return ranks


def mc_ranks_np(theta_bar, sigma, cand, members, lexrank, truth):
    n_trials, n_phase = theta_bar.shape
    ranks = np.empty(n_trials, dtype=np.int64)
    for tr in range(n_trials):
        table = [
            gaussian_logpdf(cand[p], theta_bar[tr, p], sigma[p]) for p in range(n_phase)
        ]
        scores = table[0][members[:, 0]]
        for p in range(1, n_phase):
            scores = scores + table[p][members[:, p]]
        ti = truth[tr]
        ts = scores[ti]
        better = np.count_nonzero(scores > ts)
        better += np.count_nonzero((scores == ts) & (lexrank < lexrank[ti]))
        ranks[tr] = better + 1
    return ranks


def mc_ranks(theta_bar, sigma, cand, members, lexrank, truth):
    """1-based rank of each trial's true member under Gaussian scoring.

    ``cand[p]`` holds the candidate transitions of phase ``p`` (equal width
    per phase), ``members[m]`` indexes one candidate per phase for key ``m``,
    ``lexrank[m]`` is that key's position in lexicographic digit order (the
    tie-break), and ``truth[t]`` is the member index of trial ``t``'s key.
    """
    args = (
        np.ascontiguousarray(theta_bar, dtype=np.float64),
        np.ascontiguousarray(sigma, dtype=np.float64),
        np.ascontiguousarray(cand, dtype=np.float64),
        np.ascontiguousarray(members, dtype=np.int64),
        np.ascontiguousarray(lexrank, dtype=np.int64),
        np.ascontiguousarray(truth, dtype=np.int64),
    )
    if USE_NUMBA:
        return mc_ranks_nb(*args)
    return mc_ranks_np(*args)
