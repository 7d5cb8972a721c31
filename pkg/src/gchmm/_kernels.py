"""Compiled hot loops. Everything here is pure array-in, array-out.

Log tables are always precomputed by the callers (log of zero is handled with
explicit -inf entries there), so no kernel ever takes a log itself. All
randomness arrives as pre-drawn uniforms except the jump process, which
consumes a numpy Generator directly because its draw count is data dependent.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def build_pressure(X, indptr, ids, N, T):
    """Infectious-neighbor counts K[n, t] for every node and timestep."""
    K = np.zeros((N, T), dtype=np.int32)
    for t in range(T):
        base = t * N
        for n in range(N):
            s = 0
            for j in range(indptr[base + n], indptr[base + n + 1]):
                if X[ids[j], t] == 1:
                    s += 1
            K[n, t] = s
    return K


@njit(cache=True, nogil=True)
def site_log_weights(X, K, n, t, indptr, ids, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1):
    """Log weights (l0, l1) of the two candidate values of X[n, t].

    Collects exactly the joint factors that involve the site: the transition
    into (n, t), the transition out of it, the outgoing transitions of
    susceptible neighbors whose contact count includes n, and the emission.
    """
    N, T = X.shape
    l0 = e0[n, t]
    l1 = e1[n, t]
    if X[n, t - 1] == 0:
        k = K[n, t - 1]
        l1 += lg_inf[k]
        l0 += lg_stay[k]
    else:
        l1 += lg_norec
        l0 += lg_rec
    if t < T - 1:
        ko = K[n, t]
        if X[n, t + 1] == 1:
            l1 += lg_norec
            l0 += lg_inf[ko]
        else:
            l1 += lg_rec
            l0 += lg_stay[ko]
        cur = X[n, t]
        base = t * N
        for j in range(indptr[base + n], indptr[base + n + 1]):
            m = ids[j]
            if X[m, t] == 0:
                kb = K[m, t] - cur  # m's infectious contacts with n removed
                if X[m, t + 1] == 1:
                    l0 += lg_inf[kb]
                    l1 += lg_inf[kb + 1]
                else:
                    l0 += lg_stay[kb]
                    l1 += lg_stay[kb + 1]
    return l0, l1


@njit(cache=True, nogil=True)
def state_sweep(X, K, indptr, ids, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1, u,
                prob_acc, accumulate):
    """One systematic single-site pass, t-major then node-ascending.

    Mutates X and K in place, consuming one uniform per site. Returns 0, or -1
    if some site had zero weight on both values. With accumulate nonzero the
    conditional P(site = 1) of every visit is added into prob_acc, which gives
    a Rao-Blackwellized marginal estimate (the average conditional) that is
    much smoother than averaging sampled 0/1 indicators.
    """
    N, T = X.shape
    ui = 0
    for t in range(1, T):
        base = t * N
        for n in range(N):
            l0, l1 = site_log_weights(X, K, n, t, indptr, ids,
                                      lg_inf, lg_stay, lg_rec, lg_norec, e0, e1)
            hi = l0 if l0 > l1 else l1
            if hi == -np.inf:
                return -1
            w1 = np.exp(l1 - hi)
            p1 = w1 / (np.exp(l0 - hi) + w1)
            if accumulate != 0:
                prob_acc[n, t] += p1
            new = 1 if u[ui] < p1 else 0
            ui += 1
            old = X[n, t]
            if new != old:
                X[n, t] = np.int8(new)
                d = new - old
                for j in range(indptr[base + n], indptr[base + n + 1]):
                    K[ids[j], t] += d
    return 0


@njit(cache=True, nogil=True)
def transition_counts(X, K):
    """Sufficient statistics over all transitions (timesteps with a successor).

    Returns (susceptible steps, susceptible-infectious contact pairs,
    infectious steps, recoveries, infections).
    """
    N, T = X.shape
    susc = 0
    pairs = 0
    inf_steps = 0
    recov = 0
    infections = 0
    for t in range(T - 1):
        for n in range(N):
            if X[n, t] == 0:
                susc += 1
                pairs += K[n, t]
                if X[n, t + 1] == 1:
                    infections += 1
            else:
                inf_steps += 1
                if X[n, t + 1] == 0:
                    recov += 1
    return susc, pairs, inf_steps, recov, infections


@njit(cache=True, nogil=True)
def draw_sources(X, K, indptr, ids, alpha, beta, u):
    """Attribute every infection to the outside world or one infectious contact.

    Events are visited t-major then node-ascending; event i consumes u[i].
    Source code 1 means outside; code 1+j means the j-th infectious neighbor
    (1-based) in ascending node order. Returns (nodes, times, sources, ok)
    with ok = 0, or ok = -1 when an infection had zero total weight.
    """
    N, T = X.shape
    n_events = len(u)
    ev_n = np.empty(n_events, dtype=np.int32)
    ev_t = np.empty(n_events, dtype=np.int32)
    ev_src = np.empty(n_events, dtype=np.int32)
    i = 0
    for t in range(T - 1):
        base = t * N
        for n in range(N):
            if X[n, t] == 0 and X[n, t + 1] == 1:
                k = K[n, t]
                tot = alpha + beta * k
                if tot <= 0.0:
                    return ev_n, ev_t, ev_src, -1
                r = u[i] * tot
                if r < alpha or k == 0:
                    src = 1
                else:
                    j = int((r - alpha) / beta)
                    if j >= k:
                        j = k - 1
                    seen = -1
                    src = 1
                    for p in range(indptr[base + n], indptr[base + n + 1]):
                        if X[ids[p], t] == 1:
                            seen += 1
                            if seen == j:
                                src = 2 + j
                                break
                ev_n[i] = n
                ev_t[i] = t
                ev_src[i] = src
                i += 1
    return ev_n, ev_t, ev_src, 0


@njit(cache=True, nogil=True)
def theta_counts(X, Y):
    """Present/absent tallies per (state, symptom) over non-missing entries."""
    N, T, S = Y.shape
    counts = np.zeros((2, S, 2), dtype=np.int64)
    for n in range(N):
        for t in range(T):
            x = X[n, t]
            for s in range(S):
                y = Y[n, t, s]
                if y >= 0:
                    counts[x, s, y] += 1
    return counts


@njit(cache=True, nogil=True)
def emission_tables(Y, log_present, log_absent):
    """Per-site emission log-likelihood under each candidate state.

    log_present[x, s] = log theta[x, s], log_absent[x, s] = log(1 - theta[x, s]).
    Missing entries contribute nothing.
    """
    N, T, S = Y.shape
    e0 = np.zeros((N, T))
    e1 = np.zeros((N, T))
    for n in range(N):
        for t in range(T):
            a0 = 0.0
            a1 = 0.0
            for s in range(S):
                y = Y[n, t, s]
                if y == 1:
                    a0 += log_present[0, s]
                    a1 += log_present[1, s]
                elif y == 0:
                    a0 += log_absent[0, s]
                    a1 += log_absent[1, s]
            e0[n, t] = a0
            e1[n, t] = a1
    return e0, e1


@njit(cache=True, nogil=True)
def log_joint_tables(X, K, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1):
    """(transition log-probability, emission log-likelihood) of the current state."""
    N, T = X.shape
    lp = 0.0
    for t in range(T - 1):
        for n in range(N):
            if X[n, t] == 1:
                lp += lg_rec if X[n, t + 1] == 0 else lg_norec
            else:
                k = K[n, t]
                lp += lg_inf[k] if X[n, t + 1] == 1 else lg_stay[k]
    le = 0.0
    for t in range(T):
        for n in range(N):
            le += e1[n, t] if X[n, t] == 1 else e0[n, t]
    return lp, le


@njit(cache=True, nogil=True)
def enumerate_logp(N, T, indptr, ids, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1):
    """Joint log-probability of every completion of the hidden states.

    Column 0 is pinned all-susceptible; the remaining N*(T-1) sites run through
    all assignments in lexicographic order, bit j of the code being the site
    (node j mod N, timestep 1 + j // N).
    """
    bits = N * (T - 1)
    total = 1 << bits
    out = np.empty(total, dtype=np.float64)
    X = np.zeros((N, T), dtype=np.int8)
    for code in range(total):
        c = code
        for j in range(bits):
            X[j % N, 1 + j // N] = c & 1
            c >>= 1
        lp = 0.0
        for t in range(T):
            base = t * N
            for n in range(N):
                lp += e1[n, t] if X[n, t] == 1 else e0[n, t]
                if t < T - 1:
                    if X[n, t] == 1:
                        lp += lg_rec if X[n, t + 1] == 0 else lg_norec
                    else:
                        k = 0
                        for p in range(indptr[base + n], indptr[base + n + 1]):
                            if X[ids[p], t] == 1:
                                k += 1
                        lp += lg_inf[k] if X[n, t + 1] == 1 else lg_stay[k]
        out[code] = lp
    return out


@njit(cache=True, nogil=True)
def marginals_from_logp(logp, N, T, log_evidence):
    """Posterior P(site = 1) per (node, timestep) from enumerated completions."""
    marg = np.zeros((N, T))
    bits = N * (T - 1)
    for code in range(len(logp)):
        w = np.exp(logp[code] - log_evidence)
        c = code
        for j in range(bits):
            if c & 1:
                marg[j % N, 1 + j // N] += w
            c >>= 1
    return marg


@njit(cache=True, nogil=True)
def jump_path(rng, beta_rate, gamma_rate, s0, i0, horizon):
    """Exact next-event simulation of the population jump process.

    Contact infections S+I -> 2I fire at rate beta_rate*S*I and recoveries
    I -> S at rate gamma_rate*I. Returns event times and the S, I values after
    each event, ending early if I hits zero (the absorbing state).
    """
    cap = 1024
    times = np.empty(cap)
    s_out = np.empty(cap, dtype=np.int64)
    i_out = np.empty(cap, dtype=np.int64)
    t = 0.0
    S = s0
    I = i0
    count = 0
    while I > 0:
        a_inf = beta_rate * S * I
        a_rec = gamma_rate * I
        total = a_inf + a_rec
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        if rng.random() * total < a_inf:
            S -= 1
            I += 1
        else:
            S += 1
            I -= 1
        if count == cap:
            cap *= 2
            new_times = np.empty(cap)
            new_s = np.empty(cap, dtype=np.int64)
            new_i = np.empty(cap, dtype=np.int64)
            new_times[:count] = times
            new_s[:count] = s_out
            new_i[:count] = i_out
            times = new_times
            s_out = new_s
            i_out = new_i
        times[count] = t
        s_out[count] = S
        i_out[count] = I
        count += 1
    return times[:count].copy(), s_out[:count].copy(), i_out[:count].copy()


@njit(cache=True, nogil=True)
def jump_on_grid(rng, beta_rate, gamma_rate, s0, i0, grid):
    """Infectious count sampled at the given times, one jump-process run."""
    out = np.empty(len(grid), dtype=np.int64)
    t = 0.0
    S = s0
    I = i0
    g = 0
    while g < len(grid):
        if I > 0:
            a_inf = beta_rate * S * I
            a_rec = gamma_rate * I
            total = a_inf + a_rec
            t_next = t + rng.exponential(1.0 / total)
        else:
            t_next = np.inf
        while g < len(grid) and grid[g] < t_next:
            out[g] = I
            g += 1
        if t_next == np.inf or g >= len(grid):
            break
        t = t_next
        if rng.random() * (beta_rate * S * I + gamma_rate * I) < beta_rate * S * I:
            S -= 1
            I += 1
        else:
            S += 1
            I -= 1
    return out
