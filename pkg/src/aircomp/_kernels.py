"""Numba kernels for the add-compare-select recursions.

The joint trellis for two rate-1/2 encoders of constraint length 7 has 4096
states and ~1300 stages per packet, so the forward passes are jitted; pure
numpy is an order of magnitude too slow for the Monte-Carlo loads.  Tie
handling everywhere is "first candidate wins" with candidates enumerated in
ascending predecessor-state order, which realizes the deterministic
smallest-state-index rule the decoders promise.
"""
from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def joint_forward(pred_state, pred_ii, bm_pair):
    """Full-state forward pass over the joint trellis.

    pred_state/pred_ii: (S, 4) predecessor tables, rows sorted by predecessor
    state index.  bm_pair: (n_stages, 16) per-stage branch metrics indexed by
    the 4*i0+i1 constellation-pair index of an edge.  Returns (final_pm,
    tb_choice) where tb_choice[i, t] is the winning predecessor slot.
    """
    n_stages = bm_pair.shape[0]
    n_states = pred_state.shape[0]
    pm = np.full(n_states, INF)
    pm[0] = 0.0
    new_pm = np.empty(n_states)
    tb_choice = np.empty((n_stages, n_states), dtype=np.uint8)
    for i in range(n_stages):
        bm = bm_pair[i]
        for t in range(n_states):
            best = INF
            choice = 0
            for j in range(4):
                c = pm[pred_state[t, j]] + bm[pred_ii[t, j]]
                if c < best:
                    best = c
                    choice = j
            new_pm[t] = best
            tb_choice[i, t] = choice
        pm, new_pm = new_pm, pm
    return pm, tb_choice


@njit(cache=True)
def joint_traceback(tb_choice, pred_state, pred_edge, end_state):
    """Recover per-user input bits from a joint_forward traceback."""
    n_stages = tb_choice.shape[0]
    bits_a = np.empty(n_stages, dtype=np.uint8)
    bits_b = np.empty(n_stages, dtype=np.uint8)
    t = end_state
    for i in range(n_stages - 1, -1, -1):
        j = tb_choice[i, t]
        e = pred_edge[t, j]
        bits_a[i] = e >> 1
        bits_b[i] = e & 1
        t = pred_state[t, j]
    return bits_a, bits_b


@njit(cache=True)
def _kth_smallest(a, n, k):
    """In-place quickselect: k-th smallest (0-based) value of a[:n]."""
    lo = 0
    hi = n - 1
    while lo < hi:
        pivot = a[(lo + hi) >> 1]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                a[i], a[j] = a[j], a[i]
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]
    return a[lo]


@njit(cache=True)
def reduced_forward(next_state, succ_ii, bm_pair, max_states):
    """Reduced-state forward pass: at most max_states survive each stage.

    next_state/succ_ii: (S, 4) successor tables.  Survivors are the
    max_states smallest by (metric, state index), realized as a quickselect
    for the pivot metric plus an ascending-state fill at the pivot.
    Returns (pm_full, tb_state, tb_edge, active_final).
    """
    n_stages = bm_pair.shape[0]
    n_states = next_state.shape[0]
    pm = np.full(n_states, INF)
    new_pm = np.full(n_states, INF)
    tb_state = np.empty((n_stages, n_states), dtype=np.int32)
    tb_edge = np.empty((n_stages, n_states), dtype=np.uint8)
    active = np.empty(n_states, dtype=np.int32)
    touched = np.empty(n_states, dtype=np.int32)
    metrics = np.empty(n_states)
    scratch = np.empty(n_states)
    active[0] = 0
    n_active = 1
    pm[0] = 0.0
    for i in range(n_stages):
        bm = bm_pair[i]
        # Scatter in ascending active-state order; strict < keeps the
        # smallest predecessor on candidate-metric ties.
        for a in range(n_active):
            s = active[a]
            base = pm[s]
            for e in range(4):
                t = next_state[s, e]
                c = base + bm[succ_ii[s, e]]
                if c < new_pm[t]:
                    new_pm[t] = c
                    tb_state[i, t] = s
                    tb_edge[i, t] = e
        # Old metrics are consumed; clear them before survivors land.
        for a in range(n_active):
            pm[active[a]] = INF
        n_touched = 0
        for t in range(n_states):
            if new_pm[t] < INF:
                touched[n_touched] = t
                n_touched += 1
        if n_touched > max_states:
            for a in range(n_touched):
                m = new_pm[touched[a]]
                metrics[a] = m
                scratch[a] = m
            # R-th smallest by (metric, state): everything strictly below the
            # pivot survives, then pivot-valued states fill up in ascending
            # state order (touched is ascending).
            pivot = _kth_smallest(scratch, n_touched, max_states - 1)
            n_active = 0
            for a in range(n_touched):
                if metrics[a] < pivot:
                    active[n_active] = touched[a]
                    n_active += 1
            for a in range(n_touched):
                if n_active >= max_states:
                    break
                if metrics[a] == pivot:
                    active[n_active] = touched[a]
                    n_active += 1
            active[:n_active].sort()
        else:
            n_active = n_touched
            for a in range(n_active):
                active[a] = touched[a]
        for a in range(n_active):
            pm[active[a]] = new_pm[active[a]]
        for a in range(n_touched):
            new_pm[touched[a]] = INF
    return pm, tb_state, tb_edge, active[:n_active].copy()


@njit(cache=True)
def reduced_traceback(tb_state, tb_edge, end_state):
    n_stages = tb_state.shape[0]
    bits_a = np.empty(n_stages, dtype=np.uint8)
    bits_b = np.empty(n_stages, dtype=np.uint8)
    t = end_state
    for i in range(n_stages - 1, -1, -1):
        e = tb_edge[i, t]
        bits_a[i] = e >> 1
        bits_b[i] = e & 1
        t = tb_state[i, t]
    return bits_a, bits_b


@njit(cache=True)
def single_forward(pred_state, pred_o0, pred_o1, cost):
    """Single-user forward pass with per-coded-bit hypothesis costs.

    cost: (N, 2) where cost[n, c] is the branch cost of coded bit n taking
    value c; one stage consumes two consecutive coded bits.
    """
    n_stages = cost.shape[0] // 2
    n_states = pred_state.shape[0]
    pm = np.full(n_states, INF)
    pm[0] = 0.0
    new_pm = np.empty(n_states)
    tb_choice = np.empty((n_stages, n_states), dtype=np.uint8)
    for i in range(n_stages):
        c0 = cost[2 * i]
        c1 = cost[2 * i + 1]
        for t in range(n_states):
            best = INF
            choice = 0
            for j in range(2):
                m = pm[pred_state[t, j]] + c0[pred_o0[t, j]] + c1[pred_o1[t, j]]
                if m < best:
                    best = m
                    choice = j
            new_pm[t] = best
            tb_choice[i, t] = choice
        pm, new_pm = new_pm, pm
    return pm, tb_choice


@njit(cache=True)
def single_traceback(tb_choice, pred_state, pred_bit, end_state):
    n_stages = tb_choice.shape[0]
    bits = np.empty(n_stages, dtype=np.uint8)
    t = end_state
    for i in range(n_stages - 1, -1, -1):
        j = tb_choice[i, t]
        bits[i] = pred_bit[t, j]
        t = pred_state[t, j]
    return bits
