"""Compiled inner loops for the Gibbs sweep."""

from __future__ import annotations

import numpy as np
from numba import njit

PRUNE = 50.0


@njit(cache=True)
def _pattern(cl_fcount, c, K):
    h = 0
    for k in range(K):
        if cl_fcount[c, k] > 0:
            h |= 1 << k
    return h


@njit(cache=True)
def _tally(j, c, sign, labels, nbr_ptr, nbr_idx, nbr_pair, pair_fp, levels, a_counts):
    """Add ``sign`` times the comparisons between ``j`` and the members of ``c``."""
    F = levels.shape[1]
    for e in range(nbr_ptr[j], nbr_ptr[j + 1]):
        i = nbr_idx[e]
        if labels[i] == c:
            p = nbr_pair[e]
            fp = pair_fp[p]
            for f in range(F):
                lv = levels[p, f]
                if lv >= 0:
                    a_counts[fp, f, lv] += sign


@njit(cache=True)
def sweep(labels, file_of, order, uniforms,
          nbr_ptr, nbr_idx, nbr_pair, pair_L, pair_fp, levels, a_counts,
          cl_size, cl_fcount, free_stack, free_top, n_h, n_clusters,
          log_pn, log_pk, alpha, alpha0, bounds, flat,
          scratch_cnt, scratch_L, touched, weights, targets):
    """One sequential reassignment pass over the records in ``order``.

    Cluster bookkeeping (``cl_*``, ``n_h``, ``n_clusters``, the free-id stack)
    and the coreferent level counts ``a_counts`` are updated in place.
    Targets are scored in a fixed order: a new cluster first, then clusters
    holding a candidate neighbour of the record in order of first encounter.
    """
    K = cl_fcount.shape[1]
    neg_inf = -np.inf
    for step in range(order.shape[0]):
        j = order[step]
        k = file_of[j]
        bit = 1 << k

        # remove j
        c = labels[j]
        _tally(j, c, -1, labels, nbr_ptr, nbr_idx, nbr_pair, pair_fp, levels, a_counts)
        n_h[_pattern(cl_fcount, c, K)] -= 1
        cl_size[c] -= 1
        cl_fcount[c, k] -= 1
        labels[j] = -1
        if cl_size[c] == 0:
            free_stack[free_top[0]] = c
            free_top[0] += 1
            n_clusters[0] -= 1
        else:
            n_h[_pattern(cl_fcount, c, K)] += 1

        # clusters touched by j's candidate neighbours
        nt = 0
        for e in range(nbr_ptr[j], nbr_ptr[j + 1]):
            cc = labels[nbr_idx[e]]
            if scratch_cnt[cc] == 0:
                touched[nt] = cc
                nt += 1
            scratch_cnt[cc] += 1
            scratch_L[cc] += pair_L[nbr_pair[e]]

        n = n_clusters[0]
        if flat:
            w_new = 0.0
        else:
            ratio = 0.0
            if n > 0:
                ratio = log_pn[n + 1] - log_pn[n]
            w_new = (ratio + np.log(n + 1.0) + np.log(n_h[bit] + alpha[bit])
                     - np.log(n + alpha0) + log_pk[k, 1])
        weights[0] = w_new
        targets[0] = -1
        nw = 1
        for t in range(nt):
            cc = touched[t]
            targets[nw] = cc
            m = cl_fcount[cc, k]
            if scratch_cnt[cc] != cl_size[cc] or m + 1 > bounds[k]:
                weights[nw] = neg_inf
            elif flat:
                weights[nw] = scratch_L[cc]
            elif m == 0:
                h = _pattern(cl_fcount, cc, K)
                weights[nw] = (np.log(n_h[h | bit] + alpha[h | bit]) - np.log(n_h[h] + alpha[h] - 1.0)
                               + log_pk[k, 1] + scratch_L[cc])
            else:
                weights[nw] = np.log(m + 1.0) + log_pk[k, m + 1] - log_pk[k, m] + scratch_L[cc]
            nw += 1
        for t in range(nt):
            scratch_cnt[touched[t]] = 0
            scratch_L[touched[t]] = 0.0

        # sample a target
        mx = neg_inf
        for t in range(nw):
            if weights[t] > mx:
                mx = weights[t]
        total = 0.0
        for t in range(nw):
            if weights[t] > mx - PRUNE:
                total += np.exp(weights[t] - mx)
        thresh = uniforms[step] * total
        acc = 0.0
        choice = -1
        for t in range(nw):
            if weights[t] > mx - PRUNE:
                acc += np.exp(weights[t] - mx)
                choice = t
                if acc > thresh:
                    break
        target = targets[choice]

        # add j
        if target == -1:
            free_top[0] -= 1
            target = free_stack[free_top[0]]
            n_clusters[0] += 1
        else:
            n_h[_pattern(cl_fcount, target, K)] -= 1
        labels[j] = target
        cl_size[target] += 1
        cl_fcount[target, k] += 1
        n_h[_pattern(cl_fcount, target, K)] += 1
        _tally(j, target, 1, labels, nbr_ptr, nbr_idx, nbr_pair, pair_fp, levels, a_counts)


@njit(cache=True)
def canonicalize(labels, scratch):
    """First-appearance relabelling 0, 1, 2, ...; ``scratch`` must be -1 filled (restored on exit)."""
    r = labels.shape[0]
    out = np.empty(r, dtype=np.int32)
    nxt = 0
    for j in range(r):
        c = labels[j]
        if scratch[c] < 0:
            scratch[c] = nxt
            nxt += 1
        out[j] = scratch[c]
    for j in range(r):
        scratch[labels[j]] = -1
    return out
