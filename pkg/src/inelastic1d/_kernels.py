"""Compiled inner loop for the collision contraction."""

import numpy as np
from numba import njit


@njit(cache=True)
def contract_slots(coeffs, group_d, slot_ptr, slot_o, slot_T, out):
    """Accumulate the collision tensor contraction into ``out``.

    For every offset group ``g`` with ``d = group_d[g]`` and every cell ``j``
    the pair products ``u = c[j + d] ⊗ c[j]`` are formed once and pushed
    through the slots ``slot_ptr[g] .. slot_ptr[g + 1]``.  Groups, cells and
    slots are visited in a fixed order, so the summation order for every
    target cell is deterministic.
    """
    n, K = coeffs.shape
    KK = K * K
    u = np.empty(KK)
    for g in range(group_d.shape[0]):
        d = group_d[g]
        s0 = slot_ptr[g]
        s1 = slot_ptr[g + 1]
        for j in range(max(0, -d), min(n, n - d)):
            i = j + d
            for a in range(K):
                for b in range(K):
                    u[a * K + b] = coeffs[i, a] * coeffs[j, b]
            for s in range(s0, s1):
                l = j + slot_o[s]
                if l < 0 or l >= n:
                    continue
                T = slot_T[s]
                for m in range(K):
                    acc = 0.0
                    for k in range(KK):
                        acc += u[k] * T[k, m]
                    out[l, m] += acc
    return out
