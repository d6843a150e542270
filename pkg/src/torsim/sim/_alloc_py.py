"""Pure-Python max-min fair allocation kernel (progressive filling).

Fallback for the compiled kernel in _alloc_cy; same contract, same
arithmetic. Flows are given as CSR arrays over capacity elements.
"""

from __future__ import annotations

import numpy as np

_REL_TOL = 1e-12


def allocate_csr(indptr, indices, capacities):
    """Progressive-filling rates for flows over shared capacity elements.

    indptr/indices: CSR description of which elements each flow crosses.
    capacities: per-element capacity. Returns per-flow rates such that no
    element is oversubscribed and the allocation is max-min optimal.
    """
    n_flows = len(indptr) - 1
    n_elems = len(capacities)
    rates = np.zeros(n_flows)
    if n_flows == 0:
        return rates
    remaining = np.asarray(capacities, dtype=float).copy()
    counts = np.zeros(n_elems, dtype=np.int64)
    frozen = np.zeros(n_flows, dtype=bool)
    for f in range(n_flows):
        for k in range(indptr[f], indptr[f + 1]):
            counts[indices[k]] += 1

    unfrozen = n_flows
    while unfrozen > 0:
        increment = np.inf
        for e in range(n_elems):
            if counts[e] > 0:
                headroom = remaining[e] / counts[e]
                if headroom < increment:
                    increment = headroom
        if not np.isfinite(increment):
            break  # no unfrozen flow crosses any element
        saturated = np.zeros(n_elems, dtype=bool)
        for e in range(n_elems):
            if counts[e] > 0:
                remaining[e] -= increment * counts[e]
                if remaining[e] <= _REL_TOL * max(1.0, increment * counts[e]):
                    remaining[e] = 0.0
                    saturated[e] = True
        for f in range(n_flows):
            if frozen[f]:
                continue
            rates[f] += increment
            hit = False
            for k in range(indptr[f], indptr[f + 1]):
                if saturated[indices[k]]:
                    hit = True
                    break
            if hit:
                frozen[f] = True
                unfrozen -= 1
                for k in range(indptr[f], indptr[f + 1]):
                    counts[indices[k]] -= 1
    return rates
