# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled max-min fair allocation kernel (progressive filling).

Hot inner loop of the flow-level simulator: called after every arrival,
departure, and refill tick. Mirrors _alloc_py.allocate_csr exactly.
"""

import numpy as np

DEF REL_TOL = 1e-12


def allocate_csr(indptr_in, indices_in, capacities_in):
    cdef long long[::1] indptr = np.ascontiguousarray(indptr_in, dtype=np.int64)
    cdef long long[::1] indices = np.ascontiguousarray(indices_in, dtype=np.int64)
    cdef double[::1] remaining = np.array(capacities_in, dtype=np.float64)

    cdef Py_ssize_t n_flows = indptr.shape[0] - 1
    cdef Py_ssize_t n_elems = remaining.shape[0]
    rates_arr = np.zeros(n_flows, dtype=np.float64)
    cdef double[::1] rates = rates_arr
    if n_flows == 0:
        return rates_arr

    cdef long long[::1] counts = np.zeros(n_elems, dtype=np.int64)
    cdef unsigned char[::1] frozen = np.zeros(n_flows, dtype=np.uint8)
    cdef unsigned char[::1] saturated = np.zeros(n_elems, dtype=np.uint8)

    cdef Py_ssize_t f, e, k
    cdef double increment, headroom, spent
    cdef bint hit, any_elem
    cdef Py_ssize_t unfrozen = n_flows

    for f in range(n_flows):
        for k in range(indptr[f], indptr[f + 1]):
            counts[indices[k]] += 1

    while unfrozen > 0:
        increment = -1.0
        any_elem = False
        for e in range(n_elems):
            if counts[e] > 0:
                headroom = remaining[e] / counts[e]
                if not any_elem or headroom < increment:
                    increment = headroom
                    any_elem = True
        if not any_elem:
            break
        for e in range(n_elems):
            saturated[e] = 0
            if counts[e] > 0:
                spent = increment * counts[e]
                remaining[e] -= spent
                if remaining[e] <= REL_TOL * (spent if spent > 1.0 else 1.0):
                    remaining[e] = 0.0
                    saturated[e] = 1
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
                frozen[f] = 1
                unfrozen -= 1
                for k in range(indptr[f], indptr[f + 1]):
                    counts[indices[k]] -= 1
    return rates_arr
