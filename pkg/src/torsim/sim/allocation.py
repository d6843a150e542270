"""Max-min fair allocation: kernel selection and the list-based API.

The compiled kernel (_alloc_cy, built by setup.py) is used when
importable; otherwise the pure-Python twin (_alloc_py) takes over.
Both implement identical progressive filling over CSR flow/element
structure, so results are bit-identical across backends.
"""

from __future__ import annotations

import numpy as np

from . import _alloc_py

try:
    from . import _alloc_cy  # type: ignore[attr-defined]

    _kernel = _alloc_cy.allocate_csr
    BACKEND = "cython"
except ImportError:
    _kernel = _alloc_py.allocate_csr
    BACKEND = "python"


def to_csr(flow_elements: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(flow_elements) + 1, dtype=np.int64)
    for i, elems in enumerate(flow_elements):
        indptr[i + 1] = indptr[i] + len(elems)
    indices = np.empty(indptr[-1], dtype=np.int64)
    pos = 0
    for elems in flow_elements:
        for e in elems:
            indices[pos] = e
            pos += 1
    return indptr, indices


def max_min_allocate(
    flow_elements: list[list[int]],
    capacities,
    backend: str | None = None,
) -> np.ndarray:
    """Rates per flow under max-min fairness with shared capacities.

    flow_elements[i] lists the capacity-element indices flow i crosses;
    capacities[e] is element e's capacity. No element ends up
    oversubscribed, and no flow's rate can grow without shrinking an
    equal-or-smaller flow's.
    """
    for i, elems in enumerate(flow_elements):
        if not elems:
            raise ValueError(f"flow {i} crosses no capacity element")
    caps = np.asarray(capacities, dtype=float)
    if len(caps) and caps.min() <= 0:
        raise ValueError("capacities must be positive")
    indptr, indices = to_csr(flow_elements)
    if backend == "python":
        return _alloc_py.allocate_csr(indptr, indices, caps)
    if backend == "cython":
        from . import _alloc_cy  # raises if not built

        return _alloc_cy.allocate_csr(indptr, indices, caps)
    return _kernel(indptr, indices, caps)
