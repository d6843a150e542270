import numpy as np
import pytest

from torsim.sim import allocation
from torsim.sim.allocation import max_min_allocate


def brute_force_fill(flow_elements, capacities, step_count=None):
    """Independent oracle: progressive filling with per-flow dict state.

    Naive loops, no shared code with the kernels.
    """
    remaining = {e: c for e, c in enumerate(capacities)}
    rates = {f: 0.0 for f in range(len(flow_elements))}
    live = set(rates)
    while live:
        # bottleneck element among those used by live flows
        users = {}
        for f in live:
            for e in flow_elements[f]:
                users.setdefault(e, []).append(f)
        if not users:
            break
        bottleneck = min(users, key=lambda e: remaining[e] / len(users[e]))
        inc = remaining[bottleneck] / len(users[bottleneck])
        for f in live:
            rates[f] += inc
        for e, fs in users.items():
            remaining[e] -= inc * len(fs)
        newly_frozen = set(users[bottleneck])
        # freeze flows on any element that just hit zero
        for e, fs in users.items():
            if remaining[e] <= 1e-12 * max(1.0, capacities[e]):
                newly_frozen |= set(fs)
        live -= newly_frozen
    return [rates[f] for f in range(len(flow_elements))]


class TestBasics:
    def test_two_flows_one_link(self):
        rates = max_min_allocate([[0], [0]], [10.0])
        assert list(rates) == [5.0, 5.0]

    def test_bottlenecked_flow_releases_capacity(self):
        # A limited to 2 by its own link; B and C split the rest of the 10
        flows = [[0, 1], [1], [1]]
        rates = max_min_allocate(flows, [2.0, 10.0])
        assert rates[0] == pytest.approx(2.0)
        assert rates[1] == pytest.approx(4.0)
        assert rates[2] == pytest.approx(4.0)

    def test_single_flow_min_capacity(self):
        rates = max_min_allocate([[0, 1, 2]], [9.0, 7.0, 11.0])
        assert rates[0] == pytest.approx(7.0)

    def test_empty_flow_list(self):
        assert len(max_min_allocate([], [5.0])) == 0

    def test_flow_without_elements_rejected(self):
        with pytest.raises(ValueError):
            max_min_allocate([[]], [1.0])

    def test_nonpositive_capacity_rejected(self):
        with pytest.raises(ValueError):
            max_min_allocate([[0]], [0.0])


def random_instance(rng):
    n_elems = int(rng.integers(1, 7))
    n_flows = int(rng.integers(1, 7))
    capacities = rng.uniform(0.5, 20.0, size=n_elems)
    flows = []
    for _ in range(n_flows):
        k = int(rng.integers(1, n_elems + 1))
        flows.append(sorted(rng.choice(n_elems, size=k, replace=False).tolist()))
    return flows, capacities


@pytest.mark.parametrize("backend", ["python", "cython"])
class TestOracleEquivalence:
    def test_500_random_instances(self, backend):
        if backend == "cython" and allocation.BACKEND != "cython":
            pytest.skip("compiled kernel not built")
        rng = np.random.Generator(np.random.PCG64(2024))
        for _ in range(500):
            flows, caps = random_instance(rng)
            got = max_min_allocate(flows, caps, backend=backend)
            want = brute_force_fill(flows, caps)
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_no_element_oversubscribed(self, backend):
        if backend == "cython" and allocation.BACKEND != "cython":
            pytest.skip("compiled kernel not built")
        rng = np.random.Generator(np.random.PCG64(99))
        for _ in range(200):
            flows, caps = random_instance(rng)
            rates = max_min_allocate(flows, caps, backend=backend)
            load = np.zeros(len(caps))
            for f, elems in enumerate(flows):
                for e in elems:
                    load[e] += rates[f]
            assert np.all(load <= caps + 1e-9)


class TestBackendParity:
    def test_backends_match_bitwise(self):
        if allocation.BACKEND != "cython":
            pytest.skip("compiled kernel not built")
        rng = np.random.Generator(np.random.PCG64(7))
        for _ in range(200):
            flows, caps = random_instance(rng)
            py = max_min_allocate(flows, caps, backend="python")
            cy = max_min_allocate(flows, caps, backend="cython")
            assert list(py) == list(cy)
