import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from cbpa import census_opt as co
from cbpa.netgraph import adjacency_and_laplacian, build_graph, complete_graph, path_graph


def _quad_cost(h, g0, eta=1.0):
    return co.DecomposedCost(lambda z: g0, lambda z: h, eta)


def test_second_order_rhs_examples():
    g0 = np.array([0.3, -0.2])
    cost = _quad_cost(np.eye(2), g0, eta=2.0)
    assert np.allclose(co.second_order_rhs(np.zeros(2), np.zeros(2), cost), -2.0 * g0)
    decay = _quad_cost(np.eye(3), np.zeros(3))
    dz = np.array([1.0, -2.0, 0.5])
    assert np.allclose(co.second_order_rhs(dz, np.zeros(3), decay), -dz)


def test_second_order_rhs_equilibrium_solves_newton_system():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 4))
    h = m @ m.T + 4 * np.eye(4)
    g0 = rng.normal(size=4)
    cost = _quad_cost(h, g0)
    sol = solve_ivp(lambda t, y: co.second_order_rhs(y, np.zeros(4), cost), (0, 20), np.zeros(4), rtol=1e-10, atol=1e-12)
    assert np.allclose(sol.y[:, -1], np.linalg.solve(h, -g0), atol=1e-7)


def test_second_order_rhs_errors():
    with pytest.raises(ValueError):
        co.second_order_rhs(np.zeros(3), np.zeros(3), _quad_cost(np.eye(2), np.zeros(2)))
    with pytest.raises(ValueError):
        co.second_order_rhs(np.zeros(2), np.zeros(2), _quad_cost(np.full((2, 2), np.nan), np.zeros(2)))
    with pytest.raises(ValueError):
        co.DecomposedCost(lambda z: z, lambda z: z, eta=0.0)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_second_order_rhs_linear_in_dz(a, b, seed):
    rng = np.random.default_rng(seed)
    cost = _quad_cost(rng.normal(size=(3, 3)), rng.normal(size=3), eta=0.7)
    z_ref = rng.normal(size=3)
    d1, d2 = rng.normal(size=(2, 3))
    base = co.second_order_rhs(np.zeros(3), z_ref, cost)
    lhs = co.second_order_rhs(a * d1 + b * d2, z_ref, cost) - base
    rhs = a * (co.second_order_rhs(d1, z_ref, cost) - base) + b * (co.second_order_rhs(d2, z_ref, cost) - base)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_burden_hessian_matches_finite_differences():
    n = 5
    model = co.BurdenModel(dkappa_dz=0.7)
    kappa0 = np.linspace(0.1, 0.5, n)

    def unobs(z):
        # cross terms of the variance that no single agent observes
        k = kappa0 + 0.7 * z
        return -2.0 / n * (1.0 - 1.0 / n) * sum(k[i] * k[j] for i in range(n) for j in range(n) if i != j) / 2.0

    h = co.burden_hessian(model, n)
    eps = 1e-4
    z = np.random.default_rng(1).normal(0, 0.1, n)
    fd = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei, ej = np.eye(n)[i] * eps, np.eye(n)[j] * eps
            fd[i, j] = (unobs(z + ei + ej) - unobs(z + ei - ej) - unobs(z - ei + ej) + unobs(z - ei - ej)) / (4 * eps ** 2)
    np.fill_diagonal(fd, 0.0)
    off = ~np.eye(n, dtype=bool)
    assert np.allclose(h[off], fd[off], rtol=1e-5)
    assert np.allclose(h, h.T, atol=1e-9)


def test_mask_hessian_examples():
    h = np.arange(9.0).reshape(3, 3) + 1
    assert np.array_equal(co.mask_hessian(h, complete_graph(3)), h)
    empty = co.mask_hessian(h, build_graph(3, []))
    assert np.array_equal(empty, np.diag(np.diag(h)))
    p = co.mask_hessian(h, path_graph(3))
    assert p[0, 2] == 0 and p[2, 0] == 0 and p[0, 1] == h[0, 1] and p[1, 1] == h[1, 1]
    with pytest.raises(ValueError):
        co.mask_hessian(np.eye(2), path_graph(3))


def test_burden_variance_examples():
    assert co.burden_variance([0.5, 0.5, 0.5]) == 0.0
    assert co.burden_variance([0.0, 1.0]) == 0.5
    k = np.random.default_rng(2).uniform(size=7)
    mean = sum(k) / 7
    assert co.burden_variance(k) == pytest.approx(sum((x - mean) ** 2 for x in k), rel=1e-12)
    with pytest.raises(ValueError):
        co.burden_variance([])


def test_burden_inputs_examples():
    m = co.BurdenModel(dkappa_dz=1.0)
    assert co.burden_inputs(m, 0.0, 1.0) == (0.0, 0.0)
    assert co.burden_inputs(m, 0.8, 1.0) == pytest.approx((-0.8, 0.8))
    assert co.burden_inputs(m, 0.2, 1.0)[0] > co.burden_inputs(m, 0.8, 1.0)[0]


@pytest.mark.parametrize("n", range(2, 9))
def test_burden_hessian_spectrum(n):
    h = co.burden_hessian(co.BurdenModel(), n, normalized=True)
    ev = np.sort(np.linalg.eigvalsh(h))
    assert np.allclose(ev, [-1.0] * (n - 1) + [n - 1.0], atol=1e-9)
    assert np.all(np.diag(h) == 0)
    dis = co.burden_hessian(co.BurdenModel(mode="dissensus"), n, normalized=True)
    assert np.allclose(np.sort(np.linalg.eigvalsh(dis)), np.sort(-ev), atol=1e-9)


def test_burden_model_rejects_unknown_mode():
    with pytest.raises(ValueError):
        co.BurdenModel(mode="other")


def test_consensus_gradient_rhs_examples():
    _, lap = adjacency_and_laplacian(complete_graph(3))
    zero = lambda z: np.zeros_like(z)
    assert np.allclose(co.consensus_gradient_rhs(np.full(3, 0.7), lap, zero, 1.0), 0)
    _, l2 = adjacency_and_laplacian(complete_graph(2))
    assert np.allclose(co.consensus_gradient_rhs([1.0, -1.0], l2, zero, 1.0), [-2.0, 2.0])
    with pytest.raises(ValueError):
        co.consensus_gradient_rhs(np.zeros(2), np.array([[1.0, 0.0], [0.0, 1.0]]), zero, 1.0)


def test_consensus_gradient_equilibrium_matches_analytic():
    _, lap = adjacency_and_laplacian(path_graph(4))
    x_star = np.array([1.0, -0.5, 2.0, 0.0])
    eta3 = 0.5
    sol = solve_ivp(lambda t, z: co.consensus_gradient_rhs(z, lap, lambda x: x - x_star, eta3),
                    (0, 200), np.zeros(4), rtol=1e-10, atol=1e-12)
    analytic = np.linalg.solve(lap + eta3 * np.eye(4), eta3 * x_star)
    assert np.allclose(sol.y[:, -1], analytic, atol=1e-7)


def test_discrete_consensus_examples():
    _, l2 = adjacency_and_laplacian(complete_graph(2))
    assert np.allclose(co.discrete_consensus_step([1.0, 0.0], 0.25, l2, None), [0.75, 0.25])
    assert np.allclose(co.discrete_consensus_step([2.0, 2.0], 0.25, l2, None), [2.0, 2.0])
    with pytest.raises(ValueError):
        co.discrete_consensus_step([1.0, 0.0], 1.0, l2, None)


def test_discrete_consensus_converges_to_mean():
    rng = np.random.default_rng(3)
    n = 7
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, 4), (2, 6)]
    _, lap = adjacency_and_laplacian(build_graph(n, edges))
    eps = 0.9 / np.diag(lap).max()
    chi = rng.normal(size=n)
    mean0 = chi.mean()
    for _ in range(2000):
        chi = co.discrete_consensus_step(chi, eps, lap, None)
        assert abs(chi.mean() - mean0) < 1e-12
    p = np.eye(n) - eps * lap
    assert np.allclose(np.linalg.matrix_power(p, 2000) @ np.ones(n), np.ones(n))
    assert np.abs(chi - mean0).max() < 1e-6


def test_potential_and_utility_examples():
    d, gm = np.eye(2), np.zeros((2, 2))
    assert co.potential_value(np.zeros(2), d, gm) == 0.0
    assert co.potential_value([1.0, 1.0], d, gm) == pytest.approx(-1.0)
    g1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert co.local_utility(0, [1.0, 1.0], d, g1) == pytest.approx(0.0)
    assert co.local_utility(1, [1.0, 1.0], d, g1) == pytest.approx(0.0)
    assert co.local_utility(0, np.zeros(2), d, g1, lambda z: 0.25) == 0.25
    with pytest.raises(ValueError):
        co.potential_value(np.zeros(2), d, np.array([[0.0, 1.0], [0.0, 0.0]]))


def _random_potential_instance(rng, n):
    d = np.diag(rng.uniform(0.5, 2.0, n))
    g = rng.normal(0, 0.5, (n, n))
    g = (g + g.T) / 2
    np.fill_diagonal(g, 0.0)
    return d, g


def test_sum_of_utilities_equals_potential():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        d, g = _random_potential_instance(rng, n)
        z = rng.normal(size=n)
        total = sum(co.local_utility(i, z, d, g) for i in range(n))
        assert total == pytest.approx(co.potential_value(z, d, g), abs=1e-12)


def test_potential_monotone_along_flow():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        d, g = _random_potential_instance(rng, n)
        c = rng.normal(size=n)
        F = lambda z: -0.25 * np.sum(z ** 4) + c @ z
        grad_F = lambda z: -z ** 3 + c
        z = rng.normal(0, 0.5, n)
        phi = co.potential_value(z, d, g, F)
        dt = 0.01
        for _ in range(200):
            z = z + dt * co.potential_flow_rhs(z, d, g, grad_F)
            new = co.potential_value(z, d, g, F)
            assert new >= phi - 1e-8
            phi = new


def _settle(traj, tol=1e-3):
    spread = traj.max(axis=1) - traj.min(axis=1)
    idx = np.flatnonzero(spread >= tol)
    return 0 if idx.size == 0 else int(idx[-1]) + 1


@pytest.mark.parametrize("level", np.linspace(0.05, 0.95, 20))
def test_equal_burden_flow_reaches_consensus_ray(level):
    n = 5
    model = co.BurdenModel(dkappa_dz=1.0)
    kappa0 = np.full(n, level)
    z0 = np.random.default_rng(int(level * 1000)).uniform(-0.1, 0.1, n)
    _, z = co.equal_burden_flow(n, model, complete_graph(n), 1.0, z0, steps=3000, dt=0.02, kappa0=kappa0)
    final = z[-1]
    assert np.ptp(final) < 1e-3
    grad = co.burden_cost(model, kappa0, n).grad_obs(z0)
    assert np.sign(final.mean()) == -np.sign(grad.sum())


def test_gradient_only_flow_settles_at_zero():
    n = 5
    model = co.BurdenModel()
    for seed in range(20):
        z0 = np.random.default_rng(seed).uniform(-0.5, 0.5, n)
        _, z = co.equal_burden_flow(n, model, complete_graph(n), 1.0, z0, steps=3000, dt=0.02, use_hessian=False)
        assert np.abs(z[-1]).max() < 1e-3


def test_masked_path_flow_reaches_ray_more_slowly():
    n = 5
    model = co.BurdenModel()
    z0 = np.random.default_rng(7).uniform(-0.3, 0.3, n)
    _, zc = co.equal_burden_flow(n, model, complete_graph(n), 1.0, z0, steps=20000, dt=0.02)
    _, zp = co.equal_burden_flow(n, model, path_graph(n), 1.0, z0, steps=20000, dt=0.02)
    assert np.ptp(zc[-1]) < 1e-3 and np.ptp(zp[-1]) < 1e-3
    assert _settle(zp) > _settle(zc)


def test_equal_burden_flow_requires_connected_graph():
    with pytest.raises(ValueError):
        co.equal_burden_flow(3, co.BurdenModel(), build_graph(3, [(0, 1)]), 1.0, np.zeros(3), steps=1)
