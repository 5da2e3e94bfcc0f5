import csv

import numpy as np
import pytest

from sktshadow import reduction, solver
from sktshadow.basis import Domain1D, neumann_eigenpair
from sktshadow.errors import EpsilonZero, NoConvergence


@pytest.fixture(scope="module")
def setup64(worked):
    mode = neumann_eigenpair(Domain1D(1.0, 64), 1)
    root = reduction.reduce(worked, mode, 1)
    return mode, root


@pytest.fixture(scope="module")
def branch64(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-2)
    return solver.continue_branch(prob, np.geomspace(1e-2, 1e-4, 7), 1, root)


def test_problem_validation(worked, mode64):
    with pytest.raises(EpsilonZero):
        solver.StationaryProblem.create(worked, mode64, 0.0, eta=1e-3)
    with pytest.raises(ValueError):
        solver.StationaryProblem.create(worked, mode64, 1e-2, eta=-1.0)
    prob = solver.StationaryProblem.create(worked, mode64, 1e-2)
    assert prob.at(eps=1e-3).eps == 1e-3 and prob.at(eta=1e-4).eta == 1e-4


def test_ansatz_residual_is_second_order(worked, setup64):
    mode, root = setup64
    norms = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        prob = solver.StationaryProblem.create(worked, mode, eps)
        norms.append(solver.residual(solver.ansatz_guess(root, prob), prob).sup_norm())
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders >= 1.8)


@pytest.mark.parametrize("eta", [0.0, 1e-5])
@pytest.mark.parametrize("dealias", [False, True])
def test_jacobian_matches_finite_differences(worked, eta, dealias, rng):
    mode = neumann_eigenpair(Domain1D(1.0, 64, dealias), 1)
    root = reduction.reduce(worked, mode, 1)
    prob = solver.StationaryProblem.create(worked, mode, 1e-2, eta)
    Phi = solver.ansatz_guess(root, prob.at(eta=0.0))
    J = solver.jacobian(Phi, prob)
    decay = 1.0 / (1.0 + np.arange(64)) ** 2
    for _ in range(3):
        v = rng.standard_normal((2, 64)) * decay
        h = 1e-6 / np.max(np.abs(v))
        fd = (solver.residual_coeffs(Phi.coeffs + h * v, prob)
              - solver.residual_coeffs(Phi.coeffs - h * v, prob)) / (2 * h)
        jv = (J @ v.reshape(-1)).reshape(2, 64)
        assert np.linalg.norm(jv - fd) <= 1e-6 * np.linalg.norm(jv)
    assert np.allclose(J, solver.jacobian(Phi, prob, fd=True), rtol=1e-5, atol=1e-5 * np.max(np.abs(J)))


def test_newton_converges_from_ansatz(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-3)
    pt = solver.newton(solver.ansatz_guess(root, prob), prob)
    assert pt.residual_norm <= 1e-11
    assert pt.iterations <= 5
    assert np.all(pt.u > 0) and np.all(pt.w > 0)
    assert pt.alpha == np.inf and np.all(pt.v == 0)


def test_newton_reports_non_convergence(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-3)
    with pytest.raises(NoConvergence):
        solver.newton(solver.ansatz_guess(root, prob) * 3.0, prob, solver.NewtonOptions(max_iter=1))


def test_branch_limits(worked, setup64, branch64):
    mode, root = setup64
    last = branch64.points[-1]
    ew = worked.b2 / worked.a2 * root.s0 * (1 + abs(root.mu0) * np.sqrt(2))
    assert np.max(last.w_scaled) == pytest.approx(ew, rel=0.02)
    assert np.max(last.u) == pytest.approx(np.max(worked.a2 / (worked.b2 * mode.ell(root.mu0))), rel=0.02)
    assert last.s == pytest.approx(root.s0, rel=1e-2)
    assert last.mu == pytest.approx(root.mu0, rel=1e-2)
    assert all(pt.residual_norm <= 1e-10 for pt in branch64.points)
    assert np.all(np.diff(branch64.eps) < 0)


def test_branch_corrections_stabilize(branch64, setup64):
    _, root = setup64
    ds = np.array([(pt.s - root.s0) / pt.eps for pt in branch64.points])
    ratios = ds[1:] / ds[:-1]
    assert np.all((ratios > 0.5) & (ratios < 2.0))


def test_minus_branch_mirrors_plus(worked, setup64, branch64):
    mode, _ = setup64
    root_m = reduction.reduce(worked, mode, -1)
    prob = solver.StationaryProblem.create(worked, mode, 1e-3)
    pt = solver.newton(solver.ansatz_guess(root_m, prob), prob)
    plus = min(branch64.points, key=lambda q: abs(q.eps - 1e-3))
    # x -> 1 - x maps phi_1 to -phi_1, so the minus branch is the reflected plus branch
    assert np.allclose(pt.u, plus.u[::-1], rtol=1e-8)


def test_single_point_grid(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-3)
    br = solver.continue_branch(prob, [1e-3], 1, root)
    assert len(br) == 1


def test_arclength_reaches_target(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-2)
    br = solver.continue_branch(prob, np.geomspace(1e-2, 1e-3, 4), 1, root, arclength=True)
    assert br.points[-1].eps == pytest.approx(1e-3, rel=1e-12)
    assert all(pt.residual_norm <= 1e-10 for pt in br.points)


def test_small_eta_persistence(worked, setup64):
    mode, root = setup64
    prob = solver.StationaryProblem.create(worked, mode, 1e-2)
    shadow = solver.newton(solver.ansatz_guess(root, prob), prob)
    hom = solver.eta_homotopy(shadow, [1e6, 2e6, 4e6])
    dev = np.array(hom.u_deviation)
    assert np.all(np.diff(dev) < 0)
    # deviation is linear in eta = 1/alpha for small eta
    assert np.allclose(dev[1:] / dev[:-1], 0.5, atol=0.02)
    assert [pt.alpha for pt in hom.points] == pytest.approx([1e6, 2e6, 4e6])


def test_branch_csv_is_deterministic(branch64, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    solver.write_branch_csv(branch64, a)
    solver.write_branch_csv(branch64, b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert rows[0] == solver.BRANCH_HEADER
    assert float(rows[1][0]) == branch64.points[0].eps  # 17 significant digits round-trip


def test_fmt():
    assert solver.fmt(None) == "nan"
    assert float(solver.fmt(0.1 + 0.2)) == 0.1 + 0.2
