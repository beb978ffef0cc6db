import numpy as np
import pytest
import scipy.sparse as sp

from _oracles import lp_vertex_optimum
from contractmatch.errors import SolverError, ValidationError
from contractmatch.lp_core import LinearProgram, solve_lp, solve_or_raise


def test_box_only():
    lp = LinearProgram.from_rows([1.0], [], [(0, 5)])
    sol = solve_lp(lp, "simplex")
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(5.0)


def test_textbook():
    lp = LinearProgram.from_rows([1, 1], [([1, 1], "<=", 1)])
    for method in ("simplex", "highs"):
        assert solve_lp(lp, method).objective_value == pytest.approx(1.0)


def test_tiny_matching_lp():
    # two live buy units, one sell unit with penalty 6: flows j_A, j_B
    lp = LinearProgram.from_rows(
        [6, 6], [([1, 1], "<=", 1), ([1, 0], "<=", 1), ([0, 1], "<=", 1)])
    sol = solve_lp(lp, "simplex")
    assert sol.objective_value == pytest.approx(6.0)
    assert sol.values.sum() == pytest.approx(1.0)
    assert sol.is_integral()


def test_statuses_are_returned_not_raised():
    infeasible = LinearProgram.from_rows([1, 0], [([1, 1], ">=", 3), ([1, 0], "<=", 1), ([0, 1], "<=", 1)])
    unbounded = LinearProgram.from_rows([1, 1], [([1, -1], "<=", 1)])
    for method in ("simplex", "highs"):
        assert solve_lp(infeasible, method).status == "infeasible"
        assert solve_lp(unbounded, method).status == "unbounded"
    with pytest.raises(SolverError):
        solve_or_raise(unbounded, "simplex")


def test_shape_errors():
    with pytest.raises(ValidationError):
        LinearProgram.from_rows([1, 2], [([1], "<=", 1)])
    with pytest.raises(ValidationError):
        LinearProgram(np.ones(2), np.ones((1, 3)), ("<=",), np.ones(1), 0.0, np.inf)
    with pytest.raises(ValidationError):
        LinearProgram.from_rows([1], [([1], "<>", 1)])
    with pytest.raises(ValidationError):
        LinearProgram.from_rows([1], [], [(2, 1)])


def test_beale_cycling_example_terminates():
    # Dantzig's rule with naive ratio ties cycles on this LP
    c = [0.75, -20, 0.5, -6]
    rows = [([0.25, -8, -1, 9], "<=", 0), ([0.5, -12, -0.5, 3], "<=", 0), ([0, 0, 1, 0], "<=", 1)]
    sol = solve_lp(LinearProgram.from_rows(c, rows), "simplex")
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.25)


def test_highly_degenerate_assignment():
    # 6x6 assignment polytope: every vertex is massively degenerate
    n = 6
    rng = np.random.default_rng(4)
    w = rng.integers(0, 3, size=(n, n)).astype(float)  # many ties
    rows = []
    for r in range(n):
        rows.append(([1.0 if i // n == r else 0.0 for i in range(n * n)], "=", 1))
        rows.append(([1.0 if i % n == r else 0.0 for i in range(n * n)], "=", 1))
    lp = LinearProgram.from_rows(w.ravel(), rows)
    sol = solve_lp(lp, "simplex")
    assert sol.objective_value == pytest.approx(solve_lp(lp, "highs").objective_value)
    assert sol.is_integral()


def test_nonzero_lower_bounds_and_equalities():
    lp = LinearProgram.from_rows(
        [1, 2, -1],
        [([1, 1, 1], "=", 6), ([1, -1, 0], ">=", -2)],
        [(1, 4), (-1, 3), (0, None)],
    )
    s, h = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
    assert s.objective_value == pytest.approx(h.objective_value)
    assert lp.max_violation(s.values) <= 1e-9


def test_sparse_matrix_accepted():
    A = sp.csr_matrix(np.array([[1.0, 1.0]]))
    lp = LinearProgram(np.array([1.0, 2.0]), A, ("<=",), np.array([3.0]), 0.0, np.array([2.0, 2.0]))
    assert solve_lp(lp, "simplex").objective_value == pytest.approx(5.0)
    assert solve_lp(lp, "auto").objective_value == pytest.approx(5.0)


def test_deterministic():
    rng = np.random.default_rng(0)
    lp = _random_lp(rng, 10, 8)
    a, b = solve_lp(lp, "simplex"), solve_lp(lp, "simplex")
    assert np.array_equal(a.values, b.values)


def _random_lp(rng, nvar, nrow):
    """Feasible by construction (rows built around a known point), bounded by a final sum row."""
    x0 = rng.uniform(0, 3, nvar)
    A = rng.uniform(-2, 3, (nrow, nvar))
    A[rng.random((nrow, nvar)) < 0.3] = 0.0
    ax = A @ x0
    senses, rhs = [], []
    for val in ax:
        r = rng.random()
        if r < 0.7:
            senses.append("<="), rhs.append(val + rng.uniform(0, 2))
        elif r < 0.9:
            senses.append(">="), rhs.append(val - rng.uniform(0, 2))
        else:
            senses.append("="), rhs.append(val)
    upper = np.where(rng.random(nvar) < 0.5, rng.uniform(3, 6, nvar), np.inf)
    A = np.vstack([A, np.ones(nvar)])
    senses.append("<=")
    rhs.append(10.0 * nvar)
    c = rng.uniform(-3, 5, nvar)
    return LinearProgram(c, A, tuple(senses), np.array(rhs), 0.0, upper)


def _as_le(lp):
    A, b = [], []
    for row, s, r in zip(lp.dense_matrix(), lp.senses, lp.rhs):
        if s in ("<=", "="):
            A.append(row), b.append(r)
        if s in (">=", "="):
            A.append(-row), b.append(-r)
    return np.array(A), np.array(b)


@pytest.mark.parametrize("seed", range(5))
def test_random_lps_match_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    for _ in range(30):
        nvar = int(rng.integers(1, 5))
        lp = _random_lp(rng, nvar, int(rng.integers(0, 3)))
        A, b = _as_le(lp)
        status, value = lp_vertex_optimum(lp.objective, A, b, lp.lower, lp.upper)
        sol = solve_lp(lp, "simplex")
        assert sol.status == status == "optimal"
        assert sol.objective_value == pytest.approx(value, abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_random_lps_match_highs(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(35):
        lp = _random_lp(rng, int(rng.integers(1, 21)), int(rng.integers(0, 20)))
        s, h = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
        assert s.status == h.status == "optimal"
        assert s.objective_value == pytest.approx(h.objective_value, abs=1e-6)
        assert lp.max_violation(s.values) <= 1e-7
        assert s.objective_value == pytest.approx(float(lp.objective @ s.values), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_transportation_lps_are_integral(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        q, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        supply, demand = rng.integers(0, 5, q), rng.integers(0, 5, k)
        edges = [(u, i) for u in range(q) for i in range(k) if rng.random() < 0.6]
        if not edges:
            continue
        rows = [([1.0 if e[0] == u else 0.0 for e in edges], "<=", supply[u]) for u in range(q)]
        rows += [([1.0 if e[1] == i else 0.0 for e in edges], "<=", demand[i]) for i in range(k)]
        lp = LinearProgram.from_rows(rng.integers(0, 5, len(edges)).astype(float), rows)
        assert solve_lp(lp, "simplex").is_integral(1e-7)


def test_wider_lps_match_vertex_enumeration():
    rng = np.random.default_rng(77)
    for nvar in (5, 6, 7, 8):
        for _ in range(2):
            lp = _random_lp(rng, nvar, 1)
            A, b = _as_le(lp)
            status, value = lp_vertex_optimum(lp.objective, A, b, lp.lower, lp.upper)
            assert status == "optimal"
            assert solve_lp(lp, "simplex").objective_value == pytest.approx(value, abs=1e-6)
