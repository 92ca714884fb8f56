import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from memcontrol.errors import (
    BranchCutError,
    ContourIntersectsBranchCut,
    DimensionMismatch,
    GridIncompatible,
    NonConvergedQuadrature,
    NotConverged,
    SingularSymbol,
)
from memcontrol.resolvent import (
    MemoryKernel,
    ResolventTable,
    SpectralSystem,
    TableRoute,
    apply_resolvent,
    build_resolvent_table,
    decay_diagnostics,
    derivative_at_zero,
    invert_laplace,
    laplace_symbol,
    scalar_resolvent_contour,
    scalar_resolvent_ml,
    verify_resolvent_equation,
)
from memcontrol.volterra import TimeGrid, step_linear_mode
from oracles import observed_order, resolvent_mp

GRID33 = np.linspace(0.0, 1.0, 33)


@pytest.fixture(scope="module")
def tables(kernel):
    system = SpectralSystem(5)
    return {
        route: build_resolvent_table(kernel, system, GRID33, route, volterra_step=1 / 2048)
        for route in (TableRoute.ML_SERIES, TableRoute.CONTOUR, TableRoute.VOLTERRA)
    }


# kernel -------------------------------------------------------------------


@pytest.mark.parametrize("args", [(0.0, 0.5, 0.5), (1.0, -0.1, 0.5), (1.0, 0.5, 1.0), (1.0, 0.5, 0.0)])
def test_kernel_rejects_invalid_parameters(args):
    with pytest.raises(ValueError):
        MemoryKernel(*args)


def test_kernel_formula_and_singularity(kernel):
    t = 0.3
    expected = math.exp(-0.5 * t) * t**-0.5 / math.gamma(0.5)
    assert kernel.kernel_at(t) == pytest.approx(expected, rel=1e-15)
    with pytest.raises(ValueError):
        kernel.kernel_at(0.0)


@given(st.floats(0.0, 5.0), st.floats(0.05, 0.95), st.floats(1e-3, 3.0))
def test_kernel_antiderivatives(beta, nu, x):
    k = MemoryKernel(1.3, beta, nu)

    def quad(f):
        return integrate.quad(f, 0, x, weight="alg", wvar=(nu - 1, 0), epsabs=0, epsrel=1e-13, limit=200)[0]

    c = 1.3 / math.gamma(nu)
    assert k.integral(x) == pytest.approx(c * quad(lambda t: math.exp(-beta * t)), rel=1e-11)
    assert k.first_moment(x) == pytest.approx(c * quad(lambda t: t * math.exp(-beta * t)), rel=1e-11)
    for n in range(3):
        ref = integrate.quad(lambda t: t**n * float(k.integral(t)), 0, x, epsabs=0, epsrel=1e-12, limit=200)[0]
        assert float(k.integrated_moment(x, n)) == pytest.approx(ref, rel=1e-9)


def test_kernel_integral_without_damping():
    k = MemoryKernel(2.0, 0.0, 0.25)
    x = 0.7
    assert float(k.integral(x)) == pytest.approx(2.0 * x**0.25 / math.gamma(1.25), rel=1e-14)


# spectral system ------------------------------------------------------------


def test_spectral_system_eigenvalues_and_orthonormality():
    s = SpectralSystem(6, 257)
    assert np.array_equal(s.eigenvalues, np.arange(1, 7) ** 2)
    gram = s.basis.T @ (s.quad_weights[:, None] * s.basis)
    assert np.max(np.abs(gram - np.eye(6))) < 1e-12


@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_grid_transform_round_trip(coeffs):
    s = SpectralSystem(6, 129)
    assert np.allclose(s.from_grid(s.to_grid(coeffs)), coeffs, atol=1e-10)


def test_state_norm_parseval():
    s = SpectralSystem(4, 513)
    c = np.array([1.0, -2.0, 0.5, 0.0])
    assert s.state_norm(c) == pytest.approx(np.linalg.norm(c))
    assert s.state_norm(c, 2.0) == pytest.approx(s.lp_norm(s.to_grid(c), 2.0), rel=1e-12)


# Laplace symbol ------------------------------------------------------------------


def test_symbol_without_memory():
    assert laplace_symbol(MemoryKernel(1e-300, 0.5, 0.5), 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)


def test_symbol_direct_substitution():
    value = laplace_symbol(MemoryKernel(1.0, 1.0, 0.5), 1.0, 2.0)
    assert value == pytest.approx(1 / (3 + 1 / math.sqrt(3)), rel=1e-15)
    assert abs(value.imag) == 0.0


def test_symbol_conjugate_example():
    k = MemoryKernel(1.0, 0.5, 0.5)
    assert laplace_symbol(k, 4.0, 1 - 2j) == pytest.approx(np.conj(laplace_symbol(k, 4.0, 1 + 2j)), rel=1e-15)


@given(st.floats(-0.4, 20), st.floats(-50, 50), st.floats(0.5, 64), st.floats(0.05, 0.95))
def test_symbol_conjugate_symmetry(re, im, lam, nu):
    k = MemoryKernel(1.0, 0.5, nu)
    s = complex(re, im)
    if im == 0 and re + 0.5 <= 0:
        return
    assert laplace_symbol(k, lam, s.conjugate()) == pytest.approx(np.conj(laplace_symbol(k, lam, s)), rel=1e-13)


def test_symbol_branch_cut():
    with pytest.raises(BranchCutError):
        laplace_symbol(MemoryKernel(1.0, 0.5, 0.5), 1.0, -1.0)


def test_symbol_singular_denominator():
    # s = -1, beta = 2: denominator = -1 + 1 + alpha
    with pytest.raises(SingularSymbol):
        laplace_symbol(MemoryKernel(1e-300, 2.0, 0.5), 1.0, -1.0)


# contour inversion ----------------------------------------------------------------


def test_invert_laplace_exponential():
    value, err, n = invert_laplace(lambda s: 1 / (s + 1), 1.0)
    assert value.real == pytest.approx(math.exp(-1), abs=1e-12)
    assert err < 1e-9 and n >= 32


def test_invert_laplace_reports_nonconvergence():
    # a jump at t = 1 defeats the contour
    with pytest.raises(NonConvergedQuadrature):
        invert_laplace(lambda s: np.exp(-s) / s, 1.0, max_nodes=256)


def test_invert_laplace_branch_guard():
    with pytest.raises(ContourIntersectsBranchCut):
        invert_laplace(lambda s: 1 / (s + 1), 1.0, branch_point=1e3)


def test_contour_without_memory():
    assert scalar_resolvent_contour(MemoryKernel(1e-12, 0.0, 0.5), 1.0, 1.0) == pytest.approx(math.exp(-1), abs=1e-10)


def test_contour_matches_series(kernel):
    c = scalar_resolvent_contour(kernel, 1.0, 0.5)
    m = scalar_resolvent_ml(kernel, 1.0, 0.5)
    assert abs(c - m) <= 1e-6 * abs(m)


def test_contour_matches_time_stepping(kernel):
    c = scalar_resolvent_contour(kernel, 4.0, 0.25)
    w = step_linear_mode(kernel, 4.0, TimeGrid(0.25, 512))
    assert abs(c - w[-1]) <= 1e-4


@pytest.mark.parametrize("lam", [1.0, 4.0, 25.0, 64.0])
@pytest.mark.parametrize("t", [0.01, 0.3, 1.0])
def test_contour_imaginary_part_and_node_doubling(kernel, lam, t):
    value, err, imag, used = scalar_resolvent_contour(kernel, lam, t, full=True)
    assert imag <= 1e-10
    assert abs(scalar_resolvent_contour(kernel, lam, t, nodes=2 * used) - value) < 1e-9
    assert abs(value - resolvent_mp(1.0, 0.5, 0.5, lam, t)) <= max(err, 1e-12)


def test_contour_needs_enough_nodes(kernel):
    with pytest.raises(ValueError):
        scalar_resolvent_contour(kernel, 1.0, 0.5, nodes=8)


# series route ---------------------------------------------------------------------


def test_series_is_one_at_origin(kernel):
    assert scalar_resolvent_ml(kernel, 9.0, 0.0) == 1.0


def test_series_without_memory():
    assert scalar_resolvent_ml(MemoryKernel(1e-12, 0.5, 0.5), 1.0, 1.0) == pytest.approx(math.exp(-1), abs=1e-8)


@pytest.mark.parametrize("lam, t", [(1.0, 0.5), (4.0, 1.0), (9.0, 0.25), (16.0, 0.1)])
def test_series_against_extended_precision(kernel, lam, t):
    value, err, _ = scalar_resolvent_ml(kernel, lam, t, full=True)
    ref = resolvent_mp(1.0, 0.5, 0.5, lam, t)
    assert abs(value - ref) <= max(err, 1e-14)
    assert abs(value - ref) <= 1e-10


def test_series_gives_up_for_stiff_modes(kernel):
    with pytest.raises(NotConverged):
        scalar_resolvent_ml(kernel, 64.0, 1.0)


# tables ---------------------------------------------------------------------


def test_table_on_single_time(kernel):
    for route in TableRoute:
        t = build_resolvent_table(kernel, SpectralSystem(4), [0.0], route)
        assert np.array_equal(t.values, np.ones((4, 1)))


def test_table_rejects_bad_times(kernel):
    with pytest.raises(ValueError):
        build_resolvent_table(kernel, SpectralSystem(2), [0.0, 0.5, 0.5])
    with pytest.raises(ValueError):
        build_resolvent_table(kernel, SpectralSystem(2), [0.1, 0.5])


def test_tables_start_at_one(tables):
    for table in tables.values():
        assert np.all(table.values[:, 0] == 1.0)


def test_series_and_contour_tables_agree(tables):
    ml, c = tables[TableRoute.ML_SERIES], tables[TableRoute.CONTOUR]
    assert np.max(np.abs(ml.values - c.values)) <= 1e-6


def test_series_table_falls_back_per_entry(kernel):
    table = build_resolvent_table(kernel, SpectralSystem(8), GRID33, TableRoute.ML_SERIES)
    routes = table.entry_routes
    assert routes[0, -1] == "MLSeries"
    assert routes[7, -1] == "Contour"
    assert set(routes.ravel()) == {"MLSeries", "Contour"}


def test_contour_table_keeps_larger_error(kernel, tables):
    c = tables[TableRoute.CONTOUR]
    _, ml_err, _ = scalar_resolvent_ml(kernel, 1.0, 1.0, full=True)
    _, c_err, _, _ = scalar_resolvent_contour(kernel, 1.0, 1.0, full=True)
    assert c.error_estimates[0, -1] == max(ml_err, c_err)


def test_table_sup_norm(tables):
    for table in tables.values():
        assert table.sup_norm == pytest.approx(np.max(np.abs(table.values)))
        assert 1.0 <= table.sup_norm <= 1 + 1e-8


def test_table_csv_round_trip(kernel, tables):
    table = tables[TableRoute.ML_SERIES]
    text = table.to_csv()
    assert text.splitlines()[0] == "m,t,s,err,route"
    back = ResolventTable.from_csv(text, kernel)
    assert np.array_equal(back.values, table.values)
    assert np.array_equal(back.times, table.times)
    assert np.array_equal(back.error_estimates, table.error_estimates)
    assert np.array_equal(back.entry_routes, table.entry_routes)


def test_table_json_round_trip(tables, tmp_path):
    table = tables[TableRoute.CONTOUR]
    path = tmp_path / "t.json"
    table.to_json(path)
    back = ResolventTable.from_json(path)
    assert np.array_equal(back.values, table.values)
    assert back.route is table.route and back.sup_norm == table.sup_norm


def test_table_lookup(tables):
    t = tables[TableRoute.CONTOUR]
    assert t.index_of(0.5) == 16
    assert t.mode_index(9.0) == 2
    with pytest.raises(GridIncompatible):
        t.index_of(0.51)
    with pytest.raises(DimensionMismatch):
        t.mode_index(2.0)


# resolvent action --------------------------------------------------------------------


def test_apply_resolvent_examples(tables):
    t = tables[TableRoute.CONTOUR]
    assert np.array_equal(apply_resolvent(t, 10, np.zeros(5)), np.zeros(5))
    e3 = np.eye(5)[2]
    assert np.array_equal(apply_resolvent(t, 10, e3), t.values[2, 10] * e3)
    with pytest.raises(DimensionMismatch):
        apply_resolvent(t, 10, np.ones(4))


@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5), st.integers(0, 32))
def test_apply_resolvent_is_bounded(tables, state, k):
    t = tables[TableRoute.CONTOUR]
    out = apply_resolvent(t, k, state)
    assert np.linalg.norm(out) <= t.sup_norm * np.linalg.norm(state) + 1e-12


# resolvent equation ----------------------------------------------------------------


def test_equation_residual_trivial_at_origin(kernel):
    table = build_resolvent_table(kernel, SpectralSystem(1), [0.0])
    assert verify_resolvent_equation(table, 1.0) == 0.0


def test_equation_residual_exponential_case():
    k = MemoryKernel(1e-12, 0.5, 0.5)
    table = build_resolvent_table(k, SpectralSystem(1), np.linspace(0, 1, 129))
    assert verify_resolvent_equation(table, 1.0) <= 1e-6


def test_equation_residual_order():
    k = MemoryKernel(1.0, 0.0, 0.5)
    res = [
        verify_resolvent_equation(build_resolvent_table(k, SpectralSystem(1), np.linspace(0, 1, n)), 1.0)
        for n in (65, 129, 257)
    ]
    assert np.all(observed_order(res) >= 1.8)


@pytest.mark.parametrize("rule", ["quadratic", "linear", "trapezoid"])
def test_equation_residual_rules_converge(kernel, rule):
    res = [
        verify_resolvent_equation(build_resolvent_table(kernel, SpectralSystem(2), np.linspace(0, 1, n)), 4.0, rule)
        for n in (65, 129)
    ]
    assert res[1] < res[0]


def test_equation_unknown_rule(tables):
    with pytest.raises(ValueError):
        verify_resolvent_equation(tables[TableRoute.CONTOUR], 1.0, "simpson")


# decay diagnostics -------------------------------------------------------------------


def test_decay_rows_at_origin(kernel, tables):
    diag = decay_diagnostics(tables[TableRoute.CONTOUR], kernel)
    first = [r for r in diag["bound"] if r["t"] == 0.0]
    assert len(first) == 5
    assert all(r["lhs"] == 1.0 and r["rhs"] == 1.0 and not r["violation"] for r in first)


def test_initial_slope_of_first_mode(kernel):
    assert derivative_at_zero(kernel, 1.0) == pytest.approx(-1.0, rel=0.05)


def test_initial_slope_needs_halving_steps(kernel):
    with pytest.raises(ValueError):
        derivative_at_zero(kernel, 1.0, steps=(1e-3, 4e-4, 2e-4))


def test_decay_bound_without_damping():
    k = MemoryKernel(1.0, 0.0, 0.5)
    table = build_resolvent_table(k, SpectralSystem(1), np.linspace(0, 1, 3))
    row = [r for r in decay_diagnostics(table)["bound"] if r["t"] == 0.5][0]
    assert row["lhs"] == pytest.approx(table.values[0, 1] ** 2)
    assert row["rhs"] == pytest.approx(math.exp(-0.5 * (1 + 0.5**0.5)))
    assert not row["violation"]
