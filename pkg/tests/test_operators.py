import numpy as np
import pytest
import scipy.linalg

from attractorlab import grid as gr
from attractorlab import operators as op
from attractorlab.errors import ConfigurationError, HypothesisViolation, NumericalFailure


def _coeffs(dim=1, n=41, X=2.0, beta=0.0, a=1.0, alpha=2.0, eps=1.0):
    return op.make_coefficients(gr.build_grid(dim, X, n), eps, alpha, beta, a)


def _variable(dim):
    if dim == 1:
        return _coeffs(1, 61, beta=lambda x: 0.5 * np.cos(x), a=lambda x: 1 + 0.3 * np.sin(x))
    return _coeffs(2, 15, beta=lambda x, y: 0.5 * np.exp(-x**2 - y**2),
                   a=(1.0, lambda x, y: 1 + 0.5 * np.exp(-y**2)))


@pytest.mark.parametrize("dim", [1, 2])
def test_green_identity_variable_coefficients(dim):
    c = _variable(dim)
    g = c.grid
    rng = np.random.default_rng(0)
    for _ in range(10):
        u, w = rng.standard_normal((2, g.size))
        lhs = gr.l2_inner(g, op.apply_L(c, u), w)
        rhs = -gr.staggered_inner(g, op.flux(c, u), gr.gradient(g, w))
        assert abs(lhs - rhs) <= 1e-12 * gr.h1_norm(g, u) * gr.h1_norm(g, w)


def test_apply_L_matches_stiffness_matrix():
    c = _variable(2)
    u = np.random.default_rng(1).standard_normal(c.grid.size)
    np.testing.assert_allclose(op.apply_L(c, u), -c.stiffness @ u, atol=1e-10)
    np.testing.assert_allclose(c.form_matrix @ u, c.stiffness @ u + c.beta * u, atol=1e-10)


def test_ellipticity_bounds_validated():
    g = gr.build_grid(1, 1.0, 9)
    with pytest.raises(HypothesisViolation):
        op.make_coefficients(g, a=lambda x: x)
    with pytest.raises(HypothesisViolation):
        op.make_coefficients(g, a=1.0, a0=2.0)
    with pytest.raises(ConfigurationError):
        op.make_coefficients(g, eps=0.0)
    with pytest.raises(ConfigurationError):
        op.make_coefficients(g, alpha=1.0, alpha1=0.5)


def test_conjugate_gradient_against_direct_solve():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((30, 30))
    a = m @ m.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    x, its = op.conjugate_gradient(a.dot, b, tol=1e-13)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), rtol=1e-10)
    assert 0 < its <= 30 + 5
    x0, its0 = op.conjugate_gradient(a.dot, np.zeros(30))
    assert its0 == 0 and not x0.any()


def test_conjugate_gradient_detects_indefinite():
    a = np.diag([1.0, -1.0])
    with pytest.raises(op.NegativeCurvature):
        op.conjugate_gradient(a.dot, np.array([1.0, 1.0]))


def test_conjugate_gradient_iteration_cap():
    a = np.diag(np.linspace(1, 1e6, 200))
    with pytest.raises(NumericalFailure):
        op.conjugate_gradient(a.dot, np.ones(200), tol=1e-14, maxiter=3)


@pytest.mark.parametrize("dim", [1, 2])
def test_lambda1_against_dense_eigh(dim):
    c = _variable(dim)
    dense = scipy.linalg.eigh(c.form_matrix.toarray(), eigvals_only=True)[0]
    res = op.lambda1(c, tol=1e-12)
    assert res.value == pytest.approx(dense, rel=1e-8)
    g = c.grid
    assert gr.l2_inner(g, res.vector, res.vector) == pytest.approx(1.0)


def test_lambda1_closed_form_square():
    # 2D Dirichlet Laplacian on (-pi/2, pi/2)^2: (8/h^2) sin^2(h/2)
    g = gr.build_grid(2, np.pi / 2, 31)
    c = op.make_coefficients(g)
    assert op.lambda1(c, tol=1e-12).value == pytest.approx(8 / g.h**2 * np.sin(g.h / 2) ** 2, rel=1e-9)


def test_lambda1_negative_potential_rejected():
    c = _coeffs(beta=-10.0)
    with pytest.raises(HypothesisViolation) as info:
        op.lambda1(c)
    assert info.value.hypothesis == "lambda1>0"


def test_form_bound_constant_is_sharp():
    c = _variable(1)
    g = c.grid
    eb = 0.1
    C = op.form_bound_constant(c, eb)
    M = np.diag(np.abs(c.beta)) - eb * (c.laplacian.toarray() + np.eye(g.size))
    assert C == pytest.approx(max(0.0, np.linalg.eigvalsh(M)[-1]), abs=1e-12)
    assert op.form_bound_constant(_coeffs(), eb) == 0.0
    with pytest.raises(ConfigurationError):
        op.form_bound_constant(c, -1.0)


@pytest.mark.parametrize("kappa_frac", [0.0, 0.5])
def test_coercive_sandwich_holds(kappa_frac):
    c = _variable(1)
    g = c.grid
    lam1 = op.lambda1(c).value
    kappa = kappa_frac * lam1
    cc = op.coercive_constants(c, kappa, lam1)
    gram = c.laplacian.toarray() + np.eye(g.size)
    form = c.form_matrix.toarray() - kappa * np.eye(g.size)
    vals = scipy.linalg.eigh(form, gram, eigvals_only=True)
    assert cc.c_low > 0
    assert vals[0] >= cc.c_low - 1e-10
    assert vals[-1] <= cc.C_up + 1e-10


def test_coercive_rejects_large_kappa():
    c = _coeffs()
    with pytest.raises(HypothesisViolation):
        op.coercive_constants(c, 10.0)


def test_operator_bounds_against_dense_pencil():
    c = _variable(1)
    g = c.grid
    a_field = gr.sample(g, lambda x: np.exp(-x**2))
    Lb, La = op.operator_bounds(c, a_field)
    gram = c.laplacian.toarray() + np.eye(g.size)
    ref = np.sqrt(scipy.linalg.eigh(np.diag(a_field), gram, eigvals_only=True)[-1])
    assert La == pytest.approx(ref, rel=1e-10)
    rng = np.random.default_rng(5)
    for _ in range(20):
        u = rng.standard_normal(g.size)
        assert np.sqrt(gr.l2_inner(g, np.abs(c.beta) * u, u)) <= Lb * gr.h1_norm(g, u) * (1 + 1e-12)
    assert op.operator_bounds(_coeffs(), np.zeros(41)) == (0.0, 0.0)


def test_embedding_constant_is_a_lower_bound_that_grows_with_restarts():
    g = gr.build_grid(1, 3.0, 59)
    few = op.embedding_constant(g, 4.0, restarts=2)
    many = op.embedding_constant(g, 4.0, restarts=6)
    assert 0 < few <= many
    # 1D: |u|_inf^2 <= |u|_2 |u'|_2 <= |u|_{H^1}^2 / 2, so |u|_4 <= (2X)^{1/4} / sqrt(2) |u|_{H^1}
    assert many <= (2 * g.half_width) ** 0.25 / np.sqrt(2)
    with pytest.raises(ConfigurationError):
        op.embedding_constant(g, 1.0)


def test_hminus1_norm_against_dense():
    c = _variable(1)
    g = c.grid
    w = np.random.default_rng(6).standard_normal(g.size)
    S = c.form_matrix.toarray()
    ref = np.sqrt(c.eps * g.cell_volume * w @ np.linalg.solve(S, w))
    assert op.hminus1_norm(c, w, tol=1e-13) == pytest.approx(ref, rel=1e-10)
    assert op.hminus1_norm(c, np.zeros(g.size)) == 0.0


def test_select_rates_formulas():
    c = _coeffs(alpha=2.0, eps=1.0)
    r = op.select_rates(c, 1.0, 1.0)
    assert (r.mu, r.delta, r.nu) == (1 / 6, 1 / 4, 1 / 2)
    conds = op.rate_conditions(1.0, 2.0, 2.0, 1.0, 1.0, r)
    assert all(conds.values())
    with pytest.raises(HypothesisViolation):
        op.select_rates(c, -1.0, 1.0)
    with pytest.raises(HypothesisViolation):
        op.select_rates(_coeffs(alpha=0.0), 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        op.select_rates(c, 1.0, 1.0, theta=1.0)


def test_constants_bundle_serialises():
    c = _coeffs()
    b = op.ConstantsBundle(1.0, 0.1, 0.2, 0.5, 1.0, 3.0, 2.0, 0.0)
    b.coercive[0.0] = op.coercive_constants(c, 0.0)
    b.c_eps_bar[0.1] = 0.0
    d = b.to_dict()
    assert d["coercive"]["0.0"]["c_low"] > 0
    assert d["c_eps_bar"] == {"0.1": 0.0}
