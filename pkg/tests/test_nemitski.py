import numpy as np
import pytest
from scipy.integrate import quad

from attractorlab import grid as gr
from attractorlab import nemitski as nm
from attractorlab import operators as op
from attractorlab.errors import ConfigurationError, CriterionFailed, HypothesisViolation, NumericalFailure


@pytest.fixture(scope="module")
def grid():
    return gr.build_grid(1, 3.0, 59)


@pytest.fixture(scope="module")
def spec(grid):
    return nm.builtin_power(grid, gr.sample(grid, lambda x: np.exp(-x**2)), 1.0, 2.0,
                            gr.sample(grid, lambda x: 0.5 * np.exp(-x**2)))


def test_builtin_primitive_matches_quadrature(grid, spec):
    u = np.linspace(-3, 3, grid.size)
    f, F, df = nm.evaluate(spec, u)
    i = 17
    ref, _ = quad(lambda s: spec.g[i] - spec.b[i] * s * abs(s) ** 2, 0, u[i])
    assert F[i] == pytest.approx(ref, rel=1e-12)
    h = 1e-6
    fp, _, _ = nm.evaluate(spec, u + h)
    fm, _, _ = nm.evaluate(spec, u - h)
    np.testing.assert_allclose(df, (fp - fm) / (2 * h), rtol=1e-6, atol=1e-6)


def test_default_Cbar_and_taubar(grid, spec):
    assert spec.Cbar == 3.0
    assert spec.taubar == pytest.approx((np.pi / 2) ** 0.25, rel=1e-4)
    with pytest.raises(ConfigurationError):
        nm.builtin_power(grid, rhobar=-1.0)


def test_custom_quadrature_primitive(grid):
    spec = nm.custom(grid, lambda x, u: np.sin(u) + x[0], lambda x, u: np.cos(u), rhobar=0.0, Cbar=1.0)
    u = np.linspace(-2, 2, grid.size)
    _, F, _ = nm.evaluate(spec, u)
    np.testing.assert_allclose(F, 1 - np.cos(u) + grid.mesh[0] * u, atol=1e-13)
    np.testing.assert_allclose(spec.g, grid.mesh[0])


def test_custom_nonfinite_names_node(grid):
    spec = nm.custom(grid, lambda x, u: 1 / (u - 2), lambda x, u: -1 / (u - 2) ** 2,
                     lambda x, u: np.log(np.abs(u - 2)), rhobar=0.0, Cbar=1.0)
    u = np.ones(grid.size)
    u[7] = 2.0
    with np.errstate(divide="ignore"), pytest.raises(NumericalFailure) as info:
        nm.evaluate(spec, u)
    assert "node 7" in str(info.value)


def test_growth_audit(grid, spec):
    assert nm.growth_audit(spec).passed
    tight = nm.builtin_power(grid, 0.0, 1.0, 2.0, 0.0, Cbar=2.0)
    rep = nm.growth_audit(tight)
    assert not rep.passed and rep.max_violation > 0
    assert abs(rep.witness["u"]) == pytest.approx(10.0)


@pytest.mark.parametrize("rho,N,label", [(5.0, 1, "subcritical"), (2.0, 3, "critical"), (1.0, 3, "subcritical"),
                                         (3.0, 3, "supercritical"), (100.0, 2, "subcritical")])
def test_classify_exponent(rho, N, label):
    assert nm.classify_exponent(rho, N) == label


def test_classify_exponent_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        nm.classify_exponent(1.0, 4)
    with pytest.raises(ConfigurationError):
        nm.classify_exponent(-1.0, 1)


def test_closed_form_certificate_is_the_supremum(grid, spec):
    cert = nm.dissipativity_constants(spec)
    assert cert.mubar == 1.0
    us = np.linspace(-3, 3, 60001)
    i = int(np.argmax(spec.g))
    brute = np.max(spec.g[i] * us - spec.b[i] * np.abs(us) ** 4 / 4)
    assert cert.c[i] == pytest.approx(brute, rel=1e-6)
    assert nm.dissipativity_audit(spec, cert).max_violation <= 1e-12


def test_unit_forcing_constant(grid):
    spec = nm.builtin_power(grid, 1.0, 1.0, 2.0)
    cert = nm.dissipativity_constants(spec)
    np.testing.assert_allclose(cert.c, 0.75)


def test_negative_absorption_rejected(grid):
    with pytest.raises(HypothesisViolation):
        nm.dissipativity_constants(nm.builtin_power(grid, 0.0, -1.0, 2.0))


def test_convexity_certificate(grid):
    D = gr.sample(grid, lambda x: np.exp(-x**2))
    spec = nm.builtin_power(grid, 0.0, 1.0, 2.0)
    cert = nm.dissipativity_from_convexity(D, 2.0, 2.0, spec, np.linspace(-10, 10, 2001))
    assert cert.mubar == 0.5
    np.testing.assert_allclose(cert.c, 2 * D)
    assert nm.dissipativity_audit(spec, cert).max_violation <= 1e-12


def test_convexity_certificate_failures(grid):
    D = gr.sample(grid, lambda x: np.exp(-x**2))
    spec = nm.builtin_power(grid, 0.0, 1.0, 2.0)
    us = np.linspace(-2, 2, 101)
    with pytest.raises(ConfigurationError):
        nm.dissipativity_from_convexity(D, 1.0, 2.0, spec, us)
    with pytest.raises(CriterionFailed) as info:
        nm.dissipativity_from_convexity(D - 0.5, 2.0, 2.0, spec, us)
    assert info.value.node is not None
    with pytest.raises(CriterionFailed):
        nm.dissipativity_from_convexity(D, 2.0, 2.0, nm.builtin_power(grid, 3.0, 1.0, 2.0), us)


def test_audit_rejects_nonfinite_certificate(grid, spec):
    bad = nm.DissipativityCertificate(1.0, np.full(grid.size, np.inf), "user", np.inf)
    with pytest.raises(ConfigurationError):
        nm.dissipativity_audit(spec, bad)


def test_audit_detects_violation(grid, spec):
    cert = nm.DissipativityCertificate(1.0, np.zeros(grid.size), "user", 0.0)
    rep = nm.dissipativity_audit(spec, cert)
    assert not rep.passed and rep.witness["inequality"] == "F<=c"


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0, 3.0])
def test_estimate_suite_nonnegative(grid, rho):
    spec = nm.builtin_power(grid, gr.sample(grid, np.cos), 1.5, rho, gr.sample(grid, lambda x: np.exp(-x**2)))
    coeffs = op.make_coefficients(grid)
    rng = np.random.default_rng(int(rho * 10))
    for _ in range(10):
        u, h = rng.standard_normal((2, grid.size)) * rng.uniform(0.1, 3.0, 2)[:, None]
        rep = nm.estimate_suite(spec, u, h, coeffs)
        assert len(rep.slacks) == 10
        scale = 1.0 + np.max(np.abs(u)) ** (rho + 2) + np.max(np.abs(h)) ** (rho + 2)
        assert rep.min_slack >= -1e-12 * scale
        assert np.isfinite(rep.critical_ratio)


def test_frechet_remainder(grid, spec):
    rng = np.random.default_rng(1)
    u, h = rng.standard_normal((2, grid.size))
    small = nm.frechet_remainder(spec, u, h, 1e-3)
    assert small <= 1e-6
    # central quotient: remainder is quadratic in the step
    assert nm.frechet_remainder(spec, u, h, 2e-2) / nm.frechet_remainder(spec, u, h, 1e-2) == pytest.approx(4, rel=0.05)
    assert nm.frechet_remainder(spec, np.zeros(grid.size), np.zeros(grid.size)) == 0.0
