import numpy as np
import pytest

from attractorlab import diagnostics as dg
from attractorlab import grid as gr
from attractorlab import nemitski as nm
from attractorlab import operators as op
from attractorlab import semiflow as sf
from attractorlab.errors import ConfigurationError, HypothesisViolation, PreconditionError


@pytest.fixture(scope="module")
def setup():
    g = gr.build_grid(1, 8.0, 159)
    c = op.make_coefficients(g, 1.5, lambda x: 2 + 0.5 * np.exp(-x**2), lambda x: 0.3 * np.exp(-x**2),
                             lambda x: 1 + 0.2 * np.exp(-(x - 1) ** 2))
    spec = nm.builtin_power(g, gr.sample(g, lambda x: np.exp(-x**2)), 1.0, 2.0)
    z = sf.StateZ(gr.sample(g, lambda x: 2 * np.exp(-(x - 3) ** 2)), gr.sample(g, lambda x: np.sin(x) * np.exp(-x**2 / 8)))
    return g, c, spec, z


def _field(c, spec, z):
    """Exact right-hand side of the spatially discrete system."""
    f = nm.evaluate(spec, z.u)[0] if spec is not None else 0.0
    return sf.StateZ(z.v, (-(c.form_matrix @ z.u) - c.alpha * z.v + f) / c.eps)


def _ddt(fn, z, zdot, tau=1e-5):
    return (fn(z + zdot.scaled(tau)) - fn(z - zdot.scaled(tau))) / (2 * tau)


@pytest.mark.parametrize("weight", ["ones", 3.0])
def test_semidiscrete_identity_is_exact(setup, weight):
    g, c, spec, z = setup
    w = dg.WeightSet.ones(g) if weight == "ones" else dg.WeightSet.cutoff(g, weight)
    delta = 0.2
    dV = _ddt(lambda s: dg.lyapunov_values(c, spec, s, w, delta, 0.0).V, z, _field(c, spec, z))
    V = dg.lyapunov_values(c, spec, z, w, delta, 0.0).V
    rhs = dg.identity_rhs(c, spec, z, w, delta)
    assert abs(dV + 2 * delta * V - rhs) <= 1e-7 * abs(V)


def test_vstar_derivative_is_exact(setup):
    g, c, spec, z = setup
    w = dg.WeightSet.cutoff(g, 2.0)
    dVs = _ddt(lambda s: dg.lyapunov_values(c, spec, s, w, 0.1, 0.0).Vstar, z, _field(c, spec, z))
    rhs = g.cell_volume * np.dot(w.gamma * nm.evaluate(spec, z.u)[0], z.v)
    assert dVs == pytest.approx(rhs, rel=1e-8)


def test_w_derivative_bound_along_field(setup):
    g, c, _, z = setup
    lam1 = op.lambda1(c).value
    mu = op.select_rates(c, lam1, 1.0).mu
    w = lambda s: dg.lyapunov_values(c, None, s, dg.WeightSet.ones(g), 0.0, mu).w
    assert _ddt(w, z, _field(c, None, z)) <= -2 * mu * w(z)


def test_ones_weight_has_no_s_or_cross(setup):
    g, c, spec, z = setup
    ones = dg.WeightSet.ones(g)
    vals = dg.lyapunov_values(c, spec, z, ones, 0.2, 0.1)
    assert vals.s == 0.0 and vals.s_formula == 0.0
    assert dg.cross_term(c, z, ones, 0.2) == 0.0
    assert ones.label == "ones" and dg.WeightSet.cutoff(g, 5).label == "cutoff5"


def test_ones_V_reduces_to_energy(setup):
    g, c, spec, z = setup
    vals = dg.lyapunov_values(c, None, z, dg.WeightSet.ones(g), 0.0, 0.0)
    energy = 0.5 * (c.eps * gr.l2_inner(g, z.v, z.v) + op.energy_form(c, z.u, z.u))
    assert vals.V == pytest.approx(energy, rel=1e-13)
    assert vals.Vstar == 0.0 and vals.eta == vals.V


def test_s_matches_formula_to_second_order():
    diffs = []
    for n in (199, 399):
        g = gr.build_grid(1, 8.0, n)
        c = op.make_coefficients(g, a=lambda x: 1 + 0.2 * np.cos(x))
        u = gr.sample(g, lambda x: np.exp(-(x - 3) ** 2) * np.cos(x))
        s, sf_ = dg.s_terms(c, u, dg.WeightSet.cutoff(g, 2.0))
        diffs.append(abs(s - sf_))
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)


def test_tail_energy_total_and_monotone_in_k(setup):
    g, c, _, z = setup
    assert dg.tail_energy(c, z, None, 0.1) == dg.total_energy(c, z, 0.1)
    vals = [dg.tail_energy(c, z, k, 0.0) for k in (0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@pytest.fixture(scope="module")
def trajectory(setup):
    g, c, spec, z = setup
    return sf.evolve(c, spec, z, sf.EvolutionConfig(0.01, 1.0, 5, 1e-13), stencil=True)


def test_identity_checks_are_small(setup, trajectory):
    g, c, spec, _ = setup
    for w in (dg.WeightSet.ones(g), dg.WeightSet.cutoff(g, 2.0)):
        rep = dg.energy_identity_check(trajectory, c, spec, w, 0.2)
        assert rep.value <= 5e-3 * rep.scale
        assert rep.witness["t"] in rep.times
        rep = dg.vstar_derivative_check(trajectory, spec, w)
        assert rep.value <= 5e-3 * rep.scale
    rep = dg.ball_energy_check(trajectory, c, spec, 0.2)
    assert rep.value <= 5e-3 * rep.scale
    assert dg.vstar_derivative_check(trajectory, None, dg.WeightSet.ones(g)).value == 0.0


def test_checks_need_records(setup):
    g, c, spec, z = setup
    short = sf.evolve(c, spec, z, sf.EvolutionConfig(0.01, 0.01))
    with pytest.raises(ConfigurationError):
        dg.energy_identity_check(short, c, spec, dg.WeightSet.ones(g), 0.1)


def test_tolerance_model():
    reps = [dg.CheckReport("a", True, 2e-6), dg.CheckReport("b", True, 1e-6)]
    C = dg.calibrate_tolerance(reps, 1e-3, 1e-3)
    assert C == pytest.approx(10 * 2e-6 / 2e-6)
    assert dg.tol_discrete(C, 1e-3, 1e-3) == pytest.approx(2e-5)


def test_w_decay_report(setup, trajectory):
    g, c, _, z = setup
    lin = sf.evolve(c, None, z, sf.EvolutionConfig(0.01, 1.0, 5, 1e-13), stencil=True)
    mu = op.select_rates(c, op.lambda1(c).value, 1.0).mu
    rep = dg.w_decay_check(lin, c, mu, tol=1e-6)
    assert rep.passed
    assert rep.details["sandwich_lower_slack"] >= 0 and rep.details["sandwich_upper_slack"] >= 0


def _bundle(c, spec, cert):
    lam1 = op.lambda1(c).value
    r = op.select_rates(c, lam1, cert.mubar)
    return op.ConstantsBundle(lam1, r.mu, r.delta, r.nu, cert.mubar, spec.Cbar, spec.rhobar, spec.taubar)


def test_tail_constants_structure(setup):
    g, c, spec, z = setup
    cert = nm.dissipativity_constants(spec)
    b = _bundle(c, spec, cert)
    total = dg.tail_constants(c, spec, b, cert, 5.0, None, z0=z)
    assert total.c_k == pytest.approx(total.cprime)
    assert total.zeta_k == pytest.approx(cert.integral_c)
    cks = [dg.tail_constants(c, spec, b, cert, 5.0, k, z0=z).c_k for k in (1.0, 2.0, 4.0)]
    assert cks[0] > cks[1] > cks[2]
    with pytest.raises(ConfigurationError):
        dg.tail_constants(c, spec, b, cert, 5.0, 1.0, mode="bogus", z0=z)
    with pytest.raises(ConfigurationError):
        dg.tail_constants(c, spec, b, cert, 5.0, 1.0)
    with pytest.raises(ConfigurationError):
        dg.tail_constants(c, spec, b, cert, 5.0, 1.0, mode="constants")


def test_constants_mode_bounds_initial_eta(setup):
    g, c, spec, z = setup
    cert = nm.dissipativity_constants(spec)
    b = _bundle(c, spec, cert)
    b.Lbeta, b.La = op.operator_bounds(c, spec.a)
    b.C2 = op.embedding_constant(g, spec.rhobar + 2, restarts=4)
    R = sf.z_norm(g, z)
    est = dg.tail_constants(c, spec, b, cert, R, None, mode="constants")
    traj = dg.tail_constants(c, spec, b, cert, R, None, z0=z)
    assert est.Mbar >= traj.Mbar


def test_tail_bound_check_precondition(setup, trajectory):
    g, c, spec, _ = setup
    cert = nm.dissipativity_constants(spec)
    b = _bundle(c, spec, cert)
    with pytest.raises(PreconditionError) as info:
        dg.tail_bound_check(trajectory, c, spec, b, cert, 1e-3, [2.0])
    assert info.value.witness["t"] == 0.0
    rep = dg.tail_bound_check(trajectory, c, spec, b, cert, None, [2.0, 4.0])
    assert rep.passed and set(rep.per_k) == {2.0, 4.0, "total"}


def test_ultimate_bound_and_entry_time():
    assert dg.ultimate_bound(4.0, 1.0, 2.0, margin=0.0) == pytest.approx(2.0)
    assert dg.ultimate_bound(0.0, 1.0, 1.0) == 0.0
    with pytest.raises(HypothesisViolation):
        dg.ultimate_bound(1.0, 0.0, 1.0)
    t = np.arange(5.0)
    assert dg.entry_time(t, np.array([5, 4, 1, 0.5, 0.2]), 1.0) == 2.0
    assert dg.entry_time(t, np.zeros(5), 1.0) == 0.0
    assert dg.entry_time(t, np.array([0, 0, 0, 0, 2.0]), 1.0) is None


def test_y_growth_probe(setup):
    g, c, _, z = setup
    rep = dg.y_growth_probe(c, [z, sf.StateZ.zeros(g)], 1.0, 0.05)
    assert rep.ratios[0] == pytest.approx(1.0)
    assert rep.C1 >= 1.0 and 0.0 <= rep.C2 <= 2.0
    assert np.all(rep.ratios <= rep.C1 * np.exp(rep.C2 * rep.times) * (1 + 1e-12))
    assert dg.y_norm(c, z) >= np.sqrt(gr.l2_inner(g, z.u, z.u))
