import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mvpb.errors import PreconditionError
from mvpb.fluid import (
    SQ23,
    FluidModeState,
    V_apply,
    boussinesq_split,
    composite_gauss,
    leray,
    nspf_linear_duhamel,
    oscillation_part,
    oscillatory_integral,
    poisson_kernel_check,
    prepare_initial,
    pressure,
    radial_transform,
    required_panels,
    sphere_average,
    well_prepared_check,
    xi_inner,
)
from mvpb.spectral import asymptotic_table

K0, K1 = 0.179136, 0.451889
E1 = np.array([1.0, 0.0, 0.0])


def macro(n=0.0, m=(0.0, 0.0, 0.0), q=0.0):
    return np.array([n, *m, q], dtype=complex)


# ---- constraints and initial data


def test_transverse_momentum_kept():
    s = prepare_initial(E1, macro(m=(0, 1, 0)))
    assert np.allclose(s.m_hat, [0, 1, 0])


def test_longitudinal_momentum_removed():
    assert np.allclose(prepare_initial(E1, macro(m=(1, 0, 0))).m_hat, 0)


def test_energy_mode_split():
    s = prepare_initial(E1, macro(q=1.0))
    n_want = -SQ23 / (1.5 + 2 / 3)
    assert s.n_hat == pytest.approx(n_want, abs=1e-15)
    assert s.n_hat.real == pytest.approx(-(6 / 13) * SQ23, abs=1e-15)
    assert s.q_hat == pytest.approx(1 + SQ23 * n_want, abs=1e-15)
    assert s.q_hat.real == pytest.approx(0.69231, abs=5e-6)
    assert s.satisfies_constraints()


@settings(max_examples=50, deadline=None)
@given(
    xi=st.tuples(*[st.floats(-5, 5)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-2),
    f=st.lists(st.floats(-3, 3), min_size=5, max_size=5),
)
def test_prepared_state_satisfies_constraints(xi, f):
    s = prepare_initial(np.array(xi), np.array(f))
    assert s.satisfies_constraints()
    assert s.q_hat - SQ23 * s.n_hat == pytest.approx(f[4] - SQ23 * f[0], abs=1e-12)


def test_boussinesq_split_identity():
    n, q = boussinesq_split(2.0, 1.0 + 0.5j)
    assert abs(q - SQ23 * n - (1 + 0.5j)) < 1e-15
    assert abs(n * (1 + 1 / 5) + SQ23 * q) < 1e-15


def test_leray_projects():
    xi = np.array([1.0, 2.0, -0.5])
    y = np.array([0.3, -1.0, 2.0])
    p = leray(xi, y)
    assert abs(p @ xi) < 1e-14
    assert np.allclose(leray(xi, p), p)


def test_from_macro_sets_potential():
    s = FluidModeState.from_macro(np.array([0, 2.0, 0]), macro(n=1.0))
    assert s.phi_hat == pytest.approx(-1 / 5)
    assert s.poisson_residual() < 1e-15


def test_zero_mode_rejected():
    with pytest.raises(PreconditionError):
        prepare_initial(np.zeros(3), macro(n=1.0))


def test_pressure_longitudinal():
    assert pressure(np.array([2.0, 0, 0]), np.array([4.0, 1.0, 0])) == pytest.approx(-1j * 2.0)


# ---- well-prepared data


def test_shear_data_well_prepared():
    n, q = boussinesq_split(1.0, 0.4)
    rep = well_prepared_check(E1, macro(n=n, m=(0, 1, 0), q=q), kappa0=K0, kappa1=K1)
    assert rep.ok
    assert all(abs(v) < 1e-10 for v in rep.acoustic_projection.values())


def test_density_alone_not_prepared():
    xi = np.array([0, 0, 1.5])
    rep = well_prepared_check(xi, macro(n=1.0))
    assert not rep.ok
    assert rep.boussinesq_defect == pytest.approx(1 + 1 / (1 + 1.5**2))


def test_micro_content_not_prepared():
    n, q = boussinesq_split(1.0, 0.4)
    assert not well_prepared_check(E1, macro(n=n, q=q), micro_norm=1e-3).ok


# ---- V(t) and the oscillating part


def test_V_on_shear_mode():
    xi = np.array([0.3, 0.4, 1.2])
    k = np.linalg.norm(xi)
    table = asymptotic_table(k, K0, K1)
    E2 = table.E(2, xi)
    assert np.allclose(V_apply(0.7, xi, E2, table), np.exp(-K0 * k * k * 0.7) * E2, atol=1e-15)


def test_V_kills_sound():
    xi = np.array([0.0, 0.8, 0.0])
    table = asymptotic_table(0.8, K0, K1)
    assert np.allclose(V_apply(0.5, xi, table.E(1, xi), table), 0, atol=1e-15)


@pytest.mark.parametrize("t1, t2", [(0.1, 0.2), (1.0, 3.5), (0.0, 2.0)])
def test_V_semigroup(t1, t2):
    xi = np.array([0.5, -0.2, 0.9])
    u = np.array([1.0, 0.2, -0.4, 0.7, 0.3], dtype=complex)
    a = V_apply(t1 + t2, xi, u, kappa0=K0, kappa1=K1)
    b = V_apply(t2, xi, V_apply(t1, xi, u, kappa0=K0, kappa1=K1), kappa0=K0, kappa1=K1)
    assert np.abs(a - b).max() < 1e-10


def test_V_density_does_not_vanish_at_small_xi():
    # contrast with an operator whose density moment carries an extra |xi|^2
    vals = []
    for k in (1e-1, 1e-2, 1e-3):
        xi = np.array([k, 0, 0])
        out = V_apply(1.0, xi, macro(n=1.0), kappa0=K0, kappa1=K1)
        vals.append(abs(out[0]))
    assert min(vals) > 0.1
    assert np.ptp(vals) < 0.01


def test_V_needs_coefficients():
    with pytest.raises(PreconditionError):
        V_apply(1.0, E1, macro(n=1.0))


def test_oscillation_part_at_zero_time():
    xi = np.array([0.0, 0.6, 0.8])
    table = asymptotic_table(1.0, K0, K1)
    u = np.array([0.4, 0.1, 0.3, -0.2, 0.9], dtype=complex)
    want = sum(xi_inner(u, table.E(j, xi), 1.0) * table.E(j, xi) for j in (-1, 1))
    assert np.allclose(oscillation_part(0.0, 0.1, xi, u, table), want, atol=1e-15)


def test_full_decomposition_at_zero_time():
    xi = np.array([0.2, 0.0, 0.5])
    k = np.linalg.norm(xi)
    table = asymptotic_table(k, K0, K1)
    u = np.array([0.4, 0.1, 0.3, -0.2, 0.9], dtype=complex)
    total = V_apply(0.0, xi, u, table) + oscillation_part(0.0, 0.1, xi, u, table)
    assert np.allclose(total, u, atol=1e-14)


def test_prepared_data_has_no_oscillation():
    xi = np.array([0.0, 0.0, 2.0])
    init = prepare_initial(xi, np.array([0.3, 0.1, -0.5, 0.8, 1.0]))
    table = asymptotic_table(2.0, K0, K1)
    assert np.abs(oscillation_part(0.37, 0.05, xi, init.macro(), table)).max() < 1e-14


# ---- linear Duhamel solution


def test_duhamel_unforced():
    xi = np.array([0.0, 1.1, 0.0])
    f0 = np.array([0.2, 0.3, 0.1, -0.4, 0.5])
    ts = np.array([0.5, 1.0, 2.0])
    zero3 = lambda s: np.zeros(3)  # noqa: E731
    traj = nspf_linear_duhamel(xi, f0, zero3, lambda s: 0.0, ts, K0, K1)
    init = prepare_initial(xi, f0).macro()
    for t, s in zip(ts, traj.states):
        assert np.allclose(s.macro(), V_apply(t, xi, init, kappa0=K0, kappa1=K1), atol=1e-14)


def test_duhamel_constant_transverse_forcing():
    xi = np.array([0.7, 0.0, 0.0])
    k2 = 0.49
    H = np.array([0.0, 0.3, -0.2])
    f0 = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    ts = np.linspace(0.25, 3.0, 12)
    traj = nspf_linear_duhamel(xi, f0, lambda s: H, lambda s: 0.0, ts, K0, K1)
    for t, s in zip(ts, traj.states):
        decay = np.exp(-K0 * k2 * t)
        want = (1 - decay) * H / (K0 * k2) + decay * np.array([0.0, 1.0, 0.0])
        assert np.allclose(s.m_hat, want, atol=1e-12)
    assert max(traj.max_residuals().values()) <= 1e-9


def test_duhamel_time_dependent_forcing_vs_quad():
    xi = np.array([0.0, 0.0, 1.3])
    k = 1.3
    table = asymptotic_table(k, K0, K1)
    H1 = lambda s: np.array([np.cos(3 * s), 0.5, 0.0])  # noqa: E731
    H2 = lambda s: np.sin(2 * s)  # noqa: E731
    traj = nspf_linear_duhamel(xi, np.zeros(5), H1, H2, [1.5], K0, K1)
    got = traj.states[0].macro()

    def comp(s, i):
        h = np.zeros(5, dtype=complex)
        h[1:4], h[4] = H1(s), H2(s)
        return V_apply(1.5 - s, xi, h, table)[i].real

    want = np.array([integrate.quad(comp, 0, 1.5, args=(i,), epsabs=1e-13)[0] for i in range(5)])
    assert np.allclose(got.real, want, atol=1e-10)
    assert max(traj.max_residuals().values()) <= 1e-9


def test_duhamel_bad_grid():
    with pytest.raises(PreconditionError):
        nspf_linear_duhamel(E1, np.zeros(5), lambda s: np.zeros(3), lambda s: 0.0, [1.0, 0.5], K0, K1)


def test_duhamel_warns_on_coarse_panels():
    with pytest.warns(UserWarning):
        nspf_linear_duhamel(np.array([5.0, 0, 0]), np.ones(5), lambda s: np.ones(3), lambda s: 1.0, [4.0], K0, K1, panels=1)


# ---- radial quadrature and oscillatory integrals


def test_sphere_average_is_sinc():
    r = 1.7
    x = 0.9
    th = np.linspace(0, np.pi, 2001)
    direct = 2 * np.pi * np.trapezoid(np.exp(1j * x * r * np.cos(th)) * np.sin(th), th)
    assert sphere_average(np.array([x]), np.array([r]))[0, 0] == pytest.approx(direct.real, rel=1e-6)


def test_non_oscillatory_integral():
    phi = lambda r: (1 + r) ** -3  # noqa: E731
    res = oscillatory_integral(0.0, phi, np.array([0.0]), R=50.0)
    want, _ = integrate.quad(lambda r: 4 * np.pi * r * r * phi(r), 0, 50, epsabs=1e-12, epsrel=1e-13, limit=200)
    assert res.sup == pytest.approx(want, rel=1e-6)


def test_underresolved_panels_refused():
    need = required_panels(25.0, 100 * np.sqrt(8 / 3) + 10)
    with pytest.raises(PreconditionError):
        oscillatory_integral(100.0, lambda r: (1 + r) ** -3, np.array([0.0, 10.0]), R=25.0, panels=need // 2)


def test_composite_gauss_exact_for_polynomials():
    x, w = composite_gauss(0.0, 3.0, 4, 8)
    assert np.dot(w, x**15) == pytest.approx(3.0**16 / 16, rel=1e-13)


def test_radial_transform_of_gaussian():
    # int exp(i x.xi) exp(-|xi|^2/2) d xi = (2 pi)^{3/2} exp(-|x|^2/2)
    eta, w = composite_gauss(0.0, 12.0, 24, 16)
    x = np.array([0.0, 0.5, 1.5, 3.0])
    got = radial_transform(x, eta, w, np.exp(-eta**2 / 2))
    assert np.allclose(got, (2 * np.pi) ** 1.5 * np.exp(-x**2 / 2), atol=1e-12)


def test_poisson_multiplier_matches_yukawa_kernel():
    assert poisson_kernel_check() < 1e-8


@pytest.mark.slow
def test_oscillatory_decay_small_x_grid():
    phi = lambda r: (1 + r) ** -3  # noqa: E731
    thetas = np.array([10.0, 30.0, 100.0, 300.0, 1000.0])
    x = np.linspace(0.0, 2.0, 21)
    sups = [oscillatory_integral(t, phi, x, R=25.0).sup for t in thetas]
    slope = np.polyfit(np.log(thetas), np.log(sups), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)
