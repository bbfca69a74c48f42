"""Per-mode objects of the incompressible Navier-Stokes-Poisson-Fourier limit.

Macroscopic vectors are 5-component coefficient arrays on
(chi0, v1 chi0, v2 chi0, v3 chi0, chi4) in a fixed frame, and the
xi-weighted inner product puts 1 + 1/(1+|xi|^2) on the chi0 slot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PreconditionError
from .spectral import AsymptoticTable, asymptotic_table

SQ23 = np.sqrt(2.0 / 3.0)
TOL_CONSTRAINT = 1e-10


def _check_xi(xi) -> tuple[np.ndarray, float]:
    xi = np.asarray(xi, dtype=float)
    k = float(np.linalg.norm(xi))
    if k == 0.0:
        raise PreconditionError("xi = 0 is excluded (mean-zero data required)")
    return xi, k


def xi_metric(k: float) -> np.ndarray:
    return np.array([1.0 + 1.0 / (1.0 + k * k), 1.0, 1.0, 1.0, 1.0])


def xi_inner(f: np.ndarray, g: np.ndarray, k: float) -> complex:
    """<f, g>_xi on macroscopic coefficient vectors (linear in f)."""
    return complex(np.sum(f * xi_metric(k) * np.conj(g)))


def leray(xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """O_1 y = y - (y . xi_hat) xi_hat."""
    xh = xi / np.linalg.norm(xi)
    return y - (y @ xh) * xh


def boussinesq_split(k: float, w: complex) -> tuple[complex, complex]:
    """(n, q) with q - sqrt(2/3) n = w and n (1 + 1/(1+k^2)) + sqrt(2/3) q = 0."""
    n = -SQ23 * w / (5.0 / 3.0 + 1.0 / (1.0 + k * k))
    return n, w + SQ23 * n


@dataclass
class FluidModeState:
    xi: np.ndarray
    n_hat: complex
    m_hat: np.ndarray
    q_hat: complex
    phi_hat: complex

    @property
    def k(self) -> float:
        return float(np.linalg.norm(self.xi))

    @classmethod
    def from_macro(cls, xi, u: np.ndarray) -> "FluidModeState":
        xi, k = _check_xi(xi)
        u = np.asarray(u, dtype=complex)
        return cls(xi, u[0], u[1:4].copy(), u[4], -u[0] / (1.0 + k * k))

    def macro(self) -> np.ndarray:
        return np.concatenate([[self.n_hat], self.m_hat, [self.q_hat]]).astype(complex)

    def divergence_residual(self) -> float:
        """|xi_hat . m_hat|."""
        return float(abs(self.xi @ self.m_hat) / self.k)

    def boussinesq_residual(self) -> float:
        k = self.k
        return float(abs(self.n_hat * (1 + 1 / (1 + k * k)) + SQ23 * self.q_hat))

    def poisson_residual(self) -> float:
        return float(abs(self.phi_hat + self.n_hat / (1 + self.k**2)))

    def satisfies_constraints(self, tol: float = TOL_CONSTRAINT) -> bool:
        scale = max(1.0, float(np.abs(self.macro()).max()))
        return max(self.divergence_residual(), self.boussinesq_residual(), self.poisson_residual()) <= tol * scale


def pressure(xi, H1_hat: np.ndarray) -> complex:
    """Diagnostic pressure p = -i xi . H1 / |xi|^2 from the longitudinal momentum balance."""
    xi, k = _check_xi(xi)
    return complex(-1j * (xi @ H1_hat) / k**2)


def prepare_initial(xi, f0_macro: np.ndarray) -> FluidModeState:
    """Initial fluid state from the macroscopic moments of f0."""
    xi, k = _check_xi(xi)
    f0 = np.asarray(f0_macro, dtype=complex)
    m0 = leray(xi, f0[1:4])
    w = f0[4] - SQ23 * f0[0]
    n0, q0 = boussinesq_split(k, w)
    return FluidModeState(xi, n0, m0, q0, -n0 / (1 + k * k))


@dataclass
class WellPreparedReport:
    ok: bool
    micro_defect: float
    divergence_defect: float
    boussinesq_defect: float
    acoustic_projection: dict[int, complex]


def well_prepared_check(xi, f0_macro: np.ndarray, micro_norm: float = 0.0, kappa0: float = 1.0, kappa1: float = 1.0, tol: float = TOL_CONSTRAINT) -> WellPreparedReport:
    xi, k = _check_xi(xi)
    f0 = np.asarray(f0_macro, dtype=complex)
    table = asymptotic_table(k, kappa0, kappa1)
    div = float(abs(xi @ f0[1:4]) / k)
    bous = float(abs(f0[0] * (1 + 1 / (1 + k * k)) + SQ23 * f0[4]))
    proj = {j: xi_inner(f0, table.E(j, xi), k) for j in (-1, 1)}
    ok = micro_norm <= tol and div <= tol and bous <= tol
    return WellPreparedReport(ok, float(micro_norm), div, bous, proj)


def V_apply(t: float, xi, U0: np.ndarray, table: AsymptoticTable | None = None, kappa0: float | None = None, kappa1: float | None = None) -> np.ndarray:
    """V(t, xi) U0 = sum over j = 0, 2, 3 of exp(-d_j t) <U0, E_j>_xi E_j."""
    xi, k = _check_xi(xi)
    if table is None:
        if kappa0 is None or kappa1 is None:
            raise PreconditionError("V_apply needs an asymptotic table or both transport coefficients")
        table = asymptotic_table(k, kappa0, kappa1)
    U0 = np.asarray(U0, dtype=complex)
    out = np.zeros(5, dtype=complex)
    for j in (0, 2, 3):
        e = table.E(j, xi)
        out += np.exp(-table.d[j] * t) * xi_inner(U0, e, k) * e
    return out


def oscillation_part(t: float, eps: float, xi, U0: np.ndarray, table: AsymptoticTable) -> np.ndarray:
    """Acoustic content sum over j = +-1 of exp(-i|xi|u_j t/eps - d_j t) <U0, E_j>_xi E_j."""
    xi, k = _check_xi(xi)
    out = np.zeros(5, dtype=complex)
    for j in (-1, 1):
        e = table.E(j, xi)
        phase = np.exp(-1j * k * table.u[j] * t / eps - table.d[j] * t)
        out += phase * xi_inner(np.asarray(U0, dtype=complex), e, k) * e
    return out


# ---------------------------------------------------------------- linear Duhamel


@dataclass
class Trajectory:
    t: np.ndarray
    states: list[FluidModeState]

    def max_residuals(self) -> dict[str, float]:
        return {
            "divergence": max(s.divergence_residual() for s in self.states),
            "boussinesq": max(s.boussinesq_residual() for s in self.states),
            "poisson": max(s.poisson_residual() for s in self.states),
        }


def nspf_linear_duhamel(
    xi,
    f0_macro: np.ndarray,
    H1,
    H2,
    t_grid,
    kappa0: float,
    kappa1: float,
    panels: int | None = None,
    order: int = 8,
) -> Trajectory:
    """U(t) = V(t) P0 f0 + int_0^t V(t-s) H(s) ds on one mode.

    H1(s) -> 3-vector and H2(s) -> scalar; the s-integral uses composite
    Gauss-Legendre panels between consecutive output times.
    """
    xi, k = _check_xi(xi)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise PreconditionError("t_grid must be non-negative and strictly increasing")
    table = asymptotic_table(k, kappa0, kappa1)
    dmax = max(table.d[j] for j in (0, 2, 3))
    x, w = leggauss(order)
    init = prepare_initial(xi, f0_macro)
    u = V_apply(0.0, xi, init.macro(), table)
    t_prev = 0.0
    states = []

    def forcing(s: float) -> np.ndarray:
        h = np.zeros(5, dtype=complex)
        h[1:4] = H1(s)
        h[4] = H2(s)
        return h

    for t in t_grid:
        dt = t - t_prev
        if dt > 0:
            n_pan = panels if panels is not None else max(1, int(np.ceil(dt * dmax / 0.25)))
            if dt * dmax / n_pan > 1.0:
                warnings.warn(f"panel width {dt / n_pan:.3g} under-resolves exp(-d t) with d={dmax:.3g}", stacklevel=2)
            edges = np.linspace(t_prev, t, n_pan + 1)
            acc = V_apply(dt, xi, u, table)
            for a, b in zip(edges[:-1], edges[1:]):
                for xs, ws in zip(x, w):
                    s = 0.5 * (b - a) * xs + 0.5 * (a + b)
                    acc += 0.5 * (b - a) * ws * V_apply(t - s, xi, forcing(s), table)
            u = acc
        states.append(FluidModeState.from_macro(xi, u))
        t_prev = t
    return Trajectory(t_grid, states)


# ---------------------------------------------------------------- radial quadrature


def composite_gauss(a: float, b: float, panels: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1)).ravel()
    weights = (0.5 * h[:, None] * w).ravel()
    return nodes, weights


def required_panels(R: float, max_phase_rate: float, points_per_period: int = 20, order: int = 16) -> int:
    """Panels of the given order needed for points_per_period nodes per oscillation."""
    period = 2 * np.pi / max(max_phase_rate, 1e-300)
    return int(np.ceil(R / period * points_per_period / order))


def sphere_average(x_norm, r) -> np.ndarray:
    """Surface integral of exp(i x . xi) over |xi| = r directions: 4 pi sinc(|x| r)."""
    return 4 * np.pi * np.sinc(np.multiply.outer(x_norm, r) / np.pi)


def radial_transform(x_norm: np.ndarray, eta: np.ndarray, weights: np.ndarray, values: np.ndarray, chunk: int = 256) -> np.ndarray:
    """int 4 pi sinc(|x| eta) values(eta) eta^2 d eta for each |x|.

    values has shape (n_eta,) or (n_eta, n_comp); the result has shape
    (n_x,) or (n_x, n_comp).
    """
    x_norm = np.atleast_1d(np.asarray(x_norm, dtype=float))
    vals = np.asarray(values)
    wv = (weights * eta**2).reshape((-1,) + (1,) * (vals.ndim - 1)) * vals
    out = np.empty((x_norm.size,) + vals.shape[1:], dtype=np.result_type(vals, float))
    for i in range(0, x_norm.size, chunk):
        g = sphere_average(x_norm[i : i + chunk], eta)
        out[i : i + chunk] = np.tensordot(g, wv, axes=(1, 0))
    return out


def acoustic_phase(j: int, r) -> np.ndarray:
    """rho(r) = r u_j(r)."""
    from .spectral import wave_speed

    return np.asarray(r) * wave_speed(j, r)


@dataclass
class OscillatoryResult:
    theta: float
    sup: float
    argmax: float
    values: np.ndarray
    panels: int


def oscillatory_integral(
    theta: float,
    phi,
    x_norm,
    j: int = 1,
    R: float = 50.0,
    panels: int | None = None,
    order: int = 16,
    points_per_period: int = 20,
) -> OscillatoryResult:
    """sup over |x| of |int exp(i x.xi) exp(i theta rho(|xi|)) phi(|xi|) d xi| with alpha = 1."""
    x_norm = np.atleast_1d(np.asarray(x_norm, dtype=float))
    speed = np.sqrt(5.0 / 3.0 + 1.0)
    rate = abs(theta) * speed + float(x_norm.max())
    need = required_panels(R, rate, points_per_period, order)
    if panels is None:
        panels = max(need, 8)
    elif panels < need:
        raise PreconditionError(f"{panels} panels under-resolve the phase; need at least {need}")
    eta, w = composite_gauss(0.0, R, panels, order)
    vals = np.exp(1j * theta * acoustic_phase(j, eta)) * phi(eta)
    out = radial_transform(x_norm, eta, w, vals)
    mag = np.abs(out)
    i = int(np.argmax(mag))
    return OscillatoryResult(float(theta), float(mag[i]), float(x_norm[i]), out, panels)


def poisson_kernel_check(sigma: float = 1.0, x_norm=None, n_eta: int = 4000) -> float:
    """Max relative gap between the 1/(1+|xi|^2) multiplier and convolution with exp(-|x|)/(4 pi |x|).

    Test function: the unit-mass Gaussian of width sigma.  Both sides are
    radial, so each reduces to a 1-D integral.
    """
    from scipy.integrate import quad

    if x_norm is None:
        x_norm = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    x_norm = np.asarray(x_norm, dtype=float)
    # Fourier side: (2 pi)^-3 int exp(i x.xi) g_hat(xi)/(1+|xi|^2) d xi
    eta, w = composite_gauss(0.0, 12.0 / sigma, max(8, n_eta // 16), 16)
    ghat = np.exp(-0.5 * sigma**2 * eta**2)
    fourier = radial_transform(x_norm, eta, w, ghat / (1 + eta**2)).real / (2 * np.pi) ** 3

    # real-space side: radial convolution of two radial functions
    def g(s):
        return np.exp(-0.5 * s * s / sigma**2) / (2 * np.pi * sigma**2) ** 1.5

    def conv(x):
        # int G(|y|) g(|x - y|) dy with G(s) = exp(-s)/(4 pi s); angular part done analytically
        def inner(s):
            # int over the sphere of radius s of g(|x - y|) = 2 pi s / x * int_{|x-s|}^{x+s} g(p) p dp
            lo, hi = abs(x - s), x + s
            val = sigma**2 * (g(lo) - g(hi))  # int g(p) p dp
            return np.exp(-s) / (4 * np.pi * s) * 2 * np.pi * s / x * val

        return quad(inner, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)[0]

    real = np.array([conv(x) for x in x_norm])
    return float(np.max(np.abs(fourier - real) / np.abs(real)))
