"""Independent reference computations used by the tests.

Nothing here imports the quadrature or kernel code under test; only the
closed-form polynomials from scipy are shared.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import eval_genlaguerre, eval_legendre, gammaln


def h_poly(n: int, ell: int, v: np.ndarray) -> np.ndarray:
    """phi_{n,l,0}(v) / sqrt(M(v)), a polynomial in v (polar axis v_1)."""
    r = np.sqrt(np.sum(v * v, axis=0))
    c = np.where(r > 0, v[0] / np.where(r > 0, r, 1.0), 1.0)
    a = ell + 0.5
    norm = np.exp(0.5 * (gammaln(n + 1) - a * np.log(2) - gammaln(n + a + 1)))
    ang = np.sqrt((2 * ell + 1) / (4 * np.pi)) * eval_legendre(ell, c)
    return (2 * np.pi) ** 0.75 * norm * (-1) ** n * eval_genlaguerre(n, a, 0.5 * r * r) * r**ell * ang


def weak_form_K(pairs, nh: int = 10, nu: int = 32, nt: int = 16, na: int = 10, nb: int = 12, umax: float = 14.0) -> np.ndarray:
    """(K phi_b, phi_a) for hard spheres in centre-of-mass variables.

    With h = phi / sqrt(M) polynomial, (K phi_b, phi_a) is
    int B M M_* (h_b' + h_b*' - h_b*) h_a over v, v_* and the hemisphere
    u . omega >= 0, with B = |u . omega|.  G = (v + v_*)/2 gets a
    Gauss-Hermite rule, u spherical Gauss rules, omega Gauss in the polar
    angle about u and the trapezoid rule in azimuth.  Rotations about v_1
    leave the integrand fixed, so the azimuth of u is pinned.
    """
    xg, wg = hermgauss(nh)
    x, w = leggauss(nu)
    s, ws = 0.5 * umax * (x + 1), 0.5 * umax * w
    x, w = leggauss(nt)
    th, wth = 0.5 * np.pi * (x + 1), 0.5 * np.pi * w * np.sin(0.5 * np.pi * (x + 1))
    x, w = leggauss(na)
    al = 0.25 * np.pi * (x + 1)
    wal = 0.25 * np.pi * w * np.sin(al) * np.cos(al)
    be = 2 * np.pi * np.arange(nb) / nb
    S, TH, AL, BE = np.meshgrid(s, th, al, be, indexing="ij")
    W = np.einsum("i,j,k,l->ijkl", ws * s**3 * np.exp(-s * s / 4), wth, wal, np.full(nb, 2 * np.pi / nb)) * 2 * np.pi
    zero = np.zeros_like(TH)
    uhat = np.stack([np.cos(TH), np.sin(TH), zero])
    ea = np.stack([-np.sin(TH), np.cos(TH), zero])
    eb = np.stack([zero, zero, zero + 1.0])
    om = np.cos(AL) * uhat + np.sin(AL) * (np.cos(BE) * ea + np.sin(BE) * eb)
    u = (S * uhat).reshape(3, -1)
    dv = (S * uhat / 2 - S * np.cos(AL) * om).reshape(3, -1)  # v' - G
    W = W.ravel()
    funcs = sorted({p for pair in pairs for p in pair})
    out = np.zeros(len(pairs))
    for i in range(nh):
        for j in range(nh):
            for k in range(nh):
                G = np.array([xg[i], xg[j], xg[k]])[:, None]
                wG = wg[i] * wg[j] * wg[k] * W
                v, vs, vp, vsp = G + u / 2, G - u / 2, G + dv, G - dv
                ha = {f: h_poly(*f, v) for f in funcs}
                hb = {f: h_poly(*f, vp) + h_poly(*f, vsp) - h_poly(*f, vs) for f in funcs}
                for p, (a, b) in enumerate(pairs):
                    out[p] += np.dot(wG, hb[b] * ha[a])
    return out * (2 * np.pi) ** -3


def collision_frequency_quad(speed: float) -> float:
    """nu(|v|) = pi int |v - v_*| M(v_*) dv_* by nested adaptive quadrature."""

    def inner(c, rs):
        return np.sqrt(speed**2 + rs**2 - 2 * speed * rs * c)

    def outer(rs):
        ang, _ = integrate.quad(inner, -1, 1, args=(rs,), epsabs=1e-13)
        return 2 * np.pi * ang * rs**2 * (2 * np.pi) ** -1.5 * np.exp(-rs * rs / 2)

    val, _ = integrate.quad(outer, 0, 12, points=[speed] if 0 < speed < 12 else None, epsabs=1e-13, limit=200)
    return np.pi * val


def hard_sphere_kernel(v: np.ndarray, vs: np.ndarray) -> float:
    """Pointwise k(v, v_*) = k2 - k1 (hemisphere normalization)."""
    rho = np.linalg.norm(v - vs)
    r2, s2 = v @ v, vs @ vs
    gain = 2.0 / (np.sqrt(2 * np.pi) * rho) * np.exp(-rho**2 / 8 - (r2 - s2) ** 2 / (8 * rho**2))
    loss = np.pi * rho * (2 * np.pi) ** -1.5 * np.exp(-(r2 + s2) / 4)
    return gain - loss


def kernel_moment_quad(ell: int, r: float, rp: float) -> float:
    """2 pi int_{-1}^{1} k(r e_1, r' w) P_l(w . e_1) dc by adaptive quadrature."""

    def f(c):
        v = np.array([r, 0.0, 0.0])
        vs = np.array([rp * c, rp * np.sqrt(max(0.0, 1 - c * c)), 0.0])
        return hard_sphere_kernel(v, vs) * eval_legendre(ell, c)

    val, _ = integrate.quad(f, -1, 1, points=[1.0], limit=200, epsabs=1e-13)
    return 2 * np.pi * val
