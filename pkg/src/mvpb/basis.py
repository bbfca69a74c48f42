"""Orthonormal Sonine-Legendre (Burnett) velocity basis for one azimuthal sector.

A basis function is phi_{n,l,m}(v) = R_{n,l}(|v|) Y_{l,m}(v/|v|) with the polar
axis along v_1, where

    R_{n,l}(r) = N_{n,l} (-1)^n L_n^{(l+1/2)}(r^2/2) r^l exp(-r^2/4).

The sign (-1)^n makes the leading power r^(2n+l) positive, so that the
collision invariants are basis elements with coefficient +1.
Sector m=1 stands for the cos(phi) harmonics; the sin(phi) copy has
identical matrices and is handled by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, lpmv

from .errors import ConvergenceError, PreconditionError

TOL_ORTH = 1e-10
MAX_SECTOR = 1


def default_r_cut(n_max: int, l_max: int) -> float:
    """Speed cutoff that keeps the Gram residual below 1e-12.

    The highest basis function peaks near sqrt(4 n_max + 2 l_max + 3), so a
    fixed cutoff of 10 truncates mass once n_max exceeds about 6.
    """
    return max(10.0, float(np.sqrt(4 * n_max + 2 * l_max + 3)) + 8.0)


def default_quad_order(n_max: int) -> int:
    return 4 * n_max + 48


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def radial_functions(n_max: int, ell: int, r: np.ndarray) -> np.ndarray:
    """R_{n,l}(r) for n = 0..n_max, shape (n_max+1,) + r.shape."""
    r = np.asarray(r, dtype=float)
    x = 0.5 * r * r
    alpha = ell + 0.5
    lag = np.empty((n_max + 1,) + r.shape)
    lag[0] = 1.0
    if n_max >= 1:
        lag[1] = 1.0 + alpha - x
    for k in range(1, n_max):
        lag[k + 1] = ((2 * k + 1 + alpha - x) * lag[k] - (k + alpha) * lag[k - 1]) / (k + 1)
    n = np.arange(n_max + 1)
    lognorm = 0.5 * (gammaln(n + 1) - alpha * np.log(2.0) - gammaln(n + alpha + 1))
    scale = ((-1.0) ** n) * np.exp(lognorm)
    envelope = r**ell * np.exp(-0.25 * r * r)
    return scale.reshape((-1,) + (1,) * r.ndim) * lag * envelope


def angular_function(ell: int, m: int, c: np.ndarray) -> np.ndarray:
    """Polar factor Theta_{l,m}(cos theta) of the real harmonic.

    m=0: sqrt((2l+1)/4pi) P_l(c).  m=1: Theta times cos(phi) is normalized,
    and the Condon-Shortley phase is removed so that the l=1 function is
    +sin(theta).
    """
    c = np.asarray(c, dtype=float)
    if m == 0:
        return np.sqrt((2 * ell + 1) / (4 * np.pi)) * lpmv(0, ell, c)
    if m == 1:
        norm = np.sqrt((2 * ell + 1) / (2 * np.pi) / (ell * (ell + 1)))
        return -norm * lpmv(1, ell, c)
    raise PreconditionError(f"unsupported azimuthal sector m={m}")


def axial_coupling(ell: int, m: int) -> float:
    """<Y_{l+1,m}, cos(theta) Y_{l,m}> on the unit sphere."""
    return float(np.sqrt(((ell + 1) ** 2 - m * m) / ((2 * ell + 1) * (2 * ell + 3))))


@dataclass(frozen=True, eq=False)
class VelocityBasis:
    m_sector: int
    n_max: int
    l_max: int
    r_cut: float
    r_nodes: np.ndarray
    r_weights: np.ndarray
    c_nodes: np.ndarray
    c_weights: np.ndarray
    radial: tuple[np.ndarray, ...]  # radial[l - m] has shape (n_max+1, n_r)
    gram_residual: float

    @property
    def ells(self) -> range:
        return range(self.m_sector, self.l_max + 1)

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(n, ell) for ell in self.ells for n in range(self.n_max + 1)]

    @property
    def size(self) -> int:
        return (self.l_max - self.m_sector + 1) * (self.n_max + 1)

    def index(self, n: int, ell: int) -> int:
        if not (0 <= n <= self.n_max and self.m_sector <= ell <= self.l_max):
            raise PreconditionError(f"(n={n}, l={ell}) not in sector m={self.m_sector}")
        return (ell - self.m_sector) * (self.n_max + 1) + n

    def unit(self, n: int, ell: int) -> np.ndarray:
        e = np.zeros(self.size)
        e[self.index(n, ell)] = 1.0
        return e

    def tabulate(self) -> np.ndarray:
        """Basis values on the (r, cos theta) tensor grid, shape (size, n_r, n_c).

        The azimuthal factor is left out; its normalization is folded into
        angular_function.
        """
        out = np.empty((self.size, self.r_nodes.size, self.c_nodes.size))
        for ell in self.ells:
            theta = angular_function(ell, self.m_sector, self.c_nodes)
            block = self.radial[ell - self.m_sector][:, :, None] * theta[None, None, :]
            i0 = self.index(0, ell)
            out[i0 : i0 + self.n_max + 1] = block
        return out

    def gram(self) -> np.ndarray:
        phi = self.tabulate()
        # azimuthal integral: 2*pi for m=0 and pi for cos(phi) in m=1
        az = 2 * np.pi if self.m_sector == 0 else np.pi
        w = az * (self.r_weights * self.r_nodes**2)[:, None] * self.c_weights[None, :]
        flat = phi.reshape(self.size, -1)
        return (flat * w.ravel()) @ flat.T

    def project_function(self, fn) -> np.ndarray:
        """Coefficients of fn(r, c) (already divided by the azimuthal factor)."""
        phi = self.tabulate()
        az = 2 * np.pi if self.m_sector == 0 else np.pi
        rr, cc = np.meshgrid(self.r_nodes, self.c_nodes, indexing="ij")
        w = az * (self.r_weights * self.r_nodes**2)[:, None] * self.c_weights[None, :]
        vals = fn(rr, cc) * w
        return phi.reshape(self.size, -1) @ vals.ravel()


def build_basis(
    n_max: int,
    l_max: int,
    m_sector: int = 0,
    r_cut: float | None = None,
    quad_orders: tuple[int, int] | None = None,
) -> VelocityBasis:
    """Build the sector basis and verify orthonormality under its quadrature."""
    if n_max < 0 or l_max < 0:
        raise PreconditionError("n_max and l_max must be non-negative")
    if m_sector not in (0, 1) or m_sector > l_max:
        raise PreconditionError(f"sector m={m_sector} needs 0 <= m <= min(1, l_max)")
    if r_cut is None:
        r_cut = default_r_cut(n_max, l_max)
    if r_cut < 8:
        raise PreconditionError(f"r_cut={r_cut} < 8 does not cover the Maxwellian")
    n_r, n_c = quad_orders if quad_orders is not None else (default_quad_order(n_max), 2 * l_max + 4)
    r, w = gauss_legendre(0.0, float(r_cut), int(n_r))
    c, wc = leggauss(int(n_c))
    radial = tuple(radial_functions(n_max, ell, r) for ell in range(m_sector, l_max + 1))
    basis = VelocityBasis(m_sector, n_max, l_max, float(r_cut), r, w, c, wc, radial, np.nan)
    resid = float(np.abs(basis.gram() - np.eye(basis.size)).max())
    if not resid < TOL_ORTH:
        raise ConvergenceError(
            f"Gram residual {resid:.3e} exceeds {TOL_ORTH:g}; raise r_cut or the radial order",
            achieved=resid,
        )
    object.__setattr__(basis, "gram_residual", resid)
    return basis
