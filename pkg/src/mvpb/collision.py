"""Galerkin discretization of the linearized collision operator L = K - nu.

The operator acts on f = sqrt(M) h by

    L f = M^{-1/2} int int B(|v - v*|, omega) M M* (h' + h*' - h - h*) d omega dv*,

with omega integrated over the hemisphere {(v - v*) . omega >= 0} by default.
K is rotation invariant, so its matrix is block diagonal in l and the same
for every azimuthal sector.  Blocks are assembled from the Legendre
components k_l(r, r') of the Grad-type kernel k = k2 - k1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.special import erf, i0e

from .basis import (
    VelocityBasis,
    axial_coupling,
    build_basis,
    default_quad_order,
    default_r_cut,
    gauss_legendre,
    radial_functions,
)
from .errors import ConvergenceError, PreconditionError

FORMAT_VERSION = 1
NULL_TOL = 1e-8
KERNEL_NODES = 64
INNER_ORDER = 64

MACRO_NAMES = ("chi0", "chi1", "chi2", "chi3", "chi4")


@dataclass(frozen=True)
class KernelParams:
    """B = b(cos theta) |v - v*|^gamma with b(c) = sum_k b_coeff[k] c^k."""

    gamma: float = 1.0
    b_coeff: tuple[float, ...] = (0.0, 1.0)
    omega_convention: str = "hemisphere"

    def __post_init__(self):
        object.__setattr__(self, "b_coeff", tuple(float(b) for b in self.b_coeff))
        if not 0.0 <= self.gamma <= 1.0:
            raise PreconditionError(f"gamma={self.gamma} outside [0, 1]")
        if self.omega_convention not in ("hemisphere", "sphere"):
            raise PreconditionError(f"unknown omega_convention {self.omega_convention!r}")
        if not self.b_coeff or abs(self.b_coeff[0]) > 0.0:
            raise PreconditionError("b(cos theta) must vanish at grazing angle (b_coeff[0] = 0)")
        c = np.linspace(0.0, 1.0, 201)
        if np.any(self.b(c) < -1e-14):
            raise PreconditionError("b(cos theta) must be non-negative on [0, 1]")

    @property
    def hard_sphere(self) -> bool:
        return self.gamma == 1.0 and self.b_coeff == (0.0, 1.0)

    @property
    def scale(self) -> float:
        return 1.0 if self.omega_convention == "hemisphere" else 2.0

    def b(self, c):
        return np.polynomial.polynomial.polyval(c, self.b_coeff)

    @property
    def b_mean(self) -> float:
        """int_0^1 b(c) dc, so that the hemisphere integral of b is 2 pi b_mean."""
        return float(sum(bk / (k + 1) for k, bk in enumerate(self.b_coeff)))

    def cross_section(self, a, b):
        """B as a function of |u . omega| = a and the transverse part |w| = b."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        u2 = a * a + b * b
        u = np.sqrt(u2)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(u > 0, a / np.where(u > 0, u, 1.0), 0.0)
        return self.b(c) * u**self.gamma

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "b_coeff": list(self.b_coeff), "omega_convention": self.omega_convention}


# ---------------------------------------------------------------- collision frequency


def _mean_abs_power(r: np.ndarray, gamma: float) -> np.ndarray:
    """E|v - X|^gamma for X ~ N(0, I) and |v| = r (noncentral chi, 3 dof)."""
    out = np.empty_like(r)
    x, w = leggauss(96)
    for i, ri in enumerate(r.ravel()):
        total = 0.0
        for a, b in ((0.0, ri), (ri, ri + 14.0)):
            if b <= a:
                continue
            rho = 0.5 * (b - a) * x + 0.5 * (a + b)
            if ri > 0:
                dens = rho * np.exp(-0.5 * (rho - ri) ** 2) * (-np.expm1(-2 * rho * ri)) / (ri * np.sqrt(2 * np.pi))
            else:
                dens = np.sqrt(2 / np.pi) * rho**2 * np.exp(-0.5 * rho**2)
            total += 0.5 * (b - a) * np.sum(w * dens * rho**gamma)
        out.ravel()[i] = total
    return out


def collision_frequency(speed, params: KernelParams = KernelParams()):
    """nu(|v|) = int int B M* d omega dv*."""
    r = np.abs(np.asarray(speed, dtype=float))
    if params.hard_sphere:
        safe = np.where(r > 1e-6, r, 1.0)
        big = np.sqrt(2 / np.pi) * np.exp(-0.5 * r * r) + (safe + 1 / safe) * erf(safe / np.sqrt(2))
        small = 2 * np.sqrt(2 / np.pi) * (1 + r * r / 6)
        mean = np.where(r > 1e-6, big, small)
    else:
        mean = _mean_abs_power(np.atleast_1d(r), params.gamma).reshape(r.shape)
    return params.scale * 2 * np.pi * params.b_mean * mean


# ---------------------------------------------------------------- kernel


def _legendre_table(l_max: int, c: np.ndarray) -> np.ndarray:
    p = np.empty((l_max + 1,) + c.shape)
    p[0] = 1.0
    if l_max > 0:
        p[1] = c
    for ell in range(1, l_max):
        p[ell + 1] = ((2 * ell + 1) * c * p[ell] - ell * p[ell - 1]) / (ell + 1)
    return p


def _gain_transverse(a: np.ndarray, rho: np.ndarray, params: KernelParams, n_s: int = 64) -> np.ndarray:
    """int_0^inf s exp(-(a-s)^2/2) I0e(a s) W(s) ds with W = B(rho,s)/rho + B(s,rho)/s.

    The substitution s = rho sinh(tau) removes the (rho^2 + s^2)^((gamma-1)/2)
    cusp; the Rician factor confines s to [a - 9, a + 9].
    """
    x, w = leggauss(n_s)
    lo = np.arcsinh(np.maximum(a - 9.0, 0.0) / rho)
    hi = np.arcsinh((a + 9.0) / rho)
    tau = 0.5 * (hi - lo)[..., None] * x + 0.5 * (hi + lo)[..., None]
    wt = 0.5 * (hi - lo)[..., None] * w
    rr = rho[..., None]
    s = rr * np.sinh(tau)
    ds = rr * np.cosh(tau)
    aa = a[..., None]
    weight = params.cross_section(rr, s) / rr + params.cross_section(s, rr) / s
    f = s * np.exp(-0.5 * (aa - s) ** 2) * i0e(aa * s) * weight * ds
    return np.sum(f * wt, axis=-1)


def kernel_legendre_table(l_max: int, r, rp, params: KernelParams = KernelParams(), n_rho: int = KERNEL_NODES):
    """k_l(r, r') = 2 pi int_{-1}^{1} k(r, r', c) P_l(c) dc for l = 0..l_max.

    Substituting rho = |v - v*| turns the c-integral into one over
    [|r - r'|, r + r'] where the 1/rho singularity of the gain part cancels;
    a logarithmic map in rho resolves the boundary layer of width
    |r^2 - r'^2| that appears when r is close to r'.
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    if np.any(r <= 0) or np.any(rp <= 0):
        raise PreconditionError("kernel_legendre needs r, r' > 0")
    r, rp = np.broadcast_arrays(r, rp)
    rr = r[..., None]
    rq = rp[..., None]
    lo = np.abs(r - rp)
    hi = r + rp
    x, w = leggauss(n_rho)

    b = np.log(hi)
    a = np.maximum(np.log(np.maximum(lo, 1e-300)), b - 40.0)
    s = 0.5 * (b - a)[..., None] * x + 0.5 * (b + a)[..., None]
    ws = 0.5 * (b - a)[..., None] * w
    rho = np.exp(s)
    c = np.clip((rr * rr + rq * rq - rho * rho) / (2 * rr * rq), -1.0, 1.0)
    gauss = np.exp(-rho * rho / 8 - (rr * rr - rq * rq) ** 2 / (8 * rho * rho))
    if params.hard_sphere:
        gain = 2.0 / np.sqrt(2 * np.pi) * gauss
    else:
        vn = (rq * rq - rr * rr - rho * rho) / (2 * rho)
        perp = np.sqrt(np.maximum(rr * rr - vn * vn, 0.0))
        gain = gauss * _gain_transverse(perp, rho, params) / np.sqrt(2 * np.pi)
    # integrand of int k(rho) P_l rho d rho, with d rho = rho ds
    p = _legendre_table(l_max, c)
    total = np.sum(p * (gain * rho * ws), axis=-1)

    loss_pref = 2 * np.pi * params.b_mean * (2 * np.pi) ** -1.5 * np.exp(-(r * r + rp * rp) / 4)
    if params.gamma == 1.0:
        # rho^2 P_l(c(rho)) is a polynomial of degree 2 l + 2: exact Gauss rule
        xl, wl = leggauss(l_max + 3)
        rho = 0.5 * (hi - lo)[..., None] * xl + 0.5 * (hi + lo)[..., None]
        wl = 0.5 * (hi - lo)[..., None] * wl
        c = np.clip((rr * rr + rq * rq - rho * rho) / (2 * rr * rq), -1.0, 1.0)
        loss = np.sum(_legendre_table(l_max, c) * rho * rho * wl, axis=-1)
    else:
        loss = np.sum(p * rho ** (params.gamma + 1) * rho * ws, axis=-1)
    total = total - loss_pref * loss
    return params.scale * 2 * np.pi / (r * rp) * total


def kernel_legendre(ell: int, r, rp, params: KernelParams = KernelParams()):
    return kernel_legendre_table(ell, r, rp, params)[ell]


def kernel_value(v, vs, params: KernelParams = KernelParams()):
    """Unreduced kernel k(v, v*) for hard spheres (gain minus loss)."""
    if not params.hard_sphere:
        raise PreconditionError("pointwise kernel only available in closed form for hard spheres")
    v = np.asarray(v, dtype=float)
    vs = np.asarray(vs, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    s2 = np.sum(vs * vs, axis=-1)
    rho = np.sqrt(np.sum((v - vs) ** 2, axis=-1))
    gain = 2.0 / (np.sqrt(2 * np.pi) * rho) * np.exp(-rho**2 / 8 - (r2 - s2) ** 2 / (8 * rho**2))
    loss = np.pi * rho * (2 * np.pi) ** -1.5 * np.exp(-(r2 + s2) / 4)
    return params.scale * (gain - loss)


# ---------------------------------------------------------------- collision system


@dataclass(frozen=True, eq=False)
class CollisionSystem:
    params: KernelParams
    n_max: int
    l_max: int
    r_cut: float
    quad_order: int
    r_nodes: np.ndarray
    r_weights: np.ndarray
    nu_diag: np.ndarray
    K_blocks: tuple[np.ndarray, ...]
    nu_blocks: tuple[np.ndarray, ...]
    v1_radial: tuple[np.ndarray, ...]
    asym_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    # ---- layout
    @property
    def n_rad(self) -> int:
        return self.n_max + 1

    def sector_size(self, m: int) -> int:
        return (self.l_max - m + 1) * self.n_rad

    @property
    def dim(self) -> int:
        return self.sector_size(0) + 2 * self.sector_size(1)

    def index(self, n: int, ell: int, m: int = 0) -> int:
        if not (0 <= n <= self.n_max and m <= ell <= self.l_max):
            raise PreconditionError(f"(n={n}, l={ell}) outside sector m={m}")
        return (ell - m) * self.n_rad + n

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        n0, n1 = self.sector_size(0), self.sector_size(1)
        return slice(0, n0), slice(n0, n0 + n1), slice(n0 + n1, n0 + 2 * n1)

    def split(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s0, s1, s2 = self.slices
        return f[..., s0], f[..., s1], f[..., s2]

    @cached_property
    def macro_index(self) -> dict[str, int]:
        n0, n1 = self.sector_size(0), self.sector_size(1)
        i1 = self.index(0, 1, 1)
        return {
            "chi0": self.index(0, 0, 0),
            "chi1": self.index(0, 1, 0),
            "chi2": n0 + i1,
            "chi3": n0 + n1 + i1,
            "chi4": self.index(1, 0, 0),
        }

    def invariant(self, name: str) -> np.ndarray:
        e = np.zeros(self.dim)
        e[self.macro_index[name]] = 1.0
        return e

    @cached_property
    def macro_vectors(self) -> np.ndarray:
        """Rows chi0..chi4 in combined coordinates."""
        return np.array([self.invariant(k) for k in MACRO_NAMES])

    # ---- operators
    @cached_property
    def L_blocks(self) -> tuple[np.ndarray, ...]:
        return tuple(k - n for k, n in zip(self.K_blocks, self.nu_blocks))

    def L_sector(self, m: int) -> np.ndarray:
        from scipy.linalg import block_diag

        return block_diag(*self.L_blocks[m:])

    def V1_sector(self, m: int) -> np.ndarray:
        """Matrix of multiplication by v_1 in sector m."""
        size = self.sector_size(m)
        out = np.zeros((size, size))
        for ell in range(m, self.l_max):
            i, j = self.index(0, ell, m), self.index(0, ell + 1, m)
            blk = axial_coupling(ell, m) * self.v1_radial[ell]
            out[i : i + self.n_rad, j : j + self.n_rad] = blk
            out[j : j + self.n_rad, i : i + self.n_rad] = blk.T
        return out

    def _full(self, sector_fn) -> np.ndarray:
        from scipy.linalg import block_diag

        a1 = sector_fn(1)
        return block_diag(sector_fn(0), a1, a1)

    @cached_property
    def L(self) -> np.ndarray:
        return self._full(self.L_sector)

    @cached_property
    def V1(self) -> np.ndarray:
        return self._full(self.V1_sector)

    @cached_property
    def P0(self) -> np.ndarray:
        d = np.zeros(self.dim)
        d[list(self.macro_index.values())] = 1.0
        return np.diag(d)

    @cached_property
    def P1(self) -> np.ndarray:
        return np.eye(self.dim) - self.P0

    @cached_property
    def Pd(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        i = self.macro_index["chi0"]
        out[i, i] = 1.0
        return out

    @cached_property
    def micro_mask(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[list(self.macro_index.values())] = False
        return mask

    # ---- spectrum
    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues of L, m=1 blocks counted twice, sorted by |lambda|."""
        blocks = [np.linalg.eigvalsh(b) for b in self.L_blocks]
        ev = np.concatenate(blocks + 2 * blocks[1:])
        return ev[np.argsort(np.abs(ev), kind="stable")]

    @property
    def norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())

    @property
    def null_count(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) < NULL_TOL * self.norm))

    @property
    def mu(self) -> float:
        return float(-self.eigenvalues[5])

    @cached_property
    def null_residual(self) -> float:
        return float(np.abs(self.L @ self.macro_vectors.T).max())

    @property
    def nu_bounds(self) -> tuple[float, float]:
        """(nu0, nu1) with nu0 (1+r)^gamma <= nu(r) <= nu1 (1+r)^gamma on the nodes."""
        ratio = self.nu_diag / (1 + self.r_nodes) ** self.params.gamma
        return float(ratio.min()), float(ratio.max())

    # ---- L^{-1} on the microscopic subspace
    @cached_property
    def _micro_factor(self):
        idx = np.flatnonzero(self.micro_mask)
        return idx, cho_factor(-self.L[np.ix_(idx, idx)])

    def solve_Linv_P1(self, rhs: np.ndarray) -> np.ndarray:
        """g = L^{-1} rhs with P0 g = 0 for rhs in the range of P1."""
        rhs = np.asarray(rhs)
        macro = np.linalg.norm(rhs[..., ~self.micro_mask])
        if macro > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
            raise PreconditionError(f"rhs has a macroscopic component of size {macro:.3e}")
        idx, fac = self._micro_factor
        g = np.zeros_like(rhs, dtype=np.result_type(rhs, float))
        g[..., idx] = -cho_solve(fac, rhs[..., idx].T).T
        resid = float(np.linalg.norm(g @ self.L.T - rhs))
        # L g keeps a macroscopic part of size null_residual * |g| from assembly error
        tol = 1e-10 * float(np.linalg.norm(rhs)) + 10 * self.null_residual * float(np.linalg.norm(g))
        if resid > max(tol, 1e-300):
            raise ConvergenceError(f"L^-1 P1 residual {resid:.3e}", achieved=resid)
        return g

    def micro_part(self, f: np.ndarray) -> np.ndarray:
        return np.where(self.micro_mask, f, 0.0)

    def transport_coefficient(self, g: np.ndarray) -> float:
        """-(L^{-1} P1 g, g) for real g."""
        p = self.micro_part(g)
        return float(-(self.solve_Linv_P1(p) @ p))

    @cached_property
    def kappa0(self) -> float:
        return self.transport_coefficient(self.V1 @ self.invariant("chi2"))

    @cached_property
    def kappa1(self) -> float:
        return self.transport_coefficient(self.V1 @ self.invariant("chi4"))

    @cached_property
    def kappa_long(self) -> float:
        """-(L^{-1} P1 (v1 chi1), v1 chi1); rotation invariance makes this 4 kappa0 / 3."""
        return self.transport_coefficient(self.V1 @ self.invariant("chi1"))

    def check(self) -> "CollisionSystem":
        if self.null_count != 5:
            raise ConvergenceError(
                f"assembly failure: {self.null_count} eigenvalues below {NULL_TOL:g} ||L||, expected 5",
                achieved=float(np.abs(self.eigenvalues[5]) / self.norm),
            )
        if self.mu <= 0:
            raise ConvergenceError(f"sixth eigenvalue {-self.mu} is not negative")
        return self

    def summary_config(self) -> dict:
        """The inputs that determine this system (for config hashes)."""
        return {
            "n_max": self.n_max,
            "l_max": self.l_max,
            "r_cut": self.r_cut,
            "quad_order": self.quad_order,
            **self.params.to_dict(),
        }

    def summary(self) -> dict:
        nu0, nu1 = self.nu_bounds
        return {
            "n_max": self.n_max,
            "l_max": self.l_max,
            "r_cut": self.r_cut,
            "quad_order": self.quad_order,
            **self.params.to_dict(),
            "norm_L": self.norm,
            "null_count": self.null_count,
            "null_residual": self.null_residual,
            "asym_residual": self.asym_residual,
            "mu": self.mu,
            "nu0": nu0,
            "nu1": nu1,
            "kappa0": self.kappa0,
            "kappa1": self.kappa1,
            "kappa_long": self.kappa_long,
        }

    # ---- serialization
    def to_dict(self) -> dict:
        def mats(blocks):
            return [np.ascontiguousarray(b, dtype=np.float64).tolist() for b in blocks]

        return {
            "format": "mvpb.collision",
            "version": FORMAT_VERSION,
            "params": self.params.to_dict(),
            "n_max": self.n_max,
            "l_max": self.l_max,
            "r_cut": self.r_cut,
            "quad_order": self.quad_order,
            "asym_residual": self.asym_residual,
            "r_nodes": self.r_nodes.tolist(),
            "r_weights": self.r_weights.tolist(),
            "nu_diag": self.nu_diag.tolist(),
            "K_blocks": mats(self.K_blocks),
            "nu_blocks": mats(self.nu_blocks),
            "v1_radial": mats(self.v1_radial),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollisionSystem":
        if d.get("format") != "mvpb.collision" or d.get("version") != FORMAT_VERSION:
            raise PreconditionError(f"not a version-{FORMAT_VERSION} collision artifact")
        p = d["params"]
        params = KernelParams(p["gamma"], tuple(p["b_coeff"]), p["omega_convention"])
        arr = lambda xs: tuple(np.array(x, dtype=np.float64) for x in xs)  # noqa: E731
        return cls(
            params=params,
            n_max=int(d["n_max"]),
            l_max=int(d["l_max"]),
            r_cut=float(d["r_cut"]),
            quad_order=int(d["quad_order"]),
            r_nodes=np.array(d["r_nodes"]),
            r_weights=np.array(d["r_weights"]),
            nu_diag=np.array(d["nu_diag"]),
            K_blocks=arr(d["K_blocks"]),
            nu_blocks=arr(d["nu_blocks"]),
            v1_radial=arr(d["v1_radial"]),
            asym_residual=float(d["asym_residual"]),
            meta=dict(d.get("meta", {})),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        if path.suffix == ".npz":
            d = self.to_dict()
            header = {k: v for k, v in d.items() if not isinstance(v, list)}
            arrays = {
                "r_nodes": self.r_nodes,
                "r_weights": self.r_weights,
                "nu_diag": self.nu_diag,
                **{f"K_{i}": b for i, b in enumerate(self.K_blocks)},
                **{f"nu_{i}": b for i, b in enumerate(self.nu_blocks)},
                **{f"v1_{i}": b for i, b in enumerate(self.v1_radial)},
            }
            with open(path, "wb") as fh:
                np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
        else:
            path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "CollisionSystem":
        path = Path(path)
        try:
            if path.suffix == ".npz":
                z = np.load(path)
                d = json.loads(str(z["header"]))
                nl = d["l_max"] + 1
                d["r_nodes"], d["r_weights"], d["nu_diag"] = z["r_nodes"], z["r_weights"], z["nu_diag"]
                d["K_blocks"] = [z[f"K_{i}"] for i in range(nl)]
                d["nu_blocks"] = [z[f"nu_{i}"] for i in range(nl)]
                d["v1_radial"] = [z[f"v1_{i}"] for i in range(nl - 1)]
                return cls.from_dict(d)
            return cls.from_dict(json.loads(path.read_text()))
        except OSError as exc:
            raise PreconditionError(f"cannot read collision artifact {path}: {exc}") from exc


def _radial_couplings(basis: VelocityBasis, l_max: int) -> tuple[np.ndarray, ...]:
    r, w = basis.r_nodes, basis.r_weights
    tabs = [radial_functions(basis.n_max, ell, r) for ell in range(l_max + 1)]
    return tuple((tabs[ell] * w * r**3) @ tabs[ell + 1].T for ell in range(l_max))


def assemble_collision(
    basis0: VelocityBasis,
    basis1: VelocityBasis | None = None,
    params: KernelParams = KernelParams(),
    inner_order: int = INNER_ORDER,
    check: bool = True,
) -> CollisionSystem:
    """Assemble nu, K and L blocks for l = 0..l_max.

    For every outer radial node r_i the r'-integral is split at r' = r_i,
    where k_l(r, .) has a kink, and each side gets its own Gauss rule.
    """
    if basis0.m_sector != 0:
        raise PreconditionError("basis0 must be the m=0 sector")
    if basis1 is not None and (basis1.m_sector != 1 or basis1.n_max != basis0.n_max or basis1.l_max != basis0.l_max):
        raise PreconditionError("basis1 must be the matching m=1 sector")
    if basis0.n_max < 1 or basis0.l_max < 2:
        raise PreconditionError("collision assembly needs n_max >= 1 and l_max >= 2")
    n_max, l_max = basis0.n_max, basis0.l_max
    r, w = basis0.r_nodes, basis0.r_weights
    rc = basis0.r_cut
    t, wt = leggauss(inner_order)
    t = 0.5 * (t + 1)
    wt = 0.5 * wt
    rp = np.concatenate([r[:, None] * t, r[:, None] + (rc - r[:, None]) * t], axis=1)
    wp = np.concatenate([r[:, None] * wt, (rc - r[:, None]) * wt], axis=1)
    kern = kernel_legendre_table(l_max, np.broadcast_to(r[:, None], rp.shape), rp, params)

    nu = collision_frequency(r, params)
    K_blocks, nu_blocks = [], []
    asym = 0.0
    for ell in range(l_max + 1):
        outer = radial_functions(n_max, ell, r)
        inner_vals = radial_functions(n_max, ell, rp)
        inner = np.einsum("ik,nik->ni", kern[ell] * wp * rp * rp, inner_vals)
        K = (outer * w * r * r) @ inner.T
        scale = max(float(np.abs(K).max()), 1e-300)
        asym = max(asym, float(np.abs(K - K.T).max()) / scale)
        K_blocks.append(0.5 * (K + K.T))
        nu_blocks.append((outer * w * r * r * nu) @ outer.T)
    csys = CollisionSystem(
        params=params,
        n_max=n_max,
        l_max=l_max,
        r_cut=rc,
        quad_order=r.size,
        r_nodes=r,
        r_weights=w,
        nu_diag=nu,
        K_blocks=tuple(K_blocks),
        nu_blocks=tuple(nu_blocks),
        v1_radial=_radial_couplings(basis0, l_max),
        asym_residual=asym,
    )
    return csys.check() if check else csys


def build_collision_system(
    n_max: int = 16,
    l_max: int = 6,
    r_cut: float | None = None,
    quad_order: int | None = None,
    params: KernelParams = KernelParams(),
    check: bool = True,
) -> CollisionSystem:
    if n_max < 4 or l_max < 2:
        raise PreconditionError("collision assembly needs n_max >= 4 and l_max >= 2")
    r_cut = default_r_cut(n_max, l_max) if r_cut is None else r_cut
    q = default_quad_order(n_max) if quad_order is None else quad_order
    b0 = build_basis(n_max, l_max, 0, r_cut, (q, 2 * l_max + 4))
    b1 = build_basis(n_max, l_max, 1, r_cut, (q, 2 * l_max + 4))
    return assemble_collision(b0, b1, params, check=check)
