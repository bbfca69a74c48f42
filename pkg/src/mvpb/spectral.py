"""Mode operator B_eps(xi) and its five low-lying eigenbranches.

For xi = eta e_1 the operator is

    B = L - i eps eta v_1 - i eps eta/(1+eta^2) v_1 P_d,

and it is complex symmetric with respect to the weighted metric
M = I + P_d/(1+eta^2): (M B)^T = M B.  Eigenvectors are therefore
normalized with the bilinear form e_j^T M e_k = delta_jk.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eig, lu_factor, lu_solve

from .collision import CollisionSystem
from .errors import ConvergenceError, PreconditionError

BRANCH_LABELS = (-1, 0, 1, 2, 3)
SQ23 = np.sqrt(2.0 / 3.0)


# ---------------------------------------------------------------- closed-form table


def wave_speed(j: int, eta):
    eta = np.asarray(eta, dtype=float)
    if j in (-1, 1):
        return -j * np.sqrt(5.0 / 3.0 + 1.0 / (1.0 + eta**2))
    return np.zeros_like(eta)


def damping_rate(j: int, eta, kappa0: float, kappa1: float, kappa_long: float | None = None):
    """Second-order coefficient d_j(eta) of the branch expansion.

    The acoustic rate carries the longitudinal coefficient
    -(L^-1 P1 (v1 chi1), v1 chi1), which equals 4 kappa0 / 3 by rotation
    invariance of L.
    """
    eta = np.asarray(eta, dtype=float)
    e2 = eta**2
    if kappa_long is None:
        kappa_long = 4.0 * kappa0 / 3.0
    if j in (2, 3):
        return kappa0 * e2
    if j == 0:
        return kappa1 * e2 * (3 * e2 + 6) / (5 * e2 + 8)
    if j in (-1, 1):
        return 0.5 * kappa_long * e2 + kappa1 * e2 * (e2 + 1) / (5 * e2 + 8)
    raise PreconditionError(f"unknown branch label {j}")


def macro_matrix(eta: float) -> np.ndarray:
    """A(eta) = P0 v1 P0 + v1 P_d/(1+eta^2) on (chi0, chi1, chi2, chi3, chi4)."""
    a = np.zeros((5, 5))
    a[0, 1] = 1.0
    a[1, 0] = 1.0 + 1.0 / (1.0 + eta**2)
    a[1, 4] = SQ23
    a[4, 1] = SQ23
    return a


def macro_eigvec(j: int, eta: float) -> np.ndarray:
    """F_j(eta) as coefficients on (chi0, chi1, chi2, chi3, chi4)."""
    e2 = eta**2
    f = np.zeros(5)
    if j == 0:
        f[0] = np.sqrt(2.0) * (1 + e2) / np.sqrt((e2 + 2) * (5 * e2 + 8))
        f[4] = -np.sqrt(3 * e2 + 6) / np.sqrt(5 * e2 + 8)
    elif j in (-1, 1):
        f[0] = np.sqrt(3 * e2 + 3) / np.sqrt(10 * e2 + 16)
        f[1] = -j * np.sqrt(2.0) / 2
        f[4] = np.sqrt(e2 + 1) / np.sqrt(5 * e2 + 8)
    elif j == 2:
        f[2] = 1.0
    elif j == 3:
        f[3] = 1.0
    else:
        raise PreconditionError(f"unknown branch label {j}")
    return f


def macro_metric(eta: float) -> np.ndarray:
    return np.diag([1.0 + 1.0 / (1.0 + eta**2), 1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class AsymptoticTable:
    eta: float
    kappa0: float
    kappa1: float
    kappa_long: float
    u: dict[int, float]
    d: dict[int, float]
    F: dict[int, np.ndarray]

    def b(self, j: int) -> complex:
        """b_j(eta) = i d_j(eta)/eta, so that d_eps sigma_j(eta, 0) = -b_j.

        With beta = -i eps eta sigma, matching sigma = u - eps b against
        beta = -i eps eta u - eps^2 d fixes the sign.
        """
        return 1j * self.d[j] / self.eta

    def E(self, j: int, xi: np.ndarray) -> np.ndarray:
        """E_j(xi) as coefficients on (chi0, v1 chi0, v2 chi0, v3 chi0, chi4) in a fixed frame."""
        xi = np.asarray(xi, dtype=float)
        k = np.linalg.norm(xi)
        if k == 0:
            raise PreconditionError("E_j(xi) needs xi != 0")
        xh = xi / k
        w2, w3 = transverse_frame(xh)
        f = self.F[j]
        out = np.zeros(5)
        out[0], out[4] = f[0], f[4]
        out[1:4] = f[1] * xh + f[2] * w2 + f[3] * w3
        return out


def transverse_frame(xh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal W^2, W^3 completing xi/|xi| to a right-handed frame."""
    trial = np.array([0.0, 0.0, 1.0]) if abs(xh[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    w2 = np.cross(trial, xh)
    w2 /= np.linalg.norm(w2)
    w3 = np.cross(xh, w2)
    return w2, w3


def asymptotic_table(eta: float, kappa0: float, kappa1: float, kappa_long: float | None = None) -> AsymptoticTable:
    if kappa_long is None:
        kappa_long = 4.0 * kappa0 / 3.0
    return AsymptoticTable(
        eta=float(eta),
        kappa0=kappa0,
        kappa1=kappa1,
        kappa_long=kappa_long,
        u={j: float(wave_speed(j, eta)) for j in BRANCH_LABELS},
        d={j: float(damping_rate(j, eta, kappa0, kappa1, kappa_long)) for j in BRANCH_LABELS},
        F={j: macro_eigvec(j, eta) for j in BRANCH_LABELS},
    )


# ---------------------------------------------------------------- mode operator


@dataclass(frozen=True, eq=False)
class ModeOperator:
    csys: CollisionSystem
    eta: float
    eps: float
    blocks: tuple[np.ndarray, np.ndarray]  # sector m=0, sector m=1

    @property
    def dim(self) -> int:
        return self.csys.dim

    @cached_property
    def matrix(self) -> np.ndarray:
        from scipy.linalg import block_diag

        return block_diag(self.blocks[0], self.blocks[1], self.blocks[1])

    @cached_property
    def metric_diag(self) -> np.ndarray:
        d = np.ones(self.dim)
        d[self.csys.macro_index["chi0"]] += 1.0 / (1.0 + self.eta**2)
        return d

    @property
    def metric(self) -> np.ndarray:
        return np.diag(self.metric_diag)

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        """<f, g>_xi = (f, g) + (P_d f, P_d g)/(1+eta^2), linear in f."""
        return complex(np.sum(f * self.metric_diag * np.conj(g)))

    def bilinear(self, f: np.ndarray, g: np.ndarray) -> complex:
        """<f, conj g>_xi, the pairing that diagonalizes B."""
        return complex(np.sum(f * self.metric_diag * g))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.metric_diag * np.abs(f) ** 2, axis=-1)))

    def apply(self, f: np.ndarray) -> np.ndarray:
        s0, s1, s2 = self.csys.slices
        out = np.empty(f.shape, dtype=complex)
        out[s0] = self.blocks[0] @ f[s0]
        out[s1] = self.blocks[1] @ f[s1]
        out[s2] = self.blocks[1] @ f[s2]
        return out

    def sector_metric(self, m: int) -> np.ndarray:
        d = np.ones(self.csys.sector_size(m))
        if m == 0:
            d[self.csys.macro_index["chi0"]] += 1.0 / (1.0 + self.eta**2)
        return d

    def transformed(self, m: int) -> np.ndarray:
        """M^{1/2} B M^{-1/2} in sector m (complex symmetric)."""
        s = np.sqrt(self.sector_metric(m))
        return s[:, None] * self.blocks[m] / s[None, :]


def assemble_mode(csys: CollisionSystem, eta: float, eps: float) -> ModeOperator:
    if eta < 0:
        raise PreconditionError("eta must be non-negative")
    if not 0 < eps <= 1:
        raise PreconditionError("eps must lie in (0, 1]")
    z = eps * eta
    b0 = csys.L_sector(0) - 1j * z * csys.V1_sector(0)
    i0, i1 = csys.macro_index["chi0"], csys.macro_index["chi1"]
    b0[i1, i0] -= 1j * z / (1.0 + eta**2)
    b1 = csys.L_sector(1) - 1j * z * csys.V1_sector(1)
    return ModeOperator(csys, float(eta), float(eps), (b0, b1))


# ---------------------------------------------------------------- branches


@dataclass
class SpectralBranch:
    j: int
    lam: complex
    eigvec: np.ndarray
    residual: float
    u: float
    d: float
    degenerate: bool = False

    @property
    def expansion_error(self) -> float:
        return abs(self.lam - self.asymptotic(self._eps, self._eta))

    def asymptotic(self, eps: float, eta: float) -> complex:
        return -1j * eps * eta * self.u - eps**2 * self.d

    _eps: float = field(default=0.0, repr=False)
    _eta: float = field(default=0.0, repr=False)


def _expand_macro(csys: CollisionSystem, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros(csys.dim, dtype=complex)
    out[[csys.macro_index[k] for k in ("chi0", "chi1", "chi2", "chi3", "chi4")]] = coeffs
    return out


def macro_vector(csys: CollisionSystem, j: int, eta: float) -> np.ndarray:
    """F_j(eta) in combined kinetic coordinates."""
    return _expand_macro(csys, macro_eigvec(j, eta)).real


def _sector_eig(mode: ModeOperator, m: int):
    a = mode.transformed(m)
    w, v = eig(a, check_finite=False)
    s = np.sqrt(mode.sector_metric(m))
    return w, v / s[:, None]


def eig_branches(mode: ModeOperator, mu: float | None = None, sector_eigs=None) -> list[SpectralBranch]:
    """The five eigenpairs with Re lambda >= -mu/2, labeled j = -1, 0, 1, 2, 3.

    sector_eigs optionally supplies precomputed (w, v) per sector, with v in
    the original (unweighted) coordinates.
    """
    csys = mode.csys
    mu = csys.mu if mu is None else mu
    table = asymptotic_table(mode.eta, csys.kappa0, csys.kappa1, csys.kappa_long)
    out: list[SpectralBranch] = []
    counts = {}
    for m, labels in ((0, (-1, 0, 1)), (1, (2,))):
        w, v = sector_eigs[m] if sector_eigs is not None else _sector_eig(mode, m)
        keep = np.flatnonzero(w.real >= -mu / 2)
        counts[m] = keep.size
        if keep.size != len(labels):
            continue
        metric = mode.sector_metric(m)
        vecs = v[:, keep]
        lam = w[keep]
        if mode.eta == 0.0:
            # B = L: any basis of the null space works; use the macroscopic vectors
            vecs = np.zeros_like(vecs)
            for col, j in enumerate(labels):
                vecs[:, col] = _expand_macro(csys, table.F[j])[_sector_slice(csys, m)]
            lam = np.zeros(len(labels), dtype=complex)
        # overlap with F_j decides the labels
        F = np.array([_expand_macro(csys, table.F[j])[_sector_slice(csys, m)] for j in labels])
        overlap = np.abs((F * metric) @ vecs)
        order = _assign(overlap)
        for row, j in enumerate(labels):
            col = order[row]
            e = vecs[:, col]
            nrm = np.sqrt(np.sum(e * metric * e))
            e = e / nrm
            if np.real(np.sum(F[row] * metric * e)) < 0:
                e = -e
            full = np.zeros(csys.dim, dtype=complex)
            full[_sector_slice(csys, m)] = e
            resid = float(np.linalg.norm(mode.blocks[m] @ e - lam[col] * e) / np.linalg.norm(e))
            gap = np.abs(np.delete(lam, col) - lam[col]) if lam.size > 1 else np.array([np.inf])
            br = SpectralBranch(j, complex(lam[col]), full, resid, table.u[j], table.d[j], bool(np.any(gap < 1e-10)))
            br._eps, br._eta = mode.eps, mode.eta
            out.append(br)
            if j == 2:
                twin = np.zeros(csys.dim, dtype=complex)
                s1, s2 = csys.slices[1], csys.slices[2]
                twin[s2] = full[s1]
                b3 = SpectralBranch(3, complex(lam[col]), twin, resid, table.u[3], table.d[3], br.degenerate)
                b3._eps, b3._eta = mode.eps, mode.eta
                out.append(b3)
    if counts.get(0) != 3 or counts.get(1) != 1:
        total = counts.get(0, 0) + 2 * counts.get(1, 0)
        raise PreconditionError(
            f"{total} eigenvalues with Re >= -mu/2 at eps*eta={mode.eps * mode.eta:.4g}; r0 exceeded"
        )
    out.sort(key=lambda b: BRANCH_LABELS.index(b.j))
    return out


def _sector_slice(csys: CollisionSystem, m: int) -> slice:
    return csys.slices[0] if m == 0 else csys.slices[1]


def _assign(overlap: np.ndarray) -> list[int]:
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(-overlap)
    return list(cols[np.argsort(rows)])


def count_slow(csys: CollisionSystem, eta: float, eps: float) -> int:
    mode = assemble_mode(csys, eta, eps)
    n0 = int(np.sum(np.linalg.eigvals(mode.blocks[0]).real >= -csys.mu / 2))
    n1 = int(np.sum(np.linalg.eigvals(mode.blocks[1]).real >= -csys.mu / 2))
    return n0 + 2 * n1


def calibrate_r0(csys: CollisionSystem, eps_ref: float = 1.0, z_start: float = 1.0 / 64, iters: int = 12) -> float:
    """Largest eps*eta with exactly five eigenvalues in Re >= -mu/2.

    Doubling from z_start brackets the first failure, then bisection
    refines it; every accepted z also has all smaller grid points valid.
    """
    z = z_start
    if count_slow(csys, z / eps_ref, eps_ref) != 5:
        raise ConvergenceError(f"five-branch structure absent already at eps*eta={z}")
    lo, hi = z, None
    while hi is None:
        z = 2 * lo
        if z > 64:
            return lo
        if count_slow(csys, z / eps_ref, eps_ref) == 5:
            lo = z
        else:
            hi = z
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if count_slow(csys, mid / eps_ref, eps_ref) == 5:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------- dispersion functions


class Resolvent:
    """R(sigma, z) = (L + i z sigma - i z P1 v1 P1)^{-1} on the P1 subspace."""

    def __init__(self, csys: CollisionSystem, m: int, z: float):
        self.csys = csys
        self.m = m
        self.z = z
        sl = _sector_slice(csys, m)
        mask = csys.micro_mask[sl]
        self.idx = np.flatnonzero(mask)
        L = csys.L_sector(m)[np.ix_(self.idx, self.idx)]
        V = csys.V1_sector(m)[np.ix_(self.idx, self.idx)]
        self.base = L - 1j * z * V
        self.V1 = csys.V1_sector(m)
        self.sector_index = {k: i - sl.start for k, i in csys.macro_index.items() if sl.start <= i < sl.stop}

    def micro_v1(self, coeffs: dict[str, float]) -> np.ndarray:
        vec = np.zeros(self.V1.shape[0])
        for k, c in coeffs.items():
            vec[self.sector_index[k]] = c
        return (self.V1 @ vec)[self.idx]

    def solve(self, sigma: complex, rhs: np.ndarray, power: int = 1) -> np.ndarray:
        a = self.base + 1j * self.z * sigma * np.eye(self.idx.size)
        lu = lu_factor(a)
        out = rhs.astype(complex)
        for _ in range(power):
            out = lu_solve(lu, out)
        return out


def _f_dicts(eta: float) -> list[dict[str, float]]:
    out = []
    for j in (-1, 0, 1):
        f = macro_eigvec(j, eta)
        out.append({"chi0": f[0], "chi1": f[1], "chi4": f[4]})
    return out


def D0(csys: CollisionSystem, sigma: complex, z: float, res: Resolvent | None = None) -> tuple[complex, complex]:
    """D0(sigma, z) = sigma - i z R33(sigma, z) and its sigma-derivative."""
    res = res or Resolvent(csys, 1, z)
    g = res.micro_v1({"chi2": 1.0})
    x = res.solve(sigma, g)
    r33 = x @ g
    dr33 = -1j * z * (res.solve(sigma, x) @ g)
    return sigma - 1j * z * r33, 1 - 1j * z * dr33


def D1(csys: CollisionSystem, sigma: complex, eta: float, eps: float, res: Resolvent | None = None):
    """D1 = det[(sigma - u_{j-1}) delta_jk - i eps eta R_kj] and its sigma-derivative."""
    z = eps * eta
    res = res or Resolvent(csys, 0, z)
    gs = [res.micro_v1(f) for f in _f_dicts(eta)]
    G = np.array(gs)
    xs = np.array([res.solve(sigma, g) for g in gs])
    R = xs @ G.T  # R[j, k] = (R P1 v1 F_j, v1 F_k)
    dR = -1j * z * np.array([res.solve(sigma, x) for x in xs]) @ G.T
    u = np.array([wave_speed(j, eta) for j in (-1, 0, 1)], dtype=float)
    A = np.diag(sigma - u) - 1j * z * R.T
    dA = np.eye(3) - 1j * z * dR.T
    det = np.linalg.det(A)
    ddet = det * np.trace(np.linalg.solve(A, dA))
    return det, ddet


def _newton(fun, x0: complex, tol: float = 1e-13, maxit: int = 50) -> complex:
    x = complex(x0)
    f, df = fun(x)
    for _ in range(maxit):
        step = f / df
        lam = 1.0
        while True:
            xn = x - lam * step
            fn, dfn = fun(xn)
            if abs(fn) < abs(f) or lam < 1e-4:
                break
            lam *= 0.5
        x, f, df = xn, fn, dfn
        if abs(lam * step) < tol * max(1.0, abs(x)):
            return x
    raise ConvergenceError(f"Newton did not converge in {maxit} iterations, |D|={abs(f):.3e}", achieved=abs(f))


@dataclass
class DispersionRoots:
    eta: float
    eps: float
    sigma: dict[int, complex]

    def beta(self, j: int) -> complex:
        return -1j * self.eps * self.eta * self.sigma[j]


def dispersion_roots(csys: CollisionSystem, eta: float, eps: float, r0: float | None = None) -> DispersionRoots:
    """Roots of D0 (shear) and D1 (acoustic and thermal) by damped Newton."""
    z = eps * eta
    if r0 is not None and z > r0:
        raise PreconditionError(f"eps*eta={z:.4g} exceeds r0={r0:.4g}")
    if eta <= 0:
        raise PreconditionError("dispersion roots need eta > 0")
    res1 = Resolvent(csys, 1, z)
    res0 = Resolvent(csys, 0, z)
    sig = {}
    sig[2] = _newton(lambda s: D0(csys, s, z, res1), 0.0)
    sig[3] = sig[2]
    for j in (-1, 0, 1):
        guess = float(wave_speed(j, eta))
        sig[j] = _newton(lambda s: D1(csys, s, eta, eps, res0), guess)
    return DispersionRoots(eta, eps, sig)


def contraction_root(csys: CollisionSystem, j: int, eta: float, eps: float, tol: float = 1e-13, maxit: int = 200) -> complex:
    """Fixed point of Pi_j(sigma) = sigma - D1(sigma)/(3 u_j^2 - 5/3 - 1/(1+eta^2))."""
    res = Resolvent(csys, 0, eps * eta)
    u = float(wave_speed(j, eta))
    denom = 3 * u * u - 5.0 / 3.0 - 1.0 / (1.0 + eta**2)
    s = complex(u)
    for _ in range(maxit):
        sn = s - D1(csys, s, eta, eps, res)[0] / denom
        if abs(sn - s) < tol:
            return sn
        s = sn
    raise ConvergenceError("contraction map did not converge", achieved=abs(sn - s))


# ---------------------------------------------------------------- expansion order


@dataclass
class OrderFit:
    slope: float | None
    intercept: float | None
    status: str  # "ok" | "floor-limited"
    residuals: np.ndarray


def expansion_order_fit(eps_values, residuals, floor: float = 1e-12) -> OrderFit:
    """Least-squares slope of log|residual| against log eps."""
    eps_values = np.asarray(eps_values, dtype=float)
    residuals = np.abs(np.asarray(residuals))
    if eps_values.size < 4:
        raise PreconditionError("need at least four eps values")
    ratios = eps_values[1:] / eps_values[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise PreconditionError("eps values must form a geometric progression")
    if np.all(residuals < floor):
        return OrderFit(None, None, "floor-limited", residuals)
    ok = residuals >= floor
    if ok.sum() < 2:
        return OrderFit(None, None, "floor-limited", residuals)
    slope, icpt = np.polyfit(np.log(eps_values[ok]), np.log(residuals[ok]), 1)
    return OrderFit(float(slope), float(icpt), "ok", residuals)


def expansion_residuals(csys: CollisionSystem, j: int, eta: float, eps_values, order: int = 2) -> np.ndarray:
    """|beta_j + i eps eta u_j (+ eps^2 d_j)| over an eps series."""
    out = []
    for eps in eps_values:
        br = {b.j: b for b in eig_branches(assemble_mode(csys, eta, eps))}[j]
        approx = -1j * eps * eta * br.u - (eps**2 * br.d if order >= 2 else 0.0)
        out.append(abs(br.lam - approx))
    return np.array(out)
