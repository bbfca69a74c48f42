"""Pseudo-spectral NSPF solver on a periodic box of side 2 pi L.

The prognostic variables are the solenoidal momentum m and the
temperature q; density and potential follow from the Boussinesq and
Poisson relations at every stage, so those constraints hold by
construction.  Time stepping is an exponential (Lawson) midpoint rule:
the linear part is integrated exactly with the V(t) multipliers
exp(-kappa0 k^2 t) and exp(-d0(k) t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, PreconditionError

SQ23 = np.sqrt(2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    dim: int
    L: float
    workers: int = 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    def wavenumbers(self) -> list[np.ndarray]:
        full = sfft.fftfreq(self.n, d=1.0 / self.n) / self.L
        half = sfft.rfftfreq(self.n, d=1.0 / self.n) / self.L
        axes = [full] * (self.dim - 1) + [half]
        return list(np.meshgrid(*axes, indexing="ij"))

    def coords(self) -> list[np.ndarray]:
        x = np.arange(self.n) * (2 * np.pi * self.L / self.n)
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a, axes=tuple(range(-self.dim, 0)), workers=self.workers)

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.irfftn(a, s=self.shape, axes=tuple(range(-self.dim, 0)), workers=self.workers)


@dataclass
class NSPFState:
    """Spectral state; m_hat has shape (dim,) + spectral_shape."""

    t: float
    m_hat: np.ndarray
    q_hat: np.ndarray


@dataclass
class NSPFSolver:
    grid: Grid
    kappa0: float
    kappa1: float
    nonlinear: bool = True
    k: list[np.ndarray] = field(init=False)
    k2: np.ndarray = field(init=False)
    dealias: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.grid.dim not in (2, 3):
            raise PreconditionError("grid dimension must be 2 or 3")
        self.k = self.grid.wavenumbers()
        self.k2 = sum(kk**2 for kk in self.k)
        kmax = (self.grid.n // 2) / self.grid.L
        cut = (2.0 / 3.0) * kmax
        mask = np.ones(self.grid.spectral_shape, dtype=bool)
        for kk in self.k:
            mask &= np.abs(kk) < cut
        self.dealias = mask
        self.kmax = kmax
        # dq/dt = -d0 q + c H2 with c = (3k^2+6)/(5k^2+8) and d0 = kappa1 k^2 c
        self.c_q = (3 * self.k2 + 6) / (5 * self.k2 + 8)
        self.d0 = self.kappa1 * self.k2 * self.c_q
        self.d2 = self.kappa0 * self.k2

    # -- constraints --------------------------------------------------------

    def leray(self, v_hat: np.ndarray) -> np.ndarray:
        k2 = np.where(self.k2 == 0, 1.0, self.k2)
        div = sum(kk * v for kk, v in zip(self.k, v_hat))
        return np.stack([v - kk * div / k2 for kk, v in zip(self.k, v_hat)])

    def density(self, q_hat: np.ndarray) -> np.ndarray:
        return -SQ23 * (1 + self.k2) / (2 + self.k2) * q_hat

    def potential(self, n_hat: np.ndarray) -> np.ndarray:
        return -n_hat / (1 + self.k2)

    def initial_state(self, m: np.ndarray, n: np.ndarray, q: np.ndarray) -> NSPFState:
        """Project physical-space data (m, n, q) onto the constrained manifold."""
        m_hat = np.stack([self.grid.fft(c) for c in m])
        n_hat, q_hat = self.grid.fft(n), self.grid.fft(q)
        w = q_hat - SQ23 * n_hat
        n_new = -SQ23 * w / (5.0 / 3.0 + 1.0 / (1.0 + self.k2))
        q_new = w + SQ23 * n_new
        m_hat = self.leray(m_hat)
        return NSPFState(0.0, m_hat * self.dealias, q_new * self.dealias)

    # -- dynamics -----------------------------------------------------------

    def forcing(self, m_hat: np.ndarray, q_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(O_1 H1_hat, c(k) H2_hat) with H1 = n grad phi - div(m m), H2 = sqrt(2/3) m.grad phi - 5/3 div(q m)."""
        if not self.nonlinear:
            return np.zeros_like(m_hat), np.zeros_like(q_hat)
        g = self.grid
        n_hat = self.density(q_hat)
        phi_hat = self.potential(n_hat)
        m = np.stack([g.ifft(c) for c in m_hat])
        q = g.ifft(q_hat)
        n = g.ifft(n_hat)
        grad_phi = np.stack([g.ifft(1j * kk * phi_hat) for kk in self.k])
        d = g.dim
        H1 = []
        for a in range(d):
            flux = sum(1j * self.k[b] * g.fft(m[a] * m[b]) for b in range(d))
            H1.append(g.fft(n * grad_phi[a]) - flux)
        H1 = np.stack(H1) * self.dealias
        mdotgrad = sum(m[a] * grad_phi[a] for a in range(d))
        div_qm = sum(1j * self.k[a] * g.fft(q * m[a]) for a in range(d))
        H2 = (SQ23 * g.fft(mdotgrad) - (5.0 / 3.0) * div_qm) * self.dealias
        return self.leray(H1), self.c_q * H2

    def _lin(self, m_hat, q_hat, dt):
        return np.exp(-self.d2 * dt) * m_hat, np.exp(-self.d0 * dt) * q_hat

    def step(self, s: NSPFState, dt: float) -> NSPFState:
        """One Lawson midpoint step."""
        fm, fq = self.forcing(s.m_hat, s.q_hat)
        hm, hq = self._lin(s.m_hat + 0.5 * dt * fm, s.q_hat + 0.5 * dt * fq, 0.5 * dt)
        gm, gq = self.forcing(hm, hq)
        m_new, q_new = self._lin(s.m_hat, s.q_hat, dt)
        em, eq = self._lin(gm, gq, 0.5 * dt)
        m_new = self.leray(m_new + dt * em) * self.dealias
        q_new = (q_new + dt * eq) * self.dealias
        return NSPFState(s.t + dt, m_new, q_new)

    def cfl(self, s: NSPFState, dt: float) -> float:
        m = np.stack([self.grid.ifft(c) for c in s.m_hat])
        return float(np.sqrt((m**2).sum(axis=0)).max() * dt * self.kmax)

    def advance(self, s: NSPFState, dt: float, min_dt: float = 1e-8) -> tuple[NSPFState, float]:
        """Step with dt, halving until the CFL number is at most 0.5."""
        while self.cfl(s, dt) > 0.5:
            dt *= 0.5
            if dt < min_dt:
                raise ConvergenceError(f"CFL restriction pushed dt below {min_dt:g}", achieved=dt)
        return self.step(s, dt), dt

    # -- diagnostics --------------------------------------------------------

    def _parseval(self, a_hat: np.ndarray, b_hat: np.ndarray) -> float:
        """Mean of a * conj(b) over the box from rfft coefficients."""
        w = np.full(self.grid.spectral_shape, 2.0)
        w[..., 0] = 1.0
        if self.grid.n % 2 == 0:
            w[..., -1] = 1.0
        return float(np.real(np.sum(w * a_hat * np.conj(b_hat)))) / self.grid.n ** (2 * self.grid.dim)

    def energy(self, s: NSPFState) -> float:
        """||m||^2 + (q, q - sqrt(2/3) n); non-increasing without external forcing."""
        e = sum(self._parseval(c, c) for c in s.m_hat)
        w = s.q_hat - SQ23 * self.density(s.q_hat)
        return e + self._parseval(s.q_hat, w)

    def residuals(self, s: NSPFState) -> dict[str, float]:
        n_hat = self.density(s.q_hat)
        phi_hat = self.potential(n_hat)
        div = sum(kk * c for kk, c in zip(self.k, s.m_hat))
        g = self.grid
        scale = max(float(np.abs(np.stack([g.ifft(c) for c in s.m_hat])).max()), 1e-300)
        div_x = np.abs(g.ifft(1j * div)).max() / scale
        bous = n_hat + SQ23 * s.q_hat - phi_hat
        bscale = max(float(np.abs(g.ifft(s.q_hat)).max()), 1e-300)
        return {
            "divergence": float(div_x),
            "boussinesq": float(np.abs(g.ifft(bous)).max() / bscale),
        }

    def fields(self, s: NSPFState) -> dict[str, np.ndarray]:
        g = self.grid
        n_hat = self.density(s.q_hat)
        return {
            "m": np.stack([g.ifft(c) for c in s.m_hat]),
            "q": g.ifft(s.q_hat),
            "n": g.ifft(n_hat),
            "phi": g.ifft(self.potential(n_hat)),
        }


def taylor_green(grid: Grid, amplitude: float) -> np.ndarray:
    x = grid.coords()
    kx = 1.0 / grid.L
    if grid.dim == 2:
        return amplitude * np.stack([np.sin(kx * x[0]) * np.cos(kx * x[1]), -np.cos(kx * x[0]) * np.sin(kx * x[1])])
    return amplitude * np.stack(
        [
            np.sin(kx * x[0]) * np.cos(kx * x[1]) * np.cos(kx * x[2]),
            -np.cos(kx * x[0]) * np.sin(kx * x[1]) * np.cos(kx * x[2]),
            np.zeros(grid.shape),
        ]
    )


def random_field(grid: Grid, rng: np.random.Generator, amplitude: float, k_peak: float = 2.0) -> np.ndarray:
    """Smooth real random field with a Gaussian spectrum around |k| L = k_peak."""
    white = rng.standard_normal(grid.shape)
    k = grid.wavenumbers()
    kk = np.sqrt(sum(c**2 for c in k)) * grid.L
    spec = grid.fft(white) * np.exp(-((kk - k_peak) ** 2))
    spec.flat[0] = 0.0
    f = grid.ifft(spec)
    return amplitude * f / max(float(np.abs(f).max()), 1e-300)


def initial_data(solver: NSPFSolver, kind: str, amplitude: float, seed: int = 0) -> NSPFState:
    g = solver.grid
    rng = np.random.default_rng(seed)
    zero = np.zeros(g.shape)
    if kind == "taylor_green":
        m = taylor_green(g, amplitude)
        return solver.initial_state(m, zero, zero)
    if kind == "random_solenoidal":
        m = np.stack([random_field(g, rng, amplitude) for _ in range(g.dim)])
        q = random_field(g, rng, amplitude)
        n = random_field(g, rng, amplitude)
        return solver.initial_state(m, n, q)
    raise PreconditionError(f"unknown initial data kind {kind!r}")


@dataclass
class Snapshot:
    t: float
    energy: float
    divergence: float
    boussinesq: float
    dt: float


def run(solver: NSPFSolver, state: NSPFState, dt: float, T: float | None = None, steps: int | None = None) -> tuple[NSPFState, list[Snapshot]]:
    if (T is None) == (steps is None):
        raise PreconditionError("give exactly one of T or steps")
    snaps = [Snapshot(state.t, solver.energy(state), **solver.residuals(state), dt=0.0)]
    done = 0
    while True:
        if steps is not None and done >= steps:
            break
        if T is not None and state.t >= T - 1e-14:
            break
        h = dt if T is None else min(dt, T - state.t)
        state, used = solver.advance(state, h)
        done += 1
        snaps.append(Snapshot(state.t, solver.energy(state), **solver.residuals(state), dt=used))
    return state, snaps
