"""Per-mode propagation of exp(t B_eps(xi) / eps^2) and its fluid/remainder split."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eig, expm

from .errors import PreconditionError
from .spectral import ModeOperator, SpectralBranch, assemble_mode, eig_branches

COND_LIMIT = 1e8


class _SectorExp:
    """exp(tau B_m) for one sector, via eigenvectors when well conditioned."""

    def __init__(self, mode: ModeOperator, m: int):
        self.block = mode.blocks[m]
        s = np.sqrt(mode.sector_metric(m))
        self.s = s
        a = s[:, None] * self.block / s[None, :]
        w, v = eig(a, check_finite=False)
        try:
            vinv = np.linalg.inv(v)
            cond = float(np.linalg.norm(v, 1) * np.linalg.norm(vinv, 1))
        except np.linalg.LinAlgError:
            cond = np.inf
        self.cond = cond
        self.w = w
        if np.isfinite(cond) and cond < COND_LIMIT:
            self.method = "eig"
            self.v = v
            self.vinv = vinv
        else:
            self.method = "expm"

    def apply(self, f: np.ndarray, tau: float) -> np.ndarray:
        if self.method == "eig":
            g = self.vinv @ (self.s * f)
            g = np.exp(self.w * tau) * g
            return (self.v @ g) / self.s
        return _expm_apply(self.block, f, tau)

    def gap(self) -> np.ndarray:
        return self.w


def _expm_apply(a: np.ndarray, f: np.ndarray, tau: float) -> np.ndarray:
    # scaling and squaring on tau*a; huge tau is split so each factor stays moderate
    nrm = np.linalg.norm(a, 1) * tau
    steps = max(1, int(np.ceil(nrm / 1e3)))
    e = expm(a * (tau / steps))
    out = f.astype(complex)
    for _ in range(steps):
        out = e @ out
    return out


@dataclass(frozen=True, eq=False)
class ModePropagator:
    mode: ModeOperator

    @cached_property
    def sectors(self) -> tuple[_SectorExp, _SectorExp]:
        return (_SectorExp(self.mode, 0), _SectorExp(self.mode, 1))

    @property
    def method(self) -> str:
        return "+".join(s.method for s in self.sectors)

    @cached_property
    def branches(self) -> list[SpectralBranch]:
        if all(s.method == "eig" for s in self.sectors):
            return eig_branches(self.mode, sector_eigs=[(s.w, s.v / s.s[:, None]) for s in self.sectors])
        return eig_branches(self.mode)

    def propagate(self, f0: np.ndarray, t: float) -> np.ndarray:
        """exp(t B / eps^2) f0."""
        if t < 0:
            raise PreconditionError("t must be non-negative")
        tau = t / self.mode.eps**2
        s0, s1, s2 = self.mode.csys.slices
        out = np.empty(f0.shape, dtype=complex)
        out[s0] = self.sectors[0].apply(f0[s0], tau)
        out[s1] = self.sectors[1].apply(f0[s1], tau)
        out[s2] = self.sectors[1].apply(f0[s2], tau)
        return out

    def S1(self, f0: np.ndarray, t: float) -> np.ndarray:
        tau = t / self.mode.eps**2
        out = np.zeros(self.mode.dim, dtype=complex)
        for b in self.branches:
            out += np.exp(b.lam * tau) * self.mode.bilinear(f0, b.eigvec) * b.eigvec
        return out

    def split(self, f0: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        full = self.propagate(f0, t)
        s1 = self.S1(f0, t)
        return s1, full - s1

    def remainder_gap(self) -> float:
        """Distance to the imaginary axis of the first eigenvalue outside the five branches."""
        w = np.concatenate([self.sectors[0].gap(), self.sectors[1].gap(), self.sectors[1].gap()])
        re = np.sort(-w.real)
        return float(re[5])


def propagate(mode: ModeOperator, f0: np.ndarray, t: float) -> np.ndarray:
    return ModePropagator(mode).propagate(f0, t)


def split_S1_S2(mode: ModeOperator, f0: np.ndarray, t: float, r0: float | None = None):
    """(S1 f0, S2 f0); S1 is zero when eps*eta exceeds r0."""
    prop = ModePropagator(mode)
    if r0 is not None and mode.eps * mode.eta > r0:
        full = prop.propagate(f0, t)
        return np.zeros_like(full), full
    return prop.split(f0, t)


def fit_decay_rate(t: np.ndarray, values: np.ndarray, floor: float = 1e-9) -> float:
    """Least-squares slope of log(values) against t.

    Points below floor * max(values) sit at round-off level and are dropped.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values > floor * values.max()
    if ok.sum() < 2:
        raise PreconditionError("need two positive values to fit a decay rate")
    return float(np.polyfit(t[ok], np.log(values[ok]), 1)[0])


def beat_frequency(signal: np.ndarray, dt: float) -> tuple[float, float]:
    """Dominant FFT frequency (cycles per unit time) and bin width."""
    signal = np.asarray(signal)
    n = signal.size
    spec = np.abs(np.fft.fft((signal - signal.mean()) * np.hanning(n)))
    freqs = np.fft.fftfreq(n, dt)
    k = int(np.argmax(spec[: n // 2]))
    return float(abs(freqs[k])), float(1.0 / (n * dt))


@dataclass
class DecayRow:
    eta: float
    t: float
    norm_P0: float
    norm_P1: float
    norm_S2: float


def decay_scan(csys, f0_of_eta, eta_grid, t_grid, eps: float, r0: float | None = None) -> list[DecayRow]:
    """Per-mode |P0 f|, |P1 f| and |S2 f| over a time grid.

    f0_of_eta(eta) returns the initial coefficients in the xi-aligned frame.
    """
    rows = []
    macro = ~csys.micro_mask
    for eta in eta_grid:
        mode = assemble_mode(csys, float(eta), eps)
        prop = ModePropagator(mode)
        f0 = f0_of_eta(float(eta))
        have_s1 = r0 is None or eps * eta <= r0
        for t in t_grid:
            full = prop.propagate(f0, float(t))
            s2 = full - prop.S1(f0, float(t)) if have_s1 else full
            rows.append(
                DecayRow(
                    float(eta),
                    float(t),
                    float(np.linalg.norm(full[macro])),
                    float(np.linalg.norm(full[~macro])),
                    mode.norm(s2),
                )
            )
    return rows


def surrogate_norm(rows: list[DecayRow], field: str, t: float) -> float:
    """4 pi * trapezoid of the per-mode magnitude against eta^2 d eta."""
    sel = sorted((r for r in rows if r.t == t), key=lambda r: r.eta)
    eta = np.array([r.eta for r in sel])
    val = np.array([getattr(r, field) for r in sel])
    return float(4 * np.pi * np.trapezoid(val * eta**2, eta))
