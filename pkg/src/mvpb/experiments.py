"""Diffusion-limit experiments: kinetic modes against the fluid semigroup.

Initial data are isotropic: at wavevector xi the velocity profile is a
fixed vector expressed in the frame aligned with xi, times a radial
profile phi(|xi|).  Each mode is therefore the 1-D problem at eta = |xi|.

Two whole-space surrogates of the L^inf_x L^2_v error are reported:

* "sup": sup over |x| of the Euclidean norm of
  (2 pi)^-3 int 4 pi sinc(|x| eta) D(eta) eta^2 d eta, i.e. each
  frame-aligned coefficient is transformed as a radial function.  This keeps
  the dispersive cancellation of the acoustic phases.
* "majorant": (2 pi)^-3 int 4 pi |D(eta)| eta^2 d eta, the triangle
  inequality bound, which cannot see that cancellation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .collision import CollisionSystem
from .errors import PreconditionError
from .fitting import fit_rate
from .fluid import composite_gauss, radial_transform, required_panels
from .semigroup import ModePropagator
from .spectral import asymptotic_table, assemble_mode, calibrate_r0, macro_eigvec
from .tables import Table, config_hash

DATA_KINDS = ("generic", "well_prepared", "micro_only")
NORMS = ("sup", "majorant")
MACRO = ("chi0", "chi1", "chi2", "chi3", "chi4")
MAX_GROUP_SPEED = float(np.sqrt(8.0 / 3.0))  # sup of |d(eta u)/d eta|
COLUMNS = [
    "data",
    "norm",
    "eps",
    "t",
    "error_full",
    "error_minus_osc",
    "error_minus_osc_minus_S2",
    "bound_value",
    "quad_error",
]


@dataclass
class LimitConfig:
    eps_list: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    t_abs: tuple[float, ...] = (1.0,)
    t_eps: tuple[float, ...] = (1.0,)  # times t = c * eps
    initial_data: tuple[str, ...] = ("generic",)
    second_order: bool = False
    eta_max: float = 8.0
    profile_width: float = 1.0
    points_per_period: int = 6
    panel_order: int = 16
    min_panels: int = 8
    max_panels: int = 4000
    x_pad: float = 12.0
    x_step: float | None = None
    norms: tuple[str, ...] = NORMS
    error_estimate: bool = True
    seed: int = 0
    threads: int = 1
    r0: float | None = None

    def __post_init__(self):
        self.eps_list = tuple(float(e) for e in self.eps_list)
        self.t_abs = tuple(float(t) for t in self.t_abs)
        self.t_eps = tuple(float(t) for t in self.t_eps)
        self.initial_data = tuple(self.initial_data)
        self.norms = tuple(self.norms)
        if not self.eps_list or any(not 0 < e < 1 for e in self.eps_list):
            raise PreconditionError("eps_list must be non-empty with values in (0, 1)")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise PreconditionError("eps_list must be strictly decreasing")
        for k in self.initial_data:
            if k not in DATA_KINDS:
                raise PreconditionError(f"unknown initial data kind {k!r}")
        if self.second_order and set(self.initial_data) != {"micro_only"}:
            raise PreconditionError("the second-order limit needs micro_only data")
        for n in self.norms:
            if n not in NORMS:
                raise PreconditionError(f"unknown norm {n!r}")
        if any(t < 0 for t in self.t_abs + self.t_eps):
            raise PreconditionError("times must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def times(self, eps: float) -> list[float]:
        return sorted(set(self.t_abs) | {c * eps for c in self.t_eps})


# ---------------------------------------------------------------- initial data


@dataclass(frozen=True)
class DataSpec:
    """Frame-aligned velocity profile times a Gaussian radial profile."""

    kind: str
    seed: int = 0
    width: float = 1.0

    def profile(self, eta):
        return np.exp(-0.5 * (self.width * np.asarray(eta)) ** 2)

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, DATA_KINDS.index(self.kind)])

    def micro_vector(self, csys: CollisionSystem) -> np.ndarray:
        """Random combination of low-order microscopic basis functions, unit norm."""
        rng = self._rng()
        f = np.zeros(csys.dim)
        lo = [csys.slices[0].start + csys.index(n, ell, 0) for ell in range(3) for n in range(3)]
        lo += [s.start + csys.index(n, ell, 1) for s in csys.slices[1:] for ell in range(1, 3) for n in range(3)]
        f[lo] = rng.standard_normal(len(lo))
        f[~csys.micro_mask] = 0.0
        return f / np.linalg.norm(f)

    def macro_coeffs(self) -> np.ndarray:
        return self._rng().standard_normal(5)

    def vector(self, csys: CollisionSystem, eta: float) -> np.ndarray:
        f = np.zeros(csys.dim)
        idx = [csys.macro_index[k] for k in MACRO]
        if self.kind == "generic":
            f[idx] = self.macro_coeffs()
            f += 0.5 * self.micro_vector(csys)
        elif self.kind == "well_prepared":
            a = self.macro_coeffs()
            w = a[4]
            n = -np.sqrt(2.0 / 3.0) * w / (5.0 / 3.0 + 1.0 / (1.0 + eta * eta))
            f[idx] = [n, 0.0, a[2], a[3], w + np.sqrt(2.0 / 3.0) * n]
        else:
            f = self.micro_vector(csys)
        return self.profile(eta) * f


# ---------------------------------------------------------------- per-mode pieces


def _macro_of(csys: CollisionSystem, f: np.ndarray) -> np.ndarray:
    return f[[csys.macro_index[k] for k in MACRO]]


def _embed(csys: CollisionSystem, u: np.ndarray) -> np.ndarray:
    out = np.zeros(csys.dim, dtype=complex)
    out[[csys.macro_index[k] for k in MACRO]] = u
    return out


def _fluid_parts(eta: float, u0: np.ndarray, t: float, eps: float, d: dict[int, float], u: dict[int, float]):
    """(V(t) u0, u_osc(t)) in frame-aligned macroscopic coordinates."""
    metric = np.array([1.0 + 1.0 / (1.0 + eta * eta), 1, 1, 1, 1])
    fluid = np.zeros(5, dtype=complex)
    osc = np.zeros(5, dtype=complex)
    for j in (-1, 0, 1, 2, 3):
        F = macro_eigvec(j, eta)
        c = np.sum(u0 * metric * F)
        if j in (-1, 1):
            osc += np.exp(-1j * eta * u[j] * t / eps - d[j] * t) * c * F
        else:
            fluid += np.exp(-d[j] * t) * c * F
    return fluid, osc


def mode_errors(csys: CollisionSystem, eta: float, eps: float, specs: list[DataSpec], times: list[float], second_order: bool = False):
    """Per data kind and time: the three error vectors at one mode.

    Returns {(kind, t): (D_full, D_minus_osc, D_minus_osc_minus_S2)}.
    """
    mode = assemble_mode(csys, eta, eps)
    prop = ModePropagator(mode)
    table = asymptotic_table(eta, csys.kappa0, csys.kappa1, csys.kappa_long)
    out = {}
    for spec in specs:
        f0 = spec.vector(csys, eta)
        if second_order:
            g = csys.solve_Linv_P1(f0)
            u0 = _macro_of(csys, 1j * eta * (csys.V1 @ g))
            scale = 1.0 / eps
        else:
            u0 = _macro_of(csys, f0).astype(complex)
            scale = 1.0
        for t in times:
            kin = scale * prop.propagate(f0, t)
            s1 = scale * prop.S1(f0, t)
            fluid, osc = _fluid_parts(eta, u0, t, eps, table.d, table.u)
            fl, os_ = _embed(csys, fluid), _embed(csys, osc)
            out[(spec.kind, t)] = (kin - fl, kin - fl - os_, s1 - fl - os_)
    return out


# ---------------------------------------------------------------- surrogate norms


def _x_grid(t: float, eps: float, cfg: LimitConfig) -> np.ndarray:
    x_max = 1.05 * MAX_GROUP_SPEED * t / eps + cfg.x_pad
    step = cfg.x_step or 0.5 / cfg.eta_max
    return np.linspace(0.0, x_max, int(np.ceil(x_max / step)) + 1)


def _panels(eps: float, times: list[float], cfg: LimitConfig) -> int:
    rate = max(MAX_GROUP_SPEED * t / eps + _x_grid(t, eps, cfg)[-1] for t in times)
    need = max(cfg.min_panels, required_panels(cfg.eta_max, rate, cfg.points_per_period, cfg.panel_order))
    if need > cfg.max_panels:
        raise PreconditionError(
            f"eps={eps:g}: the eta grid needs {need} panels of order {cfg.panel_order} "
            f"(max_panels={cfg.max_panels}); raise max_panels or shrink eta_max/t"
        )
    return need


def sup_norm(x: np.ndarray, eta: np.ndarray, w: np.ndarray, D: np.ndarray) -> float:
    """sup_x |(2 pi)^-3 int 4 pi sinc(|x| eta) D(eta) eta^2 d eta|_2 (real arithmetic)."""
    Dr = np.ascontiguousarray(D).view(np.float64)  # (n_eta, 2 * dim)
    G = radial_transform(x, eta, w, Dr)
    mags = np.sqrt((G**2).sum(axis=1)) / (2 * np.pi) ** 3
    return float(mags.max())


def majorant_norm(eta: np.ndarray, w: np.ndarray, D: np.ndarray) -> float:
    return float(4 * np.pi * np.sum(w * eta**2 * np.linalg.norm(D, axis=1)) / (2 * np.pi) ** 3)


def _evaluate(csys, eps, specs, times, cfg, panels) -> dict:
    eta, w = composite_gauss(0.0, cfg.eta_max, panels, cfg.panel_order)

    def work(i):
        return mode_errors(csys, float(eta[i]), eps, specs, times, cfg.second_order)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            per_mode = list(pool.map(work, range(eta.size)))
    else:
        per_mode = [work(i) for i in range(eta.size)]
    result = {}
    for key in per_mode[0]:
        _, t = key
        stacked = [np.array([pm[key][c] for pm in per_mode]) for c in range(3)]
        vals = {}
        for norm in cfg.norms:
            if norm == "sup":
                x = _x_grid(t, eps, cfg)
                vals[norm] = [sup_norm(x, eta, w, D) for D in stacked]
            else:
                vals[norm] = [majorant_norm(eta, w, D) for D in stacked]
        result[key] = vals
    return result


def bound_value(kind: str, eps: float, t: float, second_order: bool, sigma0: float) -> float:
    """Rate function of the corresponding first- or second-order bound (constant C = 1)."""
    if second_order:
        return float(eps * (1 + t) ** -2.5 + 1.0 / (1 + t / eps) + np.exp(-sigma0 * t / eps**2) / eps)
    if kind == "well_prepared":
        return float(eps * (1 + t) ** -2)
    return float(eps * (1 + t) ** -2 + 1.0 / (1 + t / eps))


@dataclass
class RateTable:
    table: Table
    fits: dict = field(default_factory=dict)

    def series(self, data: str, norm: str, t: float | None = None, t_over_eps: float | None = None, column: str = "error_full"):
        rows = [r for r in self.table.records() if r["data"] == data and r["norm"] == norm]
        if t is not None:
            rows = [r for r in rows if r["t"] == t]
        if t_over_eps is not None:
            rows = [r for r in rows if np.isclose(r["t"], t_over_eps * r["eps"], rtol=1e-12)]
        rows.sort(key=lambda r: -r["eps"])
        return np.array([r["eps"] for r in rows]), np.array([r[column] for r in rows])


def _metadata(csys: CollisionSystem, cfg: LimitConfig, r0: float, kind: str) -> dict:
    return {
        "experiment": kind,
        "config_hash": config_hash({"limit": cfg.to_dict(), "collision": csys.summary_config()}),
        "r0": r0,
        "mu": csys.mu,
        "kappa0": csys.kappa0,
        "kappa1": csys.kappa1,
        "nu_convention": csys.params.omega_convention,
        "basis": {"n_max": csys.n_max, "l_max": csys.l_max, "dim": csys.dim},
        "surrogate": "sup: sup_|x| of frame-aligned radial transforms; majorant: int |D| eta^2 d eta; isotropic data, Gaussian profile",
        "eta_grid": f"composite Gauss-Legendre on [0, {cfg.eta_max}], order {cfg.panel_order}, {cfg.points_per_period} points per phase period",
    }


def run_limit(csys: CollisionSystem, cfg: LimitConfig) -> RateTable:
    r0 = cfg.r0 if cfg.r0 is not None else calibrate_r0(csys)
    if max(cfg.eps_list) * cfg.eta_max > r0:
        raise PreconditionError(f"max(eps) * eta_max = {max(cfg.eps_list) * cfg.eta_max:.3g} exceeds r0 = {r0:.3g}")
    if cfg.second_order and not set(cfg.initial_data) <= {"micro_only"}:
        raise PreconditionError("second-order runs need micro_only data")
    specs = [DataSpec(k, cfg.seed, cfg.profile_width) for k in cfg.initial_data]
    if cfg.second_order:
        for s in specs:
            f = s.vector(csys, 1.0)
            if np.linalg.norm(f[~csys.micro_mask]) >= 1e-12:
                raise PreconditionError("micro_only data has a macroscopic component")
    table = Table(COLUMNS, metadata=_metadata(csys, cfg, r0, "second_order" if cfg.second_order else "linear"))
    sigma0 = csys.mu
    for eps in cfg.eps_list:
        times = cfg.times(eps)
        panels = _panels(eps, times, cfg)
        fine = _evaluate(csys, eps, specs, times, cfg, panels)
        coarse = _evaluate(csys, eps, specs, times, cfg, max(1, panels // 2)) if cfg.error_estimate else None
        for spec in specs:
            for t in times:
                for norm in cfg.norms:
                    v = fine[(spec.kind, t)][norm]
                    qerr = abs(v[0] - coarse[(spec.kind, t)][norm][0]) if coarse else float("nan")
                    table.append([spec.kind, norm, eps, t, v[0], v[1], v[2], bound_value(spec.kind, eps, t, cfg.second_order, sigma0), qerr])
    table.rows.sort(key=lambda r: (r[0], r[1], -r[2], r[3]))
    rt = RateTable(table)
    rt.fits = _fits(rt, cfg)
    return rt


def _fits(rt: RateTable, cfg: LimitConfig) -> dict:
    fits = {}
    if len(cfg.eps_list) < 4:
        return fits
    for kind in cfg.initial_data:
        for norm in cfg.norms:
            for t in cfg.t_abs:
                x, y = rt.series(kind, norm, t=t)
                if np.all(y > 0):
                    fits[f"{kind}/{norm}/t={t:g}"] = fit_rate(x, y).to_dict()
            for c in cfg.t_eps:
                x, y = rt.series(kind, norm, t_over_eps=c)
                if np.all(y > 0):
                    fits[f"{kind}/{norm}/t={c:g}eps"] = fit_rate(x, y).to_dict()
    return fits


def run_linear_limit(csys: CollisionSystem, cfg: LimitConfig) -> RateTable:
    if cfg.second_order:
        raise PreconditionError("use run_second_order_limit for second-order runs")
    return run_limit(csys, cfg)


def run_second_order_limit(csys: CollisionSystem, cfg: LimitConfig) -> RateTable:
    if not cfg.second_order:
        cfg = LimitConfig(**{**cfg.to_dict(), "second_order": True, "initial_data": ("micro_only",)})
    return run_limit(csys, cfg)


def shear_overlap(csys: CollisionSystem, eta: float) -> float:
    """|<P0(i eta v1 L^-1 f0), F_2>| for the shear-type micro datum f0 = P1(v1 chi2)."""
    f0 = csys.micro_part(csys.V1 @ csys.invariant("chi2"))
    g = csys.solve_Linv_P1(f0)
    u0 = _macro_of(csys, 1j * eta * (csys.V1 @ g))
    return float(abs(u0 @ macro_eigvec(2, eta)))
