"""Command-line entry point: mvpb assemble|spectrum|propagate|nspf|limit|oscillation|fit."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import collision_from_config, grid, kernel_params, load_config
from .errors import MvpbError, PreconditionError
from .tables import Table, config_hash, emit, parse

COMMANDS = ("assemble", "spectrum", "propagate", "nspf", "limit", "oscillation", "fit")


def _meta(cfg: dict, command: str, seed: int, csys=None, **extra) -> dict:
    meta = {"command": command, "config_hash": config_hash(cfg), "seed": seed, "version": __version__}
    if csys is not None:
        meta.update(
            mu=csys.mu,
            kappa0=csys.kappa0,
            kappa1=csys.kappa1,
            nu_convention=csys.params.omega_convention,
            basis={"n_max": csys.n_max, "l_max": csys.l_max, "dim": csys.dim},
        )
    meta.update(extra)
    return meta


def _base(args) -> Path | None:
    return Path(args.config).parent if args.config else None


# ---------------------------------------------------------------- commands


def cmd_assemble(cfg: dict, args) -> list[Path]:
    from .collision import build_collision_system

    block = cfg.get("collision", {})
    csys = build_collision_system(
        n_max=int(block.get("n_max", 16)),
        l_max=int(block.get("l_max", 6)),
        r_cut=block.get("r_cut"),
        quad_order=block.get("quad_order"),
        params=kernel_params(block),
    )
    fmt = block.get("format", "npz")
    if fmt not in ("npz", "json"):
        raise PreconditionError(f"artifact format must be npz or json, got {fmt!r}")
    art = csys.save(args.out / f"collision.{fmt}")
    summary = {"metadata": _meta(cfg, "assemble", args.seed), "summary": csys.summary(), "artifact": art.name}
    sp = args.out / "collision_summary.json"
    sp.write_text(json.dumps(summary, indent=1, sort_keys=True))
    return [art, sp]


def cmd_spectrum(cfg: dict, args) -> list[Path]:
    from .spectral import assemble_mode, eig_branches

    csys = collision_from_config(cfg, _base(args))
    block = cfg.get("spectrum", {})
    etas = grid(block.get("eta"), [0.25, 0.5, 1.0])
    epss = grid(block.get("eps"), [0.1, 0.05, 0.025, 0.0125])
    cols = ["eta", "eps", "j", "re_lambda", "im_lambda", "residual", "u_j", "d_j", "expansion_error"]
    table = Table(cols, metadata=_meta(cfg, "spectrum", args.seed, csys))
    for eta in etas:
        for eps in epss:
            for b in eig_branches(assemble_mode(csys, float(eta), float(eps))):
                table.append([float(eta), float(eps), b.j, b.lam.real, b.lam.imag, b.residual, b.u, b.d, b.expansion_error])
    return [emit(table, args.out / "spectrum.csv")]


def cmd_propagate(cfg: dict, args) -> list[Path]:
    from .experiments import DataSpec
    from .semigroup import ModePropagator, beat_frequency
    from .spectral import assemble_mode, calibrate_r0

    csys = collision_from_config(cfg, _base(args))
    block = cfg.get("propagate", {})
    etas = grid(block.get("eta"), {"min": 1e-3, "max": 16.0, "n": 64, "spacing": "log"})
    eps = float(block.get("eps", 0.1))
    ts = grid(block.get("t"), {"min": 0.0, "max": 2.0, "n": 21})
    spec = DataSpec(block.get("initial_data", "generic"), args.seed, float(block.get("profile_width", 1.0)))
    i0 = csys.macro_index["chi0"]
    cols = ["eta", "t", "norm_P0", "norm_P1", "norm_S2", "phase_peaks"]
    r0 = calibrate_r0(csys)
    note = "dominant angular frequency of Re(f, chi0) over 10 acoustic periods; NaN where eps*eta > r0"
    table = Table(cols, metadata=_meta(cfg, "propagate", args.seed, csys, eps=eps, r0=r0, data=spec.kind, phase_peaks=note))
    macro = ~csys.micro_mask
    for eta in etas:
        mode = assemble_mode(csys, float(eta), eps)
        prop = ModePropagator(mode)
        f0 = spec.vector(csys, float(eta))
        peak = float("nan")
        if eps * eta <= r0:
            dt = 10 * 2 * np.pi * eps / (float(eta) * np.sqrt(8.0 / 3.0)) / 512
            sig = np.array([prop.propagate(f0, k * dt)[i0].real for k in range(512)])
            peak = 2 * np.pi * beat_frequency(sig, dt)[0]
        for t in ts:
            full = prop.propagate(f0, float(t))
            s2 = full - prop.S1(f0, float(t)) if eps * eta <= r0 else full
            table.append([float(eta), float(t), float(np.linalg.norm(full[macro])), float(np.linalg.norm(full[~macro])), mode.norm(s2), peak])
    return [emit(table, args.out / "propagate.csv")]


def cmd_nspf(cfg: dict, args) -> list[Path]:
    from .nspf import Grid, NSPFSolver, initial_data, run

    block = cfg.get("nspf", {})
    kappa = cfg.get("transport", {})
    if "kappa0" in kappa and "kappa1" in kappa:
        k0, k1 = float(kappa["kappa0"]), float(kappa["kappa1"])
    else:
        csys = collision_from_config(cfg, _base(args))
        k0, k1 = csys.kappa0, csys.kappa1
    g = Grid(int(block.get("grid", 64)), int(block.get("dim", 3)), float(block.get("L", 8.0)), workers=args.threads)
    solver = NSPFSolver(g, k0, k1)
    kind = block.get("initial_data", "taylor_green")
    state = initial_data(solver, kind, float(block.get("amplitude", 0.1)), seed=args.seed)
    dt = float(block.get("dt", 0.05))
    if "steps" in block:
        state, snaps = run(solver, state, dt, steps=int(block["steps"]))
    else:
        state, snaps = run(solver, state, dt, T=float(block.get("T", 1.0)))
    meta = _meta(cfg, "nspf", args.seed, kappa0=k0, kappa1=k1, grid={"n": g.n, "dim": g.dim, "L": g.L}, surrogate="periodic box of side 2 pi L")
    table = Table(["t", "energy", "divergence", "boussinesq", "dt"], metadata=meta)
    for s in snaps:
        table.append([s.t, s.energy, s.divergence, s.boussinesq, s.dt])
    out = [emit(table, args.out / "nspf.csv")]
    if block.get("dump", False):
        out.append(dump_fields(args.out / "nspf_fields.bin", solver, state))
    return out


def dump_fields(path: Path, solver, state) -> Path:
    """Row-major complex64 spectral fields after a one-line JSON header."""
    header = {
        "format": "mvpb.nspf-fields",
        "version": 1,
        "dtype": "complex64",
        "order": "C",
        "t": state.t,
        "fields": ["m_hat", "q_hat"],
        "shape_m": [solver.grid.dim, *solver.grid.spectral_shape],
        "shape_q": list(solver.grid.spectral_shape),
        "grid": {"n": solver.grid.n, "dim": solver.grid.dim, "L": solver.grid.L},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(state.m_hat, dtype=np.complex64).tobytes())
        fh.write(np.ascontiguousarray(state.q_hat, dtype=np.complex64).tobytes())
    return path


def read_fields(path: Path) -> tuple[dict, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        raw = np.frombuffer(fh.read(), dtype=np.complex64)
    nm = int(np.prod(header["shape_m"]))
    return header, raw[:nm].reshape(header["shape_m"]), raw[nm:].reshape(header["shape_q"])


def cmd_limit(cfg: dict, args) -> list[Path]:
    from .experiments import LimitConfig, run_limit

    csys = collision_from_config(cfg, _base(args))
    block = dict(cfg.get("limit", {}))
    block["seed"] = args.seed
    block["threads"] = args.threads
    try:
        lc = LimitConfig(**block)
    except TypeError as exc:
        raise PreconditionError(f"bad limit config: {exc}") from exc
    rt = run_limit(csys, lc)
    rt.table.metadata.update(command="limit", seed=args.seed, config_hash=config_hash(cfg | {"seed": args.seed}))
    paths = [emit(rt.table, args.out / "limit.csv")]
    fp = args.out / "limit_fits.json"
    fp.write_text(json.dumps({"metadata": rt.table.metadata, "fits": rt.fits}, indent=1, sort_keys=True))
    return paths + [fp]


def cmd_oscillation(cfg: dict, args) -> list[Path]:
    from .fitting import fit_rate
    from .fluid import oscillatory_integral

    block = cfg.get("oscillation", {})
    thetas = grid(block.get("theta"), {"min": 10.0, "max": 1000.0, "n": 9, "spacing": "log"})
    j = int(block.get("j", 1))
    power = float(block.get("profile_power", 3.0))
    R = float(block.get("R", 25.0))
    nx = int(block.get("n_x", 800))

    def phi(r):
        return (1 + r) ** -power

    table = Table(["theta", "sup", "argmax", "panels"], metadata=_meta(cfg, "oscillation", args.seed, j=j, profile=f"(1+r)^-{power:g}", R=R))
    for th in thetas:
        x = np.linspace(0.0, 1.8 * float(th) + 20.0, nx)
        res = oscillatory_integral(float(th), phi, x, j=j, R=R)
        table.append([float(th), res.sup, res.argmax, res.panels])
    if len(table.rows) >= 4:
        fit = fit_rate(np.array(table.column("theta")), np.array(table.column("sup")))
        table.metadata["slope"] = fit.exponent
        table.metadata["slope_ci95"] = list(fit.ci95)
    return [emit(table, args.out / "oscillation.csv")]


def cmd_fit(cfg: dict, args) -> list[Path]:
    from .fitting import fit_rate

    block = cfg.get("fit", {})
    if "input" in block:
        src = Path(block["input"])
        if not src.is_absolute() and args.config:
            src = Path(args.config).parent / src
        t = parse(src, strict=False)
        x, y = t.column(block.get("x", "x")), t.column(block.get("y", "y"))
    elif "x" in block and "y" in block:
        x, y = block["x"], block["y"]
    else:
        raise PreconditionError("fit needs either fit.input or inline fit.x/fit.y")
    res = fit_rate(np.asarray(x, dtype=float), np.asarray(y, dtype=float), block.get("model", "power"))
    out = args.out / "fit.json"
    out.write_text(json.dumps({"metadata": _meta(cfg, "fit", args.seed), "fit": res.to_dict()}, indent=1, sort_keys=True))
    return [out]


HANDLERS = {
    "assemble": cmd_assemble,
    "spectrum": cmd_spectrum,
    "propagate": cmd_propagate,
    "nspf": cmd_nspf,
    "limit": cmd_limit,
    "oscillation": cmd_oscillation,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvpb", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML, JSON or YAML config file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--threads", type=int, default=1)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise PreconditionError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise PreconditionError("--threads must be at least 1")
        cfg = load_config(args.config)
        args.out = Path(args.out)
        args.out.mkdir(parents=True, exist_ok=True)
        for path in HANDLERS[args.command](cfg, args):
            print(path)
    except MvpbError as exc:
        print(f"mvpb {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
