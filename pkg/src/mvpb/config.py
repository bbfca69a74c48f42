"""Config files (TOML, JSON or YAML) and grid specifications."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .collision import CollisionSystem, KernelParams, build_collision_system
from .errors import PreconditionError


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PreconditionError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(text)
        elif path.suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise PreconditionError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise PreconditionError(f"config {path} must be a mapping")
    return data


def grid(spec, default=None) -> np.ndarray:
    """A list of values, or {min, max, n, spacing: lin|log}."""
    if spec is None:
        spec = default
    if spec is None:
        raise PreconditionError("missing grid specification")
    if isinstance(spec, (int, float)):
        return np.array([float(spec)])
    if isinstance(spec, (list, tuple)):
        return np.array([float(x) for x in spec])
    if isinstance(spec, dict):
        try:
            lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["n"])
        except KeyError as exc:
            raise PreconditionError(f"grid spec lacks {exc}") from exc
        if spec.get("spacing", "lin") == "log":
            if lo <= 0:
                raise PreconditionError("log grids need min > 0")
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)
    raise PreconditionError(f"unrecognized grid spec {spec!r}")


def kernel_params(block: dict) -> KernelParams:
    return KernelParams(
        gamma=float(block.get("gamma", 1.0)),
        b_coeff=tuple(float(b) for b in block.get("b_coeff", (0.0, 1.0))),
        omega_convention=str(block.get("omega_convention", "hemisphere")),
    )


def collision_from_config(cfg: dict, base: Path | None = None) -> CollisionSystem:
    """Load the artifact named in cfg['collision']['artifact'] or assemble from the block."""
    block = dict(cfg.get("collision", {}))
    art = block.get("artifact")
    if art:
        p = Path(art)
        if base is not None and not p.is_absolute():
            p = base / p
        if not p.exists():
            raise PreconditionError(f"collision artifact {p} not found")
        return CollisionSystem.load(p)
    return build_collision_system(
        n_max=int(block.get("n_max", 16)),
        l_max=int(block.get("l_max", 6)),
        r_cut=block.get("r_cut"),
        quad_order=block.get("quad_order"),
        params=kernel_params(block),
    )
