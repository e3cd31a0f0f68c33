"""Run configuration: parsing, canonical hashing, and the result cache.

Configs are nested key-value documents (YAML).  The cache key is the SHA-256
of the canonical JSON serialization (sorted keys, fixed separators) of every
block that affects the numbers; output paths and cache control flags are
excluded, so identical work is recognized regardless of where results go.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .ensemble import ConfigurationSets, build_sets, load_matrix
from .estimator import EvalSettings
from .models import ModelSpec, generate_sets
from .schedule import LiftingSchedule
from .stationarize import SolverOptions

_NON_HASHED_KEYS = {"output", "cache"}


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a key-value document")
    return cfg


def canonical_json(config: dict) -> str:
    hashed = {k: v for k, v in config.items() if k not in _NON_HASHED_KEYS}
    return json.dumps(hashed, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _require(config: dict, key: str) -> dict:
    if key not in config:
        raise ValueError(f"config block {key!r} is required")
    return config[key]


def parse_schedule(config: dict) -> LiftingSchedule:
    block = _require(config, "schedule")
    return LiftingSchedule(r=int(block["r"]), m=block["m"], p=block["p"], q=block["q"])


def parse_settings(config: dict, seed_override: int | None = None) -> EvalSettings:
    block = _require(config, "settings")
    seed = seed_override if seed_override is not None else config.get("seed")
    if seed is None:
        raise ValueError("a seed is mandatory (config key 'seed' or --seed)")
    samples = block["samples"]
    # samples are written outermost first in configs (outer draws, then
    # levels r down to 1); internally they are stored innermost first
    return EvalSettings(
        t=float(block.get("t", 1.0)),
        beta=float(block["beta"]),
        s=float(block["s"]),
        samples=tuple(reversed([int(v) for v in samples])),
        seed=int(seed),
        mode=block.get("mode", "monte-carlo"),
        budget=int(block.get("budget", 10_000_000)),
    )


def parse_solver(config: dict) -> SolverOptions:
    block = config.get("solver", {})
    return SolverOptions(
        tol=float(block.get("tol", 1e-3)),
        max_iter=int(block.get("max_iter", 200)),
        damping=float(block.get("damping", 0.5)),
        starts=int(block.get("starts", 3)),
        fd_step=float(block.get("fd_step", 1e-3)),
        threads=int(block.get("threads", 1)),
    )


def parse_model(config: dict) -> ModelSpec:
    block = _require(config, "model")
    return ModelSpec(
        family=block["family"],
        n=int(block["n"]),
        m=int(block["m"]),
        samples=int(block.get("samples", 64)),
        seed=int(block.get("seed", config.get("seed", 0))),
    )


def _rows_from_spec(spec: dict, rng_seed: int) -> np.ndarray:
    if "file" in spec:
        return load_matrix(spec["file"])
    if "rows" in spec:
        return np.asarray(spec["rows"], dtype=np.float64)
    rng = np.random.default_rng(int(spec.get("seed", rng_seed)))
    if "hypercube" in spec:
        from .models import _hypercube_rows
        return _hypercube_rows(int(spec["hypercube"]["n"]))
    if "sphere" in spec:
        from .models import _sphere_rows
        blk = spec["sphere"]
        return _sphere_rows(int(blk["dim"]), int(blk["count"]), rng)
    if "orthant" in spec:
        from .models import _orthant_rows
        blk = spec["orthant"]
        return _orthant_rows(int(blk["dim"]), int(blk["count"]), rng)
    raise ValueError(f"unrecognized set generator spec: {sorted(spec)}")


def parse_sets(config: dict) -> ConfigurationSets:
    if "model" in config:
        return generate_sets(parse_model(config))
    block = _require(config, "sets")
    seed = int(config.get("seed", 0))
    return build_sets(_rows_from_spec(block["x"], seed), _rows_from_spec(block["y"], seed + 1))


# --------------------------------------------------------------------------- #
# result records and cache
# --------------------------------------------------------------------------- #

def make_record(command: str, config: dict, seed: int, value, std_error, n_outer,
                runtime_s: float, passed: bool, extra: dict | None = None) -> dict:
    record = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": int(seed),
        "value": None if value is None else float(value),
        "std_error": None if std_error is None else float(std_error),
        "n_outer": None if n_outer is None else int(n_outer),
        "runtime_s": float(runtime_s),
        "passed": bool(passed),
        "inputs": {k: v for k, v in config.items() if k not in _NON_HASHED_KEYS},
    }
    if extra:
        record["extra"] = extra
    return record


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so records round-trip via json."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass
class ResultCache:
    directory: Path

    def path_for(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def lookup(self, digest: str):
        """Stored record for the digest, or None on miss or corrupt record."""
        path = self.path_for(digest)
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except (json.JSONDecodeError, OSError) as exc:
            print(f"warning: corrupt cache record {path}: {exc}; treating as miss")
            return None

    def store(self, digest: str, record: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self.path_for(digest), "w", encoding="utf-8") as fh:
            json.dump(record, fh)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
