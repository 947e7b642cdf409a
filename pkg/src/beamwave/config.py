"""Run configuration, validation and deterministic initial data."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dynamics import SimConfig, read_snapshot_csv
from .lattice import Grid
from .operator import CutoffSpec
from .resonance import BroadeningKernel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitSpec:
    kind: str = "random_uniform"
    base: float = 2500.0
    amplitude: float = 5000.0
    seed: int = 1
    path: str | None = None


@dataclass(frozen=True)
class SimSection:
    dt: float | None = None
    t_end: float = 200.0
    integrator: str = "rk4"
    positivity_mode: str = "halve_step"
    snapshot_every: int = 50
    cutoff_N: float | None = None
    energy_projection: bool = False
    conservation_rel: float = 1e-6
    entropy_backstep: float = 1e-10


@dataclass(frozen=True)
class EquilibriumSection:
    kinds: tuple = ("classical",)
    # optional explicit invariants: [{"region_id": r, "E": e, "M": [mx, my, mz]}, ...]
    invariants: tuple | None = None


@dataclass(frozen=True)
class IndicesSection:
    n_points: int = 20
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    omega0: float = 2.5
    allow_any_omega0: bool = False
    D: int = 6
    theta: float = 0.1
    kernel_shape: str = "gaussian"
    cutoff_multiple: float | None = None
    c_K: float = 1.0
    init: InitSpec = field(default_factory=InitSpec)
    sim: SimSection = field(default_factory=SimSection)
    equilibrium: EquilibriumSection = field(default_factory=EquilibriumSection)
    indices: IndicesSection = field(default_factory=IndicesSection)
    output_dir: str = "out"
    cache_dir: str | None = None

    # -- derived objects -------------------------------------------------
    def grid(self) -> Grid:
        return Grid(self.D, self.omega0, self.allow_any_omega0)

    def kernel(self) -> BroadeningKernel:
        return BroadeningKernel(self.theta, self.kernel_shape, self.cutoff_multiple)

    def sim_config(self) -> SimConfig:
        s = self.sim
        cutoff = CutoffSpec(s.cutoff_N) if s.cutoff_N is not None else None
        return SimConfig(dt=s.dt, t_end=s.t_end, integrator=s.integrator,
                         positivity_mode=s.positivity_mode, snapshot_every=s.snapshot_every,
                         cutoff=cutoff, conservation_rel=s.conservation_rel,
                         entropy_backstep=s.entropy_backstep,
                         energy_projection=s.energy_projection)

    def validate(self) -> "RunConfig":
        """Check every precondition before any compute; raises ConfigError."""
        try:
            self.grid()
            self.kernel().check_margin(self.omega0)
            self.sim_config()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.c_K not in (1.0, 8.0):
            raise ConfigError("c_K must be 1 or 8")
        if self.init.kind not in ("constant", "random_uniform", "file"):
            raise ConfigError(f"unknown init kind {self.init.kind!r}")
        if self.init.kind == "file" and not self.init.path:
            raise ConfigError("init.kind=file needs init.path")
        if self.init.kind != "file" and (self.init.base < 0 or self.init.amplitude < 0):
            raise ConfigError("init base and amplitude must be nonnegative")
        for k in self.equilibrium.kinds:
            if k not in ("classical", "quantized"):
                raise ConfigError(f"unknown equilibrium kind {k!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, prefix=""):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        sub = _SECTIONS.get(key) if cls is RunConfig else None
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix + key} must be an object")
            value = _build(sub, value, prefix + key + ".")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


_SECTIONS = {"init": InitSpec, "sim": SimSection, "equilibrium": EquilibriumSection,
             "indices": IndicesSection}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def config_from_dict(data: dict, overrides=()) -> RunConfig:
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}")
        node[parts[-1]] = _parse_value(text)
    try:
        return _build(RunConfig, data)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def load_config(path=None, overrides=()) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"config is not valid JSON: {err}") from None
    return config_from_dict(data, overrides)


def canonical_json(cfg: RunConfig) -> str:
    def clean(x):
        if isinstance(x, float) and math.isinf(x):
            return "inf"
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x
    data = cfg.to_dict()
    # the echo lives inside output_dir; leaving it out keeps reruns comparable
    data.pop("output_dir")
    return json.dumps(clean(data), sort_keys=True, indent=2) + "\n"


# -- initial data --------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of a splitmix64 generator seeded with ``seed``."""
    with np.errstate(over="ignore"):
        state = np.uint64(seed & _MASK64) + np.uint64(_GOLDEN) * np.arange(
            1, count + 1, dtype=np.uint64)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def uniform_from_seed(seed: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) from the top 53 bits of splitmix64 outputs."""
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def make_initial(grid: Grid, init: InitSpec, require_positive: bool = False) -> np.ndarray:
    if init.kind == "constant":
        f = np.full(grid.size, float(init.base))
    elif init.kind == "random_uniform":
        f = init.base + init.amplitude * uniform_from_seed(init.seed, grid.size)
    elif init.kind == "file":
        f = read_snapshot_csv(grid, init.path)
    else:
        raise ConfigError(f"unknown init kind {init.kind!r}")
    if np.min(f) < 0 or (require_positive and np.min(f) <= 0):
        raise ConfigError("initial field violates positivity")
    return f

