"""Run configuration: an INI-style ``key = value`` file with sections.

Every key has a default taken from the named scenario preset, so a file
holding only ``[run]`` / ``scenario = ...`` is valid.  See README for the
schema.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .entropy import DomainError, EntropyLaw, PowerTail
from .fields import PeriodicGrid, PotentialSpec, cached_kernel, kernel_l1

SCHEMA_VERSION = 1

# scenario presets, flat "section.key" -> string value
_TWO_PI = repr(2 * np.pi)
PRESETS: Dict[str, Dict[str, str]] = {
    "acceptance-1d": {
        "grid.dim": "1", "grid.n": "256", "grid.L": "2.0",
        "entropy.m": "2", "entropy.k": "1",
        "interaction.kind": "gaussian", "interaction.amplitude": "-1.0",
        "interaction.width": "0.25", "interaction.C_k": "0.05",
        "confinement.kind": "cosine", "confinement.amplitude": "0.1", "confinement.modes": "1",
        "initial.profile": "bump", "initial.base": "0.5", "initial.amplitude": "1.0",
        "initial.width": "0.4", "initial.velocity": "zero",
        "solver.epsilon": "0.1", "solver.t_end": "0.5",
        "limit.dt_factor": "0.2",
    },
    "acceptance-2d": {
        "grid.dim": "2", "grid.n": "64", "grid.L": _TWO_PI,
        "entropy.m": "2", "entropy.k": "1",
        "interaction.kind": "gaussian", "interaction.amplitude": "-1.0",
        "interaction.width": repr(0.2 * 2 * np.pi), "interaction.C_k": "0.05",
        "confinement.kind": "cosine", "confinement.amplitude": "0.1",
        "confinement.modes": "1, 0",
        "initial.profile": "mixed-modes", "initial.base": "1.0", "initial.a1": "0.3",
        "initial.a2": "0.2", "initial.velocity": "well-prepared",
        "solver.epsilon": "0.2, 0.1, 0.05, 0.025", "solver.t_end": "2.0",
        "limit.dt_factor": "0.05", "limit.dt_max": "0.0005",
    },
    "subsolution-2d": {
        "grid.dim": "2", "grid.n": "32", "grid.L": repr(np.pi),
        "entropy.m": "2", "entropy.k": "1",
        "interaction.kind": "gaussian", "interaction.amplitude": "-1.0",
        "interaction.width": "0.5", "interaction.C_k": "0.05",
        "confinement.kind": "cosine", "confinement.amplitude": "0.1", "confinement.modes": "1, 0",
        "initial.profile": "decaying-mode", "initial.base": "1.0", "initial.amplitude": "0.3",
        "initial.swirl": "0.2", "initial.strain": "0.1", "initial.velocity": "zero",
        "solver.epsilon": "1.0", "solver.t_end": "0.5",
    },
}

# keys common to all presets
_COMMON = {
    "solver.cfl": "0.45", "solver.snapshot_stride": "1", "solver.rho_floor": "1e-10",
    "solver.scheme": "relaxation", "solver.dt_eps_factor": "0.5",
    "limit.dt_factor": "0.2", "limit.dt_max": "",
    "entropy.tail_coef": "", "entropy.tail_exponent": "", "entropy.A": "",
    "confinement.width": "0.2", "interaction.modes": "1",
    "output.directory": "out", "output.format": "csv", "output.snapshots": "final",
    "checks.seed": "0", "checks.samples": "100000", "checks.entropy_samples": "10000",
}

SECTIONS = ("run", "grid", "entropy", "interaction", "confinement", "initial", "solver",
            "limit", "output", "checks")


class ConfigParseError(ValueError):
    def __init__(self, message, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line, self.column = line, column


class ConfigError(ValueError):
    """Validation failure; ``violations`` holds ``(rule_id, message)`` pairs."""

    def __init__(self, violations: List[Tuple[str, str]]):
        super().__init__("; ".join(f"[{r}] {m}" for r, m in violations))
        self.violations = violations


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    grid: PeriodicGrid
    law: EntropyLaw
    K: PotentialSpec
    Phi: PotentialSpec
    C_k: float
    initial: Dict[str, object]
    epsilons: Tuple[float, ...]
    cfl: float = 0.45
    t_end: float = 1.0
    snapshot_stride: int = 1
    rho_floor: float = 1e-10
    scheme: str = "relaxation"
    dt_eps_factor: float = 0.5
    limit_dt_factor: float = 0.2
    limit_dt_max: Optional[float] = None
    out_dir: Path = Path("out")
    snapshot_format: str = "csv"
    snapshots: str = "final"
    seed: int = 0
    samples: int = 100000
    entropy_samples: int = 10000
    schema: int = SCHEMA_VERSION
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def epsilon(self) -> float:
        return self.epsilons[0]

    def euler_config(self, eps: Optional[float] = None):
        from .hyperbolic import EulerConfig

        return EulerConfig(self.epsilon if eps is None else eps, self.law, self.K, self.Phi,
                           self.C_k, cfl=self.cfl, t_end=self.t_end,
                           snapshot_stride=self.snapshot_stride, rho_floor=self.rho_floor,
                           scheme=self.scheme, dt_eps_factor=self.dt_eps_factor)

    def with_out(self, out_dir) -> "RunConfig":
        return replace(self, out_dir=Path(out_dir))

    def echo(self) -> List[str]:
        """Resolved settings as ``key = value`` lines (for the report)."""
        g = self.grid
        return [
            f"scenario = {self.scenario}", f"schema = {self.schema}",
            f"grid = dim {g.dim}, n {g.n}, L {g.L!r}",
            f"entropy = {self.law.to_dict()}",
            f"interaction = {self.K.to_dict()}, C_k {self.C_k!r}",
            f"confinement = {self.Phi.to_dict()}",
            f"initial = {dict(sorted(self.initial.items()))}",
            f"epsilons = {list(self.epsilons)}",
            f"solver = cfl {self.cfl!r}, t_end {self.t_end!r}, stride {self.snapshot_stride}, "
            f"rho_floor {self.rho_floor!r}, scheme {self.scheme}",
            f"limit = dt_factor {self.limit_dt_factor!r}, dt_max {self.limit_dt_max!r}",
            f"seed = {self.seed}",
        ]


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(float(tok) for tok in s.replace(",", " ").split())


def _ints(s: str) -> Tuple[int, ...]:
    return tuple(int(tok) for tok in s.replace(",", " ").split())


def parse_text(text: str) -> Dict[str, str]:
    """Flatten the file to ``section.key -> value``; raises ConfigParseError."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep "L" and "C_k" as written
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("key outside any [section]", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigParseError(f"cannot parse {line!r}", lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigParseError(f"duplicate key {exc.option!r}", exc.lineno or 0, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigParseError(f"duplicate section {exc.section!r}", exc.lineno or 0, 1) from None
    flat = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigParseError(f"unknown section [{sec}]", _find_line(text, f"[{sec}]"), 1)
        for key, val in cp.items(sec):
            flat[f"{sec}.{key}"] = val.strip()
    return flat


def _find_line(text, needle):
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return 0


def _potential(kv, sec) -> PotentialSpec:
    kind = kv[f"{sec}.kind"]
    return PotentialSpec(kind, float(kv.get(f"{sec}.amplitude", "1.0")),
                         float(kv.get(f"{sec}.width", "0.2")), _ints(kv.get(f"{sec}.modes", "1")))


_INITIAL_FLOATS = ("base", "amplitude", "width", "a1", "a2", "swirl", "strain")


def build_config(kv: Dict[str, str]) -> RunConfig:
    """Merge preset defaults with ``kv`` and validate."""
    scenario = kv.get("run.scenario", "acceptance-1d")
    if scenario not in PRESETS:
        raise ConfigError([("scenario", f"unknown scenario {scenario!r}; "
                                        f"choose from {sorted(PRESETS)}")])
    schema = int(kv.get("run.schema", SCHEMA_VERSION))
    if schema != SCHEMA_VERSION:
        raise ConfigError([("schema", f"schema {schema} not supported (expected {SCHEMA_VERSION})")])
    merged = dict(_COMMON)
    merged.update(PRESETS[scenario])
    merged.update({k: v for k, v in kv.items() if k not in ("run.scenario", "run.schema")})
    known = set(_COMMON) | set().union(*(set(p) for p in PRESETS.values()))
    known |= {f"initial.{k}" for k in _INITIAL_FLOATS}
    bad = sorted(set(merged) - known)
    if bad:
        raise ConfigError([("unknown-key", f"unknown keys {bad}")])

    violations: List[Tuple[str, str]] = []
    try:
        dim, n, L = int(merged["grid.dim"]), int(merged["grid.n"]), float(merged["grid.L"])
        eps = _floats(merged["solver.epsilon"])
        cfl = float(merged["solver.cfl"])
        t_end = float(merged["solver.t_end"])
        floor = float(merged["solver.rho_floor"])
        stride = int(merged["solver.snapshot_stride"])
        m, k = float(merged["entropy.m"]), float(merged["entropy.k"])
        C_k = float(merged["interaction.C_k"])
        lim_f = float(merged["limit.dt_factor"])
        lim_max = float(merged["limit.dt_max"]) if merged["limit.dt_max"] else None
        seed = int(merged["checks.seed"])
        samples = int(merged["checks.samples"])
        ent_samples = int(merged["checks.entropy_samples"])
        dt_eps = float(merged["solver.dt_eps_factor"])
        initial = {key.split(".", 1)[1]: (float(v) if key.split(".", 1)[1] in _INITIAL_FLOATS else v)
                   for key, v in merged.items() if key.startswith("initial.")}
    except ValueError as exc:
        raise ConfigError([("type", str(exc))]) from None

    if dim not in (1, 2, 3):
        violations.append(("positivity", f"grid.dim must be 1, 2 or 3, got {dim}"))
    if n < 4:
        violations.append(("positivity", f"grid.n must be >= 4, got {n}"))
    if not L > 0:
        violations.append(("positivity", f"grid.L must be positive, got {L}"))
    if not eps or any(not e > 0 for e in eps):
        violations.append(("epsilon-positive", f"every epsilon must be > 0, got {list(eps)}"))
    if not 0 < cfl <= 1:
        violations.append(("cfl", f"solver.cfl must lie in (0, 1], got {cfl}"))
    if t_end < 0:
        violations.append(("positivity", f"solver.t_end must be >= 0, got {t_end}"))
    if not floor > 0:
        violations.append(("positivity", f"solver.rho_floor must be positive, got {floor}"))
    if stride < 1:
        violations.append(("positivity", "solver.snapshot_stride must be >= 1"))
    if C_k < 0:
        violations.append(("positivity", f"interaction.C_k must be >= 0, got {C_k}"))
    if merged["solver.scheme"] not in ("relaxation", "rusanov"):
        violations.append(("scheme", f"unknown scheme {merged['solver.scheme']!r}"))
    if merged["output.format"] not in ("csv", "bin"):
        violations.append(("format", "output.format must be csv or bin"))
    if merged["output.snapshots"] not in ("none", "final", "all"):
        violations.append(("format", "output.snapshots must be none, final or all"))
    if initial.get("velocity") not in ("zero", "well-prepared"):
        violations.append(("initial", "initial.velocity must be zero or well-prepared"))
    if initial.get("profile") not in ("bump", "mixed-modes", "decaying-mode"):
        violations.append(("initial", f"unknown initial.profile {initial.get('profile')!r}"))

    law = None
    try:
        tail = None
        if merged["entropy.tail_coef"]:
            tail = PowerTail(float(merged["entropy.tail_coef"]),
                             float(merged["entropy.tail_exponent"]))
        A = float(merged["entropy.A"]) if merged["entropy.A"] else None
        law = EntropyLaw(m, k, tail, A)
    except (DomainError, ValueError) as exc:
        violations.append(("entropy", str(exc)))
    try:
        K = _potential(merged, "interaction")
        Phi = _potential(merged, "confinement")
    except ValueError as exc:
        violations.append(("potential", str(exc)))
    if violations:
        raise ConfigError(violations)

    grid = PeriodicGrid(dim, n, L)
    warnings: List[str] = []
    if dim >= 2 and m < 2 - 2 / dim:
        warnings.append(f"restrict-m: m < 2−2/d (m={m!r}, d={dim})")
    if C_k > 0 and K.kind != "zero":
        kl1 = kernel_l1(grid, cached_kernel(K, grid))
        # Young bound on the interaction ratio, sharp-ish for m = 2
        c_star = kl1 / k
        if C_k * c_star >= 2:
            warnings.append(f"smallness: C_k*||K||_1/k = {C_k * c_star:.3g} >= 2; "
                            "coercivity of the modulated energy is not guaranteed")

    return RunConfig(
        scenario=scenario, grid=grid, law=law, K=K, Phi=Phi, C_k=C_k, initial=initial,
        epsilons=eps, cfl=cfl, t_end=t_end, snapshot_stride=stride, rho_floor=floor,
        scheme=merged["solver.scheme"], dt_eps_factor=dt_eps, limit_dt_factor=lim_f,
        limit_dt_max=lim_max, out_dir=Path(merged["output.directory"]),
        snapshot_format=merged["output.format"], snapshots=merged["output.snapshots"],
        seed=seed, samples=samples, entropy_samples=ent_samples, schema=schema,
        warnings=tuple(warnings))


def load_config(path) -> RunConfig:
    path = Path(path)
    return build_config(parse_text(path.read_text()))


def default_config(scenario: str = "acceptance-1d", **overrides: str) -> RunConfig:
    """Preset config; ``overrides`` use ``section__key`` names."""
    kv = {"run.scenario": scenario}
    kv.update({k.replace("__", "."): str(v) for k, v in overrides.items()})
    return build_config(kv)
