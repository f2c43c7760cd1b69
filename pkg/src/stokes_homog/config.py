"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored. Keys and their defaults:

=================  ===========  ===========================================
key                default      meaning
=================  ===========  ===========================================
preset             (required)   coefficient preset name
c, kappa, beta, s               preset parameters, as the preset requires
n_cell             64           cell lattice size, a power of two
cell_tol           1e-10        cell CG relative tolerance
cell_max_iter      10 n_cell²   cell CG iteration cap
n                  (required)   staggered grid cells per edge
T                  1.0          final time
M                  64           implicit Euler steps, at least 8
eps                (required)   comma list of fractions or decimals
forcing            standard     standard, steady, gradient or zero
out                .            output directory
stride             0            snapshot stride, 0 for the final state only
stokes_tol         1e-12        Uzawa CG relative tolerance
velocity_solver    direct       direct or cg
=================  ===========  ===========================================

Every ``ε`` must satisfy ``ε n ∈ 16ℤ`` so the oscillation is resolved with a
grid-commensurate phase.
"""
import dataclasses
import os
from fractions import Fraction
from typing import Optional, Tuple

from .cell import CellSolveConfig
from .coeff import PRESETS, make_preset
from .exceptions import ConfigError, StokesHomogException
from .mac import MacGrid
from .stokes import FORCINGS, VELOCITY_SOLVERS, Forcing, StokesConfig

RESONANCE = 16
PARAM_KEYS = ("c", "kappa", "beta", "s")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    preset: str
    n: int
    eps: Tuple[Fraction, ...]
    c: Optional[float] = None
    kappa: Optional[float] = None
    beta: Optional[float] = None
    s: Optional[float] = None
    n_cell: int = 64
    cell_tol: float = 1e-10
    cell_max_iter: Optional[int] = None
    T: float = 1.0
    M: int = 64
    forcing: str = "standard"
    out: str = "."
    stride: int = 0
    stokes_tol: float = 1e-12
    velocity_solver: str = "direct"

    @property
    def params(self):
        return tuple(getattr(self, name) for name in PRESETS[self.preset][0])

    def coefficient(self):
        return make_preset(self.preset, self.params)

    def cell_config(self):
        return CellSolveConfig(self.n_cell, self.cell_tol, self.cell_max_iter)

    def stokes_config(self):
        return StokesConfig(self.stokes_tol, velocity_solver=self.velocity_solver)

    def grid(self):
        return MacGrid(self.n)

    def make_forcing(self):
        return Forcing(self.forcing)

    def sorted_eps(self):
        """The ``ε`` list, strictly decreasing."""
        return tuple(sorted(self.eps, reverse=True))

    def replace(self, **changes):
        rv = dataclasses.replace(self, **changes)
        problems = _validate(rv)
        if problems:
            raise ConfigError(problems)
        return rv


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
REQUIRED = tuple(
    f.name
    for f in dataclasses.fields(RunConfig)
    if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
)
INT_KEYS = ("n", "n_cell", "cell_max_iter", "M", "stride")
FLOAT_KEYS = ("c", "kappa", "beta", "s", "cell_tol", "T", "stokes_tol")


def parse_fraction(text):
    """``"1/8"`` or ``"0.125"`` as an exact :class:`~fractions.Fraction`."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError("not a fraction or decimal: {!r}".format(text))


def check_resonance(eps, n):
    """Return a problem message unless ``0 < ε < 1`` and ``ε n`` is a multiple of 16."""
    eps = Fraction(eps)
    if not 0 < eps < 1:
        return "eps must lie in (0, 1), got {}".format(eps)
    cells = eps * n
    if cells.denominator != 1 or cells.numerator % RESONANCE:
        return "eps={} with n={} violates the resonance guard: eps*n = {} is not a multiple of {}".format(
            eps, n, cells, RESONANCE
        )


def _convert(key, text):
    if key in INT_KEYS:
        return int(text)
    if key in FLOAT_KEYS:
        return float(text)
    if key == "eps":
        values = tuple(parse_fraction(part) for part in text.split(",") if part.strip())
        if not values:
            raise ValueError("empty list")
        return values
    return text


def _validate(cfg):
    problems = []
    if cfg.preset not in PRESETS:
        problems.append(
            "preset must be one of {}, got {!r}".format(", ".join(PRESETS), cfg.preset)
        )
    else:
        names = PRESETS[cfg.preset][0]
        for key in PARAM_KEYS:
            value = getattr(cfg, key)
            if key in names and value is None:
                problems.append("preset {} needs parameter {}".format(cfg.preset, key))
            elif key not in names and value is not None:
                problems.append("parameter {} is not used by preset {}".format(key, cfg.preset))
        if not any(p.startswith("preset ") for p in problems):
            try:
                cfg.coefficient()
            except StokesHomogException as e:
                problems.append(str(e))
    if cfg.n_cell < 4 or cfg.n_cell & (cfg.n_cell - 1):
        problems.append("n_cell must be a power of two >= 4, got {}".format(cfg.n_cell))
    if not cfg.cell_tol > 0:
        problems.append("cell_tol must be positive, got {}".format(cfg.cell_tol))
    if cfg.cell_max_iter is not None and cfg.cell_max_iter < 1:
        problems.append("cell_max_iter must be positive, got {}".format(cfg.cell_max_iter))
    if cfg.n < 8:
        problems.append("n must be at least 8, got {}".format(cfg.n))
    if not cfg.T > 0:
        problems.append("T must be positive, got {}".format(cfg.T))
    if cfg.M < 8:
        problems.append("M must be at least 8, got {}".format(cfg.M))
    if len(set(cfg.eps)) != len(cfg.eps):
        problems.append("eps values must be distinct")
    for eps in cfg.eps:
        problem = check_resonance(eps, cfg.n)
        if problem:
            problems.append(problem)
    if cfg.forcing not in FORCINGS:
        problems.append(
            "forcing must be one of {}, got {!r}".format(", ".join(FORCINGS), cfg.forcing)
        )
    if cfg.stride < 0:
        problems.append("stride must be >= 0, got {}".format(cfg.stride))
    if not cfg.stokes_tol > 0:
        problems.append("stokes_tol must be positive, got {}".format(cfg.stokes_tol))
    if cfg.velocity_solver not in VELOCITY_SOLVERS:
        problems.append(
            "velocity_solver must be one of {}, got {!r}".format(
                ", ".join(VELOCITY_SOLVERS), cfg.velocity_solver
            )
        )
    return problems


def parse_config(text):
    """Parse and validate a configuration text.

    :return: A :class:`RunConfig`.
    :raises ConfigError: Listing every problem found, not only the first.
    """
    problems = []
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append("line {}: expected key = value, got {!r}".format(lineno, raw))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FIELDS:
            problems.append("line {}: unknown key {!r}".format(lineno, key))
            continue
        if key in seen:
            problems.append(
                "line {}: duplicate key {!r}, first set on line {}".format(
                    lineno, key, seen[key]
                )
            )
            continue
        seen[key] = lineno
        try:
            values[key] = _convert(key, value)
        except ValueError as e:
            problems.append("line {}: bad value for {}: {}".format(lineno, key, e))
    for key in REQUIRED:
        if key not in seen:
            problems.append("missing required key {!r}".format(key))
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**values)
    problems = _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg):
    """The text form of ``cfg``; :func:`parse_config` inverts it exactly."""
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        lines.append("{} = {}".format(f.name, _format_value(value)))
    return "\n".join(lines) + "\n"


def load_config(path):
    """Read and parse a configuration file.

    :raises ConfigError: The file cannot be read or does not validate.
    """
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config {}: {}".format(path, e.strerror))
    return parse_config(text)


def sweep_threads():
    """Worker cap of the sweep pool, from ``STOKES_HOMOG_THREADS``."""
    value = os.environ.get("STOKES_HOMOG_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError("STOKES_HOMOG_THREADS must be an integer, got {!r}".format(value))
    return os.cpu_count() or 1
