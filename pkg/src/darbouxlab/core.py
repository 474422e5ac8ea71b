"""Grids, sampled functions, the potential catalog and the finite-difference toolbox.

Units are hbar = 2m = 1 throughout, so the operator is ``-D^2 + u``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainMismatchError,
    InvalidBoundsError,
    ZeroCrossingError,
)

#: acceptance comparisons skip this many points at each edge
EDGE = 5

ANALYTIC_RTOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform 1D lattice ``x_i = x_min + i * spacing``."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise InvalidBoundsError("grid bounds must be finite", operation="make_grid")
        if not self.x_min < self.x_max:
            raise InvalidBoundsError(
                f"need x_min < x_max, got ({self.x_min}, {self.x_max})", operation="make_grid"
            )
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise InvalidBoundsError(
                f"need n_points >= 3, got {self.n_points}", operation="make_grid"
            )
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        x = self.x_min + np.arange(self.n_points) * self.spacing
        x.setflags(write=False)
        return x

    def interior(self, edge: int = EDGE) -> slice:
        return slice(edge, self.n_points - edge)

    def index_of(self, x0: float) -> int:
        """Index of the grid point nearest to ``x0``."""
        i = int(round((x0 - self.x_min) / self.spacing))
        return min(max(i, 0), self.n_points - 1)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}

    def mirrored(self) -> "Grid":
        return Grid(-self.x_max, -self.x_min, self.n_points)


def make_grid(x_min: float, x_max: float, n_points: int) -> Grid:
    return Grid(x_min, x_max, n_points)


def default_grid(half_line: bool = False) -> Grid:
    return Grid(0.0, 30.0, 3001) if half_line else Grid(-15.0, 15.0, 3001)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Samples of a real or complex function on a :class:`Grid`.

    ``analytic`` is an optional closed-form evaluator; when given, the samples
    are checked against it at construction.
    """

    grid: Grid
    values: np.ndarray
    analytic: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if vals.ndim != 1 or vals.shape[0] != self.grid.n_points:
            raise ValueError(
                f"values has shape {vals.shape}, grid has {self.grid.n_points} points"
            )
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.analytic is not None:
            ref = np.asarray(self.analytic(self.grid.x))
            with np.errstate(invalid="ignore"):
                bad = np.abs(vals - ref) > ANALYTIC_RTOL * (1 + np.abs(ref))
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValueError(f"samples disagree with analytic evaluator at index {i}")

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable, label: str = "") -> "SampledFunction":
        return cls(grid, fn(grid.x), analytic=fn, label=label)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def with_values(self, values, label: str | None = None) -> "SampledFunction":
        return SampledFunction(self.grid, values, label=self.label if label is None else label)

    def __call__(self, x0: float):
        """Linear interpolation, mostly for diagnostics."""
        if self.is_complex:
            return np.interp(x0, self.x, self.values.real) + 1j * np.interp(
                x0, self.x, self.values.imag
            )
        return np.interp(x0, self.x, self.values)

    def interior(self, edge: int = EDGE) -> np.ndarray:
        return self.values[self.grid.interior(edge)]

    def sup_distance(self, other: "SampledFunction", edge: int = EDGE) -> float:
        return float(np.max(np.abs(self.interior(edge) - other.interior(edge))))

    # -- serialization -------------------------------------------------------
    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.is_complex:
            w.writerow(["x", "re", "im"])
            for xi, v in zip(self.x, self.values):
                w.writerow([repr(float(xi)), repr(float(v.real)), repr(float(v.imag))])
        else:
            w.writerow(["x", "value"])
            for xi, v in zip(self.x, self.values):
                w.writerow([repr(float(xi)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "SampledFunction":
        text = Path(source).read_text() if _looks_like_path(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        x = body[:, 0]
        grid = Grid(x[0], x[-1], len(x))
        if len(header) == 3:
            return cls(grid, body[:, 1] + 1j * body[:, 2])
        return cls(grid, body[:, 1])

    def to_json(self) -> str:
        if self.is_complex:
            vals = [[float(v.real), float(v.imag)] for v in self.values]
        else:
            vals = [float(v) for v in self.values]
        return json.dumps({"grid": self.grid.to_dict(), "values": vals})

    @classmethod
    def from_json(cls, text: str) -> "SampledFunction":
        doc = json.loads(text)
        grid = Grid(**doc["grid"])
        vals = doc["values"]
        if vals and isinstance(vals[0], list):
            arr = np.array(vals, dtype=float)
            return cls(grid, arr[:, 0] + 1j * arr[:, 1])
        return cls(grid, np.array(vals, dtype=float))


def _looks_like_path(source) -> bool:
    return isinstance(source, Path) or ("\n" not in str(source) and Path(str(source)).exists())


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# -- potential catalog -------------------------------------------------------


class PotentialKind(str, Enum):
    FREE = "free"
    HARMONIC = "harmonic"
    POSCHL_TELLER = "poschl_teller"
    CUSTOM_SAMPLED = "custom_sampled"


class DomainCut(str, Enum):
    FULL_LINE = "full_line"
    HALF_LINE = "half_line"


_REQUIRED_PARAMS = {
    PotentialKind.FREE: set(),
    PotentialKind.HARMONIC: set(),
    PotentialKind.POSCHL_TELLER: {"ell"},
    PotentialKind.CUSTOM_SAMPLED: set(),
}


@dataclass(frozen=True)
class PotentialSpec:
    """Catalog entry. ``samples`` is only used by the ``custom_sampled`` kind."""

    kind: PotentialKind
    parameters: Mapping[str, float] = field(default_factory=dict)
    domain_cut: DomainCut = DomainCut.FULL_LINE
    samples: SampledFunction | None = None

    def __post_init__(self):
        kind = PotentialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "domain_cut", DomainCut(self.domain_cut))
        params = {str(k): float(v) for k, v in dict(self.parameters).items()}
        object.__setattr__(self, "parameters", params)
        if set(params) != _REQUIRED_PARAMS[kind]:
            raise ValueError(
                f"{kind.value} needs parameters {sorted(_REQUIRED_PARAMS[kind])}, got {sorted(params)}"
            )
        if kind is PotentialKind.CUSTOM_SAMPLED and self.samples is None:
            raise ValueError("custom_sampled potentials need samples")

    @property
    def half_line(self) -> bool:
        return self.domain_cut is DomainCut.HALF_LINE

    def evaluator(self) -> Callable[[np.ndarray], np.ndarray] | None:
        if self.kind is PotentialKind.FREE:
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if self.kind is PotentialKind.HARMONIC:
            return lambda x: np.asarray(x, dtype=float) ** 2
        if self.kind is PotentialKind.POSCHL_TELLER:
            ell = self.parameters["ell"]
            return lambda x: -ell * (ell + 1) / np.cosh(np.asarray(x, dtype=float)) ** 2
        return None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "parameters": dict(sorted(self.parameters.items())),
            "domain_cut": self.domain_cut.value,
        }


def sample_potential(spec: PotentialSpec, grid: Grid) -> SampledFunction:
    if spec.half_line and grid.x_min < 0:
        raise DomainMismatchError(
            f"half-line potential sampled on grid starting at {grid.x_min}",
            operation="sample_potential",
        )
    fn = spec.evaluator()
    if fn is not None:
        return SampledFunction(grid, fn(grid.x), analytic=fn, label=spec.kind.value)
    src = spec.samples
    if src.grid == grid:
        return SampledFunction(grid, src.values, label="custom")
    from scipy.interpolate import CubicSpline

    if grid.x_min < src.grid.x_min or grid.x_max > src.grid.x_max:
        raise DomainMismatchError(
            "target grid extends beyond the custom samples", operation="sample_potential"
        )
    return SampledFunction(grid, CubicSpline(src.x, src.values)(grid.x), label="custom")


# -- quadrature ----------------------------------------------------------------


def cumulative_integral(f: SampledFunction) -> SampledFunction:
    """Running integral from ``x_min`` with F(x_min) = 0.

    Each cell is integrated with the cubic through its four nearest samples,
    which gives the same O(h^4) global accuracy as composite Simpson but at
    every grid point rather than every other one.
    """
    return f.with_values(cumulative_values(f.values, f.grid.spacing), label="")


def cumulative_values(y: np.ndarray, h: float) -> np.ndarray:
    y = np.asarray(y)
    n = y.shape[0]
    inc = np.empty(n - 1, dtype=y.dtype)
    if n == 3:
        inc[0] = h * (5 * y[0] + 8 * y[1] - y[2]) / 12
        inc[1] = h * (-y[0] + 8 * y[1] + 5 * y[2]) / 12
    else:
        inc[0] = h * (9 * y[0] + 19 * y[1] - 5 * y[2] + y[3]) / 24
        inc[-1] = h * (y[-4] - 5 * y[-3] + 19 * y[-2] + 9 * y[-1]) / 24
        inc[1:-1] = h * (-y[:-3] + 13 * y[1:-2] + 13 * y[2:-1] - y[3:]) / 24
    if not np.iscomplexobj(y):
        # keep F monotone for nonnegative integrands with steep exponential tails
        trap = 0.5 * h * (y[:-1] + y[1:])
        bad = (inc < 0) & (y[:-1] >= 0) & (y[1:] >= 0)
        inc[bad] = trap[bad]
    out = np.empty(n, dtype=inc.dtype)
    out[0] = 0
    np.cumsum(inc, out=out[1:])
    return out


def _log_cubic_weights() -> np.ndarray:
    """Lagrange weights of the 4-point cubic at 4 Gauss nodes of each of the three cell slots."""
    t, _ = np.polynomial.legendre.leggauss(4)
    pts = np.arange(4.0)
    out = np.empty((3, 4, 4))
    for o in range(3):
        xi = o + 0.5 * (1 + t)
        for m in range(4):
            others = pts[pts != m]
            out[o, :, m] = np.prod((xi[:, None] - others) / (m - others), axis=1)
    return out


_LOG_CUBIC = _log_cubic_weights()
_GAUSS_W = np.polynomial.legendre.leggauss(4)[1]


def cumulative_positive(y: np.ndarray, h: float) -> np.ndarray:
    """Running integral of a strictly positive integrand, accurate in relative terms.

    Each cell integrates ``exp(p)`` with ``p`` the cubic through four
    neighbouring values of ``ln y`` (4-point Gauss-Legendre inside the cell).
    On exponential or Gaussian tails ``ln y`` is nearly polynomial, so every
    partial integral keeps full relative precision, which plain polynomial
    rules lose where ``y`` varies by orders of magnitude per cell.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 4 or np.any(y <= 0):
        return cumulative_values(y, h)
    g = np.log(y)
    cells = np.arange(n - 1)
    start = np.clip(cells - 1, 0, n - 4)
    slot = cells - start
    stencil = g[start[:, None] + np.arange(4)]  # (n-1, 4)
    p = np.einsum("cjm,cm->cj", _LOG_CUBIC[slot], stencil)
    inc = 0.5 * h * np.exp(p) @ _GAUSS_W
    out = np.empty(n)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def integrate(values: np.ndarray, h: float) -> float | complex:
    return cumulative_values(values, h)[-1]


def norm2(f: SampledFunction) -> float:
    """L2 norm squared, by the same quadrature as :func:`cumulative_integral`."""
    return float(integrate(np.abs(f.values) ** 2, f.grid.spacing).real)


def normalized(f: SampledFunction) -> SampledFunction:
    return f.with_values(f.values / np.sqrt(norm2(f)))


# -- finite differences --------------------------------------------------------


def d1(y: np.ndarray, h: float) -> np.ndarray:
    """First derivative: 5-point centered stencil, 4th-order one-sided at the edges."""
    y = np.asarray(y)
    n = y.shape[-1]
    if n < 5:
        return np.gradient(y, h, axis=-1, edge_order=2)
    out = np.empty_like(y, dtype=np.result_type(y, float))
    out[..., 2:-2] = (y[..., :-4] - 8 * y[..., 1:-3] + 8 * y[..., 3:-1] - y[..., 4:]) / (12 * h)
    out[..., 0] = (-25 * y[..., 0] + 48 * y[..., 1] - 36 * y[..., 2] + 16 * y[..., 3] - 3 * y[..., 4]) / (12 * h)
    out[..., 1] = (-3 * y[..., 0] - 10 * y[..., 1] + 18 * y[..., 2] - 6 * y[..., 3] + y[..., 4]) / (12 * h)
    out[..., -1] = (25 * y[..., -1] - 48 * y[..., -2] + 36 * y[..., -3] - 16 * y[..., -4] + 3 * y[..., -5]) / (12 * h)
    out[..., -2] = (3 * y[..., -1] + 10 * y[..., -2] - 18 * y[..., -3] + 6 * y[..., -4] - y[..., -5]) / (12 * h)
    return out


def d2(y: np.ndarray, h: float) -> np.ndarray:
    """Second derivative: 5-point centered stencil, 4th-order one-sided at the edges."""
    y = np.asarray(y)
    n = y.shape[-1]
    if n < 6:
        return np.gradient(np.gradient(y, h, axis=-1, edge_order=2), h, axis=-1, edge_order=2)
    out = np.empty_like(y, dtype=np.result_type(y, float))
    out[..., 2:-2] = (
        -y[..., :-4] + 16 * y[..., 1:-3] - 30 * y[..., 2:-2] + 16 * y[..., 3:-1] - y[..., 4:]
    ) / (12 * h * h)
    a = (45, -154, 214, -156, 61, -10)
    b = (10, -15, -4, 14, -6, 1)
    out[..., 0] = sum(c * y[..., k] for k, c in enumerate(a)) / (12 * h * h)
    out[..., 1] = sum(c * y[..., k] for k, c in enumerate(b)) / (12 * h * h)
    out[..., -1] = sum(c * y[..., -1 - k] for k, c in enumerate(a)) / (12 * h * h)
    out[..., -2] = sum(c * y[..., -1 - k] for k, c in enumerate(b)) / (12 * h * h)
    return out


def d3(y: np.ndarray, h: float) -> np.ndarray:
    """Third derivative, used only for diagnostics (reality check of TDSE seeds)."""
    y = np.asarray(y)
    out = np.zeros_like(y, dtype=np.result_type(y, float))
    # 6-point centered, 4th order
    out[..., 3:-3] = (
        y[..., :-6] - 8 * y[..., 1:-5] + 13 * y[..., 2:-4] - 13 * y[..., 4:-2] + 8 * y[..., 5:-1] - y[..., 6:]
    ) / (8 * h**3)
    out[..., :3] = out[..., 3:4]
    out[..., -3:] = out[..., -4:-3]
    return out


def derivative(f: SampledFunction, order: int = 1) -> SampledFunction:
    op = {1: d1, 2: d2, 3: d3}[order]
    return f.with_values(op(f.values, f.grid.spacing), label="")


def first_zero_crossing(values: np.ndarray, edge: int = 1, rtol: float = 1e-13) -> int | None:
    """First interior index of a node of ``values``, else None.

    A node is a sign change, an exact zero, or a local minimum of |values|
    far below its neighbours (``rtol`` times the larger value three samples
    away on either side). Monotone exponential tails are not nodes.
    """
    v = np.asarray(values, dtype=float)
    a = np.abs(v)
    scale = np.max(a)
    if scale == 0:
        return edge
    n = len(v)
    idx = np.arange(edge, n - edge)
    flips = idx[:-1][np.sign(v[idx[:-1]]) * np.sign(v[idx[:-1] + 1]) < 0]
    inner = idx[(idx > 0) & (idx < n - 1)]
    far = np.maximum(a[np.clip(inner - 3, 0, n - 1)], a[np.clip(inner + 3, 0, n - 1)])
    dips = inner[
        (a[inner] < rtol * far) & (a[inner] <= a[inner - 1]) & (a[inner] <= a[inner + 1])
    ]
    zeros = idx[v[idx] == 0]
    cand = np.concatenate([flips, dips, zeros])
    if cand.size == 0:
        return None
    i = int(cand.min())
    if i in set(flips.tolist()) and a[i + 1] < a[i]:
        i += 1
    return i


def sign_changes(values: np.ndarray, edge: int = 1) -> list[int]:
    """Interior indices where the sign flips; exact zeros between opposite signs count once."""
    v = np.asarray(values, dtype=float)[edge : len(values) - edge]
    nz = np.flatnonzero(v != 0)
    s = np.sign(v[nz])
    return [int(nz[j]) + edge for j in np.flatnonzero(s[:-1] != s[1:])]


def log_abs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def second_log_derivative(f: SampledFunction, edge: int = 1) -> SampledFunction:
    """D^2 ln f, i.e. f''/f - (f'/f)^2.

    Evaluated as the stencil second derivative of ln|f|, which is algebraically
    the same quantity but stays accurate where f decays like a Gaussian and
    f''/f, (f'/f)^2 individually grow large and cancel.
    """
    if f.is_complex:
        raise TypeError("second_log_derivative needs a real function")
    i = first_zero_crossing(f.values, edge=edge)
    if i is not None:
        raise ZeroCrossingError(
            f"function vanishes or changes sign at index {i} (x={f.x[i]:.6g})",
            index=i,
            operation="second_log_derivative",
        )
    with np.errstate(divide="ignore"):
        g = np.log(np.abs(f.values))
    if not np.all(np.isfinite(g)):
        # only possible at the excluded edge points; extrapolate linearly
        g = _patch_nonfinite(g)
    return f.with_values(d2(g, f.grid.spacing), label="")


def _patch_nonfinite(g: np.ndarray) -> np.ndarray:
    g = g.copy()
    ok = np.isfinite(g)
    idx = np.arange(len(g))
    g[~ok] = np.interp(idx[~ok], idx[ok], g[ok])
    return g


def log_derivative(f: SampledFunction) -> SampledFunction:
    """f'/f computed as the derivative of ln|f| (f must be nodeless)."""
    g = _patch_nonfinite(log_abs(f.values))
    return f.with_values(d1(g, f.grid.spacing), label="")


def apply_hamiltonian(potential: SampledFunction, psi: np.ndarray, energy: float = 0.0) -> np.ndarray:
    """(-D^2 + u - energy) psi with the 5-point stencil."""
    h = potential.grid.spacing
    return -d2(psi, h) + (potential.values - energy) * psi


def residual(potential: SampledFunction, psi: SampledFunction, energy: float, edge: int = EDGE) -> float:
    """Sup-norm of the Schrodinger residual on the interior, relative to sup|psi|."""
    r = apply_hamiltonian(potential, psi.values, energy)
    sl = potential.grid.interior(edge)
    return float(np.max(np.abs(r[sl])) / np.max(np.abs(psi.values[sl])))


# -- provenance ------------------------------------------------------------------

STEP_KINDS = (
    "darboux",
    "inverse_darboux",
    "crum",
    "ddgr",
    "pursey",
    "abraham_moses",
    "tdse_forward",
    "tdse_inverse",
)


@dataclass(frozen=True)
class TransformStep:
    step_kind: str
    seed_ids: tuple[str, ...] = ()
    factorization_energy: float | None = None
    family_parameter: float | None = None
    factorization_energies: tuple[float, ...] = ()

    def __post_init__(self):
        if self.step_kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.step_kind!r}")
        object.__setattr__(self, "seed_ids", tuple(self.seed_ids))
        object.__setattr__(self, "factorization_energies", tuple(float(e) for e in self.factorization_energies))

    def to_dict(self) -> dict:
        d = {"step_kind": self.step_kind, "seed_ids": list(self.seed_ids)}
        if self.factorization_energy is not None:
            d["factorization_energy"] = self.factorization_energy
        if self.factorization_energies:
            d["factorization_energies"] = list(self.factorization_energies)
        if self.family_parameter is not None:
            d["family_parameter"] = self.family_parameter
        return d


@dataclass(frozen=True, eq=False)
class TransformRecord:
    """Append-only chain of transform steps starting from a root potential.

    Seed functions are kept by id in ``seeds`` so that the chain can be
    replayed (see :func:`darbouxlab.darboux.replay`).
    """

    root: str = "custom"
    steps: tuple[TransformStep, ...] = ()
    seeds: Mapping[str, SampledFunction] = field(default_factory=dict)

    def extended(self, step: TransformStep, **seeds: SampledFunction) -> "TransformRecord":
        missing = [s for s in step.seed_ids if s not in seeds and s not in self.seeds]
        if missing:
            raise ValueError(f"seeds {missing} not supplied")
        return TransformRecord(self.root, self.steps + (step,), {**self.seeds, **seeds})

    def to_dict(self) -> dict:
        return {"root": self.root, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
