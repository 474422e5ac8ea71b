"""Darboux transforms of the time-dependent Schrodinger equation ``i psi_t = -psi_xx + V psi``.

A seed ``chi(x, t)`` with ``exp(-chi)`` solving the ``V0`` equation and a
positive ``L1(t)`` give the intertwiner ``T = L1 (D + chi_x)`` and

    V1 = V0 + 2 chi_xx + i (log L1)_t.

The module also carries a Crank-Nicolson propagator used to produce and
check solutions, and the inverse map back to the ``V0`` equation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import (
    EDGE,
    Grid,
    SampledFunction,
    atomic_write_text,
    cumulative_values,
    d1,
    d2,
    d3,
)
from .errors import NormDriftError, QuadratureDivergenceError, RealityViolationError, TdseError

STEP_TOL = 1e-12
NORM_STEP_TOL = 1e-10
NORM_TOTAL_TOL = 1e-8
REALITY_TOL = 1e-5
#: largest Crank-Nicolson-centred residual of exp(-chi) accepted as a seed
SEED_TOL = 1e-4
#: default accuracy rule for internal Crank-Nicolson substeps
DT_V_MAX = 0.05


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    """Complex samples ``values[time_index, space_index]`` on a uniform time lattice."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        v = np.array(self.values)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape != (t.size, self.grid.n_points):
            raise TdseError(
                f"values shape {v.shape} does not match ({t.size}, {self.grid.n_points})",
                operation="space_time_function",
            )
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise TdseError("times must be strictly increasing", operation="space_time_function")
            if np.max(np.abs(steps - steps[0])) > STEP_TOL * max(1.0, abs(t[-1])):
                raise TdseError("times must have a constant step", operation="space_time_function")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, times: Sequence[float], fn: Callable, label: str = "") -> "SpaceTimeFunction":
        t = np.asarray(times, dtype=float)
        vals = np.asarray(fn(grid.x[None, :], t[:, None]))
        vals = np.broadcast_to(vals, (t.size, grid.n_points))
        return cls(grid, t, np.array(vals), label)

    @classmethod
    def static(cls, f: SampledFunction, times: Sequence[float]) -> "SpaceTimeFunction":
        t = np.asarray(times, dtype=float)
        return cls(f.grid, t, np.broadcast_to(f.values, (t.size, f.grid.n_points)).copy(), f.label)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def n_times(self) -> int:
        return int(self.times.size)

    def slice(self, i: int) -> SampledFunction:
        return SampledFunction(self.grid, self.values[i], label=f"{self.label}@t={self.times[i]:g}")

    def with_values(self, values, label: str | None = None, meta: dict | None = None) -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.grid, self.times, values, self.label if label is None else label, meta or {})

    def norms(self) -> np.ndarray:
        """Per-slice L2 norms (Riemann sum, the quantity Crank-Nicolson conserves)."""
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=1) * self.grid.spacing)

    def export(self, out_dir: str | Path) -> Path:
        """One CSV per slice (``x,re,im``) plus ``manifest.json`` with times and grid."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for i in range(self.n_times):
            name = f"slice_{i:04d}.csv"
            sf = SampledFunction(self.grid, np.asarray(self.values[i], dtype=complex))
            sf.to_csv(out / name)
            names.append(name)
        manifest = {"times": self.times.tolist(), "grid": self.grid.to_dict(), "slices": names, "label": self.label}
        path = out / "manifest.json"
        atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, manifest_path: str | Path) -> "SpaceTimeFunction":
        path = Path(manifest_path)
        doc = json.loads(path.read_text())
        grid = Grid(**doc["grid"])
        rows = [SampledFunction.from_csv(path.parent / n).values for n in doc["slices"]]
        return cls(grid, np.array(doc["times"]), np.array(rows), doc.get("label", ""))


def _potential_rows(V, grid: Grid, times: np.ndarray) -> np.ndarray:
    """Potential sampled at each instant (rows) from a static or space-time input."""
    if isinstance(V, SampledFunction):
        return np.broadcast_to(V.values, (times.size, grid.n_points))
    if isinstance(V, SpaceTimeFunction):
        if V.n_times != times.size or not np.allclose(V.times, times, rtol=0, atol=1e-12):
            raise TdseError("potential times do not match", operation="tdse")
        return V.values
    raise TypeError("V must be a SampledFunction or SpaceTimeFunction")


# -- propagation --------------------------------------------------------------------------


def laplacian_matrix(n: int, h: float) -> sp.csc_matrix:
    """5-point second-difference matrix with zero ghost values beyond both edges."""
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    diags = [np.full(n - abs(o), c[o + 2]) for o in range(-2, 3)]
    return sp.diags(diags, offsets=range(-2, 3), shape=(n, n), format="csc")


def hamiltonian_matrix(V: np.ndarray, h: float) -> sp.csc_matrix:
    return (-laplacian_matrix(V.size, h) + sp.diags(np.asarray(V, dtype=complex))).tocsc()


def apply_h(V: np.ndarray, psi: np.ndarray, h: float) -> np.ndarray:
    """``(-D^2 + V) psi`` with the same zero-ghost stencil as the propagator."""
    p = np.pad(psi, 2)
    lap = (-p[:-4] + 16 * p[1:-3] - 30 * p[2:-2] + 16 * p[3:-1] - p[4:]) / (12.0 * h * h)
    return -lap + V * psi


def propagate_tdse(
    V,
    psi0: SampledFunction,
    times: Sequence[float],
    substeps: int | None = None,
) -> SpaceTimeFunction:
    """Crank-Nicolson propagation of ``psi0`` (the state at ``times[0]``).

    The pentadiagonal system is factored once for a static potential. Each
    output interval is split into ``substeps`` steps (default: the smallest
    number with ``dt * max|V| <= 0.05``). Time-dependent potentials are
    evaluated at the interval midpoint by linear interpolation. A
    :class:`NormDriftError` is raised when a step changes the norm by more
    than 1e-10 or the total drift exceeds 1e-8.
    """
    t = np.asarray(times, dtype=float)
    grid = psi0.grid
    h = grid.spacing
    start = np.asarray(psi0.values, dtype=complex)
    if t.size <= 1:
        return SpaceTimeFunction(grid, t if t.size else np.array([0.0]), start[None, :], "psi")
    rows = np.asarray(_potential_rows(V, grid, t), dtype=float)
    dt_out = float(t[1] - t[0])
    vmax = float(np.max(np.abs(rows))) if rows.size else 0.0
    if substeps is None:
        substeps = max(1, int(np.ceil(dt_out * vmax / DT_V_MAX)))
    dt = dt_out / substeps
    static = isinstance(V, SampledFunction)
    out = np.empty((t.size, grid.n_points), dtype=complex)
    out[0] = start
    psi = start.copy()
    n0 = np.sum(np.abs(psi) ** 2) * h
    if n0 == 0:
        raise TdseError("initial state is zero", operation="propagate_tdse")
    eye = sp.identity(grid.n_points, dtype=complex, format="csc")
    lu = None
    if static:
        H = hamiltonian_matrix(rows[0], h)
        lu = splu((eye + 0.5j * dt * H).tocsc())
        B = (eye - 0.5j * dt * H).tocsr()
    for i in range(1, t.size):
        for s in range(substeps):
            if not static:
                frac = (s + 0.5) / substeps
                Vm = (1 - frac) * rows[i - 1] + frac * rows[i]
                H = hamiltonian_matrix(Vm, h)
                lu = splu((eye + 0.5j * dt * H).tocsc())
                B = (eye - 0.5j * dt * H).tocsr()
            before = np.sum(np.abs(psi) ** 2) * h
            psi = lu.solve(B @ psi)
            after = np.sum(np.abs(psi) ** 2) * h
            if abs(after - before) > NORM_STEP_TOL * n0:
                raise NormDriftError(
                    f"norm changed by {abs(after - before) / n0:.3g} in one step at t={t[i - 1]:g}",
                    operation="propagate_tdse",
                )
        out[i] = psi
    drift = abs(np.sum(np.abs(psi) ** 2) * h - n0) / n0
    if drift > NORM_TOTAL_TOL:
        raise NormDriftError(f"total norm drift {drift:.3g} exceeds {NORM_TOTAL_TOL:g}", operation="propagate_tdse")
    return SpaceTimeFunction(grid, t, out, "psi", {"substeps": substeps, "norm_drift": drift})


def tdse_residual(V, psi: SpaceTimeFunction, edge: int = 2 * EDGE) -> np.ndarray:
    """Per-interval relative residual of the Crank-Nicolson-centred equation.

    For slices ``n, n+1``: ``|| i (psi1 - psi0)/dt - H_mid (psi1 + psi0)/2 || / ||(psi1 + psi0)/2||``
    on the interior, with ``H_mid`` using the mean of the two potential rows.
    """
    if psi.n_times < 2:
        return np.zeros(0)
    rows = _potential_rows(V, psi.grid, psi.times)
    h, dt = psi.grid.spacing, psi.dt
    sl = psi.grid.interior(edge)
    res = np.empty(psi.n_times - 1)
    for n in range(psi.n_times - 1):
        a, b = psi.values[n], psi.values[n + 1]
        mid = 0.5 * (a + b)
        Vm = 0.5 * (rows[n] + rows[n + 1])
        r = 1j * (b - a) / dt - apply_h(Vm, mid, h)
        res[n] = np.linalg.norm(r[sl]) / max(np.linalg.norm(mid[sl]), 1e-300)
    return res


# -- seeds ----------------------------------------------------------------------------------


def _cumulative_time(y: np.ndarray, dt: float) -> np.ndarray:
    """Running integral along axis 0 (times), zero at the first instant."""
    y = np.asarray(y)
    if y.shape[0] < 2:
        return np.zeros_like(y)
    if y.shape[0] < 3:
        out = np.zeros_like(y)
        out[1] = 0.5 * dt * (y[0] + y[1])
        return out
    flat = y.reshape(y.shape[0], -1)
    cols = [cumulative_values(flat[:, j], dt) for j in range(flat.shape[1])]
    return np.stack(cols, axis=1).reshape(y.shape)


def _time_derivative(y: np.ndarray, dt: float) -> np.ndarray:
    if y.shape[0] < 2:
        return np.zeros_like(y)
    return np.gradient(y, dt, axis=0, edge_order=2 if y.shape[0] > 2 else 1)


def reality_l1(chi: SpaceTimeFunction, x_ref: float | None = None) -> np.ndarray:
    """``exp[-2 int_{t0}^t Im chi_xx(x_ref, s) ds]``, the positive L1 making V1 real."""
    h = chi.grid.spacing
    i = chi.grid.index_of(x_ref if x_ref is not None else 0.5 * (chi.grid.x_min + chi.grid.x_max))
    im_xx = d2(np.imag(chi.values), h)[:, i]
    return np.exp(-2.0 * _cumulative_time(im_xx, chi.dt))


@dataclass(frozen=True, eq=False)
class TdseSeed:
    """``chi`` with ``exp(-chi)`` solving the ``V0`` equation, and the factor ``L1(t)``."""

    chi: SpaceTimeFunction
    L1: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L1, dtype=float).reshape(-1)
        if L.size != self.chi.n_times:
            raise TdseError("L1 needs one value per time", operation="tdse_seed")
        if np.any(L <= 0) or not np.all(np.isfinite(L)):
            raise TdseError("L1 must be finite and positive", operation="tdse_seed")
        L.setflags(write=False)
        object.__setattr__(self, "L1", L)

    @classmethod
    def with_reality_l1(cls, chi: SpaceTimeFunction, x_ref: float | None = None) -> "TdseSeed":
        return cls(chi, reality_l1(chi, x_ref))

    @classmethod
    def from_callable(cls, grid: Grid, times: Sequence[float], chi_fn: Callable, L1=None) -> "TdseSeed":
        chi = SpaceTimeFunction.from_callable(grid, times, chi_fn, label="chi")
        if L1 is None:
            return cls.with_reality_l1(chi)
        return cls(chi, np.broadcast_to(np.asarray(L1, dtype=float), (chi.n_times,)))

    def exp_minus_chi(self) -> SpaceTimeFunction:
        return self.chi.with_values(np.exp(-self.chi.values), label="exp(-chi)")

    def seed_residual(self, V0) -> np.ndarray:
        """Crank-Nicolson-centred residual of ``exp(-chi)`` in the ``V0`` equation, per interval."""
        return tdse_residual(V0, self.exp_minus_chi())


def plane_wave_seed(grid: Grid, times: Sequence[float], k: float) -> TdseSeed:
    """``chi = -i k x + i k^2 t``: ``exp(-chi)`` is the free plane wave."""
    return TdseSeed.from_callable(grid, times, lambda x, t: -1j * k * x + 1j * k * k * t, L1=1.0)


def static_seed(grid: Grid, times: Sequence[float], kappa: float = 1.0) -> TdseSeed:
    """``chi = -ln cosh(kappa x) - i kappa^2 t``: ``exp(-chi) = cosh(kappa x) e^{i kappa^2 t}``."""

    def chi(x, t):
        ax = np.abs(kappa * x)
        return -(ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0)) - 1j * kappa * kappa * t

    return TdseSeed.from_callable(grid, times, chi, L1=1.0)


#: spacing of the diagnostic third-difference stencil
DIAG_SPACING = 0.1


def strided_d3(rows: np.ndarray, h: float, spacing: float = DIAG_SPACING) -> np.ndarray:
    """Third x-derivative with the 6-point stencil taken on every m-th sample.

    Rounding in the samples is amplified by ``1/(m h)^3`` instead of ``1/h^3``;
    with ``m h = 0.1`` a linear phase of size ~20 leaves ~1e-11. Points
    closer than ``3m`` to an edge copy the nearest computed value.
    """
    m = max(1, int(round(spacing / h)))
    H = m * h
    y = np.asarray(rows)
    out = np.zeros_like(y, dtype=np.result_type(y, float))
    n = y.shape[-1]
    i = np.arange(3 * m, n - 3 * m)
    if i.size == 0:
        return d3(y, h)
    out[..., i] = (
        y[..., i - 3 * m] - 8 * y[..., i - 2 * m] + 13 * y[..., i - m]
        - 13 * y[..., i + m] + 8 * y[..., i + 2 * m] - y[..., i + 3 * m]
    ) / (8 * H**3)
    out[..., : i[0]] = out[..., i[0] : i[0] + 1]
    out[..., i[-1] + 1 :] = out[..., i[-1] : i[-1] + 1]
    return out


def check_reality(seed: TdseSeed, edge: int = 2 * EDGE) -> dict:
    """Both real-potential conditions: ``Im chi_xxx = 0`` and ``L1 = exp[-2 int Im chi_xx]``."""
    h = seed.chi.grid.spacing
    sl = seed.chi.grid.interior(edge)
    im_xxx = strided_d3(np.imag(seed.chi.values), h)[:, sl]
    return {
        "max_abs_im_chi_xxx": float(np.max(np.abs(im_xxx))),
        "max_l1_deviation": float(np.max(np.abs(seed.L1 - reality_l1(seed.chi)))),
    }


# -- transforms -----------------------------------------------------------------------------


#: largest |Re chi| for which the gauge form of the derivative is used
_GAUGE_LIMIT = 300.0


def _covariant_derivative(chi: np.ndarray, chi_x: np.ndarray, f: np.ndarray, h: float) -> np.ndarray:
    """``f_x + chi_x f``, evaluated as ``e^{-chi} D(e^{chi} f)`` when that cannot overflow.

    The gauge form maps multiples of ``e^{-chi}`` (the kernel of the map)
    to zero exactly, so a kernel component that is large at the grid edges
    does not leak stencil error into the result.
    """
    if np.max(np.abs(np.real(chi))) < _GAUGE_LIMIT:
        return np.exp(-chi) * d1(np.exp(chi) * f, h)
    return d1(f, h) + chi_x * f


def tdse_darboux_forward(
    V0,
    seed: TdseSeed,
    psi0: SpaceTimeFunction,
    strict: bool = True,
    tol: float = REALITY_TOL,
) -> tuple[SpaceTimeFunction, SpaceTimeFunction]:
    """``V1 = V0 + 2 chi_xx + i (log L1)_t`` and ``psi1 = L1 (psi0_x + chi_x psi0)``.

    ``V1.meta["max_abs_imag"]`` reports the largest imaginary part on the
    interior. With ``strict`` a value above ``tol`` raises
    :class:`RealityViolationError`; otherwise a complex ``V1`` is returned.
    """
    chi = seed.chi
    if psi0.grid != chi.grid or psi0.n_times != chi.n_times:
        raise TdseError("psi0 and seed live on different lattices", operation="tdse_darboux_forward")
    h = chi.grid.spacing
    rows = np.asarray(_potential_rows(V0, chi.grid, chi.times), dtype=complex)
    chi_x = d1(chi.values, h)
    chi_xx = d2(chi.values, h)
    log_l1_t = _time_derivative(np.log(seed.L1), chi.dt)
    V1 = rows + 2.0 * chi_xx + 1j * log_l1_t[:, None]
    sl = chi.grid.interior(2 * EDGE)
    imag = float(np.max(np.abs(V1.imag[:, sl])))
    if strict and imag > tol:
        raise RealityViolationError(
            f"transformed potential has imaginary part up to {imag:.3g} (> {tol:g})",
            operation="tdse_darboux_forward",
        )
    if imag <= tol:
        V1 = V1.real
    psi1 = seed.L1[:, None] * _covariant_derivative(chi.values, chi_x, psi0.values, h)
    meta = {"max_abs_imag": imag}
    return (
        SpaceTimeFunction(chi.grid, chi.times, V1, "V1", meta),
        SpaceTimeFunction(chi.grid, chi.times, psi1, "psi1"),
    )


def inverse_c0(seed: TdseSeed, psi1: SpaceTimeFunction, x0: float, t0_index: int = 0) -> np.ndarray:
    """``c0(t) = i L1(t) int_{t0}^t e^{chi(x0,s)} / L1(s) (psi1_x - chi_x psi1)(x0, s) ds``."""
    chi = seed.chi
    h = chi.grid.spacing
    j = chi.grid.index_of(x0)
    chi_x = d1(chi.values, h)[:, j]
    p1x = d1(psi1.values, h)[:, j]
    integrand = np.exp(chi.values[:, j]) / seed.L1 * (p1x - chi_x * psi1.values[:, j])
    run = _cumulative_time(integrand, chi.dt)
    run = run - run[t0_index]
    return 1j * seed.L1 * run


def tdse_darboux_inverse(
    V1,
    seed: TdseSeed,
    psi1: SpaceTimeFunction,
    x0: float | None = None,
    t0: float | None = None,
) -> SpaceTimeFunction:
    """Map a ``V1`` solution back: ``psi0 = e^{-chi}/L1 [int_{x0}^x e^{chi} psi1 dy + c0(t)]``.

    ``x0`` defaults to the grid midpoint and ``t0`` to the first instant.
    With ``L1 = 1`` this is the non-local map of the time-dependent case
    without the multiplicative factor.

    The result is fixed only up to the kernel ``e^{-chi}``: any error in the
    time quadrature behind ``c0`` enters as a time-dependent multiple of
    ``e^{-chi}`` and is amplified wherever that grows. For a localized state
    put ``x0`` where ``psi1`` is negligible; ``c0`` then stays near zero and
    the output solves the ``V0`` equation to the propagation accuracy. ``V1`` is accepted for symmetry with
    the forward call and checked only for lattice consistency.
    """
    chi = seed.chi
    grid = chi.grid
    if psi1.grid != grid or psi1.n_times != chi.n_times:
        raise TdseError("psi1 and seed live on different lattices", operation="tdse_darboux_inverse")
    _potential_rows(V1, grid, chi.times)
    h = grid.spacing
    x0 = 0.5 * (grid.x_min + grid.x_max) if x0 is None else float(x0)
    t_idx = 0 if t0 is None else int(np.argmin(np.abs(chi.times - t0)))
    j = grid.index_of(x0)
    with np.errstate(over="raise", invalid="raise"):
        try:
            integrand = np.exp(chi.values) * psi1.values
            F = np.empty_like(integrand)
            for n in range(chi.n_times):
                run = cumulative_values(integrand[n], h)
                F[n] = run - run[j]
            c0 = inverse_c0(seed, psi1, x0, t_idx)
            out = np.exp(-chi.values) / seed.L1[:, None] * (F + c0[:, None])
        except FloatingPointError as exc:
            raise QuadratureDivergenceError(
                "inner integral overflowed; choose x0 closer to where the seed is large",
                operation="tdse_darboux_inverse",
            ) from exc
    if not np.all(np.isfinite(out)):
        raise QuadratureDivergenceError("inverse transform produced non-finite values", operation="tdse_darboux_inverse")
    return SpaceTimeFunction(grid, chi.times, out, "psi0", {"x0": x0, "t0": float(chi.times[t_idx])})


def intertwining_defect(V0, V1: SpaceTimeFunction, seed: TdseSeed, phi: SpaceTimeFunction, edge: int = 2 * EDGE) -> np.ndarray:
    """Per-slice ``||T(i d_t - H0) phi - (i d_t - H1) T phi|| / ||phi||``, centred time differences."""
    h, dt = phi.grid.spacing, phi.dt
    rows0 = np.asarray(_potential_rows(V0, phi.grid, phi.times), dtype=complex)
    rows1 = np.asarray(V1.values, dtype=complex)
    chi_x = d1(seed.chi.values, h)
    L = seed.L1[:, None]

    def T(f):
        return L * (d1(f, h) + chi_x * f)

    def op(rows, f):
        ft = _time_derivative(f, dt)
        return 1j * ft - np.array([apply_h(rows[n], f[n], h) for n in range(f.shape[0])])

    lhs = T(op(rows0, phi.values))
    rhs = op(rows1, T(phi.values))
    sl = phi.grid.interior(edge)
    inner = slice(1, phi.n_times - 1) if phi.n_times > 2 else slice(None)
    num = np.linalg.norm((lhs - rhs)[inner, sl], axis=1)
    den = np.linalg.norm(phi.values[inner, sl], axis=1)
    return num / den
