"""Numerov shooting solver: bound states, zero modes, second solutions, R/T amplitudes.

This module is the independent check on every isospectrality claim made by the
transform modules, so it never calls into them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .core import (
    Grid,
    SampledFunction,
    atomic_write_text,
    cumulative_values,
    integrate,
    sign_changes,
)
from .errors import LongRangeError, NodefulError, WindowExhaustedError, ZeroCrossingError

LEFT_TO_RIGHT = "left_to_right"
RIGHT_TO_LEFT = "right_to_left"

_BIG = 1e250
SHORT_RANGE_THRESHOLD = 1e-10


@njit(cache=True)
def _numerov_kernel(q, h, y0, y1, out):
    """March y'' = -q y from out[0]=y0, out[1]=y1. Returns (sign changes, ln scale)."""
    n = q.shape[0]
    f = h * h / 12.0
    out[0] = y0
    out[1] = y1
    log_scale = 0.0
    nodes = 0
    last = 0.0
    if y0 != 0.0:
        last = y0
    if y1 != 0.0:
        if last != 0.0 and (y1 > 0) != (last > 0):
            nodes += 1
        last = y1
    for i in range(1, n - 1):
        y = (2.0 * (1.0 - 5.0 * f * q[i]) * out[i] - (1.0 + f * q[i - 1]) * out[i - 1]) / (
            1.0 + f * q[i + 1]
        )
        out[i + 1] = y
        if y != 0.0:
            if last != 0.0 and (y > 0) != (last > 0):
                nodes += 1
            last = y
        if abs(y) > 1e250:
            for j in range(i + 2):
                out[j] *= 1e-250
            log_scale += 575.6462732485114  # ln(1e250)
    return nodes, log_scale


@njit(cache=True)
def _numerov_batch(q, h, y0, y1, out):
    """Complex Numerov for many right-hand sides at once; q has shape (m, n)."""
    m, n = q.shape
    f = h * h / 12.0
    for j in range(m):
        out[j, 0] = y0[j]
        out[j, 1] = y1[j]
        for i in range(1, n - 1):
            out[j, i + 1] = (
                2.0 * (1.0 - 5.0 * f * q[j, i]) * out[j, i] - (1.0 + f * q[j, i - 1]) * out[j, i - 1]
            ) / (1.0 + f * q[j, i + 1])


def numerov_integrate(
    u: SampledFunction,
    energy: float,
    direction: str = LEFT_TO_RIGHT,
    boundary: tuple[float, float] = (0.0, 1e-8),
) -> tuple[SampledFunction, float]:
    """Integrate ``-psi'' + u psi = energy psi`` with Numerov's method.

    ``boundary`` holds the two seed values at the starting edge, outermost
    first. The solution is returned in grid order together with the natural
    log of the factor by which it was rescaled to avoid overflow (0 when no
    rescaling happened).
    """
    if u.is_complex:
        raise TypeError("numerov_integrate needs a real potential")
    q = energy - u.values
    if direction == RIGHT_TO_LEFT:
        q = q[::-1]
    elif direction != LEFT_TO_RIGHT:
        raise ValueError(f"unknown direction {direction!r}")
    out = np.empty_like(q)
    _, log_scale = _numerov_kernel(np.ascontiguousarray(q), u.grid.spacing, float(boundary[0]), float(boundary[1]), out)
    if direction == RIGHT_TO_LEFT:
        out = out[::-1]
    return u.with_values(out, label=""), log_scale


def _tail_seed(Q: np.ndarray, h: float, max_ext: int = 400) -> tuple[float, float]:
    """Seed values at samples 0 and 1 for the solution of ``y'' = Q y`` decaying towards sample 0.

    Q is extrapolated quadratically beyond sample 0 and the Numerov recursion
    is marched in from there, so that any error in the starting ratio has
    decayed by the time the grid is reached.
    """
    if Q[0] <= 0 or Q[1] <= 0:
        return 0.0, 1e-8
    t = -np.arange(len(Q)) * h  # outward coordinate
    coef = np.polyfit(t, Q, 2)
    kappa = np.sqrt(Q[0])
    n_ext = int(min(max_ext, np.ceil(15.0 / (kappa * h))))
    t_ext = (np.arange(n_ext, 0, -1)) * h
    Q_ext = np.polyval(coef, t_ext)
    if np.any(Q_ext <= 0):
        Q_ext = Q_ext[np.flatnonzero(Q_ext <= 0).max() + 1 :]
    Qall = np.concatenate([Q_ext, Q[:2]])
    if Qall.size < 3:
        return 1e-8, 1e-8 * _const_ratio(Q[0], Q[1], h)
    out = np.empty(Qall.size)
    _numerov_kernel(-Qall, h, 1.0, _const_ratio(Qall[0], Qall[1], h), out)
    return 1e-8, 1e-8 * out[-1] / out[-2]


def _const_ratio(Q0: float, Q1: float, h: float) -> float:
    """Exact Numerov growth ratio for constant Q (cell average)."""
    f = h * h / 12.0
    q = -0.5 * (Q0 + Q1)
    a, b = 1.0 + f * q, 1.0 - 5.0 * f * q
    return float((b + np.sqrt(b * b - a * a)) / a)


# -- bound states ----------------------------------------------------------------


@dataclass(frozen=True)
class SolveConfig:
    energy_window: tuple[float, float]
    max_levels: int = 5
    bisection_tolerance: float = 1e-9
    matching_point_fraction: float = 0.5
    scan_points: int = 200
    half_line: bool = False

    def __post_init__(self):
        lo, hi = self.energy_window
        if not lo < hi:
            raise ValueError("energy_window must satisfy min < max")
        if self.bisection_tolerance <= 0:
            raise ValueError("bisection_tolerance must be positive")
        if not 0 < self.matching_point_fraction < 1:
            raise ValueError("matching_point_fraction must lie in (0, 1)")
        if self.max_levels < 1:
            raise ValueError("max_levels must be positive")
        object.__setattr__(self, "energy_window", (float(lo), float(hi)))

    @property
    def boundary_condition(self) -> str:
        return "dirichlet_at_origin" if self.half_line else "decay_both_edges"


@dataclass(frozen=True, eq=False)
class EigenPair:
    energy: float
    wavefunction: SampledFunction
    node_count: int
    matching_residual: float = 0.0
    boundary_condition: str = "decay_both_edges"
    index: int = 0


class _Shooter:
    """Counting and matching machinery for one potential."""

    def __init__(self, u: SampledFunction, half_line: bool = False, fraction: float = 0.5):
        self.u = u
        self.h = u.grid.spacing
        self.n = u.grid.n_points
        self.half_line = half_line
        self.fraction = fraction
        self._buf = np.empty(self.n)

    def count(self, energy: float) -> int:
        """Number of Dirichlet-box levels strictly below ``energy`` (Sturm count)."""
        q = energy - self.u.values
        nodes, _ = _numerov_kernel(q, self.h, 0.0, 1e-8, self._buf)
        return nodes

    def _edge_seed(self, energy: float, side: str) -> tuple[float, float]:
        if side == "left" and self.half_line:
            return 0.0, self.h
        v = self.u.values if side == "left" else self.u.values[::-1]
        return _tail_seed(v[:12] - energy, self.h)

    def matching_index(self, energy: float) -> int:
        s = np.sign(self.u.values - energy)
        tp = np.flatnonzero(s[:-1] * s[1:] <= 0)
        target = self.fraction * (self.n - 1)
        lo, hi = 3, self.n - 4
        if tp.size == 0:
            return int(min(max(round(target), lo), hi))
        m = int(tp[np.argmin(np.abs(tp - target))])
        return min(max(m, lo), hi)

    def eigenfunction(self, energy: float) -> tuple[np.ndarray, float]:
        """Matched left/right solution and its log-derivative mismatch."""
        q = energy - self.u.values
        m = self.matching_index(energy)
        left = np.empty(m + 2)
        a0, a1 = self._edge_seed(energy, "left")
        _numerov_kernel(np.ascontiguousarray(q[: m + 2]), self.h, a0, a1, left)
        right = np.empty(self.n - m + 1)
        b0, b1 = self._edge_seed(energy, "right")
        _numerov_kernel(np.ascontiguousarray(q[m - 1 :][::-1]), self.h, b0, b1, right)
        right = right[::-1]  # right[j] <-> index m-1+j
        # pick a matching point where neither branch is near a node
        for shift in (0, 1, -1, 2, -2):
            j = m + shift
            if 1 <= j <= m and abs(left[j]) > 1e-6 * np.max(np.abs(left)):
                break
        else:
            j = m
        rj = j - (m - 1)
        scale = left[j] / right[rj]
        right = right * scale
        psi = np.concatenate([left[: j + 1], right[rj + 1 :]])
        dl = (left[j + 1] - left[j - 1]) / (2 * self.h * left[j])
        dr = (right[rj + 1] - right[rj - 1]) / (2 * self.h * right[rj])
        norm = np.sqrt(integrate(psi * psi, self.h))
        psi = psi / norm
        # sign convention: first lobe from the left is positive
        big = np.flatnonzero(np.abs(psi) > 1e-3 * np.max(np.abs(psi)))
        if psi[big[0]] < 0:
            psi = -psi
        return psi, float(dl - dr)

    def bisect_level(self, level: int, lo: float, hi: float, tol: float) -> float:
        """Bisection on the Sturm count for the energy where count jumps past ``level``."""
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.count(mid) <= level:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * 1e-3 * (1.0 + abs(mid)):
                break
        return 0.5 * (lo + hi)

    def refined(self) -> "_Shooter":
        """Shooter on the grid with half the spacing, potential spline-interpolated."""
        from scipy.interpolate import CubicSpline

        g = self.u.grid
        fine = Grid(g.x_min, g.x_max, 2 * g.n_points - 1)
        uf = SampledFunction(fine, CubicSpline(g.x, self.u.values)(fine.x))
        return _Shooter(uf, self.half_line, self.fraction)

    def pair(self, level: int, lo: float, hi: float, tol: float, refine: bool = True) -> EigenPair:
        e = self.bisect_level(level, lo, hi, tol)
        psi, mismatch = self.eigenfunction(e)
        if refine:
            fine = self.refined()
            w = 1e-6 * (1.0 + abs(e))
            while not (fine.count(e - w) <= level < fine.count(e + w)):
                w *= 4
                if w > hi - lo:
                    break
            else:
                ef = fine.bisect_level(level, e - w, e + w, tol)
                psi_f, mismatch = fine.eigenfunction(ef)
                psi_f = psi_f[::2]
                # Richardson on the O(h^4) Numerov error, energy and wavefunction alike
                e = (16.0 * ef - e) / 15.0
                psi = (16.0 * psi_f - psi) / 15.0
                psi /= np.sqrt(integrate(psi * psi, self.h))
        nodes = len(sign_changes(psi, edge=1))
        return EigenPair(
            energy=e,
            wavefunction=self.u.with_values(psi, label=f"psi_{level}"),
            node_count=nodes,
            matching_residual=abs(mismatch),
            boundary_condition="dirichlet_at_origin" if self.half_line else "decay_both_edges",
            index=level,
        )


def solve_bound_states(
    u: SampledFunction, cfg: SolveConfig, allow_partial: bool = False
) -> list[EigenPair]:
    """Bound states of ``-D^2 + u`` inside ``cfg.energy_window``.

    Levels are bracketed by a node-count scan over a coarse energy lattice
    and refined by bisection. If fewer than ``cfg.max_levels`` levels exist
    in the window a :class:`WindowExhaustedError` carrying the partial list
    is raised, unless ``allow_partial`` is set.
    """
    if u.is_complex:
        raise TypeError("solve_bound_states needs a real potential")
    sh = _Shooter(u, cfg.half_line, cfg.matching_point_fraction)
    lo, hi = cfg.energy_window
    lattice = np.linspace(lo, hi, max(cfg.scan_points, 2))
    counts = np.array([sh.count(e) for e in lattice])
    first = counts[0]
    wanted = range(first, min(counts[-1], first + cfg.max_levels))
    levels = []
    for n in wanted:
        j = int(np.searchsorted(counts, n + 1))  # first lattice point with count > n
        pair = sh.pair(n, lattice[j - 1], lattice[j], cfg.bisection_tolerance)
        levels.append(pair)
    if len(levels) < cfg.max_levels and not allow_partial:
        raise WindowExhaustedError(
            f"found {len(levels)} of {cfg.max_levels} levels in window {cfg.energy_window}",
            levels=levels,
            operation="solve_bound_states",
        )
    return levels


def count_levels_below(u: SampledFunction, energy: float, half_line: bool = False) -> int:
    return _Shooter(u, half_line).count(energy)


def bound_energies(u: SampledFunction, window: tuple[float, float], max_levels: int = 10, **kw) -> np.ndarray:
    """Convenience wrapper returning just the energies found in ``window``."""
    cfg = SolveConfig(window, max_levels=max_levels, **kw)
    return np.array([p.energy for p in solve_bound_states(u, cfg, allow_partial=True)])


def default_window(u: SampledFunction, half_line: bool = False) -> tuple[float, float]:
    """Window from min(u) up to the lower of the two edge values of u.

    On the half line the origin carries a wall, so only the right edge counts.
    """
    v = u.values
    top = v[-1] if half_line else min(v[0], v[-1])
    lo = float(np.min(v)) - 1e-9
    return lo, float(top) - 1e-9 if top > lo else lo + 1.0


def ground_state(u: SampledFunction, window: tuple[float, float] | None = None, half_line: bool = False) -> EigenPair:
    window = window or default_window(u, half_line)
    cfg = SolveConfig(window, max_levels=1, half_line=half_line)
    return solve_bound_states(u, cfg)[0]


def zero_mode(u: SampledFunction, energy: float, half_line: bool = False) -> SampledFunction:
    """Nodeless normalized ground state at (approximately) ``energy``.

    The energy is polished by bisection on the level nearest to it; a
    :class:`NodefulError` is raised if that level is not the ground level.
    """
    sh = _Shooter(u, half_line)
    width = 1e-3 * (1.0 + abs(energy))
    lo, hi = energy - width, energy + width
    c_lo, c_hi = sh.count(lo), sh.count(hi)
    if c_hi == c_lo:
        raise NodefulError(
            f"no level within {width:g} of energy {energy}", operation="zero_mode"
        )
    pair = sh.pair(c_lo, lo, hi, 1e-12)
    if pair.node_count != 0 or c_lo != 0:
        raise NodefulError(
            f"mode at energy {pair.energy:.8g} has {max(pair.node_count, c_lo)} node(s)",
            operation="zero_mode",
        )
    return pair.wavefunction.with_values(pair.wavefunction.values, label="zero_mode")


def second_solution(u: SampledFunction, energy: float, psi: SampledFunction) -> SampledFunction:
    """Reduction of order: ``psi(x) * int_{x_ref}^x psi^{-2}``, Wronskian W(psi, chi) = 1.

    ``x_ref`` is the point where |psi| is largest.
    """
    nodes = sign_changes(psi.values, edge=1)
    if nodes or np.any(psi.values[1:-1] == 0):
        where = psi.x[nodes[0]] if nodes else float("nan")
        raise ZeroCrossingError(
            f"psi has a node near x={where:.6g}", index=nodes[0] if nodes else -1,
            operation="second_solution",
        )
    h = psi.grid.spacing
    with np.errstate(over="ignore"):
        inv2 = 1.0 / psi.values**2
    i0 = int(np.argmax(np.abs(psi.values)))
    forward = cumulative_values(inv2[i0:], h)
    backward = -cumulative_values(inv2[: i0 + 1][::-1], h)[::-1]
    J = np.concatenate([backward[:-1], forward])
    return psi.with_values(psi.values * J, label="second_solution")


# -- scattering ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScatteringData:
    wavenumbers: np.ndarray
    reflection: np.ndarray
    transmission: np.ndarray

    @property
    def abs_r(self) -> np.ndarray:
        return np.abs(self.reflection)

    @property
    def abs_t(self) -> np.ndarray:
        return np.abs(self.transmission)

    def flux_defect(self) -> np.ndarray:
        return np.abs(self.abs_r**2 + self.abs_t**2 - 1.0)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "re_R", "im_R", "re_T", "im_T"])
        for k, r, t in zip(self.wavenumbers, self.reflection, self.transmission):
            w.writerow([repr(float(k)), repr(float(r.real)), repr(float(r.imag)),
                        repr(float(t.real)), repr(float(t.imag))])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


def _discrete_wavenumber(k: np.ndarray, h: float) -> np.ndarray:
    """Wavenumber of the exact free-space solution of the Numerov recursion."""
    t = (k * h) ** 2 / 12.0
    return np.arccos((1.0 - 5.0 * t) / (1.0 + t)) / h


def check_short_range(u: SampledFunction, threshold: float = SHORT_RANGE_THRESHOLD, operation: str = "rt_coefficients"):
    edges = np.abs(u.values[[0, -1]])
    if np.any(edges > threshold):
        raise LongRangeError(
            f"potential at the grid edges is {edges.max():.3g} > {threshold:g}; not short-range",
            operation=operation,
        )


def rt_coefficients(u: SampledFunction, k_list: Sequence[float], check: bool = True) -> ScatteringData:
    """Reflection and transmission amplitudes for a wave incident from the left.

    ``check=False`` skips the edge-decay test; used for potentials derived
    from an already checked short-range source, whose edge values carry the
    numerical noise of the transform rather than a physical tail.
    """
    if check:
        check_short_range(u)
    k = np.asarray(k_list, dtype=float)
    if k.size == 0:
        return ScatteringData(k, np.zeros(0, complex), np.zeros(0, complex))
    if np.any(k <= 0):
        raise ValueError("wavenumbers must be positive")
    h = u.grid.spacing
    x = u.x
    kt = _discrete_wavenumber(k, h)
    q = (k[:, None] ** 2 - u.values[None, ::-1]).astype(float)
    xr = x[::-1]
    y0 = np.exp(1j * kt * xr[0])
    y1 = np.exp(1j * kt * xr[1])
    out = np.empty(q.shape, dtype=complex)
    _numerov_batch(np.ascontiguousarray(q), h, y0, y1, out)
    psi = out[:, ::-1]
    # decompose psi = A e^{ikx} + B e^{-ikx} on the left using two points about a quarter wave apart
    sep = np.clip(np.round(np.pi / (2 * kt * h)).astype(int), 1, max(1, u.grid.n_points // 10))
    R = np.empty(k.size, complex)
    T = np.empty(k.size, complex)
    for j in range(k.size):
        i0, i1 = 0, int(sep[j])
        M = np.array([[np.exp(1j * kt[j] * x[i0]), np.exp(-1j * kt[j] * x[i0])],
                      [np.exp(1j * kt[j] * x[i1]), np.exp(-1j * kt[j] * x[i1])]])
        A, B = np.linalg.solve(M, psi[j, [i0, i1]])
        T[j] = 1.0 / A
        R[j] = B / A
    return ScatteringData(k, R, T)


# -- export ----------------------------------------------------------------------


def spectrum_to_json(levels: Sequence[EigenPair], cfg: SolveConfig | None = None, extra: dict | None = None) -> str:
    doc = {
        "levels": [
            {"n": int(p.index), "energy": float(p.energy), "nodes": int(p.node_count)}
            for p in levels
        ],
        "config": {} if cfg is None else {**asdict(cfg), "boundary_condition": cfg.boundary_condition},
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
