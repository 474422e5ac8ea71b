"""Krein's inverse-scattering scheme for s-waves on the half line, with a forward oracle.

Data: ``g(k) = |F(k)|^{-2} - 1`` for the Jost function ``F``. Steps:

    H(t)   = (1/pi) int_0^inf g(k) cos(kt) dk
    Gamma_{2r}(t) + H(t) + int_0^{2r} Gamma_{2r}(s) H(s - t) ds = 0,   0 <= t <= 2r
    A(r)   = 2 Gamma_{2r}(2r)
    V(r)   = -A'(r) + A(r)^2

Only data without bound states is handled (the modulus alone does not carry
norming constants).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy import linalg
from scipy.interpolate import CubicSpline

from .core import (
    DomainMismatchError,
    Grid,
    SampledFunction,
    atomic_write_text,
    cumulative_values,
    d1,
    make_grid,
)
from .errors import DivergentIntegrandError, LongRangeError, SingularSystemError

K_CUTOFF = 40.0
K_POINTS = 4000
COND_MAX = 1e12
EDGE_DECAY = 1e-10


# -- data -------------------------------------------------------------------------------------


@dataclass(frozen=True)
class JostInput:
    """``k -> |F(k)|^{-2} - 1`` with the truncation used by the cosine transform."""

    profile: Callable[[np.ndarray], np.ndarray]
    k_cutoff: float = K_CUTOFF
    k_quadrature_points: int = K_POINTS
    label: str = "custom"

    def __post_init__(self):
        if not self.k_cutoff > 0:
            raise ValueError("k_cutoff must be positive")
        if int(self.k_quadrature_points) < 3:
            raise ValueError("need at least 3 quadrature points")

    def k_nodes(self) -> np.ndarray:
        n = int(self.k_quadrature_points)
        n += 1 - n % 2  # Filon-Simpson needs an even number of panels
        return np.linspace(0.0, self.k_cutoff, n)

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.k_nodes()
        return k, np.asarray(self.profile(k), dtype=float) * np.ones_like(k)

    def tail_report(self) -> dict:
        """Does ``k^2 g(k)`` shrink over the last decade below the cutoff?"""
        k = np.linspace(0.1 * self.k_cutoff, self.k_cutoff, 200)
        g = np.abs(np.asarray(self.profile(k), dtype=float) * np.ones_like(k))
        kg = k * k * g
        return {
            "k2g_start": float(kg[0]),
            "k2g_end": float(kg[-1]),
            "faster_than_inverse_square": bool(kg[-1] <= kg[0] or kg[-1] < 1e-12),
        }

    @classmethod
    def from_samples(cls, k: Sequence[float], values: Sequence[float], **kw) -> "JostInput":
        """Cubic-spline profile through tabulated values, zero beyond the last k."""
        k = np.asarray(k, dtype=float)
        v = np.asarray(values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 4:
            raise ValueError("need matching 1-D k and value arrays with at least 4 entries")
        spline = CubicSpline(k, v)
        kmax = float(k[-1])

        def prof(q):
            q = np.asarray(q, dtype=float)
            return np.where(q <= kmax, spline(np.clip(q, k[0], kmax)), 0.0)

        kw.setdefault("k_cutoff", kmax)
        return cls(prof, **kw)

    @classmethod
    def from_modulus(cls, k: Sequence[float], modulus: Sequence[float], **kw) -> "JostInput":
        m = np.asarray(modulus, dtype=float)
        return cls.from_samples(k, m**-2 - 1.0, **kw)

    @classmethod
    def from_csv(cls, source: str | Path, **kw) -> "JostInput":
        rows = list(csv.reader(io.StringIO(Path(source).read_text())))
        body = [r for r in rows if r and not r[0].strip().startswith("k")]
        data = np.array([[float(a), float(b)] for a, b in body])
        return cls.from_samples(data[:, 0], data[:, 1], label=str(source), **kw)

    def to_csv(self, path: str | Path | None = None) -> str:
        k, g = self.samples()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "value"])
        for a, b in zip(k, g):
            w.writerow([repr(float(a)), repr(float(b))])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


PROFILES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "free": lambda k: np.zeros_like(np.asarray(k, dtype=float)),
    "gaussian": lambda k: np.exp(-np.asarray(k, dtype=float) ** 2),
}


def named_profile(name: str, **kw) -> JostInput:
    try:
        return JostInput(PROFILES[name], label=name, **kw)
    except KeyError:
        raise ValueError(f"unknown Jost profile {name!r}; choose from {sorted(PROFILES)}") from None


# -- H(t) by Filon-Simpson ------------------------------------------------------------------


def _filon_coefficients(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < 1e-2
    t = np.where(small, 1.0, th)
    s, c = np.sin(t), np.cos(t)
    alpha = (t * t + t * s * c - 2 * s * s) / t**3
    beta = 2 * (t * (1 + c * c) - 2 * s * c) / t**3
    gamma = 4 * (s - t * c) / t**3
    z = th
    alpha_s = 2 * z**3 / 45 - 2 * z**5 / 315 + 2 * z**7 / 4725
    beta_s = 2 / 3 + 2 * z**2 / 15 - 4 * z**4 / 105 + 2 * z**6 / 567
    gamma_s = 4 / 3 - 2 * z**2 / 15 + z**4 / 210 - z**6 / 11340
    return (
        np.where(small, alpha_s, alpha),
        np.where(small, beta_s, beta),
        np.where(small, gamma_s, gamma),
    )


def filon_cos(f: np.ndarray, a: float, b: float, t: np.ndarray) -> np.ndarray:
    """``int_a^b f(k) cos(k t) dk`` for each t; ``f`` sampled on an odd number of equispaced nodes."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n < 3 or n % 2 == 0:
        raise ValueError("Filon-Simpson needs an odd number (>= 3) of samples")
    h = (b - a) / (n - 1)
    k = np.linspace(a, b, n)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    al, be, ga = _filon_coefficients(t * h)
    cos = np.cos(np.outer(t, k))
    even = cos[:, ::2] @ f[::2] - 0.5 * (f[0] * cos[:, 0] + f[-1] * cos[:, -1])
    odd = cos[:, 1::2] @ f[1::2]
    ends = f[-1] * np.sin(t * b) - f[0] * np.sin(t * a)
    return h * (al * ends + be * even + ga * odd)


def _check_integrable(j: JostInput) -> None:
    k = np.array([1e-8, 1e-7, 1e-6, 1e-5]) * max(1.0, j.k_cutoff)
    with np.errstate(all="ignore"):
        g = np.abs(np.asarray(j.profile(k), dtype=float) * np.ones_like(k))
        g0 = np.asarray(j.profile(np.array([0.0])), dtype=float) * np.ones(1)
    if not np.all(np.isfinite(g)):
        raise DivergentIntegrandError("profile is not finite near k = 0", operation="build_H")
    slope = np.polyfit(np.log(k), np.log(np.maximum(g, 1e-300)), 1)[0]
    if slope <= -0.9 and g[0] > 1e3:
        raise DivergentIntegrandError(
            f"|F|^-2 - 1 grows like k^{slope:.2f} at k -> 0; the cosine transform diverges",
            operation="build_H",
        )
    if not np.isfinite(g0[0]):
        raise DivergentIntegrandError("profile is infinite at k = 0", operation="build_H")


def build_H(j: JostInput, t_grid: Grid) -> tuple[SampledFunction, float]:
    """``H(t)`` on ``t_grid`` and an estimate of the truncation error beyond the cutoff.

    The estimate assumes at least ``1/k^2`` decay past the cutoff:
    ``|g(k_c)| k_c / pi``.
    """
    _check_integrable(j)
    k, g = j.samples()
    if not np.all(np.isfinite(g)):
        raise DivergentIntegrandError("profile has non-finite samples", operation="build_H")
    t = t_grid.x
    H = np.zeros_like(t) if not np.any(g) else filon_cos(g, 0.0, j.k_cutoff, t) / np.pi
    trunc = float(abs(g[-1]) * j.k_cutoff / np.pi)
    return SampledFunction(t_grid, H, label="H"), trunc


# -- Fredholm equation ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GammaSolution:
    """``Gamma_{2r}`` at the Nystrom nodes ``t = 0, ht, ..., 2r``."""

    r: float
    t: np.ndarray
    values: np.ndarray
    residual: float
    condition: float

    @property
    def at_end(self) -> float:
        return float(self.values[-1])

    def to_sampled(self) -> SampledFunction:
        return SampledFunction(make_grid(0.0, float(self.t[-1]), self.t.size), self.values, label=f"Gamma[{self.r:g}]")


def solve_fredholm(H: SampledFunction, r: float) -> GammaSolution:
    """Trapezoid Nystrom solution of the Fredholm equation on ``[0, 2r]``.

    ``2r`` must fall on the lattice of ``H`` (which starts at t = 0). The
    kernel ``H(s - t)`` uses the even extension ``H(-tau) = H(tau)``.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if H.grid.x_min != 0.0:
        raise DomainMismatchError("H must be sampled from t = 0", operation="solve_fredholm")
    ht = H.grid.spacing
    m = int(round(2 * r / ht))
    if abs(2 * r - m * ht) > 1e-9 * max(1.0, 2 * r) or m >= H.grid.n_points:
        raise DomainMismatchError(f"2r = {2 * r:g} is not a node of the t-grid", operation="solve_fredholm")
    h = np.asarray(H.values[: m + 1], dtype=float)
    t = H.grid.x[: m + 1]
    if m == 0:
        return GammaSolution(float(r), t, -h, 0.0, 1.0)
    if not np.any(h):
        return GammaSolution(float(r), t, np.zeros_like(h), 0.0, 1.0)
    w = np.full(m + 1, ht)
    w[0] = w[-1] = 0.5 * ht
    M = np.eye(m + 1) + linalg.toeplitz(h) * w[None, :]
    anorm = np.linalg.norm(M, 1)
    lu, piv = linalg.lu_factor(M, check_finite=True)
    rcond, info = linalg.lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if cond > COND_MAX:
        raise SingularSystemError(f"Nystrom matrix condition number {cond:.3g} exceeds {COND_MAX:g}", operation="solve_fredholm")
    gam = linalg.lu_solve((lu, piv), -h)
    res = float(np.max(np.abs(M @ gam + h)))
    return GammaSolution(float(r), t, gam, res, float(cond))


@dataclass(frozen=True, eq=False)
class KreinKernel:
    """``H`` on ``[0, 2 r_max]`` and the per-r Fredholm solutions."""

    t_grid: Grid
    H: SampledFunction
    truncation_error: float
    gamma: tuple[GammaSolution, ...]

    @property
    def max_residual(self) -> float:
        return max((g.residual for g in self.gamma), default=0.0)

    @property
    def max_condition(self) -> float:
        return max((g.condition for g in self.gamma), default=1.0)


def krein_kernel(j: JostInput, r_grid: Grid) -> KreinKernel:
    """Build ``H`` once on a t-grid with the spacing of ``r_grid`` and solve for every r.

    The t-grid spacing equals the r-grid spacing so that ``2r`` is always a node.
    """
    if r_grid.x_min != 0.0:
        raise DomainMismatchError("r_grid must start at 0 (half line)", operation="recover_potential")
    t_grid = make_grid(0.0, 2.0 * r_grid.x_max, 2 * r_grid.n_points - 1)
    H, trunc = build_H(j, t_grid)
    gam = tuple(solve_fredholm(H, r) for r in r_grid.x)
    return KreinKernel(t_grid, H, trunc, gam)


def potential_from_kernel(kernel: KreinKernel, r_grid: Grid) -> tuple[SampledFunction, SampledFunction]:
    A = np.array([2.0 * g.at_end for g in kernel.gamma])
    V = -d1(A, r_grid.spacing) + A * A
    return SampledFunction(r_grid, A, label="A"), SampledFunction(r_grid, V, label="V")


def recover_potential(j: JostInput, r_grid: Grid) -> tuple[SampledFunction, SampledFunction]:
    """``A(r) = 2 Gamma_{2r}(2r)`` and ``V = -A' + A^2`` on ``r_grid`` (which starts at 0)."""
    return potential_from_kernel(krein_kernel(j, r_grid), r_grid)


# -- forward oracle ------------------------------------------------------------------------


@njit(cache=True)
def _regular_ends(V, h, ks, kt, seps, out_a, out_b):
    """Numerov for phi'' = (V - k^2) phi, phi(0) = 0; keep phi at n-1-sep and n-1."""
    n = V.shape[0]
    f = h * h / 12.0
    for j in range(ks.shape[0]):
        k2 = ks[j] * ks[j]
        if ks[j] > 0:
            y1 = np.sin(kt[j] * h) / ks[j] + V[0] * h**3 / 6.0
        else:
            y1 = h + V[0] * h**3 / 6.0
        y0 = 0.0
        target = n - 1 - seps[j]
        if target == 0:
            out_a[j] = y0
        elif target == 1:
            out_a[j] = y1
        for i in range(1, n - 1):
            qm = k2 - V[i - 1]
            q0 = k2 - V[i]
            qp = k2 - V[i + 1]
            y = (2.0 * (1.0 - 5.0 * f * q0) * y1 - (1.0 + f * qm) * y0) / (1.0 + f * qp)
            y0 = y1
            y1 = y
            if i + 1 == target:
                out_a[j] = y
        out_b[j] = y1


def _discrete_k(k: np.ndarray, h: float) -> np.ndarray:
    t = (k * h) ** 2 / 12.0
    return np.arccos(np.clip((1.0 - 5.0 * t) / (1.0 + t), -1.0, 1.0)) / h


def _check_half_line(V: SampledFunction, operation: str) -> None:
    if V.grid.x_min != 0.0:
        raise DomainMismatchError("potential must be sampled on [0, r_max]", operation=operation)
    if abs(V.values[-1]) > EDGE_DECAY:
        raise LongRangeError(
            f"potential at r_max is {abs(V.values[-1]):.3g} > {EDGE_DECAY:g}; not short-range",
            operation=operation,
        )


def jost_forward(V: SampledFunction, k_list: Sequence[float]) -> np.ndarray:
    """``|F(k)|`` from the regular solution ``phi(0) = 0, phi'(0) = 1``.

    Beyond the range of ``V`` the solution is ``(|F|/k) sin(kr + delta)``;
    the amplitude is read off at two samples about a quarter wave apart
    using the exact free wavenumber of the Numerov recursion. At ``k = 0``
    ``|F(0)|`` is the asymptotic slope of the regular solution.
    """
    _check_half_line(V, "jost_forward")
    k = np.asarray(k_list, dtype=float).reshape(-1)
    if np.any(k < 0):
        raise ValueError("wavenumbers must be nonnegative")
    h = V.grid.spacing
    n = V.grid.n_points
    kt = _discrete_k(k, h)
    with np.errstate(divide="ignore"):
        seps = np.where(k > 0, np.round(np.pi / (2 * np.maximum(kt, 1e-300) * h)), 1.0)
    seps = np.clip(seps, 1, n // 4).astype(np.int64)
    ya = np.empty(k.size)
    yb = np.empty(k.size)
    _regular_ends(np.ascontiguousarray(V.values, dtype=float), h, k, kt, seps, ya, yb)
    r = V.grid.x
    out = np.empty(k.size)
    for i in range(k.size):
        ra, rb = r[n - 1 - seps[i]], r[n - 1]
        if k[i] == 0:
            out[i] = abs(yb[i] - ya[i]) / (rb - ra)
            continue
        M = np.array([[np.sin(kt[i] * ra), np.cos(kt[i] * ra)], [np.sin(kt[i] * rb), np.cos(kt[i] * rb)]])
        a, b = np.linalg.solve(M, [ya[i], yb[i]])
        out[i] = k[i] * np.hypot(a, b)
    return out


def jost_input_from_potential(
    V: SampledFunction, k_cutoff: float = K_CUTOFF, k_quadrature_points: int = K_POINTS, samples: int = 801
) -> JostInput:
    """Tabulate ``|F|^{-2} - 1`` with :func:`jost_forward` and spline it."""
    k = np.linspace(0.0, k_cutoff, samples)
    F = jost_forward(V, k)
    return JostInput.from_samples(
        k, F**-2 - 1.0, k_cutoff=k_cutoff, k_quadrature_points=k_quadrature_points, label="forward"
    )


def regular_solution(V: SampledFunction, k: float) -> SampledFunction:
    """The regular solution ``phi(k, r)`` sampled on the grid of ``V``."""
    if V.grid.x_min != 0.0:
        raise DomainMismatchError("potential must be sampled on [0, r_max]", operation="regular_solution")
    from .eigensolve import numerov_integrate  # local: krein otherwise stands alone

    h = V.grid.spacing
    kt = float(_discrete_k(np.array([k]), h)[0])
    y1 = (np.sin(kt * h) / k if k > 0 else h) + V.values[0] * h**3 / 6.0
    phi, log_scale = numerov_integrate(V, k * k, "left_to_right", (0.0, y1))
    return phi.with_values(phi.values * np.exp(log_scale), label=f"phi[{k:g}]")


def half_line_bound_states(V: SampledFunction) -> int:
    """Number of bound states: nodes of the zero-energy regular solution on ``(0, r_max]``."""
    phi = regular_solution(V, 0.0)
    y = phi.values[1:]
    return int(np.count_nonzero(np.signbit(y[1:]) != np.signbit(y[:-1])))


def representation_phi(gamma: GammaSolution, k: float) -> float:
    """``k^-1 Im[e^{ikr} (1 + int_0^{2r} Gamma_{2r}(t) e^{-ikt} dt)]`` at ``r = gamma.r``."""
    r = gamma.r
    if gamma.t.size > 1:
        integrand = gamma.values * np.exp(-1j * k * gamma.t)
        ht = gamma.t[1] - gamma.t[0]
        I = cumulative_values(integrand, ht)[-1] if gamma.t.size >= 3 else 0.5 * ht * integrand.sum()
    else:
        I = 0.0
    return float(np.imag(np.exp(1j * k * r) * (1.0 + I)) / k)


def potential_to_csv(A: SampledFunction, V: SampledFunction, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "A", "V"])
    for r, a, v in zip(A.x, A.values, V.values):
        w.writerow([repr(float(r)), repr(float(a)), repr(float(v))])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text
