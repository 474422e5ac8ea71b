"""Shape-invariant superpotentials: algebraic spectra, ladder wavefunctions and SUSY-WKB.

Conventions (ground energy fixed at zero):

    V_-(x, a) = W^2 - W',    V_+(x, a) = W^2 + W',
    V_+(x, a) = V_-(x, step(a)) + R(a).

Starting from the user's parameter ``a_1`` the orbit is ``a_{k+1} = step(a_k)``
and the levels are ``E_0 = 0``, ``E_n = R(a_1) + ... + R(a_n)``. The
remainder ``R`` is not tabulated: it is measured from ``W`` on a sampling
grid, which also checks the shape-invariance identity itself.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .core import EDGE, Grid, SampledFunction, d1, make_grid, normalized, sign_changes
from .errors import InvalidParameterError, LevelOutOfRangeError, NoBracketError

SI_TOL = 1e-6

#: sampling grid used to measure R(a) and check the SI identity
_PROBE = make_grid(-8.0, 8.0, 1601)

#: |x| at which the asymptotic sign of W decides normalizability
_FAR = 60.0


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


@dataclass(frozen=True)
class SiPotential:
    """A shape-invariant family given by its superpotential and parameter map."""

    family: str
    superpotential: Callable[[np.ndarray, float], np.ndarray]
    parameter_map: Callable[[float], float]
    log_ground_state: Callable[[np.ndarray, float], np.ndarray]
    validate: Callable[[float], None]

    def ground_state(self, x: np.ndarray, a: float) -> np.ndarray:
        """Unnormalized ``exp(-int_0^x W)``."""
        return np.exp(self.log_ground_state(np.asarray(x, dtype=float), a))

    def partners(self, a: float, grid: Grid = _PROBE) -> tuple[np.ndarray, np.ndarray]:
        x = grid.x
        w = np.asarray(self.superpotential(x, a), dtype=float) * np.ones_like(x)
        dw = d1(w, grid.spacing)
        return w * w - dw, w * w + dw

    def v_minus(self, x: np.ndarray, a: float) -> np.ndarray:
        grid = make_grid(float(x[0]), float(x[-1]), len(x))
        return self.partners(a, grid)[0]

    def remainder_profile(self, a: float) -> np.ndarray:
        """``V_+(x, a) - V_-(x, step(a))`` on the probe grid; constant for an SI family."""
        _, vp = self.partners(a)
        vm_next, _ = self.partners(self.parameter_map(a))
        return (vp - vm_next)[_PROBE.interior(EDGE)]

    def remainder(self, a: float) -> float:
        prof = self.remainder_profile(a)
        r = float(np.mean(prof))
        spread = float(np.max(np.abs(prof - r)))
        if spread > SI_TOL * max(1.0, abs(r)):
            raise InvalidParameterError(
                f"shape-invariance identity fails for a = {a}: remainder varies by {spread:.3g}",
                operation="remainder",
            )
        return r

    def normalizable(self, a: float) -> bool:
        """``exp(-int W)`` decays at both ends iff W is eventually positive on the right and negative on the left."""
        w = np.asarray(self.superpotential(np.array([-_FAR, _FAR]), a), dtype=float) * np.ones(2)
        return bool(w[1] > 0 and w[0] < 0)

    def orbit(self, a1: float, n: int) -> list[float]:
        out = [float(a1)]
        for _ in range(n):
            out.append(float(self.parameter_map(out[-1])))
        return out


def _no_check(a: float) -> None:
    return None


def _pt_check(a: float) -> None:
    if not np.isfinite(a) or a <= 0:
        raise InvalidParameterError(f"Poschl-Teller strength must be positive, got {a}", operation="si")


HARMONIC = SiPotential(
    family="harmonic",
    superpotential=lambda x, a: np.asarray(x, dtype=float),
    parameter_map=lambda a: a,
    log_ground_state=lambda x, a: -0.5 * x * x,
    validate=_no_check,
)

POSCHL_TELLER = SiPotential(
    family="poschl_teller",
    superpotential=lambda x, a: a * np.tanh(x),
    parameter_map=lambda a: a - 1.0,
    log_ground_state=lambda x, a: -a * _log_cosh(x),
    validate=_pt_check,
)

FAMILIES = {"harmonic": HARMONIC, "poschl_teller": POSCHL_TELLER}


def get_family(name: str) -> SiPotential:
    try:
        return FAMILIES[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown shape-invariant family {name!r}; choose from {sorted(FAMILIES)}", operation="si"
        ) from None


def bound_state_count(p: SiPotential, a1: float, limit: int = 1000) -> int | None:
    """Number of levels along the orbit (None if unbounded within ``limit``)."""
    p.validate(a1)
    a = float(a1)
    for n in range(limit):
        if not p.normalizable(a):
            return n
        b = p.parameter_map(a)
        if b == a:
            return None
        a = b
    return None


def _check_level(p: SiPotential, a1: float, n: int, operation: str) -> None:
    count = bound_state_count(p, a1)
    if count is not None and n >= count:
        raise LevelOutOfRangeError(
            f"{p.family} with a1 = {a1} has {count} bound state(s); level {n} does not exist",
            operation=operation,
        )


def si_spectrum(p: SiPotential, a1: float, n_max: int) -> list[float]:
    """``[E_0, ..., E_{n_max}]`` from partial sums of the remainder along the orbit."""
    if n_max < 0 or int(n_max) != n_max:
        raise InvalidParameterError("n_max must be a nonnegative integer", operation="si_spectrum")
    n_max = int(n_max)
    p.validate(a1)
    _check_level(p, a1, n_max, "si_spectrum")
    orbit = p.orbit(a1, n_max)
    levels = [0.0]
    for k in range(n_max):
        levels.append(levels[-1] + p.remainder(orbit[k]))
    return levels


def si_wavefunction(p: SiPotential, a1: float, n: int, grid: Grid) -> SampledFunction:
    """``psi_n = A+(a_1) ... A+(a_n) psi_0(a_{n+1})`` with ``A+ = -D + W``, normalized."""
    if n < 0 or int(n) != n:
        raise InvalidParameterError("n must be a nonnegative integer", operation="si_wavefunction")
    n = int(n)
    p.validate(a1)
    _check_level(p, a1, n, "si_wavefunction")
    orbit = p.orbit(a1, n)
    x, h = grid.x, grid.spacing
    psi = p.ground_state(x, orbit[n])
    for k in range(n - 1, -1, -1):
        w = np.asarray(p.superpotential(x, orbit[k]), dtype=float) * np.ones_like(x)
        psi = -d1(psi, h) + w * psi
    out = normalized(SampledFunction(grid, psi, label=f"{p.family}_psi_{n}"))
    nodes = len(sign_changes(out.values, edge=EDGE))
    if nodes != n:
        raise LevelOutOfRangeError(
            f"ladder wavefunction has {nodes} nodes instead of {n}; grid too small?",
            operation="si_wavefunction",
        )
    return out


def si_spectrum_to_json(p: SiPotential, a1: float, levels: list[float]) -> str:
    doc = {
        "levels": [{"n": i, "energy": e, "nodes": i} for i, e in enumerate(levels)],
        "config": {"family": p.family, "a1": a1, "ground_energy_convention": 0.0},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# -- SUSY-WKB -----------------------------------------------------------------------------


class _Swkb:
    def __init__(self, W: Callable[[float], float], search: float = 1e4):
        self.W = W
        self.search = search
        res = optimize.minimize_scalar(lambda y: float(W(y)) ** 2, bracket=(-1.0, 1.0))
        self.x_min = float(res.x)
        self.w2_min = float(res.fun)

    def w2(self, y: float) -> float:
        return float(self.W(y)) ** 2

    def turning_point(self, energy: float, direction: int) -> float | None:
        g = lambda y: self.w2(y) - energy
        step = 1.0
        a = self.x_min
        while step <= self.search:
            b = self.x_min + direction * step
            if g(b) > 0:
                return optimize.brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            a = b
            step *= 2.0
        return None

    def area(self, energy: float) -> float | None:
        """``int_a^b sqrt(E - W^2)``, or None if a turning point does not exist."""
        if energy <= self.w2_min:
            return 0.0
        a = self.turning_point(energy, -1)
        b = self.turning_point(energy, +1)
        if a is None or b is None:
            return None
        mid, half = 0.5 * (a + b), 0.5 * (b - a)

        def integrand(theta):
            y = mid + half * np.sin(theta)
            return np.sqrt(max(energy - self.w2(y), 0.0)) * half * np.cos(theta)

        # the tolerances sit at roundoff; quad's roundoff notice carries no information here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(integrand, -np.pi / 2, np.pi / 2, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val


def swkb_quantization(W: Callable[[float], float], n: int, e_max: float | None = None) -> float:
    """Energy ``E`` with ``int_a^b sqrt(E - W(y)^2) dy = n pi`` (hbar = 1, 2m = 1).

    ``W`` is a scalar callable whose square is a single well. The condition is
    bracketed by scanning upward in ``E`` and solved by bisection.
    """
    if n < 0 or int(n) != n:
        raise InvalidParameterError("n must be a nonnegative integer", operation="swkb_quantization")
    solver = _Swkb(W)
    if n == 0:
        return solver.w2_min
    target = n * np.pi
    lo = solver.w2_min
    hi = lo + 1.0
    while True:
        A = solver.area(hi)
        if A is None:
            # no turning point at hi: close in on the largest energy that has one
            good, bad = lo, hi
            for _ in range(200):
                m = 0.5 * (good + bad)
                if solver.area(m) is None:
                    bad = m
                else:
                    good = m
                if bad - good <= 1e-13 * max(1.0, abs(bad)):
                    break
            A = solver.area(good)
            if A is None or A <= target:
                raise NoBracketError(
                    f"no SUSY-WKB root for n = {n}: the action saturates at {A / np.pi if A else 0:.6g} pi",
                    operation="swkb_quantization",
                )
            hi = good
            break
        if A > target:
            break
        lo = hi
        hi = lo + 2.0 * (hi - solver.w2_min)
        if e_max is not None and hi > e_max:
            raise NoBracketError(f"no SUSY-WKB root for n = {n} below {e_max}", operation="swkb_quantization")
    return float(optimize.bisect(lambda e: solver.area(e) - target, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=200))
