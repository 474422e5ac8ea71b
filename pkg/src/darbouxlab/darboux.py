"""Single Darboux transforms, Crum iteration, SUSY factorization and Adler deletion.

Conventions: ``L = -D^2 + u``; a seed ``psi1`` solves ``L psi1 = lambda1 psi1``
and ``sigma1 = psi1' / psi1``. The transform is

    u[1] = u - 2 D^2 ln psi1,        psi[1] = psi' - sigma1 psi.

The factorization energy is always carried explicitly; nothing is shifted to
zero behind the caller's back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    EDGE,
    SampledFunction,
    TransformRecord,
    TransformStep,
    apply_hamiltonian,
    d1,
    d2,
    first_zero_crossing,
    log_abs,
    residual,
    second_log_derivative,
    sign_changes,
)
from .eigensolve import (
    SolveConfig,
    check_short_range,
    default_window,
    solve_bound_states,
)
from .errors import (
    InconsistentLengthsError,
    InsufficientLevelsError,
    LongRangeError,
    NoBoundStateError,
    SingularSeedError,
    SingularWronskianError,
    WindowExhaustedError,
    ZeroCrossingError,
)

SEED_RTOL = 1e-4

#: half-width (in grid points) of the window masked around a pole when forcing
POLE_MASK = 2


# -- helpers ---------------------------------------------------------------------


def node_indices(values: np.ndarray, edge: int = 1) -> list[int]:
    """Indices of nodes (sign changes, zeros, deep dips) of a real sampled function."""
    v = np.asarray(values, dtype=float)
    found = set(sign_changes(v, edge=edge))
    found.update(int(i) for i in np.flatnonzero(v[edge : len(v) - edge] == 0) + edge)
    i = first_zero_crossing(v, edge=edge)
    if i is not None:
        found.add(i)
    return sorted(found)


def smooth_derivative(values: np.ndarray, h: float, guard: float = 3.0) -> np.ndarray:
    """First derivative that stays accurate on steep exponential tails.

    Away from nodes ``f' = f * D ln|f|`` (ln|f| is close to a polynomial on
    Gaussian-like tails, so the stencil is almost exact there); within a
    distance ``guard`` of a node, where ln|f| is far from polynomial, the
    plain stencil is used. The two are blended with a smooth ramp over a
    further ``guard`` so that no jump is introduced (a jump would be
    amplified by later second differences).
    """
    f = np.asarray(values, dtype=float)
    plain = d1(f, h)
    if np.all(f == 0):
        return plain
    g = log_abs(f)
    ok = np.isfinite(g)
    nodes = np.array(sorted(set(node_indices(f, edge=0)) | set(np.flatnonzero(~ok).tolist())), dtype=int)
    g = np.where(ok, g, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        logd = f * d1(g, h)
    if nodes.size == 0:
        return logd
    idx = np.arange(f.size)
    pos = np.searchsorted(nodes, idx)
    left = np.abs(idx - nodes[np.clip(pos - 1, 0, nodes.size - 1)])
    right = np.abs(nodes[np.clip(pos, 0, nodes.size - 1)] - idx)
    dist = np.minimum(left, right) * h
    t = np.clip((dist - guard) / guard, 0.0, 1.0)
    w = t * t * t * (10 - 15 * t + 6 * t * t)  # C2 smoothstep
    return w * np.nan_to_num(logd) + (1 - w) * plain


def _raise_singular(values: np.ndarray, x: np.ndarray, cls, what: str, operation: str):
    nodes = node_indices(values)
    if nodes:
        where = [float(x[i]) for i in nodes]
        raise cls(
            f"{what} has {len(nodes)} node(s) on the grid interior, near x = "
            + ", ".join(f"{w:.6g}" for w in where[:8]),
            nodes=where,
            operation=operation,
        )


def _minus_two_d2_log(f: SampledFunction, force: bool, cls, what: str, operation: str) -> np.ndarray:
    """``-2 D^2 ln f``; poles masked as NaN when ``force`` and ``f`` has nodes."""
    nodes = node_indices(f.values)
    if not nodes:
        try:
            return -2.0 * second_log_derivative(f).values
        except ZeroCrossingError:  # pragma: no cover - node_indices is stricter
            pass
    if not force:
        _raise_singular(f.values, f.x, cls, what, operation)
    g = log_abs(f.values)
    g = np.where(np.isfinite(g), g, np.nan)
    out = -2.0 * d2(g, f.grid.spacing)
    for i in nodes:
        out[max(0, i - POLE_MASK) : i + POLE_MASK + 2] = np.nan
    return out


# -- seeds -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DarbouxSeed:
    """Transformation function ``psi1`` at factorization energy ``lambda1``.

    ``sigma1`` is derived on construction. Pass ``u`` to :meth:`validated` to
    check that the seed actually solves the source equation.
    """

    psi1: SampledFunction
    lambda1: float
    seed_id: str = "seed"

    @property
    def sigma1(self) -> SampledFunction:
        v = self.psi1.values
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.psi1.with_values(smooth_derivative(v, self.psi1.grid.spacing) / v, label="sigma1")

    @property
    def nodes(self) -> list[int]:
        return node_indices(self.psi1.values)

    def seed_residual(self, u: SampledFunction) -> float:
        return residual(u, self.psi1, self.lambda1)

    def validated(self, u: SampledFunction, rtol: float = SEED_RTOL) -> "DarbouxSeed":
        if u.grid != self.psi1.grid:
            raise InconsistentLengthsError("seed and potential live on different grids", operation="darboux_seed")
        r = self.seed_residual(u)
        if not r <= rtol:
            raise ValueError(f"seed residual {r:.3g} exceeds {rtol:g}: psi1 does not solve the source equation")
        return self

    @classmethod
    def from_callable(cls, u: SampledFunction, fn: Callable, lambda1: float, seed_id: str = "seed") -> "DarbouxSeed":
        return cls(SampledFunction.from_callable(u.grid, fn, label=seed_id), float(lambda1), seed_id)


def _check_grid(*fs: SampledFunction, operation: str):
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g or len(f.values) != len(fs[0].values):
            raise InconsistentLengthsError("sampled functions live on different grids", operation=operation)


# -- single transform ---------------------------------------------------------------


class DarbouxMap:
    """``psi -> psi' - sigma1 psi``, the covariance map of a single transform."""

    def __init__(self, seed: DarbouxSeed):
        self.seed = seed
        self._sigma = seed.sigma1.values

    def __call__(self, psi: SampledFunction, energy: float | None = None) -> SampledFunction:
        _check_grid(self.seed.psi1, psi, operation="darboux_map")
        if energy is not None and energy == self.seed.lambda1:
            raise ValueError("the map annihilates solutions at the factorization energy")
        dpsi = smooth_derivative(psi.values, psi.grid.spacing)
        return psi.with_values(dpsi - self._sigma * psi.values, label="mapped")


def darboux_transform(
    u: SampledFunction, seed: DarbouxSeed, force: bool = False
) -> tuple[SampledFunction, DarbouxMap]:
    """``v = u - 2 D^2 ln psi1`` together with the wavefunction map.

    A seed with interior nodes raises :class:`SingularSeedError` listing the
    node locations, unless ``force`` is set, in which case the singular
    potential is returned with the poles masked as NaN.
    """
    _check_grid(u, seed.psi1, operation="darboux_transform")
    corr = _minus_two_d2_log(seed.psi1, force, SingularSeedError, "seed", "darboux_transform")
    v = u.with_values(u.values + corr, label="darboux")
    return v, DarbouxMap(seed)


def inverse_darboux(
    v: SampledFunction, phi1: SampledFunction, lambda1: float, force: bool = False
) -> SampledFunction:
    """Undo a transform: ``u = v - 2 D^2 ln phi1`` with ``phi1 = 1 / psi1``.

    ``lambda1`` is carried for provenance and residual checks; the potential
    formula itself does not depend on it.
    """
    _check_grid(v, phi1, operation="inverse_darboux")
    corr = _minus_two_d2_log(phi1, force, SingularSeedError, "phi1", "inverse_darboux")
    return v.with_values(v.values + corr, label="inverse_darboux")


def inverse_map(phi1: SampledFunction, lambda1: float) -> Callable[[SampledFunction, float], SampledFunction]:
    """Wavefunction map of the inverse transform, ``chi -> (chi' - (phi1'/phi1) chi) / (lambda1 - E)``.

    With that normalization the composition with the forward map is the
    identity on solutions at energy ``E``.
    """
    h = phi1.grid.spacing
    tau = smooth_derivative(phi1.values, h) / phi1.values

    def apply(chi: SampledFunction, energy: float) -> SampledFunction:
        if energy == lambda1:
            raise ValueError("inverse map is undefined at the factorization energy")
        out = (smooth_derivative(chi.values, h) - tau * chi.values) / (lambda1 - energy)
        return chi.with_values(out, label="inverse_mapped")

    return apply


# -- Wronskians and Crum ----------------------------------------------------------------


def _reduction_coefficients(u: np.ndarray, lam: float, order: int, h: float):
    """Coefficients (a_m, b_m) with ``D^m psi = a_m psi + b_m psi'`` for m < order.

    Only derivatives of ``u`` are taken numerically; ``psi''`` is always
    replaced by ``(u - lam) psi``.
    """
    q = u - lam
    a = [np.ones_like(q), np.zeros_like(q)]
    b = [np.zeros_like(q), np.ones_like(q)]
    for m in range(1, order - 1):
        a.append(d1(a[m], h) + b[m] * q)
        b.append(a[m] + d1(b[m], h))
    return a[:order], b[:order]


def wronskian_values(funcs: Sequence[SampledFunction], u: SampledFunction, lambdas: Sequence[float]) -> np.ndarray:
    if len(funcs) != len(lambdas):
        raise InconsistentLengthsError(
            f"{len(funcs)} functions but {len(lambdas)} energies", operation="wronskian"
        )
    if not funcs:
        raise InconsistentLengthsError("need at least one function", operation="wronskian")
    _check_grid(u, *funcs, operation="wronskian")
    k = len(funcs)
    if k == 1:
        return np.array(funcs[0].values, dtype=float)
    h = u.grid.spacing
    n = len(u.values)
    M = np.empty((n, k, k))
    for j, (f, lam) in enumerate(zip(funcs, lambdas)):
        a, b = _reduction_coefficients(u.values, float(lam), k, h)
        fp = smooth_derivative(f.values, h)
        for m in range(k):
            M[:, m, j] = a[m] * f.values + b[m] * fp
    # scale columns to O(1) before the determinant so it cannot overflow
    scale = np.max(np.abs(M), axis=1)  # (n, k)
    scale[scale == 0] = 1.0
    det = np.linalg.det(M / scale[:, None, :])
    return det * np.prod(scale, axis=1)


def wronskian(funcs: Sequence[SampledFunction], u: SampledFunction, lambdas: Sequence[float]) -> SampledFunction:
    """Wronskian determinant of solutions ``funcs[i]`` of ``-D^2 + u`` at ``lambdas[i]``.

    First derivatives come from finite differences; every higher derivative
    is reduced through the equation itself.
    """
    return u.with_values(wronskian_values(funcs, u, lambdas), label="wronskian")


class CrumMap:
    """``psi -> W(psi_1..psi_N, psi) / W(psi_1..psi_N)``."""

    def __init__(self, u: SampledFunction, seeds: Sequence[DarbouxSeed], W: np.ndarray):
        self.u = u
        self.seeds = list(seeds)
        self._W = W

    def __call__(self, psi: SampledFunction, energy: float) -> SampledFunction:
        if any(energy == s.lambda1 for s in self.seeds):
            raise ValueError("energy coincides with a seed factorization energy")
        funcs = [s.psi1 for s in self.seeds] + [psi]
        lams = [s.lambda1 for s in self.seeds] + [energy]
        top = wronskian_values(funcs, self.u, lams)
        with np.errstate(divide="ignore", invalid="ignore"):
            return psi.with_values(top / self._W, label="crum_mapped")


def crum_iterate(
    u: SampledFunction, seeds: Sequence[DarbouxSeed], force: bool = False
) -> tuple[SampledFunction, CrumMap]:
    """``u[N] = u - 2 D^2 ln W(psi_1, ..., psi_N)`` and the Crum wavefunction map."""
    if not seeds:
        raise InconsistentLengthsError("need at least one seed", operation="crum_iterate")
    W = wronskian_values([s.psi1 for s in seeds], u, [s.lambda1 for s in seeds])
    Wf = u.with_values(W, label="wronskian")
    corr = _minus_two_d2_log(Wf, force, SingularWronskianError, "seed Wronskian", "crum_iterate")
    return u.with_values(u.values + corr, label="crum"), CrumMap(u, seeds, W)


def _window_for(u: SampledFunction) -> tuple[float, float]:
    return default_window(u)


def adler_delete_pair(
    u: SampledFunction, k: int, window: tuple[float, float] | None = None, half_line: bool = False
) -> SampledFunction:
    """Remove levels ``k`` and ``k+1`` with a nonsingular second-order Crum step.

    For short-range sources the result is shifted so that its tails sit at
    zero; confining sources are left unshifted.
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    k = int(k)
    cfg = SolveConfig(window or _window_for(u), max_levels=k + 2, half_line=half_line)
    try:
        levels = solve_bound_states(u, cfg)
    except WindowExhaustedError as exc:
        raise InsufficientLevelsError(
            f"need {k + 2} bound states, found {len(exc.levels)}", operation="adler_delete_pair"
        ) from exc
    pk, pk1 = levels[k], levels[k + 1]
    seeds = [
        DarbouxSeed(pk.wavefunction, pk.energy, f"psi_{k}"),
        DarbouxSeed(pk1.wavefunction, pk1.energy, f"psi_{k + 1}"),
    ]
    out, _ = crum_iterate(u, seeds)
    try:
        check_short_range(u, operation="adler_delete_pair")
    except LongRangeError:
        return out.with_values(out.values, label="adler")
    sl = u.grid.interior(EDGE)
    tail = 0.5 * (out.values[sl][0] + out.values[sl][-1])
    return out.with_values(out.values - tail, label="adler")


# -- factorization ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorizationPair:
    """``B+ = -D + sigma``, ``B- = D + sigma``; ``B-B+ = L_minus - lambda1``, ``B+B- = L_plus - lambda1``."""

    superpotential: SampledFunction
    lambda1: float
    u_minus: SampledFunction
    u_plus: SampledFunction

    @property
    def sigma(self) -> np.ndarray:
        return self.superpotential.values

    def b_plus(self, f: np.ndarray) -> np.ndarray:
        return -d1(f, self.superpotential.grid.spacing) + self.sigma * f

    def b_minus(self, f: np.ndarray) -> np.ndarray:
        return d1(f, self.superpotential.grid.spacing) + self.sigma * f

    def commutator(self, f: np.ndarray) -> np.ndarray:
        """``[B+, B-] f``, which equals ``-2 sigma' f``."""
        return self.b_plus(self.b_minus(f)) - self.b_minus(self.b_plus(f))

    def identity_residuals(self, probe: np.ndarray, edge: int = 2 * EDGE) -> dict:
        """Relative sup-norm errors of the operator identities on a probe."""
        sl = self.superpotential.grid.interior(edge)
        L_minus = apply_hamiltonian(self.u_minus, probe, self.lambda1)
        L_plus = apply_hamiltonian(self.u_plus, probe, self.lambda1)
        comm = self.commutator(probe)
        diff = (self.u_plus.values - self.u_minus.values) * probe

        def rel(a, b):
            return float(np.max(np.abs(a[sl] - b[sl])) / max(np.max(np.abs(b[sl])), 1e-300))

        return {
            "b_minus_b_plus": rel(self.b_minus(self.b_plus(probe)), L_minus),
            "b_plus_b_minus": rel(self.b_plus(self.b_minus(probe)), L_plus),
            "commutator": rel(comm, diff),
        }


def factorize(
    u: SampledFunction, window: tuple[float, float] | None = None, half_line: bool = False
) -> FactorizationPair:
    """SUSY factorization about the ground state of ``u``.

    ``sigma = psi0'/psi0`` and ``lambda1 = E0``, so ``u_minus = sigma' + sigma^2 + E0``
    reproduces ``u`` and ``u_plus = -sigma' + sigma^2 + E0`` is its partner.
    """
    lo, hi = window or _window_for(u)
    if not hi > lo:
        raise NoBoundStateError("potential has no bound-state window", operation="factorize")
    cfg = SolveConfig((lo, hi), max_levels=1, half_line=half_line)
    try:
        ground = solve_bound_states(u, cfg)[0]
    except WindowExhaustedError as exc:
        raise NoBoundStateError("no bound ground state below the continuum", operation="factorize") from exc
    psi0 = ground.wavefunction
    h = u.grid.spacing
    sigma = smooth_derivative(psi0.values, h) / psi0.values
    if half_line:
        # psi0(0) = 0 makes sigma singular at the origin; use ln|psi0| away from it
        sigma[0] = sigma[1]
    dsig = -0.5 * _minus_two_d2_log(psi0, False, SingularSeedError, "ground state", "factorize")
    sq = sigma**2 + ground.energy
    return FactorizationPair(
        superpotential=u.with_values(sigma, label="sigma"),
        lambda1=float(ground.energy),
        u_minus=u.with_values(dsig + sq, label="u_minus"),
        u_plus=u.with_values(-dsig + sq, label="u_plus"),
    )


def intertwining_residual(
    L0_potential: SampledFunction,
    L1_potential: SampledFunction,
    T_superpotential: SampledFunction,
    probe: SampledFunction,
    edge: int = 2 * EDGE,
) -> float:
    """``||(L1 T - T L0) probe|| / ||probe||`` on the interior, ``T = D - W``."""
    _check_grid(L0_potential, L1_potential, T_superpotential, probe, operation="intertwining_residual")
    h = probe.grid.spacing
    W = T_superpotential.values
    p = probe.values

    def T(f):
        return d1(f, h) - W * f

    lhs = apply_hamiltonian(L1_potential, T(p))
    rhs = T(apply_hamiltonian(L0_potential, p))
    sl = probe.grid.interior(edge)
    return float(np.max(np.abs(lhs[sl] - rhs[sl])) / np.max(np.abs(p[sl])))


# -- provenance replay --------------------------------------------------------------


def record_step(record: TransformRecord, kind: str, seeds: Sequence[DarbouxSeed], **kw) -> TransformRecord:
    ids = tuple(s.seed_id for s in seeds)
    step = TransformStep(
        kind,
        seed_ids=ids,
        factorization_energy=seeds[0].lambda1 if len(seeds) == 1 else None,
        factorization_energies=tuple(s.lambda1 for s in seeds) if len(seeds) > 1 else (),
        **kw,
    )
    return record.extended(step, **{s.seed_id: s.psi1 for s in seeds})


def replay(u: SampledFunction, record: TransformRecord) -> SampledFunction:
    """Re-run a recorded chain of (inverse) Darboux and Crum steps from ``u``."""
    out = u
    for step in record.steps:
        fns = [record.seeds[i] for i in step.seed_ids]
        if step.step_kind == "darboux":
            out, _ = darboux_transform(out, DarbouxSeed(fns[0], step.factorization_energy or 0.0))
        elif step.step_kind == "inverse_darboux":
            out = inverse_darboux(out, fns[0], step.factorization_energy or 0.0)
        elif step.step_kind == "crum":
            lams = step.factorization_energies or (step.factorization_energy,)
            out, _ = crum_iterate(out, [DarbouxSeed(f, l) for f, l in zip(fns, lams)])
        else:
            raise ValueError(f"replay does not handle {step.step_kind!r} steps")
    return out
