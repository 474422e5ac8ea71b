"""Strictly isospectral one-parameter families and the Pursey / Abraham-Moses variants.

With ``u0`` the normalized ground state of the source ``V_-`` (energy ``E0``),
``I0(x) = int_c^x u0^2`` and a parameter ``lam`` outside ``[-1, 0]``:

    V_-(x; lam) = V_- - 2 D^2 ln(I0 + lam)
    u0(x; lam)  = f(lam) u0 / (I0 + lam),   f = sqrt(lam (lam + 1))

Every member shares the partner ``V_+ = w_p^2 + w_p' + E0`` with
``w_p = -u0'/u0``. The Pursey and Abraham-Moses potentials are the two
boundary members ``lam = 0`` and ``lam = -1`` (the ground level is removed
instead of kept).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    EDGE,
    SampledFunction,
    TransformRecord,
    TransformStep,
    atomic_write_text,
    cumulative_positive,
    d1,
    log_abs,
    norm2,
    second_log_derivative,
)
from .darboux import DarbouxSeed, darboux_transform, inverse_darboux, smooth_derivative
from .eigensolve import (
    SolveConfig,
    check_short_range,
    default_window,
    rt_coefficients,
    solve_bound_states,
)
from .errors import ForbiddenLambdaError, NoZeroModeError, WindowExhaustedError

BERNOULLI_RTOL = 1e-4
FORM3_TOL = 1e-6
FORM4_TOL = 1e-5
RICCATI_TOL = 1e-4
DOUBLE_DARBOUX_TOL = 1e-5
AMPLITUDE_TOL = 1e-3
SPECTRUM_TOL = 1e-5

#: tail truncation of the normalization integral must stay below this
TAIL_TOL = 1e-10


# -- ground state and its running norm -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZeroModeData:
    """Normalized ground state ``u0`` with ``I0`` from the left and ``1 - I0`` from the right."""

    potential: SampledFunction
    energy: float
    u0: SampledFunction
    i_left: np.ndarray
    i_right: np.ndarray
    tail_error: float
    half_line: bool

    @property
    def i0(self) -> SampledFunction:
        return self.u0.with_values(self.i_left, label="I0")

    @property
    def w_p(self) -> np.ndarray:
        return -smooth_derivative(self.u0.values, self.u0.grid.spacing) / self.u0.values

    def shifted(self, lam: float) -> np.ndarray:
        """``I0 + lam`` evaluated from whichever side keeps full relative accuracy."""
        if lam >= 0:
            return self.i_left + lam
        return (1.0 + lam) - self.i_right


def _tail_integral(y2: np.ndarray, h: float) -> float:
    """Integral beyond the first sample of an exponentially decaying square.

    ``y2[0]`` is the edge value and ``y2[1]`` its inner neighbour. Returns
    inf when the function is not decaying towards the edge and not already
    negligible there.
    """
    if y2[0] <= 0:
        return 0.0
    if y2[1] <= y2[0]:
        return 0.0 if y2[0] <= TAIL_TOL * 1e-3 else float("inf")
    rate = (np.log(y2[1]) - np.log(y2[0])) / h
    return float(y2[0] / rate)


def zero_mode_data(
    u: SampledFunction, window: tuple[float, float] | None = None, half_line: bool | None = None
) -> ZeroModeData:
    """Ground state of ``u`` and the running normalization integral.

    On the full line the lower limit ``-inf`` is replaced by ``x_min`` plus an
    exponential-tail estimate of the missing piece; on the half line
    (``x_min >= 0`` by default) the lower limit is the origin.
    """
    if half_line is None:
        half_line = u.grid.x_min >= 0
    lo, hi = window or default_window(u, half_line)
    if not hi > lo:
        raise NoZeroModeError("potential has no bound-state window", operation="zero_mode")
    try:
        ground = solve_bound_states(u, SolveConfig((lo, hi), max_levels=1, half_line=half_line))[0]
    except WindowExhaustedError as exc:
        raise NoZeroModeError("source potential has no normalizable ground state", operation="zero_mode") from exc
    u0 = ground.wavefunction
    y2 = u0.values**2
    h = u.grid.spacing
    left_tail = 0.0 if half_line else _tail_integral(y2[:2], h)
    right_tail = _tail_integral(y2[::-1][:2], h)
    tail = left_tail + right_tail
    if not np.isfinite(tail):
        raise NoZeroModeError("ground state is not decaying at the grid edge", operation="zero_mode")
    i_left = cumulative_positive(y2, h) + left_tail
    i_right = cumulative_positive(y2[::-1], h)[::-1] + right_tail
    total = i_left[-1] + right_tail
    return ZeroModeData(
        potential=u,
        energy=float(ground.energy),
        u0=u0,
        i_left=i_left / total,
        i_right=i_right / total,
        tail_error=tail,
        half_line=half_line,
    )


# -- DDGR family ----------------------------------------------------------------------------


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or -1.0 <= lam <= 0.0:
        raise ForbiddenLambdaError(
            f"lambda = {lam} lies in the forbidden interval [-1, 0] (I0 + lambda would vanish)",
            operation="ddgr_family",
        )
    return lam


def normalization_factor(lam: float) -> float:
    """``f(lam) = sqrt(lam (lam + 1))``, taken positive on both allowed branches."""
    lam = check_lambda(lam)
    return float(np.sqrt(lam * (lam + 1.0)))


@dataclass(frozen=True, eq=False)
class DdgrMember:
    lam: float
    potential: SampledFunction
    ground_state: SampledFunction
    superpotential_general: SampledFunction
    checks: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class DdgrFamily:
    source_potential: SampledFunction
    zero_mode: SampledFunction
    i0: SampledFunction
    ground_energy: float
    lambda_values: tuple[float, ...]
    members: tuple[DdgrMember, ...]
    record: TransformRecord
    data: ZeroModeData | None = None

    def member(self, lam: float) -> DdgrMember:
        for m in self.members:
            if m.lam == lam:
                return m
        raise KeyError(lam)


def _sup(a: np.ndarray, sl: slice) -> float:
    return float(np.max(np.abs(a[sl])))


def _member(zd: ZeroModeData, lam: float) -> DdgrMember:
    # on the half line u0 vanishes at the wall; the edge samples are never read
    with np.errstate(divide="ignore", invalid="ignore"):
        return _member_values(zd, lam)


def _member_values(zd: ZeroModeData, lam: float) -> DdgrMember:
    u = zd.potential
    u0 = zd.u0.values
    h = u.grid.spacing
    sl = u.grid.interior(EDGE)
    s = zd.shifted(lam)
    S = u.with_values(s, label="I0+lambda")
    wp = zd.w_p

    # potential: the log-derivative form and the expanded closed form
    pot_b = u.values - 2.0 * second_log_derivative(S).values
    du0 = smooth_derivative(u0, h)
    pot_d = u.values - 4.0 * u0 * du0 / s + 2.0 * u0**4 / s**2

    # general superpotential in its three forms
    w_a = wp + d1(log_abs(s), h)
    w_b = wp + u0**2 / s
    w_c = -d1(log_abs(u0) - log_abs(s), h)

    # Bernoulli equation for v = (I0 + lam) / u0^2, dv/dx from the stencil on ln|v|
    lnv = log_abs(s) - 2.0 * log_abs(u0)
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.exp(lnv) * np.sign(s)
        dv = v * d1(lnv, h)
        bern = np.abs(dv - 2.0 * v * wp - 1.0) / (1.0 + np.abs(2.0 * v * wp))
    bern = np.where(np.isfinite(bern), bern, np.inf)

    # Riccati: w_g^2 + w_g' = w_p^2 + w_p'
    ric = (w_a**2 + d1(w_a, h)) - (wp**2 + d1(wp, h))
    scale = np.maximum(1.0, np.abs(wp**2))

    f = normalization_factor(lam)
    gs = f * u0 / np.abs(s)
    ground = zd.u0.with_values(gs, label=f"ground_state[{lam:g}]")
    checks = {
        "bernoulli_residual": _sup(bern, sl),
        "form3_spread": max(_sup(w_a - w_b, sl), _sup(w_a - w_c, sl)),
        "form4_difference": _sup(pot_b - pot_d, sl),
        "riccati_residual": _sup(ric / scale, slice(2 * EDGE, -2 * EDGE)),
        "ground_state_norm": norm2(ground),
        "f": f,
    }
    return DdgrMember(
        lam=lam,
        potential=u.with_values(pot_b, label=f"ddgr[{lam:g}]"),
        ground_state=ground,
        superpotential_general=u.with_values(w_a, label=f"w_g[{lam:g}]"),
        checks=checks,
    )


def ddgr_family(
    u: SampledFunction,
    lambda_values: Sequence[float],
    window: tuple[float, float] | None = None,
    half_line: bool | None = None,
) -> DdgrFamily:
    """Build the strictly isospectral family of ``u`` for each ``lambda``.

    Each member carries a ``checks`` dict with the Bernoulli residual, the
    spread of the three superpotential forms, the difference of the two
    potential forms, the Riccati residual and the ground-state norm.
    """
    lams = [check_lambda(l) for l in lambda_values]
    zd = zero_mode_data(u, window, half_line)
    members = tuple(_member(zd, lam) for lam in lams)
    record = TransformRecord(root=u.label or "custom")
    for lam in lams:
        record = record.extended(
            TransformStep("ddgr", seed_ids=("u0",), factorization_energy=zd.energy, family_parameter=lam),
            u0=zd.u0,
        )
    return DdgrFamily(
        source_potential=u,
        zero_mode=zd.u0,
        i0=zd.i0,
        ground_energy=zd.energy,
        lambda_values=tuple(lams),
        members=members,
        record=record,
        data=zd,
    )


def fermionic_partner(family: DdgrFamily) -> SampledFunction:
    """``V_+ = w_p^2 + w_p' + E0``, with ``w_p'`` taken as ``-D^2 ln u0``."""
    zd = family.data or zero_mode_data(family.source_potential)
    wp = zd.w_p
    dwp = -second_log_derivative(zd.u0).values
    return zd.u0.with_values(wp**2 + dwp + zd.energy, label="V_plus")


def ddgr_double_darboux_check(family: DdgrFamily, tol: float = DOUBLE_DARBOUX_TOL) -> dict:
    """Verify the common partner of every family member.

    For each member two checks are made against ``V_+``: the double-Darboux
    form ``V_-(lam) = V_+ - 2 D^2 ln(1/u0(lam))`` and the partner obtained by
    transforming the member with its own ground state.
    """
    report = {"members": [], "failures": []}
    if not family.members:
        return report
    vp = fermionic_partner(family)
    sl = vp.grid.interior(2 * EDGE)
    report["v_plus"] = vp
    for m in family.members:
        eq6 = vp.values + 2.0 * second_log_derivative(m.ground_state).values
        partner, _ = darboux_transform(m.potential, DarbouxSeed(m.ground_state, family.ground_energy))
        entry = {
            "lambda": m.lam,
            "eq6_error": _sup(eq6 - m.potential.values, sl),
            "partner_error": _sup(partner.values - vp.values, sl),
        }
        entry["ok"] = entry["eq6_error"] <= tol and entry["partner_error"] <= tol
        report["members"].append(entry)
        if not entry["ok"]:
            report["failures"].append(m.lam)
    return report


# -- Pursey and Abraham-Moses ---------------------------------------------------------------


def expanded_correction(zd: ZeroModeData, lam: float) -> np.ndarray:
    """``-2 D^2 ln(I0 + lam)`` written with first derivatives only.

    With ``rho = u0^2 / (I0 + lam)`` and ``sigma0 = u0'/u0`` the correction is
    ``-2 rho (2 sigma0 - rho)``. Unlike a second difference of
    ``ln(I0 + lam)`` it does not amplify rounding where that logarithm is
    large (the deep tails at ``lam = 0`` and ``lam = -1``).
    """
    s = zd.shifted(lam) if lam not in (0.0, -1.0) else (zd.i_left if lam == 0.0 else -zd.i_right)
    rho = zd.u0.values**2 / s
    sigma0 = -zd.w_p
    return -2.0 * rho * (2.0 * sigma0 - rho)


def readding_chain(
    u: SampledFunction, scheme: str, window: tuple[float, float] | None = None, half_line: bool | None = None
) -> tuple[SampledFunction, SampledFunction]:
    """Literal two-step construction: delete the ground level, then readd.

    Returns ``(partner, result)``. The inverse step uses
    ``phi = integral / u0``, the reciprocal of the zero-energy partner
    solution ``u0 / I0`` (Pursey) or ``u0 / (1 - I0)`` (Abraham-Moses).
    """
    zd = zero_mode_data(u, window, half_line)
    integral = {"pursey": zd.i_left, "abraham_moses": zd.i_right}[scheme]
    vp, _ = darboux_transform(u, DarbouxSeed(zd.u0, zd.energy, "u0"))
    ln_phi = log_abs(integral) - log_abs(zd.u0.values)
    if not np.all(np.isfinite(ln_phi[1:-1])):
        raise NoZeroModeError("readding function is singular on the interior", operation=scheme)
    phi = np.exp(np.clip(ln_phi, -700, 700))
    out = inverse_darboux(vp, u.with_values(phi, label="phi"), zd.energy)
    return vp, out.with_values(out.values, label=scheme)


def _boundary_member(u, window, half_line, lam: float, label: str) -> SampledFunction:
    zd = zero_mode_data(u, window, half_line)
    return u.with_values(u.values + expanded_correction(zd, lam), label=label)


def pursey_transform(
    u: SampledFunction, window: tuple[float, float] | None = None, half_line: bool | None = None
) -> SampledFunction:
    """Pursey potential: ground level deleted, readded with ``u0 / I0``.

    Equivalent to the two-step :func:`readding_chain`; evaluated in the
    expanded form of :func:`expanded_correction` with ``lam = 0``.
    """
    return _boundary_member(u, window, half_line, 0.0, "pursey")


def abraham_moses_transform(
    u: SampledFunction, window: tuple[float, float] | None = None, half_line: bool | None = None
) -> SampledFunction:
    """Abraham-Moses potential: ground level deleted, readded with ``u0 / (1 - I0)``."""
    return _boundary_member(u, window, half_line, -1.0, "abraham_moses")


# -- scheme comparison ----------------------------------------------------------------------


def _spectrum(u: SampledFunction, max_levels: int = 10) -> list[float]:
    lo, hi = default_window(u)
    if not hi > lo:
        return []
    cfg = SolveConfig((lo, hi), max_levels=max_levels)
    return [p.energy for p in solve_bound_states(u, cfg, allow_partial=True)]


def compare_schemes(u: SampledFunction, lam: float, k_list: Sequence[float]) -> dict:
    """Spectra and scattering amplitudes of the source, DDGR(lam), Pursey and Abraham-Moses.

    ``report["ddgr_matches_source"]`` is true when the DDGR member reproduces
    |R| and |T| of the source within 1e-3 at every k; for the other two
    schemes the amplitude differences are only recorded. Each scheme entry
    also carries ``spectrum_matches_source`` and ``matches_source`` (spectrum
    and amplitudes both reproduced).
    """
    fam = ddgr_family(u, [lam])
    outputs = {
        "source": u,
        "ddgr": fam.members[0].potential,
        "pursey": pursey_transform(u),
        "abraham_moses": abraham_moses_transform(u),
    }
    k = np.asarray(list(k_list), dtype=float)
    if k.size:
        check_short_range(u, operation="compare_schemes")
    report: dict = {"lambda": float(lam), "k": k.tolist(), "schemes": {}}
    amps = {}
    for name, pot in outputs.items():
        entry = {"spectrum": _spectrum(pot)}
        if k.size:
            sd = rt_coefficients(pot, k, check=False)
            amps[name] = (sd.abs_r, sd.abs_t)
            entry["abs_r"] = sd.abs_r.tolist()
            entry["abs_t"] = sd.abs_t.tolist()
        report["schemes"][name] = entry
    if k.size:
        r0, t0 = amps["source"]
        for name in ("ddgr", "pursey", "abraham_moses"):
            r, t = amps[name]
            report["schemes"][name]["delta_abs_r"] = (r - r0).tolist()
            report["schemes"][name]["delta_abs_t"] = (t - t0).tolist()
            report["schemes"][name]["max_amplitude_delta"] = float(
                max(np.max(np.abs(r - r0)), np.max(np.abs(t - t0)))
            )
        report["ddgr_matches_source"] = report["schemes"]["ddgr"]["max_amplitude_delta"] <= AMPLITUDE_TOL
    else:
        report["ddgr_matches_source"] = True
    src = report["schemes"]["source"]["spectrum"]
    for name in ("ddgr", "pursey", "abraham_moses"):
        entry = report["schemes"][name]
        spec = entry["spectrum"]
        same = len(spec) == len(src) and all(abs(a - b) <= SPECTRUM_TOL for a, b in zip(spec, src))
        entry["spectrum_matches_source"] = bool(same)
        amp_ok = entry.get("max_amplitude_delta", 0.0) <= AMPLITUDE_TOL
        entry["matches_source"] = bool(same and amp_ok)
    return report


# -- export ---------------------------------------------------------------------------------


def export_family(family: DdgrFamily, out_dir: str | Path) -> Path:
    """Write one CSV per member potential and ground state plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, m in enumerate(family.members):
        pot_name = f"member_{i:03d}_potential.csv"
        gs_name = f"member_{i:03d}_ground_state.csv"
        m.potential.to_csv(out / pot_name)
        m.ground_state.to_csv(out / gs_name)
        entries.append(
            {
                "lambda": m.lam,
                "potential": pot_name,
                "ground_state": gs_name,
                "checks": {k: float(v) for k, v in m.checks.items()},
            }
        )
    manifest = {
        "ground_energy": family.ground_energy,
        "lambda_values": list(family.lambda_values),
        "grid": family.source_potential.grid.to_dict(),
        "members": entries,
        "provenance": family.record.to_dict(),
    }
    path = out / "family_manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True))
    return path
