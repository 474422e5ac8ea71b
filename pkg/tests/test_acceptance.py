"""The thirteen acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL ...`` line; the lines are
also collected and repeated in the terminal summary (see conftest.py).
"""

import json

import numpy as np
import pytest

from darbouxlab.cli import main as cli_main
from darbouxlab.core import EDGE, SampledFunction, default_grid, make_grid, norm2, sign_changes
from darbouxlab.darboux import DarbouxSeed, adler_delete_pair, crum_iterate, darboux_transform, wronskian
from darbouxlab.eigensolve import SolveConfig, bound_energies, rt_coefficients, solve_bound_states
from darbouxlab.families import compare_schemes, ddgr_double_darboux_check, ddgr_family
from darbouxlab.krein import (
    jost_input_from_potential,
    krein_kernel,
    named_profile,
    potential_from_kernel,
)
from darbouxlab.shapeinv import HARMONIC, POSCHL_TELLER, si_spectrum, si_wavefunction, swkb_quantization
from darbouxlab.tdse import (
    check_reality,
    propagate_tdse,
    static_seed,
    tdse_darboux_forward,
    tdse_darboux_inverse,
    tdse_residual,
)

from oracles import fd_levels

RESULTS: dict[int, str] = {}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title} -- {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _sup(a, b, sl=slice(EDGE, -EDGE)):
    return float(np.max(np.abs(np.asarray(a)[sl] - np.asarray(b)[sl])))


def test_criterion_01_darboux_isospectrality(harmonic, two_soliton):
    worst = 0.0
    compared = 0
    for u, window in ((harmonic, (0.0, 12.0)), (two_soliton, (-6.0, -1e-6))):
        levels = solve_bound_states(u, SolveConfig(window, max_levels=5), allow_partial=True)
        partner, _ = darboux_transform(u, DarbouxSeed(levels[0].wavefunction, levels[0].energy))
        expected = np.array([p.energy for p in levels[1:5]])
        lo = float(np.min(partner.values)) - 1.0
        got = bound_energies(partner, (lo, window[1]), max_levels=expected.size)
        if got.size != expected.size:
            worst = np.inf
            break
        worst = max(worst, float(np.max(np.abs(got - expected))))
        compared += expected.size
    report(1, "Darboux isospectrality", worst <= 1e-5, f"{compared} levels, max |dE| = {worst:.2e} (tol 1e-5)")


def test_criterion_02_gaussian_constant_shift(harmonic):
    seed = DarbouxSeed.from_callable(harmonic, lambda x: np.exp(-x * x / 2), 1.0, "gauss")
    v, _ = darboux_transform(harmonic, seed)
    err = _sup(v.values, harmonic.values + 2.0)
    report(2, "Gaussian seed is a constant shift", err <= 1e-6, f"sup |v - (x^2 + 2)| = {err:.2e} (tol 1e-6)")


def test_criterion_03_crum_consistency(harmonic, free):
    levels = solve_bound_states(harmonic, SolveConfig((0.0, 6.0), max_levels=2))
    p0, p1 = levels
    s0 = DarbouxSeed(p0.wavefunction, p0.energy)
    v1, T = darboux_transform(harmonic, s0)
    v2, _ = darboux_transform(v1, DarbouxSeed(T(p1.wavefunction, p1.energy), p1.energy))
    crum, _ = crum_iterate(harmonic, [s0, DarbouxSeed(p1.wavefunction, p1.energy)])
    seq_err = _sup(crum.values, v2.values, slice(2 * EDGE, -2 * EDGE))
    seeds = [
        DarbouxSeed.from_callable(free, np.cosh, -1.0, "cosh x"),
        DarbouxSeed.from_callable(free, lambda x: np.sinh(2 * x), -4.0, "sinh 2x"),
    ]
    sol, _ = crum_iterate(free, seeds)
    got = bound_energies(sol, (-6.0, -1e-6))
    lvl_err = float(np.max(np.abs(got - [-4.0, -1.0]))) if got.size == 2 else np.inf
    ok = seq_err <= 1e-5 and lvl_err <= 1e-5
    report(3, "Crum consistency", ok, f"Crum vs sequential {seq_err:.2e}; two-soliton levels {got.tolist()} err {lvl_err:.2e}")


def test_criterion_04_adler_pair_deletion(harmonic):
    out = adler_delete_pair(harmonic, 0, window=(0.0, 30.0))
    finite = bool(np.all(np.isfinite(out.values)))
    got = bound_energies(out, (float(np.min(out.values)) - 1.0, 9.5), max_levels=3)
    err = float(np.max(np.abs(got - [5, 7, 9]))) if got.size == 3 else np.inf
    report(4, "Adler pair deletion", finite and err <= 1e-5, f"levels {np.round(got, 8).tolist()}, err {err:.2e}, finite={finite}")


def test_criterion_05_ddgr_strict_isospectrality(harmonic):
    lams = [0.5, 1.0, 5.0, 1e6]
    fam = ddgr_family(harmonic, lams)
    source = bound_energies(harmonic, (0.0, 10.0), max_levels=5)
    spec_err = 0.0
    f_err = 0.0
    for m in fam.members:
        got = bound_energies(m.potential, (0.0, 10.0), max_levels=5)
        spec_err = max(spec_err, float(np.max(np.abs(got - source))) if got.size == 5 else np.inf)
        s = fam.data.shifted(m.lam)
        f_numeric = 1.0 / np.sqrt(norm2(fam.zero_mode.with_values(fam.zero_mode.values / s)))
        f_err = max(f_err, abs(f_numeric - np.sqrt(m.lam * (m.lam + 1))) / np.sqrt(m.lam * (m.lam + 1)))
    close = fam.member(1e6).potential.sup_distance(harmonic)
    ok = spec_err <= 1e-5 and close <= 1e-4 and f_err <= 1e-6
    report(
        5,
        "DDGR strict isospectrality",
        ok,
        f"level err {spec_err:.2e}; lambda=1e6 distance {close:.2e}; relative f(lambda) err {f_err:.2e}",
    )


def test_criterion_06_fermionic_partner(harmonic):
    rep = ddgr_double_darboux_check(ddgr_family(harmonic, [0.5, 1.0, 5.0, 1e6]))
    worst = max(m["partner_error"] for m in rep["members"])
    report(6, "unique fermionic partner", worst <= 1e-5 and not rep["failures"], f"max partner error {worst:.2e} (tol 1e-5)")


def test_criterion_07_transmission_degeneracy(sech2):
    k = np.linspace(0.2, 4.0, 20)
    rep = compare_schemes(sech2, 2.0, k)
    delta = rep["schemes"]["ddgr"]["max_amplitude_delta"]
    src = rep["schemes"]["source"]["spectrum"]
    others = {n: rep["schemes"][n]["spectrum"] for n in ("pursey", "abraham_moses")}
    deleted = all(len(s) == len(src) - 1 for s in others.values())
    report(
        7,
        "transmission degeneracy",
        delta <= 1e-3 and deleted,
        f"DDGR max amplitude delta {delta:.2e} over 20 k; source levels {np.round(src, 6).tolist()}, "
        f"Pursey/AM levels {others}",
    )


def test_criterion_08_shape_invariance():
    g = default_grid()
    x = g.x
    h_alg = si_spectrum(HARMONIC, 1.0, 4)
    h_num = bound_energies(SampledFunction(g, x**2 - 1.0), (-1.5, 9.5), max_levels=5)
    pt_alg = si_spectrum(POSCHL_TELLER, 2.0, 1)
    pt_num = bound_energies(SampledFunction(g, 4.0 - 6.0 / np.cosh(x) ** 2), (-1e-6, 4.0 - 1e-6), max_levels=2)
    err = max(np.max(np.abs(np.array(h_alg) - h_num)), np.max(np.abs(np.array(pt_alg) - pt_num)))
    psi2 = si_wavefunction(HARMONIC, 1.0, 2, g)
    ref = solve_bound_states(SampledFunction(g, x**2 - 1.0), SolveConfig((-1.5, 5.0), max_levels=3))[2].wavefunction
    overlap = abs(float(np.sum(psi2.values * ref.values) * g.spacing))
    report(
        8,
        "shape invariance",
        err <= 1e-5 and overlap >= 0.9999,
        f"harmonic {np.round(h_alg, 8).tolist()}, PT {np.round(pt_alg, 8).tolist()}, err {err:.2e}, |<psi2>| = {overlap:.8f}",
    )


def test_criterion_09_swkb_exactness():
    got = [swkb_quantization(lambda y: y, n) for n in range(6)]
    err = float(np.max(np.abs(np.array(got) - 2.0 * np.arange(6))))
    report(9, "SUSY-WKB exactness", err <= 1e-5, f"E_n for n <= 5 err {err:.2e} (tol 1e-5)")


def test_criterion_10_tdse_intertwining():
    grid = default_grid()
    x = grid.x
    times = np.linspace(0.0, 1.0, 41)
    free = SampledFunction(grid, np.zeros_like(x))
    packet = np.exp(-((x + 4.0) ** 2) / 2 + 2j * x) / np.pi**0.25
    psi0 = propagate_tdse(free, SampledFunction(grid, packet), times)
    seed = static_seed(grid, times, 1.0)
    V1, psi1 = tdse_darboux_forward(free, seed, psi0)
    res = float(np.max(tdse_residual(V1, psi1)))
    back = tdse_darboux_inverse(V1, seed, psi1)
    _, again = tdse_darboux_forward(free, seed, back)
    sl = grid.interior(2 * EDGE)
    rt = float(
        np.max(np.linalg.norm((again.values - psi1.values)[:, sl], axis=1) / np.linalg.norm(psi1.values[:, sl], axis=1))
    )
    real = check_reality(seed)
    rmax = max(real.values())
    ok = res <= 1e-3 and rt <= 1e-4 and rmax <= 1e-10
    report(10, "TDSE intertwining", ok, f"residual {res:.2e}, round trip {rt:.2e}, reality {rmax:.2e}")


def test_criterion_11_krein_round_trip():
    g0 = make_grid(0.0, 4.0, 41)
    kz = krein_kernel(named_profile("free"), g0)
    A0, V0 = potential_from_kernel(kz, g0)
    zero = max(
        float(np.max(np.abs(kz.H.values))),
        max(float(np.max(np.abs(s.values))) for s in kz.gamma),
        float(np.max(np.abs(A0.values))),
        float(np.max(np.abs(V0.values))),
    )
    rg = make_grid(0.0, 8.0, 321)
    r = rg.x
    well = SampledFunction(rg, -0.5 * r**2 * np.exp(-(r**2) / 2))
    kernel = krein_kernel(jost_input_from_potential(well), rg)
    _, V = potential_from_kernel(kernel, rg)
    inner = (r >= 0.5) & (r <= 7.5)
    err = float(np.max(np.abs(V.values - well.values)[inner]))
    report(11, "Krein round trip", zero <= 1e-12 and err <= 1e-2, f"zero-data max {zero:.1e}; well recovered to {err:.2e} on [0.5, 7.5]")


def test_criterion_12_wronskian_sign(harmonic):
    levels = solve_bound_states(harmonic, SolveConfig((0.0, 8.0), max_levels=4))
    ok = True
    notes = []
    for k in (0, 1):
        a, b, c = levels[k], levels[k + 1], levels[k + 2]
        n1 = len(sign_changes(wronskian([a.wavefunction, b.wavefunction], harmonic, [a.energy, b.energy]).values, edge=2 * EDGE))
        n2 = len(sign_changes(wronskian([a.wavefunction, c.wavefunction], harmonic, [a.energy, c.energy]).values, edge=2 * EDGE))
        ok = ok and n1 == 0 and n2 > 0
        notes.append(f"k={k}: W(k,k+1) {n1} nodes, W(k,k+2) {n2} nodes")
    report(12, "Wronskian sign", ok, "; ".join(notes))


DEMO_SET = [
    ["spectrum", "--potential", "harmonic", "--levels", "5"],
    ["darboux", "--levels", "4"],
    ["crum", "--potential", "free", "--kappas", "1,2"],
    ["ddgr", "--lambda", "0.5,1,5", "--verify"],
    ["compare", "--potential", "poschl_teller", "--lambda", "2"],
    ["si", "--family", "poschl_teller", "--a1", "3", "--n-max", "2", "--wavefunctions"],
    ["swkb"],
    ["tdse"],
    ["krein", "--source", "forward_well"],
    ["scatter"],
]


def test_criterion_13_reproducibility(tmp_path, capsys):
    mismatched = []
    for i, argv in enumerate(DEMO_SET):
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{i}_{rep}"
            rc = cli_main(argv + ["-o", str(d), "--plot-data"])
            assert rc == 0, capsys.readouterr().err
            files = {
                str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "manifest.json"
            }
            outs.append(files)
        # re-run from the emitted manifest as well
        d = tmp_path / f"{i}_m"
        assert cli_main(["--config", str(tmp_path / f"{i}_a" / "manifest.json"), "-o", str(d)]) == 0
        files = {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "manifest.json"}
        if not (outs[0] and outs[0] == outs[1] == files):
            mismatched.append(argv[0])
        manifest = json.loads((tmp_path / f"{i}_a" / "manifest.json").read_text())
        assert manifest["config"]["command"] == argv[0]
    capsys.readouterr()
    report(
        13,
        "reproducibility",
        not mismatched,
        f"{len(DEMO_SET)} commands run twice plus manifest re-run; mismatches: {mismatched or 'none'}",
    )
