import json

import numpy as np
import pytest

from darbouxlab.core import SampledFunction, d1, make_grid, residual
from darbouxlab.eigensolve import (
    SolveConfig,
    bound_energies,
    ground_state,
    rt_coefficients,
    second_solution,
    solve_bound_states,
    spectrum_to_json,
    zero_mode,
)
from darbouxlab.errors import LongRangeError, NodefulError, WindowExhaustedError, ZeroCrossingError

from oracles import fd_levels, harmonic_eigenfunction, ode_reflection


def test_harmonic_levels(harmonic):
    levels = solve_bound_states(harmonic, SolveConfig((0.0, 12.0), max_levels=5))
    np.testing.assert_allclose([p.energy for p in levels], [1, 3, 5, 7, 9], atol=1e-6)
    assert [p.node_count for p in levels] == [0, 1, 2, 3, 4]


def test_harmonic_wavefunctions_match_hermite(harmonic):
    levels = solve_bound_states(harmonic, SolveConfig((0.0, 8.0), max_levels=3))
    for p in levels:
        ref = harmonic_eigenfunction(p.index, harmonic.x)
        overlap = np.sum(ref * p.wavefunction.values) * harmonic.grid.spacing
        assert abs(overlap) == pytest.approx(1.0, abs=1e-8)
        assert residual(harmonic, p.wavefunction, p.energy) < 1e-5


def test_gaussian_well_against_dense_fd_oracle():
    """A well with no closed form: compare with a Richardson-extrapolated FD matrix."""
    V = lambda x: -8.0 * np.exp(-(x**2) / 2)
    g = make_grid(-15, 15, 3001)
    u = SampledFunction(g, V(g.x))
    got = bound_energies(u, (-8.0, -1e-6), max_levels=4)
    ref = fd_levels(V, -15, 15, len(got))
    assert len(got) >= 3
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_half_line_harmonic_keeps_odd_levels():
    g = make_grid(0, 15, 1501)
    u = SampledFunction(g, g.x**2)
    levels = solve_bound_states(u, SolveConfig((0.0, 12.0), max_levels=3, half_line=True))
    np.testing.assert_allclose([p.energy for p in levels], [3, 7, 11], atol=1e-6)
    assert levels[0].boundary_condition == "dirichlet_at_origin"


def test_poschl_teller_levels(two_soliton):
    np.testing.assert_allclose(bound_energies(two_soliton, (-6.0, -1e-6)), [-4.0, -1.0], atol=1e-6)


def test_window_exhausted_carries_partial_levels(sech2):
    with pytest.raises(WindowExhaustedError) as info:
        solve_bound_states(sech2, SolveConfig((-3.0, -1e-6), max_levels=3))
    assert len(info.value.levels) == 1


def test_empty_well_has_no_levels(free):
    assert bound_energies(free, (-1.0, -1e-6)).size == 0


def test_ground_state_and_zero_mode(harmonic):
    g = ground_state(harmonic)
    assert g.energy == pytest.approx(1.0, abs=1e-6)
    zm = zero_mode(harmonic, 1.0)
    assert np.all(zm.values[5:-5] > 0)
    with pytest.raises(NodefulError):
        zero_mode(harmonic, 3.0)


def test_second_solution_wronskian(harmonic):
    psi = ground_state(harmonic).wavefunction
    chi = second_solution(harmonic, 1.0, psi)
    h = harmonic.grid.spacing
    W = psi.values * d1(chi.values, h) - chi.values * d1(psi.values, h)
    sl = slice(1000, 2000)  # |x| < 5, where both functions are well resolved
    np.testing.assert_allclose(W[sl], 1.0, atol=1e-5)


def test_second_solution_rejects_nodes(harmonic):
    with pytest.raises(ZeroCrossingError):
        second_solution(harmonic, 3.0, SampledFunction(harmonic.grid, harmonic_eigenfunction(1, harmonic.x)))


class TestScattering:
    def test_free_particle_is_transparent(self, free):
        sd = rt_coefficients(free, [0.5, 1.0, 3.0])
        np.testing.assert_allclose(sd.abs_t, 1.0, atol=1e-9)
        np.testing.assert_allclose(sd.abs_r, 0.0, atol=1e-9)

    def test_sech2_is_reflectionless(self, sech2, two_soliton):
        k = np.linspace(0.2, 4.0, 20)
        for u in (sech2, two_soliton):
            sd = rt_coefficients(u, k)
            assert np.max(sd.abs_r) < 1e-6
            np.testing.assert_allclose(sd.abs_t, 1.0, atol=1e-6)

    def test_barrier_against_adaptive_ode_oracle(self):
        V = lambda x: 0.5 * np.exp(-(x**2))
        g = make_grid(-15, 15, 3001)
        u = SampledFunction(g, V(g.x))
        k = np.array([0.3, 1.0, 2.0])
        sd = rt_coefficients(u, k)
        assert np.max(sd.flux_defect()) < 1e-8
        for kk, r, t in zip(k, sd.reflection, sd.transmission):
            r_ref, t_ref = ode_reflection(V, kk, -15, 15)
            assert abs(r - r_ref) < 1e-6
            assert abs(t - t_ref) < 1e-6

    def test_long_range_rejected(self, harmonic):
        with pytest.raises(LongRangeError):
            rt_coefficients(harmonic, [1.0])

    def test_empty_k_list(self, sech2):
        assert rt_coefficients(sech2, []).wavenumbers.size == 0


def test_spectrum_json(harmonic):
    cfg = SolveConfig((0.0, 6.0), max_levels=2)
    doc = json.loads(spectrum_to_json(solve_bound_states(harmonic, cfg), cfg))
    assert [lv["nodes"] for lv in doc["levels"]] == [0, 1]
    assert doc["config"]["boundary_condition"] == "decay_both_edges"
