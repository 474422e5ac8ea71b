import json

import numpy as np
import pytest

from darbouxlab.core import SampledFunction, make_grid, residual
from darbouxlab.eigensolve import SolveConfig, bound_energies, solve_bound_states
from darbouxlab.errors import InvalidParameterError, LevelOutOfRangeError, NoBracketError
from darbouxlab.shapeinv import (
    HARMONIC,
    POSCHL_TELLER,
    bound_state_count,
    get_family,
    si_spectrum,
    si_spectrum_to_json,
    si_wavefunction,
    swkb_quantization,
)

from oracles import fd_levels, harmonic_eigenfunction

GRID = make_grid(-15, 15, 3001)


def test_harmonic_spectrum():
    np.testing.assert_allclose(si_spectrum(HARMONIC, 1.0, 4), [0, 2, 4, 6, 8], atol=1e-6)


def test_harmonic_spectrum_against_eigensolver():
    u = SampledFunction(GRID, GRID.x**2 - 1.0)
    np.testing.assert_allclose(si_spectrum(HARMONIC, 1.0, 4), bound_energies(u, (-1.5, 9.5), max_levels=5), atol=1e-5)


@pytest.mark.parametrize("A", [2.0, 3.0, 2.5])
def test_poschl_teller_against_eigensolver(A):
    levels = si_spectrum(POSCHL_TELLER, A, bound_state_count(POSCHL_TELLER, A) - 1)
    np.testing.assert_allclose(levels, [A * A - (A - n) ** 2 for n in range(len(levels))], atol=1e-6)
    vm = lambda x: A * A - A * (A + 1) / np.cosh(x) ** 2
    u = SampledFunction(GRID, vm(GRID.x))
    found = bound_energies(u, (-1e-6, A * A - 1e-6), max_levels=len(levels))
    np.testing.assert_allclose(levels, found, atol=1e-5)
    np.testing.assert_allclose(levels, fd_levels(vm, -15, 15, len(levels)), atol=1e-5)


def test_poschl_teller_two():
    np.testing.assert_allclose(si_spectrum(POSCHL_TELLER, 2.0, 1), [0, 3], atol=1e-6)


def test_n_max_zero():
    assert si_spectrum(HARMONIC, 1.0, 0) == [0.0]


def test_invalid_parameters():
    with pytest.raises(InvalidParameterError):
        si_spectrum(POSCHL_TELLER, -1.0, 1)
    with pytest.raises(InvalidParameterError):
        si_spectrum(HARMONIC, 1.0, -1)
    with pytest.raises(InvalidParameterError):
        get_family("morse")


def test_level_out_of_range():
    with pytest.raises(LevelOutOfRangeError):
        si_wavefunction(POSCHL_TELLER, 2.0, 2, GRID)
    with pytest.raises(LevelOutOfRangeError):
        si_spectrum(POSCHL_TELLER, 2.0, 2)


class TestWavefunctions:
    def test_ground_state_is_gaussian(self):
        psi = si_wavefunction(HARMONIC, 1.0, 0, GRID)
        np.testing.assert_allclose(psi.values, harmonic_eigenfunction(0, GRID.x), atol=1e-8)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_harmonic_ladder(self, n):
        psi = si_wavefunction(HARMONIC, 1.0, n, GRID)
        overlap = np.sum(psi.values * harmonic_eigenfunction(n, GRID.x)) * GRID.spacing
        assert abs(overlap) == pytest.approx(1.0, abs=1e-4)

    def test_harmonic_ladder_vs_eigensolver(self):
        u = SampledFunction(GRID, GRID.x**2 - 1.0)
        ref = solve_bound_states(u, SolveConfig((-1.5, 5.0), max_levels=3))[2].wavefunction
        psi = si_wavefunction(HARMONIC, 1.0, 2, GRID)
        assert abs(np.sum(psi.values * ref.values) * GRID.spacing) == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("A,n", [(3.0, 1), (3.0, 2), (2.0, 1)])
    def test_poschl_teller_residual(self, A, n):
        psi = si_wavefunction(POSCHL_TELLER, A, n, GRID)
        u = SampledFunction(GRID, POSCHL_TELLER.v_minus(GRID.x, A))
        energy = si_spectrum(POSCHL_TELLER, A, n)[n]
        assert residual(u, psi, energy) <= 1e-3


class TestSwkb:
    def test_ground_level(self):
        assert swkb_quantization(lambda y: y, 0) == pytest.approx(0.0, abs=1e-12)

    def test_harmonic_closed_form(self):
        assert swkb_quantization(lambda y: y, 2) == pytest.approx(4.0, abs=1e-6)

    def test_exact_on_harmonic(self):
        algebraic = si_spectrum(HARMONIC, 1.0, 5)
        for n in range(6):
            assert swkb_quantization(lambda y: y, n) == pytest.approx(algebraic[n], abs=1e-5)

    def test_exact_on_poschl_teller(self):
        assert swkb_quantization(lambda y: 3.0 * np.tanh(y), 1) == pytest.approx(5.0, abs=1e-5)

    def test_no_bracket_beyond_bound_count(self):
        with pytest.raises(NoBracketError):
            swkb_quantization(lambda y: 2.0 * np.tanh(y), 3)


def test_spectrum_json():
    doc = json.loads(si_spectrum_to_json(HARMONIC, 1.0, si_spectrum(HARMONIC, 1.0, 2)))
    assert [lv["energy"] for lv in doc["levels"]] == pytest.approx([0, 2, 4])
