import numpy as np
import pytest

from darbouxlab.core import DomainMismatchError, SampledFunction, make_grid
from darbouxlab.errors import DivergentIntegrandError, LongRangeError, SingularSystemError
from darbouxlab.krein import (
    JostInput,
    build_H,
    filon_cos,
    half_line_bound_states,
    jost_forward,
    jost_input_from_potential,
    krein_kernel,
    named_profile,
    potential_from_kernel,
    potential_to_csv,
    recover_potential,
    regular_solution,
    representation_phi,
    solve_fredholm,
)

from oracles import gaussian_cosine_transform, neumann_two_terms, ode_jost_modulus

R_GRID = make_grid(0.0, 8.0, 321)
R = R_GRID.x
WELL = SampledFunction(R_GRID, -0.5 * R**2 * np.exp(-(R**2) / 2), label="test_well")
INNER = (R >= 0.5) & (R <= 7.5)


@pytest.fixture(scope="module")
def round_trip():
    j = jost_input_from_potential(WELL)
    kernel = krein_kernel(j, R_GRID)
    A, V = potential_from_kernel(kernel, R_GRID)
    return j, kernel, A, V


class TestBuildH:
    def test_gaussian_profile_against_closed_form(self):
        t_grid = make_grid(0.0, 10.0, 501)
        H, trunc = build_H(named_profile("gaussian"), t_grid)
        np.testing.assert_allclose(H.values, gaussian_cosine_transform(t_grid.x), atol=1e-6)
        assert trunc < 1e-10

    def test_filon_resolves_fast_oscillation(self):
        # smooth f, but t h = 15: plain quadrature would alias; closed form Re[(1 - e^{-10(1 - it)}) / (1 - it)]
        k = np.linspace(0.0, 10.0, 201)
        t = np.array([0.0, 7.0, 300.0])
        z = 1.0 - 1j * t
        exact = np.real((1.0 - np.exp(-10.0 * z)) / z)
        np.testing.assert_allclose(filon_cos(np.exp(-k), 0.0, 10.0, t), exact, atol=1e-6)

    def test_free_data_gives_zero(self):
        H, trunc = build_H(named_profile("free"), make_grid(0.0, 4.0, 81))
        assert np.all(H.values == 0) and trunc == 0

    def test_inverse_square_divergence(self):
        with pytest.raises(DivergentIntegrandError):
            build_H(JostInput(lambda k: 1.0 / np.asarray(k, dtype=float) ** 2), make_grid(0.0, 1.0, 11))

    def test_tail_report(self):
        assert named_profile("gaussian").tail_report()["faster_than_inverse_square"]
        slow = JostInput(lambda k: 1.0 / (1.0 + np.asarray(k, dtype=float)))
        assert not slow.tail_report()["faster_than_inverse_square"]


class TestFredholm:
    def test_zero_kernel(self):
        H = SampledFunction(make_grid(0.0, 4.0, 81), np.zeros(81))
        sol = solve_fredholm(H, 1.0)
        assert np.all(sol.values == 0)

    def test_neumann_series_for_small_kernel(self):
        t_grid = make_grid(0.0, 4.0, 401)
        H = SampledFunction(t_grid, 1e-3 * gaussian_cosine_transform(t_grid.x))
        sol = solve_fredholm(H, 2.0)
        ref = neumann_two_terms(H.values, t_grid.spacing)
        np.testing.assert_allclose(sol.values, ref, atol=1e-6)
        assert sol.residual <= 1e-8

    def test_r_zero(self):
        H = SampledFunction(make_grid(0.0, 2.0, 21), np.linspace(1.0, 0.0, 21))
        sol = solve_fredholm(H, 0.0)
        assert sol.values.tolist() == [-1.0]

    def test_singular_system(self):
        # I + c * (trapezoid weights) is singular when c * 2r = -1
        r = 1.0
        t_grid = make_grid(0.0, 2.0, 41)
        H = SampledFunction(t_grid, np.full(41, -1.0 / (2 * r)))
        with pytest.raises(SingularSystemError):
            solve_fredholm(H, r)

    def test_off_lattice_r(self):
        H = SampledFunction(make_grid(0.0, 2.0, 21), np.ones(21))
        with pytest.raises(DomainMismatchError):
            solve_fredholm(H, 0.123)


class TestRecovery:
    def test_zero_data_fixed_point(self):
        g = make_grid(0.0, 4.0, 41)
        kernel = krein_kernel(named_profile("free"), g)
        assert np.max(np.abs(kernel.H.values)) <= 1e-12
        assert all(np.max(np.abs(s.values)) <= 1e-12 for s in kernel.gamma)
        A, V = potential_from_kernel(kernel, g)
        assert np.max(np.abs(A.values)) <= 1e-12
        assert np.max(np.abs(V.values)) <= 1e-12

    def test_a_at_origin(self):
        g = make_grid(0.0, 2.0, 41)
        j = named_profile("gaussian")
        A, _ = recover_potential(j, g)
        H, _ = build_H(j, make_grid(0.0, 4.0, 81))
        assert A.values[0] == pytest.approx(-2.0 * H.values[0], abs=1e-14)

    def test_round_trip_recovers_well(self, round_trip):
        _, kernel, _, V = round_trip
        assert half_line_bound_states(WELL) == 0
        assert np.max(np.abs(V.values - WELL.values)[INNER]) <= 1e-2
        assert kernel.max_residual <= 1e-8

    def test_riccati_consistency(self, round_trip):
        j, _, A, V = round_trip
        k = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
        # the recovered tail sits at the k-truncation level; taper it to zero past the inner range
        taper = np.where(R <= 7.5, 1.0, np.cos(np.pi / 2 * np.clip((R - 7.5) / 0.5, 0, 1)) ** 2)
        F_rec = jost_forward(V.with_values(V.values * taper), k)
        F_in = (1.0 + j.profile(k)) ** -0.5
        np.testing.assert_allclose(F_rec, F_in, atol=1e-2)

    def test_representation_matches_regular_solution(self, round_trip):
        _, kernel, _, _ = round_trip
        for sol in kernel.gamma[40::80]:
            for k in (0.5, 2.0):
                ref = regular_solution(WELL, k)(sol.r)
                assert representation_phi(sol, k) == pytest.approx(ref, abs=1e-2 * max(abs(ref), 0.1))

    def test_potential_csv(self, round_trip, tmp_path):
        _, _, A, V = round_trip
        text = potential_to_csv(A, V, tmp_path / "v.csv")
        rows = text.splitlines()
        assert rows[0] == "r,A,V" and len(rows) == R_GRID.n_points + 1
        assert float(rows[1].split(",")[1]) == A.values[0]


class TestForward:
    def test_free_particle(self):
        V = SampledFunction(R_GRID, np.zeros_like(R))
        np.testing.assert_allclose(jost_forward(V, [0.0, 0.3, 1.0, 5.0]), 1.0, atol=1e-10)

    def test_against_adaptive_ode_oracle(self):
        k = [0.1, 0.7, 1.5, 3.0, 8.0]
        ref = [ode_jost_modulus(lambda r: -0.5 * r * r * np.exp(-r * r / 2), kk, 8.0) for kk in k]
        np.testing.assert_allclose(jost_forward(WELL, k), ref, atol=1e-6)

    def test_high_energy_transparency(self):
        k = np.array([2.0, 5.0, 10.0, 20.0, 40.0])
        dev = np.abs(jost_forward(WELL, k) - 1.0)
        assert dev[-1] <= 1e-3
        assert np.all(np.diff(dev) < 0)

    def test_bound_state_well_is_still_defined(self):
        deep = WELL.with_values(4.0 * WELL.values)
        assert half_line_bound_states(deep) >= 1
        F = jost_forward(deep, [0.5, 1.0, 2.0])
        assert np.all(np.isfinite(F)) and np.all(F > 0)

    def test_long_range_rejected(self):
        with pytest.raises(LongRangeError):
            jost_forward(SampledFunction(R_GRID, 1.0 / (1.0 + R)), [1.0])

    def test_half_line_grid_required(self):
        with pytest.raises(DomainMismatchError):
            jost_forward(SampledFunction(make_grid(-1.0, 8.0, 91), np.zeros(91)), [1.0])


def test_jost_csv_round_trip(tmp_path):
    j = named_profile("gaussian", k_cutoff=10.0, k_quadrature_points=201)
    path = tmp_path / "jost.csv"
    j.to_csv(path)
    back = JostInput.from_csv(path)
    k = np.linspace(0.0, 10.0, 37)
    np.testing.assert_allclose(back.profile(k), np.exp(-(k**2)), atol=1e-6)
    assert back.k_cutoff == 10.0
