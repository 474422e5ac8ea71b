"""Independent reference computations used by the tests.

Nothing here imports darbouxlab: each oracle solves the problem a different
way (dense finite-difference matrices, closed forms, series) so that
agreement is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, special


def fd_levels(potential, x_min: float, x_max: float, n_levels: int, n: int = 4000, half_line: bool = False) -> np.ndarray:
    """Lowest eigenvalues of ``-D^2 + V`` with Dirichlet walls, Richardson-extrapolated in h.

    The second-order three-point matrix is solved on two grids (h and h/2)
    and combined as ``(4 E_{h/2} - E_h) / 3``.
    """

    def levels(m):
        x = np.linspace(x_min, x_max, m + 2)[1:-1]
        h = x[1] - x[0]
        d = 2.0 / h**2 + potential(x)
        e = -np.ones(m - 1) / h**2
        return linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, n_levels - 1))[0]

    del half_line  # the Dirichlet wall at x_min already encodes psi(0) = 0
    coarse = levels(n)
    fine = levels(2 * n + 1)  # interior points: spacing exactly halves
    return (4.0 * fine - coarse) / 3.0


def fd_ground_state(potential, x: np.ndarray) -> np.ndarray:
    """Normalized positive ground state on the interior points of ``x`` (Dirichlet ends)."""
    h = x[1] - x[0]
    xi = x[1:-1]
    d = 2.0 / h**2 + potential(xi)
    e = -np.ones(xi.size - 1) / h**2
    w, v = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    psi = np.zeros_like(x)
    psi[1:-1] = v[:, 0] * np.sign(v[np.argmax(np.abs(v[:, 0])), 0])
    return psi / np.sqrt(np.sum(psi**2) * h)


def gaussian_running_integral(x: np.ndarray) -> np.ndarray:
    """``int_{-inf}^x exp(-y^2) dy / sqrt(pi)`` via erfc (full relative accuracy on the left)."""
    return 0.5 * special.erfc(-x)


def harmonic_eigenfunction(n: int, x: np.ndarray) -> np.ndarray:
    """Normalized eigenfunction of ``-D^2 + x^2`` (energy 2n + 1)."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    norm = 1.0 / np.sqrt(2.0**n * special.factorial(n) * np.sqrt(np.pi))
    return norm * np.polynomial.hermite.hermval(x, c) * np.exp(-x * x / 2)


def sech2_transmission(k: np.ndarray, ell: int) -> np.ndarray:
    """|T(k)| for ``-ell(ell+1) sech^2 x`` with integer ell: identically 1."""
    return np.ones_like(np.asarray(k, dtype=float))


def gaussian_cosine_transform(t: np.ndarray) -> np.ndarray:
    """``(1/pi) int_0^inf exp(-k^2) cos(kt) dk = exp(-t^2/4) / (2 sqrt(pi))``."""
    return np.exp(-np.asarray(t) ** 2 / 4.0) / (2.0 * np.sqrt(np.pi))


def neumann_two_terms(H: np.ndarray, ht: float) -> np.ndarray:
    """``Gamma ~ -H + K H`` with ``(K H)(t) = int H(s) H(s - t) ds`` by plain Simpson/trapezoid."""
    m = H.size
    out = -H.copy()
    w = np.full(m, ht)
    w[0] = w[-1] = 0.5 * ht
    for i in range(m):
        ker = H[np.abs(np.arange(m) - i)]
        out[i] += np.sum(w * H * ker)
    return out


def free_packet(x: np.ndarray, t: float, x0: float, k0: float, width: float) -> np.ndarray:
    """Exact free evolution of a Gaussian packet under ``i psi_t = -psi_xx``."""
    s = width * width + 2j * t
    pref = (width * width / np.pi) ** 0.25 / np.sqrt(s)
    return pref * np.exp(-((x - x0 - 2 * k0 * t) ** 2) / (2 * s) + 1j * k0 * (x - x0) - 1j * k0 * k0 * t + 1j * k0 * x0)


def ode_reflection(potential, k: float, x_min: float, x_max: float) -> tuple[complex, complex]:
    """R and T for a wave incident from the left, by adaptive RK (DOP853) from the right edge."""
    from scipy.integrate import solve_ivp

    def rhs(x, y):
        return [y[1], (potential(x) - k * k) * y[0]]

    y0 = [np.exp(1j * k * x_max), 1j * k * np.exp(1j * k * x_max)]
    sol = solve_ivp(rhs, (x_max, x_min), np.array(y0, dtype=complex), method="DOP853", rtol=1e-12, atol=1e-14)
    psi, dpsi = sol.y[0, -1], sol.y[1, -1]
    x = x_min
    A = (dpsi + 1j * k * psi) / (2j * k) * np.exp(-1j * k * x)
    B = (1j * k * psi - dpsi) / (2j * k) * np.exp(1j * k * x)
    return B / A, 1.0 / A


def ode_jost_modulus(potential, k: float, r_max: float) -> float:
    """|F(k)| from the regular solution by adaptive RK: ``k * sqrt(phi^2 + (phi'/k)^2)`` at ``r_max``."""
    from scipy.integrate import solve_ivp

    sol = solve_ivp(
        lambda r, y: [y[1], (potential(r) - k * k) * y[0]], (0.0, r_max), [0.0, 1.0], method="DOP853", rtol=1e-12, atol=1e-14
    )
    phi, dphi = sol.y[0, -1], sol.y[1, -1]
    return float(np.hypot(k * phi, dphi))
