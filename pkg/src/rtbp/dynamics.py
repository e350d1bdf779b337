"""Planar circular restricted three-body problem in the rotating frame.

State convention: s = (x, y, px, py), nondimensional units with the
primary--secondary distance 1, total mass 1, angular rate 1 of the
rotating frame.  The large primary (mass 1-mu, "the Sun") sits at
(-mu, 0) and the small one (mass mu, "Jupiter") at (1-mu, 0), so the
center of mass is at the origin.

The rotating-frame energy (Jacobi integral) is

    J(x, y, px, py) = (px^2 + py^2)/2 + y*px - x*py
                      - (1-mu)/r_sun - mu/r_jup,

with r_sun = |(x+mu, y)| and r_jup = |(x-1+mu, y)|.  The system is
reversible with respect to R(x, y, px, py) = (x, -y, -px, py).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MU_DEFAULT = 1.0e-3
COLLISION_FLOOR = 1.0e-8


class CollisionError(ValueError):
    """Raised when a state comes closer than the collision floor to a primary."""


@dataclass(frozen=True)
class MassRatio:
    """Mass ratio mu = m_small / (m_small + m_large), 0 < mu < 1/2."""

    mu: float = MU_DEFAULT

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mass ratio must be in (0, 1/2), got {self.mu}")


@dataclass(frozen=True)
class CartesianState:
    """Rotating-frame phase point of the massless body."""

    x: float
    y: float
    px: float
    py: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.px, self.py], dtype=float)

    @staticmethod
    def from_array(s) -> "CartesianState":
        x, y, px, py = np.asarray(s, dtype=float)
        return CartesianState(x, y, px, py)


@dataclass
class VariationalState:
    """A phase point together with the 4x4 flow derivative W."""

    base: np.ndarray
    W: np.ndarray

    @staticmethod
    def initial(s) -> "VariationalState":
        return VariationalState(np.asarray(s, dtype=float), np.eye(4))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.base, self.W.ravel()])

    @staticmethod
    def from_array(z) -> "VariationalState":
        z = np.asarray(z, dtype=float)
        return VariationalState(z[:4], z[4:20].reshape(4, 4))


def _primary_offsets(mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Positions of the large and small primary in the rotating frame."""
    return np.array([-mu, 0.0]), np.array([1.0 - mu, 0.0])


def primary_distances(s, mu: float, floor: float = COLLISION_FLOOR):
    """Distances (r_sun, r_jup) from the state to the two primaries."""
    x, y = s[0], s[1]
    r_sun = np.hypot(x + mu, y)
    r_jup = np.hypot(x - (1.0 - mu), y)
    if floor is not None and (r_sun < floor or r_jup < floor):
        raise CollisionError(
            f"state within collision floor {floor:g}: r_sun={r_sun:g}, r_jup={r_jup:g}"
        )
    return r_sun, r_jup


def jacobi_constant(s, mu: float) -> float:
    """Rotating-frame energy J of a state (conserved by the flow)."""
    x, y, px, py = s[0], s[1], s[2], s[3]
    r_sun, r_jup = primary_distances(s, mu)
    return 0.5 * (px * px + py * py) + y * px - x * py \
        - (1.0 - mu) / r_sun - mu / r_jup


def _grad_potential(x, y, mu):
    """Gradient of U(x, y) = -(1-mu)/r_sun - mu/r_jup."""
    dxs, dys = x + mu, y
    dxj, dyj = x - (1.0 - mu), y
    r_sun3 = (dxs * dxs + dys * dys) ** 1.5
    r_jup3 = (dxj * dxj + dyj * dyj) ** 1.5
    ux = (1.0 - mu) * dxs / r_sun3 + mu * dxj / r_jup3
    uy = (1.0 - mu) * dys / r_sun3 + mu * dyj / r_jup3
    return ux, uy


def vector_field(s, mu: float, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """Hamiltonian vector field of J: (dx, dy, dpx, dpy)/dt."""
    x, y, px, py = s[0], s[1], s[2], s[3]
    primary_distances(s, mu, floor)
    ux, uy = _grad_potential(x, y, mu)
    return np.array([
        px + y,
        py - x,
        py - ux,
        -px - uy,
    ])


def jacobian(s, mu: float) -> np.ndarray:
    """Analytic Jacobian Df of vector_field with respect to the state."""
    x, y = s[0], s[1]
    dxs, dys = x + mu, y
    dxj, dyj = x - (1.0 - mu), y
    rs2 = dxs * dxs + dys * dys
    rj2 = dxj * dxj + dyj * dyj
    rs5 = rs2 ** 2.5
    rj5 = rj2 ** 2.5
    # Hessian of U = -(1-mu)/r_sun - mu/r_jup
    uxx = (1.0 - mu) * (rs2 - 3.0 * dxs * dxs) / rs5 \
        + mu * (rj2 - 3.0 * dxj * dxj) / rj5
    uyy = (1.0 - mu) * (rs2 - 3.0 * dys * dys) / rs5 \
        + mu * (rj2 - 3.0 * dyj * dyj) / rj5
    uxy = -3.0 * ((1.0 - mu) * dxs * dys / rs5 + mu * dxj * dyj / rj5)
    return np.array([
        [0.0, 1.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0, 1.0],
        [-uxx, -uxy, 0.0, 1.0],
        [-uxy, -uyy, -1.0, 0.0],
    ])


def variational_field(z, mu: float, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """RHS of the flow + variational system; z = (state, W.ravel())."""
    z = np.asarray(z, dtype=float)
    s = z[:4]
    W = z[4:20].reshape(4, 4)
    ds = vector_field(s, mu, floor)
    dW = jacobian(s, mu) @ W
    return np.concatenate([ds, dW.ravel()])


def involution(s) -> np.ndarray:
    """Reversing symmetry R(x, y, px, py) = (x, -y, -px, py)."""
    s = np.asarray(s, dtype=float)
    return np.array([s[0], -s[1], -s[2], s[3]])


def momentum_from_jacobi(x: float, px: float, J: float, mu: float,
                         branch: int = +1) -> float:
    """Recover py on the section y = 0 from the energy condition J(s) = J.

    The energy condition is quadratic in py with roots x +/- sqrt(disc);
    ``branch`` selects the root (both roots may share the same sign, so
    this is a root choice, not a sign choice).
    """
    s0 = np.array([x, 0.0, px, 0.0])
    r_sun, r_jup = primary_distances(s0, mu)
    # J = py^2/2 - x*py + (px^2/2 - (1-mu)/r_sun - mu/r_jup)
    c = 0.5 * px * px - (1.0 - mu) / r_sun - mu / r_jup - J
    disc = x * x - 2.0 * c
    if disc < 0.0:
        raise ValueError(
            f"no real py on energy level J={J:.6g} at (x, px)=({x:.6g}, {px:.6g})"
        )
    root = np.sqrt(disc)
    return x + root if branch > 0 else x - root


def effective_potential_x(x: float, mu: float) -> float:
    """d/dx of the collinear effective potential; zero at the collinear
    equilibria.  On y = 0 an equilibrium satisfies x = dU/dx."""
    ux, _ = _grad_potential(x, 0.0, mu)
    return x - ux


def find_collinear_equilibrium(mu: float, bracket=None) -> float:
    """Locate a collinear equilibrium by root finding in x (diagnostic).

    The default bracket isolates the equilibrium just outside the small
    primary (x slightly above 1).
    """
    from scipy.optimize import brentq

    if bracket is None:
        bracket = (1.0 - mu + 1e-4, 2.0)
    return brentq(lambda x: effective_potential_x(x, mu), *bracket,
                  xtol=1e-14, rtol=8.9e-16)
