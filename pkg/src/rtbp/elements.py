"""Delaunay elements, anomaly conversions, and the perturbing potential.

Delaunay variables in the rotating frame: L = sqrt(semi-major axis),
ell = mean anomaly, G = angular momentum, g = argument of perihelion
measured in the rotating frame.  Eccentricity e = sqrt(1 - G^2/L^2).

The rotating-frame Hamiltonian splits as

    H = -1/(2 L^2) - G + mu * delta_h_circ(L, ell, G, g)

for the circular problem, and the primaries' eccentricity e0 adds the
time-periodic term mu * e0 * (delta_h_ell1_plus * e^{it} + c.c.) + O(e0^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import CollisionError

ECC_FLOOR = 1.0e-6


class DegenerateOrbitError(ValueError):
    """Raised for (near-)circular or zero-angular-momentum osculating orbits."""


@dataclass(frozen=True)
class DelaunayState:
    """Action-angle elements (L, ell, G, g) of the osculating ellipse."""

    L: float
    ell: float
    G: float
    g: float

    @property
    def e(self) -> float:
        e2 = 1.0 - (self.G / self.L) ** 2
        if e2 < 0.0:
            if e2 > -1e-12:
                return 0.0
            raise ValueError(f"|G| > L: G={self.G}, L={self.L}")
        return np.sqrt(e2)

    def as_array(self) -> np.ndarray:
        return np.array([self.L, self.ell, self.G, self.g])

    @staticmethod
    def from_array(d) -> "DelaunayState":
        L, ell, G, g = np.asarray(d, dtype=float)
        return DelaunayState(L, ell, G, g)


@dataclass(frozen=True)
class ExtendedState:
    """Delaunay elements extended by the action I conjugate to time t."""

    delaunay: DelaunayState
    I: float
    t: float


# ---------------------------------------------------------------------------
# Anomalies
# ---------------------------------------------------------------------------

def solve_kepler(ell: float, e: float) -> float:
    """Solve u - e sin u = ell for the eccentric anomaly u.

    Newton iteration with a bisection fallback; continuous in ell
    (u(ell + 2 pi k) = u(ell) + 2 pi k).
    """
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must be in [0, 1), got {e}")
    ell = float(ell)
    k = np.floor((ell + np.pi) / (2.0 * np.pi))
    lr = ell - 2.0 * np.pi * k  # reduced to [-pi, pi)
    u = lr + e * np.sin(lr)
    for _ in range(50):
        f = u - e * np.sin(u) - lr
        if abs(f) < 1e-15:
            break
        du = f / (1.0 - e * np.cos(u))
        # keep the iterate inside the guaranteed bracket [lr - e, lr + e]
        if abs(du) > e + 1e-12:
            du = np.sign(du) * e
        u -= du
    else:  # pragma: no cover - Newton with the clamp always converges
        raise RuntimeError("Kepler solver failed to converge")
    # polish to full precision
    f = u - e * np.sin(u) - lr
    u -= f / (1.0 - e * np.cos(u))
    return u + 2.0 * np.pi * k


def true_anomaly(u: float, e: float) -> float:
    """True anomaly v from eccentric anomaly u (continuous, |v - u| < pi)."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must be in [0, 1), got {e}")
    beta = e / (1.0 + np.sqrt(1.0 - e * e))
    return u + 2.0 * np.arctan2(beta * np.sin(u), 1.0 - beta * np.cos(u))


def eccentric_from_true(v: float, e: float) -> float:
    """Eccentric anomaly u from true anomaly v (inverse of true_anomaly)."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must be in [0, 1), got {e}")
    beta = e / (1.0 + np.sqrt(1.0 - e * e))
    return v - 2.0 * np.arctan2(beta * np.sin(v), 1.0 + beta * np.cos(v))


# ---------------------------------------------------------------------------
# Geometry of the osculating ellipse and its Delaunay partials
# ---------------------------------------------------------------------------

def orbit_geometry(d: DelaunayState):
    """Return (e, u, v, r, phi) for a Delaunay state; phi = v + g is the
    polar angle in the rotating frame."""
    e = d.e
    u = solve_kepler(d.ell, e)
    v = true_anomaly(u, e)
    r = d.L ** 2 * (1.0 - e * np.cos(u))
    return e, u, v, r, d.g + v


def _geometry_partials(d: DelaunayState):
    """(r, phi) and their partials with respect to (L, ell, G, g).

    Returns (r, phi, dr, dphi) with dr, dphi arrays of length 4 ordered
    (L, ell, G, g).  Requires e above the degeneracy floor.
    """
    L, G = d.L, d.G
    e, u, v, r, phi = orbit_geometry(d)
    if e < ECC_FLOOR:
        raise DegenerateOrbitError(f"eccentricity {e:g} below floor {ECC_FLOOR:g}")
    one_m = 1.0 - e * np.cos(u)
    sinu, cosu = np.sin(u), np.cos(u)
    sinv = np.sin(v)

    de = np.array([G * G / (e * L ** 3), 0.0, -G / (e * L * L), 0.0])
    du = np.array([0.0, 1.0 / one_m, 0.0, 0.0]) + (sinu / one_m) * de
    dr = np.array([2.0 * r / L, 0.0, 0.0, 0.0]) \
        + (-L * L * cosu) * de + (L * L * e * sinu) * du
    dv = (np.sqrt(1.0 - e * e) / one_m) * du + (sinv / (1.0 - e * e)) * de
    dphi = dv + np.array([0.0, 0.0, 0.0, 1.0])
    return r, phi, dr, dphi


def delaunay_to_cartesian(d: DelaunayState) -> np.ndarray:
    """Rotating-frame Cartesian state (x, y, px, py) of a Delaunay state."""
    L, G = d.L, d.G
    e, u, v, r, phi = orbit_geometry(d)
    p_r = e * np.sin(u) / (L * (1.0 - e * np.cos(u)))
    p_t = G / r
    c, s = np.cos(phi), np.sin(phi)
    return np.array([
        r * c,
        r * s,
        p_r * c - p_t * s,
        p_r * s + p_t * c,
    ])


def cartesian_to_delaunay(s, mu: float = None) -> DelaunayState:
    """Osculating Delaunay elements of a rotating-frame Cartesian state.

    The transformation is independent of mu (pure two-body osculating
    elements); the argument is accepted for interface symmetry.
    """
    s = np.asarray(s, dtype=float)
    x, y, px, py = s
    r = np.hypot(x, y)
    if r == 0.0:
        raise CollisionError("state at the origin")
    energy = 0.5 * (px * px + py * py) - 1.0 / r
    if energy >= 0.0:
        raise ValueError(f"unbound osculating orbit (Kepler energy {energy:g})")
    G = x * py - y * px
    if abs(G) < ECC_FLOOR:
        raise DegenerateOrbitError(f"|G| = {abs(G):g} below floor")
    L = 1.0 / np.sqrt(-2.0 * energy)
    e2 = 1.0 - (G / L) ** 2
    if e2 < ECC_FLOOR ** 2:
        raise DegenerateOrbitError(f"eccentricity^2 = {e2:g} below floor")
    e = np.sqrt(e2)
    # r = L^2 (1 - e cos u) and r rdot = L e sin u give both components of u
    # in a uniformly well-conditioned way (arccos of either one alone loses
    # half the significant digits near u = 0 or pi).
    cosu = (1.0 - r / L ** 2) / e
    rdot = (x * px + y * py) / r
    sinu = rdot * r / (L * e)
    u = np.arctan2(sinu, cosu)
    ell = u - e * np.sin(u)
    v = true_anomaly(u, e)
    phi = np.arctan2(y, x)
    g = phi - v
    # reduce g to (-pi, pi]
    g = np.arctan2(np.sin(g), np.cos(g))
    return DelaunayState(L, ell, G, g)


# ---------------------------------------------------------------------------
# Primary ephemeris (positions of the Sun/Jupiter pair for eccentricity e0)
# ---------------------------------------------------------------------------

def primary_ephemeris(t: float, e0: float):
    """Exact (r0, v0) of the primaries' relative orbit at time t.

    Semi-major axis 1, period 2 pi, perihelion passage at t = 0.
    """
    if not 0.0 <= e0 < 1.0:
        raise ValueError(f"e0 must be in [0, 1), got {e0}")
    if e0 == 0.0:
        return 1.0, float(t)
    u0 = solve_kepler(t, e0)
    r0 = 1.0 - e0 * np.cos(u0)
    v0 = true_anomaly(u0, e0)
    return r0, v0


def _primary_offset_rot(t: float, e0: float) -> complex:
    """Complex unit-configuration vector q0 of the primaries, rotated into
    the frame rotating at unit rate: q0_rot = r0 * exp(i (v0 - t)).

    The Sun sits at -mu * q0_rot, Jupiter at (1-mu) * q0_rot.  For e0 = 0
    this is identically 1 (primaries fixed on the x-axis).
    """
    r0, v0 = primary_ephemeris(t, e0)
    return r0 * np.exp(1j * (v0 - t))


def _primary_offset_rot_dt(t: float, e0: float) -> complex:
    """Time derivative of _primary_offset_rot."""
    if e0 == 0.0:
        return 0.0 + 0.0j
    u0 = solve_kepler(t, e0)
    r0 = 1.0 - e0 * np.cos(u0)
    v0 = true_anomaly(u0, e0)
    dudt = 1.0 / r0
    drdt = e0 * np.sin(u0) * dudt
    dvdt = np.sqrt(1.0 - e0 * e0) / r0 * dudt
    return (drdt + 1j * r0 * (dvdt - 1.0)) * np.exp(1j * (v0 - t))


# ---------------------------------------------------------------------------
# Perturbing potential (shared by circular and elliptic evaluations)
# ---------------------------------------------------------------------------

def _perturbation_value(z: complex, t: float, e0: float, mu: float) -> float:
    """P(z, t; e0) = 1/|z| - (1-mu)/|z - zeta_sun| - mu/|z - zeta_jup|.

    z = r e^{i phi} is the asteroid in the rotating frame; the primaries
    sit at zeta_sun = -mu q0_rot(t), zeta_jup = (1-mu) q0_rot(t).
    mu * DeltaH_circ = P(z, t; 0), and the full Hamiltonian perturbation
    is mu*DeltaH_circ + mu*e0*DeltaH_ell = P(z, t; e0).
    """
    q0 = _primary_offset_rot(t, e0)
    rs = abs(z + mu * q0)
    rj = abs(z - (1.0 - mu) * q0)
    if rs < 1e-8 or rj < 1e-8:
        raise CollisionError(f"collision in perturbation: rs={rs:g}, rj={rj:g}")
    return 1.0 / abs(z) - (1.0 - mu) / rs - mu / rj


def _perturbation_partials(z: complex, t: float, e0: float, mu: float):
    """Value and partials (P, dP/dr, dP/dphi, dP/dt) of the perturbation."""
    r = abs(z)
    q0 = _primary_offset_rot(t, e0)
    a_s = z + mu * q0
    a_j = z - (1.0 - mu) * q0
    rs, rj = abs(a_s), abs(a_j)
    if rs < 1e-8 or rj < 1e-8:
        raise CollisionError(f"collision in perturbation: rs={rs:g}, rj={rj:g}")
    value = 1.0 / r - (1.0 - mu) / rs - mu / rj
    # d(1/|a|)/d(param) = -Re(conj(a) da/dparam)/|a|^3
    dz_dr = z / r
    dz_dphi = 1j * z
    grad_s = (1.0 - mu) / rs ** 3  # multiplies Re(conj(a_s) da_s)
    grad_j = mu / rj ** 3

    def _re(a, b):
        return (a.conjugate() * b).real

    dP_dr = -1.0 / r ** 2 + grad_s * _re(a_s, dz_dr) + grad_j * _re(a_j, dz_dr)
    dP_dphi = grad_s * _re(a_s, dz_dphi) + grad_j * _re(a_j, dz_dphi)
    dq0 = _primary_offset_rot_dt(t, e0)
    dP_dt = grad_s * _re(a_s, mu * dq0) + grad_j * _re(a_j, -(1.0 - mu) * dq0)
    return value, dP_dr, dP_dphi, dP_dt


def delta_h_circ(d: DelaunayState, mu: float) -> float:
    """Circular perturbing function: mu * DeltaH_circ equals the rotating
    Cartesian perturbation 1/r - (1-mu)/r_sun - mu/r_jup."""
    _, _, _, r, phi = orbit_geometry(d)
    return _perturbation_value(r * np.exp(1j * phi), 0.0, 0.0, mu) / mu


def delta_h_circ_decomposition(d: DelaunayState, mu: float) -> float:
    """Independent evaluation of DeltaH_circ through the inverse-distance
    kernel D[r0](r, theta) = (r^2 + r0^2 - 2 r r0 cos theta)^{-1/2}:

        mu DeltaH_circ = D[0] - (1-mu) D[-mu] - mu D[1-mu],

    with theta = v + g (the Sun at distance mu on the negative x-axis and
    Jupiter at distance 1-mu on the positive x-axis).
    """
    _, _, v, r, phi = orbit_geometry(d)
    c = np.cos(phi)

    def D(r0):
        return 1.0 / np.sqrt(r * r + r0 * r0 - 2.0 * r * r0 * c)

    return (D(0.0) - (1.0 - mu) * D(-mu) - mu * D(1.0 - mu)) / mu


def grad_delta_h_circ(d: DelaunayState, mu: float) -> np.ndarray:
    """Analytic partials of DeltaH_circ with respect to (L, ell, G, g)."""
    r, phi, dr, dphi = _geometry_partials(d)
    _, dP_dr, dP_dphi, _ = _perturbation_partials(
        r * np.exp(1j * phi), 0.0, 0.0, mu)
    return (dP_dr * dr + dP_dphi * dphi) / mu


def grad_L_delta_h_circ(d, mu):
    return grad_delta_h_circ(d, mu)[0]


def grad_ell_delta_h_circ(d, mu):
    return grad_delta_h_circ(d, mu)[1]


def grad_G_delta_h_circ(d, mu):
    return grad_delta_h_circ(d, mu)[2]


def grad_g_delta_h_circ(d, mu):
    return grad_delta_h_circ(d, mu)[3]


# ---------------------------------------------------------------------------
# First-order elliptic perturbation
# ---------------------------------------------------------------------------

def b1_plus(r: float, v: float, g: float) -> complex:
    """Positive-frequency coefficient of the unit-distance dipole kernel:

        B1(r, v, g, t) = -(2 cos t - 3 r cos(v+g+t) + r cos(v+g-t)) / (2 D^3)

    with D^2 = r^2 + 1 - 2 r cos(v+g), written as B1+ e^{it} + c.c.
    """
    theta = v + g
    D2 = r * r + 1.0 - 2.0 * r * np.cos(theta)
    if D2 <= 0.0:
        raise ValueError("kernel singular: point on the unit-distance circle")
    D3 = D2 ** 1.5
    return -(1.0 - r * np.cos(theta) - 2j * r * np.sin(theta)) / (2.0 * D3)


def delta_h_ell1_plus(d: DelaunayState, mu: float) -> complex:
    """Positive-frequency (e^{it}) coefficient of the first-order elliptic
    perturbation: H = H_circ + mu e0 (DeltaH1+ e^{it} + c.c.) + O(e0^2).

    Derived by expanding the exact moving-primary potential to first order
    in e0: with z = r e^{i(v+g)}, a_s = z + mu, a_j = z - (1-mu),

        DeltaH1+ = -((1-mu)/2) [ (Re a_s + 2i Im a_s)/|a_s|^3
                                - (Re a_j + 2i Im a_j)/|a_j|^3 ].
    """
    _, _, _, r, phi = orbit_geometry(d)
    z = r * np.exp(1j * phi)
    a_s = z + mu
    a_j = z - (1.0 - mu)
    rs, rj = abs(a_s), abs(a_j)
    if rs < 1e-8 or rj < 1e-8:
        raise CollisionError("collision with a primary")

    def term(a, ra):
        return (a.real + 2j * a.imag) / ra ** 3

    return -0.5 * (1.0 - mu) * (term(a_s, rs) - term(a_j, rj))


def delta_h_ell_exact(d: DelaunayState, t: float, e0: float, mu: float) -> float:
    """Finite-e0 elliptic perturbation DeltaH_ell(d, t; e0), defined exactly
    as (P(z, t; e0) - P(z, t; 0)) / (mu e0).  First-order oracle for
    delta_h_ell1_plus (Fourier-project in t and let e0 -> 0)."""
    if e0 <= 0.0:
        raise ValueError("e0 must be positive")
    _, _, _, r, phi = orbit_geometry(d)
    z = r * np.exp(1j * phi)
    return (_perturbation_value(z, t, e0, mu)
            - _perturbation_value(z, t, 0.0, mu)) / (mu * e0)


def h_circ(d: DelaunayState, mu: float) -> float:
    """Rotating-frame circular Hamiltonian -1/(2L^2) - G + mu DeltaH_circ."""
    return -1.0 / (2.0 * d.L ** 2) - d.G + mu * delta_h_circ(d, mu)
