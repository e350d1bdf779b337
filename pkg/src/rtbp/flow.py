"""Propagation, Poincare sections, and reparameterized (reduced) flows.

All integrations use a single high-order adaptive embedded method (DOP853)
with dense output.  Section crossings are located on the dense output and
polished by Newton iteration on the crossing time.

The "reduced" flows integrate the circular problem in Delaunay variables
with an angle playing the role of time (g for the 1:7 setting, ell for the
3:1 setting), carrying optional passive accumulator states that integrate
user-supplied functions of the Delaunay state along the way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import elements
from .dynamics import (COLLISION_FLOOR, jacobi_constant, variational_field,
                       vector_field)
from .elements import DelaunayState

# scipy's DOP853 clamps rtol at ~2.3e-14; keep atol at the requested local
# tolerance so the effective local error stays near 1e-15 for O(1) states.
_RTOL_FLOOR = 2.5e-14


@dataclass(frozen=True)
class IntegratorConfig:
    local_error_tolerance: float = 1.0e-15
    section_residual_tolerance: float = 1.0e-13
    max_step: float = np.inf
    collision_floor: float = COLLISION_FLOOR

    def __post_init__(self):
        if min(self.local_error_tolerance, self.section_residual_tolerance,
               self.max_step, self.collision_floor) <= 0.0:
            raise ValueError("integrator tolerances must be positive")

    @property
    def rtol(self) -> float:
        return max(self.local_error_tolerance, _RTOL_FLOOR)

    @property
    def atol(self) -> float:
        return self.local_error_tolerance


@dataclass(frozen=True)
class SectionSpec:
    """Poincare section selector.

    kind: 'sigma+' (y=0, py>0), 'sigma-' (y=0, py<0),
          'ydot+' (y=0, dy/dt>0), 'ydot-' (y=0, dy/dt<0),
          'g0' (Delaunay g=0), 'l0' (Delaunay ell=0).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("sigma+", "sigma-", "ydot+", "ydot-", "g0", "l0"):
            raise ValueError(f"unknown section kind {self.kind!r}")

    def accepts(self, s) -> bool:
        """Whether a Cartesian state on y = 0 belongs to this section."""
        if self.kind == "sigma+":
            return s[3] > 0.0
        if self.kind == "sigma-":
            return s[3] < 0.0
        ydot = s[3] - s[0]
        if self.kind == "ydot+":
            return ydot > 0.0
        if self.kind == "ydot-":
            return ydot < 0.0
        raise ValueError(f"section {self.kind!r} is not a Cartesian section")


SIGMA_PLUS = SectionSpec("sigma+")
SIGMA_MINUS = SectionSpec("sigma-")
YDOT_PLUS = SectionSpec("ydot+")
YDOT_MINUS = SectionSpec("ydot-")


class NoCrossingError(RuntimeError):
    pass


class TangencyError(RuntimeError):
    pass


def propagate(s, t_span, mu: float, cfg: IntegratorConfig = IntegratorConfig(),
              dense: bool = False):
    """Propagate a Cartesian state over t_span = (t0, t1).

    Returns the endpoint state, or (endpoint, OdeSolution) if dense=True.
    """
    s = np.asarray(s, dtype=float)
    sol = solve_ivp(lambda t, z: vector_field(z, mu, cfg.collision_floor),
                    t_span, s, method="DOP853", rtol=cfg.rtol, atol=cfg.atol,
                    max_step=cfg.max_step, dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    end = sol.y[:, -1]
    return (end, sol.sol) if dense else end


def propagate_variational(s, W0, t_span, mu: float,
                          cfg: IntegratorConfig = IntegratorConfig()):
    """Propagate state and 4x4 variational matrix; returns (state, W)."""
    z0 = np.concatenate([np.asarray(s, dtype=float),
                         np.asarray(W0, dtype=float).ravel()])
    sol = solve_ivp(lambda t, z: variational_field(z, mu, cfg.collision_floor),
                    t_span, z0, method="DOP853", rtol=cfg.rtol, atol=cfg.atol,
                    max_step=cfg.max_step)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    zf = sol.y[:, -1]
    return zf[:4], zf[4:20].reshape(4, 4)


def _refine_crossing(interp, t_guess, mu, tol, tmin, tmax):
    """Newton-polish the time of a y = 0 crossing on a dense-output patch."""
    t = t_guess
    for _ in range(60):
        s = interp(t)
        y = s[1]
        ydot = s[3] - s[0]
        if ydot == 0.0:
            raise TangencyError("tangential section crossing")
        dt = -y / ydot
        t = min(max(t + dt, tmin), tmax)
        if abs(y) < tol and abs(dt) < 1e-14 * max(1.0, abs(t)):
            return t
    s = interp(t)
    if abs(s[1]) < 10.0 * tol:
        return t
    raise RuntimeError(f"crossing refinement stalled, |y| = {abs(s[1]):g}")


def poincare_map(s, section: SectionSpec, n: int, mu: float,
                 cfg: IntegratorConfig = IntegratorConfig(),
                 t_cap: float = 500.0, direction: int = +1,
                 with_variational: bool = False):
    """n-th return of a Cartesian state to a {y=0}-based section.

    direction=+1 integrates forward in time, -1 backward (inverse map).
    Returns (image, t_return, crossings) where crossings is the list of all
    accepted intermediate section states (including the image), or
    (image, t_return, crossings, W) with the 4x4 variational matrix if
    with_variational is True.
    """
    if section.kind in ("g0", "l0"):
        raise ValueError("Delaunay sections are handled by the reduced flows")
    s = np.asarray(s, dtype=float)
    if abs(s[1]) > cfg.section_residual_tolerance * 10.0 + 1e-12:
        raise ValueError(f"state not on y=0 section: y = {s[1]:g}")

    rhs = ((lambda t, z: variational_field(z, mu, cfg.collision_floor))
           if with_variational
           else (lambda t, z: vector_field(z, mu, cfg.collision_floor)))
    z0 = (np.concatenate([s, np.eye(4).ravel()]) if with_variational
          else s.copy())

    t_end = direction * t_cap
    crossings = []
    count = 0
    t_here = 0.0
    z_here = z0
    first_chunk = True
    while count < n and abs(t_here) < t_cap * (1.0 - 1e-12):

        def event(t, z):
            return z[1]

        # terminate after enough raw crossings to cover the accepted ones
        # (not every crossing belongs to the section); extend if short
        event.terminal = 2 * (n - count) + 6
        event.direction = 0
        sol = solve_ivp(rhs, (t_here, t_end), z_here, method="DOP853",
                        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step,
                        events=event)
        if not sol.success:
            raise RuntimeError(f"integration failed: {sol.message}")
        for te, ze in zip(sol.t_events[0], sol.y_events[0]):
            if first_chunk and abs(te) < 1e-9:  # skip departure crossing
                continue
            # the event locator leaves |y| ~ |ydot| * rtol * t; explicit
            # Taylor steps of size dt = -y/ydot are exact to machine
            # precision at that scale, replacing dense-output refinement
            z = np.array(ze, dtype=float)
            for _ in range(2):
                f = rhs(te, z)
                ydot = f[1]
                if ydot == 0.0:
                    raise TangencyError("tangential section crossing")
                dt = -z[1] / ydot
                z = z + f * dt
                te = te + dt
                if abs(z[1]) < cfg.section_residual_tolerance:
                    break
            state = z[:4].copy()
            state[1] = 0.0
            if not section.accepts(state):
                continue
            count += 1
            crossings.append((te, state, z))
            if count == n:
                if with_variational:
                    return state, te, [c[:2] for c in crossings], \
                        z[4:20].reshape(4, 4)
                return state, te, [c[:2] for c in crossings]
        # nudge just past the last raw crossing before resuming so the
        # restart does not re-trigger the event there
        t_here = sol.t[-1]
        z_here = sol.y[:, -1]
        if sol.t_events[0].size and abs(t_here) < t_cap:
            f = rhs(t_here, z_here)
            t_here = t_here + direction * 1e-9
            z_here = z_here + f * direction * 1e-9
        first_chunk = False
    raise NoCrossingError(
        f"only {count} of {n} section returns within |t| <= {t_cap}")


def section_crossings_in_span(s, section: SectionSpec, t_final: float,
                              mu: float,
                              cfg: IntegratorConfig = IntegratorConfig()):
    """All accepted crossings of a {y=0}-based section in (0, t_final).

    Uses the same event location and Taylor polish as poincare_map, so
    the crossing count is consistent with iterating the section map
    (grazing crossing pairs are resolved, or missed, identically).
    Returns a list of (t, state).
    """
    rhs = lambda t, z: vector_field(z, mu, cfg.collision_floor)

    def event(t, z):
        return z[1]

    event.direction = 0
    sol = solve_ivp(rhs, (0.0, t_final), np.asarray(s, dtype=float),
                    method="DOP853", rtol=cfg.rtol, atol=cfg.atol,
                    max_step=cfg.max_step, events=event)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    out = []
    for te, ze in zip(sol.t_events[0], sol.y_events[0]):
        if abs(te) < 1e-9 or te > abs(t_final) - 1e-9:
            continue
        z = np.array(ze, dtype=float)
        for _ in range(2):
            f = rhs(te, z)
            if f[1] == 0.0:
                raise TangencyError("tangential section crossing")
            dt = -z[1] / f[1]
            z = z + f * dt
            te = te + dt
            if abs(z[1]) < cfg.section_residual_tolerance:
                break
        state = z[:4].copy()
        state[1] = 0.0
        if section.accepts(state):
            out.append((te, state))
    return out


def d_poincare_map(s, section: SectionSpec, n: int, J: float, mu: float,
                   cfg: IntegratorConfig = IntegratorConfig(),
                   t_cap: float = 500.0, direction: int = +1):
    """Derivative of the energy-restricted 2-D section map (x, px).

    Returns (image, t_return, DP2) where DP2 is the 2x2 derivative of
    (x, px) -> (x', px') on the energy level J, including the return-time
    correction and the elimination of py by the energy constraint.
    """
    image, t_ret, _, W = poincare_map(s, section, n, mu, cfg, t_cap,
                                      direction, with_variational=True)
    DP2 = section_chart_derivative(s, image, W, mu, cfg)
    return image, t_ret, DP2


def energy_injection(s, mu: float, cfg: IntegratorConfig = IntegratorConfig()):
    """4x2 matrix of tangent directions (d/dx, d/dpx) within the energy
    level through s on the section y = 0: py responds so that J stays
    fixed.  grad J follows from the Hamiltonian field, f = Omega grad J."""
    s = np.asarray(s, dtype=float)
    f0 = vector_field(s, mu, cfg.collision_floor)
    gradJ = np.array([-f0[2], -f0[3], f0[0], f0[1]])
    if abs(gradJ[3]) < 1e-10:
        raise RuntimeError("energy chart failure: dJ/dpy = 0")
    T = np.zeros((4, 2))
    T[0, 0] = 1.0
    T[2, 1] = 1.0
    T[3, 0] = -gradJ[0] / gradJ[3]
    T[3, 1] = -gradJ[2] / gradJ[3]
    return T


def section_chart_derivative(s, image, W, mu: float,
                             cfg: IntegratorConfig = IntegratorConfig()):
    """Reduce a 4x4 flow derivative W (from s to image, both on y = 0)
    to the 2x2 derivative in the energy-section chart (x, px)."""
    f_end = vector_field(image, mu, cfg.collision_floor)
    ydot = f_end[1]
    if abs(ydot) < 1e-6:
        raise TangencyError("section derivative too small for chart")
    # project onto the section: dP = (I - f * e_y^T / ydot) W
    P = W - np.outer(f_end, W[1, :]) / ydot
    full = P @ energy_injection(s, mu, cfg)
    return full[[0, 2], :]


def monodromy_on_section(s, T: float, mu: float,
                         cfg: IntegratorConfig = IntegratorConfig()):
    """Full-period section-chart derivative of a periodic orbit through s
    (on y = 0) with known period T.  Returns (end state, 2x2 matrix)."""
    end, W = propagate_variational(s, np.eye(4), (0.0, T), mu, cfg)
    return end, section_chart_derivative(s, end, W, mu, cfg)


# ---------------------------------------------------------------------------
# Reduced flows (an angle as the independent variable)
# ---------------------------------------------------------------------------

@dataclass
class AccumulatorSet:
    """Named passive integrands evaluated along a reduced trajectory.

    Each function receives (d: DelaunayState, t, denom) where denom is the
    reparameterization denominator at the current point, and returns the
    ds-rate of its accumulator (a float).
    """

    names: tuple = ()
    functions: tuple = ()

    @staticmethod
    def of(**kwargs) -> "AccumulatorSet":
        names = tuple(kwargs)
        return AccumulatorSet(names, tuple(kwargs[k] for k in names))

    def __len__(self):
        return len(self.names)


def _hamiltonian_partials_circ(d: DelaunayState, mu: float):
    """Partials of H_circ = -1/(2L^2) - G + mu DeltaH_circ wrt (L,ell,G,g)."""
    grad = mu * elements.grad_delta_h_circ(d, mu)
    grad[0] += 1.0 / d.L ** 3
    grad[2] += -1.0
    return grad


def reduced_flow_g(d0: DelaunayState, s_span, mu: float,
                   cfg: IntegratorConfig = IntegratorConfig(),
                   accumulators: AccumulatorSet = AccumulatorSet(),
                   t0: float = 0.0, dense: bool = False):
    """Circular problem with g as the independent variable (1:7 setting).

        dell/ds = dH/dL / denom,  dL/ds = -dH/dell / denom,
        dG/ds = -dH/dg / denom,   dg/ds = 1,  dt/ds = 1/denom,

    with denom = dH/dG = -1 + mu d_G DeltaH_circ (negative: this time
    variable runs against t).  State vector: (L, ell, G, t, acc...).
    g itself advances exactly linearly from d0.g.

    Returns (DelaunayState at end, t_end, accumulator array), plus the
    solve_ivp solution object if dense=True.
    """
    g0 = d0.g
    z0 = np.concatenate([[d0.L, d0.ell, d0.G, t0], np.zeros(len(accumulators))])

    def rhs(s, z):
        d = DelaunayState(z[0], z[1], z[2], g0 + s)
        grad = _hamiltonian_partials_circ(d, mu)
        denom = grad[2]
        if abs(denom) < 0.5:
            raise RuntimeError("reparameterization denominator too small")
        out = np.empty_like(z)
        out[0] = -grad[1] / denom
        out[1] = grad[0] / denom
        out[2] = -grad[3] / denom
        out[3] = 1.0 / denom
        for i, f in enumerate(accumulators.functions):
            out[4 + i] = f(d, z[3], denom)
        return out

    sol = solve_ivp(rhs, s_span, z0, method="DOP853", rtol=cfg.rtol,
                    atol=cfg.atol, dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"reduced flow failed: {sol.message}")
    zf = sol.y[:, -1]
    d_end = DelaunayState(zf[0], zf[1], zf[2], g0 + sol.t[-1])
    if dense:
        return d_end, zf[3], zf[4:].copy(), sol
    return d_end, zf[3], zf[4:].copy()


def reduced_flow_l(d0: DelaunayState, s_span, mu: float,
                   cfg: IntegratorConfig = IntegratorConfig(),
                   accumulators: AccumulatorSet = AccumulatorSet(),
                   t0: float = 0.0, dense: bool = False):
    """Circular problem with ell as the independent variable (3:1 setting).

        dL/ds = -dH/dell / denom,  dg/ds = dH/dG / denom,
        dG/ds = -dH/dg / denom,    dell/ds = 1,  dt/ds = 1/denom,

    with denom = dH/dL = 1/L^3 + mu d_L DeltaH_circ (positive ~ 3; this
    time variable runs with t).  State vector: (L, g, G, t, acc...).
    """
    l0_ = d0.ell
    z0 = np.concatenate([[d0.L, d0.g, d0.G, t0], np.zeros(len(accumulators))])

    def rhs(s, z):
        d = DelaunayState(z[0], l0_ + s, z[2], z[1])
        grad = _hamiltonian_partials_circ(d, mu)
        denom = grad[0]
        if abs(denom) < 0.5:
            raise RuntimeError("reparameterization denominator too small")
        out = np.empty_like(z)
        out[0] = -grad[1] / denom
        out[1] = grad[2] / denom
        out[2] = -grad[3] / denom
        out[3] = 1.0 / denom
        for i, f in enumerate(accumulators.functions):
            out[4 + i] = f(d, z[3], denom)
        return out

    sol = solve_ivp(rhs, s_span, z0, method="DOP853", rtol=cfg.rtol,
                    atol=cfg.atol, dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"reduced flow failed: {sol.message}")
    zf = sol.y[:, -1]
    d_end = DelaunayState(zf[0], l0_ + sol.t[-1], zf[2], zf[1])
    if dense:
        return d_end, zf[3], zf[4:].copy(), sol
    return d_end, zf[3], zf[4:].copy()


def _hamiltonian_partials_ell(d: DelaunayState, t: float, e0: float,
                              mu: float):
    """Partials of the full elliptic H wrt (L, ell, G, g) and t.

    H = -1/(2L^2) - G + P(z, t; e0) with P the exact moving-primary
    perturbation (see elements): returns (grad4, dH/dt).
    """
    r, phi, dr, dphi = elements._geometry_partials(d)
    z = r * np.exp(1j * phi)
    _, dP_dr, dP_dphi, dP_dt = elements._perturbation_partials(z, t, e0, mu)
    grad = dP_dr * dr + dP_dphi * dphi
    grad[0] += 1.0 / d.L ** 3
    grad[2] += -1.0
    return grad, dP_dt


def reduced_flow_g_elliptic(d0: DelaunayState, s_span, e0: float, mu: float,
                            cfg: IntegratorConfig = IntegratorConfig(),
                            t0: float = 0.0, I0: float = 0.0):
    """Full elliptic problem (finite e0) with g as time; oracle flow.

    State (L, ell, G, t, I); dI/ds = -dH/dt / denom.  Returns
    (DelaunayState, t_end, I_end).
    """
    g0 = d0.g
    z0 = np.array([d0.L, d0.ell, d0.G, t0, I0])

    def rhs(s, z):
        d = DelaunayState(z[0], z[1], z[2], g0 + s)
        grad, dHdt = _hamiltonian_partials_ell(d, z[3], e0, mu)
        denom = grad[2]
        return np.array([
            -grad[1] / denom,
            grad[0] / denom,
            -grad[3] / denom,
            1.0 / denom,
            -dHdt / denom,
        ])

    sol = solve_ivp(rhs, s_span, z0, method="DOP853", rtol=cfg.rtol,
                    atol=cfg.atol)
    if not sol.success:
        raise RuntimeError(f"elliptic reduced flow failed: {sol.message}")
    zf = sol.y[:, -1]
    return DelaunayState(zf[0], zf[1], zf[2], g0 + sol.t[-1]), zf[3], zf[4]


def reduced_flow_l_elliptic(d0: DelaunayState, s_span, e0: float, mu: float,
                            cfg: IntegratorConfig = IntegratorConfig(),
                            t0: float = 0.0, I0: float = 0.0):
    """Full elliptic problem (finite e0) with ell as time (3:1 oracle)."""
    l0_ = d0.ell
    z0 = np.array([d0.L, d0.g, d0.G, t0, I0])

    def rhs(s, z):
        d = DelaunayState(z[0], l0_ + s, z[2], z[1])
        grad, dHdt = _hamiltonian_partials_ell(d, z[3], e0, mu)
        denom = grad[0]
        return np.array([
            -grad[1] / denom,
            grad[2] / denom,
            -grad[3] / denom,
            1.0 / denom,
            -dHdt / denom,
        ])

    sol = solve_ivp(rhs, s_span, z0, method="DOP853", rtol=cfg.rtol,
                    atol=cfg.atol)
    if not sol.success:
        raise RuntimeError(f"elliptic reduced flow failed: {sol.message}")
    zf = sol.y[:, -1]
    return DelaunayState(zf[0], l0_ + sol.t[-1], zf[2], zf[1]), zf[3], zf[4]
