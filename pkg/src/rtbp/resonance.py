"""Resonant periodic orbits: seeding, Newton refinement, continuation.

A p:q mean-motion resonance of the rotating-frame circular problem is
carried by a family of symmetric periodic orbits, parameterized by the
energy J.  Each orbit is found as a fixed point of an iterated Poincare
map on the section y = 0, using the reversing symmetry
R(x, y, px, py) = (x, -y, -px, py): a point with y = 0 and px = 0 whose
half-period image again has px = 0 closes into a full symmetric orbit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import momentum_from_jacobi, vector_field
from .elements import DelaunayState, cartesian_to_delaunay
from .flow import (AccumulatorSet, IntegratorConfig, SectionSpec, SIGMA_PLUS,
                   YDOT_PLUS, energy_injection, monodromy_on_section,
                   propagate, propagate_variational, reduced_flow_g,
                   reduced_flow_l)

__all__ = [
    "ResonanceSpec", "PeriodicOrbitRecord", "RESONANCE_17", "RESONANCE_31",
    "get_resonance", "seed_from_two_body", "refine_periodic",
    "continue_family", "inner_period_T0",
]


@dataclass(frozen=True)
class ResonanceSpec:
    """Static description of one mean-motion resonance band."""
    name: str                    # "1:7" or "3:1"
    L_res: float                 # resonant value of the Delaunay action L
    base_period: float           # unperturbed period in the rotating frame
    section: SectionSpec         # surface of section carrying the map
    map_power: int               # iterates of the map fixing the orbit
    half_power: int              # iterates reaching the second symmetry point
    family_range: tuple          # (J_min, J_max) of the continued family
    melnikov_range: tuple        # J-subrange used by the splitting layer
    py_branch: int               # root of the energy condition for py
    period_bound_factor: float   # |T_J - base_period| < factor * mu
    l_bound_factor: float        # max |L - L_res| < factor * mu
    reduced_time: str            # independent variable of the reduced flow
    reduced_span: float          # signed span of one period in that variable

    def two_body_elements(self, J: float) -> DelaunayState:
        """Circular-limit resonant ellipse on energy level J, at perihelion
        on the positive x half-axis (ell = g = 0)."""
        L = self.L_res
        G = -J - 1.0 / (2.0 * L * L)
        if abs(G) >= L:
            raise ValueError(f"no resonant ellipse at J={J:g} (|G| >= L)")
        return DelaunayState(L, 0.0, G, 0.0)


RESONANCE_17 = ResonanceSpec(
    name="1:7",
    L_res=7.0 ** (1.0 / 3.0),
    base_period=14.0 * np.pi,
    section=SIGMA_PLUS,
    map_power=6,
    half_power=3,
    family_range=(-2.04, -1.56),
    melnikov_range=(-1.81, -1.56),
    py_branch=-1,
    period_bound_factor=60.0,
    l_bound_factor=7.0,
    reduced_time="g",
    reduced_span=-14.0 * np.pi,
)

RESONANCE_31 = ResonanceSpec(
    name="3:1",
    L_res=3.0 ** (-1.0 / 3.0),
    base_period=2.0 * np.pi,
    section=YDOT_PLUS,
    map_power=2,
    half_power=1,
    family_range=(-1.7314, -1.3594),
    melnikov_range=(-1.6, -1.3594),
    py_branch=+1,
    period_bound_factor=15.0,
    l_bound_factor=100.0,
    reduced_time="l",
    reduced_span=6.0 * np.pi,
)

_BY_NAME = {"1:7": RESONANCE_17, "3:1": RESONANCE_31}


def get_resonance(name: str) -> ResonanceSpec:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown resonance {name!r}; known: 1:7, 3:1")


@dataclass
class PeriodicOrbitRecord:
    """One refined symmetric resonant periodic orbit."""
    resonance: str
    mu: float
    J: float
    x: float                  # section coordinate of the symmetric point
    py: float                 # momentum recovered from the energy condition
    T: float                  # full period
    half_T: float             # time to the second symmetry point
    eigenvalue: float         # dominant eigenvalue of the full-period map
    L_max: float              # max |L - L_res| along the orbit
    residual: float           # shooting residual at the half-period point
    closure: float            # return distance after a full period
    eigvec_u: np.ndarray = None   # unstable direction in the (x, px) chart
    eigvec_s: np.ndarray = None   # stable direction in the (x, px) chart

    @property
    def state(self) -> np.ndarray:
        return np.array([self.x, 0.0, 0.0, self.py])

    @property
    def exponent(self) -> float:
        """Characteristic exponent ln(eigenvalue)."""
        return float(np.log(self.eigenvalue))

    @property
    def action(self) -> float:
        """Action label I = -J of the inner-map parameterization."""
        return -self.J


def seed_from_two_body(J: float, spec: ResonanceSpec, mu: float) -> np.ndarray:
    """Initial guess on the symmetry axis from the unperturbed resonant
    ellipse: perihelion on the positive x half-axis, y = 0, px = 0."""
    d = spec.two_body_elements(J)
    e = d.e
    x = spec.L_res ** 2 * (1.0 - e)
    py = d.G / x
    return np.array([x, 0.0, 0.0, py])


def refine_periodic(seed, J: float, spec: ResonanceSpec, mu: float,
                    cfg: IntegratorConfig = IntegratorConfig(),
                    max_iter: int = 12, n_l_samples: int = 400
                    ) -> PeriodicOrbitRecord:
    """Newton refinement of a symmetric periodic orbit at energy J.

    Half-period shooting on the reversing symmetry: unknowns (x, tau),
    equations y(tau) = 0 and px(tau) = 0, with the start point on the
    symmetry axis (y = 0, px = 0, py from the energy condition).  An
    orbit touching Fix(R) twice closes with period 2 tau.  This avoids
    any crossing counting, which is not uniform in eccentricity (surface-
    of-section crossings appear and disappear through tangencies as the
    orbit develops retrograde loops in the rotating frame).
    """
    x = float(np.asarray(seed, dtype=float).ravel()[0])
    tau = 0.5 * spec.base_period
    residual = np.inf
    converged = False
    Jac = None
    for _ in range(max_iter):
        py = momentum_from_jacobi(x, 0.0, J, mu, branch=spec.py_branch)
        p = np.array([x, 0.0, 0.0, py])
        end, W = propagate_variational(p, np.eye(4), (0.0, tau), mu, cfg)
        F = np.array([end[1], end[2]])
        f_end = vector_field(end, mu, cfg.collision_floor)
        v = W @ energy_injection(p, mu, cfg)[:, 0]
        Jac = np.array([[v[1], f_end[1]],
                        [v[2], f_end[2]]])
        residual = float(np.max(np.abs(F)))
        if residual < 1e-13:
            converged = True
            break
        dx, dtau = np.linalg.solve(Jac, F)
        # backtrack if a full step leaves the region where the energy
        # condition admits a real py on the symmetry axis
        scale = 1.0
        for _ in range(8):
            try:
                momentum_from_jacobi(x - scale * dx, 0.0, J, mu,
                                     branch=spec.py_branch)
                break
            except ValueError:
                scale *= 0.5
        else:
            raise RuntimeError(
                f"refinement left the admissible region (J={J:g}, "
                f"{spec.name})")
        x -= scale * dx
        tau -= scale * dtau
    if not converged and residual > 1e-10:
        raise RuntimeError(
            f"periodic-orbit refinement stalled at residual {residual:.3g} "
            f"(J={J:g}, {spec.name})")

    # polish (x, tau) with the converged Jacobian held fixed so the period
    # inherits only the integrator's endpoint noise, not the (looser)
    # Newton stopping threshold; the 2x2 solve stays well conditioned even
    # when the half-period point sits near a section tangency (ydot ~ 0)
    for _ in range(4):
        py = momentum_from_jacobi(x, 0.0, J, mu, branch=spec.py_branch)
        p = np.array([x, 0.0, 0.0, py])
        end = propagate(p, (0.0, tau), mu, cfg)
        F = np.array([end[1], end[2]])
        if np.max(np.abs(F)) < 5e-15:
            break
        dx, dtau = np.linalg.solve(Jac, F)
        x -= dx
        tau -= dtau
    py = momentum_from_jacobi(x, 0.0, J, mu, branch=spec.py_branch)
    p = np.array([x, 0.0, 0.0, py])
    T = 2.0 * tau
    t_half = tau
    image, DP2_full = monodromy_on_section(p, T, mu, cfg)
    closure = float(np.max(np.abs(image - p)))
    eigs, vecs = np.linalg.eig(DP2_full)
    order = np.argsort(-np.abs(eigs))
    eigenvalue = float(np.abs(eigs[order[0]]))
    eigvec_u = np.real(vecs[:, order[0]])
    eigvec_u /= np.linalg.norm(eigvec_u)
    eigvec_s = np.real(vecs[:, order[1]])
    eigvec_s /= np.linalg.norm(eigvec_s)

    # maximum deviation of the osculating action L along one period;
    # L follows from the two-body energy, which only needs |p| and r
    _, dense_sol = propagate(p, (0.0, T), mu, cfg, dense=True)
    ts = np.linspace(0.0, T, n_l_samples)
    zs = dense_sol(ts)
    r = np.hypot(zs[0], zs[1])
    kepler_energy = 0.5 * (zs[2] ** 2 + zs[3] ** 2) - 1.0 / r
    L_samples = 1.0 / np.sqrt(-2.0 * kepler_energy)
    dev = float(np.max(np.abs(L_samples - spec.L_res)))

    return PeriodicOrbitRecord(
        resonance=spec.name, mu=mu, J=J, x=x, py=py, T=T,
        half_T=t_half, eigenvalue=eigenvalue, L_max=dev,
        residual=residual, closure=closure,
        eigvec_u=eigvec_u, eigvec_s=eigvec_s)


def continue_family(spec: ResonanceSpec, mu: float,
                    cfg: IntegratorConfig = IntegratorConfig(),
                    dJ_init: float = 1e-3, j_min: float = None,
                    j_max: float = None, max_halvings: int = 4,
                    n_l_samples: int = 120):
    """Continue the family over [j_min, j_max] (default: the validated band).

    Walks from the low-eccentricity (low-J) end upward, seeding each
    Newton solve from the previous orbit and halving the step (at most
    ``max_halvings`` times per step) when refinement fails.  Returns
    records ordered by increasing J.
    """
    lo = spec.family_range[0] if j_min is None else j_min
    hi = spec.family_range[1] if j_max is None else j_max
    if not lo < hi:
        raise ValueError(f"empty continuation range [{lo:g}, {hi:g}]")

    records = []
    J = lo
    seed = seed_from_two_body(J, spec, mu)
    rec = refine_periodic(seed, J, spec, mu, cfg, n_l_samples=n_l_samples)
    records.append(rec)
    dJ = dJ_init
    while rec.J < hi - 1e-12:
        step = min(dJ, hi - rec.J)
        halvings = 0
        while True:
            J_next = rec.J + step
            try:
                nxt = refine_periodic(rec.x, J_next, spec, mu, cfg,
                                      n_l_samples=n_l_samples)
                # guard against converging onto a different symmetric
                # orbit (e.g. a non-resonant elliptic one): the resonant
                # family keeps its period within O(mu) of the base period
                if abs(nxt.T - spec.base_period) > \
                        2.0 * spec.period_bound_factor * mu:
                    raise RuntimeError("left the resonant family")
                break
            except (RuntimeError, ValueError):
                halvings += 1
                if halvings > max_halvings:
                    raise RuntimeError(
                        f"continuation stalled at J={rec.J:g} ({spec.name})")
                step *= 0.5
        rec = nxt
        records.append(rec)
        if halvings == 0:
            dJ = min(dJ_init, dJ * 2.0)
        else:
            dJ = step
    return records


def _energy_matched_L(G: float, J: float, L_guess: float, mu: float) -> float:
    """Solve -1/(2 L^2) - G + mu DeltaH_circ(L, 0, G, 0) = J for L."""
    from .elements import delta_h_circ, grad_L_delta_h_circ
    L = L_guess
    for _ in range(30):
        d = DelaunayState(L, 0.0, G, 0.0)
        F = -1.0 / (2.0 * L * L) - G + mu * delta_h_circ(d, mu) - J
        if abs(F) < 1e-15:
            break
        dF = 1.0 / L ** 3 + mu * grad_L_delta_h_circ(d, mu)
        L -= F / dF
    return L


def _reduced_half_orbit(G: float, J: float, L_guess: float,
                        spec: ResonanceSpec, mu: float,
                        cfg: IntegratorConfig):
    """Half-period reduced-flow arc from the symmetry set; returns the
    symmetry mismatch at the far end and the period-excess accumulator."""
    L = _energy_matched_L(G, J, L_guess, mu)
    d0 = DelaunayState(L, 0.0, G, 0.0)
    span = 0.5 * spec.reduced_span
    if spec.reduced_time == "g":
        # time runs against g; dt/ds = 1/denom ~ -1, so the O(mu) excess
        # of the period is the integral of 1/denom + 1.
        acc = AccumulatorSet.of(
            excess=lambda d, t, denom: 1.0 / denom + 1.0)
        d_end, _, vals = reduced_flow_g(d0, (0.0, span), mu, cfg, acc)
        mismatch = d_end.ell - np.pi
    else:
        # time runs with ell; the unperturbed dt/ds is base/span = 1/3.
        acc = AccumulatorSet.of(
            excess=lambda d, t, denom: 1.0 / denom - spec.base_period
            / spec.reduced_span)
        d_end, _, vals = reduced_flow_l(d0, (0.0, span), mu, cfg, acc)
        mismatch = d_end.g + np.pi
    return mismatch, 2.0 * vals[0] / mu, L


def inner_period_T0(record: PeriodicOrbitRecord, spec: ResonanceSpec,
                    mu: float, cfg: IntegratorConfig = IntegratorConfig()):
    """Inner-map time shift T0(I), evaluated two independent ways.

    (a) period difference: mu*T0 = T_J - base_period, from the Cartesian
        half-period shooting orbit;
    (b) a period-excess accumulator of the reduced flow over half a
        period (doubled by the reversal symmetry of the integrand), on
        the periodic orbit re-refined natively in the reduced flow.

    The native re-refinement matters: the integral amplifies any offset
    from the true periodic orbit by O(1/mu), so method (b) must sit on
    the reduced integrator's own periodic orbit, not on a point imported
    from the Cartesian one.  Returns (T0_period, T0_integral).
    """
    T0_a = (record.T - spec.base_period) / mu

    d0 = cartesian_to_delaunay(record.state)
    # secant refinement of the single transversal unknown G (L is
    # eliminated by the energy relation, ell = g = 0 pin the symmetry)
    G_prev, L = d0.G, d0.L
    m_prev, b_prev, L = _reduced_half_orbit(G_prev, record.J, L, spec, mu,
                                            cfg)
    G_cur = G_prev + 1e-9
    T0_b = b_prev
    for _ in range(8):
        m_cur, b_cur, L = _reduced_half_orbit(G_cur, record.J, L, spec,
                                              mu, cfg)
        # extrapolate the accumulator to mismatch zero: removes the
        # first-order effect of wherever the secant happens to stop
        T0_b = b_cur - m_cur * (b_cur - b_prev) / (m_cur - m_prev) \
            if m_cur != m_prev else b_cur
        if abs(m_cur) < 2e-14 or m_cur == m_prev:
            break
        G_next = G_cur - m_cur * (G_cur - G_prev) / (m_cur - m_prev)
        G_prev, m_prev, b_prev, G_cur = G_cur, m_cur, b_cur, G_next
    return T0_a, T0_b
