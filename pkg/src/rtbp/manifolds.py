"""Invariant manifolds of the resonant orbits and their splitting.

The hyperbolic resonant orbit is a fixed point of an iterated section
map.  Its one-dimensional stable/unstable manifolds are globalized from
a linear fundamental domain, transported to the opposite section where
the reversing symmetry places symmetric homoclinic points on the axis
px = 0, and the oriented splitting angle between the manifolds is
measured there.  An independent finite-difference cross-check of the
angle closes the error budget.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import involution, momentum_from_jacobi, vector_field
from .flow import (IntegratorConfig, NoCrossingError, SectionSpec,
                   SIGMA_MINUS, SIGMA_PLUS, YDOT_MINUS, YDOT_PLUS,
                   energy_injection, poincare_map, propagate,
                   section_chart_derivative, section_crossings_in_span)
from .resonance import (PeriodicOrbitRecord, ResonanceSpec, get_resonance,
                        refine_periodic, seed_from_two_body)

__all__ = [
    "FundamentalDomain", "HomoclinicRecord", "fundamental_domain",
    "globalize_manifold", "find_symmetric_homoclinic", "splitting_angle",
    "continue_homoclinic_family", "splitting_zero_scan",
    "splitting_crosscheck",
]

_OPPOSITE = {"sigma+": SIGMA_MINUS, "sigma-": SIGMA_PLUS,
             "ydot+": YDOT_MINUS, "ydot-": YDOT_PLUS}

# eta sign selecting the unstable-manifold branch whose first symmetric
# homoclinic is the outer (resp. inner) one; fixed empirically at the
# low-J seed level and kept consistent by continuation
BRANCH_SIGN = {"outer": +1, "inner": -1}


def _scan_config(cfg: IntegratorConfig) -> IntegratorConfig:
    """Reduced-accuracy integrator settings for bracketing sweeps; roots
    located this way are always re-polished at the working accuracy."""
    return replace(cfg, local_error_tolerance=max(cfg.local_error_tolerance,
                                                  3e-12))


def lift_section_point(x: float, px: float, J: float, mu: float,
                       py_near: float) -> np.ndarray:
    """4-D state on {y = 0} with py restored from the energy level J,
    choosing the quadratic root nearest py_near."""
    roots = [momentum_from_jacobi(x, px, J, mu, branch=b) for b in (+1, -1)]
    py = min(roots, key=lambda r: abs(r - py_near))
    return np.array([x, 0.0, px, py])


def crossings_per_period(record: PeriodicOrbitRecord, section: SectionSpec,
                         mu: float, cfg: IntegratorConfig) -> int:
    """Number of section crossings of the periodic orbit in one period.

    The orbit is a cycle of this length for the single-crossing section
    map; the count is not constant along a family (crossing pairs are
    created at section tangencies as the shape changes), so it is
    measured per orbit with the same event mechanics the section map
    uses rather than assumed.
    """
    interior = section_crossings_in_span(record.state, section, record.T, mu,
                                         cfg)
    return len(interior) + (1 if section.accepts(record.state) else 0)


@dataclass
class FundamentalDomain:
    """Linear segment between p + eta*v and its section-map image.

    Iterating this segment covers the manifold branch; err is the
    defect of the linear model at the far endpoint.
    """
    record: PeriodicOrbitRecord
    which: str                # "unstable" or "stable"
    branch_sign: int          # +1 / -1 side of the eigenvector
    eta: float
    direction: np.ndarray     # unit eigenvector in the (x, px) chart
    k: int                    # section crossings per map iterate
    k_opp: int                # opposite-section crossings per period
    err: float
    lam: float                # eigenvalue of the iterated map along v

    @property
    def time_direction(self) -> int:
        return +1 if self.which == "unstable" else -1

    def point(self, s: float, mu: float, cfg: IntegratorConfig):
        """Lift the chart point at signed displacement s along v."""
        rec = self.record
        x = rec.x + s * self.direction[0]
        px = s * self.direction[1]
        return lift_section_point(x, px, rec.J, mu, rec.py)

    def samples(self, m: int) -> np.ndarray:
        """m displacement values covering [eta, lam*eta]."""
        return self.branch_sign * np.geomspace(self.eta, self.lam * self.eta,
                                               m)


def fundamental_domain(record: PeriodicOrbitRecord, spec: ResonanceSpec,
                       which: str, branch_sign: int, mu: float,
                       cfg: IntegratorConfig = IntegratorConfig(),
                       err_tol: float = 1e-12,
                       eta0: float = 1e-5) -> FundamentalDomain:
    """Tune the displacement eta until the linear local model of the
    manifold is accurate to err_tol at the far end of the segment."""
    if which not in ("unstable", "stable"):
        raise ValueError("which must be 'unstable' or 'stable'")
    v = record.eigvec_u if which == "unstable" else record.eigvec_s
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    k = crossings_per_period(record, spec.section, mu, cfg)
    k_opp = crossings_per_period(record, _OPPOSITE[spec.section.kind], mu, cfg)
    direction = +1 if which == "unstable" else -1
    lam = record.eigenvalue
    t_cap = 3.0 * record.T
    eta = eta0
    base = np.array([record.x, 0.0])
    best = (eta, np.inf)
    for _ in range(40):
        s0 = lift_section_point(record.x + branch_sign * eta * v[0],
                                branch_sign * eta * v[1], record.J, mu,
                                record.py)
        image = poincare_map(s0, spec.section, k, mu, cfg, t_cap=t_cap,
                             direction=direction)[0]
        chart = np.array([image[0], image[2]])
        err = float(np.linalg.norm(chart - base - lam * branch_sign * eta * v))
        if err < err_tol:
            best = (eta, err)
            break
        stalled = err > 0.5 * best[1]
        if err < best[1]:
            best = (eta, err)
        if stalled:
            # halving eta no longer helps: the defect has reached the
            # evaluation noise floor of the iterated map
            break
        eta *= 0.5
    eta, err = best
    if err > 100.0 * err_tol:
        raise RuntimeError(f"could not meet local-model error {err_tol:g}; "
                           f"last err = {err:g}")
    fd = FundamentalDomain(record, which, branch_sign, eta, v, k, k_opp, err,
                           lam)
    return fd


def globalize_manifold(record: PeriodicOrbitRecord, spec: ResonanceSpec,
                       which: str, branch_sign: int, iterates: int,
                       mu: float, cfg: IntegratorConfig = IntegratorConfig(),
                       spacing: float = 1e-3, samples: int = 17,
                       max_points: int = 4000):
    """Polyline of the manifold branch on the orbit's own section.

    The fundamental segment is discretized and iterated by the section
    map; midpoints (in the segment parameter) are inserted adaptively
    where consecutive images separate by more than `spacing` in the
    (x, px) chart, so folds stay resolved.
    """
    fd = fundamental_domain(record, spec, which, branch_sign, mu, cfg)
    t_cap = 3.0 * record.T
    polyline = []
    for n in range(1, iterates + 1):
        ss = list(fd.samples(samples))
        imgs = {}

        def chart_image(s):
            if s not in imgs:
                state = fd.point(s, mu, cfg)
                image = poincare_map(state, spec.section, n * fd.k, mu, cfg,
                                     t_cap=n * t_cap,
                                     direction=fd.time_direction)[0]
                imgs[s] = np.array([image[0], image[2]])
            return imgs[s]

        i = 0
        while i < len(ss) - 1:
            a, b = chart_image(ss[i]), chart_image(ss[i + 1])
            if (np.linalg.norm(b - a) > spacing
                    and len(ss) + len(polyline) < max_points):
                ss.insert(i + 1, 0.5 * (ss[i] + ss[i + 1]))
            else:
                i += 1
        polyline.extend(chart_image(s) for s in ss)
        if len(polyline) >= max_points:
            break
    return np.array(polyline)


@dataclass
class HomoclinicRecord:
    """A symmetric homoclinic point on the axis px = 0 of the opposite
    section, with the oriented splitting angle measured there."""
    resonance: str
    mu: float
    J: float
    branch: str               # "outer" or "inner"
    z: np.ndarray             # 4-D state on the opposite section
    x_h: float                # its x coordinate
    n: int                    # iterated-map steps from the fundamental domain
    s: float                  # displacement of the preimage in the domain
    sigma: float              # oriented splitting angle (radians)
    w_u: np.ndarray           # unit tangent to the unstable manifold at z
    px_raw: float = 0.0       # axis residual before the tangent correction
    slope: float = 0.0        # d(px)/ds of the arrival parametrization at s

    @property
    def px_residual(self) -> float:
        return abs(self.z[2])


def _axis_coordinates(fd: FundamentalDomain, spec: ResonanceSpec, s: float,
                      m: int, mu: float, cfg: IntegratorConfig,
                      with_tangent: bool = False):
    """m-th crossing of the opposite section by the flow line through a
    fundamental-domain point.

    The manifold trace on the opposite section is the union over m of
    these images, so growing m sweeps the manifold without any
    bookkeeping on the original section.  Returns the arrival state, or
    (state, w) with the transported unit tangent in the (x, px) chart.
    """
    state = fd.point(s, mu, cfg)
    t_cap = (m + 2) * 2.0 * fd.record.T
    opp = _OPPOSITE[spec.section.kind]
    if not with_tangent:
        return poincare_map(state, opp, m, mu, cfg, t_cap=t_cap)[0]
    u = energy_injection(state, mu, cfg) @ (fd.branch_sign * fd.direction)
    z, _, _, W = poincare_map(state, opp, m, mu, cfg, t_cap=t_cap,
                              with_variational=True)
    u = W @ u
    # project onto the arrival section (remove the flow component)
    f = vector_field(z, mu, cfg.collision_floor)
    u = u - f * (u[1] / f[1])
    w = np.array([u[0], u[2]])
    w /= np.linalg.norm(w)
    return z, w


def splitting_angle_from_tangent(w_u: np.ndarray) -> float:
    """Oriented angle between the unstable tangent w_u = (w1, w2) and
    its reversibility image w_s = (w1, -w2) at an axis point."""
    w1, w2 = w_u
    sigma = 2.0 * np.arctan2(-w1, -w2)
    # fold the doubled angle into (-pi, pi]
    if sigma > np.pi:
        sigma -= 2.0 * np.pi
    elif sigma <= -np.pi:
        sigma += 2.0 * np.pi
    return sigma


def find_symmetric_homoclinic(record: PeriodicOrbitRecord,
                              spec: ResonanceSpec, branch: str, mu: float,
                              cfg: IntegratorConfig = IntegratorConfig(),
                              seed=None, samples: int = 13,
                              iterate_cap: int = 240,
                              axis_tol: float = 1e-10,
                              fast: bool = False) -> HomoclinicRecord:
    """Symmetric homoclinic point of one manifold branch.

    Without a seed, the manifold is grown iterate by iterate and the
    first axis crossing (smallest n, then smallest displacement) is
    taken: at weakly hyperbolic energies this is the primary homoclinic
    point.  With seed = (n, s, x_h) from a neighbouring energy, the
    axis condition is re-solved near that crossing, which carries the
    primary family through folds at strongly hyperbolic energies.

    fast=True trades a few digits of the angle for speed (reduced
    integrator accuracy, a looser local-model budget and a single
    tangent evaluation instead of the axis fit; sigma error ~1e-6),
    which is plenty for sign scans along a family.
    """
    wcfg = _scan_config(cfg) if fast else cfg
    fd = fundamental_domain(record, spec, "unstable", BRANCH_SIGN[branch],
                            mu, cfg)

    if seed is not None:
        n0, s_seed, x_seed, *rest = seed
        if rest:
            # the preimage displacement of a fixed arrival object
            # contracts like lam^(-periods); correct for the eigenvalue
            # change between the seed energy and this one
            lam_prev = rest[0]
            s_seed *= (lam_prev / fd.lam) ** (n0 / fd.k_opp)
        # a displacement from a neighbouring energy transfers after
        # rescaling into the current fundamental domain: moving one
        # eigenvalue factor along the segment trades against one period,
        # i.e. k_opp crossings of the arrival section
        while abs(s_seed) > fd.eta * fd.lam and n0 < 10_000:
            s_seed /= fd.lam
            n0 += fd.k_opp
        while abs(s_seed) < fd.eta and n0 > fd.k_opp:
            s_seed *= fd.lam
            n0 -= fd.k_opp
        n, s_star, px_raw, slope = _axis_root_near_seed(fd, spec, n0, s_seed,
                                                       mu, wcfg)
    else:
        # the first-crossing selection must discriminate between the
        # close pair of axis crossings a manifold lobe produces; that
        # takes full working accuracy regardless of fast
        try:
            n, s_star, px_raw, slope = _first_axis_crossing(
                fd, spec, mu, cfg, samples, iterate_cap)
        except NoCrossingError:
            n, s_star, px_raw, slope = _first_axis_sweep(
                fd, spec, mu, cfg, samples, iterate_cap)

    # After many expanding iterates the root of the computed px(s) is
    # noise-limited in the parameter s, but each computed arrival point
    # carries an accurate (px, x, sigma) triple (a nearby true manifold
    # point shadows the computed trajectory).  Sample the curve at a few
    # displacements around the root and evaluate the fits at px = 0
    # instead of trusting the parametrization.
    if abs(px_raw) > 1e-5:
        raise RuntimeError(f"homoclinic point off axis: |px| = {abs(px_raw):g}")
    if fast:
        # one full-accuracy tangent evaluation at the Newton-corrected
        # displacement (arrival px ~ px_raw^2, so the angle's axis bias
        # is negligible); remove the remaining axis residual from x by
        # sliding to px = 0 along the manifold tangent
        z, w = _axis_coordinates(fd, spec, s_star - px_raw / slope, n, mu,
                                 cfg, with_tangent=True)
        if abs(w[1]) < 1e-6:
            raise RuntimeError("manifold tangent to the axis (near-tangency)")
        x_h = float(z[0] - z[2] * w[0] / w[1])
        sigma = splitting_angle_from_tangent(w)
        zl = lift_section_point(x_h, 0.0, record.J, mu, py_near=z[3])
        if abs(zl[2]) > axis_tol:
            raise RuntimeError(
                f"homoclinic point off axis: |px| = {abs(zl[2]):g}")
        return HomoclinicRecord(record.resonance, mu, record.J, branch, zl,
                                x_h, n, float(s_star), sigma, w,
                                float(z[2]), float(slope))
    targets = (-2e-6, -1e-6, 1e-6, 2e-6)
    deg = min(2, len(targets) - 1)
    pxs, xs, sigmas = [], [], []
    w_u = None
    for target in targets:
        z, w = _axis_coordinates(fd, spec,
                                 s_star + (target - px_raw) / slope, n, mu,
                                 cfg, with_tangent=True)
        if abs(w[1]) < 1e-6:
            raise RuntimeError("manifold tangent to the axis (near-tangency)")
        pxs.append(z[2])
        xs.append(z[0])
        sigmas.append(splitting_angle_from_tangent(w))
        if w_u is None or abs(z[2]) < min(abs(p) for p in pxs[:-1]):
            w_u = w
            py_near = z[3]
    x_h = float(np.polyval(np.polyfit(pxs, xs, deg), 0.0))
    sigma = float(np.polyval(np.polyfit(pxs, sigmas, deg), 0.0))
    z = lift_section_point(x_h, 0.0, record.J, mu, py_near=py_near)
    if abs(z[2]) > axis_tol:
        raise RuntimeError(f"homoclinic point off axis: |px| = {abs(z[2]):g}")
    return HomoclinicRecord(record.resonance, mu, record.J, branch, z,
                            float(x_h), n, float(s_star), sigma, w_u,
                            px_raw, float(slope))


def _polish_axis_root(fd: FundamentalDomain, spec: ResonanceSpec, m: int,
                      sa: float, pa: float, slope: float, mu: float,
                      cfg: IntegratorConfig, px_tol: float = 1e-6,
                      max_iter: int = 8):
    """Secant polish of the axis condition px = 0 at crossing count m,
    starting from the point (sa, pa) with a slope estimate dpx/ds.

    A loose px tolerance suffices: the caller removes the remaining
    axis residual by evaluating its fits at px = 0 rather than trusting
    the parameter value.  At strong hyperbolicity the evaluation noise
    floor of px grows; stagnation above the tolerance is accepted as
    long as the best residual stays within the fit's reach.
    Returns (m, s, px, slope).
    """
    trust = 0.3 * abs(sa)
    s, px = sa, pa
    best = (s, px, slope)
    for _ in range(max_iter):
        if abs(px) < px_tol:
            return m, s, px, slope
        s_new = s - px / slope
        if abs(s_new - sa) > trust:
            raise NoCrossingError(
                f"axis-root polish left its trust region at J={fd.record.J:g}")
        px_new = float(_axis_coordinates(fd, spec, s_new, m, mu, cfg)[2])
        if s_new != s and px_new != px:
            slope = (px_new - px) / (s_new - s)
        stalled = abs(px_new) > 0.7 * abs(best[1])
        s, px = s_new, px_new
        if abs(px) < abs(best[1]):
            best = (s, px, slope)
        if stalled:
            break
    s, px, slope = best
    if abs(px) < 1e-5:
        return m, s, px, slope
    raise NoCrossingError(
        f"axis-root polish stalled at J={fd.record.J:g} (|px| = {abs(px):g})")


def _axis_root_near_seed(fd: FundamentalDomain, spec: ResonanceSpec,
                         n0: int, s_seed: float, mu: float,
                         cfg: IntegratorConfig):
    """Re-solve the axis condition near a rescaled seed displacement.

    The crossing count is allowed to shift by one in either direction,
    which absorbs section-tangency events between neighbouring energies.
    """
    coarse = _scan_config(cfg)
    ds = 1e-3 * abs(s_seed)
    last = None
    for m in (n0, n0 - 1, n0 + 1):
        if m < 1:
            continue
        try:
            pa = float(_axis_coordinates(fd, spec, s_seed, m, mu, coarse)[2])
            pb = float(_axis_coordinates(fd, spec, s_seed + ds, m, mu,
                                         coarse)[2])
            return _polish_axis_root(fd, spec, m, s_seed, pa,
                                     (pb - pa) / ds, mu, cfg)
        except NoCrossingError as exc:
            last = exc
    raise NoCrossingError(
        f"no axis crossing near seed at J={fd.record.J:g}") from last


def _first_axis_crossing(fd: FundamentalDomain, spec: ResonanceSpec,
                         mu: float, cfg: IntegratorConfig, samples: int,
                         crossing_cap: int):
    """Grow the manifold crossing by crossing of the opposite section and
    locate its first sweep over the axis px = 0.

    The sweep is bracketed at reduced integrator accuracy, advancing all
    sample trajectories one period per solver call and reading the
    intermediate crossings off the returned crossing list; the root is
    then re-polished at the working accuracy.  Returns (m, s, px, slope).
    """
    ss = fd.samples(samples)
    coarse = _scan_config(cfg)
    opp = _OPPOSITE[spec.section.kind]
    t_cap = 3.0 * fd.record.T
    k = fd.k_opp
    states = [fd.point(s, mu, cfg) for s in ss]
    for block in range(0, crossing_cap, k):
        rows = []
        for j, st in enumerate(states):
            state, _, crossings = poincare_map(st, opp, k, mu, coarse,
                                               t_cap=t_cap)
            rows.append([c[1][2] for c in crossings])
            states[j] = state
        depth = min(len(r) for r in rows)
        for j in range(depth):
            m = block + j + 1
            if m > crossing_cap:
                break
            pxs = np.array([r[j] for r in rows])
            hits = np.flatnonzero(np.sign(pxs[:-1]) != np.sign(pxs[1:]))
            for i in hits:
                if min(abs(pxs[i]), abs(pxs[i + 1])) > 0.5:
                    continue  # crossing-count slip between far legs
                root = _bracket_axis_root(fd, spec, m, ss[i], ss[i + 1],
                                          pxs[i], pxs[i + 1], mu, cfg)
                if root is not None:
                    return root
    raise NoCrossingError(
        f"no axis crossing within {crossing_cap} section crossings "
        f"at J={fd.record.J:g}")


def _first_axis_sweep(fd: FundamentalDomain, spec: ResonanceSpec, mu: float,
                      cfg: IntegratorConfig, samples: int, crossing_cap: int,
                      px_window: float = 0.5):
    """Locate the first axis sweep trajectory-by-trajectory.

    When the manifold stretches strongly before reaching the axis, the
    sweep through px = 0 occupies a tiny parameter interval and falls
    between any fixed set of samples; but every sample trajectory makes
    the same excursion, visible as a sign change between its consecutive
    small-|px| arrival crossings.  The earliest such excursion seeds a
    tracked root search in the domain parameter.
    """
    ss = fd.samples(samples)
    coarse = _scan_config(cfg)
    opp = _OPPOSITE[spec.section.kind]
    horizon = (crossing_cap / fd.k_opp + 3.0) * fd.record.T
    best = None  # (t of candidate crossing, s)
    for s in ss:
        st = fd.point(s, mu, coarse)
        crs = section_crossings_in_span(st, opp, horizon, mu, coarse)
        small = [(te, z) for te, z in crs if abs(z[2]) < px_window]
        for (t1, z1), (t2, z2) in zip(small[:-1], small[1:]):
            if np.sign(z1[2]) != np.sign(z2[2]):
                t_c = t1 if abs(z1[2]) < abs(z2[2]) else t2
                if best is None or t_c < best[0]:
                    best = (t_c, s)
                break
    if best is None:
        raise NoCrossingError(
            f"no axis sweep within {crossing_cap} section crossings "
            f"at J={fd.record.J:g}")
    return _tracked_axis_root(fd, spec, best[1], best[0], mu, cfg,
                              px_window=px_window)


def _tracked_axis_root(fd: FundamentalDomain, spec: ResonanceSpec, s0: float,
                       t0: float, mu: float, cfg: IntegratorConfig,
                       px_window: float = 0.5):
    """Root of px = 0 for the arrival crossing tracked near time t0.

    The crossing is identified by time proximity (its index can slip as
    the itinerary deforms); a guarded secant walk brackets the sign
    change, false-position iterations shrink it at scan accuracy, and
    the root is polished at fixed crossing index with the working
    accuracy.  Returns (m, s, px, slope).
    """
    opp = _OPPOSITE[spec.section.kind]
    T = fd.record.T
    coarse = _scan_config(cfg)
    spacing = abs(fd.eta) * (fd.lam - 1.0) / 8.0

    def tracked(s, t_center, acc):
        st = fd.point(s, mu, acc)
        crs = section_crossings_in_span(st, opp, t_center + 1.5 * T, mu, acc)
        # the anchor window around t0 keeps the walk from migrating to
        # smaller-|px| crossings of a different sweep (e.g. the
        # near-orbit tail the excursion returns to)
        cands = [(m, te, z) for m, (te, z) in enumerate(crs, 1)
                 if abs(te - t_center) < 1.2 * T and abs(te - t0) < 2.0 * T]
        if not cands:
            raise NoCrossingError("tracked arrival crossing lost")
        return min(cands, key=lambda c: abs(c[2][2]))

    m, t_c, z = tracked(s0, t0, coarse)
    sa, pa = s0, float(z[2])
    # guarded secant walk toward the axis until the tracked px flips sign
    ds_probe = np.copysign(1e-3 * spacing, s0)
    bracket = None
    for _ in range(60):
        _, t2, z2 = tracked(sa + ds_probe, t_c, coarse)
        p2 = float(z2[2])
        if np.sign(p2) != np.sign(pa):
            bracket = (sa, sa + ds_probe, pa, p2)
            break
        slope = (p2 - pa) / ds_probe
        step = -pa / slope if slope != 0.0 else 10.0 * ds_probe
        step = float(np.clip(step, -0.5 * spacing, 0.5 * spacing))
        _, t_c, z3 = tracked(sa + step, t2, coarse)
        p_new = float(z3[2])
        if np.sign(p_new) != np.sign(pa):
            bracket = (sa, sa + step, pa, p_new)
            break
        sa, pa = sa + step, p_new
        ds_probe = np.copysign(max(abs(step) * 0.05, 1e-6 * spacing),
                               ds_probe)
    if bracket is None:
        raise NoCrossingError(
            f"axis sweep did not bracket at J={fd.record.J:g}")
    sa, sb, pa, pb = bracket
    # false-position contraction at scan accuracy
    for _ in range(30):
        if abs(pa - pb) < 1e-3 or abs(sb - sa) < 1e-12 * abs(sa):
            break
        sm = sa - pa * (sb - sa) / (pb - pa)
        if not (min(sa, sb) < sm < max(sa, sb)):
            sm = 0.5 * (sa + sb)
        _, t_c, zm = tracked(sm, t_c, coarse)
        pm = float(zm[2])
        if np.sign(pm) == np.sign(pa):
            sa, pa = sm, pm
        else:
            sb, pb = sm, pm
    m, _, _ = tracked(0.5 * (sa + sb), t_c, coarse)
    slope = (pb - pa) / (sb - sa)
    s_mid = sa - pa / slope
    p_mid = float(_axis_coordinates(fd, spec, s_mid, m, mu, cfg)[2])
    return _polish_axis_root(fd, spec, m, s_mid, p_mid, slope, mu, cfg)


def _bracket_axis_root(fd: FundamentalDomain, spec: ResonanceSpec, m: int,
                       sa: float, sb: float, pa: float, pb: float, mu: float,
                       cfg: IntegratorConfig, depth: int = 12):
    """Polish a sign change of px between two manifold samples, or reject
    it as spurious.

    A sign change across a fold or a section-tangency jump is not an
    axis crossing; coarse bisection contracts the px span of a genuine
    crossing but not of a jump.  Returns (m, s, px, slope) or None.
    """
    coarse = _scan_config(cfg)
    for _ in range(depth):
        if abs(pa - pb) < 1e-3:
            break
        sm = 0.5 * (sa + sb)
        pm = float(_axis_coordinates(fd, spec, sm, m, mu, coarse)[2])
        if np.sign(pm) == np.sign(pa):
            sa, pa = sm, pm
        else:
            sb, pb = sm, pm
    else:
        return None
    slope = (pb - pa) / (sb - sa)
    s0 = sa - pa / slope
    try:
        p0 = float(_axis_coordinates(fd, spec, s0, m, mu, cfg)[2])
        return _polish_axis_root(fd, spec, m, s0, p0, slope, mu, cfg)
    except NoCrossingError:
        return None


def splitting_angle(hom: HomoclinicRecord) -> float:
    """Oriented splitting angle of a homoclinic record (convenience)."""
    return splitting_angle_from_tangent(hom.w_u)


def continue_homoclinic_family(records, spec: ResonanceSpec, branch: str,
                               mu: float,
                               cfg: IntegratorConfig = IntegratorConfig(),
                               seed_J: float = None, fast: bool = False):
    """Homoclinic family over a list of periodic records (ordered in J).

    The primary point is identified from scratch at the record nearest
    seed_J (weak hyperbolicity end by default) and carried to the rest
    of the family by continuation in both directions.
    """
    records = list(records)
    if not records:
        return []
    Js = np.array([r.J for r in records])
    if seed_J is None:
        # weak-hyperbolicity end: smallest eigenvalue
        i0 = int(np.argmin([r.eigenvalue for r in records]))
    else:
        i0 = int(np.argmin(np.abs(Js - seed_J)))
    out = [None] * len(records)
    out[i0] = find_symmetric_homoclinic(records[i0], spec, branch, mu, cfg,
                                        fast=fast)
    for rng in (range(i0 + 1, len(records)), range(i0 - 1, -1, -1)):
        prev, prev_rec = out[i0], records[i0]
        for i in rng:
            prev = _continuation_step(records[i], prev, prev_rec, spec,
                                      branch, mu, cfg, fast)
            prev_rec = records[i]
            out[i] = prev
    return out


def _continuation_step(rec: PeriodicOrbitRecord, prev: HomoclinicRecord,
                       prev_rec: PeriodicOrbitRecord, spec: ResonanceSpec,
                       branch: str, mu: float, cfg: IntegratorConfig,
                       fast: bool, depth: int = 4) -> HomoclinicRecord:
    """One continuation step in energy, bisecting the step (with freshly
    refined intermediate orbits) when the seeded search loses the root."""
    seed = (prev.n, prev.s, prev.x_h, prev_rec.eigenvalue)
    try:
        return find_symmetric_homoclinic(rec, spec, branch, mu, cfg,
                                         seed=seed, fast=fast)
    except NoCrossingError:
        if depth == 0:
            raise
        J_mid = 0.5 * (prev_rec.J + rec.J)
        rec_mid = refine_periodic(seed_from_two_body(J_mid, spec, mu), J_mid,
                                  spec, mu, cfg)
        mid = _continuation_step(rec_mid, prev, prev_rec, spec, branch, mu,
                                 cfg, fast, depth - 1)
        return _continuation_step(rec, mid, rec_mid, spec, branch, mu, cfg,
                                  fast, depth - 1)


def splitting_zero_scan(homs, width: float = 1e-3):
    """Bracket the sign changes of sigma along a homoclinic family.

    Returns a list of ((lo, hi)) pairs of consecutive family members
    whose angles have opposite signs; the family must be ordered in J.
    The grid-resolution brackets are narrowed to `width` separately by
    refine_splitting_zero.
    """
    homs = [h for h in homs if h is not None]
    return [(a, b) for a, b in zip(homs[:-1], homs[1:])
            if np.sign(a.sigma) != np.sign(b.sigma) and a.sigma != 0.0]


def refine_splitting_zero(lo: HomoclinicRecord, hi: HomoclinicRecord,
                          rec_lo: PeriodicOrbitRecord,
                          rec_hi: PeriodicOrbitRecord, spec: ResonanceSpec,
                          branch: str, mu: float,
                          cfg: IntegratorConfig = IntegratorConfig(),
                          width: float = 1e-3, max_iter: int = 12):
    """Narrow a sign-change bracket of sigma(J) to at most `width`.

    Each step places a trial interval of the target width around the
    secant prediction of the zero and keeps the sub-bracket that still
    changes sign, so a near-linear angle finishes in one round (two
    seeded angle evaluations).
    """
    ends = [(lo, rec_lo), (hi, rec_hi)]
    for _ in range(max_iter):
        (a, ra), (b, rb) = ends
        if b.J - a.J <= width:
            break
        z = a.J - a.sigma * (b.J - a.J) / (b.sigma - a.sigma)
        pad = 0.05 * width
        ja = np.clip(z - 0.5 * width, a.J + pad, b.J - width - pad)
        jb = ja + width
        trial = []
        for J, (h, r) in ((ja, ends[0]), (jb, ends[1])):
            rec = refine_periodic(seed_from_two_body(J, spec, mu), J, spec,
                                  mu, cfg)
            hom = find_symmetric_homoclinic(rec, spec, branch, mu, cfg,
                                            seed=(h.n, h.s, h.x_h,
                                                  r.eigenvalue), fast=True)
            trial.append((hom, rec))
        points = [ends[0], *trial, ends[1]]
        for p, q in zip(points[:-1], points[1:]):
            if np.sign(p[0].sigma) != np.sign(q[0].sigma):
                ends = [p, q]
                break
        else:
            raise RuntimeError(
                f"sign change lost while refining near J = {z:g}")
    (a, _), (b, _) = ends
    if b.J - a.J > width:
        raise RuntimeError(f"bracket stuck above width {width:g}")
    return a.J, b.J


def splitting_crosscheck(record: PeriodicOrbitRecord, spec: ResonanceSpec,
                         hom: HomoclinicRecord, mu: float,
                         cfg: IntegratorConfig = IntegratorConfig(),
                         step: float = 1e-5):
    """Independent angle estimate by manifold sampling near the axis.

    The unstable and stable manifolds are sampled where they cross the
    horizontal lines px = -2h, -h, 0, h, 2h near the homoclinic point;
    the derivative of their x-distance d(px) is formed with central
    differences at steps 2h and 4h and Richardson-extrapolated, giving
    sigma_alt = atan(d'(0)).  Returns (sigma_alt, table, discrepancy)
    where table rows are (px, x_u, x_s, x_u - x_s).
    """
    fd = fundamental_domain(record, spec, "unstable", BRANCH_SIGN[hom.branch],
                            mu, cfg)
    # local slope of px along the domain parameter at the homoclinic root
    px0, slope = hom.px_raw, hom.slope
    if slope == 0.0:
        ds = 1e-3 * abs(hom.s)
        px0 = float(_axis_coordinates(fd, spec, hom.s, hom.n, mu, cfg)[2])
        px1 = float(_axis_coordinates(fd, spec, hom.s + ds, hom.n, mu,
                                      cfg)[2])
        slope = (px1 - px0) / ds

    def x_unstable(px_target):
        s = hom.s + (px_target - px0) / slope
        z, w = _axis_coordinates(fd, spec, s, hom.n, mu, cfg,
                                 with_tangent=True)
        # slide along the computed tangent onto the sampling line
        return z[0] + (px_target - z[2]) * w[0] / w[1]

    # stable manifold sampling through the reversing symmetry: R maps
    # the unstable branch onto the stable one and flips the sign of px
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * step
    xu = {o: (hom.x_h if o == 0.0 else x_unstable(o)) for o in offsets}
    table = [(o, xu[o], xu[-o], xu[o] - xu[-o]) for o in offsets]
    d = {o: xu[o] - xu[-o] for o in offsets}
    d1 = (d[step] - d[-step]) / (2.0 * step)
    d2 = (d[2.0 * step] - d[-2.0 * step]) / (4.0 * step)
    d_extrap = (4.0 * d1 - d2) / 3.0
    sigma_alt = float(np.arctan(d_extrap))
    return sigma_alt, table, abs(hom.sigma - sigma_alt)
