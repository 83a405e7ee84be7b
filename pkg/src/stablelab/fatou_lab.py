r"""Deterministic boundary-behaviour experiments on the unit disk.

For ``n = 2`` the Martin kernel of the unit disk factors as

.. math::

   M_B(x, e^{i\theta}) = (1-\rho^2)^{\alpha/2-1}\,
   \frac{1-\rho^2}{|x - e^{i\theta}|^2},\qquad \rho = |x|,

i.e. a power of the boundary distance times the classical Poisson kernel.
The substitution ``theta = theta_x + 2 arctan(((1-rho)/(1+rho)) tan(t/2))``
turns the Poisson measure into ``dt / 2 pi``, so Martin integrals of
densities reduce to smooth integrals in ``t`` even very close to the
boundary. Ratios ``u/h`` of two Martin integrals of densities are then
classical Poisson extensions and do not depend on ``alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BadGeometry, BandViolated, QuadratureFailure, UnboundedRatio, WitnessFailed
from .geometry import StolzParams, stolz_contains, unit_disk
from .kernels import StableParams, ball_exit_density, ball_martin, BallSpec
from .measures import TWO_PI, BoundaryMeasure, piecewise_constant, wrap

TOL_CONV = 1e-3
OSC_MIN = 0.1
BOUND_CAP = 1e6
PROBE_DEPTH = 40
RHO_START = 0.5
QUAD_RTOL = 1e-10
QUAD_ATOL = 1e-14
QUAD_START = 32
QUAD_MAX = 4096

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _polar(x):
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise BadGeometry("points must be planar")
    rho = float(np.hypot(x[0], x[1]))
    if rho >= 1:
        raise BadGeometry(f"{x} is not inside the unit disk")
    return rho, float(math.atan2(x[1], x[0]))


def _t_of_theta(theta, theta_x, rho):
    """Inverse of the Poisson substitution (angles measured from theta_x in (-pi, pi])."""
    d = np.mod(np.asarray(theta, float) - theta_x + math.pi, TWO_PI) - math.pi
    return 2 * np.arctan((1 + rho) / (1 - rho) * np.tan(d / 2))


def _theta_of_t(t, theta_x, rho):
    return theta_x + 2 * np.arctan((1 - rho) / (1 + rho) * np.tan(t / 2))


def _arc_harmonic_measure(lo: float, hi: float, theta_x: float, rho: float) -> float:
    """Poisson (classical harmonic) measure of the arc [lo, hi] seen from rho e^{i theta_x}."""
    length = hi - lo
    if length >= TWO_PI:
        return 1.0
    if rho == 0:
        return length / TWO_PI
    t_lo, t_hi = (float(v) for v in _t_of_theta(np.array([lo, hi]), theta_x, rho))
    m = (t_hi - t_lo) % TWO_PI
    contains_x = float(wrap(theta_x - lo)) <= length
    if not contains_x and m > math.pi and (t_lo > 0) == (t_hi > 0):
        m = max(t_hi - t_lo, 0.0)  # roundoff wrapped a tiny image through 2 pi
    return m / TWO_PI


def poisson_average(measure: BoundaryMeasure, x) -> float:
    """(1/2pi) int P(x, theta) U(theta) d theta for the density part of ``measure``.

    Arcs are integrated exactly. The callable part uses Gauss-Legendre on the
    t-intervals between images of the breakpoints, of theta_x + k pi/4, and
    of the geometric cuts theta_x +- (1 - rho) 4^k, refined by node doubling
    until the change is below
    ``QUAD_RTOL * |value| + QUAD_ATOL * sup``.
    """
    rho, theta_x = _polar(x)
    val = sum(v * _arc_harmonic_measure(lo, hi, theta_x, rho) for lo, hi, v in measure.arcs)
    if measure.density is None:
        return float(val)
    if rho == 0:
        cuts = wrap(np.asarray(measure.breakpoints, float) - theta_x + math.pi) - math.pi
    else:
        # the substitution compresses theta-offsets larger than ~(1 - rho) into
        # thin layers near t = +-pi; geometric cuts resolve them
        offs = (1 - rho) * 4.0 ** np.arange(0, 40)
        offs = np.concatenate([offs[offs < math.pi / 4], np.pi / 4 * np.arange(1, 4)])
        extra = theta_x + np.concatenate([offs, -offs])
        cuts = _t_of_theta(np.concatenate([np.asarray(measure.breakpoints, float), extra]), theta_x, rho)
    edges = np.unique(np.concatenate([[-math.pi, math.pi], np.clip(cuts, -math.pi, math.pi)]))
    a, b = edges[:-1], edges[1:]
    keep = b - a > 1e-15
    a, b = a[keep], b[keep]
    prev = None
    n = QUAD_START
    while n <= QUAD_MAX:
        z, w = _gauss(n)
        t = (0.5 * (b - a))[:, None] * z[None, :] + (0.5 * (a + b))[:, None]
        theta = t + theta_x if rho == 0 else _theta_of_t(t, theta_x, rho)
        quad = float(np.sum((0.5 * (b - a))[:, None] * w[None, :] * measure.U_smooth(theta))) / TWO_PI
        if prev is not None and abs(quad - prev) <= QUAD_RTOL * abs(quad) + QUAD_ATOL * measure.sup:
            return float(val + quad)
        prev, n = quad, 2 * n
    raise QuadratureFailure(f"Martin integral did not converge at x={x} (last two: {prev}, {quad})")


def martin_integral(params: StableParams, measure: BoundaryMeasure, x) -> float:
    """u(x) = int M_B(x, w) nu(dw) on the unit disk; densities are against sigma_1."""
    if params.n != 2:
        raise NotImplementedError("Martin integrals are implemented on the unit disk")
    rho, _ = _polar(x)
    val = 0.0
    if measure.has_density:
        val += (1 - rho * rho) ** (params.alpha / 2 - 1) * poisson_average(measure, x)
    for angle, mass in measure.atoms:
        val += mass * float(ball_martin(params, np.asarray(x, float), np.array([math.cos(angle), math.sin(angle)])))
    return val


def martin_ratio(params: StableParams, u_spec: BoundaryMeasure, h_spec: BoundaryMeasure, x) -> tuple[float, float, float]:
    u = martin_integral(params, u_spec, x)
    h = martin_integral(params, h_spec, x)
    if not h > 0:
        raise ValueError("h vanishes at a probe point")
    return u, h, u / h


# ---------------------------------------------------------------- approach paths

def _boundary_point(theta0):
    return np.array([math.cos(theta0), math.sin(theta0)])


@dataclass(frozen=True)
class Radial:
    theta0: float
    rho_start: float = RHO_START
    depth: int = PROBE_DEPTH

    def points(self) -> np.ndarray:
        rho = 1 - 2.0 ** -np.arange(self.depth) * (1 - self.rho_start)
        return rho[:, None] * _boundary_point(self.theta0)[None, :]

    @property
    def z(self):
        return _boundary_point(self.theta0)


@dataclass(frozen=True)
class StolzSequence:
    """Points converging to z inside the cone |y - z| < beta * delta(y).

    ``rule = "corkscrew"`` uses the corkscrew points of the disk;
    ``rule = "edge"`` puts y_j at |y_j - z| = s_j with |y_j - z| = 0.9 beta delta(y_j),
    on one side (``side = +-1``) or alternating sides (``side = 0``).
    """

    theta0: float
    beta: float = 3.0
    rule: str = "edge"
    side: int = 0
    s_start: float = 0.25
    depth: int = PROBE_DEPTH

    def points(self) -> np.ndarray:
        z = self.z
        if self.rule == "corkscrew":
            # corkscrew of B(z, r) for the unit disk: z - (r/2) z
            r = self.s_start * 2.0 ** -np.arange(self.depth)
            return (1 - r / 2)[:, None] * z[None, :]
        if self.rule != "edge":
            raise ValueError(f"unknown Stolz rule {self.rule!r}")
        if not self.beta * 0.9 > 1:
            raise BadGeometry("edge rule needs 0.9 beta > 1")
        pts = []
        for j in range(self.depth):
            s = self.s_start * 2.0 ** -j
            r1 = 1 - s / (0.9 * self.beta)
            cos_phi = (r1 * r1 + 1 - s * s) / (2 * r1)
            # 1 - cos_phi computed without cancellation
            one_minus = (s * s - (1 - r1) ** 2) / (2 * r1)
            phi = 2 * math.asin(math.sqrt(max(one_minus, 0.0) / 2)) if cos_phi > 0 else math.acos(cos_phi)
            sgn = self.side if self.side else (1 if j % 2 == 0 else -1)
            pts.append(r1 * _boundary_point(self.theta0 + sgn * phi))
        return np.array(pts)

    @property
    def z(self):
        return _boundary_point(self.theta0)


@dataclass(frozen=True)
class TangentialCircle:
    """Circle of radius rho_c internally tangent to the unit circle at theta0.

    Points are p(psi) = (1 - rho_c) z + rho_c e^{i(theta0 + psi)}; their
    boundary distance is of order psi^2 while |p - z| is of order psi.
    """

    theta0: float
    rho_c: float = 0.5
    psi_start: float = 0.5
    per_octave: int = 4
    octaves: int = 20

    def __post_init__(self):
        if not 0 < self.rho_c < 1:
            raise BadGeometry("rho_c must lie in (0, 1)")

    def point(self, psi) -> np.ndarray:
        return (1 - self.rho_c) * self.z + self.rho_c * _boundary_point(self.theta0 + psi)

    def psi_at_depth(self, delta: float) -> float:
        """Parameter at which the circle is at distance ``delta`` from the unit circle."""
        one_minus_cos = (2 * delta - delta * delta) / (2 * self.rho_c * (1 - self.rho_c))
        if one_minus_cos > 2:
            raise BadGeometry("depth not attained on the tangential circle")
        return 2 * math.asin(math.sqrt(one_minus_cos / 2))

    def points(self) -> np.ndarray:
        psi = self.psi_start * 2.0 ** (-np.arange(self.octaves * self.per_octave) / self.per_octave)
        return np.array([self.point(p) for p in psi])

    @property
    def z(self):
        return _boundary_point(self.theta0)


@dataclass(frozen=True)
class Explicit:
    pts: tuple
    theta0: float = 0.0

    def points(self) -> np.ndarray:
        return np.asarray(self.pts, dtype=float)

    @property
    def z(self):
        return _boundary_point(self.theta0)


ApproachPath = Radial | StolzSequence | TangentialCircle | Explicit


@dataclass(frozen=True)
class Converged:
    limit: float
    half_width: float


@dataclass(frozen=True)
class Oscillating:
    limsup: float
    liminf: float

    @property
    def amplitude(self) -> float:
        return self.limsup - self.liminf


@dataclass
class RatioDiagnostic:
    samples: list  # (point, u, h, ratio)
    verdict: Converged | Oscillating
    params: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([s[3] for s in self.samples])

    @property
    def converged(self) -> bool:
        return isinstance(self.verdict, Converged)

    def rows(self) -> list[tuple]:
        """(j, x, y, delta, u, h, ratio) per probe point."""
        return [(j, float(p[0]), float(p[1]), 1 - float(np.hypot(*p)), u, h, r)
                for j, (p, u, h, r) in enumerate(self.samples)]

    def summary(self) -> dict:
        v = self.verdict
        if isinstance(v, Converged):
            return {"verdict": "converged", "limit": v.limit, "half_width": v.half_width,
                    "limsup": None, "liminf": None}
        return {"verdict": "oscillating", "limit": None, "half_width": None,
                "limsup": v.limsup, "liminf": v.liminf}


def classify(ratios: Sequence[float], tol_conv: float = TOL_CONV) -> Converged | Oscillating:
    """Converged if the last quartile's range is below tol_conv (relative to max(1, |limit|))."""
    r = np.asarray(ratios, float)
    if r.size < 4:
        raise ValueError("need at least 4 probe points for a verdict")
    tail = r[-max(r.size // 4, 2):]
    limit = float(tail[-1])
    spread = float(tail.max() - tail.min())
    if spread < tol_conv * max(1.0, abs(limit)):
        return Converged(limit, spread / 2)
    half = r[r.size // 2:]
    return Oscillating(float(half.max()), float(half.min()))


def ratio_probe(params: StableParams, u_spec: BoundaryMeasure, h_spec: BoundaryMeasure, path,
                n_points: int | None = None, tol_conv: float = TOL_CONV) -> RatioDiagnostic:
    pts = path.points()
    if n_points is not None:
        pts = pts[:n_points]
    samples = []
    for p in pts:
        u, h, r = martin_ratio(params, u_spec, h_spec, p)
        if not math.isfinite(r):
            raise QuadratureFailure(f"non-finite ratio at {p}")
        samples.append((p, u, h, r))
    return RatioDiagnostic(samples, classify([s[3] for s in samples], tol_conv),
                           {"path": repr(path), "tol_conv": tol_conv, "alpha": params.alpha})


# ---------------------------------------------------------------- band lemma

@dataclass(frozen=True)
class BandReport:
    delta_used: float
    c1: float
    band_ok: bool
    rhos: tuple
    ratios: tuple

    def as_dict(self) -> dict:
        return {"delta_used": self.delta_used, "c1": self.c1, "band_ok": self.band_ok,
                "rhos": list(self.rhos), "ratios": list(self.ratios)}


def lemma_3_19_delta(params: StableParams, epsilon: float, lam: float, theta0: float = 0.0,
                     probe_depth: int = 20, raise_on_failure: bool = True) -> BandReport:
    """Calibrate delta so that 1 - eps <= u/h <= 1 radially once rho > 1 - lam*delta.

    u is the Martin integral of the indicator of the arc of half-width ``lam``
    around theta0 and h that of sigma_1. The constant c1 in
    1 - u/h <= c1 (1 - rho) / lam is calibrated as the maximum over a coarse
    geometric grid in rho; then delta = min(eps / c1, 1 / pi) and the band is
    checked at ``probe_depth`` values of rho in (1 - lam*delta, 1).
    """
    if not 0 < lam < math.pi:
        raise ValueError("lambda must lie in (0, pi)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    u_spec = piecewise_constant([(theta0 - lam, theta0 + lam, 1.0)], "arc")
    h_spec = BoundaryMeasure(lambda t: np.ones_like(np.asarray(t, float)), (), 1.0, (), "sigma1")
    z = _boundary_point(theta0)
    coarse = 1 - np.geomspace(0.5, 1e-6, 25)
    c1 = max((1 - martin_ratio(params, u_spec, h_spec, r * z)[2]) * lam / (1 - r) for r in coarse)
    delta = min(epsilon / c1, 1 / math.pi) if c1 > 0 else 1 / math.pi
    gaps = lam * delta * np.geomspace(1.0, 1e-8, probe_depth) * (1 - 1e-9)
    rhos, ratios = [], []
    ok = True
    for g in gaps:
        rho = 1 - g
        r = martin_ratio(params, u_spec, h_spec, rho * z)[2]
        rhos.append(float(rho))
        ratios.append(float(r))
        if not (1 - epsilon <= r <= 1 + 1e-12):
            ok = False
            if raise_on_failure:
                raise BandViolated(f"u/h = {r} outside [1 - {epsilon}, 1] at rho = {rho}", rho)
    return BandReport(float(delta), float(c1), ok, tuple(rhos), tuple(ratios))


# ---------------------------------------------------------------- oscillation witness

@dataclass
class WitnessReport:
    tangential: RatioDiagnostic
    radial_theta0: RatioDiagnostic
    radial_probes: list  # RatioDiagnostic per angle
    levels: list  # BoundaryMeasure per level k
    arcs: list  # (center, half_width, level)

    @property
    def oscillation(self) -> float:
        v = self.tangential.verdict
        return v.amplitude if isinstance(v, Oscillating) else 0.0

    @property
    def radial_converged(self) -> int:
        return sum(d.converged for d in self.radial_probes)

    def summary(self) -> dict:
        return {"tangential": self.tangential.summary(), "radial_theta0": self.radial_theta0.summary(),
                "oscillation": self.oscillation, "radial_converged": self.radial_converged,
                "radial_probes": len(self.radial_probes), "arcs": len(self.arcs)}


def witness_measures(K: int, tangential: TangentialCircle, repeats: int = 4, d0: float = 2e-3,
                     width_factor: float = 3.0):
    """Level measures u_k = 2^-k * indicator of arcs seen by the tangential circle.

    Arc m (m = 1..K*repeats) is centred at the angle where the tangential
    circle is at depth d_m = d0 2^-m, with half-width width_factor * d_m, and
    belongs to level k = ((m - 1) mod K) + 1.
    """
    arcs = []
    for m in range(1, K * repeats + 1):
        d = d0 * 2.0 ** -m
        p = tangential.point(tangential.psi_at_depth(d))
        arcs.append((float(math.atan2(p[1], p[0])), width_factor * d, (m - 1) % K + 1))
    levels = [piecewise_constant([(c - w, c + w, 2.0 ** -k) for c, w, kk in arcs if kk == k], f"level{k}")
              for k in range(1, K + 1)]
    return levels, arcs


def oscillation_witness(params: StableParams, K: int = 5, tangential: TangentialCircle | None = None,
                        repeats: int = 4, d0: float = 2e-3, osc_min: float = OSC_MIN,
                        n_radial: int = 16, tol_conv: float = TOL_CONV) -> WitnessReport:
    """Finite-level analogue of a positive harmonic function without tangential limits.

    u = sum_k u_k, h = sigma_1's Martin integral. Along the tangential circle
    the probe points alternate between the arc-centre depths d_m and the
    geometric midpoints between them, so u/h swings between about 0.8 * 2^-k
    and 0. Radial probes converge to the boundary values of U.
    """
    if K < 3:
        raise ValueError("K must be >= 3")
    tangential = tangential or TangentialCircle(0.0)
    levels, arcs = witness_measures(K, tangential, repeats, d0)
    u_spec = levels[0]
    for lv in levels[1:]:
        u_spec = u_spec + lv
    h_spec = BoundaryMeasure(lambda t: np.ones_like(np.asarray(t, float)), (), 1.0, (), "sigma1")
    depths = []
    for m in range(1, K * repeats + 1):
        d = d0 * 2.0 ** -m
        depths += [d, d * 2 ** -0.5]
    pts = tuple(tangential.point(tangential.psi_at_depth(d)) for d in depths)
    tang = ratio_probe(params, u_spec, h_spec, Explicit(pts, tangential.theta0), tol_conv=tol_conv)
    rad0 = ratio_probe(params, u_spec, h_spec, Radial(tangential.theta0), tol_conv=tol_conv)
    probes = [ratio_probe(params, u_spec, h_spec, Radial(tangential.theta0 + TWO_PI * i / n_radial), tol_conv=tol_conv)
              for i in range(n_radial)]
    report = WitnessReport(tang, rad0, probes, levels, arcs)
    if report.oscillation < osc_min:
        raise WitnessFailed(f"tangential oscillation {report.oscillation:.3g} below {osc_min}")
    return report


# ---------------------------------------------------------------- Radon-Nikodym recovery

@dataclass
class RecoveryReport:
    angles: np.ndarray
    phi_hat: np.ndarray
    reconstruction: BoundaryMeasure
    max_rel_error: float
    test_points: np.ndarray

    def as_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "angles": self.angles.tolist(),
                "phi_hat": self.phi_hat.tolist()}


def _test_grid() -> np.ndarray:
    pts = [np.zeros(2)]
    for r in (0.3, 0.6, 0.9):
        for k in range(16):
            pts.append(r * _boundary_point(TWO_PI * k / 16 + 0.1))
    return np.array(pts)


def radon_nikodym_recover(params: StableParams, u_spec: BoundaryMeasure, h_spec: BoundaryMeasure, M: int = 64,
                          probe_rho: float = 1 - 1e-4, depth: int = PROBE_DEPTH,
                          bound_cap: float = BOUND_CAP) -> RecoveryReport:
    """Recover the density of u's representing measure with respect to h's.

    phi_hat is the radial limit of u/h (evaluated at ``probe_rho``) on M
    equally spaced angles; the ratio is first checked for boundedness along
    radial probes down to depth ``depth``, including every atom angle.
    """
    if not h_spec.has_density or h_spec.atoms:
        raise ValueError("h must have a strictly positive density and no atoms")
    angles = TWO_PI * np.arange(M) / M
    probe_angles = np.concatenate([angles, [a for a, _ in u_spec.atoms]])
    for a in probe_angles:
        for p in Radial(float(a), depth=depth).points():
            r = martin_ratio(params, u_spec, h_spec, p)[2]
            if not r <= bound_cap:
                raise UnboundedRatio(f"u/h = {r:.3g} exceeds {bound_cap:g} near angle {a:.4f}")
    phi = np.array([martin_ratio(params, u_spec, h_spec, probe_rho * _boundary_point(a))[2] for a in angles])
    spline = CubicSpline(np.append(angles, TWO_PI), np.append(phi, phi[0]), bc_type="periodic")

    def dens(t, s=spline, h=h_spec):
        return np.maximum(s(wrap(np.asarray(t, float))), 0.0) * h.U(t)

    recon = BoundaryMeasure(dens, tuple(h_spec.breakpoints), float(np.max(np.abs(phi))) * 1.5 * h_spec.sup + 1e-12,
                            (), "reconstruction")
    pts = _test_grid()
    errs = []
    for p in pts:
        u = martin_integral(params, u_spec, p)
        errs.append(abs(martin_integral(params, recon, p) - u) / u)
    return RecoveryReport(angles, phi, recon, float(max(errs)), pts)


# ---------------------------------------------------------------- representation identity

def poisson_part(params: StableParams, g, x, s_lo: float, s_hi: float, n_radial: int = 64,
                 n_angular: int = 256) -> float:
    """int_{s_lo < |y| < s_hi} P_B(x, y) g(y) dy for the unit disk (g vanishes elsewhere in B^c).

    Radial Gauss nodes in u = (s^2 - 1)^{1 - alpha/2} absorb the boundary
    singularity when s_lo = 1; the angular rule is the periodic trapezoid.
    """
    if params.n != 2:
        raise NotImplementedError("planar only")
    if not 1 <= s_lo < s_hi < math.inf:
        raise ValueError("need 1 <= s_lo < s_hi < inf")
    a = params.alpha
    e = 1 - a / 2
    ulo, uhi = (s_lo ** 2 - 1) ** e, (s_hi ** 2 - 1) ** e
    z, w = _gauss(n_radial)
    u = 0.5 * (uhi - ulo) * z + 0.5 * (uhi + ulo)
    wu = 0.5 * (uhi - ulo) * w
    s = np.sqrt(1 + u ** (1 / e))
    # dy = s ds dphi ; ds/du = (1/e) u^{1/e - 1} / (2 s); (s^2-1)^{-a/2} = u^{-a/(2e)}
    jac = s * (u ** (1 / e - 1) / (2 * e * s)) * u ** (-a / (2 * e))
    phi = TWO_PI * np.arange(n_angular) / n_angular
    ys = s[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)[None, :, :]
    x = np.asarray(x, float)
    gv = np.asarray(g(ys.reshape(-1, 2)), float).reshape(n_radial, n_angular)
    rest = (1 - x @ x) ** (a / 2) / np.sum((ys - x) ** 2, axis=-1) ** (params.n / 2)
    c = params.poisson
    return float(c * np.sum(wu[:, None] * jac[:, None] * rest * gv) * TWO_PI / n_angular)


@dataclass
class RepresentationReport:
    points: np.ndarray
    u: np.ndarray
    poisson: np.ndarray
    martin: np.ndarray
    mc: list  # MCEstimate per point, or empty
    max_z: float
    martin_scaled: list  # (rho, Martin part * delta^{1 - alpha/2})
    bounded: bool

    def as_dict(self) -> dict:
        return {"points": self.points.tolist(), "u": self.u.tolist(), "poisson": self.poisson.tolist(),
                "martin": self.martin.tolist(), "mc": [e.as_dict() for e in self.mc], "max_z": self.max_z,
                "martin_scaled": self.martin_scaled, "bounded": self.bounded}


def poisson_martin_representation_check(params: StableParams, g, phi: BoundaryMeasure | None, xs,
                                        s_lo: float = 1.2, s_hi: float = 2.0, rng=None, N: int = 0,
                                        threads: int | None = None) -> RepresentationReport:
    """u = Poisson extension of exterior data g + Martin integral of phi.

    With ``rng`` and ``N``, the regular part is compared with walk-on-balls
    estimates of E_x[g(X_tau)] (z-scores); the Martin part times
    delta^{1 - alpha/2} is reported along the radius towards angle 0.
    """
    xs = np.atleast_2d(np.asarray(xs, float))
    pois = np.array([poisson_part(params, g, x, s_lo, s_hi) if g is not None else 0.0 for x in xs])
    mart = np.array([martin_integral(params, phi, x) if phi is not None else 0.0 for x in xs])
    mc, zs = [], []
    if rng is not None and N > 0 and g is not None:
        from .sampler import harmonic_measure_estimate
        dom = unit_disk()
        for i, x in enumerate(xs):
            est = harmonic_measure_estimate(rng.substream(i), params, dom, x, g, N, threads=threads)
            mc.append(est)
            zs.append(abs(est.z_score(pois[i])))
    scaled = []
    if phi is not None:
        for rho in (0.9, 0.99, 0.999, 0.9999):
            scaled.append((rho, martin_integral(params, phi, np.array([rho, 0.0])) * (1 - rho) ** (1 - params.alpha / 2)))
    vals = [v for _, v in scaled]
    bounded = bool(not vals or (max(vals) <= 2 * vals[0] + 1e-12))
    return RepresentationReport(xs, pois + mart, pois, mart, mc, float(max(zs)) if zs else 0.0, scaled, bounded)


def annulus_indicator(s_lo: float = 1.2, s_hi: float = 2.0):
    def g(y):
        r = np.linalg.norm(np.asarray(y, float), axis=-1)
        return ((r > s_lo) & (r < s_hi)).astype(float)
    return g
