r"""Closed-form kernels of the isotropic :math:`\alpha`-stable process.

All functions accept array-valued points of shape ``(..., n)`` where noted and
broadcast over leading axes. Constants live on :class:`StableParams`.

The ball Green function is written through the regularized incomplete Beta
function,

.. math::

   G_B(x, y) = A(n,\alpha)\,|x-y|^{\alpha-n}\, I_{w/(1+w)}\big(\tfrac{\alpha}{2}, \tfrac{n-\alpha}{2}\big),
   \qquad w = \frac{(r^2-|x-c|^2)(r^2-|y-c|^2)}{r^2|x-y|^2},

which makes domination by the free Green function explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, special

from .errors import BadGeometry, QuadratureFailure, SingularPoint
from .geometry import Ball, Domain

QUAD_EPSABS = 1e-9
QUAD_EPSREL = 1e-7


@dataclass(frozen=True)
class StableParams:
    n: int = 2
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n}")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")

    @cached_property
    def riesz(self) -> float:
        n, a = self.n, self.alpha
        return math.gamma((n - a) / 2) / (2 ** a * math.pi ** (n / 2) * math.gamma(a / 2))

    @cached_property
    def poisson(self) -> float:
        n, a = self.n, self.alpha
        return math.gamma(n / 2) * math.pi ** (-n / 2 - 1) * math.sin(math.pi * a / 2)

    @cached_property
    def jump(self) -> float:
        n, a = self.n, self.alpha
        return a * 2 ** (a - 1) * math.gamma((a + n) / 2) / (math.pi ** (n / 2) * math.gamma(1 - a / 2))

    @cached_property
    def exit_time(self) -> float:
        """E_0[tau] for the unit ball: Gamma(n/2) / (2^a Gamma(1+a/2) Gamma((n+a)/2))."""
        n, a = self.n, self.alpha
        return math.gamma(n / 2) / (2 ** a * math.gamma(1 + a / 2) * math.gamma((n + a) / 2))

    @cached_property
    def sphere_area(self) -> float:
        return 2 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)


@dataclass(frozen=True)
class BallSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise BadGeometry("ball radius must be positive")

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @classmethod
    def unit(cls, n: int = 2) -> "BallSpec":
        return cls((0.0,) * n, 1.0)

    @classmethod
    def of(cls, shape: Ball) -> "BallSpec":
        return cls(tuple(shape.center), shape.radius)


def _as_points(x):
    return np.asarray(x, dtype=float)


def _dist(x, y):
    return np.linalg.norm(_as_points(x) - _as_points(y), axis=-1)


def riesz_constant(params: StableParams) -> float:
    return params.riesz


def free_green(params: StableParams, x, y):
    d = _dist(x, y)
    if np.any(d == 0):
        raise SingularPoint("free Green function evaluated on the diagonal")
    return params.riesz * d ** (params.alpha - params.n)


def ball_exit_density(params: StableParams, ball: BallSpec, x, y):
    """Density of the exit position from ``ball`` started at ``x``, evaluated at ``y``."""
    x, y = _as_points(x), _as_points(y)
    r2 = ball.radius ** 2
    ix = r2 - np.sum((x - ball.c) ** 2, axis=-1)
    oy = np.sum((y - ball.c) ** 2, axis=-1) - r2
    if np.any(ix <= 0):
        raise BadGeometry("x must be strictly inside the ball")
    if np.any(oy <= 0):
        raise BadGeometry("y must be strictly outside the closed ball")
    a = params.alpha
    return params.poisson * (ix / oy) ** (a / 2) * _dist(x, y) ** (-params.n)


def ball_exit_radial_cdf(params: StableParams, s):
    """P(|Y - c| <= s r) for the exit position Y from the centre (s > 1).

    With T = (r/|Y-c|)^2, T ~ Beta(alpha/2, 1 - alpha/2) whatever the dimension.
    """
    s = np.asarray(s, dtype=float)
    a = params.alpha
    return np.where(s <= 1, 0.0, special.betaincc(a / 2, 1 - a / 2, np.minimum(1.0, 1.0 / np.maximum(s, 1.0) ** 2)))


def ball_exit_radial_density(params: StableParams, s):
    """Radial density of |Y - c|/r at the centre (integrates to 1 over s > 1)."""
    s = np.asarray(s, dtype=float)
    return params.poisson * params.sphere_area * (s * s - 1) ** (-params.alpha / 2) / s


def green_fraction(params: StableParams, ball: BallSpec, x, y):
    """G_B / G, the regularized incomplete Beta factor in [0, 1]."""
    x, y = _as_points(x), _as_points(y)
    r2 = ball.radius ** 2
    ix = r2 - np.sum((x - ball.c) ** 2, axis=-1)
    iy = r2 - np.sum((y - ball.c) ** 2, axis=-1)
    d2 = np.sum((x - y) ** 2, axis=-1)
    # w/(1+w) without cancellation: ix*iy / (ix*iy + r2*d2)
    num = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    u = num / (num + r2 * d2)
    a = params.alpha
    return special.betainc(a / 2, (params.n - a) / 2, u)


def ball_green(params: StableParams, ball: BallSpec, x, y):
    x, y = _as_points(x), _as_points(y)
    r2 = ball.radius ** 2
    if np.any(np.sum((x - ball.c) ** 2, axis=-1) >= r2) or np.any(np.sum((y - ball.c) ** 2, axis=-1) >= r2):
        raise BadGeometry("ball Green function needs both points strictly inside")
    return free_green(params, x, y) * green_fraction(params, ball, x, y)


def ball_green_quadrature(params: StableParams, ball: BallSpec, x, y) -> float:
    """Scalar ball Green function by direct quadrature of the s-integral (test oracle)."""
    x, y = _as_points(x), _as_points(y)
    r2 = ball.radius ** 2
    d2 = float(np.sum((x - y) ** 2))
    if d2 == 0:
        raise SingularPoint("x == y")
    w = (r2 - float(np.sum((x - ball.c) ** 2))) * (r2 - float(np.sum((y - ball.c) ** 2))) / (r2 * d2)
    a, n = params.alpha, params.n
    # s = u^2 removes the s^(a/2-1) endpoint singularity
    val, err = integrate.quad(lambda u: 2 * u ** (a - 1) * (1 + u * u) ** (-n / 2), 0, math.sqrt(w),
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    kappa = math.gamma(n / 2) / (2 ** a * math.pi ** (n / 2) * math.gamma(a / 2) ** 2)
    return kappa * d2 ** ((a - n) / 2) * val


def ball_expected_exit_time(params: StableParams, ball: BallSpec, x, method: str = "closed"):
    x = _as_points(x)
    inner = ball.radius ** 2 - np.sum((x - ball.c) ** 2, axis=-1)
    if np.any(inner <= 0):
        raise BadGeometry("x must be strictly inside the ball")
    if method == "closed":
        return params.exit_time * inner ** (params.alpha / 2)
    if method != "quadrature":
        raise ValueError(method)
    return _exit_time_quadrature(params, ball, x)


def _exit_time_quadrature(params: StableParams, ball: BallSpec, x) -> float:
    """Integral of G_B(x, .) over the ball in polar coordinates about x (n = 2 or 3)."""
    n, a = params.n, params.alpha
    c, rad = ball.c, ball.radius
    x = np.asarray(x, dtype=float)
    rx = float(np.linalg.norm(x - c))
    e = (x - c) / rx if rx > 0 else np.eye(n)[0]

    def ray_length(cos_t):
        return -rx * cos_t + np.sqrt(rad ** 2 - rx ** 2 * (1 - cos_t ** 2))

    def radial(cos_t, sin_t):
        L = ray_length(cos_t)
        perp = np.eye(n)[0] if abs(e[0]) < 0.9 else np.eye(n)[1]
        perp = perp - e * (perp @ e)
        perp /= np.linalg.norm(perp)
        u = cos_t * e + sin_t * perp

        def f(t):
            s = t ** (1 / a)  # s^(a-1) ds = dt / a
            return green_fraction(params, ball, x, x + s * u) / a

        val, _ = integrate.quad(f, 0, L ** a, epsabs=1e-12, epsrel=1e-10, limit=200)
        return params.riesz * val

    if n == 2:
        val, _ = integrate.quad(lambda t: radial(math.cos(t), math.sin(t)), 0, math.pi, epsabs=1e-11, epsrel=1e-9)
        return 2 * val
    if n == 3:
        val, _ = integrate.quad(lambda ct: radial(ct, math.sqrt(max(0.0, 1 - ct * ct))), -1, 1,
                                epsabs=1e-11, epsrel=1e-9)
        return 2 * math.pi * val
    raise NotImplementedError("quadrature exit time for n = 2, 3 only")


def ball_martin(params: StableParams, x, z):
    """Martin kernel of the unit ball, normalized at the centre."""
    x, z = _as_points(x), _as_points(z)
    nx2 = np.sum(x * x, axis=-1)
    if np.any(nx2 >= 1):
        raise BadGeometry("x must lie in the open unit ball")
    if np.any(np.abs(np.linalg.norm(z, axis=-1) - 1) > 1e-9):
        raise BadGeometry("z must lie on the unit sphere")
    return (1 - nx2) ** (params.alpha / 2) / _dist(x, z) ** params.n


def jump_kernel_density(params: StableParams, x, y):
    d = _dist(x, y)
    if np.any(d == 0):
        raise SingularPoint("jump kernel evaluated on the diagonal")
    return params.jump * d ** (-params.alpha - params.n)


def transition_density_oracle(params: StableParams, t: float, r: float, tol: float = 1e-10) -> float:
    """p(t, x) at |x| = r by radial Fourier inversion of exp(-t |xi|^alpha).

    Slow; meant for tests only.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    n, a = params.n, params.alpha
    kmax = (60.0 / t) ** (1 / a)
    if r == 0:
        val, err = integrate.quad(lambda k: math.exp(-t * k ** a) * k ** (n - 1), 0, kmax,
                                  epsabs=1e-14, epsrel=tol, limit=500)
        return params.sphere_area * val / (2 * math.pi) ** n
    nu = n / 2 - 1

    def f(k):
        return math.exp(-t * k ** a) * k ** (n / 2) * special.jv(nu, k * r)

    # integrate between consecutive half-periods so each piece is non-oscillatory
    step = math.pi / r
    edges = np.arange(0.0, kmax + step, step)
    total, err_total = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=tol, limit=200)
        total += v
        err_total += e
    if err_total > 1e-8 * max(abs(total), 1e-300) + 1e-14:
        raise QuadratureFailure(f"transition density inversion did not converge (err {err_total:.2e})")
    return (2 * math.pi) ** (-n / 2) * r ** (1 - n / 2) * total


def psi(params: StableParams, r):
    """2^-(n+a) Gamma((n+a)/2)^-1 int_0^inf s^((n+a)/2-1) exp(-s/4 - r^2/s) ds."""
    r = np.abs(np.asarray(r, dtype=float))
    a = (params.n + params.alpha) / 2
    small = r < 1e-6
    safe = np.where(small, 1.0, r)
    big = 2 ** (1 - a) * safe ** a * special.kv(a, safe) / math.gamma(a)
    out = np.where(small, 1 - r * r / (4 * (a - 1)), big)
    out = np.where(r == 0, 1.0, out)
    return out if out.ndim else float(out)


def psi_quadrature(params: StableParams, r: float) -> float:
    """The defining integral of psi, by adaptive quadrature (oracle)."""
    a = (params.n + params.alpha) / 2
    f = lambda s: s ** (a - 1) * math.exp(-s / 4 - r * r / s) if s > 0 else 0.0
    val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return 2 ** (-2 * a) * val / math.gamma(a)


class RelativisticIngredients:
    r"""psi, F_m, q and the drift compensator for the relativistic transform.

    ``q`` and ``drift_compensator`` are integrals of
    :math:`\mathcal{A}(n,-\alpha) F_m(x,y)|x-y|^{-\alpha-n}` over the complement
    and the domain respectively; the domain must be a ball. Both are radial in
    ``|x - c|`` and are tabulated once, then interpolated.
    """

    def __init__(self, params: StableParams, m: float, ball: BallSpec | None = None,
                 n_radial: int = 400, n_angular: int = 96):
        if not m > 0:
            raise ValueError("m must be positive")
        if params.n not in (2, 3):
            raise NotImplementedError("relativistic ingredients implemented for n = 2, 3")
        self.params = params
        self.m = float(m)
        self.ball = ball or BallSpec.unit(params.n)
        self.scale = self.m ** (1 / params.alpha)
        self._n_angular = n_angular
        self._build_radial_table()
        self._build_profile(n_radial)

    def psi(self, r):
        return psi(self.params, r)

    def F_m(self, x, y):
        return psi(self.params, self.scale * _dist(x, y)) - 1.0

    def F_of_distance(self, s):
        return psi(self.params, self.scale * np.asarray(s, float)) - 1.0

    def _build_radial_table(self):
        # Phi(L) = int_0^L F(s) s^(-a-1) ds, tabulated on a log grid
        a = self.params.alpha
        na = (self.params.n + a) / 2
        self._c2 = self.scale ** 2 / (4 * (na - 1))
        s = np.geomspace(1e-4, 4.0 * self.ball.radius, 241)
        f = lambda t: self.F_of_distance(t) * t ** (-a - 1)
        head = -self._c2 * s[0] ** (2 - a) / (2 - a)
        # each log-interval is smooth; 16-point Gauss-Legendre per piece
        nodes, weights = np.polynomial.legendre.leggauss(16)
        lo, hi = s[:-1, None], s[1:, None]
        pts = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        pieces = np.sum(0.5 * (hi - lo) * weights * f(pts), axis=1)
        self._s = s
        self._phi = head + np.concatenate([[0.0], np.cumsum(pieces)])
        tail, _ = integrate.quad(lambda t: float(f(t)), s[-1], np.inf, epsabs=1e-14, epsrel=1e-11, limit=400)
        self._phi_inf = self._phi[-1] + tail

    def _Phi(self, L):
        L = np.asarray(L, dtype=float)
        a = self.params.alpha
        small = -self._c2 * np.maximum(L, 0) ** (2 - a) / (2 - a)
        logs = np.log(np.clip(L, self._s[0], self._s[-1]))
        interp = np.interp(logs, np.log(self._s), self._phi)
        return np.where(L < self._s[0], small, interp)

    def _ray_integrals(self, rx: float):
        """(inside, outside) integrals of F s^(-a-1) over all directions from a point at radius rx."""
        n = self.params.n
        R = self.ball.radius
        nodes, weights = np.polynomial.legendre.leggauss(self._n_angular)
        if n == 2:
            phi = 0.5 * math.pi * (nodes + 1)
            w = 0.5 * math.pi * weights * 2  # symmetric half-circle doubled
            cos_t = np.cos(phi)
            L = -rx * cos_t + np.sqrt(np.maximum(R * R - rx * rx * (1 - cos_t ** 2), 0.0))
        else:
            cos_t = nodes
            w = weights * 2 * math.pi
            L = -rx * cos_t + np.sqrt(np.maximum(R * R - rx * rx * (1 - cos_t ** 2), 0.0))
        inside = float(np.sum(w * self._Phi(L)))
        total = float(np.sum(w)) * self._phi_inf
        return inside, total - inside

    def _build_profile(self, n_radial: int):
        R = self.ball.radius
        # cluster nodes toward the boundary
        t = np.linspace(0, 1, n_radial)
        rr = R * (1 - (1 - t) ** 2) * (1 - 1e-9)
        vals = np.array([self._ray_integrals(r) for r in rr])
        self._rr = rr
        self._drift = self.params.jump * vals[:, 0]
        self._q = self.params.jump * vals[:, 1]

    def _radius(self, x):
        return np.linalg.norm(_as_points(x) - self.ball.c, axis=-1)

    def drift_compensator(self, x):
        return np.interp(self._radius(x), self._rr, self._drift)

    def q(self, x):
        return np.interp(self._radius(x), self._rr, self._q)

    @property
    def total_compensator(self) -> float:
        """A(n,-a) * int_{R^n} F_m(0,y)|y|^(-a-n) dy, analytically -m."""
        return self.params.jump * self.params.sphere_area * self._phi_inf


def relativistic_ingredients(params: StableParams, m: float, domain: Domain | None = None) -> RelativisticIngredients:
    """Memoized :class:`RelativisticIngredients` for a ball domain (unit ball by default)."""
    ball = None
    if domain is not None:
        if not isinstance(domain.shape, Ball):
            raise BadGeometry("relativistic ingredients need a ball domain")
        ball = BallSpec.of(domain.shape)
    return _cached_ingredients(params, float(m), ball)


@lru_cache(maxsize=16)
def _cached_ingredients(params: StableParams, m: float, ball: BallSpec | None) -> RelativisticIngredients:
    return RelativisticIngredients(params, m, ball)


def conditioned_lifetime_quadrature(params: StableParams, z, x=None) -> float:
    """E^z_0[tau_B] = int_B G_B(0, y) M_B(y, z) dy for the unit ball, from the centre.

    The sphere average of |y - z|^{-n} over |y| = r is 1/(1 - r^2), so the
    integral is radial: |S^{n-1}| int_0^1 r^{n-1} G_B(0, r) (1 - r^2)^{alpha/2 - 1} dr.
    """
    if x is not None and np.any(np.asarray(x, float) != 0):
        raise NotImplementedError("lifetime oracle is radial: start at the centre")
    z = _as_points(z)
    if abs(float(np.linalg.norm(z)) - 1) > 1e-9:
        raise BadGeometry("z must lie on the unit sphere")
    n, a = params.n, params.alpha
    ball = BallSpec.unit(n)
    origin = np.zeros(n)

    def f(r):
        y = np.zeros(n)
        y[0] = r
        return r ** (n - 1) * float(ball_green(params, ball, origin, y)) * (1 - r * r) ** (a / 2 - 1)

    # split off both endpoint singularities (r^{a-1} at 0, (1-r)^{a-1} at 1)
    total = 0.0
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        val, err = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=400)
        if not err < 1e-7 * max(1.0, abs(val)):
            raise QuadratureFailure(f"lifetime quadrature error {err:.2e}")
        total += val
    return params.sphere_area * total
