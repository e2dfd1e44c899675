"""Closed-form escape-time machinery: log-kernel identities, the disk
regular part Phi, the Neumann-Robin expansion, neck reduction, window flux,
and a prior leading-order formula for comparison.

The central expansion, evaluated at points x away from the window arc of
half-arclength eps centered at x* on the head boundary, is

    u(x) = |head| / (2 alpha eps)
         + (|head| / pi) * (3/2 + ln(1 / (2 eps)))
         + beta / alpha
         + Phi(x, x*)            + O(eps),

where Phi solves {Delta Phi = -1, dPhi/dnu = -|head| delta_{x*}} with the
additive constant pinned by Phi - (|head|/pi) ln|x - x*| -> 0 at x*.  A
neck of effective length Lt reduces to Robin data alpha = 1/Lt, beta = Lt/2,
turning the robin term into Lt^2/2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import HeadSpec, SpineGeometry, effective_neck_length


class DomainError(ValueError):
    """Argument outside the mathematical domain of a closed form."""


class SingularPoint(ValueError):
    """Evaluation requested at (or too near) the logarithmic singularity."""


class TooCloseToWindow(UserWarning):
    """Expansion evaluated closer to the window than its validity range."""


def log_kernel_L1(t: float) -> float:
    """L[1](t) = integral of ln|t - y| dy over y in [-1, 1].

    Closed form (1+t)ln(1+t) + (1-t)ln(1-t) - 2 with the 0*ln0 = 0
    convention at the endpoints t = +-1.
    """
    if abs(t) > 1.0:
        raise DomainError(f"t={t} outside [-1, 1]")
    a, b = 1.0 + t, 1.0 - t
    out = -2.0
    if a > 0.0:
        out += a * math.log(a)
    if b > 0.0:
        out += b * math.log(b)
    return out


def log_kernel_double_integral() -> float:
    """Integral of L[1](t) dt over [-1, 1]: the identity 4 ln 2 - 6."""
    return 4.0 * math.log(2.0) - 6.0


def _rel_to_head(x, x_star, head: HeadSpec | None):
    cx, cy = head.center if head is not None else (0.0, 0.0)
    R = head.radius if head is not None else 1.0
    x = np.asarray(x, dtype=float) - (cx, cy)
    xs = np.asarray(x_star, dtype=float) - (cx, cy)
    return x, xs, R


def phi_disk(x, x_star, head: HeadSpec | None = None) -> float:
    """Regular part of the expansion for a disk head.

    Unit disk centered at the origin: ln|x - x*| + (1 - |x|^2)/4.  For a
    disk of radius R the Neumann-data-consistent extension is
    R^2 ln|x - x*| + (R^2 - |x|^2)/4, which keeps Delta Phi = -1, zero
    normal derivative away from x*, and the pinning
    Phi - (|head|/pi) ln|x - x*| -> 0 at x*  (cross-checked against the
    numeric Phi in the test suite).
    """
    x, xs, R = _rel_to_head(x, x_star, head)
    if abs(math.hypot(*xs) - R) > 1e-10:
        raise DomainError(f"x* must lie on the head circle of radius {R}")
    if math.hypot(*x) > R * (1.0 + 1e-12):
        raise DomainError("x outside the head disk")
    d = math.hypot(*(x - xs))
    if d < 1e-12:
        raise SingularPoint("x coincides with the window center x*")
    return R * R * math.log(d) + 0.25 * (R * R - float(x @ x))


def phi_disk_gradient(x, x_star, head: HeadSpec | None = None) -> np.ndarray:
    """Analytic gradient of phi_disk (same conventions)."""
    x, xs, R = _rel_to_head(x, x_star, head)
    d = x - xs
    d2 = float(d @ d)
    if d2 < 1e-24:
        raise SingularPoint("x coincides with the window center x*")
    return R * R * d / d2 - 0.5 * x


@dataclass(frozen=True)
class AsymptoticParams:
    """Symbol set consumed by the expansion formulas.

    head_area is |head|; eps the window half-arclength; alpha, beta the
    Robin data; L the absolute neck length and L_tilde the effective
    (curvature-corrected) one, equal for straight necks; x_star the window
    center on the head boundary.
    """

    head_area: float
    eps: float
    alpha: float
    beta: float
    L: float
    L_tilde: float
    x_star: tuple[float, float]
    head: HeadSpec | None = None

    def __post_init__(self):
        if self.head_area <= 0.0 or self.eps <= 0.0 or self.alpha <= 0.0:
            raise DomainError("head_area, eps, alpha must be positive")
        if self.alpha * self.eps > 0.1:
            warnings.warn(
                f"alpha*eps = {self.alpha * self.eps:.3g} > 0.1: expansion "
                "outside its small-parameter regime", TooCloseToWindow)


def params_from_geometry(g: SpineGeometry) -> AsymptoticParams:
    """Derive the expansion symbols from a built geometry.

    Spine modes use the neck reduction alpha = 1/L_tilde, beta = L_tilde/2;
    head-only mode reads alpha, beta off the Robin piece and reports the
    equivalent neck length 1/alpha.
    """
    if g.mode == "head_only":
        win = next(p for p in g.pieces if p.kind == "robin")
        lt = 1.0 / win.alpha
        return AsymptoticParams(g.head.area, g.eps, win.alpha, win.beta,
                                lt, lt, tuple(g.gamma_center), g.head)
    if g.mode != "spine":
        raise DomainError(f"no expansion parameters for mode {g.mode!r}")
    lt = effective_neck_length(g.neck)
    alpha, beta = robin_coefficients(lt)
    return AsymptoticParams(g.head.area, g.eps, alpha, beta,
                            g.neck.total_length, lt,
                            tuple(g.gamma_center), g.head)


@dataclass(frozen=True)
class ExpansionResult:
    """Expansion value with its named term breakdown.

    value is always the exact arithmetic sum of the terms; the O(eps)
    remainder is reported as order_estimate, never added.
    """

    terms: dict
    order_estimate: float
    value: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value", sum(self.terms.values()))


def robin_coefficients(L_tilde: float) -> tuple[float, float]:
    """Neck of effective length Lt reduces to alpha = 1/Lt, beta = Lt/2."""
    if L_tilde <= 0.0:
        raise DomainError("effective neck length must be positive")
    return 1.0 / L_tilde, L_tilde / 2.0


def neck_profile(x_along: float, C: float, L: float) -> float:
    """1D neck solution -(L-x)^2/2 + (C/L + L/2)(L-x); u(0)=C, u(L)=0."""
    if not 0.0 <= x_along <= L:
        raise DomainError(f"x={x_along} outside the neck [0, {L}]")
    back = L - x_along
    return -0.5 * back * back + (C / L + 0.5 * L) * back


def mfpt_neumann_robin(p: AsymptoticParams, x, phi_value: float | None = None
                       ) -> ExpansionResult:
    """Expansion of the head Robin problem at interior point x.

    phi_value overrides the regular part (use a PhiNumeric evaluation for
    non-disk heads); by default the disk closed form is used.
    """
    x = np.asarray(x, dtype=float)
    dist = float(np.hypot(*(x - p.x_star)))
    if dist < 5.0 * p.eps:
        warnings.warn(
            f"evaluation point at distance {dist:.3g} < 5 eps from the "
            "window: expansion degrades", TooCloseToWindow)
    if phi_value is None:
        phi_value = phi_disk(x, p.x_star, p.head)
    terms = {
        "leading": p.head_area / (2.0 * p.alpha * p.eps),
        "log_term": (p.head_area / math.pi)
                    * (1.5 + math.log(1.0 / (2.0 * p.eps))),
        "robin_term": p.beta / p.alpha,
        "phi_term": float(phi_value),
    }
    return ExpansionResult(terms=terms, order_estimate=p.eps)


def mfpt_spine(p: AsymptoticParams, x, phi_value: float | None = None
               ) -> ExpansionResult:
    """Spine escape-time expansion: the Robin form with the neck reduction
    alpha = 1/L_tilde, beta = L_tilde/2 substituted (robin term Lt^2/2)."""
    alpha, beta = robin_coefficients(p.L_tilde)
    q = AsymptoticParams(p.head_area, p.eps, alpha, beta, p.L, p.L_tilde,
                         p.x_star, p.head)
    return mfpt_neumann_robin(q, x, phi_value=phi_value)


def flux_on_window(p: AsymptoticParams, t: float) -> float:
    """Normal derivative profile on the window at arclength t in [-eps, eps].

    Two-term expansion; integrates to exactly -|head| over the window (the
    alpha-order term has zero mean).
    """
    if abs(t) > p.eps:
        raise DomainError(f"t={t} outside the window [-{p.eps}, {p.eps}]")
    lead = -p.head_area / (2.0 * p.eps)
    corr = -(p.head_area / math.pi) * p.alpha * (
        1.5 - math.log(2.0) + 0.5 * log_kernel_L1(t / p.eps))
    return lead + corr


def mfpt_reference_hs(p: AsymptoticParams) -> float:
    """Prior leading-order formula for disk heads, for side-by-side tables:
    (|head|/pi) ln(2 pi R / (2 eps)) + L^2/2 + |head| L / (2 eps)."""
    if p.head is None:
        raise DomainError("reference formula needs a disk head")
    R = p.head.radius
    lt = p.L_tilde
    return (p.head_area / math.pi) * math.log(2.0 * math.pi * R / (2.0 * p.eps)) \
        + 0.5 * lt * lt + p.head_area * lt / (2.0 * p.eps)


# -- numeric Phi --------------------------------------------------------------


class MeshTooCoarse(RuntimeError):
    """Boundary resolution too low to host the mollified point source."""


class PhiNumeric:
    """Numeric regular part on a head-only geometry.

    Solves {Delta Phi = -1 in the head, dPhi/dnu = -|head| * eta(x*)} with
    eta a boundary hat of width `mollifier_edges` mesh edges and unit
    integral, then pins the additive constant by Richardson extrapolation
    of d(rho) = Phi(x_rho) - (|head|/pi) ln rho at rho in {8h, 16h, 32h}
    along the inward normal at x* (iterated once: exact for trends with a
    linear plus quadratic rho dependence).

    Instances own their mesh and solve; share nothing mutable.
    """

    def __init__(self, domain: SpineGeometry, h: float = None,
                 mollifier_edges: int = 4):
        from . import fem  # deferred: keeps closed forms import-light

        if domain.mode != "head_only":
            raise DomainError("numeric Phi expects a head-only geometry")
        R = domain.head.radius
        if h is None:
            h = min(R / 100.0, 0.4 * domain.eps)
        self.domain = domain
        self.h = float(h)
        self.x_star = np.asarray(domain.gamma_center, dtype=float)
        self.head_area = domain.head.area
        self.mesh = fem.generate_mesh(domain, self.h)
        if self.mesh.boundary_edges.shape[0] < 4 * mollifier_edges:
            raise MeshTooCoarse(
                f"{self.mesh.boundary_edges.shape[0]} boundary edges cannot "
                f"host a {mollifier_edges}-edge mollifier")
        self._field = fem.solve_neumann_point_source(
            self.mesh, self.x_star, self.head_area,
            mollifier_edges=mollifier_edges)
        self._fem = fem
        self._constant = self._pin_constant()

    @property
    def constant(self) -> float:
        """Additive constant pinned by the near-window log extrapolation."""
        return self._constant

    def _raw(self, x) -> float:
        return self._fem.evaluate(self._field, x)

    def sample_offsets(self, radii) -> np.ndarray:
        """d(rho) samples along the inward normal at x*."""
        center = np.asarray(self.domain.head.center, dtype=float)
        nu = (self.x_star - center) / self.domain.head.radius
        out = []
        for rho in radii:
            xhat = self.x_star - rho * nu
            out.append(self._raw(xhat)
                       - (self.head_area / math.pi) * math.log(rho))
        return np.asarray(out)

    def _pin_constant(self) -> float:
        d1, d2, d3 = self.sample_offsets(
            [8.0 * self.h, 16.0 * self.h, 32.0 * self.h])
        c12 = 2.0 * d1 - d2
        c23 = 2.0 * d2 - d3
        return c12 + (c12 - c23) / 3.0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if np.hypot(*(x - self.x_star)) <= 10.0 * self.h:
            raise DomainError(
                f"x within 10 mesh sizes of x*: numeric Phi unreliable")
        return self._raw(x) - self._constant


def phi_numeric(domain: SpineGeometry, x, x_star=None, h: float = None,
                mollifier_edges: int = 4) -> float:
    """One-shot numeric Phi evaluation (builds a transient PhiNumeric).

    x_star, when given, must match the domain's window center; reuse a
    PhiNumeric instance to evaluate many points on one solve.
    """
    inst = PhiNumeric(domain, h=h, mollifier_edges=mollifier_edges)
    if x_star is not None:
        if np.hypot(*(np.asarray(x_star, float) - inst.x_star)) > 1e-9:
            raise DomainError("x_star must be the domain's window center")
    return inst(x)
