"""Epsilon sweeps, large-t plateaus, per-component contributions, and the
polynomial-plus-damped-tail decomposition of the Basic Integral.

As a function of the Gaussian width eps, BI(alpha, r, t) splits into a
polynomial in eps -- the reduced-space piece attached to mu^{-1}(0) --
plus a remainder bounded by exp(-c/eps), with c controlled by the first
positive critical value of |mu|^2 inside the region.  This module samples
the integral on an eps grid, recovers both pieces by least squares,
isolates what each critical component contributes by differencing the
integral across the component's value and driving the deformation t to
its plateau, and verifies the damping bounds the split rests on.

Everything here is plain least squares plus reported residual profiles;
nothing certifies a-posteriori error bounds.  The reports carry the
numbers, judging them is the caller's business.

Plateau detection and the t grid interact: the boundary term killed by
the deformation shrinks like exp(-t^2 q / (2 eps)) where q is the
smallest squared pairing <V_a, V_mustar> on the probe boundary, so a
grid topping out at t=16 settles small eps long before eps ~ 0.2.  When
the plateau tolerance is unreachable within the given t grid the
operation refuses (NonConvergenceError) rather than extrapolating; pass
a longer grid.  The default grid keeps the Gaussian shift t*|pairing|/eps
within ~1e3, where the closed-form moment evaluation stays comfortably
conditioned; the shift actually reached is reported.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .critical import critical_values, find_critical_points
from .forms import EquivariantForm
from .hamspace import HamiltonianSpace
from .integrate import (
    BasicIntegralRequest,
    QuadratureScheme,
    _radial_info,
    basic_integral,
    boundary_surfaces,
    check_alpha,
    check_regular_radius,
    known_critical_values,
)
from .liealg import (
    AccuracyError,
    DecompositionError,
    InputError,
    NonConvergenceError,
)

__all__ = [
    "DEFAULT_EPSILON_GRID",
    "DEFAULT_T_GRID",
    "DEFAULT_FIT_TOL",
    "CSV_HEADER",
    "SweepResult",
    "ContributionRecord",
    "epsilon_sweep",
    "fit_poly_plus_tail",
    "large_t_limit",
    "contribution",
    "damping_check",
    "global_convergence_check",
]

# 25 logarithmic points: wide enough to expose both the polynomial part
# (small eps) and the tail (large eps) without leaving the window where
# the Gaussian shifts stay conditioned.
DEFAULT_EPSILON_GRID = tuple(np.geomspace(0.02, 0.2, 25))

DEFAULT_T_GRID = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)

# Declared combined-fit tolerance, relative to the sweep's value scale
# (absolute once the whole sweep sits below 1e-8).  The fitter lands
# around 5e-7 relative on erf-type data, so this carries ~200x margin.
DEFAULT_FIT_TOL = 1e-4

CSV_HEADER = "epsilon,t,value_re,value_im,error_estimate"


def _csv_lines(rows) -> str:
    """rows of (epsilon, t, complex value, error) -> CSV text.  Floats are
    formatted by repr (shortest round-trip), so equal inputs give equal
    bytes."""
    lines = [CSV_HEADER]
    for e, t, v, err in rows:
        v = complex(v)
        lines.append(f"{float(e)!r},{float(t)!r},{v.real!r},{v.imag!r},{float(err)!r}")
    return "\n".join(lines) + "\n"


def _reim(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# result records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    """Basic-Integral values on an ascending epsilon grid, plus -- once
    fitted -- the decomposition polynomial and tail rate.

    ``poly_coeffs`` are ascending powers of eps.  ``residuals`` are the
    per-point complex misfits of the combined model; the constructor
    holds them to the bound declared in provenance["fit"]["residual_bound"].
    """

    epsilon_grid: tuple
    values: np.ndarray
    poly_coeffs: np.ndarray | None = None
    tail_rate: float | None = None
    residuals: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = np.asarray(self.epsilon_grid, float)
        if eps.ndim != 1 or eps.size == 0 or np.any(eps <= 0):
            raise InputError("epsilon grid must be a nonempty list of positive reals")
        if np.any(np.diff(eps) <= 0):
            raise InputError("epsilon grid must be strictly ascending")
        if len(self.values) != eps.size:
            raise InputError("need exactly one value per epsilon grid point")
        if self.poly_coeffs is None:
            return
        if self.tail_rate is None or self.tail_rate < 0:
            raise InputError("a fitted sweep carries a nonnegative tail rate")
        if self.residuals is None or len(self.residuals) != eps.size:
            raise InputError("a fitted sweep carries per-point residuals")
        bound = self.provenance.get("fit", {}).get("residual_bound")
        if bound is not None:
            worst = float(np.max(np.abs(self.residuals)))
            if worst > bound:
                raise DecompositionError(
                    f"combined fit misses the declared tolerance: max residual "
                    f"{worst:.3g} > {bound:.3g}",
                    report=self.provenance.get("fit", {}),
                )

    @property
    def n_points(self) -> int:
        return len(self.epsilon_grid)

    def poly_at(self, eps) -> np.ndarray:
        """Evaluate the fitted polynomial part (ascending powers)."""
        if self.poly_coeffs is None:
            raise InputError("sweep has no fitted polynomial")
        e = np.asarray(eps, float)
        return sum(c * e**k for k, c in enumerate(self.poly_coeffs))

    def to_csv(self) -> str:
        policy = self.provenance.get("t_policy", {})
        t_col = (
            float(policy.get("t", 0.0))
            if policy.get("kind") == "fixed"
            else float("inf")
        )
        errs = self.provenance.get("point_errors") or [0.0] * self.n_points
        rows = [
            (e, t_col, v, err)
            for e, v, err in zip(self.epsilon_grid, self.values, errs)
        ]
        return _csv_lines(rows)

    def to_json_dict(self) -> dict:
        out = {
            "epsilon_grid": [float(e) for e in self.epsilon_grid],
            "values": [_reim(v) for v in self.values],
            "poly_coeffs": None,
            "tail_rate": self.tail_rate,
            "residuals": None,
            "provenance": self.provenance,
        }
        if self.poly_coeffs is not None:
            out["poly_coeffs"] = [_reim(c) for c in self.poly_coeffs]
            out["residuals"] = [_reim(v) for v in self.residuals]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


@dataclass(frozen=True)
class ContributionRecord:
    """What one critical component adds to the Basic Integral: the
    large-t limit of BI(alpha, above, t) - BI(alpha, below, t) across the
    component's critical value, per epsilon.

    ``probes`` is the (below, above) pair of regular radii straddling the
    value (below is None for the bottom value 0, where the lower region
    is empty).  ``diagnostics`` carries the raw t tables, plateau data,
    Gaussian-rate fits and the probe-independence check, all JSON-safe.
    """

    index: int
    critical_value: float
    probes: tuple
    epsilon_grid: tuple
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.index < 0:
            raise InputError("component index must be nonnegative")
        if self.critical_value < 0:
            raise InputError("critical values are squares, hence nonnegative")
        below, above = self.probes
        if above <= self.critical_value:
            raise InputError("upper probe must exceed the critical value")
        if below is not None and not (0 <= below < self.critical_value):
            raise InputError("lower probe must sit below the critical value")
        eps = np.asarray(self.epsilon_grid, float)
        if eps.size == 0 or np.any(eps <= 0):
            raise InputError("epsilon grid must be positive")
        if len(self.values) != eps.size:
            raise InputError("need exactly one contribution value per epsilon")

    def to_csv(self) -> str:
        """Raw per-(eps, t) differences, then one t=inf row per eps with
        the extrapolated contribution (error = plateau gap)."""
        t_grid = self.diagnostics.get("t_grid", [])
        diffs = self.diagnostics.get("differences", [])
        errs = self.diagnostics.get("point_errors", [])
        gaps = self.diagnostics.get("plateau_gaps", [0.0] * len(self.epsilon_grid))
        rows = []
        for i, e in enumerate(self.epsilon_grid):
            if diffs:
                for k, t in enumerate(t_grid):
                    re_im = diffs[i][k]
                    rows.append(
                        (e, t, complex(re_im[0], re_im[1]),
                         errs[i][k] if errs else 0.0)
                    )
            rows.append((e, float("inf"), self.values[i], gaps[i]))
        return _csv_lines(rows)

    def to_json_dict(self) -> dict:
        below, above = self.probes
        return {
            "index": self.index,
            "critical_value": self.critical_value,
            "probes": [below, above],
            "epsilon_grid": [float(e) for e in self.epsilon_grid],
            "values": [_reim(v) for v in self.values],
            "diagnostics": self.diagnostics,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# the poly + exp(-c/eps) fitter
# ---------------------------------------------------------------------------
#
# Two stages, mirroring the structure of the decomposition itself.  The
# split stage alternates a polynomial fit on the small-eps block with a
# log-linear model of the leftover (columns 1, 1/eps, log eps, eps --
# the last two absorb the half-integer prefactor powers the tail picks
# up from the Gaussian), damped to a fixed point.  The refinement stage
# re-solves jointly: polynomial columns plus exp(-c/eps) * eps^(j/2) for
# a small window of half-integer powers j, with c tuned by golden-section
# on the residual.  The window is centered on the prefactor power the
# split stage saw; a wider window is tried only when the residual floor
# (25n eps_mach) is missed.


def _polyval(coeffs, e):
    return sum(c * e**k for k, c in enumerate(coeffs))


def _split_poly_tail(eps, vals, dmax, tail0, n_iter=400, relax=0.5):
    """Damped alternation: poly on the small-eps block vs log-linear tail
    model of the remainder.  Returns (poly, tail values, c, q, resid, it)."""
    n = len(eps)
    n_small = max(dmax + 3, n // 3)
    v_small = np.vander(eps[:n_small], dmax + 1, increasing=True)

    def poly_on_block(v):
        coef, *_ = np.linalg.lstsq(v_small, v[:n_small], rcond=None)
        return coef

    tail = tail0.copy()
    poly = poly_on_block(vals - tail)
    c = q = 0.0
    use_eps_col = n >= 12
    it = 0
    for it in range(n_iter):
        resid = vals - _polyval(poly, eps)
        mag = np.abs(resid)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
        sel = mag > floor
        if np.sum(sel) < 5:
            tail_new = np.zeros(n, complex)
            c = q = 0.0
        else:
            w = mag[sel]
            cols = [np.ones(np.sum(sel)), 1.0 / eps[sel], np.log(eps[sel])]
            if use_eps_col:
                cols.append(eps[sel])
            x = np.column_stack(cols) * w[:, None]
            y = np.log(mag[sel]) * w
            b, *_ = np.linalg.lstsq(x, y, rcond=None)
            c = min(max(-b[1], 0.0), 50.0)
            q = min(max(b[2], -4.0), 4.0)
            logshape = b[0] + q * np.log(eps) - c / eps
            if use_eps_col:
                logshape = logshape + b[3] * eps
            shape = np.exp(logshape)
            num = np.sum(np.conj(shape[sel]) * resid[sel] * w)
            den = np.sum(shape[sel] ** 2 * w)
            ph = num / den
            ph /= max(abs(ph), 1e-300)
            tail_new = ph * shape
        tail = relax * tail_new + (1 - relax) * tail
        poly_new = poly_on_block(vals - tail)
        d = np.max(np.abs(poly_new - poly))
        poly = poly_new
        if d < 1e-14 and it > 10:
            break
    resid = vals - _polyval(poly, eps) - tail
    return poly, tail, c, q, float(np.max(np.abs(resid))), it


def _split_hierarchy(eps, vals, dmax):
    """Run the split at each degree 0..dmax, warm-starting the tail."""
    tail = np.zeros(len(eps), complex)
    poly = np.zeros(1, complex)
    c = q = 0.0
    resid = 0.0
    it = 0
    for d in range(0, dmax + 1):
        poly, tail, c, q, resid, it = _split_poly_tail(eps, vals, d, tail)
    return dict(poly=poly, c=c, q=q, tail=tail, resid=resid, iters=it)


def _joint_solve(eps, vals, dmax, c, half_powers):
    """One linear solve: polynomial columns + exp(-c/eps) eps^(j/2)."""
    cols = [eps**k for k in range(dmax + 1)]
    damp = np.exp(-c / eps)
    cols += [damp * eps ** (j / 2.0) for j in half_powers]
    x = np.column_stack(cols)
    norms = np.linalg.norm(x, axis=0)
    norms[norms == 0] = 1.0
    sol, *_ = np.linalg.lstsq(x / norms, vals, rcond=None)
    resid = vals - (x / norms) @ sol
    return sol / norms, float(np.linalg.norm(resid))


def _fit_decomposition(eps, vals, dmax) -> dict:
    """Full fit: split stage for an initial (c, prefactor power), then a
    golden-section refinement of c under a joint linear solve."""
    eps = np.asarray(eps, float)
    vals = np.asarray(vals, complex)
    scale = max(1.0, float(np.max(np.abs(vals))))
    base = _split_hierarchy(eps, vals, dmax)
    tail_mag = float(np.max(np.abs(base["tail"])))
    if base["c"] <= 0 or tail_mag < 1e-12 * scale:
        # no discernible tail: plain polynomial fit on everything
        v = np.vander(eps, dmax + 1, increasing=True)
        poly, *_ = np.linalg.lstsq(v, vals, rcond=None)
        resid = vals - v @ poly
        return dict(
            poly=poly, c=0.0, jpow=(), amps=np.zeros(0, complex),
            resid=float(np.max(np.abs(resid))), c_init=base["c"], q_init=base["q"],
        )
    j0 = int(round(2 * base["q"]))
    j0 = min(max(j0, -1), 3)
    c_lo, c_hi = base["c"] / 1.6, base["c"] * 1.6

    def solve_window(jpow):
        cands = np.geomspace(c_lo, c_hi, 25)
        best = None
        for c in cands:
            _, r = _joint_solve(eps, vals, dmax, c, jpow)
            if best is None or r < best[1]:
                best = (c, r)
        lo, hi = max(best[0] / 1.2, c_lo), min(best[0] * 1.2, c_hi)
        for _ in range(36):
            m1, m2 = lo + (hi - lo) * 0.382, lo + (hi - lo) * 0.618
            if (
                _joint_solve(eps, vals, dmax, m1, jpow)[1]
                < _joint_solve(eps, vals, dmax, m2, jpow)[1]
            ):
                hi = m2
            else:
                lo = m1
        c = 0.5 * (lo + hi)
        sol, r = _joint_solve(eps, vals, dmax, c, jpow)
        return c, sol, r

    windows = []
    for lo_j in (j0, max(j0 - 1, -1)):
        w = tuple(range(lo_j, lo_j + 4))
        if w not in windows:
            windows.append(w)
    picked = None
    for w in windows:
        c, sol, r = solve_window(w)
        if picked is None or r < picked[3]:
            picked = (w, c, sol, r)
    wide = tuple(range(max(j0 - 1, -1), j0 + 4))
    if len(wide) > 4 and picked[3] > 25 * len(eps) * 1e-15 * scale:
        c, sol, r = solve_window(wide)
        if r < picked[3] / 3.0:
            picked = (wide, c, sol, r)
    jpow, c, sol, r = picked
    return dict(
        poly=sol[: dmax + 1], c=c, jpow=jpow, amps=sol[dmax + 1 :],
        resid=r, c_init=base["c"], q_init=base["q"],
    )


def _tail_values(fit, eps):
    if not len(fit["jpow"]):
        return np.zeros(len(eps), complex)
    damp = np.exp(-fit["c"] / eps)
    cols = np.column_stack([damp * eps ** (j / 2.0) for j in fit["jpow"]])
    return cols @ fit["amps"]


def default_poly_degree(space: HamiltonianSpace) -> int:
    """Half the reduced dimension, rounded up: the eps-polynomial of the
    reduced integral truncates at dim/4, the slack absorbs half-integer
    bookkeeping differences."""
    red = max(space.ambient_dim - 2 * space.algebra.dim, 0)
    return math.ceil(red / 2)


def fit_poly_plus_tail(
    sweep: SweepResult,
    poly_degree_max: int | None = None,
    fit_tol: float = DEFAULT_FIT_TOL,
):
    """Split sweep values into polynomial + exp(-c/eps) tail.

    Returns (poly_coeffs, tail_rate, report).  poly_coeffs are ascending
    complex coefficients, tail_rate is c >= 0.  The report carries the
    residual profile, the declared bound, the stability drift under
    dropping the largest-eps points, and the damping guard data.

    Raises DecompositionError when the combined model misses the declared
    tolerance, when the polynomial coefficients are not stable under
    shrinking the grid (the split is unique, so instability means the fit
    did not resolve it), or when the fitted "tail" is significant but its
    rate is below 1.5 * min(eps) -- an exponential that slow is
    indistinguishable from a power of eps on the grid, which is exactly
    the signature of a non-regular zero level (fractional powers the
    polynomial cannot absorb).
    """
    if poly_degree_max is None:
        poly_degree_max = int(sweep.provenance.get("poly_degree_max", 0))
    if poly_degree_max < 0:
        raise InputError("poly_degree_max must be nonnegative")
    eps = np.asarray(sweep.epsilon_grid, float)
    vals = np.asarray(sweep.values, complex)
    if eps.size < poly_degree_max + 4:
        raise InputError(
            f"{eps.size} grid points cannot pin a degree-{poly_degree_max} "
            f"polynomial plus tail; need at least {poly_degree_max + 4}"
        )
    scale = float(np.max(np.abs(vals)))
    point_errors = sweep.provenance.get("point_errors") or [0.0]
    noise_floor = max(1e-13 * max(scale, 1.0), 10.0 * max(point_errors))
    residual_bound = fit_tol * scale if scale > 1e-8 else fit_tol

    fit = _fit_decomposition(eps, vals, poly_degree_max)
    model = _polyval(fit["poly"], eps) + _tail_values(fit, eps)
    residuals = vals - model
    worst = float(np.max(np.abs(residuals)))

    tail_max = float(np.max(np.abs(_tail_values(fit, eps)))) if len(fit["jpow"]) else 0.0
    tail_significant = tail_max > max(residual_bound, noise_floor)
    rate_floor = 1.5 * float(eps[0])

    n_drop = max(2, eps.size // 6)
    refit = _fit_decomposition(eps[:-n_drop], vals[:-n_drop], poly_degree_max)
    drift = float(np.max(np.abs(refit["poly"] - fit["poly"]))) / max(scale, 1e-8)

    report = {
        "degree": poly_degree_max,
        "tolerance": fit_tol,
        "residual_bound": residual_bound,
        "residual_max": worst,
        "residual_profile": [float(abs(r)) for r in residuals],
        "noise_floor": noise_floor,
        "tail_rate": float(fit["c"]),
        "tail_powers": [int(j) for j in fit["jpow"]],
        "tail_amplitudes": [_reim(a) for a in fit["amps"]],
        "tail_max": tail_max,
        "tail_significant": bool(tail_significant),
        "rate_floor": rate_floor,
        "split_stage": {"c": float(fit["c_init"]), "prefactor_power": float(fit["q_init"])},
        "stability": {
            "dropped_points": n_drop,
            "coefficient_drift": drift,
            "refit_poly": [_reim(c) for c in refit["poly"]],
        },
    }

    if worst > residual_bound:
        raise DecompositionError(
            f"combined fit misses the declared tolerance: max residual "
            f"{worst:.3g} > {residual_bound:.3g}",
            report=report,
        )
    if tail_significant and fit["c"] < rate_floor:
        raise DecompositionError(
            f"the remainder after the polynomial is significant "
            f"(max {tail_max:.3g}) but its fitted rate c = {fit['c']:.3g} is "
            f"below 1.5 * min(eps) = {rate_floor:.3g}: on this grid it varies "
            "like a power of eps, not an exponential -- a non-regular zero "
            "level, or a grid that needs to extend to smaller eps",
            report=report,
        )
    if drift > fit_tol:
        raise DecompositionError(
            f"polynomial coefficients drift by {drift:.3g} (relative) when the "
            f"{n_drop} largest-eps points are dropped; the split is unique, so "
            "the fit has not resolved it on this grid",
            report=report,
        )
    return np.asarray(fit["poly"], complex), float(fit["c"]), report


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def _gate_alpha(space: HamiltonianSpace, alpha: EquivariantForm):
    checks = check_alpha(space, alpha)
    if not checks["ok"]:
        raise InputError(
            "alpha is not an admissible integrand: "
            f"D-residual {checks['d_residual']:.3g}, "
            f"invariance residual {checks['invariance_residual']:.3g}"
        )
    return checks


def _bi(space, alpha, r, eps, t, scheme):
    """One Basic-Integral point; r=None means the empty region (exact 0)."""
    if r is None:
        return 0.0 + 0.0j, 0.0
    res = basic_integral(
        BasicIntegralRequest(
            space=space, alpha=alpha, r=r, epsilon=eps, t=t, quadrature=scheme
        ),
        validate=False,
    )
    return res.value, res.error


def _ascending_grid(grid, what) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(grid, float))
    if arr.size == 0 or np.any(arr <= 0):
        raise InputError(f"{what} must be positive")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise InputError(f"{what} must be strictly ascending")
    return arr


def _boundary_gauge_pairing(space, r, scheme):
    """(min, max) over the boundary of M_r of |<V_a, V_mustar>|: the
    squared min divided by 2 eps is the t^2 rate at which the deformation
    kills the boundary term; t * max / eps is the Gaussian shift the
    closed-form moment evaluation has to absorb."""
    gdim = space.algebra.dim
    lo, hi = math.inf, 0.0
    for grid in boundary_surfaces(space, r, scheme=scheme):
        pts = grid.nodes
        n = pts.shape[0]
        cache: dict = {}
        vmu = np.stack(
            [
                np.broadcast_to(np.asarray(c.eval(pts, cache), float), (n,))
                for c in space.v_mu_star_exprs()
            ],
            axis=1,
        )
        act = np.stack(
            [
                np.stack(
                    [
                        np.broadcast_to(np.asarray(c.eval(pts, cache), float), (n,))
                        for c in space.action.components[a]
                    ],
                    axis=1,
                )
                for a in range(gdim)
            ],
            axis=2,
        )
        pair = np.einsum("ndg,nd->ng", act, vmu)
        norm = np.sqrt(np.einsum("ng,ng->n", pair, pair))
        lo = min(lo, float(norm.min()))
        hi = max(hi, float(norm.max()))
    if not math.isfinite(lo):  # no boundary shells (region reaches the origin)
        lo = 0.0
    return lo, hi


def _plateau(values, t_grid, rel, abs_tol, err_floor):
    """Large-t plateau of a value sequence: settled once the last
    successive difference sits below tolerance.  Returns (limit | None,
    diagnostics); with super-exponential decay the final gap bounds the
    truncation, and it is reported as the error estimate."""
    v = np.asarray(values, complex)
    diffs = np.abs(np.diff(v))
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    tol = max(rel * scale, abs_tol, err_floor)
    settled = bool(diffs.size) and diffs[-1] < tol
    start = diffs.size
    while start > 0 and diffs[start - 1] < tol:
        start -= 1
    diag = {
        "differences": [float(d) for d in diffs],
        "tolerance": tol,
        "plateau_from": int(start) if settled else None,
        "plateau_gap": float(diffs[-1]) if diffs.size else 0.0,
        "t_grid": [float(t) for t in t_grid],
    }
    return (v[-1] if settled else None), diag


def large_t_limit(
    space: HamiltonianSpace,
    alpha: EquivariantForm,
    r: float,
    epsilon: float,
    t_grid=None,
    quadrature: QuadratureScheme | None = None,
    rel_tol: float = 1e-7,
    abs_tol: float = 1e-11,
    validate: bool = True,
):
    """lim_{t->inf} BI(alpha, r, t) at one epsilon, by plateau detection
    on an ascending t grid.  Returns (limit, diagnostics).

    Raises NonConvergenceError when the grid ends before the plateau;
    the report carries the conditioning data (Gaussian shift magnitude
    and the boundary pairing bounds) needed to size a longer grid."""
    scheme = quadrature or QuadratureScheme()
    t_arr = np.asarray(DEFAULT_T_GRID if t_grid is None else t_grid, float)
    if t_arr.size < 3:
        raise InputError("plateau detection needs at least three t values")
    if np.any(np.diff(t_arr) <= 0) or t_arr[0] < 0:
        raise InputError("t grid must be nonnegative and strictly ascending")
    if validate:
        check_regular_radius(space, r)
        _gate_alpha(space, alpha)
    pair_lo, pair_hi = _boundary_gauge_pairing(space, r, scheme)
    vals, errs = [], []
    for t in t_arr:
        v, err = _bi(space, alpha, r, epsilon, float(t), scheme)
        vals.append(v)
        errs.append(err)
    limit, diag = _plateau(vals, t_arr, rel_tol, abs_tol, 10.0 * max(errs))
    diag.update(
        values=[_reim(v) for v in vals],
        point_errors=[float(e) for e in errs],
        epsilon=float(epsilon),
        r=float(r),
        gauge_pairing={"min": pair_lo, "max": pair_hi},
        shift_magnitude=float(t_arr[-1]) * pair_hi / float(epsilon),
        rate_bound=pair_lo**2 / (2.0 * float(epsilon)),
    )
    if limit is None:
        raise NonConvergenceError(
            f"BI(r={r:g}) has not reached its large-t plateau by "
            f"t={t_arr[-1]:g} at eps={epsilon:g}: last difference "
            f"{diag['differences'][-1]:.3g} vs tolerance {diag['tolerance']:.3g}. "
            f"The boundary term decays like exp(-t^2 {diag['rate_bound']:.3g}); "
            "extend the t grid",
            report=diag,
        )
    return limit, diag


# ---------------------------------------------------------------------------
# epsilon sweeps
# ---------------------------------------------------------------------------


def epsilon_sweep(
    space: HamiltonianSpace,
    alpha: EquivariantForm,
    r: float,
    t_policy=0.0,
    grid=None,
    quadrature: QuadratureScheme | None = None,
    t_grid=None,
    poly_degree_max: int | None = None,
    fit_tol: float = DEFAULT_FIT_TOL,
    alpha_label: str = "",
) -> SweepResult:
    """Evaluate BI(alpha, r, .) on an ascending epsilon grid and fit the
    polynomial + tail decomposition.

    ``t_policy`` is either a number (BI evaluated at that fixed t) or the
    string "extrapolated" (each grid point is the large-t plateau over
    ``t_grid``).  The fit is skipped, with a warning, when the grid is
    shorter than poly_degree_max + 4 points.
    """
    scheme = quadrature or QuadratureScheme()
    eps = _ascending_grid(DEFAULT_EPSILON_GRID if grid is None else grid, "epsilon grid")
    check_regular_radius(space, r)
    _gate_alpha(space, alpha)
    if poly_degree_max is None:
        poly_degree_max = default_poly_degree(space)

    if isinstance(t_policy, str):
        if t_policy != "extrapolated":
            raise InputError(
                f"unknown t policy {t_policy!r}: pass a number or 'extrapolated'"
            )
        policy = {"kind": "extrapolated",
                  "t_grid": [float(t) for t in (t_grid or DEFAULT_T_GRID)]}
    else:
        policy = {"kind": "fixed", "t": float(t_policy)}
        if policy["t"] < 0:
            raise InputError("fixed t must be nonnegative")

    values = np.empty(eps.size, complex)
    errors = np.empty(eps.size, float)
    t_diagnostics = []
    for i, e in enumerate(eps):
        if policy["kind"] == "fixed":
            values[i], errors[i] = _bi(space, alpha, r, float(e), policy["t"], scheme)
        else:
            limit, diag = large_t_limit(
                space, alpha, r, float(e), policy["t_grid"], scheme, validate=False
            )
            values[i] = limit
            errors[i] = diag["plateau_gap"] + max(diag["point_errors"])
            t_diagnostics.append(diag)

    provenance = {
        "space": space.name,
        "alpha": alpha_label or repr(alpha),
        "r": float(r),
        "t_policy": policy,
        "quadrature": scheme.to_json_dict(),
        "point_errors": [float(x) for x in errors],
        "poly_degree_max": int(poly_degree_max),
    }
    if t_diagnostics:
        provenance["t_diagnostics"] = t_diagnostics
    base = SweepResult(
        epsilon_grid=tuple(float(e) for e in eps),
        values=values,
        provenance=provenance,
    )
    if eps.size < poly_degree_max + 4:
        warnings.warn(
            f"{eps.size} grid points cannot pin a degree-{poly_degree_max} "
            "polynomial plus tail; decomposition fit skipped",
            stacklevel=2,
        )
        return base
    poly, rate, report = fit_poly_plus_tail(base, poly_degree_max, fit_tol)
    residuals = values - _polyval(poly, eps) - _tail_values(
        {"poly": poly, "c": rate,
         "jpow": tuple(report["tail_powers"]),
         "amps": np.array([complex(a, b) for a, b in report["tail_amplitudes"]])},
        eps,
    )
    return replace(
        base,
        poly_coeffs=poly,
        tail_rate=rate,
        residuals=residuals,
        provenance={**provenance, "fit": report},
    )


# ---------------------------------------------------------------------------
# per-component contributions
# ---------------------------------------------------------------------------


def _default_search_radius(space: HamiltonianSpace) -> float:
    known = known_critical_values(space)
    if known is None:
        raise InputError(
            f"{space.name} has no catalog critical values; pass r_max or "
            "precomputed components"
        )
    top = max(known)
    return 1.0 if top <= 0.6 else 2.5 * top


def contribution(
    space: HamiltonianSpace,
    alpha: EquivariantForm,
    index: int,
    epsilon,
    t_grid=None,
    components=None,
    r_max: float | None = None,
    quadrature: QuadratureScheme | None = None,
    alpha_label: str = "",
    plateau_rel: float = 1e-7,
    plateau_abs: float = 1e-11,
) -> ContributionRecord:
    """The contribution of the ``index``-th critical value (ascending,
    0-based) at each epsilon: the large-t limit of
    BI(alpha, above, t) - BI(alpha, below, t) across the value.

    ``epsilon`` may be a scalar or an ascending sequence.  Probes come
    from critical_values over ``components`` (located inside M_{r_max}
    when not supplied).  The result is checked for independence of the
    probe choice by recomputing at perturbed probes for the largest
    epsilon; disagreement raises AccuracyError, a missing plateau raises
    NonConvergenceError with conditioning data.
    """
    scheme = quadrature or QuadratureScheme()
    eps_arr = _ascending_grid(epsilon, "epsilon")
    t_arr = np.asarray(DEFAULT_T_GRID if t_grid is None else t_grid, float)
    if t_arr.size < 3:
        raise InputError("plateau detection needs at least three t values")
    if np.any(np.diff(t_arr) <= 0) or t_arr[0] < 0:
        raise InputError("t grid must be nonnegative and strictly ascending")
    _gate_alpha(space, alpha)

    if components is None:
        if r_max is None:
            r_max = _default_search_radius(space)
        components = find_critical_points(space, r_max)
    if not components:
        raise InputError("no critical components to take contributions from")
    values_list, probes_list = critical_values(components)
    if not 0 <= index < len(values_list):
        raise InputError(
            f"component index {index} out of range: {len(values_list)} "
            "critical values located"
        )
    crit_value = values_list[index]
    below, above = probes_list[index]
    check_regular_radius(space, above)
    if below is not None:
        check_regular_radius(space, below)

    pair = [_boundary_gauge_pairing(space, above, scheme)]
    if below is not None:
        pair.append(_boundary_gauge_pairing(space, below, scheme))
    pair_lo = min(p[0] for p in pair)
    pair_hi = max(p[1] for p in pair)

    def diff_across(e, lo, hi):
        vals, errs = [], []
        for t in t_arr:
            va, ea = _bi(space, alpha, hi, e, float(t), scheme)
            vb, eb = _bi(space, alpha, lo, e, float(t), scheme)
            vals.append(va - vb)
            errs.append(ea + eb)
        return np.asarray(vals, complex), np.asarray(errs, float)

    values = np.empty(eps_arr.size, complex)
    diff_table, err_table, plateau_diags, gaps, betas = [], [], [], [], []
    for i, e in enumerate(eps_arr):
        vals_t, errs_t = diff_across(float(e), below, above)
        limit, diag = _plateau(vals_t, t_arr, plateau_rel, plateau_abs,
                               10.0 * float(errs_t.max()))
        if limit is None:
            raise NonConvergenceError(
                f"contribution {index} has not reached its plateau by "
                f"t={t_arr[-1]:g} at eps={e:g}: last difference "
                f"{diag['differences'][-1]:.3g} vs tolerance "
                f"{diag['tolerance']:.3g}; the slowest boundary mode decays "
                f"like exp(-t^2 * {pair_lo**2 / (2 * float(e)):.3g}) -- "
                "extend the t grid",
                report={**diag, "epsilon": float(e),
                        "shift_magnitude": float(t_arr[-1]) * pair_hi / float(e),
                        "gauge_pairing": {"min": pair_lo, "max": pair_hi}},
            )
        values[i] = limit
        diff_table.append([_reim(v) for v in vals_t])
        err_table.append([float(x) for x in errs_t])
        plateau_diags.append(diag)
        gaps.append(diag["plateau_gap"])
        # log-fit of the successive differences against the Gaussian
        # rate bound t^2 * pair_min^2 / (2 eps): slope >= 1 means the
        # plateau is approached at least at the boundary-mode rate.
        d = np.abs(np.diff(vals_t))
        live = d > max(10.0 * float(errs_t.max()), 1e-14 * float(np.max(np.abs(vals_t))))
        beta = None
        if pair_lo > 0 and int(np.sum(live)) >= 3:
            x = t_arr[:-1][live] ** 2 * pair_lo**2 / (2.0 * float(e))
            y = np.log(d[live])
            design = np.column_stack([np.ones(x.size), -x])
            sol, *_ = np.linalg.lstsq(design, y, rcond=None)
            beta = float(sol[1])
        betas.append(beta)

    # probe independence, checked at the largest epsilon (slowest plateau,
    # largest magnitude): shrink both probe offsets to 3/4.
    e_chk = float(eps_arr[-1])
    below_alt = (
        None if below is None else crit_value - 0.75 * (crit_value - below)
    )
    above_alt = crit_value + 0.75 * (above - crit_value)
    check_regular_radius(space, above_alt)
    if below_alt is not None:
        check_regular_radius(space, below_alt)
    vals_alt, errs_alt = diff_across(e_chk, below_alt, above_alt)
    limit_alt, diag_alt = _plateau(vals_alt, t_arr, plateau_rel, plateau_abs,
                                   10.0 * float(errs_alt.max()))
    if limit_alt is None:
        raise NonConvergenceError(
            "perturbed-probe recomputation lost its plateau; the probe "
            "independence check needs a longer t grid",
            report={**diag_alt, "epsilon": e_chk},
        )
    ref = values[-1]
    scale_chk = max(abs(ref), abs(limit_alt), 1.0)
    tol_ind = max(
        50.0 * (float(err_table[-1][-1]) + float(errs_alt[-1])),
        10.0 * (gaps[-1] + diag_alt["plateau_gap"]),
        1e-8 * scale_chk,
        plateau_abs,
    )
    probe_shift = abs(limit_alt - ref)
    if probe_shift > tol_ind:
        raise AccuracyError(
            f"contribution {index} moved by {probe_shift:.3g} when the probes "
            f"shifted within their regular intervals (tolerance {tol_ind:.3g}); "
            "the probe radii are not in the same regular interval or the "
            "plateau is under-resolved",
            partial=ref,
            estimate=probe_shift,
        )

    diagnostics = {
        "t_grid": [float(t) for t in t_arr],
        "differences": diff_table,
        "point_errors": err_table,
        "plateau": plateau_diags,
        "plateau_gaps": [float(g) for g in gaps],
        "gaussian_rate": {
            "bound_coefficient": pair_lo**2 / 2.0,
            "fitted_slope_ratio": betas,
        },
        "gauge_pairing": {"min": pair_lo, "max": pair_hi},
        "shift_magnitude": float(t_arr[-1]) * pair_hi / float(eps_arr[0]),
        "probe_independence": {
            "epsilon": e_chk,
            "perturbed_probes": [below_alt, above_alt],
            "value": _reim(limit_alt),
            "difference": float(probe_shift),
            "tolerance": float(tol_ind),
        },
    }
    provenance = {
        "space": space.name,
        "alpha": alpha_label or repr(alpha),
        "quadrature": scheme.to_json_dict(),
        "r_max": None if r_max is None else float(r_max),
        "critical_values": [float(v) for v in values_list],
    }
    return ContributionRecord(
        index=int(index),
        critical_value=float(crit_value),
        probes=(None if below is None else float(below), float(above)),
        epsilon_grid=tuple(float(e) for e in eps_arr),
        values=values,
        diagnostics=diagnostics,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# damping bounds
# ---------------------------------------------------------------------------


def damping_check(
    space: HamiltonianSpace,
    alpha: EquivariantForm,
    r: float,
    s: float,
    epsilon_grid=None,
    quadrature: QuadratureScheme | None = None,
    slack: float = 0.15,
) -> dict:
    """Verify that enlarging the region from s to r changes BI(alpha, ., 0)
    only by an exponentially damped amount: the fitted slope of
    log|BI(r) - BI(s)| against 1/eps must be <= -s/2 * (1 - slack).

    Returns the rate report.  When every difference sits below the
    quadrature noise floor the check is inconclusive (reported, not an
    error); a live slope missing the bound raises AccuracyError.
    """
    if not 0 < s < r:
        raise InputError("need radii 0 < s < r")
    scheme = quadrature or QuadratureScheme()
    check_regular_radius(space, r)
    check_regular_radius(space, s)
    _gate_alpha(space, alpha)
    eps = _ascending_grid(
        DEFAULT_EPSILON_GRID if epsilon_grid is None else epsilon_grid,
        "epsilon grid",
    )

    diffs = np.empty(eps.size, float)
    floors = np.empty(eps.size, float)
    for i, e in enumerate(eps):
        v_r, err_r = _bi(space, alpha, r, float(e), 0.0, scheme)
        v_s, err_s = _bi(space, alpha, s, float(e), 0.0, scheme)
        diffs[i] = abs(v_r - v_s)
        floors[i] = 10.0 * (err_r + err_s) + 1e-15 * max(abs(v_r), abs(v_s))
    live = diffs > floors
    report = {
        "r": float(r),
        "s": float(s),
        "epsilon_grid": [float(e) for e in eps],
        "differences": [float(d) for d in diffs],
        "noise_floor": [float(f) for f in floors],
        "n_used": int(np.sum(live)),
        "slack": slack,
        "bound": -0.5 * s * (1.0 - slack),
    }
    if int(np.sum(live)) < 3:
        report.update(
            inconclusive=True, ok=None, slope=None, intercept=None, rate=None,
            reason="differences sit at the quadrature noise floor; the "
                   "damping is too strong to measure on this grid",
        )
        return report
    x = 1.0 / eps[live]
    y = np.log(diffs[live])
    design = np.column_stack([np.ones(x.size), x])
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope = float(sol[1])
    report.update(
        inconclusive=False,
        slope=slope,
        intercept=float(sol[0]),
        rate=-slope,
        ok=bool(slope <= report["bound"]),
    )
    if not report["ok"]:
        raise AccuracyError(
            f"damping slope {slope:.4g} misses the bound {report['bound']:.4g} "
            f"(-s/2 with {slack:.0%} slack): the tail beyond radius s is not "
            "exponentially damped at the guaranteed rate",
            partial=slope,
            estimate=slope - report["bound"],
        )
    return report


# ---------------------------------------------------------------------------
# the r -> infinity limit
# ---------------------------------------------------------------------------


def global_convergence_check(
    space: HamiltonianSpace,
    alpha: EquivariantForm,
    r_grid,
    epsilon: float,
    quadrature: QuadratureScheme | None = None,
    growth_constant: float = 1.0,
) -> dict:
    """Check that BI(alpha, r, 0) settles as r grows: increments between
    consecutive radii must decay, staying under the shell bound
    exp(-r/(2 eps) + 2 c sqrt(r)) (c = ``growth_constant``, the sqrt term
    paying for the polynomial volume growth of the shells).

    Returns a report with the extrapolated limit (the last value, its
    error bounded by the final increment) -- or, when increments grow,
    a divergence report with limit None.  Growing increments mean alpha's
    norm outruns the Gaussian, so the infinite-region integral does not
    exist; that is a finding, not an error.
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    if _radial_info(space) is None:
        raise InputError(
            f"{space.name} does not document its radial volume growth; the "
            "global limit check needs the radial geometry"
        )
    scheme = quadrature or QuadratureScheme()
    r_arr = _ascending_grid(r_grid, "r grid")
    if r_arr.size < 3:
        raise InputError("need at least three radii to judge the increments")
    for r in r_arr:
        check_regular_radius(space, float(r))
    _gate_alpha(space, alpha)

    values, errors = [], []
    for r in r_arr:
        v, err = _bi(space, alpha, float(r), float(epsilon), 0.0, scheme)
        values.append(v)
        errors.append(err)
    values = np.asarray(values, complex)
    inc = np.abs(np.diff(values))
    floors = 10.0 * (np.asarray(errors[:-1]) + np.asarray(errors[1:]))
    bounds = np.exp(
        -r_arr[:-1] / (2.0 * epsilon)
        + 2.0 * growth_constant * np.sqrt(r_arr[:-1])
    )
    ratios = inc / bounds
    live = inc > floors

    divergent = any(
        live[k + 1] and inc[k + 1] > inc[k] for k in range(inc.size - 1)
    )
    live_ratios = ratios[live]
    within_bound = bool(
        live_ratios.size == 0
        or np.all(live_ratios <= live_ratios[0] * 1.2)
    )

    report = {
        "epsilon": float(epsilon),
        "growth_constant": float(growth_constant),
        "r_grid": [float(r) for r in r_arr],
        "values": [_reim(v) for v in values],
        "point_errors": [float(e) for e in errors],
        "increments": [float(d) for d in inc],
        "noise_floor": [float(f) for f in floors],
        "shell_bounds": [float(b) for b in bounds],
        "bound_ratios": [float(x) for x in ratios],
        "divergent": bool(divergent),
        "within_bound": within_bound and not divergent,
    }
    if divergent:
        report.update(limit=None, limit_error=None)
    else:
        report.update(
            limit=_reim(values[-1]),
            limit_error=float(inc[-1] + errors[-1]),
        )
    return report
