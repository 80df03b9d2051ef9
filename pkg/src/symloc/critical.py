"""Critical sets of |mu|^2, located as zeros of the vector field V mu*.

d|mu|^2 = 2 <d mu*, mu*> = omega _| V mu*, and omega is nondegenerate, so
the critical points of |mu|^2 are exactly the zeros of V mu* (equivalently
of the one-form lambda).  The minimizer therefore descends
f(p) = ||V_p mu*||^2, whose global minima are precisely the critical set,
instead of tracking saddles of |mu|^2 itself.

Each located component carries a local description around a base point p:
the tangent data splits into orbit directions, the moment-transverse
directions, and the symplectic slice X; with beta = mu*(p) and
<Q_x, phi> = (1/2) omega(x, phi x) for phi in the stabilizer algebra h,
the component coincides near p with the orbit of
Z = {x in X : beta x = 0, Q_x = 0}, and every other solution of
(beta + Q_x) x = 0 keeps |Q_x| >= min_alpha beta_alpha, the smallest
positive singular value of the beta-action on X.  local_model_check
verifies both statements numerically.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .fields import Expr, const
from .hamspace import HamiltonianSpace
from .liealg import InputError, NonConvergenceError, NotRegularError

__all__ = [
    "CriticalComponent",
    "find_critical_points",
    "critical_values",
    "local_model_check",
]

CONVERGED_F = 1e-16          # ||V mu*||^2 below this counts as critical
VALUE_GROUP_TOL = 1e-6       # critical values closer than this are equal
DEFAULT_CLUSTER_RADIUS = 1e-2
MIN_VALUE_GAP = 1e-4         # distinct critical values must be this far apart


@dataclass(frozen=True)
class CriticalComponent:
    """One connected component of the critical set of |mu|^2.

    representative_points samples the component (a single point when the
    component is isolated); critical_value is the common |mu|^2 value;
    beta_star is mu* at the base representative (determined up to the
    adjoint orbit); tolerance is the residual bound the representatives
    achieve, max(||V mu*||, value spread / 10)."""

    representative_points: np.ndarray
    critical_value: float
    moment_norm: float
    beta_star: np.ndarray
    tolerance: float
    n_converged: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.critical_value < 0 and self.critical_value > -1e-12:
            object.__setattr__(self, "critical_value", 0.0)
        if self.critical_value < 0:
            raise InputError("critical_value must be nonnegative")

    def to_json_dict(self) -> dict:
        return {
            "critical_value": self.critical_value,
            "moment_norm": self.moment_norm,
            "beta_star": list(self.beta_star),
            "tolerance": self.tolerance,
            "n_converged": self.n_converged,
            "representative_points": self.representative_points.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# field and Jacobian evaluation
# ---------------------------------------------------------------------------


def _vfield_and_jacobian(space: HamiltonianSpace):
    comps = space.v_mu_star_exprs()
    d = space.ambient_dim
    jac = [[comps[j].diff(i) for i in range(d)] for j in range(d)]

    def f_eval(pts):
        cache: dict = {}
        n = pts.shape[0]
        cols = [
            np.broadcast_to(np.asarray(c.eval(pts, cache), float), (n,))
            for c in comps
        ]
        return np.stack(cols, axis=1)

    def j_eval(pts):
        cache: dict = {}
        n = pts.shape[0]
        out = np.empty((n, d, d))
        for j in range(d):
            for i in range(d):
                out[:, j, i] = np.broadcast_to(
                    np.asarray(jac[j][i].eval(pts, cache), float), (n,)
                )
        return out

    return f_eval, j_eval


def _action_matrix(space: HamiltonianSpace, p: np.ndarray) -> np.ndarray:
    """Columns V_{e_a}(p): the infinitesimal action at p."""
    pts = p.reshape(1, -1)
    cache: dict = {}
    cols = []
    for a in range(space.algebra.dim):
        col = [
            float(np.broadcast_to(np.asarray(c.eval(pts, cache), float), (1,))[0])
            for c in space.action.components[a]
        ]
        cols.append(col)
    return np.array(cols).T  # (d, g)


def _action_jacobians(space: HamiltonianSpace, p: np.ndarray) -> np.ndarray:
    """A_a[j, i] = d V_{e_a}^j / d x_i at p, for each generator a."""
    d = space.ambient_dim
    pts = p.reshape(1, -1)
    cache: dict = {}
    out = np.empty((space.algebra.dim, d, d))
    for a in range(space.algebra.dim):
        for j in range(d):
            cj = space.action.components[a][j]
            for i in range(d):
                out[a, j, i] = float(
                    np.broadcast_to(
                        np.asarray(cj.diff(i).eval(pts, cache), float), (1,)
                    )[0]
                )
    return out


def _moment_gradients(space: HamiltonianSpace, p: np.ndarray) -> np.ndarray:
    """Rows grad mu_a at p, mu_a = <mu, e_a> the pairing components."""
    d = space.ambient_dim
    pts = p.reshape(1, -1)
    cache: dict = {}
    rows = np.empty((space.algebra.dim, d))
    for a, expr in enumerate(space.mu_pairing_exprs()):
        for i in range(d):
            rows[a, i] = float(
                np.broadcast_to(
                    np.asarray(expr.diff(i).eval(pts, cache), float), (1,)
                )[0]
            )
    return rows


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------


def _descend(f_eval, j_eval, x, max_gd=120, max_newton=50):
    """Vectorized descent of f = ||F||^2: backtracking gradient steps, then
    Levenberg-damped Gauss-Newton on F = 0.  Returns (points, f values)."""
    x = np.array(x, dtype=float)
    F = f_eval(x)
    f = np.sum(F * F, axis=1)
    alpha = np.full(len(x), 0.1)
    for _ in range(max_gd):
        if np.max(f) < 1e-18:
            break
        J = j_eval(x)
        grad = 2.0 * np.einsum("nji,nj->ni", J, F)
        g2 = np.sum(grad * grad, axis=1)
        move = g2 > 1e-30
        if not np.any(move):
            break
        accepted = np.zeros(len(x), dtype=bool)
        for _ in range(30):
            trial = np.where(
                (move & ~accepted)[:, None], x - alpha[:, None] * grad, x
            )
            Ft = f_eval(trial)
            ft = np.sum(Ft * Ft, axis=1)
            ok = ft <= f - 1e-4 * alpha * g2
            newly = move & ~accepted & ok
            x[newly] = trial[newly]
            f[newly] = ft[newly]
            F[newly] = Ft[newly]
            accepted |= newly
            alpha[move & ~accepted] *= 0.5
            if np.all(accepted | ~move):
                break
        alpha[accepted] = np.minimum(alpha[accepted] * 1.5, 1.0)
        alpha[move & ~accepted] = 0.1  # reset stalled points

    lam = np.full(len(x), 1e-6)
    eye = np.eye(x.shape[1])
    for _ in range(max_newton):
        if np.max(f) < 1e-28:
            break
        J = j_eval(x)
        jtj = np.einsum("nji,njk->nik", J, J)
        rhs = -np.einsum("nji,nj->ni", J, F)
        for _ in range(12):
            try:
                dx = np.linalg.solve(
                    jtj + lam[:, None, None] * eye, rhs[..., None]
                )[..., 0]
            except np.linalg.LinAlgError:
                lam = lam * 10
                continue
            trial = x + dx
            Ft = f_eval(trial)
            ft = np.sum(Ft * Ft, axis=1)
            ok = ft <= f
            x[ok] = trial[ok]
            f[ok] = ft[ok]
            F[ok] = Ft[ok]
            lam[ok] = np.maximum(lam[ok] / 3.0, 1e-14)
            lam[~ok] *= 10.0
            if np.all(ok):
                break
    return x, f


def _sobol_seeds(space: HamiltonianSpace, r_max: float, n_seeds: int, seed: int):
    """Low-discrepancy starts inside M_{r_max} (rejection against the
    sample box)."""
    d = space.ambient_dim
    lo, hi = space.sample_box[:, 0], space.sample_box[:, 1]
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    mu2 = space.mu_norm2_expr()
    kept = []
    n_kept = 0
    for _ in range(12):
        draw = lo + (hi - lo) * sampler.random(max(2 * n_seeds, 64))
        cache: dict = {}
        vals = np.broadcast_to(
            np.asarray(mu2.eval(draw, cache), float), (len(draw),)
        )
        inside = draw[vals <= r_max]
        if space.chart_radius < math.inf:
            inside = inside[
                np.linalg.norm(inside, axis=1) < space.chart_radius
            ]
        kept.append(inside)
        n_kept += len(inside)
        if n_kept >= n_seeds:
            break
    pts = np.concatenate(kept) if kept else np.empty((0, d))
    return pts[:n_seeds]


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


def _dedupe(pts: np.ndarray, f: np.ndarray, resolution: float = 1e-7):
    """Collapse near-identical converged points (many seeds land on the
    same zero to machine precision), keeping the best residual of each
    cell and its multiplicity."""
    keys = np.round(pts / resolution).astype(np.int64)
    seen: dict[tuple, int] = {}
    keep: list[int] = []
    mult: list[int] = []
    for i in range(len(pts)):
        k = tuple(keys[i])
        j = seen.get(k)
        if j is None:
            seen[k] = len(keep)
            keep.append(i)
            mult.append(1)
        else:
            mult[j] += 1
            if f[i] < f[keep[j]]:
                keep[j] = i
    idx = np.array(keep)
    return pts[idx], f[idx], np.array(mult)


def _minimum_spanning_edges(pts: np.ndarray):
    """Prim's algorithm: (length, i, j) edges of the Euclidean MST."""
    n = len(pts)
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diffs * diffs, axis=2))
    best = dist[0].copy()
    best_from = np.zeros(n, dtype=int)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        j = int(np.argmin(best))
        edges.append((float(best[j]), int(best_from[j]), j))
        in_tree[j] = True
        closer = dist[j] < best
        best_from[closer] = j
        best = np.where(closer, dist[j], best)
        best[in_tree] = np.inf
    return edges


def _mst_clusters(pts: np.ndarray, cluster_radius: float, jump: float = 4.0):
    """Single-linkage clustering with a scale-jump cut.

    Edges of the minimum spanning tree are sorted; the tree is cut at the
    first edge that exceeds cluster_radius AND jumps by more than
    ``jump``x over the previous scale (seeded at cluster_radius), and at
    every longer edge.  A continuum component sampled at finite density
    has a smoothly varying edge spectrum and survives intact; genuinely
    separate components are bridged by an edge an order of magnitude
    longer and get cut."""
    n = len(pts)
    if n == 1:
        return [[0]], None
    edges = _minimum_spanning_edges(pts)
    lengths = sorted(e[0] for e in edges)
    cut_at = None
    prev = cluster_radius
    for ln in lengths:
        if ln > cluster_radius and ln > jump * prev:
            cut_at = ln
            break
        prev = max(prev, ln)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ln, i, j in edges:
        if cut_at is not None and ln >= cut_at:
            continue
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)], cut_at


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def find_critical_points(
    space: HamiltonianSpace,
    r_max: float,
    n_seeds: int | None = None,
    seed: int = 0,
    cluster_radius: float = DEFAULT_CLUSTER_RADIUS,
    max_representatives: int = 16,
) -> list[CriticalComponent]:
    """Locate the critical components of |mu|^2 inside M_{r_max}.

    Quasi-random starts descend f = ||V mu*||^2 (gradient steps with
    backtracking, then damped Gauss-Newton on V mu* = 0); points with
    f < 1e-16 are clustered by critical value and chart-distance chains
    into components, sorted by critical value.

    Raises NotRegularError when a located component sits within 1e-3 of
    r_max (r_max must be regular).  Returns [] with a warning when no
    seed converges."""
    if r_max <= 0:
        raise InputError("r_max must be positive")
    if n_seeds is None:
        n_seeds = 256 * space.ambient_dim
    if n_seeds < 1:
        raise InputError("n_seeds must be at least 1")

    starts = _sobol_seeds(space, r_max, n_seeds, seed)
    if len(starts) == 0:
        warnings.warn(
            f"no seeds landed in M_r(r_max={r_max:g}) of {space.name}; "
            "is the sample box compatible with r_max?"
        )
        return []

    f_eval, j_eval = _vfield_and_jacobian(space)
    pts, f = _descend(f_eval, j_eval, starts)
    conv = f < CONVERGED_F
    if not np.any(conv):
        warnings.warn(
            f"no seed converged to a zero of V mu* on {space.name} "
            f"(best residual^2 {np.min(f):.3g})"
        )
        return []
    pts, f = pts[conv], f[conv]

    cache: dict = {}
    mu2 = np.broadcast_to(
        np.asarray(space.mu_norm2_expr().eval(pts, cache), float), (len(pts),)
    )
    inside = mu2 <= r_max + 1e-9
    pts, f, mu2 = pts[inside], f[inside], mu2[inside]
    if len(pts) == 0:
        warnings.warn(f"all converged points left M_r(r_max={r_max:g})")
        return []

    # group by critical value, then chain by chart distance
    order = np.lexsort((pts[:, 0] if pts.shape[1] else mu2, mu2))
    pts, f, mu2 = pts[order], f[order], mu2[order]
    breaks = np.nonzero(np.diff(mu2) > VALUE_GROUP_TOL)[0] + 1
    components = []
    for chunk in np.split(np.arange(len(pts)), breaks):
        sub, subf, mult = _dedupe(pts[chunk], f[chunk])
        cache = {}
        subv = np.broadcast_to(
            np.asarray(space.mu_norm2_expr().eval(sub, cache), float),
            (len(sub),),
        )
        clusters, cut_at = _mst_clusters(sub, cluster_radius)
        for idx in clusters:
            idx = np.array(idx)
            cpts, cf, cv = sub[idx], subf[idx], subv[idx]
            # deterministic representatives: best residual first, then a
            # lexicographic, evenly thinned spread of the cluster
            best = int(np.argmin(cf))
            lex = np.lexsort(tuple(cpts[:, k] for k in range(cpts.shape[1])))
            lex = lex[lex != best]
            take = [best]
            if len(lex):
                thin = np.unique(
                    np.linspace(
                        0, len(lex) - 1,
                        min(max_representatives - 1, len(lex)),
                    ).astype(int)
                )
                take += lex[thin].tolist()
            beta = space.eval_moment(cpts[best].reshape(1, -1))[0]
            value = float(np.median(cv))
            if value < 1e-9:  # zero value located to solver precision
                value = 0.0
            resid = float(np.sqrt(np.max(cf)))
            spread = float(np.max(cv) - np.min(cv))
            components.append(
                CriticalComponent(
                    representative_points=cpts[take],
                    critical_value=max(value, 0.0),
                    moment_norm=math.sqrt(max(value, 0.0)),
                    beta_star=beta,
                    tolerance=max(resid, spread / 10.0, 1e-14),
                    n_converged=int(np.sum(mult[idx])),
                    meta={"space": space.name, "seed": seed,
                          "mst_cut": cut_at},
                )
            )

    components.sort(key=lambda c: c.critical_value)
    for c in components:
        if abs(c.critical_value - r_max) < 1e-3:
            raise NotRegularError(
                f"critical value {c.critical_value:.6g} lies within 1e-3 of "
                f"r_max = {r_max:g}; choose a regular r_max"
            )
    return components


def critical_values(components, min_gap: float = MIN_VALUE_GAP):
    """Deduplicated ascending critical values with suggested regular
    probes.

    Returns (values, probes) where probes[i] = (below_i, above_i)
    straddles values[i] at 0.4 of the neighboring gaps (below_0 is None
    when the smallest value is 0; the last upper probe extends to 1.6x
    the top value).  Raises NonConvergenceError when two clusters sit
    closer than min_gap but are not identical within 1e-6."""
    vals = sorted(c.critical_value for c in components)
    dedup: list[float] = []
    for v in vals:
        if not dedup or v - dedup[-1] > VALUE_GROUP_TOL:
            dedup.append(v)
        # identical within grouping tolerance: merged silently
    for lo, hi in zip(dedup, dedup[1:]):
        if hi - lo < min_gap:
            raise NonConvergenceError(
                f"critical values {lo:.8g} and {hi:.8g} are closer than "
                f"{min_gap:g}; refine the clustering tolerance",
                report={"values": dedup},
            )
    probes = []
    for i, v in enumerate(dedup):
        gap_below = v - dedup[i - 1] if i > 0 else v
        below = v - 0.4 * gap_below if gap_below > 0 else None
        if i + 1 < len(dedup):
            above = v + 0.4 * (dedup[i + 1] - v)
        else:
            above = 1.6 * v if v > 0 else 0.1
        probes.append((below, above))
    return dedup, probes


# ---------------------------------------------------------------------------
# local model
# ---------------------------------------------------------------------------


def _orthonormal_null(mat: np.ndarray, dim: int, cutoff: float = 1e-8):
    """Orthonormal basis of the null space of mat (rows act on R^dim),
    with singular values below the absolute cutoff treated as zero."""
    if mat.size == 0 or not np.any(mat):
        return np.eye(dim)
    _, s, vt = np.linalg.svd(mat)
    rank = int(np.sum(s > max(cutoff, 1e-12 * s[0])))
    return vt[rank:].T  # (dim, null_dim)


def _position_uncertainty(space, pts: np.ndarray, f_eval, j_eval) -> float:
    """First-order distance from the points to the true zero set of
    V mu*: the norm of the pseudo-inverse Newton step.  Degenerate
    critical points (cubic vanishing of the field) make this much larger
    than the residual itself."""
    F = f_eval(pts)
    J = j_eval(pts)
    worst = 0.0
    for k in range(len(pts)):
        step = np.linalg.lstsq(J[k], -F[k], rcond=1e-6)[0]
        worst = max(worst, float(np.linalg.norm(step)))
    return worst


def local_model_check(
    space: HamiltonianSpace,
    component: CriticalComponent,
    n_samples: int = 64,
    seed: int = 0,
    tol: float = 1e-6,
    local_radius: float = 0.2,
) -> dict:
    """Verify the local description of a critical component around its
    base representative.

    Checks, at the base point p with beta = mu*(p) and stabilizer
    algebra h = {phi : V_phi(p) = 0}:

    * beta lies in h (V_beta(p) = 0);
    * representatives within local_radius of p project into
      Z = {x in slice : beta x = 0, Q_x = 0};
    * every sampled other solution of (beta + Q_x) x = 0 on the slice
      keeps |Q_x| >= min_alpha beta_alpha, the smallest positive singular
      value of the beta-action (skipped when beta acts trivially).
    """
    reps = np.asarray(component.representative_points, dtype=float)
    if reps.size == 0:
        raise InputError("component has no representative points")
    d = space.ambient_dim
    g = space.algebra.dim
    q = space.algebra.inner_product

    # Representatives carry a position uncertainty: at a degenerate
    # critical point the field vanishes to higher order, so a residual
    # ||V|| < 1e-8 may leave the point ~1e-3 from the true set.  Rank
    # decisions below must not mistake that offset for genuine structure.
    f_eval, j_eval = _vfield_and_jacobian(space)
    f_reps = np.sum(f_eval(reps) ** 2, axis=1)
    p0 = reps[int(np.argmin(f_reps))]
    pos_unc = _position_uncertainty(space, reps, f_eval, j_eval)
    rank_cut = max(1e-8, 50.0 * pos_unc)

    S = _action_matrix(space, p0)                      # (d, g)
    h_basis = _orthonormal_null(S, g, rank_cut)        # (g, h_dim)
    h_dim = h_basis.shape[1]
    beta = np.asarray(component.beta_star, dtype=float)
    beta_in_h = float(np.linalg.norm(S @ beta))

    # symplectic slice: kernel of d mu, orthogonal to the orbit directions
    dM = _moment_gradients(space, p0)                  # (g, d)
    stack = np.vstack([dM, S.T])                       # null of both
    X = _orthonormal_null(stack, d, rank_cut)          # (d, slice_dim)
    slice_dim = X.shape[1]

    A = _action_jacobians(space, p0)                   # (g, d, d)
    A_h = np.einsum("ga,gjk->ajk", h_basis, A)         # (h_dim, d, d)
    omega_p = space.omega_matrix.eval(p0.reshape(1, -1))[0] \
        if hasattr(space.omega_matrix, "eval") else np.asarray(space.omega_matrix.mat)

    # does the h-action preserve the slice?
    proj = X @ X.T
    inv_resid = 0.0
    for k in range(h_dim):
        leak = (np.eye(d) - proj) @ A_h[k] @ X
        inv_resid = max(inv_resid, float(np.linalg.norm(leak)))

    b_action = np.einsum("a,ajk->jk", beta, A)         # beta on the ambient
    B = X.T @ b_action @ X                             # beta on the slice
    gram_h = h_basis.T @ q @ h_basis                   # inner product on h

    def q_components(x_slice):
        """q_b(x) = (1/2) omega(x, A_{h_b} x) in ambient coordinates."""
        xa = X @ x_slice
        return np.array(
            [0.5 * xa @ omega_p @ (A_h[b] @ xa) for b in range(h_dim)]
        )

    def q_norm(x_slice):
        if h_dim == 0:
            return 0.0
        qc = q_components(x_slice)
        return float(np.sqrt(max(qc @ np.linalg.solve(gram_h, qc), 0.0)))

    # membership of nearby representatives in Z, with tolerances scaled
    # by the position uncertainty (beta x is linear in the offset, Q_x
    # quadratic)
    n_checked = 0
    max_beta_x = 0.0
    max_qx = 0.0
    x_max = 0.0
    for rep in reps:
        delta = rep - p0
        if np.linalg.norm(delta) > local_radius:
            continue
        x = X.T @ delta
        n_checked += 1
        x_max = max(x_max, float(np.linalg.norm(x)))
        max_beta_x = max(max_beta_x, float(np.linalg.norm(B @ x)))
        max_qx = max(max_qx, q_norm(x))
    b_scale = float(np.linalg.norm(B)) if slice_dim else 0.0
    beta_x_tol = max(tol, 10.0 * b_scale * pos_unc)
    qx_tol = max(tol, 10.0 * pos_unc * (pos_unc + x_max))

    # dimension probe of Z = {beta x = 0, Q_x = 0}: on the unit sphere of
    # ker(beta action), the smallest |Q_x| is 0 exactly when Z extends
    # beyond the origin
    z_min_q = None
    if slice_dim:
        kerB = _orthonormal_null(B, slice_dim, rank_cut)
        if kerB.shape[1] and h_dim:
            rng_probe = np.random.default_rng(seed + 7)
            probe = rng_probe.standard_normal((64, kerB.shape[1]))
            probe /= np.linalg.norm(probe, axis=1, keepdims=True)
            z_min_q = min(q_norm(kerB @ v) for v in probe)
        elif kerB.shape[1]:
            z_min_q = 0.0  # no stabilizer: Q vanishes identically on X

    # separation of all other solutions of (beta + Q_x) x = 0; only
    # meaningful when beta acts on the slice above the noise floor
    beta_norm_val = float(np.sqrt(beta @ q @ beta))
    sv = np.linalg.svd(B, compute_uv=False) if slice_dim else np.array([])
    positive = sv[sv > max(1e-10, rank_cut)]
    separation = None
    if len(positive) and h_dim and beta_norm_val > max(1e-8, 10.0 * pos_unc):
        min_weight = float(np.min(positive))
        A_h_slice = np.array([X.T @ A_h[b] @ X for b in range(h_dim)])

        def residual(x):
            qc = q_components(x)
            coeff = np.linalg.solve(gram_h, qc)
            act = B + np.einsum("b,bjk->jk", coeff, A_h_slice)
            return act @ x

        rng = np.random.default_rng(seed)
        scale = float(np.max(np.abs(space.sample_box)))
        found = []
        for _ in range(n_samples):
            x = rng.standard_normal(slice_dim)
            x *= scale * rng.random() / max(np.linalg.norm(x), 1e-12)
            for _ in range(60):
                F = residual(x)
                if np.linalg.norm(F) < 1e-12:
                    break
                J = np.empty((slice_dim, slice_dim))
                h = 1e-7 * max(1.0, np.linalg.norm(x))
                for i in range(slice_dim):
                    e = np.zeros(slice_dim)
                    e[i] = h
                    J[:, i] = (residual(x + e) - residual(x - e)) / (2 * h)
                try:
                    dx = np.linalg.lstsq(
                        J + 1e-9 * np.eye(slice_dim), -F, rcond=None
                    )[0]
                except np.linalg.LinAlgError:
                    break
                if np.linalg.norm(dx) > scale:
                    dx *= scale / np.linalg.norm(dx)
                x = x + dx
            if np.linalg.norm(residual(x)) < 1e-10:
                found.append(x)
        others = [
            x for x in found
            if np.linalg.norm(B @ x) > 1e-6 * max(np.linalg.norm(x), 1e-12)
            and np.linalg.norm(x) > 1e-8
        ]
        qx_vals = [q_norm(x) for x in others]
        separation = {
            "min_weight": min_weight,
            "n_solutions": len(found),
            "n_other": len(others),
            "min_qx_on_other": min(qx_vals) if qx_vals else None,
            "ok": all(v >= min_weight - 1e-7 for v in qx_vals),
        }

    ok = (
        beta_in_h < max(tol, 10.0 * pos_unc)
        and inv_resid < tol
        and max_beta_x < beta_x_tol
        and max_qx < qx_tol
        and (separation is None or separation["ok"])
    )
    return {
        "h_dim": h_dim,
        "slice_dim": slice_dim,
        "beta_norm": beta_norm_val,
        "beta_in_h_residual": beta_in_h,
        "slice_invariance_residual": inv_resid,
        "position_uncertainty": pos_unc,
        "z_membership": {
            "n_checked": n_checked,
            "max_beta_x_residual": max_beta_x,
            "max_qx_norm": max_qx,
            "beta_x_tol": beta_x_tol,
            "qx_tol": qx_tol,
        },
        "z_min_q_on_kernel_sphere": z_min_q,
        "separation": separation,
        "ok": bool(ok),
    }
