"""Low-level numerical kernels.

Symmetric eigendecomposition with contract checks, a secular-equation solver
for diagonal-plus-rank-one matrices, adaptive quadrature on the half-line,
and a power-iteration operator norm.  Everything downstream (fractional
powers, Bogoliubov blocks, renormalization flows) is built on these four
kernels, so they are validated aggressively and fail loudly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

SYM_RTOL = 1e-13        # symmetry defect tolerance, relative to max |entry|
ORTHO_TOL = 1e-10       # ||Q^T Q - I||_max tolerance for eigenvector frames
RECON_RTOL = 1e-9       # ||M Q - Q diag||_max tolerance, relative to spectral scale
DEFLATION_REL = 1e-12   # relative gap below which dpr1_eig defers to the dense solver

_EPS = np.finfo(float).eps


class NumericsError(Exception):
    """A numerical kernel violated its contract."""


class QuadratureError(NumericsError):
    """Adaptive quadrature ran out of subdivisions.

    Carries the best estimate and the residual error bound so callers can
    decide whether the partial answer is still usable.
    """

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


def require_symmetric(mat, rtol=SYM_RTOL):
    """Validate that mat is square and symmetric to within rtol * max|entry|."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NumericsError(f"expected a square matrix, got shape {mat.shape}")
    scale = float(np.abs(mat).max()) if mat.size else 0.0
    defect = float(np.abs(mat - mat.T).max()) if mat.size else 0.0
    if defect > rtol * max(scale, 1e-300):
        raise NumericsError(
            f"symmetry defect {defect:.3e} exceeds {rtol:.1e} * scale {scale:.3e}")
    return mat


@dataclass(frozen=True)
class EigenDecomposition:
    """Orthonormal eigendecomposition M = Q diag(values) Q^T, values ascending."""

    values: np.ndarray
    vectors: np.ndarray

    def apply(self, fun):
        """Assemble fun(M) = Q diag(fun(values)) Q^T for a scalar function."""
        q = self.vectors
        return (q * fun(self.values)) @ q.T


def eig_sym(mat):
    """Eigendecomposition of a symmetric matrix, with orthogonality and
    reconstruction residuals checked against their contract tolerances."""
    mat = require_symmetric(mat)
    try:
        vals, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"dense symmetric eigensolver failed: {exc}") from exc
    m = mat.shape[0]
    ortho = float(np.abs(vecs.T @ vecs - np.eye(m)).max())
    if ortho > ORTHO_TOL:
        raise NumericsError(f"eigenvector frame loses orthogonality: {ortho:.3e}")
    scale = max(float(np.abs(vals).max()), 1e-300)
    recon = float(np.abs(mat @ vecs - vecs * vals).max())
    if recon > RECON_RTOL * scale:
        raise NumericsError(
            f"eigen reconstruction residual {recon:.3e} exceeds {RECON_RTOL:.1e} * {scale:.3e}")
    return EigenDecomposition(values=vals, vectors=vecs)


# ---------------------------------------------------------------------------
# diagonal plus rank one
# ---------------------------------------------------------------------------

def _secular_roots(d, z2, rho):
    """Roots of 1 + rho * sum(z2 / (d - mu)) = 0 for rho > 0, d strictly
    ascending, z2 > 0.  Returns (base indices, tau offsets): mu_i = d[base] + tau.

    The secular function is strictly increasing between consecutive poles, so
    each interval (d_i, d_{i+1}) plus the half-line above d_{r-1} holds exactly
    one root.  Roots are located in shifted coordinates relative to the nearer
    pole to avoid cancellation when they hug an endpoint.
    """
    r = d.size
    znorm2 = float(z2.sum())
    bases = np.empty(r, dtype=int)
    taus = np.empty(r)

    def g_at(mu):
        return 1.0 + rho * float(np.sum(z2 / (d - mu)))

    for i in range(r):
        if i < r - 1:
            left, right = d[i], d[i + 1]
            gap = right - left
            mid = 0.5 * (left + right)
            use_left = g_at(mid) >= 0.0
        else:
            left = d[r - 1]
            gap = rho * znorm2
            # expand until g > 0; g -> 1 as mu -> inf so this terminates
            hi = gap
            while g_at(left + hi) < 0.0:
                hi *= 2.0
            gap = hi
            use_left = True

        if use_left:
            base, lo_sign = i, 1.0
        else:
            base, lo_sign = i + 1, -1.0

        def g_tau(tau, base=base):
            return 1.0 + rho * float(np.sum(z2 / ((d - d[base]) - tau)))

        # bracket: from the shifted pole the secular function starts at the
        # pole's own sign; walk geometrically until the bracket closes
        if use_left:
            hi_t = gap if i == r - 1 else mid - left
            lo_t = hi_t
            for _ in range(2000):
                lo_t *= 0.5
                if lo_t == 0.0:
                    raise NumericsError("secular bracket underflow at left pole")
                if g_tau(lo_t) < 0.0:
                    break
            else:
                raise NumericsError("secular bracket failed at left pole")
            while g_tau(hi_t) < 0.0:
                # only possible for the last interval before expansion margin
                hi_t = min(hi_t * 1.5, gap * (1 - 1e-16))
                if hi_t >= gap * (1 - 1e-16):
                    break
            a_t, b_t = lo_t, max(hi_t, lo_t * (1 + 1e-15))
        else:
            lo_t = -(right - mid)
            hi_t = lo_t
            for _ in range(2000):
                hi_t *= 0.5
                if hi_t == 0.0:
                    raise NumericsError("secular bracket underflow at right pole")
                if g_tau(hi_t) > 0.0:
                    break
            else:
                raise NumericsError("secular bracket failed at right pole")
            a_t, b_t = lo_t, hi_t

        ga, gb = g_tau(a_t), g_tau(b_t)
        if ga == 0.0:
            tau = a_t
        elif gb == 0.0:
            tau = b_t
        elif ga * gb > 0.0:
            raise NumericsError("secular root not bracketed")
        else:
            tau = brentq(g_tau, a_t, b_t, xtol=1e-300, rtol=4 * _EPS, maxiter=200)
        bases[i] = base
        taus[i] = tau
    return bases, taus


def _dpr1_ascending(d, z, rho, allow_fallback):
    """Core solver for rho > 0 with d ascending.  Returns (values, vectors)."""
    m = d.size
    vals = np.empty(m)
    vecs = np.zeros((m, m))

    znorm = float(np.linalg.norm(z))
    span = float(d[-1] - d[0]) if m > 1 else max(abs(float(d[0])), 1.0)
    if znorm == 0.0 or rho == 0.0:
        return d.copy(), np.eye(m)

    # deflate components with negligible coupling (cutoff vectors carry
    # exact zeros, so this branch is routine, not exceptional)
    active = np.abs(z) > 1e-15 * znorm
    idx_active = np.nonzero(active)[0]
    idx_frozen = np.nonzero(~active)[0]

    ds = d[idx_active]
    zs = z[idx_active]
    if ds.size > 1 and np.min(np.diff(ds)) < DEFLATION_REL * max(span, 1e-300):
        if not allow_fallback:
            raise NumericsError("near-degenerate diagonal cluster; secular path refused")
        full = np.diag(d) + rho * np.outer(z, z)
        dec = eig_sym(full)
        return dec.values, dec.vectors

    z2 = zs ** 2
    bases, taus = _secular_roots(ds, z2, rho)
    mu = ds[bases] + taus

    # Gu-Eisenstat: recompute coupling magnitudes from the computed roots so
    # the eigenvectors come out numerically orthogonal even for close roots.
    # diff_mu_d[j, k] = mu_j - d_k assembled as (d_base(j) - d_k) + tau_j,
    # which stays accurate when the root hugs its base pole.
    r = ds.size
    diff_mu_d = np.empty((r, r))
    for j in range(r):
        diff_mu_d[j, :] = (ds[bases[j]] - ds) + taus[j]

    ztilde2 = np.empty(r)
    for k in range(r):
        num = diff_mu_d[:, k]
        den = ds - ds[k]
        ratio = 1.0
        for j in range(r):
            if j == k:
                continue
            ratio *= num[j] / den[j]
        ztilde2[k] = max(num[k] * ratio / rho, 0.0)
    ztilde = np.sqrt(ztilde2) * np.sign(zs)

    sub_vecs = np.empty((r, r))
    for j in range(r):
        col = ztilde / diff_mu_d[j, :] * -1.0        # (d_k - mu_j)^{-1} ztilde_k
        nrm = np.linalg.norm(col)
        if nrm == 0.0 or not np.isfinite(nrm):
            if not allow_fallback:
                raise NumericsError("degenerate secular eigenvector")
            full = np.diag(d) + rho * np.outer(z, z)
            dec = eig_sym(full)
            return dec.values, dec.vectors
        sub_vecs[:, j] = col / nrm

    # reassemble deflated coordinates
    all_vals = np.concatenate([mu, d[idx_frozen]])
    order = np.argsort(all_vals, kind="stable")
    vals[:] = all_vals[order]
    full_vecs = np.zeros((m, r + idx_frozen.size))
    full_vecs[idx_active, :r] = sub_vecs
    for j, idx in enumerate(idx_frozen):
        full_vecs[idx, r + j] = 1.0
    vecs[:, :] = full_vecs[:, order]
    return vals, vecs


def dpr1_eig(d, z, rho, allow_fallback=True):
    """Eigendecomposition of diag(d) + rho * z z^T via the secular equation.

    d must be ascending.  Eigenvalues interlace the diagonal (from above for
    rho > 0, from below for rho < 0).  Near-degenerate diagonal clusters
    (gap below DEFLATION_REL * span) are handed to the dense solver; pass
    allow_fallback=False to get an error instead (used by tests that must
    exercise the secular path).
    """
    d = np.asarray(d, dtype=float)
    z = np.asarray(z, dtype=float)
    if d.ndim != 1 or z.shape != d.shape:
        raise NumericsError("dpr1_eig expects matching 1-d arrays")
    if d.size > 1 and np.any(np.diff(d) < 0):
        raise NumericsError("dpr1_eig requires an ascending diagonal")
    rho = float(rho)
    if rho >= 0.0:
        vals, vecs = _dpr1_ascending(d, z, rho, allow_fallback)
    else:
        # diag(d) + rho zz^T = -(diag(-d) + (-rho) zz^T); reverse to keep
        # the reflected diagonal ascending
        vals_r, vecs_r = _dpr1_ascending(-d[::-1], z[::-1], -rho, allow_fallback)
        vals = -vals_r[::-1]
        vecs = vecs_r[::-1, ::-1]
    return EigenDecomposition(values=np.ascontiguousarray(vals),
                              vectors=np.ascontiguousarray(vecs))


# ---------------------------------------------------------------------------
# adaptive quadrature
# ---------------------------------------------------------------------------

_GL_HI = np.polynomial.legendre.leggauss(15)
_GL_LO = np.polynomial.legendre.leggauss(7)


@dataclass(frozen=True)
class QuadratureSpec:
    """Adaptive quadrature contract.

    rtol/abs_floor bound the accepted error estimate; max_subdivisions caps
    panel splitting; change_of_variable selects how the half-line is mapped:
    "rational" uses t = (1 - v)/v on v in (0, 1) (the decaying tail lands at
    v -> 0 where bisection can grade geometrically without losing floating
    point resolution), "none" integrates t directly on (0, upper).
    """

    rtol: float = 1e-9
    abs_floor: float = 1e-14
    max_subdivisions: int = 2 ** 16
    change_of_variable: str = "rational"
    upper: float | None = None


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class QuadratureResult:
    value: object           # float or ndarray
    error_bound: float
    n_panels: int

    def __float__(self):
        return float(self.value)


def _eval_panel(fun, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    hi_vals = fun(mid + half * _GL_HI[0])
    lo_vals = fun(mid + half * _GL_LO[0])
    hi = half * np.tensordot(_GL_HI[1], np.asarray(hi_vals), axes=(0, 0))
    lo = half * np.tensordot(_GL_LO[1], np.asarray(lo_vals), axes=(0, 0))
    err = float(np.max(np.abs(hi - lo)))
    return hi, err


def _adaptive(fun, a, b, spec):
    """Globally adaptive bisection with an embedded 7/15-point Gauss pair.

    fun receives an ndarray of nodes and returns an array whose first axis
    indexes nodes (scalars per node or matrices per node both work).  The
    final value is re-summed in panel order so results are deterministic.
    """
    n_init = 8
    edges = np.linspace(a, b, n_init + 1)
    heap = []
    frozen = []
    seq = 0
    total = None
    err_tot = 0.0
    for i in range(n_init):
        val, err = _eval_panel(fun, edges[i], edges[i + 1])
        total = val if total is None else total + val
        err_tot += err
        heapq.heappush(heap, (-err, seq, edges[i], edges[i + 1], val, err))
        seq += 1
    n_panels = n_init

    while True:
        scale = float(np.max(np.abs(total)))
        tol = max(spec.rtol * scale, spec.abs_floor)
        if err_tot <= tol or not heap:
            break
        if n_panels >= spec.max_subdivisions:
            raise QuadratureError(
                f"subdivision limit {spec.max_subdivisions} exceeded "
                f"(error bound {err_tot:.3e}, tolerance {tol:.3e})",
                estimate=total, error_bound=err_tot)
        neg_err, _, pa, pb, pval, perr = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        if pm <= pa or pm >= pb:
            # panel narrower than float resolution; its error is irreducible
            frozen.append((pa, pb, pval, perr))
            continue
        lval, lerr = _eval_panel(fun, pa, pm)
        rval, rerr = _eval_panel(fun, pm, pb)
        total = total - pval + lval + rval
        err_tot = err_tot - perr + lerr + rerr
        heapq.heappush(heap, (-lerr, seq, pa, pm, lval, lerr))
        seq += 1
        heapq.heappush(heap, (-rerr, seq, pm, pb, rval, rerr))
        seq += 1
        n_panels += 1

    panels = [(pa, pb, pval, perr) for (_, _, pa, pb, pval, perr) in heap] + frozen
    panels.sort(key=lambda p: p[0])
    value = panels[0][2]
    err_bound = panels[0][3]
    for pa, pb, pval, perr in panels[1:]:
        value = value + pval
        err_bound += perr
    return QuadratureResult(value=value, error_bound=err_bound, n_panels=n_panels)


def integrate_interval(fun, a, b, spec=DEFAULT_QUAD):
    """Adaptive integral of fun over the finite interval (a, b), no mapping."""
    if not (np.isfinite(a) and np.isfinite(b) and b > a):
        raise NumericsError(f"bad interval ({a}, {b})")
    return _adaptive(fun, float(a), float(b), spec)


def integrate_halfline(fun, spec=DEFAULT_QUAD):
    """Adaptive integral of fun over (0, infinity).

    With the rational map t = (1 - v)/v the tail t -> infinity sits at v -> 0,
    so slowly decaying integrands (down to t^{-4/3 - eps}) are resolved by
    geometric bisection toward zero instead of relying on a truncation guess.
    With change_of_variable = "none" the integral runs over (0, spec.upper).
    """
    if spec.change_of_variable == "rational":
        def transformed(vs):
            ts = (1.0 - vs) / vs
            vals = np.asarray(fun(ts))
            jac = vs ** -2.0
            return vals * jac.reshape((-1,) + (1,) * (vals.ndim - 1))
        return _adaptive(transformed, 0.0, 1.0, spec)
    if spec.change_of_variable == "none":
        if spec.upper is None or not np.isfinite(spec.upper) or spec.upper <= 0:
            raise NumericsError("change_of_variable='none' needs a finite positive upper")
        return _adaptive(fun, 0.0, float(spec.upper), spec)
    raise NumericsError(f"unknown change_of_variable {spec.change_of_variable!r}")


def graded_rule(a, b, levels=100, order=15):
    """Fixed composite Gauss rule on (a, b), panels graded geometrically
    toward a.  Used for inner integrals with an integrable endpoint
    singularity where an adaptive loop per evaluation would be wasteful.
    Returns (nodes, weights)."""
    if not (b > a >= 0):
        raise NumericsError("graded_rule needs b > a >= 0")
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = [b]
    width = b - a
    for k in range(1, levels):
        edges.append(a + width * 2.0 ** (-k))
    edges.append(a)
    edges = np.array(edges[::-1])
    nodes = []
    weights = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(0.5 * (hi + lo) + half * x0)
        weights.append(half * w0)
    return np.concatenate(nodes), np.concatenate(weights)


# ---------------------------------------------------------------------------
# operator norm
# ---------------------------------------------------------------------------

def opnorm(mat, tol=1e-10, max_iter=20000):
    """Largest singular value by power iteration on M*M.

    Deterministic start vector; converges on relative change of the singular
    value estimate.  Works for real or complex rectangular matrices.
    """
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    m = mat.shape[1]
    v = np.ones(m) + 0.5 * np.sin(np.arange(m, dtype=float))
    v /= np.linalg.norm(v)
    mh = mat.conj().T
    sigma = 0.0
    for _ in range(max_iter):
        w = mat @ v
        s_new = float(np.linalg.norm(w))
        if s_new == 0.0:
            return 0.0
        u = mh @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return s_new
        v = u / nu
        if abs(s_new - sigma) <= tol * max(s_new, 1e-300):
            return s_new
        sigma = s_new
    return sigma
