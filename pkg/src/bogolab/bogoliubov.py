"""Bogoliubov blocks for the quadratic Hamiltonian.

With h = omega + 2 lambda |f><f| and k = 2 lambda |f><f|, the block operator
A = [[h, k], [k, h]] is diagonalized by W = [[U, V], [V, U]]:

    W^T A W = diag(xi, xi),      xi = (omega^{1/2} (omega + 4 lambda |f><f|)
                                       omega^{1/2})^{1/2}
    U = (omega^{1/2} xi^{-1/2} + omega^{-1/2} xi^{1/2}) / 2
    V = (omega^{1/2} xi^{-1/2} - omega^{-1/2} xi^{1/2}) / 2

W is symplectic (W S W^T = S with S = diag(I, -I)); tr(V V^T) finite is the
Shale condition for unitary implementability, and the scalar
E = tr(xi - h)/2 is the ground state energy of the diagonalized Hamiltonian.

All operators live in the Euclidean frame (weights folded into f), and the
form factor must be gauge reduced (real, nonnegative) before entering here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DiscretizedModel
from .numerics import (DEFAULT_QUAD, EigenDecomposition, NumericsError,
                       dpr1_eig, eig_sym, integrate_halfline,
                       integrate_interval, opnorm)
from .rankone import (RankOneError, RankOneOp, power_neg_quarter,
                      power_quarter, resolvent_rank_one)

XI_MODES = ("direct", "regular-resolvent", "renormalized-resolvent")


class BogoliubovError(NumericsError):
    pass


class PositivityError(BogoliubovError):
    pass


def require_gauge_reduced(model):
    if np.iscomplexobj(model.f) or np.any(np.asarray(model.f) < 0):
        raise BogoliubovError(
            "form factor must be gauge reduced (real, nonnegative); "
            "run model.gauge_reduce first")


def xi_operator(model):
    """The rank-one operator xi^2 = omega^2 + 4 lambda |omega^{1/2} f><omega^{1/2} f|
    in the Euclidean frame."""
    require_gauge_reduced(model)
    omega = model.omega
    psi = np.sqrt(omega) * model.f_weighted
    try:
        return RankOneOp(diag=omega ** 2, psi=psi, alpha=4.0 * model.lam)
    except RankOneError as exc:
        raise PositivityError(
            f"xi^2 not positive definite at bare coupling {model.lam}: {exc}"
        ) from exc


def _renormalized_resolvent_matrix(model, z):
    """Renormalized resolvent at spectral parameter z for xi^2:

        R~_z = (omega^2 - z)^{-1}
               - 4 lambda / (1 + 4 lambda z <f| omega^{-1} (omega^2 - z)^{-1} f>)
                 * |omega^{1/2} (omega^2 - z)^{-1} f><same|

    Only the denominator differs from the regular formula: the cutoff-divergent
    <f| omega^{-1} f> has been subtracted, which is what flowing the coupling
    accomplishes.  Positive for z < 0 whenever lambda <= 0.
    """
    omega, lam = model.omega, model.lam
    fw = model.f_weighted.real
    shifted = omega ** 2 - z
    base = 1.0 / shifted
    denom = 1.0 + 4.0 * lam * z * np.sum(fw ** 2 / (omega * shifted))
    if abs(denom) < 1e-13:
        raise PositivityError(f"renormalized denominator vanishes at z = {z}")
    if np.isrealobj(np.asarray(z)) and np.real(z) < 0 and np.real(denom) <= 0:
        raise PositivityError(
            f"renormalized denominator nonpositive at z = {z} (lambda too large)")
    v = np.sqrt(omega) * base * fw
    return np.diag(base) - (4.0 * lam / denom) * np.outer(v, v)


def _xi_squared_eig(model, mode):
    """Eigendecomposition of xi^2 per construction mode."""
    require_gauge_reduced(model)
    if mode == "direct":
        op = xi_operator(model)
        order = np.argsort(op.diag, kind="stable")
        dec = dpr1_eig(op.diag[order], op.psi[order], op.alpha)
        vecs = np.empty_like(dec.vectors)
        vecs[order, :] = dec.vectors
        values = dec.values
    elif mode == "regular-resolvent":
        op = xi_operator(model)
        z0 = -1.0
        res = resolvent_rank_one(op, z0)
        mat = np.linalg.inv(res) + z0 * np.eye(model.dim)
        dec = eig_sym(0.5 * (mat + mat.T))
        values, vecs = dec.values, dec.vectors
    elif mode == "renormalized-resolvent":
        z0 = -1.0
        res = _renormalized_resolvent_matrix(model, z0)
        mat = np.linalg.inv(res) + z0 * np.eye(model.dim)
        dec = eig_sym(0.5 * (mat + mat.T))
        values, vecs = dec.values, dec.vectors
    else:
        raise BogoliubovError(f"unknown xi mode {mode!r}; expected one of {XI_MODES}")
    if values[0] <= 0.0:
        raise PositivityError(
            f"xi^2 not positive definite in mode {mode!r} "
            f"(lowest eigenvalue {values[0]:.3e})")
    return EigenDecomposition(values=values, vectors=vecs)


def build_xi(model, mode="direct"):
    """The quasi-particle dispersion xi as a dense symmetric matrix."""
    dec = _xi_squared_eig(model, mode)
    q = dec.vectors
    return (q * np.sqrt(dec.values)) @ q.T


@dataclass(frozen=True)
class BogoliubovBlocks:
    xi: np.ndarray
    U: np.ndarray
    V: np.ndarray
    h: np.ndarray
    mode: str
    xi_vals: np.ndarray       # eigenvalues of xi, ascending
    xi_vecs: np.ndarray


def build_blocks(model, mode="direct", method="eig", quad=DEFAULT_QUAD):
    """Assemble (xi, U, V, h).

    method="eig" builds xi^{+-1/2} from the spectral data of xi^2;
    method="quadrature" instead assembles omega^{1/2} xi^{-1/2} and
    omega^{-1/2} xi^{1/2} from the quarter-power resolvent integrals, which
    cross-checks the integral formulas on the operators actually used.
    """
    require_gauge_reduced(model)
    omega = model.omega
    sqw = np.sqrt(omega)
    dec = _xi_squared_eig(model, mode)
    q = dec.vectors
    mu = dec.values
    nu = np.sqrt(mu)
    xi = (q * nu) @ q.T
    if method == "eig":
        xi_half = (q * mu ** 0.25) @ q.T
        xi_neg_half = (q * mu ** -0.25) @ q.T
        p_block = sqw[:, None] * xi_neg_half
        q_block = (1.0 / sqw)[:, None] * xi_half
    elif method == "quadrature":
        op = xi_operator(model)
        p_block = sqw[:, None] * power_neg_quarter(op, method="quadrature", quad=quad)
        q_block = (1.0 / sqw)[:, None] * power_quarter(op, method="quadrature", quad=quad)
    else:
        raise BogoliubovError(f"unknown block method {method!r}")
    u_block = 0.5 * (p_block + q_block)
    v_block = 0.5 * (p_block - q_block)
    h = np.diag(omega) + 2.0 * model.lam * np.outer(model.f_weighted, model.f_weighted)
    return BogoliubovBlocks(xi=xi, U=u_block, V=v_block, h=h, mode=mode,
                            xi_vals=nu, xi_vecs=q)


@dataclass(frozen=True)
class BlockPair:
    acal: np.ndarray          # [[h, k], [k, h]]
    vcal: np.ndarray          # [[U, V], [V, U]]
    scal: np.ndarray          # diag(I, -I)


def block_pair(blocks, model):
    m = blocks.h.shape[0]
    k = 2.0 * model.lam * np.outer(model.f_weighted, model.f_weighted)
    acal = np.block([[blocks.h, k], [k, blocks.h]])
    vcal = np.block([[blocks.U, blocks.V], [blocks.V, blocks.U]])
    scal = np.diag(np.concatenate([np.ones(m), -np.ones(m)]))
    return BlockPair(acal=acal, vcal=vcal, scal=scal)


def diagonalization_residual(blocks, model):
    """Largest operator-norm defect of W^T A W = diag(xi, xi)."""
    pair = block_pair(blocks, model)
    m = blocks.h.shape[0]
    conj = pair.vcal.T @ pair.acal @ pair.vcal
    r11 = opnorm(conj[:m, :m] - blocks.xi)
    r22 = opnorm(conj[m:, m:] - blocks.xi)
    r12 = opnorm(conj[:m, m:])
    r21 = opnorm(conj[m:, :m])
    return max(r11, r22, r12, r21)


def symplectic_residual(blocks):
    """Largest defect among the symplectic relations for (U, V):
    U^T U - V^T V = I, U U^T - V V^T = I, U^T V symmetric, U V^T symmetric."""
    u_block, v_block = blocks.U, blocks.V
    m = u_block.shape[0]
    eye = np.eye(m)
    res = [
        opnorm(u_block.T @ u_block - v_block.T @ v_block - eye),
        opnorm(u_block @ u_block.T - v_block @ v_block.T - eye),
        opnorm(u_block.T @ v_block - v_block.T @ u_block),
        opnorm(u_block @ v_block.T - v_block @ u_block.T),
    ]
    return max(res)


@dataclass(frozen=True)
class ShaleReport:
    direct: float             # tr(V V^T) = ||V||_F^2
    via_identity: float       # from 4 V V^T = w xi^{-1} w - 1 + w^{-1} xi w^{-1} - 1
    gap: float


def shale_trace(blocks, model):
    """tr(V V^T) computed two independent ways.

    Direct: Frobenius norm of the V block.  Identity route: with w = omega^{1/2},

        4 V V^T = (w xi^{-1} w - 1) + (w^{-1} xi w^{-1} - 1),

    so 4 tr(V V^T) = sum_i [omega_i (xi^{-1})_ii + (xi)_ii / omega_i - 2],
    evaluated from the spectral data of xi without forming V.
    """
    direct = float(np.sum(blocks.V ** 2))
    q = blocks.xi_vecs
    nu = blocks.xi_vals
    xi_diag = np.einsum("ij,j,ij->i", q, nu, q)
    xi_inv_diag = np.einsum("ij,j,ij->i", q, 1.0 / nu, q)
    omega = model.omega
    via = 0.25 * float(np.sum(omega * xi_inv_diag + xi_diag / omega - 2.0))
    scale = max(direct, abs(via), 1.0)
    return ShaleReport(direct=direct, via_identity=via,
                       gap=abs(direct - via) / scale)


def ground_energy(blocks, model):
    """E = tr(xi - h) / 2, the constant shift produced by diagonalization."""
    tr_xi = float(np.sum(blocks.xi_vals))
    tr_h = float(np.sum(model.omega) + 2.0 * model.lam * np.sum(model.f_weighted ** 2))
    return 0.5 * (tr_xi - tr_h)


def pivotal_trace_identity(blocks, model):
    """Both sides of tr(xi omega^{-1} xi - omega) = tr(omega^{-1/2} xi^2 omega^{-1/2} - omega).

    The common value controls the renormalized energy; the identity holds
    because the two traces reorder the same product.
    """
    omega = model.omega
    xi = blocks.xi
    lhs = float(np.trace((xi / omega[None, :]) @ xi) - np.sum(omega))
    q = blocks.xi_vecs
    mu = blocks.xi_vals ** 2
    xi2_diag = np.einsum("ij,j,ij->i", q, mu, q)
    rhs = float(np.sum(xi2_diag / omega - omega))
    return lhs, rhs


@dataclass(frozen=True)
class FormalTraceReport:
    value: float              # full half-line integral, prefactor included
    bound: float              # a-priori bound 16 sqrt(2) lambda^2 ||omega^{-1/4} f||^4
    tau_ladder: tuple
    partials: tuple           # integral truncated at each tau, prefactor included
    slope: float              # d(partial)/d(ln tau) across the ladder, relative
    divergent: bool


def formal_trace(model, tau_ladder=(1e2, 1e3, 1e4), slope_tol=0.05,
                 quad=DEFAULT_QUAD):
    """Resolvent-integral form of tr(xi - h) and its cutoff diagnostics.

        tr(xi - h) = -(32 lambda^2 / pi) * int_0^infty t^2
                     ||R_{-t^2}(omega^2) omega^{1/2} f||^2
                     <f| R_{-t^2}(omega^2) omega f>
                     / (1 + 4 lambda <f| R_{-t^2}(omega^2) omega f>) dt

    Requires lambda >= 0 so the denominator stays above 1.  The tau ladder
    truncates the integral; a fitted slope in ln(tau) that stays above
    slope_tol (relative to the full value) flags divergence, which is the
    numerical signature of ||omega^{-1/4} f|| = infinity in the continuum.
    """
    require_gauge_reduced(model)
    lam = model.lam
    if lam < 0.0:
        raise BogoliubovError("formal trace integrand requires lambda >= 0")
    omega = model.omega
    fw = model.f_weighted.real
    pref = -32.0 * lam ** 2 / np.pi

    def integrand(t):
        shifted = omega[:, None] ** 2 + t[None, :] ** 2
        num_vec = (np.sqrt(omega) * fw)[:, None] / shifted
        norm_sq = np.sum(num_vec ** 2, axis=0)
        inner = np.sum((omega * fw ** 2)[:, None] / shifted, axis=0)
        return t ** 2 * norm_sq * inner / (1.0 + 4.0 * lam * inner)

    full = integrate_halfline(integrand, quad)
    partials = []
    for tau in tau_ladder:
        part = integrate_interval(integrand, 0.0, float(tau), quad)
        partials.append(pref * float(part))
    value = pref * float(full)
    scale = max(abs(value), 1e-30)
    log_tau = np.log(np.asarray(tau_ladder, dtype=float))
    slope = float(np.polyfit(log_tau, np.asarray(partials) / scale, 1)[0])
    bound = 16.0 * np.sqrt(2.0) * lam ** 2 * model.fnorm(-0.25) ** 4
    return FormalTraceReport(value=value, bound=bound,
                             tau_ladder=tuple(float(t) for t in tau_ladder),
                             partials=tuple(partials), slope=abs(slope),
                             divergent=abs(slope) > slope_tol)

