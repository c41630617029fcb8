"""Coupling and energy renormalization flows.

Two resolvent formulas drive everything.  The regular one inverts
xi^2 = omega^2 + 4 lambda |omega^{1/2} f><omega^{1/2} f| directly:

    R_z = (omega^2 - z)^{-1}
          - 4 lambda / (1 + 4 lambda <f| omega (omega^2 - z)^{-1} f>)
            * omega^{1/2} (omega^2 - z)^{-1} |f><f| omega^{1/2} (omega^2 - z)^{-1}

The renormalized one replaces the denominator inner product by its
ultraviolet-subtracted version, 1 + 4 lambda z <f| omega^{-1} (omega^2 - z)^{-1} f>,
which stays finite when ||omega^{-1/2} f|| does not.  On any finite grid the two
families coincide after mapping the coupling,

    lambda~^{-1} = lambda^{-1} - 4 <f| omega^{-1} f>,

and the cutoff flow lambda_n^{-1} = lambda^{-1} - 4 <f_n| omega^{-1} f_n> drives
lambda_n -> 0^- while xi_{lambda_n, n} converges to the renormalized xi.

The divergence probe quantifies when no unitary implements the limit: for
f(k) = k^alpha on omega(k) = k the truncated double integral

    I(tau) = int_T^tau t^{-2 alpha} int_1^inf k^{2 alpha} (k^2 - t^2)
             / (k^2 + t^2)^2 dk dt

grows like I_0 ln(tau) with I_0 = int_1^inf (p^{2a} - p^{-2a})(p^2 - 1)
/ (p^2 + 1)^2 dp = pi alpha / cos(pi alpha) > 0, so tr(V V^T) = infinity in
the continuum even though every truncation is finite.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from . import bogoliubov
from .model import (EXPONENT_TOL, build_model, cutoff_project,
                    default_cutoffs, gauge_reduce, regularity_scan)
from .numerics import (DEFAULT_QUAD, NumericsError, QuadratureSpec, eig_sym,
                       graded_rule, integrate_halfline, integrate_interval,
                       opnorm)

DENOM_GUARD = 1e-13


class RenormError(NumericsError):
    pass


class ConfigurationError(RenormError):
    pass


def regular_resolvent(model, z):
    """Resolvent of xi^2 assembled from the explicit rank-one formula.

    Requires z off the spectrum [min omega^2, max omega^2]; real z must sit
    below the spectrum for the positivity of the denominator to be automatic.
    """
    omega = model.omega
    lam = model.lam
    fw = model.f_weighted.real
    z = complex(z) if np.iscomplexobj(np.asarray(z)) else float(z)
    shifted = omega ** 2 - z
    if not np.iscomplexobj(np.asarray(z)) and np.min(np.abs(shifted)) < 1e-300:
        raise RenormError(f"z = {z} hits the spectrum of omega^2")
    base = 1.0 / shifted
    denom = 1.0 + 4.0 * lam * np.sum(omega * fw ** 2 * base)
    if abs(denom) < DENOM_GUARD:
        raise RenormError(f"regular resolvent denominator vanishes at z = {z}")
    v = np.sqrt(omega) * base * fw
    return np.diag(base) - (4.0 * lam / denom) * np.outer(v, v)


def renormalized_resolvent(model, z):
    """Ultraviolet-subtracted resolvent family; see the module docstring.

    For lambda <= 0 and real z < 0 the denominator is >= 1 by sign; complex z
    is permitted subject to the magnitude guard.
    """
    return bogoliubov._renormalized_resolvent_matrix(model, z)


def effective_coupling(model):
    """lambda~ with lambda~^{-1} = lambda^{-1} - 4 <f| omega^{-1} f>.

    The renormalized family at coupling lambda equals the regular family at
    lambda~ whenever omega^{1/2} f is in the space, which is always true on a
    grid.  Returns infinity cleanly rejected: a vanishing inverse raises.
    """
    lam = model.lam
    if lam == 0.0:
        return 0.0
    c = model.fnorm(-0.5) ** 2
    inv = 1.0 / lam - 4.0 * c
    if abs(inv) < 1e-300:
        raise RenormError("effective coupling diverges (1/lambda = 4<f|omega^-1 f>)")
    return 1.0 / inv


def coupling_flow(model, lam, cutoffs):
    """lambda_n = lambda / (1 - 4 lambda <f_n| omega^{-1} f_n>) per cutoff.

    Defined for lambda < 0, where 1 - 4 lambda c_n > 1 keeps every lambda_n in
    (lambda, 0) and the sequence increases toward 0 as the cutoffs grow.
    """
    if lam >= 0.0:
        raise ConfigurationError(
            f"coupling flow requires lambda < 0, got {lam}")
    out = []
    for n in cutoffs:
        c_n = cutoff_project(model, n).fnorm(-0.5) ** 2
        out.append(lam / (1.0 - 4.0 * lam * c_n))
    return out


def energy_counterterm(model, n, lam_eff):
    """E_n = tr(xi_{lam_eff, n} - h_{lam_eff, n}) / 2 on the cutoff model."""
    model_n = cutoff_project(model, n).replace(lam=lam_eff)
    blocks = bogoliubov.build_blocks(model_n, mode="direct")
    return bogoliubov.ground_energy(blocks, model_n)


@dataclass(frozen=True)
class FlowRecord:
    n: float
    lambda_n: float
    E_n: float
    resolvent_gap: float
    shale_n: float
    status: str


@dataclass(frozen=True)
class FlowResult:
    case: str                 # "1.a", "1.b" or "2"
    classification: str
    lam: float
    records: tuple
    shale_ceiling: float      # case-1 bound (lambda/2)||omega^{-1/2} f||^2; nan in case 2
    summary: dict


def _resolvent_at_minus_one(blocks):
    q = blocks.xi_vecs
    return (q * (1.0 / (blocks.xi_vals + 1.0))) @ q.T


def _select_case(requested, lam, scan, tol):
    if requested in ("auto", "", None):
        if lam >= 0.0:
            diverges = scan.growth_exponents.get(0.25, 0.0) > tol
            return "1.b" if diverges else "1.a"
        return "2"
    requested = str(requested)
    if requested.startswith("1") and lam < 0.0:
        raise ConfigurationError(
            f"case {requested} requested but lambda = {lam} < 0")
    if requested == "2" and lam >= 0.0:
        raise ConfigurationError(
            f"case 2 (coupling flow) requested but lambda = {lam} >= 0")
    if requested == "1":
        diverges = scan.growth_exponents.get(0.25, 0.0) > tol
        return "1.b" if diverges else "1.a"
    if requested in ("1.a", "1.b", "2"):
        return requested
    raise ConfigurationError(f"unknown flow case {requested!r}")


def flow_run(config, tol=None):
    """Cutoff renormalization trajectory for the configured scenario.

    Case 1 (lambda >= 0): coupling fixed, one record per cutoff, convergence
    measured against the full-grid xi in the resolvent norm at z = -1.  The
    sub-case 1.b (||omega^{-1/4} f|| divergent) is detected from the
    regularity scan; its counterterms E_n drift to -infinity, which shows up
    as |E_n| growth along the ladder.

    Case 2 (lambda < 0): coupling flows per cutoff, reference is the
    renormalized-resolvent xi on the full grid.
    """
    if tol is None:
        tol = EXPONENT_TOL
    scan = regularity_scan(config)
    if scan.classification == "out-of-theory":
        raise ConfigurationError(
            "scenario classified out-of-theory (||omega^{-3/2} f|| divergent); "
            "no flow is defined")
    model = build_model(config)
    model, _phase = gauge_reduce(model)
    cutoffs = config.cutoffs if config.cutoffs else default_cutoffs(config)
    case = _select_case(config.flow_case, model.lam, scan, tol)

    if case == "2":
        lambdas = coupling_flow(model, model.lam, cutoffs)
        xi_ref = bogoliubov.build_xi(model, "renormalized-resolvent")
        shale_ceiling = float("nan")
    else:
        lambdas = [model.lam] * len(cutoffs)
        xi_ref = bogoliubov.build_xi(model, "direct")
        shale_ceiling = 0.5 * model.lam * model.fnorm(-0.5) ** 2
    dec = eig_sym(xi_ref)
    r_ref = dec.apply(lambda x: 1.0 / (x + 1.0))
    ref_norm = float(np.max(np.abs(1.0 / (dec.values + 1.0))))

    records = []
    for n, lam_n in zip(cutoffs, lambdas):
        model_n = cutoff_project(model, n).replace(lam=lam_n)
        blocks = bogoliubov.build_blocks(model_n, mode="direct")
        e_n = bogoliubov.ground_energy(blocks, model_n)
        gap = opnorm(_resolvent_at_minus_one(blocks) - r_ref)
        shale = bogoliubov.shale_trace(blocks, model_n).direct
        records.append(FlowRecord(n=float(n), lambda_n=float(lam_n),
                                  E_n=float(e_n), resolvent_gap=float(gap),
                                  shale_n=float(shale), status="ok"))

    log_n = np.log([r.n for r in records])
    log_e = np.log([max(abs(r.E_n), 1e-300) for r in records])
    e_exponent = float(np.polyfit(log_n, log_e, 1)[0]) if len(records) >= 2 else 0.0
    summary = {
        "case": case,
        "classification": scan.classification,
        "lambda": model.lam,
        "gap_first": records[0].resolvent_gap,
        "gap_last": records[-1].resolvent_gap,
        "ref_norm": ref_norm,   # opnorm of the full-grid reference resolvent
        "lambda_n_last": records[-1].lambda_n,
        "e_last": records[-1].E_n,
        "e_growth_exponent": e_exponent,   # d ln|E_n| / d ln n along the ladder
        "shale_max": max(r.shale_n for r in records),
        "shale_ceiling": shale_ceiling,
    }
    return FlowResult(case=case, classification=scan.classification,
                      lam=model.lam, records=tuple(records),
                      shale_ceiling=shale_ceiling, summary=summary)


def write_flow_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda_n", "E_n", "resolvent_gap", "shale_n",
                         "status"])
        for r in records:
            writer.writerow([f"{r.n:.17g}", f"{r.lambda_n:.17g}",
                             f"{r.E_n:.17g}", f"{r.resolvent_gap:.17g}",
                             f"{r.shale_n:.17g}", r.status])


# ---------------------------------------------------------------------------
# Shale divergence diagnostics


@dataclass(frozen=True)
class DivergenceProbe:
    alpha: float
    tau_ladder: tuple
    I_tau: tuple              # truncated double integrals I(tau)
    I0_est: float             # fitted d I(tau) / d ln(tau)
    I0_quad: float            # independent quadrature of the p-integral
    u_head: float             # int_0^T u(t) dt at the probe coupling
    head_bound: float         # a-priori bound T / (1 - 2 alpha)
    t_floor: float


def probe_I0(alpha, quad=DEFAULT_QUAD):
    """int_1^inf (p^{2a} - p^{-2a})(p^2 - 1)/(p^2 + 1)^2 dp by quadrature.

    Beta-function reduction gives the closed form pi*alpha/cos(pi*alpha),
    which the tests pin against this routine.
    """
    a2 = 2.0 * alpha

    def integrand(x):
        p = 1.0 + x
        return (p ** a2 - p ** (-a2)) * (p ** 2 - 1.0) / (p ** 2 + 1.0) ** 2

    return float(integrate_halfline(integrand, quad))


def divergence_probe(alpha, lam=-1.0, tau_ladder=None, t_floor=10.0,
                     quad=None, k_cut=1e12):
    """Truncated Shale-trace integrals for f(k) = k^alpha on omega(k) = k.

    The inner k-integrals are evaluated on one fixed graded rule reaching
    k_cut (the integrands decay like k^{2 alpha - 2}, so the tail beyond
    10^12 is below the fit tolerance); the outer t-integral accumulates
    panel by panel between ladder points so I(tau) is exactly nested.
    """
    if not 0.0 <= alpha < 0.5:
        raise RenormError(f"alpha must lie in [0, 1/2), got {alpha}")
    if lam >= 0.0:
        raise RenormError(f"probe coupling must be negative, got {lam}")
    if tau_ladder is None:
        tau_ladder = tuple(np.geomspace(1e3, 1e4, 5))
    taus = [float(t) for t in tau_ladder]
    if any(b <= a for a, b in zip(taus, taus[1:])) or taus[0] <= t_floor:
        raise RenormError("tau ladder must increase and start above t_floor")
    if quad is None:
        quad = QuadratureSpec(rtol=1e-8, abs_floor=1e-14)

    nodes, weights = graded_rule(1.0, k_cut, levels=160, order=15)
    k2 = nodes ** 2
    ka = nodes ** (2.0 * alpha)

    def n1(t):
        # int_1^inf k^{2a} (k^2 - t^2) / (k^2 + t^2)^2 dk, vectorized over t
        t2 = np.atleast_1d(t) ** 2
        shifted = k2[:, None] + t2[None, :]
        vals = ka[:, None] * (k2[:, None] - t2[None, :]) / shifted ** 2
        return weights @ vals

    def dfun(t):
        # <f| omega^{-1} R_{-t^2}(omega^2) f> = int_1^inf k^{2a-1}/(k^2+t^2) dk
        t2 = np.atleast_1d(t) ** 2
        shifted = k2[:, None] + t2[None, :]
        return weights @ ((ka / nodes)[:, None] / shifted)

    def i_integrand(t):
        return np.atleast_1d(t) ** (-2.0 * alpha) * n1(t)

    def u(t):
        t_arr = np.atleast_1d(t)
        return n1(t_arr) / (1.0 + 4.0 * abs(lam) * t_arr ** 2 * dfun(t_arr))

    partials = []
    total = float(integrate_interval(i_integrand, t_floor, taus[0], quad))
    partials.append(total)
    for a, b in zip(taus, taus[1:]):
        total += float(integrate_interval(i_integrand, a, b, quad))
        partials.append(total)

    slope = float(np.polyfit(np.log(taus), partials, 1)[0])
    i0_quad = probe_I0(alpha, QuadratureSpec(rtol=1e-10, abs_floor=1e-15))
    u_head = float(integrate_interval(u, 0.0, t_floor, quad))
    head_bound = t_floor / (1.0 - 2.0 * alpha)
    return DivergenceProbe(alpha=float(alpha), tau_ladder=tuple(taus),
                           I_tau=tuple(partials), I0_est=slope,
                           I0_quad=i0_quad, u_head=u_head,
                           head_bound=head_bound, t_floor=float(t_floor))


def write_probe_csv(probe, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "I_tau"])
        for tau, val in zip(probe.tau_ladder, probe.I_tau):
            writer.writerow([f"{tau:.17g}", f"{val:.17g}"])


@dataclass(frozen=True)
class GrowthScan:
    k_maxes: tuple
    shale_values: tuple
    exponent: float           # fitted d ln(shale) / d ln(k_max)


def shale_growth_scan(config, grids=((256, 1e2), (512, 1e3), (1024, 1e4))):
    """tr(V V^T) of the renormalized blocks across growing grids.

    When omega^{-1} f leaves the space in the continuum (f = k^alpha with
    alpha >= 1/2), the trace grows like a positive power of the grid k_max;
    the fitted exponent quantifies the finite-size restatement of the
    non-existence of a unitary implementer.  Requires lambda < 0.
    """
    if config.lam >= 0.0:
        raise ConfigurationError("growth scan requires lambda < 0")
    k_maxes, values = [], []
    for count, k_max in grids:
        grid = dataclasses.replace(config.grid, count=int(count),
                                   k_max=float(k_max))
        cfg = dataclasses.replace(config, grid=grid)
        model = build_model(cfg)
        model, _ = gauge_reduce(model)
        blocks = bogoliubov.build_blocks(model, mode="renormalized-resolvent")
        values.append(bogoliubov.shale_trace(blocks, model).direct)
        k_maxes.append(float(k_max))
    exponent = float(np.polyfit(np.log(k_maxes), np.log(values), 1)[0])
    return GrowthScan(k_maxes=tuple(k_maxes), shale_values=tuple(values),
                      exponent=exponent)
