"""Scenario definition and one-boson discretization.

A scenario is a dispersion omega(k) >= 1, a form factor f(k), a measure on
the half-line [k_min, k_max], a coupling lambda, and a ladder of ultraviolet
cutoffs.  Discretization produces nodes, trapezoid weights (times the radial
Jacobian when requested), and sampled omega/f vectors; the weighted inner
product <g, h> = sum_i w_i conj(g_i) h_i is the ambient Hilbert space.

The regularity scan fits growth exponents of the cutoff norms ||omega^{-s} f_n||
against the cutoff and classifies the scenario:

    H-regular            ||f_n|| bounded
    needs-energy-renorm  ||f_n|| divergent, ||omega^{-1/2} f_n|| bounded
    needs-charge-renorm  ||omega^{-1/2} f_n|| divergent, ||omega^{-3/2} f_n|| bounded
    out-of-theory        ||omega^{-3/2} f_n|| divergent
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:        # Python 3.10
    import tomli as tomllib

EXPONENT_TOL = 0.05                # growth-exponent threshold for classification
NORM_POWERS = (-0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 1.5)   # s in ||omega^{-s} f||


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    k_min: float = 1.0
    k_max: float = 1.0e4
    count: int = 512
    spacing: str = "log"           # "log" | "linear" | "table"
    nodes: tuple = ()              # table mode only
    weights: tuple = ()            # table mode only


@dataclass(frozen=True)
class OmegaSpec:
    kind: str                      # "power" | "massive" | "kinetic" | "table"
    p: float = 1.0
    mass: float = 1.0
    values: tuple = ()


@dataclass(frozen=True)
class FSpec:
    kind: str                      # "power" | "pf_indicator" | "table"
    exponent: float = 0.0
    values: tuple = ()


@dataclass(frozen=True)
class MeasureSpec:
    kind: str = "lebesgue"         # "lebesgue" | "radial"
    dim: int = 1
    coeff: float | None = None     # radial weight c * k^{d-1}; default: sphere area

    def radial_coeff(self):
        if self.coeff is not None:
            return float(self.coeff)
        return {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}[self.dim]


@dataclass(frozen=True)
class ScenarioConfig:
    omega: OmegaSpec
    f: FSpec
    measure: MeasureSpec = MeasureSpec()
    lam: float = 1.0
    grid: GridSpec = GridSpec()
    cutoffs: tuple = ()
    flow_case: str = "auto"        # "auto" | "1" | "1.a" | "1.b" | "2"


@dataclass(frozen=True)
class DiscretizedModel:
    """Grid realization of a scenario.  Arrays are frozen after construction."""

    nodes: np.ndarray
    weights: np.ndarray
    omega: np.ndarray
    f: np.ndarray
    lam: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        f = np.asarray(self.f)
        if not (nodes.ndim == 1 and weights.shape == nodes.shape
                and omega.shape == nodes.shape and f.shape == nodes.shape):
            raise ModelError("nodes, weights, omega, f must be matching 1-d arrays")
        if np.any(weights <= 0.0):
            raise ModelError("quadrature weights must be strictly positive")
        if np.any(omega < 1.0 - 1e-12):
            raise ModelError("dispersion must satisfy omega >= 1")
        if not np.iscomplexobj(f):
            f = f.astype(float)
        for arr in (nodes, weights, omega, f):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def dim(self):
        return self.nodes.size

    @property
    def f_weighted(self):
        """f in the Euclidean frame: sqrt(w_i) f_i, so that plain matrix
        algebra realizes the weighted inner product."""
        return np.sqrt(self.weights) * self.f

    def inner(self, g, h):
        return complex(np.sum(self.weights * np.conj(g) * h))

    def norm(self, g):
        return float(np.sqrt(np.sum(self.weights * np.abs(g) ** 2)))

    def fnorm(self, power=0.0):
        """||omega^power f|| in the weighted inner product."""
        return self.norm(self.omega ** power * self.f)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _grid_nodes(grid):
    if grid.spacing == "table":
        nodes = np.asarray(grid.nodes, dtype=float)
        weights = np.asarray(grid.weights, dtype=float)
        if nodes.size == 0 or weights.shape != nodes.shape:
            raise ModelError("table grid needs matching nodes and weights")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ModelError("table nodes must be strictly increasing")
        if nodes[0] < 1.0:
            raise ModelError("grid must start at k >= 1")
        return nodes, weights
    if grid.k_min < 1.0:
        raise ModelError("k_min must be >= 1 (infrared regularity is assumed throughout)")
    if not grid.k_max > grid.k_min:
        raise ModelError("k_max must exceed k_min")
    if grid.count < 2:
        raise ModelError("need at least two grid nodes")
    if grid.spacing == "log":
        nodes = np.geomspace(grid.k_min, grid.k_max, grid.count)
    elif grid.spacing == "linear":
        nodes = np.linspace(grid.k_min, grid.k_max, grid.count)
    else:
        raise ModelError(f"unknown grid spacing {grid.spacing!r}")
    weights = np.empty_like(nodes)
    weights[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    weights[0] = 0.5 * (nodes[1] - nodes[0])
    weights[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return nodes, weights


def _omega_values(spec, nodes):
    if spec.kind == "power":
        return np.maximum(1.0, nodes ** spec.p)
    if spec.kind == "massive":
        return np.sqrt(nodes ** 2 + spec.mass ** 2)
    if spec.kind == "kinetic":
        return np.maximum(1.0, nodes + nodes ** 2)
    if spec.kind == "table":
        vals = np.asarray(spec.values, dtype=float)
        if vals.shape != nodes.shape:
            raise ModelError("omega table length must match the grid")
        return vals
    raise ModelError(f"unknown omega kind {spec.kind!r}")


def _f_values(spec, nodes):
    if spec.kind == "power":
        return nodes ** spec.exponent
    if spec.kind == "pf_indicator":
        return np.where(nodes >= 1.0, nodes ** -0.5, 0.0)
    if spec.kind == "table":
        vals = np.asarray(spec.values)
        if vals.shape != nodes.shape:
            raise ModelError("f table length must match the grid")
        return vals
    raise ModelError(f"unknown f kind {spec.kind!r}")


def build_model(config):
    """Discretize a scenario: trapezoid weights on the node ladder, the radial
    Jacobian folded into the weights, omega and f sampled at the nodes."""
    nodes, weights = _grid_nodes(config.grid)
    if config.measure.kind == "radial":
        if config.measure.dim not in (1, 2, 3):
            raise ModelError("radial measure supports d in {1, 2, 3}")
        weights = weights * config.measure.radial_coeff() * nodes ** (config.measure.dim - 1)
    elif config.measure.kind != "lebesgue":
        raise ModelError(f"unknown measure kind {config.measure.kind!r}")
    omega = _omega_values(config.omega, nodes)
    f = _f_values(config.f, nodes)
    model = DiscretizedModel(nodes=nodes, weights=weights, omega=omega, f=f,
                             lam=config.lam)
    _validate_cutoffs(config.cutoffs, model)
    return model


def _validate_cutoffs(cutoffs, model):
    if not cutoffs:
        return
    arr = np.asarray(cutoffs, dtype=float)
    if np.any(np.diff(arr) <= 0):
        raise ModelError("cutoffs must be strictly increasing")
    if arr[-1] > model.omega.max() * (1 + 1e-12):
        raise ModelError("largest cutoff exceeds max omega on the grid")


def cutoff_project(model, n):
    """Zero the form factor above the dispersion cutoff: f_i -> 0 where
    omega_i > n.  Idempotent, and monotone in n by construction."""
    keep = model.omega <= float(n)
    return model.replace(f=np.where(keep, model.f, 0.0))


def gauge_reduce(model):
    """Replace f by |f| and return the unimodular phase that was removed.

    The phase acts as a one-boson gauge transformation, so every quantity
    computed downstream (spectra, traces, norms) is invariant under it.
    Zeros of f get phase 1.
    """
    absf = np.abs(model.f)
    phase = np.where(absf > 0, model.f / np.where(absf > 0, absf, 1.0), 1.0)
    return model.replace(f=absf.astype(float)), phase


@dataclass(frozen=True)
class RegularityReport:
    norms: dict                    # s -> ||omega^{-s} f|| on the full grid
    log_norm: float                # ||ln(omega)^2 f||
    growth_exponents: dict         # s -> fitted d ln||omega^{-s} f_n|| / d ln n
    classification: str
    cutoffs: tuple
    tol: float


def regularity_scan(config, tol=EXPONENT_TOL):
    """Fit cutoff growth exponents of ||omega^{-s} f_n|| and classify.

    Needs at least four cutoffs for a meaningful least-squares fit in
    log-log coordinates.
    """
    cutoffs = tuple(float(n) for n in config.cutoffs)
    if not cutoffs:
        cutoffs = tuple(default_cutoffs(config))
    if len(cutoffs) < 4:
        raise ModelError("regularity scan needs at least four cutoffs")
    model = build_model(config)
    log_n = np.log(np.asarray(cutoffs))
    exponents = {}
    norms_full = {}
    for s in NORM_POWERS:
        norms_full[s] = model.fnorm(-s)
        vals = []
        for n in cutoffs:
            nn = cutoff_project(model, n).fnorm(-s)
            vals.append(max(nn, 1e-300))
        slope = np.polyfit(log_n, np.log(np.asarray(vals)), 1)[0]
        exponents[s] = float(slope)
    log_norm = model.norm(np.log(model.omega) ** 2 * model.f)

    if exponents[1.5] > tol:
        label = "out-of-theory"
    elif exponents[0.5] > tol:
        label = "needs-charge-renorm"
    elif exponents[0.0] > tol:
        label = "needs-energy-renorm"
    else:
        label = "H-regular"
    return RegularityReport(norms=norms_full, log_norm=float(log_norm),
                            growth_exponents=exponents, classification=label,
                            cutoffs=cutoffs, tol=tol)


def coarsen(model, d):
    """Aggregate the grid into d representative modes for the Fock oracle.

    Contiguous blocks keep their total weight; omega and f are sampled at the
    block's middle node.  The result is a valid small model in its own right
    (the Fock comparison is exact on it), not an approximation of the fine grid.
    """
    if not 1 <= d <= min(8, model.dim):
        raise ModelError("coarse dimension must be between 1 and min(8, dim)")
    blocks = np.array_split(np.arange(model.dim), d)
    idx = np.array([b[len(b) // 2] for b in blocks])
    weights = np.array([model.weights[b].sum() for b in blocks])
    return DiscretizedModel(nodes=model.nodes[idx], weights=weights,
                            omega=model.omega[idx], f=model.f[idx], lam=model.lam)


# ---------------------------------------------------------------------------
# TOML configuration
# ---------------------------------------------------------------------------

def scenario_from_dict(data):
    om = data.get("omega", {})
    ff = data.get("f", {})
    ms = data.get("measure", {})
    gr = data.get("grid", {})
    fl = data.get("flow", {})
    omega = OmegaSpec(kind=om.get("kind", "power"), p=float(om.get("p", 1.0)),
                      mass=float(om.get("mass", 1.0)),
                      values=tuple(om.get("values", ())))
    f = FSpec(kind=ff.get("kind", "power"), exponent=float(ff.get("exponent", 0.0)),
              values=tuple(ff.get("values", ())))
    measure = MeasureSpec(kind=ms.get("kind", "lebesgue"), dim=int(ms.get("dim", 1)),
                          coeff=ms.get("coeff"))
    grid = GridSpec(k_min=float(gr.get("k_min", 1.0)), k_max=float(gr.get("k_max", 1.0e4)),
                    count=int(gr.get("count", 512)), spacing=gr.get("spacing", "log"),
                    nodes=tuple(gr.get("nodes", ())), weights=tuple(gr.get("weights", ())))
    cutoffs = tuple(float(x) for x in fl.get("cutoffs", ()))
    return ScenarioConfig(omega=omega, f=f, measure=measure,
                          lam=float(data.get("lambda", 1.0)), grid=grid,
                          cutoffs=cutoffs, flow_case=fl.get("case", "auto"))


def scenario_from_toml(path):
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return scenario_from_dict(data)


def default_cutoffs(config, count=8, start=10.0):
    """Geometric cutoff ladder ending exactly at the grid's max omega."""
    model = build_model(dataclasses.replace(config, cutoffs=()))
    top = float(model.omega.max())
    if top <= start:
        raise ModelError("grid too short for a default cutoff ladder")
    return tuple(np.geomspace(start, top, count))
