import dataclasses

import numpy as np
import pytest

from bogolab.model import (DiscretizedModel, FSpec, GridSpec, MeasureSpec,
                           ModelError, OmegaSpec, ScenarioConfig, build_model,
                           coarsen, cutoff_project, default_cutoffs,
                           gauge_reduce, regularity_scan, scenario_from_dict)


def config(f_exp=0.0, lam=1.0, k_max=1.0e3, count=96, **kw):
    return ScenarioConfig(omega=OmegaSpec(kind="power", p=1.0),
                          f=FSpec(kind="power", exponent=f_exp),
                          lam=lam,
                          grid=GridSpec(k_min=1.0, k_max=k_max, count=count),
                          **kw)


def test_trapezoid_weights_telescope():
    model = build_model(config())
    # trapezoid weights on any ladder sum to the ladder span
    assert np.sum(model.weights) == pytest.approx(
        model.nodes[-1] - model.nodes[0], rel=1e-12)


def test_linear_spacing():
    cfg = dataclasses.replace(config(), grid=GridSpec(
        k_min=1.0, k_max=2.0, count=11, spacing="linear"))
    model = build_model(cfg)
    assert model.nodes == pytest.approx(np.linspace(1.0, 2.0, 11))


def test_radial_measure_volume():
    cfg = dataclasses.replace(config(), measure=MeasureSpec(kind="radial", dim=3),
                              grid=GridSpec(k_min=1.0, k_max=2.0, count=400,
                                            spacing="linear"))
    model = build_model(cfg)
    # integral of 1 over the shell 1 <= |k| <= 2 in R^3
    want = 4.0 * np.pi / 3.0 * (8.0 - 1.0)
    assert np.sum(model.weights) == pytest.approx(want, rel=1e-3)


def test_omega_kinds():
    nodes = np.array([1.0, 2.0, 4.0])
    grid = GridSpec(spacing="table", nodes=tuple(nodes), weights=(1.0, 1.0, 1.0))
    base = config()
    for kind, want in (
            ("power", nodes),
            ("massive", np.sqrt(nodes ** 2 + 1.0)),
            ("kinetic", nodes + nodes ** 2)):
        cfg = dataclasses.replace(base, omega=OmegaSpec(kind=kind),
                                  grid=grid)
        assert build_model(cfg).omega == pytest.approx(want)
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(base, omega=OmegaSpec(kind="fancy")))


def test_f_kinds():
    grid = GridSpec(spacing="table", nodes=(1.0, 4.0), weights=(1.0, 1.0))
    cfg = dataclasses.replace(config(), f=FSpec(kind="pf_indicator"), grid=grid)
    assert build_model(cfg).f == pytest.approx([1.0, 0.5])
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(cfg, f=FSpec(kind="spline")))
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(
            cfg, f=FSpec(kind="table", values=(1.0,))))


def test_grid_guards():
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(config(), grid=GridSpec(k_min=0.5)))
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(config(), grid=GridSpec(k_max=0.5)))
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(config(), grid=GridSpec(count=1)))
    with pytest.raises(ModelError):
        build_model(dataclasses.replace(
            config(), grid=GridSpec(spacing="table", nodes=(2.0, 1.0),
                                    weights=(1.0, 1.0))))


def test_model_validation():
    with pytest.raises(ModelError):
        DiscretizedModel(nodes=np.array([1.0]), weights=np.array([0.0]),
                         omega=np.array([1.0]), f=np.array([1.0]), lam=1.0)
    with pytest.raises(ModelError):
        DiscretizedModel(nodes=np.array([1.0]), weights=np.array([1.0]),
                         omega=np.array([0.5]), f=np.array([1.0]), lam=1.0)


def test_weighted_norms():
    model = DiscretizedModel(nodes=np.array([1.0, 2.0]),
                             weights=np.array([0.5, 2.0]),
                             omega=np.array([1.0, 4.0]),
                             f=np.array([1.0, 1.0]), lam=0.0)
    assert model.norm(model.f) == pytest.approx(np.sqrt(2.5))
    assert model.fnorm(-0.5) == pytest.approx(np.sqrt(0.5 + 2.0 / 4.0))
    assert model.inner(model.f, model.omega) == pytest.approx(0.5 + 8.0)
    assert model.f_weighted == pytest.approx(np.sqrt(model.weights))


def test_gauge_reduce_strips_phase():
    f = np.array([1.0 + 1.0j, -2.0, 0.0])
    model = DiscretizedModel(nodes=np.array([1.0, 2.0, 3.0]),
                             weights=np.ones(3), omega=np.ones(3) * 2.0,
                             f=f, lam=1.0)
    reduced, phase = gauge_reduce(model)
    assert reduced.f == pytest.approx([np.sqrt(2.0), 2.0, 0.0])
    assert phase * reduced.f == pytest.approx(f)
    assert phase[2] == 1.0  # zeros keep a unit phase


def test_cutoff_project_idempotent_monotone():
    model = build_model(config(f_exp=0.5))
    low = cutoff_project(model, 50.0)
    assert np.array_equal(cutoff_project(low, 50.0).f, low.f)
    high = cutoff_project(model, 500.0)
    assert model.norm(low.f) <= model.norm(high.f) <= model.norm(model.f)
    assert np.all(low.f[model.omega > 50.0] == 0.0)


def test_coarsen_conserves_weight():
    model = build_model(config())
    small = coarsen(model, 5)
    assert small.dim == 5
    assert np.sum(small.weights) == pytest.approx(np.sum(model.weights))
    with pytest.raises(ModelError):
        coarsen(model, 9)
    with pytest.raises(ModelError):
        coarsen(model, 0)


CLASS_CASES = [
    (-1.0, "H-regular"),
    (-0.3, "needs-energy-renorm"),
    (0.25, "needs-charge-renorm"),
    (1.5, "out-of-theory"),
]


@pytest.mark.parametrize("f_exp,want", CLASS_CASES)
def test_classification_ladder(f_exp, want):
    report = regularity_scan(config(f_exp=f_exp, k_max=1.0e4, count=256))
    assert report.classification == want


def test_regularity_scan_exponent_values():
    # ||f_n||^2 ~ n^(2 alpha + 1) for f = k^alpha, so the norm exponent is
    # alpha + 1/2
    report = regularity_scan(config(f_exp=0.25, k_max=1.0e4, count=256))
    assert report.growth_exponents[0.0] == pytest.approx(0.75, abs=0.05)
    assert report.growth_exponents[0.5] == pytest.approx(0.25, abs=0.05)
    assert report.norms[0.0] > 0


def test_regularity_scan_needs_four_cutoffs():
    with pytest.raises(ModelError):
        regularity_scan(config(cutoffs=(10.0, 20.0, 30.0)))


def test_default_cutoffs_cover_grid():
    cfg = config()
    cuts = default_cutoffs(cfg)
    model = build_model(cfg)
    assert len(cuts) == 8
    assert cuts[0] == pytest.approx(10.0)
    assert cuts[-1] == pytest.approx(float(model.omega.max()))
    with pytest.raises(ModelError):
        default_cutoffs(dataclasses.replace(
            cfg, grid=GridSpec(k_min=1.0, k_max=5.0, count=16)))


def test_scenario_from_dict_defaults_and_keys():
    cfg = scenario_from_dict({})
    assert cfg.omega.kind == "power"
    assert cfg.lam == 1.0
    assert cfg.grid.count == 512
    cfg = scenario_from_dict({
        "lambda": -0.5,
        "omega": {"kind": "massive", "mass": 2.0},
        "f": {"kind": "power", "exponent": 0.25},
        "measure": {"kind": "radial", "dim": 3},
        "grid": {"k_min": 1.0, "k_max": 100.0, "count": 32},
        "flow": {"case": "2", "cutoffs": [10.0, 20.0, 40.0, 80.0]},
        "fock": {"d": 2},  # unknown sections are ignored here
    })
    assert cfg.lam == -0.5
    assert cfg.omega.mass == 2.0
    assert cfg.measure.dim == 3
    assert cfg.cutoffs == (10.0, 20.0, 40.0, 80.0)
    assert cfg.flow_case == "2"


def test_cutoff_validation_against_grid():
    cfg = config(cutoffs=(10.0, 20.0, 50.0, 1.0e9))
    with pytest.raises(ModelError):
        build_model(cfg)
