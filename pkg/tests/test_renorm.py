import csv
import dataclasses

import numpy as np
import pytest

from bogolab.model import (DiscretizedModel, FSpec, GridSpec, OmegaSpec,
                           ScenarioConfig, build_model, gauge_reduce)
from bogolab.rankone import ResolventFamily, resolvent_family_check
from bogolab.renorm import (ConfigurationError, RenormError, coupling_flow,
                            divergence_probe, effective_coupling,
                            energy_counterterm, flow_run, probe_I0,
                            regular_resolvent, renormalized_resolvent,
                            shale_growth_scan, write_flow_csv,
                            write_probe_csv)


def scalar_model(lam=2.0):
    return DiscretizedModel(nodes=np.array([1.0]), weights=np.array([1.0]),
                            omega=np.array([1.0]), f=np.array([1.0]), lam=lam)


def scenario(f_exp, lam, k_max=1.0e3, count=96, case="auto"):
    return ScenarioConfig(omega=OmegaSpec(kind="power", p=1.0),
                          f=FSpec(kind="power", exponent=f_exp), lam=lam,
                          grid=GridSpec(k_min=1.0, k_max=k_max, count=count),
                          flow_case=case)


def grid_model(f_exp=0.25, lam=-0.5, count=64, k_max=1.0e2):
    model, _ = gauge_reduce(build_model(scenario(f_exp, lam, k_max, count)))
    return model


def test_regular_resolvent_scalar():
    # xi^2 = 9, so (xi^2 + 1)^{-1} = 1/10
    got = regular_resolvent(scalar_model(), -1.0)
    assert got[0, 0] == pytest.approx(0.1, rel=1e-14)


def test_regular_resolvent_matches_dense():
    model = grid_model(lam=1.5, f_exp=-0.5)
    fw = model.f_weighted.real
    dense = np.diag(model.omega ** 2) \
        + 4.0 * model.lam * np.outer(np.sqrt(model.omega) * fw,
                                     np.sqrt(model.omega) * fw)
    for z in (-1.0, -2.5, -0.3 + 1.1j):
        want = np.linalg.inv(dense - z * np.eye(model.dim))
        got = regular_resolvent(model, z)
        assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()


def test_effective_coupling_values():
    assert effective_coupling(scalar_model(lam=-1.0)) == pytest.approx(-0.2)
    assert effective_coupling(scalar_model(lam=0.0)) == 0.0
    # pole of the map: 1 - 4 lambda c = 0 at lambda = 0.25 (c = 1)
    with pytest.raises(RenormError):
        effective_coupling(scalar_model(lam=0.25))


def test_renormalized_equals_regular_at_mapped_coupling():
    model = grid_model(f_exp=0.25, lam=-0.5)
    for lam in (-0.1, -0.5, -2.0):
        work = model.replace(lam=lam)
        lam_eff = effective_coupling(work)
        lhs = renormalized_resolvent(work, -1.0)
        rhs = regular_resolvent(work.replace(lam=lam_eff), -1.0)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()


def test_renormalized_family_axioms():
    model = grid_model(f_exp=0.25, lam=-0.5, count=32)
    family = ResolventFamily(
        evaluate=lambda z: renormalized_resolvent(model, z),
        label="renormalized")
    rep = resolvent_family_check(family)
    assert rep.conj_residual <= 1e-10
    assert rep.identity_residual <= 1e-10
    assert rep.min_singular_value > 0.0


def test_coupling_flow_closed_form():
    # two modes at omega = 1 with unit weights: c_n = 2 for any cutoff >= 1,
    # so lambda_n = lambda / (1 - 4 lambda c_n) = -1/9 at lambda = -1
    model = DiscretizedModel(nodes=np.array([1.0, 2.0]),
                             weights=np.array([1.0, 1.0]),
                             omega=np.array([1.0, 1.0]),
                             f=np.array([1.0, 1.0]), lam=-1.0)
    lams = coupling_flow(model, -1.0, cutoffs=(1.5, 2.5))
    assert lams == pytest.approx([-1.0 / 9.0, -1.0 / 9.0], rel=1e-14)


def test_coupling_flow_invariants():
    model = grid_model(f_exp=0.25, lam=-0.5, count=128, k_max=1.0e3)
    cutoffs = (10.0, 30.0, 100.0, 300.0, 1000.0)
    lams = coupling_flow(model, model.lam, cutoffs)
    assert all(lam < 0.0 for lam in lams)
    assert all(b > a for a, b in zip(lams, lams[1:]))
    from bogolab.model import cutoff_project
    for n, lam_n in zip(cutoffs, lams):
        c_n = cutoff_project(model, n).fnorm(-0.5) ** 2
        assert 1.0 + 4.0 * lam_n * c_n > 0.0


def test_coupling_flow_rejects_nonnegative():
    with pytest.raises(ConfigurationError):
        coupling_flow(scalar_model(), 1.0, cutoffs=(10.0,))


def test_energy_counterterm_scalar():
    model = scalar_model()
    assert energy_counterterm(model, 2.0, model.lam) == pytest.approx(-1.0, abs=1e-12)


def test_flow_case_regular():
    result = flow_run(scenario(-1.0, 1.0))
    assert result.case == "1.a"
    assert result.classification == "H-regular"
    gaps = [r.resolvent_gap for r in result.records]
    tail = gaps[len(gaps) // 2:]
    assert all(b <= a + 1e-10 for a, b in zip(tail, tail[1:]))
    assert gaps[-1] <= 1e-6 * result.summary["ref_norm"]
    ceiling = result.shale_ceiling
    assert all(r.shale_n <= ceiling + 1e-9 for r in result.records)
    assert all(r.lambda_n == result.lam for r in result.records)


def test_flow_case_energy():
    result = flow_run(scenario(0.3, 2.0))
    assert result.case == "1.b"
    abs_e = [abs(r.E_n) for r in result.records]
    assert all(b > a for a, b in zip(abs_e, abs_e[1:]))
    assert result.summary["e_growth_exponent"] > 0.5
    assert all(r.shale_n <= result.shale_ceiling + 1e-9 for r in result.records)


def test_flow_case_charge():
    result = flow_run(scenario(0.25, -0.5))
    assert result.case == "2"
    lams = [r.lambda_n for r in result.records]
    assert all(lam < 0.0 for lam in lams)
    assert all(b > a for a, b in zip(lams, lams[1:]))
    gaps = [r.resolvent_gap for r in result.records]
    tail = gaps[len(gaps) // 2:]
    assert all(b <= a + 1e-10 for a, b in zip(tail, tail[1:]))
    assert gaps[-1] <= 1e-6 * result.summary["ref_norm"]
    assert np.isnan(result.shale_ceiling)


def test_flow_case_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        flow_run(scenario(0.25, -0.5, case="1.a"))
    with pytest.raises(ConfigurationError):
        flow_run(scenario(-1.0, 1.0, case="2"))
    with pytest.raises(ConfigurationError):
        flow_run(scenario(-1.0, 1.0, case="banana"))


def test_flow_rejects_out_of_theory():
    with pytest.raises(ConfigurationError):
        flow_run(scenario(1.5, 1.0))


def test_flow_csv_round_trip(tmp_path):
    result = flow_run(scenario(-1.0, 1.0))
    path = tmp_path / "flow.csv"
    write_flow_csv(result.records, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(result.records)
    for row, rec in zip(rows, result.records):
        assert float(row["lambda_n"]) == rec.lambda_n
        assert float(row["E_n"]) == rec.E_n
        assert float(row["resolvent_gap"]) == rec.resolvent_gap
        assert row["status"] == "ok"


# closed form for the tail-integral constant: I0(alpha) = pi alpha / cos(pi alpha)
I0_CASES = [(0.1, np.pi * 0.1 / np.cos(np.pi * 0.1)),
            (0.25, np.pi / (2.0 * np.sqrt(2.0))),
            (0.4, np.pi * 0.4 / np.cos(np.pi * 0.4))]


@pytest.mark.parametrize("alpha,want", I0_CASES)
def test_probe_I0_closed_form(alpha, want):
    assert probe_I0(alpha) == pytest.approx(want, rel=1e-8)


def test_divergence_probe_quarter():
    probe = divergence_probe(0.25)
    assert probe.I0_quad == pytest.approx(np.pi / (2.0 * np.sqrt(2.0)), rel=1e-8)
    rel = abs(probe.I0_est - probe.I0_quad) / probe.I0_quad
    assert rel <= 0.1
    assert abs(probe.u_head) <= probe.head_bound
    # head bound T/(1 - 2 alpha) with T = 10
    assert probe.head_bound == pytest.approx(20.0)
    assert len(probe.I_tau) == len(probe.tau_ladder) == 5


def test_divergence_probe_alpha_zero_bounded():
    probe = divergence_probe(0.0)
    assert probe.I0_quad == 0.0
    assert abs(probe.I0_est) <= 1e-3


def test_divergence_probe_guards():
    with pytest.raises(RenormError):
        divergence_probe(0.5)
    with pytest.raises(RenormError):
        divergence_probe(-0.1)
    with pytest.raises(RenormError):
        divergence_probe(0.25, lam=1.0)


def test_probe_csv_round_trip(tmp_path):
    probe = divergence_probe(0.25)
    path = tmp_path / "probe.csv"
    write_probe_csv(probe, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(probe.tau_ladder)
    assert float(rows[0]["I_tau"]) == probe.I_tau[0]


def test_shale_growth_scan_positive_exponent():
    cfg = scenario(0.75, -0.5)
    scan = shale_growth_scan(cfg, grids=((128, 1e2), (256, 1e3), (384, 1e4)))
    # continuum rate is k_max^(2 alpha - 1) = k_max^0.5
    assert scan.exponent > 0.1
    assert scan.exponent == pytest.approx(0.5, abs=0.2)
    assert all(b > a for a, b in zip(scan.shale_values, scan.shale_values[1:]))


def test_shale_growth_scan_requires_negative_coupling():
    with pytest.raises(ConfigurationError):
        shale_growth_scan(scenario(0.75, 1.0))


def test_renormalized_resolvent_pole_guard():
    from bogolab.bogoliubov import PositivityError
    # the renormalized spectrum sits at xi~^2 = 1 + 4 lambda~ = 1/(1 - 4 lambda);
    # the z-weighted denominator vanishes exactly there
    model = scalar_model(lam=-2.0)
    assert effective_coupling(model) == pytest.approx(-2.0 / 9.0)
    with pytest.raises(PositivityError):
        renormalized_resolvent(model, 1.0 / 9.0)
