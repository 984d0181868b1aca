"""Transversality defects, certification searches, and submersion margins."""

import math

import numpy as np
import pytest

from pencillab._num import canonical_json
from pencillab.errors import DegenerateGradient
from pencillab.germ import differential_sample, parse_germ
from pencillab.regularity import (critical_value_isolation_scan,
                                  d_regularity_search, defect_from_directions,
                                  lambda_diagnostic, phase_margin_from_fields,
                                  radial_lambda_scan, strong_milnor_check,
                                  transversality_defect,
                                  tube_sphere_transversality)


def test_defect_is_one_for_linear_germ():
    # members of the pencil of f = z1 are flat half-planes through the
    # origin, orthogonal to every sphere
    g = parse_germ("z1", 2)
    rng = np.random.default_rng(0)
    for _ in range(6):
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        assert abs(transversality_defect(g, z) - 1.0) < 1e-14


def test_defect_zero_for_radially_tangent_stub():
    # both Re f and Im f are radial functions, so the phase gradient is
    # radial and the member is tangent to the sphere
    g = parse_germ("z1*zbar1 + i*z1^2*zbar1^2", 1)
    assert transversality_defect(g, np.array([0.5 + 0.1j])) == 0.0


def test_defect_degenerate_gradient_stub():
    g = parse_germ("z1*zbar1 + z2*zbar2", 2)
    with pytest.raises(DegenerateGradient):
        transversality_defect(g, np.array([0.3 + 0.1j, 0.2 - 0.4j]))


def test_defect_matches_angle_oracle():
    # defect = |sin(angle between grad_theta and the sphere normal)|
    g = parse_germ("z1^2 + z2^3", 2)
    rng = np.random.default_rng(1)
    for _ in range(6):
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        ds = differential_sample(g, z)
        gt = ds.grad_theta / np.linalg.norm(ds.grad_theta)
        nx = ds.point / np.linalg.norm(ds.point)
        cosang = float(np.clip(gt @ nx, -1.0, 1.0))
        want = abs(math.cos(math.acos(cosang) - math.pi / 2))
        got = transversality_defect(g, z)
        assert abs(got - want) < 1e-12
        assert abs(defect_from_directions(ds.grad_theta, ds.point) - got) < 1e-14


def test_dreg_search_linear_is_exactly_one():
    g = parse_germ("z1", 2)
    rep = d_regularity_search(g, 0.5, budget=2000, seed=0, polish_runs=5)
    assert rep.verdict is True
    assert abs(rep.min_defect - 1.0) < 1e-10
    assert rep.usable > 0


def test_dreg_search_flags_tangency_stub():
    g = parse_germ("z1*zbar1 + i*z1^2*zbar1^2", 1)
    rep = d_regularity_search(g, 0.5, budget=1000, seed=0, polish_runs=0)
    assert rep.verdict is False
    assert rep.min_defect < rep.pass_threshold


def test_dreg_search_deterministic_bytes():
    g = parse_germ("z1^2 + z2^3", 2)
    a = d_regularity_search(g, 0.5, budget=3000, seed=7, polish_runs=3)
    b = d_regularity_search(g, 0.5, budget=3000, seed=7, polish_runs=3)
    assert canonical_json(a.to_json_dict()) == canonical_json(b.to_json_dict())


def test_dreg_histogram_accounts_for_usable():
    g = parse_germ("z1^2 + z2^3", 2)
    rep = d_regularity_search(g, 0.5, budget=2000, seed=3, polish_runs=0)
    assert sum(rep.histogram) == rep.usable


def test_dreg_custom_metric_changes_normal():
    g = parse_germ("z1^2 + z2^3", 2)
    Q = np.diag([1.0, 2.0, 1.0, 2.0])
    rep = d_regularity_search(g, 0.5, Q=Q, budget=1500, seed=2, polish_runs=0)
    assert rep.to_json_dict()["metric"] == "custom"
    assert 0.0 < rep.min_defect <= 1.0


def test_lambda_diagnostic_closed_form():
    # f = z1^2: lambda' = f * conj(2 z1 * z1) = 2 |z1|^4, argument 0
    g = parse_germ("z1^2", 1)
    d = lambda_diagnostic(g, np.array([1.0 + 0.0j]))
    assert abs(d.lambda_prime - 2.0) < 1e-14
    assert abs(d.arg_lambda_prime) < 1e-14
    assert d.colinearity < 1e-14
    assert d.condition_ok
    d2 = lambda_diagnostic(g, np.array([0.5 * np.exp(0.7j)]))
    assert abs(d2.lambda_prime - 2.0 * 0.5 ** 4) < 1e-14


def test_radial_lambda_scan_real_directions():
    g = parse_germ("z1^2 + z2^2", 2)
    radii = [0.5 * 2.0 ** (-k) for k in range(8)]
    for d in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0]):
        entries = radial_lambda_scan(g, np.array(d, dtype=complex), radii)
        for e in entries:
            assert e.error is None
            assert abs(e.arg_lambda_prime) < 1e-9


def test_phase_margin_closed_form_rows():
    # orthogonal rows: second singular value is the smaller row norm
    x = np.array([1.0, 0.0, 0.0, 0.0])
    v = np.array([0.0, 2.0, 0.0, 0.0])
    m = phase_margin_from_fields(x[None, :], v[None, :])
    assert abs(m[0] - 1.0) < 1e-14


def test_strong_milnor_twisted_pair_is_one():
    # f = z1 * conj(z2): the phase gradient is sphere-tangent with
    # r * |grad_theta| >= 2, so the margin saturates at 1 exactly
    g = parse_germ("z1*zbar2", 2)
    rep = strong_milnor_check(g, 1.0, budget=2000, seed=0)
    assert rep.verdict is True
    assert abs(rep.min_value - 1.0) < 1e-12


def test_strong_milnor_linear_positive():
    g = parse_germ("z1", 2)
    rep = strong_milnor_check(g, 0.5, budget=2000, seed=0)
    assert rep.verdict is True
    assert rep.min_value > 0.5


def test_strong_milnor_constant_phase_margin_zero():
    # phase of f = |z1|^2 is constant, so the restricted map is singular
    g = parse_germ("z1*zbar1", 1)
    rep = strong_milnor_check(g, 1.0, budget=500, seed=0)
    assert rep.verdict is False
    assert rep.min_value == 0.0


def test_tube_sphere_transversality_linear():
    g = parse_germ("z1", 2)
    rep = tube_sphere_transversality(g, 0.5, 0.05, budget=2000, seed=0)
    assert rep.verdict is True
    assert rep.min_value > 0.0


def test_tube_sphere_requires_eta_below_radius():
    g = parse_germ("z1", 2)
    with pytest.raises(ValueError):
        tube_sphere_transversality(g, 0.5, 0.5)
    with pytest.raises(ValueError):
        tube_sphere_transversality(g, 0.5, 0.0)


def test_critical_value_isolation_positive_minima():
    g = parse_germ("z1^2 + z2^3", 2)
    rep = critical_value_isolation_scan(g, 0.5, budget=2000, seed=0)
    assert rep.verdict is True
    assert rep.min_value > 0.0
    g2 = parse_germ("z1*zbar2", 2)
    rep2 = critical_value_isolation_scan(g2, 0.5, budget=2000, seed=0)
    assert rep2.verdict is True
    assert rep2.min_value > 0.0


def test_milnor_tally_no_violations_for_brieskorn():
    g = parse_germ("z1^2 + z2^3", 2)
    rep = d_regularity_search(g, 0.5, budget=3000, seed=0, polish_runs=0,
                              collect_milnor=True)
    assert rep.milnor is not None
    assert rep.milnor["violations"] == 0
    assert rep.milnor["checked"] > 0
