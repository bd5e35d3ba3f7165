import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snlslab.estimators import (DegenerateInputError, HypothesisViolation, bootstrap_stderr, default_T_ladder,
                                loglog_svg, mc_norm_moment, power_mean, rows_to_csv, verify_lemma21,
                                verify_probabilistic_strichartz, write_report, zero_pad)
from snlslab.fitting import FitReport, fit_power_law
from snlslab.noise import SmoothingOperator, parse_phi, sample_convolution
from snlslab.presets import gaussian, rough
from snlslab.randomization import RandomizationSpec
from snlslab.spectral import GridSpec, NormSpec, SpectralField, Trajectory, sobolev_norm

G = GridSpec(1, 10.0, 32)


def test_power_mean_trivial():
    assert power_mean(np.zeros(10), 3.0) == 0.0
    for rho in (1.0, 2.0, 7.5):
        assert math.isclose(power_mean(np.full(50, 2.5), rho), 2.5, rel_tol=1e-14)


@settings(max_examples=50, deadline=None)
@given(x=st.lists(st.floats(0, 1e6), min_size=2, max_size=40), rhos=st.lists(st.floats(1, 20), min_size=2, max_size=5))
def test_power_mean_monotone_in_rho(x, rhos):
    vals = [power_mean(x, r) for r in sorted(rhos)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_mc_moment_trivial_samplers():
    norm = NormSpec(0.0, 2.0, 2.0, 1.0)
    zero = mc_norm_moment(lambda rng: [SpectralField.zeros(G)] * 3, norm, 2.0, 30, seed=1)
    assert zero.estimate == 0.0 and zero.stderr == 0.0
    const = SpectralField(G, np.ones(G.shape))
    c = sobolev_norm(const, 0.0, 2.0)  # constant-in-time field on [0, 1]
    for rho in (1.0, 2.0, 5.0):
        est = mc_norm_moment(lambda rng: [const] * 4, norm, rho, 30, seed=1)
        assert math.isclose(est.estimate, c, rel_tol=1e-12)
    with pytest.raises(ValueError):
        mc_norm_moment(lambda rng: [const] * 4, norm, 2.0, 29, seed=1)
    with pytest.raises(ValueError):
        mc_norm_moment(lambda rng: [const] * 4, norm, 0.5, 30, seed=1)


def test_mc_moment_single_mode_closed_form():
    # E ||Psi||^2_{L^2_T L^2_x} = int_0^T lambda^2 t dt = lambda^2 T^2 / 2 (orthonormal basis)
    lam, T = 1.7, 0.8
    phi = SmoothingOperator.single_mode(G, 3, lam)
    norm = NormSpec(0.0, 2.0, 2.0, T)
    est = mc_norm_moment(lambda rng: sample_convolution(phi, 8, T, rng).trajectory, norm, 2.0, 4000, seed=3)
    sq = est.samples ** 2
    assert abs(sq.mean() - lam ** 2 * T ** 2 / 2) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))
    assert math.isclose(est.estimate ** 2, sq.mean(), rel_tol=1e-12)


def test_stderr_shrinks_like_root_n():
    phi = parse_phi("powerlaw:alpha=1.0", G)
    norm = NormSpec(0.0, 4.0, 4.0, 0.5)
    sampler = lambda rng: sample_convolution(phi, 4, 0.5, rng).trajectory  # noqa: E731
    small = mc_norm_moment(sampler, norm, 2.0, 200, seed=4)
    large = mc_norm_moment(sampler, norm, 2.0, 800, seed=4)
    assert 0.35 <= large.stderr / small.stderr <= 0.7


def test_point_estimate_independent_of_bootstrap():
    phi = parse_phi("powerlaw:alpha=1.0", G)
    norm = NormSpec(0.0, 4.0, 4.0, 0.5)
    est = mc_norm_moment(lambda rng: sample_convolution(phi, 4, 0.5, rng).trajectory, norm, 2.0, 60, seed=4)
    assert est.estimate == power_mean(est.samples, 2.0)
    a = bootstrap_stderr(est.samples, 2.0, seed=4, n_boot=100)
    b = bootstrap_stderr(est.samples, 2.0, seed=4, n_boot=100)
    assert a == b and a > 0


def test_rho_monotone_on_same_samples():
    phi = parse_phi("powerlaw:alpha=1.0", G)
    norm = NormSpec(0.0, 4.0, 4.0, 0.5)
    sampler = lambda rng: sample_convolution(phi, 4, 0.5, rng).trajectory  # noqa: E731
    ests = [mc_norm_moment(sampler, norm, rho, 40, seed=2).estimate for rho in (1, 2, 4, 8)]
    assert all(b >= a for a, b in zip(ests, ests[1:]))


def test_mc_moment_thread_independent():
    phi = parse_phi("powerlaw:alpha=1.0", G)
    norm = NormSpec(0.0, 4.0, 4.0, 0.5)
    sampler = lambda rng: sample_convolution(phi, 4, 0.5, rng).trajectory  # noqa: E731
    a = mc_norm_moment(sampler, norm, 2.0, 40, seed=2, threads=1)
    b = mc_norm_moment(sampler, norm, 2.0, 40, seed=2, threads=4)
    assert np.array_equal(a.samples, b.samples) and a.stderr == b.stderr


def test_lemma21_refusals():
    g = GridSpec(2, 8.0, 16)
    with pytest.raises(DegenerateInputError):
        verify_lemma21(SmoothingOperator.zero(g), 0.0, 8, 4, default_T_ladder(), 2.0, 30, seed=1)
    phi = parse_phi("powerlaw:alpha=2.0", g)
    with pytest.raises(HypothesisViolation):
        verify_lemma21(phi, 0.0, math.inf, 4, default_T_ladder(), 2.0, 30, seed=1)
    with pytest.raises(HypothesisViolation):
        verify_lemma21(phi, 0.0, 8, math.inf, default_T_ladder(), 2.0, 30, seed=1)
    g3 = GridSpec(3, 8.0, 8)
    with pytest.raises(HypothesisViolation):
        verify_lemma21(parse_phi("powerlaw:alpha=2.0", g3), 0.0, 8, 7, default_T_ladder(), 2.0, 30, seed=1)


def test_lemma21_small_run_and_determinism():
    g = GridSpec(2, 8.0, 16)
    phi = parse_phi("powerlaw:alpha=2.0", g)
    a = verify_lemma21(phi, 0.0, 8, 4, default_T_ladder(1.0, 5), 2.0, 40, seed=6, M=8)
    assert a.fit.exponent_hat > 0 and a.fit.ci_95[0] > 0
    assert abs(a.doubled_ratio - 2.0) <= 0.1
    assert not a.rho_meets_minkowski
    assert len(a.rows()) == 5 and {"T", "estimate", "stderr", "theta_hat", "ci_lo", "ci_hi"} <= set(a.rows()[0])
    b = verify_lemma21(phi, 0.0, 8, 4, default_T_ladder(1.0, 5), 2.0, 40, seed=6, M=8, threads=3)
    assert json.dumps(a.as_dict(), default=str) == json.dumps(b.as_dict(), default=str)


def test_default_ladder():
    lad = default_T_ladder(2.0)
    assert len(lad) == 8 and math.isclose(lad[0], 0.2) and math.isclose(lad[-1], 2.0)


def test_pstrichartz_zero_and_comparison():
    g = GridSpec(2, 8.0, 32)
    spec = RandomizationSpec()
    norms = [NormSpec(0.0, 20.0, 20.0, 1.0)]
    zero = verify_probabilistic_strichartz(SpectralField.zeros(g), spec, norms, 30, seed=1, M=4, refine=False)
    assert zero[0].coarse.metadata["q90"] == 0.0 and zero[0].deterministic == 0.0
    assert zero[0].q90_change is None
    ent = verify_probabilistic_strichartz(lambda gr: rough(gr, 1.5), spec, norms, 60, seed=1, M=8, grid=g)[0]
    # the unrandomized rough profile has a larger L^20 norm than the typical randomized one
    assert ent.deterministic > ent.coarse.metadata["median"]
    assert ent.deterministic_refined > ent.deterministic
    row = ent.row()
    assert row["q"] == 20.0 and row["q90_refined"] is not None
    with pytest.raises(HypothesisViolation):
        verify_probabilistic_strichartz(SpectralField.zeros(g), spec, [NormSpec(0, math.inf, 4, 1.0)], 30, seed=1)


def test_zero_pad_interpolates():
    g = GridSpec(1, 10.0, 32)
    f = gaussian(g, 1.0, 1.0)
    fine = zero_pad(f, g.refined(2))
    assert math.isclose(sobolev_norm(fine, 0.0, 2.0), sobolev_norm(f, 0.0, 2.0), rel_tol=1e-12)
    assert np.allclose(fine.physical()[::2], f.physical(), atol=1e-12)
    with pytest.raises(ValueError):
        zero_pad(f, GridSpec(1, 5.0, 64))


# ---------------------------------------------------------------- power-law fits

def test_fit_examples():
    xs = np.geomspace(0.1, 10, 8)
    exact = fit_power_law(xs, xs)
    assert math.isclose(exact.exponent_hat, 1.0, abs_tol=1e-12) and exact.r_squared == 1.0
    flat = fit_power_law(xs, np.full(8, 3.0))
    assert abs(flat.exponent_hat) < 1e-12
    rng = np.random.default_rng(0)
    noisy = fit_power_law(xs, xs ** 1.5 * (1 + 0.01 * rng.standard_normal(8)))
    assert abs(noisy.exponent_hat - 1.5) <= 0.05
    assert noisy.ci_95[0] <= 1.5 <= noisy.ci_95[1]


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3, 4], [1, 0, 3, 4])
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3, 4], [1, 2, 3])


@settings(max_examples=40, deadline=None)
@given(ys=st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=12), seed=st.integers(0, 100))
def test_fit_report_invariants(ys, seed):
    xs = np.arange(1, len(ys) + 1, dtype=float)
    rep = fit_power_law(xs, ys, n_boot=200, seed=seed)
    assert rep.ci_95[0] <= rep.exponent_hat <= rep.ci_95[1]
    assert 0.0 <= rep.r_squared <= 1.0
    json.loads(rep.to_json())


def test_fit_with_errors_uses_parametric_bootstrap():
    xs = np.geomspace(1, 10, 6)
    ys = 2 * xs ** 0.5
    tight = fit_power_law(xs, ys, y_err=0.001 * ys)
    loose = fit_power_law(xs, ys, y_err=0.1 * ys)
    assert tight.ci_95[1] - tight.ci_95[0] < loose.ci_95[1] - loose.ci_95[0]


def test_report_writers_are_deterministic(tmp_path):
    rows = [{"T": 0.1, "estimate": 1.5, "flag": True, "missing": None}, {"T": 0.2, "estimate": 2.5, "flag": False,
                                                                           "missing": None}]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == "T,estimate,flag,missing"
    assert text.splitlines()[1] == "0.1,1.5,True,"
    fit = FitReport(0.5, None, 0.1, 0.99, 4, (0.4, 0.6))
    paths = []
    for sub in ("a", "b"):
        paths.append(write_report(tmp_path / sub, "r", rows, {"fit": fit.as_dict(), "x": math.inf}))
        loglog_svg(tmp_path / sub / "r.svg", [1, 2, 3, 4], [1, 1.4, 1.7, 2], fit, "x", "y")
    for a, b in zip(*paths):
        assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "r.svg").read_bytes() == (tmp_path / "b" / "r.svg").read_bytes()
    assert json.loads((tmp_path / "a" / "r.json").read_text())["x"] == "inf"
