import math
import warnings

import numpy as np
import pytest

from accelstab.errors import EmptyTrace, NonPositiveGap, ValidationError, WindowTooNarrow
from accelstab.harness import (
    DEFAULT_GRID,
    PUBLISHED_TABLE,
    TABLE_HEADER,
    TRACE_HEADER,
    DetectorSettings,
    DivergenceCriterion,
    RunConfig,
    Trace,
    TraceRecord,
    compare_schemes,
    default_x0,
    detect_divergence,
    first_below,
    fit_rate,
    measure_rk4_order,
    reference_trace,
    reproduce_divergence_table,
    run_trajectory,
    table_from_csv,
    table_to_csv,
    traces_from_csv,
    traces_to_csv,
)
from accelstab.objective import build_objective, log_spaced_objective, suboptimality
from accelstab.schemes import SchemeKind, SchemeParams
from accelstab.stability import divergence_bound

EI = SchemeKind.EXPLICIT_IMPLICIT


def synthetic(f, k0=1):
    f = np.asarray(f, dtype=float)
    k = np.arange(k0, k0 + len(f))
    return Trace(k, 0.01 * k, f, np.sqrt(f))


def run(scheme, p, delta, L, iters, dim=5, stride=1, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_trajectory(RunConfig(scheme, SchemeParams(p, 1.0, delta), iters, stride=stride, **kw),
                              log_spaced_objective(dim, L))


class TestRunTrajectory:
    def test_initial_gap_is_one(self):
        obj = log_spaced_objective(5, 10.0)
        assert suboptimality(obj, default_x0(obj)) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("scheme", ["explicit", "implicit", "explicit-implicit", "rk4", "nesterov"])
    def test_start_at_minimizer(self, scheme):
        obj = log_spaced_objective(5, 10.0)
        tr = run_trajectory(RunConfig(scheme, SchemeParams(3, 1.0, 0.01), 200, x0=obj.x_star), obj)
        assert np.all(tr.f_gap == 0.0)

    @pytest.mark.parametrize("scheme", ["explicit", "implicit", "explicit-implicit", "rk4", "nesterov"])
    def test_modal_matches_direct(self, scheme, rng):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        obj = build_objective(q @ np.diag([1.0, 2.0, 5.0, 10.0]) @ q.T, rng.standard_normal(4))
        cfg = dict(scheme=scheme, params=SchemeParams(3, 1.0, 0.01), iters=500, stride=7)
        a = run_trajectory(RunConfig(**cfg), obj)
        b = run_trajectory(RunConfig(**cfg, engine="direct"), obj)
        np.testing.assert_array_equal(a.k, b.k)
        np.testing.assert_allclose(a.f_gap, b.f_gap, rtol=1e-9, atol=1e-14)
        np.testing.assert_allclose(a.final_x, b.final_x, atol=1e-9)

    def test_zero_budget_is_empty(self):
        tr = run("explicit", 3, 0.01, 10.0, 0)
        assert len(tr) == 0
        assert tr.to_csv() == TRACE_HEADER + "\n"

    def test_stride_and_last_record(self):
        tr = run("implicit", 3, 0.01, 10.0, 1003, stride=10)
        assert tr.k[0] == 1 and tr.k[-1] == 1004
        assert np.all(np.diff(tr.k)[:-1] == 10)

    def test_default_stride(self):
        assert RunConfig("explicit", SchemeParams(3), 10 ** 6).effective_stride == 10
        assert RunConfig("explicit", SchemeParams(3), 500).effective_stride == 1

    def test_blow_up_keeps_partial_trace(self):
        tr = run("explicit", 3, 0.01, 10.0, 100_000)
        assert tr.nonfinite
        assert not math.isfinite(tr.f_gap[-1])
        assert np.all(np.isfinite(tr.f_gap[:-1]))

    def test_deterministic(self):
        a = run(EI, 3, 0.01, 10.0, 5000)
        b = run(EI, 3, 0.01, 10.0, 5000)
        assert a.to_csv() == b.to_csv()

    def test_warns_outside_c_regime(self):
        obj = log_spaced_objective(2, 10.0)
        with pytest.warns(UserWarning):
            run_trajectory(RunConfig(EI, SchemeParams(3, 1e6, 0.1), 5), obj)

    @pytest.mark.parametrize("kw", [dict(iters=-1), dict(iters=5, stride=0), dict(iters=5, k0=0),
                                    dict(iters=5, engine="gpu")])
    def test_bad_config(self, kw):
        with pytest.raises(ValidationError):
            RunConfig("explicit", SchemeParams(3), **kw)

    def test_nesterov_step_checked(self):
        obj = log_spaced_objective(2, 10.0)
        with pytest.raises(ValidationError):
            run_trajectory(RunConfig("nesterov", SchemeParams(3), 5, nesterov_step=0.2), obj)

    def test_implicit_p5_decreases(self):
        tr = run("implicit", 5, 0.01, 10.0, 10_000, dim=1)
        assert tr.f_gap[-1] < tr.f_gap[0]
        # the gap underflows to zero near t = 7.5, so fit before that
        assert fit_rate(tr, (0.1, 1.0)) <= -3.0

    @pytest.mark.parametrize("p", [2, 3, 5])
    def test_implicit_no_new_highs_after_warm_up(self, p):
        tr = run("implicit", p, 0.01, 10.0, 20_000)
        f = tr.f_gap[tr.k >= 100]
        assert np.all(f[1:] <= np.maximum.accumulate(f)[:-1] * (1 + 1e-12))

    def test_explicit_implicit_decreases_then_grows(self):
        tr = run(EI, 3, 0.01, 10.0, 50_000, stride=10)
        early = tr.f_gap[(tr.k > 1000) & (tr.k < 20_000)]
        assert early.max() < tr.f_gap[0]
        assert tr.f_gap[-1] > 1e3 * tr.f_gap[tr.k <= 44_000].min()


class TestDetector:
    def test_constant_zero(self):
        assert not detect_divergence(synthetic(np.zeros(300))).diverged

    def test_geometric_growth(self):
        v = detect_divergence(synthetic(2.0 ** np.arange(60) * 1e-30))
        assert v.diverged and v.criterion is DivergenceCriterion.MONOTONE_GROWTH_WINDOW
        assert v.empirical_k == 50

    def test_threshold(self):
        f = np.ones(100)
        f[40] = 10.5
        v = detect_divergence(synthetic(f))
        assert v.criterion is DivergenceCriterion.GAP_EXCEEDS_INITIAL and v.empirical_k == 41

    def test_threshold_uses_floor_of_one(self):
        f = np.full(100, 1e-3)
        f[30] = 5.0
        assert not detect_divergence(synthetic(f)).diverged

    def test_non_finite_first(self):
        f = np.ones(100)
        f[10] = np.inf
        f[5] = 50.0
        v = detect_divergence(synthetic(f))
        assert v.empirical_k == 6
        f[5] = 1.0
        assert detect_divergence(synthetic(f)).criterion is DivergenceCriterion.NON_FINITE

    def test_rise_below_earlier_peak_ignored(self):
        # a slow rise that stays under an earlier value is an oscillation
        f = np.concatenate([np.linspace(1.0, 1e-6, 200), np.linspace(1e-6, 1e-3, 80), np.linspace(1e-3, 1e-7, 200)])
        assert not detect_divergence(synthetic(f)).diverged

    def test_empty(self):
        with pytest.raises(EmptyTrace):
            detect_divergence(synthetic([]))

    def test_p4_run(self):
        v = detect_divergence(run(EI, 4, 0.01, 10.0, 2500))
        assert 1482 <= v.empirical_k <= 1682

    def test_explicit_diverges_first(self):
        ke = detect_divergence(run("explicit", 3, 0.01, 10.0, 50_000)).empirical_k
        kei = detect_divergence(run(EI, 3, 0.01, 10.0, 50_000)).empirical_k
        assert ke < kei

    def test_custom_settings(self):
        f = 1.1 ** np.arange(30) * 1e-6
        assert not detect_divergence(synthetic(f)).diverged
        assert detect_divergence(synthetic(f), DetectorSettings(window=20)).empirical_k == 20


class TestFitRate:
    def test_exact_power_law(self):
        t = np.logspace(-2, 2, 500)
        tr = Trace(np.arange(len(t)), t, t ** -3.0, t)
        assert fit_rate(tr, (0.1, 100.0)) == pytest.approx(-3.0, abs=1e-6)

    def test_narrow_window(self):
        t = np.logspace(0, 2, 50)
        tr = Trace(np.arange(50), t, 1 / t, t)
        with pytest.raises(WindowTooNarrow):
            fit_rate(tr, (1.0, 5.0))

    def test_non_positive(self):
        t = np.logspace(0, 2, 50)
        f = 1 / t
        f[-1] = 0.0
        with pytest.raises(NonPositiveGap):
            fit_rate(Trace(np.arange(50), t, f, t), (1.0, 100.0))

    def test_reference_p4(self):
        obj = build_objective([[1.0]], [0.0])
        tr = reference_trace(SchemeParams(4, 1.0, 0.01), obj, [1.0], 50.0, record_every=10)
        assert fit_rate(tr, (5.0, 50.0)) <= -3.5

    def test_rk4_order(self):
        assert measure_rk4_order() == pytest.approx(4.0, abs=0.3)


class TestCsv:
    def test_trace_round_trip(self):
        tr = run(EI, 3, 0.01, 10.0, 3000, stride=3)
        text = tr.to_csv()
        assert text.splitlines()[0] == "k,t,f_gap,x_dist"
        assert Trace.from_csv(text).to_csv() == text

    def test_trace_round_trip_with_blow_up(self):
        tr = run("explicit", 3, 0.01, 10.0, 100_000, stride=100)
        text = tr.to_csv()
        back = Trace.from_csv(text)
        assert back.to_csv() == text and back.nonfinite

    def test_records(self):
        tr = Trace.from_records([TraceRecord(1, 0.01, 2.0, 1.0), TraceRecord(2, 0.02, 1.0, 0.5)])
        assert list(tr)[1] == TraceRecord(2, 0.02, 1.0, 0.5)
        assert tr[0].f_gap == 2.0

    def test_bad_header(self):
        with pytest.raises(ValidationError):
            Trace.from_csv("a,b\n")

    def test_table_round_trip(self):
        rows = reproduce_divergence_table(max_empirical_iters=0)
        text = table_to_csv(rows)
        assert text.splitlines()[0] == TABLE_HEADER
        assert table_to_csv(table_from_csv(text)) == text

    def test_compare_round_trip(self):
        obj = log_spaced_objective(3, 10.0)
        traces = compare_schemes(["rk4", "explicit-implicit"], SchemeParams(4, 1.0, 0.01), obj, 300, stride=5)
        text = traces_to_csv(traces)
        assert traces_to_csv(traces_from_csv(text)) == text


class TestTable:
    def test_analytic_values(self):
        rows = reproduce_divergence_table(max_empirical_iters=0)
        assert [(r.p, r.L, r.delta) for r in rows] == list(DEFAULT_GRID)
        for r in rows:
            assert abs(r.analytic_bound - PUBLISHED_TABLE[(r.p, r.L, r.delta)]) <= 2
            assert r.status.startswith("skipped")

    def test_assumption_flagged(self):
        rows = {(r.p, r.L, r.delta): r for r in reproduce_divergence_table(max_empirical_iters=0)}
        assert rows[(4, 100.0, 0.01)].status == "skipped+assumption"
        assert rows[(4, 10.0, 0.01)].status == "skipped"

    def test_empty_grid(self):
        assert table_to_csv(reproduce_divergence_table(grid=[])) == TABLE_HEADER + "\n"

    def test_custom_row(self):
        (row,) = reproduce_divergence_table(grid=[(5, 10.0, 0.1)], max_empirical_iters=0)
        assert row.analytic_bound == pytest.approx(11.70, abs=0.005)

    def test_p2_rejected(self):
        with pytest.raises(ValidationError):
            reproduce_divergence_table(grid=[(2, 10.0, 0.01)])

    def test_empirical_sandwich(self):
        rows = reproduce_divergence_table(max_empirical_iters=200_000)
        ran = [r for r in rows if r.empirical_k is not None]
        assert len(ran) == 6
        for r in ran:
            assert r.empirical_k >= r.first_unstable_k
            published = PUBLISHED_TABLE[(r.p, r.L, r.delta)]
            assert abs(r.empirical_k - published) <= max(100, 0.01 * published)

    @pytest.mark.parametrize("row", [(3, 10.0, 0.01), (4, 10.0, 0.01), (4, 100.0, 0.001)])
    def test_half_bound_below_initial(self, row):
        p, L, delta = row
        bound = divergence_bound(SchemeParams(p, 1.0, delta), L, check=False)
        half = math.floor(0.5 * bound)
        tr = run(EI, p, delta, L, half)
        assert tr.k[-1] == half + 1
        assert tr.f_gap[tr.k == half][0] < tr.f_gap[0]


class TestCompare:
    def test_baseline_added(self):
        obj = log_spaced_objective(3, 10.0)
        traces = compare_schemes(["rk4"], SchemeParams(4, 1.0, 0.01), obj, 100)
        assert set(traces) == {"rk4", "nesterov"}

    def test_common_axis(self):
        obj = log_spaced_objective(3, 10.0)
        traces = compare_schemes(["ode", "explicit-implicit"], SchemeParams(3, 1.0, 0.01), obj, 2000,
                                 stride=10, include_baseline=False)
        np.testing.assert_array_equal(traces["ode"].k, traces["explicit-implicit"].k)

    def test_ode_tracks_scheme_early(self):
        obj = log_spaced_objective(5, 10.0)
        traces = compare_schemes(["ode", "explicit-implicit"], SchemeParams(3, 1.0, 0.01), obj, 2000,
                                 stride=10, include_baseline=False)
        ode, ei = traces["ode"].f_gap, traces["explicit-implicit"].f_gap
        sel = slice(10, 60)
        np.testing.assert_allclose(ei[sel], ode[sel], rtol=0.5)

    def test_from_minimizer(self):
        obj = log_spaced_objective(3, 10.0)
        traces = compare_schemes(["rk4", "explicit", "implicit"], SchemeParams(3, 1.0, 0.01), obj, 100,
                                 x0=obj.x_star)
        for tr in traces.values():
            assert np.all(tr.f_gap == 0.0)

    def test_first_below(self):
        tr = synthetic([1.0, 0.5, 1e-9, 1e-10])
        assert first_below(tr, 1e-8) == 3
        assert first_below(tr, 1e-12) is None
