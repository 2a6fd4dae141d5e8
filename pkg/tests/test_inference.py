"""Tests for posterior post-processing: tables, densities, quadrants."""

import json
import math
from dataclasses import asdict

import numpy as np
import pytest

from bphaven.inference import (
    LeagueFitReport,
    density_export,
    goal_scale_ha,
    goal_scale_pre_post,
    joint_quadrants,
    league_report,
    league_table,
    prob_ha_decline,
    write_arrows_csv,
    write_fit_artifacts,
    write_league_table_csv,
)
from bphaven.sampler import ChainConfig, PosteriorDraws


def make_draws(columns, n_chains=2, n_retained=200, seed=0):
    """PosteriorDraws with prescribed per-parameter columns.

    Each value in ``columns`` is either a scalar (tiled with a small
    alternating wiggle so variances stay positive) or a full
    (n_chains * n_retained,) vector reshaped chain-major.
    """
    names = tuple(columns)
    total = n_chains * n_retained
    mat = np.empty((total, len(names)))
    wiggle = np.where(np.arange(total) % 2 == 0, 1e-3, -1e-3)
    for j, name in enumerate(names):
        v = columns[name]
        if np.ndim(v) == 0:
            mat[:, j] = float(v) + wiggle
        else:
            mat[:, j] = np.asarray(v, dtype=float)
    draws = mat.reshape(n_chains, n_retained, len(names))
    config = ChainConfig(
        n_chains=n_chains, iterations=n_retained + 50, burn_in=50, seed=seed
    )
    return PosteriorDraws(draws=draws, param_names=names, config=config)


def healthy_draws(t_mean, tp_mean, seed=0, n_retained=400):
    """iid-normal synthetic fit that passes the convergence gate."""
    rng = np.random.default_rng(seed)
    total = 2 * n_retained
    return make_draws(
        {
            "mu[0]": rng.normal(0.1, 0.05, size=total),
            "T": rng.normal(t_mean, 0.05, size=total),
            "T_prime": rng.normal(tp_mean, 0.05, size=total),
        },
        n_retained=n_retained,
    )


class TestProbHaDecline:
    def test_identical_vectors_give_zero_both_outcomes(self):
        v = np.array([0.1, 0.2, 0.3])
        assert prob_ha_decline(v, v.copy(), "goals") == 0.0
        assert prob_ha_decline(v, v.copy(), "yellows") == 0.0

    def test_total_separation(self):
        t = np.ones(50)
        tp = np.zeros(50)
        assert prob_ha_decline(t, tp, "goals") == 1.0
        assert prob_ha_decline(t, tp, "yellows") == 0.0
        assert prob_ha_decline(tp, t, "yellows") == 1.0

    def test_hand_counted_fractions(self):
        t = np.array([1.0, 2.0, 3.0, 4.0])
        tp = np.array([0.0, 3.0, 2.0, 5.0])
        assert prob_ha_decline(t, tp, "goals") == 0.5
        assert prob_ha_decline(t, tp, "yellows") == 0.5

    def test_complement_identity_with_ties(self):
        t = np.array([1.0, 1.0, 2.0, 3.0])
        tp = np.array([1.0, 0.5, 2.0, 4.0])
        ties = np.mean(t == tp)
        p_g = prob_ha_decline(t, tp, "goals")
        p_y = prob_ha_decline(t, tp, "yellows")
        assert p_g + p_y == 1.0 - ties

    def test_complement_identity_continuous(self):
        rng = np.random.default_rng(7)
        t = rng.normal(size=1000)
        tp = rng.normal(size=1000)
        assert prob_ha_decline(t, tp, "goals") + prob_ha_decline(
            t, tp, "yellows"
        ) == pytest.approx(1.0, abs=0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            prob_ha_decline(np.ones(3), np.ones(4), "goals")

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no draws"):
            prob_ha_decline(np.array([]), np.array([]), "goals")

    def test_unknown_outcome_rejected(self):
        with pytest.raises(ValueError, match="outcome"):
            prob_ha_decline(np.ones(3), np.ones(3), "points")


class TestGoalScaleHa:
    def test_zero_at_origin(self):
        assert goal_scale_ha(0.0, 0.0) == 0.0

    def test_quarter_ha_closed_form(self):
        assert goal_scale_ha(0.0, 0.25) == pytest.approx(math.expm1(0.25), abs=1e-15)
        assert goal_scale_ha(0.0, 0.25) == pytest.approx(0.2840, abs=5e-5)

    def test_strictly_increasing_in_T(self):
        ts = np.linspace(-1.0, 1.0, 41)
        for mu in (-0.3, 0.0, 0.4):
            vals = [goal_scale_ha(mu, t) for t in ts]
            assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_zero_iff_T_zero(self):
        for mu in (-0.5, 0.0, 0.7):
            assert goal_scale_ha(mu, 0.0) == 0.0
            for t in (-0.2, -1e-9, 1e-9, 0.3):
                assert math.copysign(1, goal_scale_ha(mu, t)) == math.copysign(1, t)
                assert goal_scale_ha(mu, t) != 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            goal_scale_ha(math.nan, 0.1)
        with pytest.raises(ValueError):
            goal_scale_ha(0.1, math.inf)

    def test_pre_post_from_constant_draws(self):
        draws = make_draws({"mu[0]": 0.1, "mu[1]": 0.3, "T": 0.25, "T_prime": 0.1})
        pre, post = goal_scale_pre_post(draws)
        mu_bar = 0.2
        assert pre == pytest.approx(math.exp(mu_bar + 0.25) - math.exp(mu_bar), abs=1e-6)
        assert post == pytest.approx(math.exp(mu_bar + 0.1) - math.exp(mu_bar), abs=1e-6)

    def test_pre_post_requires_intercepts(self):
        draws = make_draws({"T": 0.2, "T_prime": 0.1})
        with pytest.raises(ValueError, match="intercept"):
            goal_scale_pre_post(draws)


class TestLeagueReport:
    def test_means_delta_and_decline(self):
        draws = make_draws({"mu[0]": 0.0, "T": 0.3, "T_prime": 0.1})
        row = league_report("league_a", draws, "goals")
        assert row.T_hat == pytest.approx(0.3, abs=1e-12)
        assert row.T_prime_hat == pytest.approx(0.1, abs=1e-12)
        assert row.delta == row.T_prime_hat - row.T_hat  # exact
        assert row.p_decline == 1.0
        assert not row.missing

    def test_pct_change_definition(self):
        draws = make_draws({"T": 0.25, "T_prime": 0.1})
        row = league_report("x", draws, "goals")
        assert row.pct_change == pytest.approx(100.0 * row.delta / abs(row.T_hat))
        assert row.pct_change < 0

    def test_pct_change_negative_baseline(self):
        # yellow-card HA: T = -0.4 moving to -0.1 is a +75% change
        draws = make_draws({"T": -0.4, "T_prime": -0.1})
        row = league_report("x", draws, "yellows")
        assert row.pct_change == pytest.approx(75.0, abs=0.1)
        assert row.p_decline == 1.0

    def test_healthy_chains_pass_gate(self):
        row = league_report("x", healthy_draws(0.3, 0.1), "goals")
        assert row.converged
        assert row.max_r_hat <= 1.05
        assert row.min_ess > 100

    def test_degenerate_chains_fail_gate(self):
        # constant columns have zero variance so r_hat is undefined
        draws = make_draws({"T": np.full(400, 0.3), "T_prime": np.full(400, 0.1)})
        row = league_report("x", draws, "goals")
        assert math.isnan(row.max_r_hat)
        assert not row.converged

    def test_missing_post_parameter_rejected(self):
        draws = make_draws({"mu[0]": 0.0, "T": 0.3})
        with pytest.raises(ValueError, match="T_prime"):
            league_report("x", draws, "goals")


class TestLeagueTable:
    def test_sorted_by_p_decline_descending(self):
        rng = np.random.default_rng(3)
        fits = {}
        for league_id, gap in (("aa", 0.0), ("bb", 0.3), ("cc", 0.08)):
            total = 800
            fits[league_id] = make_draws(
                {
                    "T": rng.normal(0.3, 0.1, size=total),
                    "T_prime": rng.normal(0.3 - gap, 0.1, size=total),
                },
                n_retained=400,
            )
        rows = league_table(fits, "goals")
        assert [r.league_id for r in rows] == ["bb", "cc", "aa"]
        ps = [r.p_decline for r in rows]
        assert ps == sorted(ps, reverse=True)

    def test_row_count_matches_league_count(self):
        fits = {f"l{i}": make_draws({"T": 0.2, "T_prime": 0.1}) for i in range(5)}
        assert len(league_table(fits, "goals")) == 5

    def test_ties_break_by_league_id(self):
        draws = make_draws({"T": 0.2, "T_prime": 0.1})
        fits = {"zz": draws, "aa": draws, "mm": draws}
        rows = league_table(fits, "goals")
        assert [r.league_id for r in rows] == ["aa", "mm", "zz"]

    def test_identical_draws_give_identical_rows_modulo_id(self):
        draws = make_draws({"T": 0.2, "T_prime": 0.1})
        rows = league_table({"left": draws, "right": draws}, "goals")
        a, b = (asdict(r) for r in rows)
        a.pop("league_id")
        b.pop("league_id")
        assert a == b

    def test_missing_league_marked_not_dropped(self):
        fits = {"present": healthy_draws(0.3, 0.1)}
        rows = league_table(fits, "goals", expected_leagues=["present", "absent"])
        assert len(rows) == 2
        marker = [r for r in rows if r.league_id == "absent"]
        assert len(marker) == 1
        assert marker[0].missing
        assert math.isnan(marker[0].T_hat)
        assert rows[-1].league_id == "absent"  # missing rows sort last


class TestDensityExport:
    def test_uniform_draws_flat_histogram(self):
        rng = np.random.default_rng(11)
        t = rng.uniform(0.0, 1.0, size=200_000)
        tp = rng.uniform(0.0, 1.0, size=200_000)
        export = density_export(t, tp, bins=10)
        heights = [b.height for b in export.tables["T"]]
        assert max(heights) - min(heights) < 0.1
        assert np.mean(heights) == pytest.approx(1.0, abs=0.02)

    def test_point_mass_single_occupied_bin(self):
        t = np.full(500, 1.7)
        tp = np.full(500, 0.3)
        export = density_export(t, tp, bins=10)
        for name in ("T", "T_prime", "T_minus_T_prime"):
            occupied = [b for b in export.tables[name] if b.height > 0]
            assert len(occupied) == 1
            assert export.total_mass(name) == pytest.approx(1.0, abs=1e-9)

    def test_masses_integrate_to_one(self):
        rng = np.random.default_rng(5)
        export = density_export(
            rng.normal(size=3000), rng.normal(0.5, 2.0, size=3000), bins=37
        )
        for name in ("T", "T_prime", "T_minus_T_prime"):
            assert export.total_mass(name) == pytest.approx(1.0, abs=1e-9)

    def test_heights_nonnegative(self):
        rng = np.random.default_rng(6)
        export = density_export(rng.normal(size=500), rng.normal(size=500), bins=12)
        for table in export.tables.values():
            assert all(b.height >= 0 for b in table)

    def test_diff_vector_is_elementwise_difference(self):
        t = np.array([0.5, 0.2, 0.9] * 10)
        tp = np.array([0.1, 0.4, 0.3] * 10)
        export = density_export(t, tp, bins=10)
        np.testing.assert_array_equal(export.diff_draws, t - tp)

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError, match="10 bins"):
            density_export(np.ones(5), np.ones(5), bins=9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no draws"):
            density_export(np.array([]), np.array([]), bins=10)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            density_export(np.ones(4), np.ones(5), bins=10)


def report_row(league_id, outcome, t_hat, tp_hat, missing=False):
    if missing:
        return LeagueFitReport.missing_marker(league_id, outcome)
    delta = tp_hat - t_hat
    return LeagueFitReport(
        league_id=league_id,
        outcome=outcome,
        T_hat=t_hat,
        T_prime_hat=tp_hat,
        delta=delta,
        pct_change=100.0 * delta / abs(t_hat) if t_hat else float("nan"),
        p_decline=0.5,
        max_r_hat=1.0,
        min_ess=1000.0,
        converged=True,
    )


class TestJointQuadrants:
    def quadrant_fixture(self):
        # one league per quadrant, named for its expected bucket
        goals = [
            report_row("both_down", "goals", 0.3, 0.1),
            report_row("g_up_y_down", "goals", 0.1, 0.3),
            report_row("both_up", "goals", 0.1, 0.3),
            report_row("g_down_y_up", "goals", 0.3, 0.1),
        ]
        yellows = [
            report_row("both_down", "yellows", -0.4, -0.1),
            report_row("g_up_y_down", "yellows", -0.4, -0.1),
            report_row("both_up", "yellows", -0.1, -0.4),
            report_row("g_down_y_up", "yellows", -0.1, -0.4),
        ]
        return goals, yellows

    def test_counts_one_per_quadrant(self):
        goals, yellows = self.quadrant_fixture()
        report = joint_quadrants(goals, yellows)
        assert report.counts() == (1, 1, 1, 1)
        assert len(report.arrows) == 4
        assert sum(report.counts()) == len(report.arrows)

    def test_arrow_endpoints_from_posterior_means(self):
        goals, yellows = self.quadrant_fixture()
        report = joint_quadrants(goals, yellows)
        arrow = {a.league_id: a for a in report.arrows}["both_down"]
        assert arrow.goals_pre == 0.3
        assert arrow.goals_post == 0.1
        assert arrow.yellows_pre == -0.4
        assert arrow.yellows_post == -0.1
        assert arrow.goals_declined and arrow.yellows_declined

    def test_equal_means_zero_length_arrow(self):
        goals = [report_row("same", "goals", 0.2, 0.2)]
        yellows = [report_row("same", "yellows", -0.3, -0.3)]
        report = joint_quadrants(goals, yellows)
        a = report.arrows[0]
        assert a.goals_pre == a.goals_post
        assert a.yellows_pre == a.yellows_post
        assert not a.goals_declined and not a.yellows_declined
        assert report.both_up == 1

    def test_league_mismatch_rejected(self):
        goals = [report_row("aa", "goals", 0.3, 0.1)]
        yellows = [report_row("bb", "yellows", -0.4, -0.1)]
        with pytest.raises(ValueError, match="aa.*bb|different leagues"):
            joint_quadrants(goals, yellows)

    def test_missing_fit_rejected(self):
        goals = [report_row("aa", "goals", 0.3, 0.1)]
        yellows = [report_row("aa", "yellows", 0, 0, missing=True)]
        with pytest.raises(ValueError, match="missing"):
            joint_quadrants(goals, yellows)

    def test_duplicate_league_rejected(self):
        goals = [report_row("aa", "goals", 0.3, 0.1)] * 2
        yellows = [report_row("aa", "yellows", -0.4, -0.1)]
        with pytest.raises(ValueError, match="duplicate"):
            joint_quadrants(goals, yellows)

    def test_seventeen_league_shape(self):
        rng = np.random.default_rng(2)
        ids = [f"league_{i:02d}" for i in range(17)]
        goals = [report_row(i, "goals", rng.normal(0.2, 0.1), rng.normal(0.0, 0.1)) for i in ids]
        yellows = [report_row(i, "yellows", rng.normal(-0.3, 0.1), rng.normal(-0.1, 0.1)) for i in ids]
        report = joint_quadrants(goals, yellows)
        assert len(report.arrows) == 17
        assert sum(report.counts()) == 17


class TestWriters:
    def test_fit_artifact_files_and_naming(self, tmp_path):
        draws = healthy_draws(0.3, 0.1)
        paths = write_fit_artifacts(tmp_path, "austrian_bundesliga", "goals", "zero", draws)
        stem = "austrian_bundesliga_goals_zero"
        assert paths["summary"].name == f"{stem}.summary.csv"
        assert paths["density"].name == f"{stem}.density.csv"
        assert paths["draws"].name == f"{stem}.draws.csv"
        assert paths["report"].name == f"{stem}.json"
        for p in paths.values():
            assert p.exists()

    def test_summary_rows_cover_every_parameter(self, tmp_path):
        draws = healthy_draws(0.3, 0.1)
        paths = write_fit_artifacts(tmp_path, "x", "goals", "zero", draws)
        lines = paths["summary"].read_text().strip().splitlines()
        assert lines[0].startswith("param,mean,sd")
        assert len(lines) == 1 + len(draws.param_names)

    def test_density_rows_three_params_times_bins(self, tmp_path):
        draws = healthy_draws(0.3, 0.1)
        paths = write_fit_artifacts(tmp_path, "x", "goals", "zero", draws, bins=12)
        lines = paths["density"].read_text().strip().splitlines()
        assert len(lines) == 1 + 3 * 12

    def test_report_bundle_round_trips(self, tmp_path):
        draws = healthy_draws(0.3, 0.1, seed=4)
        paths = write_fit_artifacts(
            tmp_path, "x", "goals", "zero", draws, extra_manifest={"seed": 99}
        )
        bundle = json.loads(paths["report"].read_text())
        assert bundle["league_id"] == "x"
        assert bundle["covariance_mode"] == "zero"
        assert bundle["seed"] == 99
        row = bundle["table_row"]
        assert row["delta"] == row["T_prime_hat"] - row["T_hat"]
        assert "goals_per_game_ha" in bundle
        assert bundle["goals_per_game_ha"]["pre"] > bundle["goals_per_game_ha"]["post"]

    def test_yellows_bundle_has_no_goal_scale(self, tmp_path):
        draws = healthy_draws(-0.3, -0.1)
        paths = write_fit_artifacts(tmp_path, "x", "yellows", "free", draws)
        bundle = json.loads(paths["report"].read_text())
        assert "goals_per_game_ha" not in bundle

    def test_artifacts_byte_identical_on_rewrite(self, tmp_path):
        draws = healthy_draws(0.3, 0.1, seed=8)
        first = write_fit_artifacts(tmp_path / "a", "x", "goals", "zero", draws)
        second = write_fit_artifacts(tmp_path / "b", "x", "goals", "zero", draws)
        for kind in first:
            assert first[kind].read_bytes() == second[kind].read_bytes()

    def test_league_table_csv(self, tmp_path):
        rows = [
            report_row("aa", "goals", 0.3, 0.1),
            LeagueFitReport.missing_marker("bb", "goals"),
        ]
        path = tmp_path / "table.csv"
        write_league_table_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",")[:3] == ["league_id", "outcome", "T_hat"]
        assert len(lines) == 3
        assert lines[2].split(",")[0] == "bb"
        assert lines[2].split(",")[-1] == "1"  # missing flag
        assert "nan" in lines[2]

    def test_arrows_csv(self, tmp_path):
        goals = [report_row("aa", "goals", 0.3, 0.1)]
        yellows = [report_row("aa", "yellows", -0.4, -0.1)]
        report = joint_quadrants(goals, yellows)
        path = tmp_path / "arrows.csv"
        write_arrows_csv(path, report)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "league_id,yellows_pre,goals_pre,yellows_post,goals_post"
        assert lines[1].startswith("aa,")
