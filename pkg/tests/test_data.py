"""Tests for ingestion, splits, and count validation on synthetic CSVs."""
from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from bphaven.data import (
    LeagueConfig,
    Match,
    load_league_configs,
    load_matches,
    normalize_season,
    observed_correlations,
    split_pre_post,
    validate_counts,
)

CANONICAL_HEADER = "league,season,date,home,away,hg,ag,hy,ay"


@pytest.fixture
def toy_config():
    return LeagueConfig(
        league_id="toy_league",
        name="Toy League",
        country="Nowhere",
        tier=1,
        restart_date=dt.date(2020, 6, 1),
        seasons=("2018-2019", "2019-2020"),
        expected_goals_pre=3,
        expected_goals_post=1,
        expected_yellows_pre=2,
        expected_yellows_post=1,
        expected_team_seasons=4,
    )


def write_csv(path, header, rows):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


TOY_ROWS = [
    "toy_league,2018-2019,2018-09-01,AA,BB,2,1,3,2",
    "toy_league,2018-2019,2018-09-08,BB,AA,0,0,,",
    "toy_league,2019-2020,2019-09-01,AA,BB,1,1,1,0",
    "toy_league,2019-2020,2020-06-01,BB,AA,0,2,2,2",
]


class TestLeagueConfigs:
    def test_seventeen_leagues(self):
        configs = load_league_configs()
        assert len(configs) == 17

    def test_restart_dates_and_counts(self):
        configs = load_league_configs()
        gb = configs["german_bundesliga"]
        assert gb.restart_date == dt.date(2020, 5, 16)
        assert (gb.expected_goals_pre, gb.expected_goals_post) == (1448, 82)
        assert gb.expected_team_seasons == 90

    def test_yellow_sample_adjustments(self):
        # five leagues lose pre-restart games to missing card counts,
        # one league loses post-restart games
        configs = load_league_configs()
        assert configs["spanish_la_liga_2"].expected_yellows_pre == 2233 - 42
        assert configs["russian_premier_liga"].expected_yellows_post == 64 - 4
        assert configs["danish_superliga"].expected_yellows_pre == 1108 - 12
        assert configs["turkish_super_lig"].expected_yellows_pre == 1460 - 34
        assert configs["italy_serie_b"].expected_yellows_pre == 2046 - 2
        assert configs["english_league_championship"].expected_yellows_pre == 2673 - 2

    def test_calendar_year_seasons(self):
        configs = load_league_configs()
        assert configs["swedish_allsvenskan"].seasons == (
            "2016", "2017", "2018", "2019", "2020",
        )
        assert configs["norwegian_eliteserien"].seasons[0] == "2016"

    def test_every_league_has_restart_date(self):
        for cfg in load_league_configs().values():
            assert cfg.restart_date.year == 2020


class TestSeasonNormalization:
    @pytest.mark.parametrize(
        "raw,canonical",
        [
            ("2015-16", "2015-2016"),
            ("2015/16", "2015-2016"),
            ("2015-2016", "2015-2016"),
            ("2015/2016", "2015-2016"),
            ("2016", "2016"),
            (" 2019-20 ", "2019-2020"),
        ],
    )
    def test_variants(self, raw, canonical):
        assert normalize_season(raw) == canonical


class TestLoadMatches:
    def test_canonical_roundtrip(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "toy.csv", CANONICAL_HEADER, TOY_ROWS)
        matches, report = load_matches(path, toy_config)
        assert report.rows_in == 4
        assert report.matches_out == 4
        assert report.rejections == []
        assert report.season_counts == {"2018-2019": 2, "2019-2020": 2}

    def test_missing_counts_kept_as_none(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "toy.csv", CANONICAL_HEADER, TOY_ROWS)
        matches, _ = load_matches(path, toy_config)
        blank = [m for m in matches if not m.has_yellows()]
        assert len(blank) == 1
        assert blank[0].has_goals()

    def test_restart_day_flagged_post(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "toy.csv", CANONICAL_HEADER, TOY_ROWS)
        matches, _ = load_matches(path, toy_config)
        on_restart = [m for m in matches if m.date == toy_config.restart_date]
        assert on_restart and all(m.is_post for m in on_restart)
        assert sum(m.is_post for m in matches) == 1

    def test_sorted_by_date_then_home(self, tmp_path, toy_config):
        shuffled = [TOY_ROWS[3], TOY_ROWS[0], TOY_ROWS[2], TOY_ROWS[1]]
        path = write_csv(tmp_path / "toy.csv", CANONICAL_HEADER, shuffled)
        matches, _ = load_matches(path, toy_config)
        keys = [(m.date, m.home_team) for m in matches]
        assert keys == sorted(keys)

    def test_reingest_identical(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "toy.csv", CANONICAL_HEADER, TOY_ROWS)
        first, _ = load_matches(path, toy_config)
        second, _ = load_matches(path, toy_config)
        assert first == second

    def test_upstream_column_names(self, tmp_path, toy_config):
        header = (
            "league,season,date,home_team,away_team,"
            "home_score,away_score,home_yellow_cards,away_yellow_cards"
        )
        rows = ["Toy League,2018-19,2018-09-01,AA,BB,2,1,3,2"]
        path = write_csv(tmp_path / "upstream.csv", header, rows)
        matches, report = load_matches(path, toy_config)
        assert report.rejections == []
        assert matches[0].season_id == "2018-2019"
        assert matches[0].home_goals == 2 and matches[0].home_yellows == 3

    def test_empty_file(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "empty.csv", CANONICAL_HEADER, [])
        matches, report = load_matches(path, toy_config)
        assert matches == [] and report.rows_in == 0 and report.rejections == []

    def test_missing_required_column_raises(self, tmp_path, toy_config):
        path = write_csv(
            tmp_path / "bad.csv", "league,season,home,away,hg,ag", ["x,y,a,b,1,2"]
        )
        with pytest.raises(ValueError, match="missing required columns"):
            load_matches(path, toy_config)


class TestRejections:
    BAD_ROWS = [
        "toy_league,2018-2019,2018-13-45,AA,BB,1,0,,",      # malformed date
        "toy_league,2018-2019,2018-09-01,AA,BB,-1,0,,",     # negative count
        "toy_league,2020-2021,2020-09-12,AA,BB,1,0,,",      # season not whitelisted
        "toy_league,2018-2019,2018-09-01,AA,AA,1,0,,",      # team plays itself
        "other_league,2018-2019,2018-09-01,AA,BB,1,0,,",    # wrong league label
        "toy_league,2018-2019,2018-09-01,,BB,1,0,,",        # missing team
        "toy_league,2018-2019,2018-09-01,AA,BB,1.5,0,,",    # fractional count
    ]

    def test_each_bad_row_logged(self, tmp_path, toy_config):
        path = write_csv(
            tmp_path / "bad.csv", CANONICAL_HEADER, TOY_ROWS + self.BAD_ROWS
        )
        matches, report = load_matches(path, toy_config)
        assert report.rows_in == len(TOY_ROWS) + len(self.BAD_ROWS)
        assert len(matches) == len(TOY_ROWS)
        assert report.rejections_out == len(self.BAD_ROWS)
        # lossless-or-logged
        assert report.rows_in == report.matches_out + report.rejections_out

    def test_rejection_reasons_descriptive(self, tmp_path, toy_config):
        path = write_csv(tmp_path / "bad.csv", CANONICAL_HEADER, self.BAD_ROWS)
        _, report = load_matches(path, toy_config)
        reasons = " | ".join(r for _, r in report.rejections)
        for needle in ("date", "negative", "whitelist", "identical", "league label"):
            assert needle in reasons


def make_match(date, home="AA", away="BB", hg=1, ag=0, hy=None, ay=None, season="2019-2020"):
    return Match(
        league_id="toy_league",
        season_id=season,
        date=date,
        home_team=home,
        away_team=away,
        home_goals=hg,
        away_goals=ag,
        home_yellows=hy,
        away_yellows=ay,
        is_post=False,
    )


class TestSplitPrePost:
    def test_restart_day_is_post(self):
        restart = dt.date(2020, 6, 1)
        matches = [
            make_match(dt.date(2020, 5, 31)),
            make_match(restart),
            make_match(dt.date(2020, 6, 2)),
        ]
        pre, post = split_pre_post(matches, restart)
        assert [m.date for m in pre] == [dt.date(2020, 5, 31)]
        assert [m.date for m in post] == [restart, dt.date(2020, 6, 2)]

    def test_partition_lossless(self):
        restart = dt.date(2020, 6, 1)
        matches = [make_match(dt.date(2020, 5, 1) + dt.timedelta(days=3 * i)) for i in range(30)]
        pre, post = split_pre_post(matches, restart)
        assert len(pre) + len(post) == len(matches)
        assert {id(m) for m in pre} | {id(m) for m in post} == {id(m) for m in matches}

    def test_empty(self):
        assert split_pre_post([], dt.date(2020, 6, 1)) == ([], [])


class TestValidateCounts:
    def build_matching_dataset(self):
        # 3 pre-goal games (one missing yellows), 1 post game: matches the
        # toy config expectations exactly
        return [
            make_match(dt.date(2018, 9, 1), "AA", "BB", hy=3, ay=2, season="2018-2019"),
            make_match(dt.date(2018, 9, 8), "BB", "AA", season="2018-2019"),
            make_match(dt.date(2019, 9, 1), "AA", "BB", hy=1, ay=0),
            make_match(dt.date(2020, 6, 1), "BB", "AA", hy=2, ay=2),
        ]

    def test_all_pass(self, toy_config):
        row = validate_counts(self.build_matching_dataset(), toy_config)
        assert row.ok
        assert (row.goals_pre, row.goals_post) == (3, 1)
        assert (row.yellows_pre, row.yellows_post) == (2, 1)
        assert row.team_seasons == 4

    def test_mismatch_detected(self, toy_config):
        dataset = self.build_matching_dataset()[:-1]
        row = validate_counts(dataset, toy_config)
        assert not row.ok
        assert row.goals_post == 0 and row.expected_goals_post == 1

    def test_missing_goals_excluded_from_goal_sample(self, toy_config):
        dataset = self.build_matching_dataset()
        dataset.append(make_match(dt.date(2019, 10, 1), "AA", "BB", hg=None, ag=None))
        row = validate_counts(dataset, toy_config)
        assert row.goals_pre == 3


class TestObservedCorrelations:
    def test_identical_counts_corr_one(self):
        matches = [
            make_match(dt.date(2019, 9, 1), hg=k, ag=k, hy=k, ay=k) for k in range(1, 8)
        ]
        row = observed_correlations(matches)
        assert row.goals_corr == pytest.approx(1.0)
        assert row.yellows_corr == pytest.approx(1.0)

    def test_independent_poisson_near_zero(self):
        rng = np.random.default_rng(123)
        hg = rng.poisson(1.3, size=20_000)
        ag = rng.poisson(1.1, size=20_000)
        matches = [
            make_match(dt.date(2019, 9, 1), hg=int(a), ag=int(b))
            for a, b in zip(hg, ag)
        ]
        row = observed_correlations(matches)
        assert abs(row.goals_corr) < 0.02
        assert row.degenerate_yellows  # no card counts supplied

    def test_degenerate_variance_flagged(self):
        matches = [make_match(dt.date(2019, 9, 1), hg=1, ag=k) for k in range(5)]
        row = observed_correlations(matches)
        assert row.degenerate_goals and row.goals_corr is None

    def test_no_matches_rejected(self):
        with pytest.raises(ValueError):
            observed_correlations([])
