"""Shared fixtures: a synthetic two-league dataset with known sample counts."""
import csv
import datetime as dt
import json
from types import SimpleNamespace

import numpy as np
import pytest


def _season_rows(rng, league, season, start, home_rate, away_rate, teams):
    rows = []
    pairs = [(h, a) for h in teams for a in teams if h != a]
    for i, (home, away) in enumerate(pairs):
        date = start + dt.timedelta(days=i)
        rows.append(
            {
                "league": league,
                "season": season,
                "date": f"{date}",
                "home": home,
                "away": away,
                "hg": rng.poisson(home_rate[0]),
                "ag": rng.poisson(away_rate[0]),
                "hy": rng.poisson(home_rate[1]),
                "ay": rng.poisson(away_rate[1]),
            }
        )
    return rows


def _build_league_csv(path, league, rng, blank_yellow_rows=0):
    teams = [f"{league}_{t}" for t in "ABCD"]
    rows = _season_rows(
        rng, league, "2019-2020", dt.date(2019, 9, 1), (1.6, 1.8), (1.1, 2.3), teams
    )
    rows += _season_rows(
        rng, league, "2020-2021", dt.date(2020, 6, 10), (1.3, 2.0), (1.1, 2.1), teams
    )
    for row in rows[:blank_yellow_rows]:
        row["hy"] = ""
        row["ay"] = ""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["league", "season", "date", "home", "away", "hg", "ag", "hy", "ay"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _expected_counts(rows, restart):
    pre = [r for r in rows if r["date"] < restart]
    post = [r for r in rows if r["date"] >= restart]
    return {
        "goals_pre": len(pre),
        "goals_post": len(post),
        "yellows_pre": sum(1 for r in pre if r["hy"] != ""),
        "yellows_post": sum(1 for r in post if r["hy"] != ""),
        "team_seasons": 8,
    }


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    data_dir = root / "data"
    data_dir.mkdir()
    rng = np.random.default_rng(20200601)
    restart = "2020-06-01"
    leagues = []
    for league, blanks in (("alpha", 0), ("beta", 2)):
        rows = _build_league_csv(data_dir / f"{league}.csv", league, rng, blanks)
        leagues.append(
            {
                "id": league,
                "name": league.capitalize() + " League",
                "country": "Testland",
                "tier": 1,
                "restart_date": restart,
                "seasons": ["2019-2020", "2020-2021"],
                "expected": _expected_counts(rows, restart),
            }
        )
    config_path = root / "leagues.json"
    config_path.write_text(json.dumps({"leagues": leagues}, indent=2))
    return SimpleNamespace(data_dir=data_dir, config=config_path, root=root)
