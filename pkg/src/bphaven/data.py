"""Match-data ingestion, restart-date splits, and sample-count validation.

Input files are per-league CSVs in the canonical schema
``league,season,date,home,away,hg,ag,hy,ay`` (ISO-8601 dates, empty string
for a missing count).  A column-alias layer accepts the upstream dataset's
original headers (``home_team``, ``home_score``, ``home_yellow_cards``, ...)
so published files load unmodified.  Every input row either becomes a
:class:`Match` or a logged rejection; nothing is dropped silently.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "Match",
    "LeagueConfig",
    "IngestReport",
    "ValidationRow",
    "ValidationReport",
    "CorrelationRow",
    "load_league_configs",
    "load_matches",
    "split_pre_post",
    "validate_counts",
    "observed_correlations",
]


@dataclass(frozen=True)
class Match:
    """One game; count fields are None when the source row left them blank."""

    league_id: str
    season_id: str
    date: dt.date
    home_team: str
    away_team: str
    home_goals: int | None
    away_goals: int | None
    home_yellows: int | None
    away_yellows: int | None
    is_post: bool = False

    def has_goals(self) -> bool:
        return self.home_goals is not None and self.away_goals is not None

    def has_yellows(self) -> bool:
        return self.home_yellows is not None and self.away_yellows is not None


@dataclass(frozen=True)
class LeagueConfig:
    league_id: str
    name: str
    country: str
    tier: int
    restart_date: dt.date
    seasons: tuple[str, ...]
    expected_goals_pre: int
    expected_goals_post: int
    expected_yellows_pre: int
    expected_yellows_post: int
    expected_team_seasons: int


def load_league_configs(path: str | Path | None = None) -> dict[str, LeagueConfig]:
    """League configuration keyed by league id.

    Reads the packaged config by default; pass ``path`` to load an edited
    copy (restart dates and expected counts are data, not code).
    """
    if path is None:
        raw = resources.files("bphaven").joinpath("leagues.json").read_text()
    else:
        raw = Path(path).read_text()
    blob = json.loads(raw)
    configs = {}
    for entry in blob["leagues"]:
        exp = entry["expected"]
        cfg = LeagueConfig(
            league_id=entry["id"],
            name=entry["name"],
            country=entry["country"],
            tier=int(entry["tier"]),
            restart_date=dt.date.fromisoformat(entry["restart_date"]),
            seasons=tuple(entry["seasons"]),
            expected_goals_pre=int(exp["goals_pre"]),
            expected_goals_post=int(exp["goals_post"]),
            expected_yellows_pre=int(exp["yellows_pre"]),
            expected_yellows_post=int(exp["yellows_post"]),
            expected_team_seasons=int(exp["team_seasons"]),
        )
        configs[cfg.league_id] = cfg
    return configs


# Canonical column -> accepted source headers, tried in order.
_COLUMN_ALIASES: dict[str, tuple[str, ...]] = {
    "league": ("league",),
    "season": ("season",),
    "date": ("date", "match_date"),
    "home": ("home", "home_team"),
    "away": ("away", "away_team"),
    "hg": ("hg", "home_score", "home_goals"),
    "ag": ("ag", "away_score", "away_goals"),
    "hy": ("hy", "home_yellow_cards", "home_yellows"),
    "ay": ("ay", "away_yellow_cards", "away_yellows"),
}

_REQUIRED = ("season", "date", "home", "away", "hg", "ag")


@dataclass
class IngestReport:
    path: str
    rows_in: int = 0
    matches_out: int = 0
    rejections: list[tuple[int, str]] = field(default_factory=list)
    season_counts: dict[str, int] = field(default_factory=dict)

    @property
    def rejections_out(self) -> int:
        return len(self.rejections)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "rows_in": self.rows_in,
            "matches_out": self.matches_out,
            "rejections": [
                {"row": row, "reason": reason} for row, reason in self.rejections
            ],
            "season_counts": dict(sorted(self.season_counts.items())),
        }


def _resolve_columns(header: Sequence[str]) -> dict[str, str]:
    resolved = {}
    header_set = set(header)
    for canonical, aliases in _COLUMN_ALIASES.items():
        for alias in aliases:
            if alias in header_set:
                resolved[canonical] = alias
                break
    missing = [c for c in _REQUIRED if c not in resolved]
    if missing:
        raise ValueError(f"input is missing required columns {missing}; header was {list(header)}")
    return resolved


def normalize_season(label: str) -> str:
    """Canonicalize season labels: 2015-16, 2015/16, 2015-2016 -> 2015-2016.

    Plain calendar years (Norway/Sweden) pass through untouched.
    """
    label = label.strip()
    for sep in ("-", "/"):
        if sep in label:
            left, _, right = label.partition(sep)
            if left.isdigit() and right.isdigit() and len(left) == 4:
                if len(right) == 2:
                    right = left[:2] + right
                return f"{left}-{right}"
    return label


def _parse_count(raw: str | None) -> int | None:
    if raw is None or raw.strip() == "" or raw.strip().upper() in ("NA", "NAN"):
        return None
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"non-integer count {raw!r}")
    value = int(value)
    if value < 0:
        raise ValueError(f"negative count {raw!r}")
    return value


def load_matches(
    path: str | Path, config: LeagueConfig
) -> tuple[list[Match], IngestReport]:
    """Read one league's CSV into Match records plus an ingestion report.

    Row-level failures (malformed date, negative count, season outside the
    configured whitelist, mismatched league label, home == away) become
    logged rejections; rows_in always equals matches_out + rejections_out.
    """
    path = Path(path)
    report = IngestReport(path=str(path))
    matches: list[Match] = []
    accepted_league_labels = {config.league_id, config.name}

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return [], report
        cols = _resolve_columns(reader.fieldnames)
        for lineno, row in enumerate(reader, start=2):
            report.rows_in += 1
            try:
                match = _parse_row(row, cols, config, accepted_league_labels)
            except ValueError as exc:
                report.rejections.append((lineno, str(exc)))
                continue
            matches.append(match)
            report.season_counts[match.season_id] = (
                report.season_counts.get(match.season_id, 0) + 1
            )

    matches.sort(key=lambda m: (m.date, m.home_team))
    report.matches_out = len(matches)
    return matches, report


def _parse_row(
    row: dict, cols: dict[str, str], config: LeagueConfig, league_labels: set[str]
) -> Match:
    if "league" in cols:
        label = (row[cols["league"]] or "").strip()
        if label and label not in league_labels:
            raise ValueError(f"league label {label!r} does not match {config.league_id!r}")

    season = normalize_season(row[cols["season"]] or "")
    if season not in config.seasons:
        raise ValueError(f"season {season!r} not in configured whitelist")

    raw_date = (row[cols["date"]] or "").strip()
    try:
        date = dt.date.fromisoformat(raw_date)
    except ValueError:
        raise ValueError(f"malformed date {raw_date!r}") from None

    home = (row[cols["home"]] or "").strip()
    away = (row[cols["away"]] or "").strip()
    if not home or not away:
        raise ValueError("missing team name")
    if home == away:
        raise ValueError(f"home and away teams identical ({home!r})")

    counts = {}
    for key in ("hg", "ag", "hy", "ay"):
        raw = row.get(cols[key]) if key in cols else None
        try:
            counts[key] = _parse_count(raw)
        except ValueError as exc:
            raise ValueError(f"{key}: {exc}") from None

    return Match(
        league_id=config.league_id,
        season_id=season,
        date=date,
        home_team=home,
        away_team=away,
        home_goals=counts["hg"],
        away_goals=counts["ag"],
        home_yellows=counts["hy"],
        away_yellows=counts["ay"],
        is_post=date >= config.restart_date,
    )


def split_pre_post(
    matches: Iterable[Match], restart_date: dt.date
) -> tuple[list[Match], list[Match]]:
    """Partition matches into (pre, post) by the restart date.

    A match played on the restart date itself counts as post.
    """
    pre, post = [], []
    for m in matches:
        (post if m.date >= restart_date else pre).append(m)
    return pre, post


@dataclass(frozen=True)
class ValidationRow:
    league_id: str
    goals_pre: int
    goals_post: int
    yellows_pre: int
    yellows_post: int
    team_seasons: int
    expected_goals_pre: int
    expected_goals_post: int
    expected_yellows_pre: int
    expected_yellows_post: int
    expected_team_seasons: int

    @property
    def ok(self) -> bool:
        return (
            self.goals_pre == self.expected_goals_pre
            and self.goals_post == self.expected_goals_post
            and self.yellows_pre == self.expected_yellows_pre
            and self.yellows_post == self.expected_yellows_post
            and self.team_seasons == self.expected_team_seasons
        )

    def to_dict(self) -> dict:
        return {
            "league": self.league_id,
            "ok": self.ok,
            "goals_pre": [self.goals_pre, self.expected_goals_pre],
            "goals_post": [self.goals_post, self.expected_goals_post],
            "yellows_pre": [self.yellows_pre, self.expected_yellows_pre],
            "yellows_post": [self.yellows_post, self.expected_yellows_post],
            "team_seasons": [self.team_seasons, self.expected_team_seasons],
        }


@dataclass
class ValidationReport:
    rows: list[ValidationRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def mismatches(self) -> list[ValidationRow]:
        return [r for r in self.rows if not r.ok]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "leagues": [r.to_dict() for r in sorted(self.rows, key=lambda r: r.league_id)],
        }


def validate_counts(matches: Sequence[Match], config: LeagueConfig) -> ValidationRow:
    """Compare one league's computed sample sizes against its expectations.

    Goal samples count matches with both goal counts present; yellow samples
    require both card counts.  Team-seasons are distinct (team, season)
    pairs in the goal sample.
    """
    pre, post = split_pre_post(matches, config.restart_date)
    goal_pre = [m for m in pre if m.has_goals()]
    goal_post = [m for m in post if m.has_goals()]
    team_seasons = set()
    for m in goal_pre + goal_post:
        team_seasons.add((m.home_team, m.season_id))
        team_seasons.add((m.away_team, m.season_id))
    return ValidationRow(
        league_id=config.league_id,
        goals_pre=len(goal_pre),
        goals_post=len(goal_post),
        yellows_pre=sum(1 for m in pre if m.has_yellows()),
        yellows_post=sum(1 for m in post if m.has_yellows()),
        team_seasons=len(team_seasons),
        expected_goals_pre=config.expected_goals_pre,
        expected_goals_post=config.expected_goals_post,
        expected_yellows_pre=config.expected_yellows_pre,
        expected_yellows_post=config.expected_yellows_post,
        expected_team_seasons=config.expected_team_seasons,
    )


def validate_all(
    matches_by_league: dict[str, Sequence[Match]],
    configs: dict[str, LeagueConfig],
) -> ValidationReport:
    rows = [
        validate_counts(matches_by_league[league_id], configs[league_id])
        for league_id in sorted(matches_by_league)
    ]
    return ValidationReport(rows=rows)


@dataclass(frozen=True)
class CorrelationRow:
    league_id: str
    goals_corr: float | None
    yellows_corr: float | None
    degenerate_goals: bool = False
    degenerate_yellows: bool = False


def _pair_correlation(pairs: list[tuple[int, int]]) -> tuple[float | None, bool]:
    if len(pairs) < 2:
        return None, True
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    n = len(pairs)
    mx, my = sum(xs) / n, sum(ys) / n
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0 or vy == 0:
        return None, True
    cov = sum((x - mx) * (y - my) for x, y in pairs)
    return cov / math.sqrt(vx * vy), False


def observed_correlations(matches: Sequence[Match]) -> CorrelationRow:
    """Sample correlation of home vs away counts, per outcome."""
    if not matches:
        raise ValueError("no matches")
    league_id = matches[0].league_id
    goals = [(m.home_goals, m.away_goals) for m in matches if m.has_goals()]
    yellows = [(m.home_yellows, m.away_yellows) for m in matches if m.has_yellows()]
    gc, gdeg = _pair_correlation(goals)
    yc, ydeg = _pair_correlation(yellows)
    return CorrelationRow(
        league_id=league_id,
        goals_corr=gc,
        yellows_corr=yc,
        degenerate_goals=gdeg,
        degenerate_yellows=ydeg,
    )
