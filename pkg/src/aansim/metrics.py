"""Outcome metrics: workload and usability scoring, reliability, aggregation.

Workload uses the unweighted six-item scheme on a 1..10 scale, each item
rescaled to 0..100 as (raw - 1) / 9 * 100 and averaged.  Usability uses
five items on a 1..5 scale with items 2 and 4 reverse-coded (6 - x) before
rescaling to 0..100 as (raw - 1) / 4 * 100.  Internal consistency is
Cronbach's alpha with population (ddof=0) variances.  Session-level
outcomes (time to locate the bottle, interaction rounds, completion) are
extracted from session logs, then aggregated per condition with mean,
median, quartiles and a Student-t confidence interval.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .session import SessionLog

TLX_ITEMS = ("mental", "physical", "temporal", "performance", "effort", "frustration")
USABILITY_ITEMS = ("q1", "q2", "q3", "q4", "q5")
USABILITY_REVERSED = ("q2", "q4")


class OutOfRange(ValueError):
    """A questionnaire item is outside its scale."""


class DegenerateData(ValueError):
    """Not enough variation or data to compute a statistic."""


class EmptyCondition(ValueError):
    """Aggregation was asked for a condition with no sessions."""


@dataclass(frozen=True)
class TlxResponse:
    """One participant's six workload items, each on 1..10."""

    mental: float
    physical: float
    temporal: float
    performance: float
    effort: float
    frustration: float

    def __post_init__(self) -> None:
        for name in TLX_ITEMS:
            v = getattr(self, name)
            if not 1.0 <= v <= 10.0:
                raise OutOfRange(f"workload item {name!r} must be in [1, 10], got {v}")

    def items(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in TLX_ITEMS)


@dataclass(frozen=True)
class UsabilityResponse:
    """One participant's five usability items, each on 1..5."""

    q1: float
    q2: float
    q3: float
    q4: float
    q5: float

    def __post_init__(self) -> None:
        for name in USABILITY_ITEMS:
            v = getattr(self, name)
            if not 1.0 <= v <= 5.0:
                raise OutOfRange(f"usability item {name!r} must be in [1, 5], got {v}")

    def items(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in USABILITY_ITEMS)

    def adjusted_items(self) -> tuple[float, ...]:
        """Raw items with the negatively worded ones reverse-coded (6 - x)."""
        out = []
        for name in USABILITY_ITEMS:
            v = getattr(self, name)
            out.append(6.0 - v if name in USABILITY_REVERSED else v)
        return tuple(out)


def raw_tlx(response: TlxResponse) -> float:
    """Unweighted workload score on 0..100: mean of (item - 1) / 9 * 100."""
    return float(np.mean([(v - 1.0) / 9.0 * 100.0 for v in response.items()]))


def usability_composite(response: UsabilityResponse) -> float:
    """Usability score on 0..100 after reverse-coding: mean of (x - 1) / 4 * 100."""
    return float(np.mean([(v - 1.0) / 4.0 * 100.0 for v in response.adjusted_items()]))


def cronbach_alpha(
    item_scores, reverse_items: tuple[int, ...] = (), scale_max: float | None = None
) -> float:
    """Cronbach's alpha over a (respondents x items) score matrix.

    Uses population variances.  ``reverse_items`` lists column indices to
    reverse-code as (scale_max + 1 - x) before scoring; supplying it
    requires ``scale_max``.  Raises DegenerateData for fewer than two items,
    fewer than two respondents, or zero total variance.
    """
    scores = np.asarray(item_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DegenerateData("item scores must be a 2-D respondents-by-items array")
    n, k = scores.shape
    if k < 2:
        raise DegenerateData(f"alpha needs at least 2 items, got {k}")
    if n < 2:
        raise DegenerateData(f"alpha needs at least 2 respondents, got {n}")
    if reverse_items:
        if scale_max is None:
            raise ValueError("reverse_items requires scale_max")
        scores = scores.copy()
        for idx in reverse_items:
            scores[:, idx] = (scale_max + 1.0) - scores[:, idx]
    item_var = scores.var(axis=0, ddof=0)
    total_var = scores.sum(axis=1).var(ddof=0)
    if total_var <= 0.0:
        raise DegenerateData("total score variance is zero")
    return float(k / (k - 1.0) * (1.0 - item_var.sum() / total_var))


# ---------------------------------------------------------------------------
# Session-level outcomes


@dataclass(frozen=True)
class SessionMetrics:
    condition: str
    seed: int
    time_to_locate_s: float
    censored: bool  # bottle never located; time is the episode end
    interaction_rounds: int
    completed: bool


def _locate_time(log: SessionLog) -> float | None:
    """Time the bottle was first located, or None if it never was.

    Guided sessions locate when the robot's search reports a find; passive
    sessions locate when the user first looks at or opens the bottle.
    """
    for record in log.records:
        if record["kind"] != "event":
            continue
        event = record["event"]
        if event.get("kind") == "found":
            return float(record["t"])
        if event.get("kind") == "user_action" and event.get("action") in (
            "looks_at_bottle",
            "opens_bottle",
        ):
            return float(record["t"])
    return None


def session_metrics(log: SessionLog) -> SessionMetrics:
    """Extract outcome measures from one session log."""
    t0 = 0.0
    for record in log.records:
        if record["kind"] == "event" and record["event"].get("kind") == "schedule_due":
            t0 = float(record["t"])
            break
    located = _locate_time(log)
    censored = located is None
    time_to_locate = (log.end_time if censored else located) - t0
    rounds = 0
    completed = False
    for record in log.records:
        if record["kind"] != "event":
            continue
        if record["event"].get("kind") == "record_pressed" and any(
            a.get("kind") == "speak" for a in record["actions"]
        ):
            rounds += 1
        if record["state"].get("phase") == "done":
            completed = True
    return SessionMetrics(
        condition=str(log.meta["condition"]),
        seed=int(log.meta["seed"]),
        time_to_locate_s=float(time_to_locate),
        censored=censored,
        interaction_rounds=rounds,
        completed=completed,
    )


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class Summary:
    """Location and spread of one measure within one condition."""

    n: int
    mean: float
    median: float
    q1: float
    q3: float
    ci95: tuple[float, float] | None  # Student-t; None when n == 1

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(values) -> Summary:
    xs = np.asarray(list(values), dtype=np.float64)
    if xs.size == 0:
        raise EmptyCondition("no values to summarize")
    mean = float(xs.mean())
    median = float(np.median(xs))
    q1, q3 = (float(q) for q in np.percentile(xs, [25.0, 75.0]))
    ci: tuple[float, float] | None = None
    if xs.size > 1:
        sem = float(xs.std(ddof=1)) / math.sqrt(xs.size)
        half = float(stats.t.ppf(0.975, xs.size - 1)) * sem
        ci = (mean - half, mean + half)
    return Summary(n=int(xs.size), mean=mean, median=median, q1=q1, q3=q3, ci95=ci)


MEASURES = ("time_to_locate_s", "interaction_rounds", "completed")


def aggregate(sessions: list[SessionMetrics]) -> dict[str, dict[str, Summary]]:
    """Per-condition summaries keyed as result[condition][measure]."""
    by_condition: dict[str, list[SessionMetrics]] = {}
    for s in sessions:
        by_condition.setdefault(s.condition, []).append(s)
    out: dict[str, dict[str, Summary]] = {}
    for condition, group in sorted(by_condition.items()):
        out[condition] = {
            "time_to_locate_s": summarize(s.time_to_locate_s for s in group),
            "interaction_rounds": summarize(float(s.interaction_rounds) for s in group),
            "completed": summarize(1.0 if s.completed else 0.0 for s in group),
        }
    return out


# ---------------------------------------------------------------------------
# Questionnaire CSV input


def _read_rows(path: str | Path, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: missing header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return list(reader)


def load_tlx_csv(path: str | Path) -> list[tuple[str, str, TlxResponse]]:
    """Rows of (participant, condition, response) from a workload CSV."""
    rows = _read_rows(path, ("participant", "condition") + TLX_ITEMS)
    out = []
    for i, row in enumerate(rows):
        try:
            resp = TlxResponse(**{k: float(row[k]) for k in TLX_ITEMS})
        except (OutOfRange, ValueError) as exc:
            raise OutOfRange(f"{path}: row {i + 2}: {exc}") from exc
        out.append((row["participant"], row["condition"], resp))
    return out


def load_usability_csv(path: str | Path) -> list[tuple[str, str, UsabilityResponse]]:
    """Rows of (participant, condition, response) from a usability CSV."""
    rows = _read_rows(path, ("participant", "condition") + USABILITY_ITEMS)
    out = []
    for i, row in enumerate(rows):
        try:
            resp = UsabilityResponse(**{k: float(row[k]) for k in USABILITY_ITEMS})
        except (OutOfRange, ValueError) as exc:
            raise OutOfRange(f"{path}: row {i + 2}: {exc}") from exc
        out.append((row["participant"], row["condition"], resp))
    return out


# ---------------------------------------------------------------------------
# Reporting


def write_summary_csv(sessions: list[SessionMetrics], path: str | Path) -> None:
    """One row per session, in (condition, seed) order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["condition", "seed", "time_to_locate_s", "censored", "interaction_rounds", "completed"]
        )
        for s in sorted(sessions, key=lambda s: (s.condition, s.seed)):
            writer.writerow(
                [
                    s.condition,
                    s.seed,
                    f"{s.time_to_locate_s:.3f}",
                    int(s.censored),
                    s.interaction_rounds,
                    int(s.completed),
                ]
            )


def _fmt_ci(ci: tuple[float, float] | None) -> str:
    if ci is None:
        return "-"
    return f"[{ci[0]:.2f}, {ci[1]:.2f}]"


def render_report(
    sessions: list[SessionMetrics],
    tlx_scores: dict[str, list[float]] | None = None,
    usability_scores: dict[str, list[float]] | None = None,
) -> str:
    """Plain-text condition comparison table."""
    agg = aggregate(sessions)
    lines: list[str] = []
    header = f"{'measure':<28}" + "".join(f"{c:>26}" for c in agg)
    lines.append(header)
    lines.append("-" * len(header))

    def row(label: str, cell) -> None:
        lines.append(f"{label:<28}" + "".join(f"{cell(c):>26}" for c in agg))

    row("sessions", lambda c: str(agg[c]["time_to_locate_s"].n))
    for measure, label in (
        ("time_to_locate_s", "time to locate (s)"),
        ("interaction_rounds", "interaction rounds"),
    ):
        row(f"{label} mean", lambda c, m=measure: f"{agg[c][m].mean:.2f}")
        row(f"{label} median", lambda c, m=measure: f"{agg[c][m].median:.2f}")
        row(
            f"{label} IQR",
            lambda c, m=measure: f"{agg[c][m].q1:.2f}..{agg[c][m].q3:.2f}",
        )
        row(f"{label} 95% CI", lambda c, m=measure: _fmt_ci(agg[c][m].ci95))
    row("completion rate", lambda c: f"{agg[c]['completed'].mean:.2f}")

    for name, scores in (("workload", tlx_scores), ("usability", usability_scores)):
        if not scores:
            continue
        lines.append("")
        for condition in sorted(scores):
            s = summarize(scores[condition])
            lines.append(
                f"{name} ({condition}): mean {s.mean:.2f}, median {s.median:.2f}, "
                f"IQR {s.q1:.2f}..{s.q3:.2f}, 95% CI {_fmt_ci(s.ci95)} (n={s.n})"
            )
    return "\n".join(lines) + "\n"
