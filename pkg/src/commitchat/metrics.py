"""Behavioral analytics over event logs: daily activity, survival with a
proportional-hazards fit, message-count summaries, conversation-start
inequality, and per-period fulfillment.

Survival semantics: a member "dies" on the day that completes `lapse_window`
consecutive inactive days, and death is permanent for analysis even if
activity resumes later; everyone else is censored at the end of the study.
Days are group-local calendar days counted from the group epoch, not rolling
24-hour windows.

The hazard model maximizes the partial likelihood with Breslow tie handling
under damped Newton iteration; the logistic model is fit by Newton-Raphson
on the log-likelihood. Both are checked in the test suite against grid
search, closed forms, and finite differences.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional, Sequence

import numpy as np

from .core import Condition, GroupConfig
from .events import EventKind, EventRecord
from .store import GroupStore

DAY = timedelta(days=1)


@dataclass(frozen=True)
class AnalysisConfig:
    study_days: int = 21
    lapse_windows: tuple[int, ...] = (3, 5, 7, 9, 11)
    conversation_gap: timedelta = timedelta(hours=12)
    two_day_period: timedelta = timedelta(hours=48)

    def to_json_dict(self) -> dict:
        return {
            "study_days": self.study_days,
            "lapse_windows": list(self.lapse_windows),
            "conversation_gap_hours": self.conversation_gap / timedelta(hours=1),
            "two_day_period_hours": self.two_day_period / timedelta(hours=1),
        }


# ---------------------------------------------------------------------------
# Activity


@dataclass
class ActivityMatrix:
    member_ids: list[str]
    study_days: int
    active: np.ndarray  # bool, shape (members, study_days)

    def active_days(self) -> np.ndarray:
        return self.active.sum(axis=1)


def _joined_members(events: Sequence[EventRecord]) -> list[str]:
    return [e.payload["member_id"] for e in events if e.kind is EventKind.MEMBER_JOINED]


def activity_matrix(events: Sequence[EventRecord], config: GroupConfig,
                    analysis: AnalysisConfig) -> ActivityMatrix:
    """active(m, d) iff member m sent at least one message on study day d."""
    members = _joined_members(events)
    index = {m: i for i, m in enumerate(members)}
    active = np.zeros((len(members), analysis.study_days), dtype=bool)
    for ev in events:
        if ev.kind is not EventKind.MESSAGE:
            continue
        day = (ev.at - config.epoch) // DAY
        if 0 <= day < analysis.study_days:
            active[index[ev.payload["sender_id"]], day] = True
    return ActivityMatrix(members, analysis.study_days, active)


# ---------------------------------------------------------------------------
# Survival


@dataclass
class SurvivalDataset:
    member_ids: list[str]
    durations: np.ndarray  # days survived; death day index + 1, or study length
    events: np.ndarray     # bool, True = died (lapse window completed)
    condition: np.ndarray  # 1.0 = commitment condition, 0.0 = control


def _scan_survival(row: np.ndarray, lapse_window: int) -> tuple[int, bool]:
    run = 0
    for day, active in enumerate(row):
        if active:
            run = 0
        else:
            run += 1
            if run >= lapse_window:
                return day + 1, True
    return len(row), False


def survival_times(matrix: ActivityMatrix, lapse_window: int,
                   condition_flag: float = 0.0) -> SurvivalDataset:
    if lapse_window < 1:
        raise ValueError("lapse_window must be >= 1")
    durations, events = [], []
    for row in matrix.active:
        duration, died = _scan_survival(row, lapse_window)
        durations.append(duration)
        events.append(died)
    n = len(matrix.member_ids)
    return SurvivalDataset(
        member_ids=list(matrix.member_ids),
        durations=np.array(durations, dtype=float),
        events=np.array(events, dtype=bool),
        condition=np.full(n, float(condition_flag)),
    )


def merge_survival(datasets: Sequence[SurvivalDataset]) -> SurvivalDataset:
    return SurvivalDataset(
        member_ids=[m for d in datasets for m in d.member_ids],
        durations=np.concatenate([d.durations for d in datasets]) if datasets else np.array([]),
        events=np.concatenate([d.events for d in datasets]) if datasets else np.array([], dtype=bool),
        condition=np.concatenate([d.condition for d in datasets]) if datasets else np.array([]),
    )


def km_survivor_counts(dataset: SurvivalDataset, study_days: int) -> list[int]:
    """Members still surviving at the end of each study day."""
    counts = []
    death_days = dataset.durations - 1
    for d in range(study_days):
        dead = np.sum(dataset.events & (death_days <= d))
        counts.append(int(len(dataset.durations) - dead))
    return counts


# ---------------------------------------------------------------------------
# Proportional-hazards fit (Breslow partial likelihood, scalar covariate)


@dataclass
class CoxFit:
    beta: float
    hazard_ratio: float
    standard_error: float
    log_likelihood: float
    iterations: int
    converged: bool


def cox_partial_loglik(beta: float, durations: np.ndarray, events: np.ndarray,
                       x: np.ndarray) -> float:
    ll = 0.0
    for tau in np.unique(durations[events]):
        deaths = events & (durations == tau)
        risk = durations >= tau
        ll += beta * float(x[deaths].sum())
        ll -= int(deaths.sum()) * math.log(float(np.exp(beta * x[risk]).sum()))
    return ll


def cox_score_info(beta: float, durations: np.ndarray, events: np.ndarray,
                   x: np.ndarray) -> tuple[float, float]:
    score = 0.0
    info = 0.0
    for tau in np.unique(durations[events]):
        deaths = events & (durations == tau)
        risk = durations >= tau
        w = np.exp(beta * x[risk])
        s0 = float(w.sum())
        s1 = float((w * x[risk]).sum())
        s2 = float((w * x[risk] ** 2).sum())
        d = int(deaths.sum())
        score += float(x[deaths].sum()) - d * s1 / s0
        info += d * (s2 / s0 - (s1 / s0) ** 2)
    return score, info


def cox_fit(dataset: SurvivalDataset, max_iter: int = 100,
            tol: float = 1e-8) -> CoxFit:
    durations, events, x = dataset.durations, dataset.events, dataset.condition
    if not events.any():
        raise ValueError("no events")
    beta = 0.0
    ll = cox_partial_loglik(beta, durations, events, x)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        score, info = cox_score_info(beta, durations, events, x)
        if info <= 0 or not math.isfinite(info):
            break
        step = score / info
        if abs(step) < tol:
            converged = True
            break
        # damping: halve until the partial likelihood does not decrease
        for _ in range(30):
            candidate = beta + step
            candidate_ll = cox_partial_loglik(candidate, durations, events, x)
            if candidate_ll >= ll - 1e-12:
                break
            step /= 2.0
        beta += step
        ll = cox_partial_loglik(beta, durations, events, x)
    _, info = cox_score_info(beta, durations, events, x)
    se = 1.0 / math.sqrt(info) if info > 0 else float("inf")
    return CoxFit(beta=beta, hazard_ratio=math.exp(beta), standard_error=se,
                  log_likelihood=ll, iterations=iterations, converged=converged)


# ---------------------------------------------------------------------------
# Logistic and linear fits (fixed effects)


@dataclass
class LogisticFit:
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_json_dict(self) -> dict:
        return {
            "coefficients": {n: float(c) for n, c in zip(self.names, self.coefficients)},
            "standard_errors": {n: float(s) for n, s in zip(self.names, self.standard_errors)},
            "log_likelihood": float(self.log_likelihood),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def logistic_fit(X: np.ndarray, y: np.ndarray, names: Optional[list[str]] = None,
                 max_iter: int = 100, tol: float = 1e-8) -> LogisticFit:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = names or [f"x{i}" for i in range(p)]
    beta = np.zeros(p)
    converged = False
    iterations = 0
    separated = bool(y.min() == y.max())
    if not separated:
        for iterations in range(1, max_iter + 1):
            eta = X @ beta
            mu = 1.0 / (1.0 + np.exp(-eta))
            w = mu * (1.0 - mu)
            grad = X.T @ (y - mu)
            hess = X.T @ (X * w[:, None])
            try:
                delta = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                break
            beta = beta + delta
            if np.abs(beta).max() > 30:  # separation: coefficient diverging
                break
            if np.abs(delta).max() < tol:
                converged = True
                break
    eta = X @ beta
    mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
    eps = 1e-12
    ll = float(np.sum(y * np.log(mu + eps) + (1 - y) * np.log(1 - mu + eps)))
    w = mu * (1.0 - mu)
    hess = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(hess)
        ses = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        ses = np.full(p, float("inf"))
    return LogisticFit(names=names, coefficients=beta, standard_errors=ses,
                       log_likelihood=ll, iterations=iterations, converged=converged)


@dataclass
class LinearFit:
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    r_squared: float

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_json_dict(self) -> dict:
        return {
            "coefficients": {n: float(c) for n, c in zip(self.names, self.coefficients)},
            "standard_errors": {n: float(s) for n, s in zip(self.names, self.standard_errors)},
            "r_squared": float(self.r_squared),
        }


def linear_fit(X: np.ndarray, y: np.ndarray, names: Optional[list[str]] = None) -> LinearFit:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = names or [f"x{i}" for i in range(p)]
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ beta
    dof = max(n - p, 1)
    sigma2 = float(residuals @ residuals) / dof
    try:
        cov = sigma2 * np.linalg.inv(X.T @ X)
        ses = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        ses = np.full(p, float("inf"))
    total = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(residuals @ residuals) / total if total > 0 else 0.0
    return LinearFit(names=names, coefficients=beta, standard_errors=ses, r_squared=r2)


# ---------------------------------------------------------------------------
# Message summaries, conversation starts, inequality


def message_counts(events: Sequence[EventRecord]) -> dict[str, int]:
    counts = {m: 0 for m in _joined_members(events)}
    for ev in events:
        if ev.kind is EventKind.MESSAGE:
            counts[ev.payload["sender_id"]] += 1
    return counts


def log_message_summary(events: Sequence[EventRecord]) -> dict:
    """Per-member ln(message count + 1) with cohort medians; the +1 offset
    admits members who never posted."""
    counts = message_counts(events)
    per_member = {
        m: {"count": c, "log_count": math.log(c + 1)} for m, c in counts.items()
    }
    medians = {}
    if per_member:
        medians = {
            "median_count": statistics.median(v["count"] for v in per_member.values()),
            "median_log_count": statistics.median(v["log_count"] for v in per_member.values()),
        }
    return {"per_member": per_member, **medians}


def conversation_starts(events: Sequence[EventRecord],
                        analysis: AnalysisConfig) -> dict[str, int]:
    """A message starts a conversation iff no message preceded it within the
    conversation gap; the group's first message always counts."""
    starts = {m: 0 for m in _joined_members(events)}
    last_message_at = None
    for ev in events:
        if ev.kind is not EventKind.MESSAGE:
            continue
        if last_message_at is None or ev.at - last_message_at >= analysis.conversation_gap:
            starts[ev.payload["sender_id"]] += 1
        last_message_at = ev.at
    return starts


def gini(counts: Sequence[float]) -> float:
    """Mean absolute pairwise difference normalized by twice the mean;
    0 is perfect equality. Uses the sorted form, equivalent to
    sum_ij |x_i - x_j| / (2 n^2 mean)."""
    values = [float(c) for c in counts]
    if not values:
        raise ValueError("no contributions")
    if any(v < 0 for v in values):
        raise ValueError("counts must be non-negative")
    total = sum(values)
    if total == 0:
        raise ValueError("no contributions")
    values.sort()
    n = len(values)
    weighted = sum((i + 1) * v for i, v in enumerate(values))
    return (2.0 * weighted - (n + 1) * total) / (n * total)


def two_day_fulfillment(events: Sequence[EventRecord], config: GroupConfig,
                        analysis: AnalysisConfig) -> dict:
    """Message counts per member per fixed-length period from the epoch,
    with each member's median across periods. The final period may be short."""
    study_end = config.epoch + analysis.study_days * DAY
    span = analysis.study_days * DAY
    n_periods = math.ceil(span / analysis.two_day_period)
    members = _joined_members(events)
    counts = {m: [0] * n_periods for m in members}
    for ev in events:
        if ev.kind is not EventKind.MESSAGE or ev.at >= study_end:
            continue
        p = (ev.at - config.epoch) // analysis.two_day_period
        counts[ev.payload["sender_id"]][p] += 1
    return {
        m: {"period_counts": c, "median": statistics.median(c)}
        for m, c in counts.items()
    }


# ---------------------------------------------------------------------------
# Whole-pipeline report


def _optional_gini(counts: Sequence[float]):
    try:
        return gini(counts)
    except ValueError:
        return None


def analyze_store(store: GroupStore, analysis: AnalysisConfig) -> dict:
    """One JSON-ready report: per-group metrics, cohort summaries, and the
    survival table with one column per lapse window."""
    group_reports = []
    member_rows = []  # cohort-level per-member records
    matrices: dict[str, ActivityMatrix] = {}
    conditions: dict[str, Condition] = {}
    group_sizes: dict[str, int] = {}

    for log in store.all_logs():
        cfg = log.config
        events = log.records
        matrix = activity_matrix(events, cfg, analysis)
        counts = message_counts(events)
        starts = conversation_starts(events, analysis)
        two_day = two_day_fulfillment(events, cfg, analysis)
        logs_summary = log_message_summary(events)
        matrices[cfg.group_id] = matrix
        conditions[cfg.group_id] = cfg.condition
        group_sizes[cfg.group_id] = len(matrix.member_ids)

        per_member = {}
        for i, m in enumerate(matrix.member_ids):
            per_member[m] = {
                "messages": counts[m],
                "active_days": int(matrix.active[i].sum()),
                "conversation_starts": starts[m],
                "log_messages": logs_summary["per_member"][m]["log_count"],
                "two_day_counts": two_day[m]["period_counts"],
                "two_day_median": two_day[m]["median"],
            }
            member_rows.append({
                "member_id": m,
                "group_id": cfg.group_id,
                "condition": cfg.condition.value,
                **per_member[m],
            })
        group_reports.append({
            "group_id": cfg.group_id,
            "condition": cfg.condition.value,
            "members": matrix.member_ids,
            "message_count": sum(counts.values()),
            "gini_all_messages": _optional_gini(list(counts.values())),
            "gini_conversation_starts": _optional_gini(list(starts.values())),
            "active_by_day": [int(c) for c in matrix.active.sum(axis=0)],
        })

    primary_window = 7 if 7 in analysis.lapse_windows else (
        analysis.lapse_windows[0] if analysis.lapse_windows else 7)

    # cohort summaries per condition
    by_condition = {}
    for cond in (Condition.COMMIT, Condition.CONTROL):
        rows = [r for r in member_rows if r["condition"] == cond.value]
        if not rows:
            continue
        datasets = [
            survival_times(matrices[gid], primary_window,
                           1.0 if conditions[gid] is Condition.COMMIT else 0.0)
            for gid in matrices if conditions[gid] is cond
        ]
        merged = merge_survival(datasets)
        ginis_all = [g["gini_all_messages"] for g in group_reports
                     if g["condition"] == cond.value and g["gini_all_messages"] is not None]
        ginis_starts = [g["gini_conversation_starts"] for g in group_reports
                        if g["condition"] == cond.value
                        and g["gini_conversation_starts"] is not None]
        active_by_day = [0] * analysis.study_days
        for g in group_reports:
            if g["condition"] == cond.value:
                for d, c in enumerate(g["active_by_day"]):
                    active_by_day[d] += c
        by_condition[cond.value] = {
            "members": len(rows),
            "median_messages": statistics.median(r["messages"] for r in rows),
            "median_active_days": statistics.median(r["active_days"] for r in rows),
            "median_log_messages": statistics.median(r["log_messages"] for r in rows),
            "median_two_day_median": statistics.median(r["two_day_median"] for r in rows),
            "surviving_fraction_at_end": float(1.0 - merged.events.mean())
            if len(merged.events) else None,
            "median_gini_all_messages": statistics.median(ginis_all) if ginis_all else None,
            "median_gini_conversation_starts": statistics.median(ginis_starts)
            if ginis_starts else None,
            "active_by_day": active_by_day,
        }

    # survival table: one column per lapse window
    columns = {}
    observations = len(member_rows)
    for window in analysis.lapse_windows:
        datasets = [
            survival_times(matrices[gid], window,
                           1.0 if conditions[gid] is Condition.COMMIT else 0.0)
            for gid in matrices
        ]
        merged = merge_survival(datasets)
        try:
            fit = cox_fit(merged)
            n = len(merged.durations)
            null_ll = cox_partial_loglik(0.0, merged.durations, merged.events,
                                         merged.condition)
            columns[str(window)] = {
                "coef": fit.beta,
                "se": fit.standard_error,
                "hazard_ratio": fit.hazard_ratio,
                "events": int(merged.events.sum()),
                "iterations": fit.iterations,
                "converged": fit.converged,
                # Cox & Snell pseudo-R^2 and its attainable maximum
                "r_squared": 1.0 - math.exp(-2.0 * (fit.log_likelihood - null_ll) / n),
                "max_r_squared": 1.0 - math.exp(2.0 * null_ll / n),
            }
        except ValueError as exc:
            columns[str(window)] = {"error": str(exc),
                                    "events": int(merged.events.sum())}

    km = {}
    km_datasets = {
        cond.value: merge_survival([
            survival_times(matrices[gid], primary_window,
                           1.0 if conditions[gid] is Condition.COMMIT else 0.0)
            for gid in matrices if conditions[gid] is cond
        ])
        for cond in (Condition.COMMIT, Condition.CONTROL)
        if any(c is cond for c in conditions.values())
    }
    km = {
        "window": primary_window,
        "days": list(range(analysis.study_days)),
        **{cond: km_survivor_counts(ds, analysis.study_days)
           for cond, ds in km_datasets.items()},
    }

    # cohort regression models (fixed effects)
    activity_model = None
    messages_model = None
    if member_rows:
        max_size = max(group_sizes.values())
        size_varies = len(set(group_sizes.values())) > 1
        X_rows, y_rows = [], []
        names = ["intercept", "condition", "day"] + (["full_group"] if size_varies else [])
        for gid, matrix in matrices.items():
            cond_flag = 1.0 if conditions[gid] is Condition.COMMIT else 0.0
            full_flag = 1.0 if group_sizes[gid] >= max_size else 0.0
            for i in range(len(matrix.member_ids)):
                for d in range(analysis.study_days):
                    row = [1.0, cond_flag, float(d)]
                    if size_varies:
                        row.append(full_flag)
                    X_rows.append(row)
                    y_rows.append(1.0 if matrix.active[i, d] else 0.0)
        activity_model = logistic_fit(np.array(X_rows), np.array(y_rows), names)

        names_m = ["intercept", "condition"] + (["full_group"] if size_varies else [])
        Xm, ym = [], []
        for r in member_rows:
            row = [1.0, 1.0 if r["condition"] == "COMMIT" else 0.0]
            if size_varies:
                row.append(1.0 if group_sizes[r["group_id"]] >= max_size else 0.0)
            Xm.append(row)
            ym.append(r["log_messages"])
        messages_model = linear_fit(np.array(Xm), np.array(ym), names_m)

    return {
        "analysis_config": analysis.to_json_dict(),
        "groups": group_reports,
        "cohort": {
            "observations": observations,
            "by_condition": by_condition,
            "activity_model": activity_model.to_json_dict() if activity_model else None,
            "messages_model": messages_model.to_json_dict() if messages_model else None,
        },
        "survival": {
            "lapse_windows": list(analysis.lapse_windows),
            "observations": observations,
            "columns": columns,
            "km_by_condition": km,
        },
    }
