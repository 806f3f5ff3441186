import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from app.environments import EnvironmentModel, Profile
from app.models import ExperimentSummary, SummaryPoint, TrialRecord
from app.oracle import OptimalJoint, simple_regret_of

logger = logging.getLogger(__name__)

Z_95 = float(stats.norm.ppf(0.975))


def trial_metrics(env: EnvironmentModel, profile: Profile, optimal: Optional[OptimalJoint] = None) -> Dict:
    """
    Score a joint plan.

    Returns:
        dict: joint_score (raw utility), simple_regret (None without a reference optimum),
        pr1 (at least one goal reached) and pr2 (every goal reached); the PR flags are 0
        on environments without goals
    """
    goals = env.goal_count()
    reached = env.goals_reached(profile) if goals else 0
    return {
        "joint_score": float(env.utility(profile)),
        "simple_regret": simple_regret_of(env, profile, optimal) if optimal is not None else None,
        "pr1": int(goals > 0 and reached >= 1),
        "pr2": int(goals > 0 and reached == goals),
    }


def confidence_halfwidth(values: Sequence[float]) -> float:
    """95% normal-approximation half-width of the mean; 0 below two samples."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return Z_95 * float(values.std(ddof=1)) / math.sqrt(len(values))


def summarize_records(records: Iterable[TrialRecord], regret_reference: Optional[str] = None) -> ExperimentSummary:
    """Mean and 95% interval of every metric per (algorithm, iteration)."""
    frame = pd.DataFrame([record.model_dump() for record in records])
    points: List[SummaryPoint] = []
    if frame.empty:
        return ExperimentSummary(points=points, regret_reference=regret_reference)

    for (algorithm, iteration), group in frame.groupby(["algorithm", "iteration"], sort=True):
        regrets = group["simple_regret"].dropna()
        points.append(SummaryPoint(
            algorithm=algorithm,
            iteration=int(iteration),
            trials=len(group),
            joint_score_mean=float(group["joint_score"].mean()),
            joint_score_ci=confidence_halfwidth(group["joint_score"]),
            simple_regret_mean=float(regrets.mean()) if len(regrets) else None,
            simple_regret_ci=confidence_halfwidth(regrets) if len(regrets) else None,
            pr1_mean=float(group["pr1"].mean()),
            pr1_ci=confidence_halfwidth(group["pr1"]),
            pr2_mean=float(group["pr2"].mean()),
            pr2_ci=confidence_halfwidth(group["pr2"]),
        ))
    return ExperimentSummary(points=points, regret_reference=regret_reference)


def final_points(summary: ExperimentSummary) -> Dict[str, SummaryPoint]:
    """Last cadence point of each algorithm."""
    last: Dict[str, SummaryPoint] = {}
    for point in summary.points:
        if point.algorithm not in last or point.iteration > last[point.algorithm].iteration:
            last[point.algorithm] = point
    return last


def paired_sign_test(first: Sequence[float], second: Sequence[float]) -> float:
    """
    One-sided sign test that `first` beats `second` pair by pair. Ties are dropped.

    :return: p-value, 1.0 when every pair ties
    """
    if len(first) != len(second):
        raise ValueError("Sign test needs paired samples of equal length")
    wins = sum(1 for a, b in zip(first, second) if a > b)
    losses = sum(1 for a, b in zip(first, second) if a < b)
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)
