"""
Session Monitor Module
Decides whether a session's rate of canceled and disputed games is explained
by channel errors or points to cheating, in which case the game should stop.
"""
from __future__ import annotations

import enum
import logging
import math
from typing import Iterable, Optional, Union

from pydantic import BaseModel, ConfigDict
from scipy import stats

import config
from src.exceptions import ParameterError
from src.protocol_engine import GameOutcome, GameRecord

logger = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    CLEAN = "CLEAN"
    CHEATING_SUSPECTED = "CHEATING_SUSPECTED"
    INDETERMINATE = "INDETERMINATE"


class SessionVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    games: int
    anomalies: int
    canceled: int
    disputed: int
    expected_rate: float
    observed_rate: float
    z_score: float
    p_value: float
    threshold_sigma: float

    @property
    def stop(self) -> bool:
        return self.verdict is Verdict.CHEATING_SUSPECTED


def _outcome(item: Union[GameRecord, GameOutcome, str]) -> GameOutcome:
    if isinstance(item, GameRecord):
        return item.outcome
    return GameOutcome(item)


def session_monitor(
    records: Iterable[Union[GameRecord, GameOutcome, str]],
    expected_error_rate: float,
    threshold_sigma: Optional[float] = None,
) -> SessionVerdict:
    """Binomial test of the anomaly count (Canceled plus Disputed) against the channel error rate.

    Cheating is suspected when the count exceeds its expectation by more than
    ``threshold_sigma`` standard deviations and the exact one-sided binomial
    tail is below the matching normal tail, so that a single early
    cancellation in a short session is not mistaken for cheating.
    """
    threshold = config.MONITOR_SIGMA if threshold_sigma is None else threshold_sigma
    if not 0.0 <= expected_error_rate <= 1.0:
        raise ParameterError(f"Expected error rate must lie in [0, 1], got {expected_error_rate}")
    if threshold <= 0:
        raise ParameterError(f"threshold_sigma must be positive, got {threshold}")

    outcomes = [_outcome(r) for r in records]
    n = len(outcomes)
    canceled = sum(1 for o in outcomes if o is GameOutcome.CANCELED)
    disputed = sum(1 for o in outcomes if o is GameOutcome.DISPUTED)
    k = canceled + disputed
    p = expected_error_rate

    if n == 0:
        return SessionVerdict(
            verdict=Verdict.INDETERMINATE, games=0, anomalies=0, canceled=0, disputed=0,
            expected_rate=p, observed_rate=0.0, z_score=0.0, p_value=1.0, threshold_sigma=threshold,
        )

    expected = n * p
    sd = math.sqrt(n * p * (1.0 - p))
    if sd > 0:
        z = (k - expected) / sd
    else:
        z = math.inf if k > expected else 0.0

    if 0.0 < p < 1.0:
        p_value = float(stats.binomtest(k, n, p, alternative="greater").pvalue)
    else:
        p_value = 0.0 if k > expected else 1.0

    suspected = z > threshold and p_value < float(stats.norm.sf(threshold))
    verdict = Verdict.CHEATING_SUSPECTED if suspected else Verdict.CLEAN
    if suspected:
        logger.warning(
            "Cheating suspected: %d anomalies in %d games (expected %.2f, z=%.2f)", k, n, expected, z
        )
    return SessionVerdict(
        verdict=verdict, games=n, anomalies=k, canceled=canceled, disputed=disputed,
        expected_rate=p, observed_rate=k / n, z_score=z, p_value=p_value, threshold_sigma=threshold,
    )
