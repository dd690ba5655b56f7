"""
Strategy Analysis Module
Closed-form gain formulas and an independent numeric minimax oracle for
Bob's guaranteed gain delta(R) and his splitting parameter eta~(R).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

import config
from src.exceptions import ParameterError
from src.optimize import bracket_around, golden_section_maximize, golden_section_minimize
from src.quantum_core import MODE_B, Preparation, prepare, prob_detect, prob_in_mode, project_mode, split_b

logger = logging.getLogger(__name__)

EPS_GUARD_POINTS = 101
ETA_SCAN_POINTS = 1001


def _check_reward(R: float) -> None:
    if not (math.isfinite(R) and R > 0):
        raise ParameterError(f"Reward ratio R must be finite and positive, got {R}")


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"Splitting parameter eta must lie in [0, 1], got {eta}")


@dataclass(frozen=True)
class GainParams:
    R: float
    eta: float
    epsilon: float

    def __post_init__(self):
        _check_reward(self.R)
        _check_eta(self.eta)
        if not -0.5 <= self.epsilon <= 0.5:
            raise ParameterError(f"epsilon must lie in [-1/2, 1/2], got {self.epsilon}")


@dataclass(frozen=True)
class MinimaxResult:
    delta: float
    eta_star: float
    eps_star_at_eta_star: float
    evaluations: int


def gain_from_probs(P_b: float, P_D: float, R: float) -> float:
    """Bob's expected gain from his find and detection probabilities"""
    return P_b + (1.0 - P_b) * (P_D * R - (1.0 - P_D))


def prob_found_closed(eta, epsilon):
    """Probability that Bob finds the particle in b (epsilon family)"""
    return (0.5 - epsilon) * (1.0 - eta)


def prob_detect_closed(eta, epsilon):
    """Probability that Bob's verification fails (epsilon family)"""
    root = np.sqrt(np.clip(1.0 - 4.0 * np.square(epsilon), 0.0, None))
    numerator = 2.0 * eta * (1.0 - root)
    denominator = (1.0 + eta) ** 2 + 2.0 * epsilon * (1.0 - eta ** 2)
    # zero only at eta = 0, epsilon = -1/2, where Bob always finds the particle
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, numerator / safe, 0.0)


def gain_surface(R, eta, epsilon):
    """Vectorized gain of Bob; broadcasts over numpy arrays"""
    root = np.sqrt(np.clip(1.0 - 4.0 * np.square(epsilon), 0.0, None))
    bracket = 2.0 * epsilon * (1.0 - eta ** 2) + eta * (eta + root) - eta * (1.0 - root) * R
    return -bracket / (1.0 + eta)


def _gain_scalar(R: float, eta: float, epsilon: float) -> float:
    root = math.sqrt(max(1.0 - 4.0 * epsilon * epsilon, 0.0))
    bracket = 2.0 * epsilon * (1.0 - eta * eta) + eta * (eta + root) - eta * (1.0 - root) * R
    return -bracket / (1.0 + eta)


def gain_bob(params: GainParams) -> float:
    return _gain_scalar(params.R, params.eta, params.epsilon)


def _inner_minimum(R: float, eta: float, tol: float) -> Tuple[float, float, int]:
    """(eps*, G_min, evaluations) for Alice's best reply to a fixed eta"""
    grid = np.linspace(-0.5, 0.5, EPS_GUARD_POINTS)
    scan = gain_surface(R, eta, grid)
    evaluations = EPS_GUARD_POINTS

    search = golden_section_minimize(lambda e: _gain_scalar(R, eta, e), 0.0, 0.5, tol)
    evaluations += search.evaluations
    best_eps, best_value = search.x, search.value

    # the minimum sits on the boundary when eta = 0
    for edge in (0.0, 0.5):
        value = _gain_scalar(R, eta, edge)
        evaluations += 1
        if value < best_value:
            best_eps, best_value = edge, value

    i = int(np.argmin(scan))
    if scan[i] < best_value - config.IDENTITY_TOL:
        logger.debug("Guard scan beat the nonnegative search at R=%g eta=%g", R, eta)
        lo, hi = bracket_around(grid, i)
        refined = golden_section_minimize(lambda e: _gain_scalar(R, eta, e), lo, hi, tol)
        evaluations += refined.evaluations
        if refined.value < best_value:
            best_eps, best_value = refined.x, refined.value
        if scan[i] < best_value:
            best_eps, best_value = float(grid[i]), float(scan[i])

    return best_eps, best_value, evaluations


def min_gain_over_eps(R: float, eta: float, tol: Optional[float] = None) -> Tuple[float, float]:
    """Alice's worst-for-Bob epsilon at a fixed splitting parameter"""
    _check_reward(R)
    _check_eta(eta)
    eps_star, g_min, _ = _inner_minimum(R, eta, config.OPTIMIZE_TOL if tol is None else tol)
    return eps_star, g_min


def minimax_numeric(R: float, tol: Optional[float] = None) -> MinimaxResult:
    """max over eta of min over epsilon, by scan plus golden-section refinement"""
    _check_reward(R)
    tol = config.OPTIMIZE_TOL if tol is None else tol

    grid = np.linspace(0.0, 1.0, ETA_SCAN_POINTS)
    evaluations = 0
    values = np.empty_like(grid)
    for j, eta in enumerate(grid):
        _, values[j], spent = _inner_minimum(R, float(eta), tol)
        evaluations += spent

    counter = {"evaluations": 0}

    def outer(eta: float) -> float:
        _, value, spent = _inner_minimum(R, eta, tol)
        counter["evaluations"] += spent
        return value

    lo, hi = bracket_around(grid, int(np.argmax(values)))
    peak = golden_section_maximize(outer, lo, hi, tol)
    eps_star, delta, spent = _inner_minimum(R, peak.x, tol)
    evaluations += counter["evaluations"] + spent

    logger.debug("minimax R=%g: delta=%.12f eta*=%.12f after %d evaluations", R, delta, peak.x, evaluations)
    return MinimaxResult(delta=delta, eta_star=peak.x, eps_star_at_eta_star=eps_star, evaluations=evaluations)


def _eta_tilde_squared(R: float) -> float:
    # R + 2 - sqrt((R + 2)^2 - 1), rationalized to avoid cancellation at large R
    x = R + 2.0
    return 1.0 / (x + math.sqrt(x * x - 1.0))


def eta_tilde(R: float) -> float:
    """Bob's minimax splitting parameter"""
    _check_reward(R)
    return math.sqrt(_eta_tilde_squared(R))


def delta_closed(R: float) -> float:
    """Bob's guaranteed expected gain in closed form"""
    _check_reward(R)
    gap = _eta_tilde_squared(R)  # equals R + 2 - sqrt((R + 2)^2 - 1)
    eta = math.sqrt(gap)
    return -(2.0 + (gap - 2.0) * (1.0 - eta)) / (1.0 + eta)


def asymptotics(R: float) -> Tuple[float, float]:
    """Large-R approximations (delta, eta~)"""
    _check_reward(R)
    return -math.sqrt(2.0 / R), math.sqrt(1.0 / (2.0 * R))


def honest_play_gain(R: float) -> float:
    """Bob's expected gain when both parties follow the protocol"""
    return -eta_tilde(R)


def eps_star_closed(R: float, eta: float) -> float:
    """Stationary point of the gain in epsilon; validated against the numeric search"""
    _check_reward(R)
    _check_eta(eta)
    if eta == 0.0:
        return 0.5
    k = (1.0 - eta * eta) / (2.0 * eta * (1.0 + R))
    return k / math.sqrt(1.0 + 4.0 * k * k)


def worst_case_detection_prob(R: float) -> float:
    """Detection probability at the minimax point (eta~, eps*)"""
    eta = eta_tilde(R)
    eps_star, _ = min_gain_over_eps(R, eta)
    return float(prob_detect_closed(eta, eps_star))


def max_games_advisory(R: float) -> float:
    """1/delta^2; the number of games played should stay well below this"""
    return 1.0 / delta_closed(R) ** 2


def advisory_ratio(games: int, R: float) -> float:
    """N * delta^2; values near or above 1 mean the session is too long to be attractive"""
    return games * delta_closed(R) ** 2


def coin_toss_win_probability(R: float = 1.0) -> float:
    """Guaranteed probability of Bob's winning outcome, read as a coin toss"""
    return (1.0 + delta_closed(R)) / 2.0


def gain_stddev(R: float, eta: float, epsilon: float) -> float:
    """Single-game standard deviation of Bob's gain over the payoffs {+1, +R, -1}"""
    params = GainParams(R, eta, epsilon)
    p_b = prob_found_closed(params.eta, params.epsilon)
    p_d = float(prob_detect_closed(params.eta, params.epsilon))
    p_win_r = (1.0 - p_b) * p_d
    p_lose = (1.0 - p_b) * (1.0 - p_d)
    mean = p_b + R * p_win_r - p_lose
    second = p_b + R * R * p_win_r + p_lose
    return math.sqrt(max(second - mean * mean, 0.0))


def honest_play_stddev(R: float) -> float:
    return gain_stddev(R, eta_tilde(R), 0.0)


def preparation_gain(prep: Preparation, eta: float, R: float) -> float:
    """Bob's expected gain against an arbitrary preparation, via the state simulator"""
    _check_reward(R)
    split = split_b(prepare(prep), eta)
    p_b = prob_in_mode(split, MODE_B)
    if p_b >= 1.0 - config.IDENTITY_TOL:
        return gain_from_probs(1.0, 0.0, R)
    not_found = project_mode(split, MODE_B, found=False).post_state
    return gain_from_probs(p_b, prob_detect(not_found, eta), R)


@dataclass(frozen=True)
class AnalysisRow:
    R: float
    delta: float
    eta_tilde: float
    delta_approx: float
    eta_approx: float
    gain_protocol: float
    detect_worst: float
    games_advisory: float

    COLUMNS = (
        "R", "delta", "eta_tilde", "delta_approx", "eta_approx",
        "gain_protocol", "detect_worst", "games_advisory",
    )

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.COLUMNS)


def analyze(R_values: Sequence[float]) -> List[AnalysisRow]:
    """One row of closed-form quantities per reward ratio"""
    rows = []
    for R in R_values:
        delta_approx, eta_approx = asymptotics(R)
        rows.append(AnalysisRow(
            R=float(R),
            delta=delta_closed(R),
            eta_tilde=eta_tilde(R),
            delta_approx=delta_approx,
            eta_approx=eta_approx,
            gain_protocol=honest_play_gain(R),
            detect_worst=worst_case_detection_prob(R),
            games_advisory=max_games_advisory(R),
        ))
    return rows


@dataclass(frozen=True)
class VerificationPoint:
    R: float
    delta_numeric: float
    delta_closed: float
    eta_numeric: float
    eta_closed: float

    @property
    def deviation(self) -> float:
        return max(abs(self.delta_numeric - self.delta_closed), abs(self.eta_numeric - self.eta_closed))


@dataclass(frozen=True)
class VerificationReport:
    tol: float
    points: List[VerificationPoint] = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        return max((p.deviation for p in self.points), default=0.0)

    @property
    def failures(self) -> List[VerificationPoint]:
        return [p for p in self.points if p.deviation > self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures


def log_spaced(r_min: float, r_max: float, points: int) -> List[float]:
    if points < 1:
        raise ParameterError(f"points must be >= 1, got {points}")
    _check_reward(r_min)
    _check_reward(r_max)
    if r_min > r_max:
        raise ParameterError(f"r_min {r_min} exceeds r_max {r_max}")
    if points == 1:
        return [float(r_min)]
    return [float(r) for r in np.geomspace(r_min, r_max, points)]


def verify_range(
    r_min: float,
    r_max: float,
    points: int,
    tol: float = 1e-6,
    delta_formula: Callable[[float], float] = delta_closed,
    eta_formula: Callable[[float], float] = eta_tilde,
) -> VerificationReport:
    """Compare the numeric minimax oracle with the closed forms over a log grid"""
    report = VerificationReport(tol=tol)
    for R in log_spaced(r_min, r_max, points):
        result = minimax_numeric(R)
        report.points.append(VerificationPoint(
            R=R,
            delta_numeric=result.delta,
            delta_closed=delta_formula(R),
            eta_numeric=result.eta_star,
            eta_closed=eta_formula(R),
        ))
    logger.info("Verified %d reward ratios; max deviation %.3e", len(report.points), report.max_deviation)
    return report
