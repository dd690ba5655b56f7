"""
Strategies Module
Alice and Bob strategy configurations and the descriptor grammar used by the
CLI, the HTTP API and the experiment harness.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.exceptions import ParameterError
from src.quantum_core import EpsilonPreparation, GeneralPreparation, Preparation
from src.strategy_analysis import eta_tilde, min_gain_over_eps

ALICE_GRAMMAR = "honest | eps=<x in [-0.5, 0.5]> | eps=worst | general-seed=<int>"
BOB_GRAMMAR = "honest | eta=<x> | liar=<p> | false-claim=<p> | never-verify, optionally followed by ,eta=<x>"

GENERAL_ANCILLA_DIM = 2


class AliceVariant(str, enum.Enum):
    HONEST = "honest"
    BIASED = "biased"
    GENERAL = "general"


class BobVariant(str, enum.Enum):
    HONEST = "honest"
    NEVER_VERIFY = "never-verify"
    LIAR = "liar"
    FALSE_CLAIM = "false-claim"


@dataclass(frozen=True)
class AliceStrategyCfg:
    """How Alice prepares the particle.

    Honest is the same as Biased(0). General draws one random preparation
    (with an ancilla) from ``general_seed`` and reuses it for every game.
    """

    variant: AliceVariant = AliceVariant.HONEST
    epsilon: float = 0.0
    general_seed: Optional[int] = None
    ancilla_dim: int = GENERAL_ANCILLA_DIM

    def __post_init__(self):
        if not -0.5 <= self.epsilon <= 0.5:
            raise ParameterError(f"epsilon must lie in [-1/2, 1/2], got {self.epsilon}")
        if self.variant is AliceVariant.GENERAL and self.general_seed is None:
            raise ParameterError("A general preparation needs a seed")
        if self.ancilla_dim < 1:
            raise ParameterError(f"ancilla_dim must be >= 1, got {self.ancilla_dim}")

    @classmethod
    def honest(cls) -> "AliceStrategyCfg":
        return cls()

    @classmethod
    def biased(cls, epsilon: float) -> "AliceStrategyCfg":
        return cls(AliceVariant.BIASED, epsilon=epsilon)

    @classmethod
    def general(cls, seed: int, ancilla_dim: int = GENERAL_ANCILLA_DIM) -> "AliceStrategyCfg":
        return cls(AliceVariant.GENERAL, general_seed=seed, ancilla_dim=ancilla_dim)

    @functools.cached_property
    def _general_preparation(self) -> GeneralPreparation:
        return GeneralPreparation.random(np.random.default_rng(self.general_seed), ancilla_dim=self.ancilla_dim)

    def preparation(self) -> Preparation:
        if self.variant is AliceVariant.GENERAL:
            return self._general_preparation
        return EpsilonPreparation(self.epsilon)

    @property
    def is_reference(self) -> bool:
        """True when Alice prepares the equal superposition"""
        if self.variant is AliceVariant.GENERAL:
            return self._general_preparation.is_reference
        return self.epsilon == 0.0

    @property
    def descriptor(self) -> str:
        if self.variant is AliceVariant.GENERAL:
            return f"general-seed={self.general_seed}"
        if self.variant is AliceVariant.BIASED:
            return f"eps={self.epsilon!r}"
        return "honest"


@dataclass(frozen=True)
class BobStrategyCfg:
    """How Bob splits box B and what he reports.

    ``lie_prob`` is the probability that a Liar reports detection regardless of
    his verification; for FalseClaim it is the probability of claiming a win
    after not finding the particle.
    """

    variant: BobVariant
    eta: float
    lie_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"Splitting parameter eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.lie_prob <= 1.0:
            raise ParameterError(f"Lie probability must lie in [0, 1], got {self.lie_prob}")

    @classmethod
    def honest(cls, eta: float) -> "BobStrategyCfg":
        return cls(BobVariant.HONEST, eta)

    @classmethod
    def never_verify(cls, eta: float = 0.0) -> "BobStrategyCfg":
        return cls(BobVariant.NEVER_VERIFY, eta)

    @classmethod
    def liar(cls, eta: float, lie_prob: float) -> "BobStrategyCfg":
        return cls(BobVariant.LIAR, eta, lie_prob)

    @classmethod
    def false_claim(cls, eta: float, claim_prob: float) -> "BobStrategyCfg":
        return cls(BobVariant.FALSE_CLAIM, eta, claim_prob)

    @property
    def claim_prob(self) -> float:
        return self.lie_prob if self.variant is BobVariant.FALSE_CLAIM else 0.0

    @property
    def descriptor(self) -> str:
        if self.variant is BobVariant.LIAR:
            return f"liar={self.lie_prob!r},eta={self.eta!r}"
        if self.variant is BobVariant.FALSE_CLAIM:
            return f"false-claim={self.lie_prob!r},eta={self.eta!r}"
        if self.variant is BobVariant.NEVER_VERIFY:
            return f"never-verify,eta={self.eta!r}"
        return f"eta={self.eta!r}"


def _number(text: str, what: str, grammar: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"Invalid {what} {text!r}; expected {grammar}") from None


def parse_alice(text: str, R: float) -> AliceStrategyCfg:
    """Parse an Alice descriptor; ``eps=worst`` is resolved numerically at eta~(R)"""
    text = text.strip()
    if text == "honest":
        return AliceStrategyCfg.honest()
    key, sep, value = text.partition("=")
    if sep and key == "eps":
        if value == "worst":
            eps_star, _ = min_gain_over_eps(R, eta_tilde(R))
            return AliceStrategyCfg.biased(eps_star)
        return AliceStrategyCfg.biased(_number(value, "epsilon", ALICE_GRAMMAR))
    if sep and key == "general-seed":
        if not value.isdigit():
            raise ParameterError(f"Invalid seed {value!r}; expected {ALICE_GRAMMAR}")
        return AliceStrategyCfg.general(int(value))
    raise ParameterError(f"Unknown Alice strategy {text!r}; expected {ALICE_GRAMMAR}")


def parse_bob(text: str, R: float) -> BobStrategyCfg:
    """Parse a Bob descriptor; eta defaults to eta~(R), or 0 for never-verify"""
    parts = [p.strip() for p in text.strip().split(",") if p.strip()]
    if not parts or len(parts) > 2:
        raise ParameterError(f"Invalid Bob strategy {text!r}; expected {BOB_GRAMMAR}")

    eta: Optional[float] = None
    if len(parts) == 2:
        key, sep, value = parts[1].partition("=")
        if key != "eta" or not sep:
            raise ParameterError(f"Invalid Bob option {parts[1]!r}; expected {BOB_GRAMMAR}")
        eta = _number(value, "eta", BOB_GRAMMAR)

    head = parts[0]
    key, sep, value = head.partition("=")
    if head == "honest":
        return BobStrategyCfg.honest(eta_tilde(R) if eta is None else eta)
    if head == "never-verify":
        return BobStrategyCfg.never_verify(0.0 if eta is None else eta)
    if sep and key == "eta":
        if eta is not None:
            raise ParameterError(f"eta given twice in {text!r}")
        return BobStrategyCfg.honest(_number(value, "eta", BOB_GRAMMAR))
    if sep and key == "liar":
        return BobStrategyCfg.liar(eta_tilde(R) if eta is None else eta, _number(value, "lie probability", BOB_GRAMMAR))
    if sep and key == "false-claim":
        return BobStrategyCfg.false_claim(
            eta_tilde(R) if eta is None else eta, _number(value, "claim probability", BOB_GRAMMAR)
        )
    raise ParameterError(f"Unknown Bob strategy {text!r}; expected {BOB_GRAMMAR}")
