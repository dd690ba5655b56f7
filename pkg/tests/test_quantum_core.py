"""
Tests for src/quantum_core.py: state preparation, splitting, measurement and
the verification projection.
"""
import math

import numpy as np
import pytest

from src.exceptions import InternalConsistencyError, InvalidPreparationError, ParameterError
from src.quantum_core import (
    MODE_A,
    MODE_B,
    MODE_BPRIME,
    EpsilonPreparation,
    GeneralPreparation,
    ModeKind,
    ModeLabel,
    QuantumState,
    basis_modes,
    measure_mode,
    mode_c,
    prepare,
    prob_detect,
    prob_in_mode,
    project_mode,
    reference_overlap,
    reference_state,
    split_b,
    verify_preparation,
)
from src.strategy_analysis import prob_detect_closed, prob_found_closed


class TestModeLabels:
    def test_parse_round_trip(self):
        for label in (MODE_A, MODE_B, MODE_BPRIME, mode_c(0), mode_c(7)):
            assert ModeLabel.parse(str(label)) == label

    def test_unknown_label_rejected(self):
        with pytest.raises(ParameterError):
            ModeLabel.parse("D")

    def test_index_only_on_extra_boxes(self):
        with pytest.raises(ParameterError):
            ModeLabel(ModeKind.A, 1)

    def test_basis_order(self):
        assert basis_modes(2) == (MODE_A, MODE_B, MODE_BPRIME, mode_c(0), mode_c(1))


class TestPrepare:
    def test_reference_state_amplitudes(self):
        s = prepare(EpsilonPreparation(0.0))
        assert s.amplitude(MODE_A) == pytest.approx(math.sqrt(0.5))
        assert s.amplitude(MODE_B) == pytest.approx(math.sqrt(0.5))
        assert s.amplitude(MODE_BPRIME) == 0
        assert s.norm() == pytest.approx(1.0, abs=1e-12)

    def test_biased_state(self):
        s = prepare(EpsilonPreparation(0.3))
        assert prob_in_mode(s, MODE_A) == pytest.approx(0.8)
        assert prob_in_mode(s, MODE_B) == pytest.approx(0.2)

    def test_epsilon_out_of_range(self):
        with pytest.raises(InvalidPreparationError):
            EpsilonPreparation(0.6)

    def test_extreme_epsilon_puts_everything_in_a(self):
        s = prepare(EpsilonPreparation(0.5))
        assert prob_in_mode(s, MODE_A) == pytest.approx(1.0)

    def test_general_preparation_rejects_bprime(self):
        with pytest.raises(InvalidPreparationError):
            GeneralPreparation({(MODE_BPRIME, 0): 1.0})

    def test_general_preparation_rejects_unnormalized(self):
        with pytest.raises(InvalidPreparationError):
            GeneralPreparation({(MODE_A, 0): 1.0, (MODE_B, 0): 1.0})

    def test_general_preparation_rejects_zero_state(self):
        with pytest.raises(InvalidPreparationError):
            GeneralPreparation.from_unnormalized({(MODE_A, 0): 0.0})

    def test_general_preparation_rejects_missing_box(self):
        with pytest.raises(InvalidPreparationError):
            GeneralPreparation({(mode_c(5), 0): 1.0}, num_extra_boxes=2)

    def test_from_unnormalized(self):
        prep = GeneralPreparation.from_unnormalized({(MODE_A, 0): 3.0, (MODE_B, 1): 4.0j}, ancilla_dim=2)
        s = prepare(prep)
        assert s.norm() == pytest.approx(1.0, abs=1e-12)
        assert prob_in_mode(s, MODE_A) == pytest.approx(9 / 25)
        assert s.ancilla_dim == 2

    def test_general_equal_superposition_is_reference(self):
        half = math.sqrt(0.5)
        assert GeneralPreparation({(MODE_A, 0): half, (MODE_B, 0): half}).is_reference
        assert not GeneralPreparation({(MODE_A, 0): half, (MODE_B, 0): -half}).is_reference

    def test_state_must_be_normalized(self):
        with pytest.raises(ParameterError):
            QuantumState(np.zeros((5, 1)))

    def test_bprime_empty_before_split(self):
        amplitudes = np.zeros((5, 1), dtype=complex)
        amplitudes[2, 0] = 1.0
        with pytest.raises(ParameterError):
            QuantumState(amplitudes)

    def test_state_is_immutable(self):
        s = prepare(EpsilonPreparation(0.0))
        with pytest.raises(ValueError):
            s.amplitudes[0, 0] = 0.0


class TestSplit:
    @pytest.mark.parametrize("eta", [0.0, 0.25, 0.5, 1.0])
    def test_split_probabilities(self, eta):
        s = split_b(prepare(EpsilonPreparation(0.1)), eta)
        assert prob_in_mode(s, MODE_B) == pytest.approx(prob_found_closed(eta, 0.1))
        assert prob_in_mode(s, MODE_BPRIME) == pytest.approx(0.4 * eta)

    def test_split_preserves_norm(self, rng):
        for _ in range(200):
            prep = GeneralPreparation.random(rng, ancilla_dim=3)
            s = split_b(prepare(prep), float(rng.random()))
            assert s.norm() == pytest.approx(1.0, abs=1e-12)

    def test_split_rejects_bad_eta(self):
        with pytest.raises(ParameterError):
            split_b(prepare(EpsilonPreparation(0.0)), 1.5)

    def test_split_only_once(self):
        s = split_b(prepare(EpsilonPreparation(0.0)), 0.3)
        with pytest.raises(ParameterError):
            split_b(s, 0.3)


class TestMeasurement:
    def test_born_rule_frequencies(self):
        rng = np.random.default_rng(7)
        s = split_b(prepare(EpsilonPreparation(0.0)), 0.3)
        p = prob_in_mode(s, MODE_B)
        trials = 100000
        found = sum(measure_mode(s, MODE_B, rng).found for _ in range(trials))
        sigma = math.sqrt(trials * p * (1 - p))
        assert abs(found - trials * p) <= 4 * sigma

    def test_projection_branches(self):
        s = split_b(prepare(EpsilonPreparation(0.0)), 0.5)
        hit = project_mode(s, MODE_B, True)
        miss = project_mode(s, MODE_B, False)
        assert prob_in_mode(hit.post_state, MODE_B) == pytest.approx(1.0)
        assert prob_in_mode(miss.post_state, MODE_B) == pytest.approx(0.0)
        assert hit.probability_used + miss.probability_used == pytest.approx(1.0)

    def test_impossible_branch_raises(self):
        s = prepare(EpsilonPreparation(0.5))
        with pytest.raises(InternalConsistencyError):
            project_mode(s, MODE_B, True)

    def test_measurement_uses_one_draw(self):
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        s = prepare(EpsilonPreparation(0.5))
        measure_mode(s, MODE_A, a)
        b.random()
        assert a.random() == b.random()


class TestVerification:
    @pytest.mark.parametrize("eta", [0.0, 0.2, 0.7, 1.0])
    def test_reference_always_passes(self, eta):
        rng = np.random.default_rng(11)
        s = reference_state(eta)
        assert prob_detect(s, eta) == pytest.approx(0.0, abs=1e-12)
        for _ in range(100):
            assert verify_preparation(s, eta, rng).found

    def test_honest_miss_state_is_reference(self):
        eta = 0.4
        split = split_b(prepare(EpsilonPreparation(0.0)), eta)
        missed = project_mode(split, MODE_B, False).post_state
        assert missed.isclose(reference_state(eta))

    @pytest.mark.parametrize("eps", [-0.4, -0.1, 0.05, 0.3, 0.5])
    @pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
    def test_detection_matches_closed_form(self, eps, eta):
        split = split_b(prepare(EpsilonPreparation(eps)), eta)
        missed = project_mode(split, MODE_B, False).post_state
        assert prob_detect(missed, eta) == pytest.approx(float(prob_detect_closed(eta, eps)), abs=1e-12)

    def test_extra_box_amplitude_is_always_detected(self):
        prep = GeneralPreparation({(mode_c(0), 0): 1.0})
        s = split_b(prepare(prep), 0.3)
        assert prob_detect(s, 0.3) == pytest.approx(1.0)

    def test_post_states_are_normalized(self):
        rng = np.random.default_rng(5)
        eta = 0.3
        prep = GeneralPreparation.random(rng, ancilla_dim=2)
        split = split_b(prepare(prep), eta)
        missed = project_mode(split, MODE_B, False).post_state
        for _ in range(20):
            outcome = verify_preparation(missed, eta, rng)
            assert outcome.post_state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_reference_overlap(self):
        assert reference_overlap(prepare(EpsilonPreparation(0.0))) == pytest.approx(1.0)
        assert reference_overlap(prepare(EpsilonPreparation(0.5))) == pytest.approx(0.5)
