import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiport_lab.linalg import entanglement_entropy, fidelity
from multiport_lab.source import (
    DETECTION_WINDOW,
    DriftModel,
    SourceConfig,
    accidental_rate,
    apply_drift,
    entangled_state,
)

phase_lists = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


@st.composite
def amplitude_vectors(draw, n=3):
    raw = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda v: sum(x * x for x in v) > 1e-3))
    norm = math.sqrt(sum(x * x for x in raw))
    return tuple(x / norm for x in raw)


class TestEntangledState:
    def test_equal_superposition(self):
        psi = entangled_state(SourceConfig(n=3))
        expected = np.zeros(9)
        expected[[0, 4, 8]] = 1 / math.sqrt(3)
        np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-15)

    def test_product_state(self):
        psi = entangled_state(SourceConfig(n=2, amplitudes=(1.0, 0.0)))
        np.testing.assert_allclose(psi.amplitudes, [1, 0, 0, 0], atol=1e-15)
        assert entanglement_entropy(psi) == pytest.approx(0.0, abs=1e-12)

    def test_sign_flip_fidelity(self):
        ref = entangled_state(SourceConfig(n=3))
        flipped = entangled_state(SourceConfig(n=3, phases_a=(0.0, math.pi, 0.0)))
        assert flipped.amplitudes[4] == pytest.approx(-1 / math.sqrt(3), abs=1e-15)
        # |(1/3)(1 - 1 + 1)|^2
        assert fidelity(ref, flipped) == pytest.approx(1 / 9, abs=1e-14)

    def test_phase_difference_convention(self):
        # only phi_k - phi'_k enters
        a = entangled_state(SourceConfig(n=3, phases_a=(0.1, 0.9, 2.0), phases_b=(0.1, 0.4, 1.0)))
        b = entangled_state(SourceConfig(n=3, phases_a=(0.0, 0.5, 1.0)))
        np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-15)

    @given(amplitude_vectors(), phase_lists, phase_lists)
    @settings(max_examples=50, deadline=None)
    def test_normalized_and_diagonal(self, amps, pa, pb):
        psi = entangled_state(SourceConfig(n=3, amplitudes=amps, phases_a=pa, phases_b=pb))
        assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-12)
        c = psi.as_matrix()
        assert np.all(c[~np.eye(3, dtype=bool)] == 0)

    @given(amplitude_vectors(), phase_lists, phase_lists)
    @settings(max_examples=50, deadline=None)
    def test_side_a_phases_leave_entropy_unchanged(self, amps, pa, pa2):
        s1 = entangled_state(SourceConfig(n=3, amplitudes=amps, phases_a=pa))
        s2 = entangled_state(SourceConfig(n=3, amplitudes=amps, phases_a=pa2))
        assert abs(entanglement_entropy(s1) - entanglement_entropy(s2)) <= 1e-12


class TestSourceConfig:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            SourceConfig(n=2, amplitudes=(1.0, 1.0))

    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError):
            SourceConfig(pair_rate=-1.0)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            SourceConfig(n=3, phases_a=(0.0, 0.0))

    def test_json_round_trip(self):
        cfg = SourceConfig(n=3, phases_a=(0.0, 1.0, 2.0), metadata={"signal_nm": 1551.7})
        assert SourceConfig.from_json(cfg.to_json()) == cfg

    def test_json_rejects_unknown(self):
        doc = SourceConfig().to_json()
        doc["bogus"] = 1
        with pytest.raises(ValueError, match="bogus"):
            SourceConfig.from_json(doc)

    def test_default_window(self):
        assert DETECTION_WINDOW == 2.5e-9
        assert SourceConfig().window == 2.5e-9


class TestDrift:
    def test_zero_sigma(self):
        p = np.array([0.1, 2.0, 5.0])
        assert np.array_equal(apply_drift(p, 1.0, DriftModel(0.0), seed=1), p)

    def test_zero_dt(self):
        p = np.array([0.1, 2.0, 5.0])
        assert np.array_equal(apply_drift(p, 0.0, DriftModel(0.5), seed=1), p)

    def test_increment_statistics(self):
        # start at pi so wrapping never touches increments of size ~0.1
        trials = 100_000
        start = np.full(trials, math.pi)
        inc = apply_drift(start, 1.0, DriftModel(0.1), seed=42) - start
        s = inc.std(ddof=1)
        se = 0.1 / math.sqrt(2 * (trials - 1))
        assert abs(s - 0.1) <= 3 * se
        assert abs(inc.mean()) <= 3 * 0.1 / math.sqrt(trials)

    def test_deterministic_and_wrapped(self):
        p = np.zeros(5)
        a = apply_drift(p, 4.0, DriftModel(3.0), seed=7)
        assert np.array_equal(a, apply_drift(p, 4.0, DriftModel(3.0), seed=7))
        assert np.all((a >= 0) & (a < 2 * math.pi))

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            DriftModel(-0.1)
        with pytest.raises(ValueError):
            apply_drift([0.0], -1.0, DriftModel())


class TestAccidentals:
    def test_operating_point(self):
        assert accidental_rate(1e5, 1e5, 2.5e-9) == pytest.approx(25.0, rel=1e-12)

    def test_zero_window(self):
        assert accidental_rate(1e5, 1e5, 0.0) == 0.0

    def test_zero_singles(self):
        assert accidental_rate(0.0, 1e5, 2.5e-9) == 0.0

    def test_config_property(self):
        assert SourceConfig(singles_a=1e5, singles_b=1e5).accidental_rate == pytest.approx(25.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            accidental_rate(-1.0, 1.0, 1.0)
