from __future__ import annotations

import warnings

import numpy as np
import pytest

from flutekit.align import (
    AlignmentError,
    apply_offset,
    check_drift,
    detect_onsets,
    estimate_offset,
)
from flutekit.cli import PipelineConfig, analyze_session
from flutekit.model import build_default_script, generate_session


class TestDetectOnsets:
    def test_constructed_spikes(self):
        signal = np.zeros(40)
        for k in (10, 15, 20, 25, 30):
            signal[k] = 1.0
        assert detect_onsets(signal) == [10, 15, 20, 25, 30]

    def test_constant_signal(self):
        assert detect_onsets(np.full(20, 3.0)) == [0]
        assert detect_onsets(np.zeros(20)) == []

    def test_debounce(self):
        signal = np.zeros(30)
        signal[10] = signal[11] = signal[12] = 1.0
        signal[20] = 1.0
        assert detect_onsets(signal) == [10, 20]

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            detect_onsets(np.zeros(10), rel_threshold=1.5)


class TestEstimateOffset:
    def test_exact_shift(self):
        a = [10, 25, 60, 100, 140]
        p = [x + 3 for x in a]
        res = estimate_offset(a, p)
        assert res.offset_hops == 3
        assert res.score == 1.0

    def test_identity(self):
        a = [5, 30, 77]
        assert estimate_offset(a, a).offset_hops == 0

    def test_negative_shift(self):
        a = [50, 80, 120, 200]
        p = [x - 12 for x in a]
        assert estimate_offset(a, p).offset_hops == -12

    def test_jittered_shift(self):
        # oracle: the injected lag; jitter below the matching tolerance
        rng = np.random.default_rng(42)
        base = np.sort(rng.choice(np.arange(0, 600, 5), size=15, replace=False))
        for lag in (-150, -7, 0, 7, 63, 199):
            a = np.round(base + rng.uniform(-0.4, 0.4, base.size)).astype(int)
            p = np.round(base + lag + rng.uniform(-0.4, 0.4, base.size)).astype(int)
            assert estimate_offset(sorted(a), sorted(p)).offset_hops == lag

    def test_no_overlap_fails(self):
        with pytest.raises(AlignmentError):
            estimate_offset([10, 20], [3000, 3010], max_lag=100)

    def test_empty_fails(self):
        with pytest.raises(AlignmentError):
            estimate_offset([], [1, 2])


class TestApplyOffset:
    def test_zero_offset_identity(self, small_analysis):
        table = small_analysis.table
        out = apply_offset(table, 0)
        np.testing.assert_array_equal(out.pressure_pa, table.pressure_pa)

    def test_invertible_interior(self, small_analysis):
        table = small_analysis.table
        out = apply_offset(apply_offset(table, 3), -3)
        interior = slice(5, len(table) - 5)
        np.testing.assert_array_equal(
            out.pressure_pa[interior], table.pressure_pa[interior]
        )

    def test_offset_recorded(self, small_analysis):
        base = small_analysis.table.meta.offset_hops
        out = apply_offset(small_analysis.table, 4)
        assert out.meta.offset_hops == base + 4

    def test_too_large(self, small_analysis):
        with pytest.raises(ValueError):
            apply_offset(small_analysis.table, len(small_analysis.table))


class TestSessionAlignment:
    def test_injected_lag_recovered(self, small_analysis):
        assert small_analysis.alignment.offset_hops == 7

    def test_no_drift_within_one_hop(self, small_analysis):
        assert small_analysis.alignment.drift_hops is not None
        assert abs(small_analysis.alignment.drift_hops) <= 1.0

    def test_injected_drift_detected(self, ref_model, grid):
        # oracle: the injected end-of-session drift; the session must be
        # long enough for it to express at the last note attacks
        script = build_default_script(
            ref_model, repetitions=1, lag_hops=7,
            drift_hops=2.0, baseline_pa=101300.0, pressure_noise_pa=0.6,
            audio_noise=2e-4, seed=19,
        )
        session = generate_session(script, ref_model, grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = analyze_session(session.audio_wav, session.pressure_log,
                                     PipelineConfig())
        assert result.alignment.drift_hops == pytest.approx(2.0, abs=1.0)

    def test_single_note_drift_unavailable(self, ref_model, grid):
        script = build_default_script(
            ref_model, bases=(60,), repetitions=1, baseline_pa=101300.0, seed=3
        )
        session = generate_session(script, ref_model, grid)
        from flutekit.features import extract_features
        from flutekit.ingest import load_audio, parse_pressure_log

        table = extract_features(
            load_audio(session.audio_wav, grid),
            parse_pressure_log(session.pressure_log),
            grid,
        )
        res = estimate_offset(
            detect_onsets(table.amplitude),
            detect_onsets(np.diff(table.pressure_pa, prepend=table.pressure_pa[0])),
        )
        with pytest.warns(UserWarning, match="drift unavailable"):
            assert check_drift(table, res) is None
