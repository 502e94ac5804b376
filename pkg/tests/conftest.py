from __future__ import annotations

import numpy as np
import pytest

from flutekit.cli import PipelineConfig, analyze_session
from flutekit.fit import default_model
from flutekit.ingest import HopGrid
from flutekit.model import NoteScript, SessionScript, build_default_script, generate_session

# Reference constants shared by many tests (see fit.default_model).
META_SLOPE = 0.09498625513471028
META_INTERCEPT = -3.177222804229106
THR_SLOPE = 0.12067771159663639
THR_UP = -3.0908617599208004
THR_DOWN = -3.289717945484731


@pytest.fixture(scope="session")
def grid() -> HopGrid:
    return HopGrid()


@pytest.fixture(scope="session")
def ref_model():
    return default_model()


@pytest.fixture(scope="session")
def small_session(ref_model, grid):
    """Three-note noisy session with a 7-hop injected lag, analyzed once."""
    script = build_default_script(
        ref_model,
        bases=(60, 67, 71),
        repetitions=1,
        lag_hops=7,
        baseline_pa=101300.0,
        pressure_noise_pa=0.6,
        audio_noise=2e-4,
        seed=5,
    )
    return generate_session(script, ref_model, grid)


@pytest.fixture(scope="session")
def small_analysis(small_session):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return analyze_session(
            small_session.audio_wav, small_session.pressure_log, PipelineConfig()
        )


def sine_page(freq: float, n: int = 2048, rate: float = 22050.0, phase: float = 0.0,
              amp: float = 1.0) -> np.ndarray:
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / rate + phase)
