import numpy as np
import pytest

from crowdmodal.beam import reference_shape
from crowdmodal.decontamination import decontaminate, detect_bump_template
from crowdmodal.pipeline import _lab
from crowdmodal import studies

N_X = 200
X = np.linspace(0, 3.06, N_X)
BUMP_COLS = [29, 65, 104, 137, 170]


def synthetic_traces(n=60, spikes=1.0, seed=0):
    rng = np.random.default_rng(seed)
    smooth = np.abs(np.sin(2 * np.pi * X / 3.06))
    amp = rng.uniform(0.5, 1.5, (n, 1))
    traces = amp * smooth + 0.05 * rng.normal(size=(n, N_X))
    spike = np.zeros(N_X)
    spike[BUMP_COLS] = 1.0
    return np.abs(traces) + spikes * rng.uniform(0.5, 1.5, (n, 1)) * spike, smooth, spike


def test_removes_shared_spikes():
    traces, smooth, spike = synthetic_traces()
    res = decontaminate(traces)
    assert res.removed >= 1
    before = np.abs(traces.mean(axis=0)[BUMP_COLS] - traces.mean(axis=0)[[c + 2 for c in BUMP_COLS]]).mean()
    after = np.abs(res.traces.mean(axis=0)[BUMP_COLS] - res.traces.mean(axis=0)[[c + 2 for c in BUMP_COLS]]).mean()
    assert after <= 0.2 * before


def test_nothing_to_remove():
    traces, smooth, _ = synthetic_traces(spikes=0.0)
    res = decontaminate(traces)
    rms = np.sqrt(np.mean((res.traces.mean(axis=0) - traces.mean(axis=0)) ** 2))
    assert rms <= 0.02 * np.sqrt(np.mean(traces.mean(axis=0) ** 2))


def test_detected_template_marks_spikes():
    traces, _, _ = synthetic_traces()
    tmpl = detect_bump_template(traces)
    top = np.sort(np.argsort(tmpl)[-5:])
    assert list(top) == BUMP_COLS


def test_nan_cells_restored():
    traces, _, _ = synthetic_traces()
    traces[:5, :20] = np.nan
    res = decontaminate(traces)
    assert np.isnan(res.traces[:5, :20]).all()
    assert np.isfinite(res.traces[5:]).all()


def test_errors():
    traces, _, _ = synthetic_traces(n=9)
    with pytest.raises(ValueError, match="at least 10"):
        decontaminate(traces)
    traces, _, _ = synthetic_traces()
    with pytest.raises(ValueError):
        decontaminate(traces[0])
    with pytest.raises(ValueError):
        decontaminate(traces, template=np.ones(7))
    with pytest.raises(ValueError):
        decontaminate(traces, n_components=0)


def _mode3_stack(corpus, overrides):
    cfg, by_lane = corpus("medium240", overrides)
    lab = _lab(cfg)
    stack = studies.row_stack(by_lane[0.28], 12.34)
    return stack, reference_shape(lab.model, lab.spec, 2, lab.grid.positions, 0.28)


def test_zero_severity_leaves_mean_shape(corpus):
    stack, ref = _mode3_stack(corpus, {"bumps.severity": 0.0})
    eff = studies.decontamination_effect(stack, ref)
    diff = eff["shape_after"] - eff["shape_before"]
    assert np.sqrt(np.mean(diff ** 2)) <= 0.02 * np.sqrt(np.mean(eff["shape_before"] ** 2))


def test_bumpy_corpus_mode3_mse_reduced(corpus):
    stack, ref = _mode3_stack(corpus, None)
    eff = studies.decontamination_effect(stack, ref)
    assert eff["mse_after"] <= 0.7 * eff["mse_before"]
