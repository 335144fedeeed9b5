import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdmodal.aggregation import GlobalGrid, SpaceFrequencyMap, aggregate, to_space_frequency
from crowdmodal.beam import reference_shape
from crowdmodal.cwt import MorletParams, cwt, frequency_grid
from crowdmodal.modal import (assemble_3d, confidence_interval, extract_mode_shape, find_modal_peaks, mac,
                              match_reference, pick_peaks, section_cut, shape_mse)
from crowdmodal.pipeline import _lab
from crowdmodal.scans import make_trajectory
from crowdmodal import studies

from oracles import mac_bruteforce

L = 3.06
FREQS = frequency_grid(1.0, 40.0, 201)
GRID = GlobalGrid.uniform(L, FREQS, 200)
X = GRID.positions
TRUTH = (5.51, 9.93, 12.34, 20.26, 24.99)

NO_BUMPS = {"bumps.severity": 0.0}
SINGLE_MODE = {"modes.frequencies": [5.51], "modes.kinds": ["V1"], "noise.std": 0.0, "bumps.severity": 0.0,
               "scan_plan.groups": [{"speed": "medium", "count": 960}], "scan_plan.lanes": [0.28]}
TWO_LANE_CLEAN = {"bumps.severity": 0.0, "scan_plan.groups": [{"speed": "medium", "count": 120}],
                  "scan_plan.lanes": [0.28, 0.0]}


def tone_corpus(f=9.93, n=8, seed=0):
    params = MorletParams(omega0=16.0, frequencies=FREQS)
    rng = np.random.default_rng(seed)
    maps = []
    for k in range(n):
        traj = make_trajectory("medium", L, 0.28, direction="forward" if k % 2 == 0 else "reverse")
        t = np.arange(int(traj.duration * 100) + 1) / 100.0
        env = np.sin(np.pi * traj.position(t) / L)
        sig = env * np.sin(2 * np.pi * f * t + rng.uniform(0, 6.3)) + 0.05 * rng.normal(size=t.size)
        maps.append(to_space_frequency(cwt(sig, 100.0, params), traj, GRID))
    return aggregate(maps)


def test_pick_peaks_default_corpus(corpus):
    cfg, by_lane = corpus("medium240")
    peaks = pick_peaks(aggregate(by_lane[0.28]), band=(2.0, 40.0))
    assert len(peaks) == 5
    for f, ref in zip(peaks, TRUTH):
        assert abs(f - ref) / ref <= 0.015


def test_single_tone_one_peak():
    agg = tone_corpus()
    peaks = pick_peaks(agg)
    assert len(peaks) == 1
    assert peaks[0] == pytest.approx(9.93, rel=0.005)


def test_hybrid_fifth_mode_absent(corpus):
    cfg, by_lane = corpus("hybrid-sim")
    idc = cfg["identify"]
    peaks = pick_peaks(aggregate(by_lane[0.28]), idc["max_modes"], idc["min_prominence_ratio"],
                       band=tuple(idc["band"]))
    assert not any(abs(f - 24.99) / 24.99 < 0.05 for f in peaks)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_peak_scale_invariance(alpha):
    agg = tone_corpus(n=4).as_map()
    scaled = SpaceFrequencyMap(alpha * agg.values, agg.grid, agg.lane, agg.scan_count, agg.normalization)
    assert [p.index for p in find_modal_peaks(agg)] == [p.index for p in find_modal_peaks(scaled)]


def test_peak_arguments():
    agg = tone_corpus(n=2)
    with pytest.raises(ValueError):
        pick_peaks(agg, max_modes=0)
    with pytest.raises(ValueError):
        pick_peaks(agg, band=(5.0, 5.1))
    zero = SpaceFrequencyMap(np.zeros(GRID.shape), GRID, 0.0)
    assert pick_peaks(zero) == []


def test_max_modes_keeps_most_prominent(corpus):
    cfg, by_lane = corpus("medium240")
    agg = aggregate(by_lane[0.28])
    all_peaks = find_modal_peaks(agg, band=(2.0, 40.0))
    top2 = find_modal_peaks(agg, max_modes=2, band=(2.0, 40.0))
    best = sorted(all_peaks, key=lambda p: -p.prominence)[:2]
    assert [p.index for p in top2] == sorted(p.index for p in best)


def test_noiseless_single_mode_shape(corpus):
    cfg, by_lane = corpus("medium240", SINGLE_MODE)
    shape = extract_mode_shape(aggregate(by_lane[0.28]), 5.51)
    assert mac(shape, np.abs(np.sin(np.pi * X / L))) >= 99.9
    assert shape.max() == 1.0 and shape.min() >= 0


def test_mode2_node(corpus):
    cfg, by_lane = corpus("medium240")
    shape = extract_mode_shape(aggregate(by_lane[0.28]), 9.93)
    assert shape[np.argmin(np.abs(X - L / 2))] <= 0.1


def _raw_cut_max(agg, f):
    from crowdmodal.aggregation import remove_noise_bed
    return np.nan_to_num(section_cut(remove_noise_bed(agg).values, agg.grid, f)).max()


def test_torsional_centerline_vs_edge(corpus):
    cfg, by_lane = corpus("medium240", TWO_LANE_CLEAN)
    aggs = {y: aggregate(m) for y, m in by_lane.items()}
    for f in (12.34, 24.99):
        assert _raw_cut_max(aggs[0.0], f) <= 0.2 * _raw_cut_max(aggs[0.28], f)


def test_shape_errors():
    with pytest.raises(ValueError):
        extract_mode_shape(SpaceFrequencyMap(np.zeros(GRID.shape), GRID, 0.0), 5.0)
    with pytest.raises(ValueError):
        extract_mode_shape(tone_corpus(n=2), 50.0)


def test_mac_examples():
    a = np.abs(np.sin(np.pi * X / L))
    b = np.abs(np.sin(2 * np.pi * X / L))
    assert mac(a, a) == pytest.approx(100.0)
    assert mac(a, 2 * a) == pytest.approx(100.0)
    # direct summation; the continuous limit is 6400 / (9 pi^2) = 72.05
    assert mac(a, b) == pytest.approx(mac_bruteforce(a, b), rel=1e-12)
    assert mac(a, b) == pytest.approx(6400 / (9 * np.pi ** 2), abs=0.05)


def test_mac_resamples_reference():
    coarse = np.linspace(0, L, 37)
    ref = np.sin(np.pi * coarse / L)
    est = np.sin(np.pi * X / L)
    assert mac(est, ref, X, coarse) > 99.99


def test_mac_errors():
    with pytest.raises(ValueError):
        mac([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        mac([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        mac([1.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=5, max_size=5), st.lists(st.floats(0.01, 10), min_size=5, max_size=5),
       st.floats(0.01, 100))
def test_mac_bounds_and_scale(a, b, alpha):
    a = np.array(a) + 0.01
    b = np.array(b)
    v = mac(a, b)
    assert 0 <= v <= 100
    assert mac(alpha * a, b) == pytest.approx(v, rel=1e-9)
    assert mac(a, a) == pytest.approx(100.0)


def test_confidence_interval_identical_shapes():
    s = np.tile(np.sin(np.pi * X / L), (5, 1))
    mean, half = confidence_interval(s)
    assert np.all(half == 0)
    np.testing.assert_allclose(mean, s[0])
    with pytest.raises(ValueError):
        confidence_interval(s[:1])


def test_confidence_interval_coverage():
    rng = np.random.default_rng(4)
    truth = np.sin(np.pi * X / L)
    shapes = truth + rng.normal(0, 0.2, (60, X.size))
    mean, half = confidence_interval(shapes)
    assert np.mean(np.abs(mean - truth) <= half) >= 0.90
    np.testing.assert_allclose(half, 1.96 * shapes.std(axis=0, ddof=1) / np.sqrt(60))


def test_ci_20_vs_480(corpus):
    cfg, by_lane = corpus("bias-study")
    stack = studies.row_stack(by_lane[0.28], 5.51)
    curve = studies.ci_curve(stack, sizes=(20, 480))
    assert curve[20]["mean"] / curve[480]["mean"] >= 3.0


def test_monotone_accuracy(corpus):
    cfg, by_lane = corpus("medium240")
    lab = _lab(cfg)
    stack = studies.row_stack(by_lane[0.28], 5.51)
    ref = reference_shape(lab.model, lab.spec, 0, X, 0.28)
    acc = studies.subset_accuracy(stack, ref, (10, 20, 40, 80, 160), n_subsets=100, seed=0)
    medians = [np.median(acc[n]["mac"]) for n in (10, 20, 40, 80, 160)]
    assert np.all(np.diff(medians) >= 0), medians


def test_assemble_vertical_constant_in_y():
    s = np.abs(np.sin(np.pi * X / L))
    noisy = [s * 1.03, s * 0.97, s]
    y, surf = assemble_3d(noisy, [-0.28, 0.28, 0.0])
    assert surf.max() == pytest.approx(1.0)
    interior = s > 0.2
    spread = (surf.max(axis=0) - surf.min(axis=0))[interior] / surf.max(axis=0)[interior]
    assert np.all(spread <= 0.10)


def test_assemble_torsional():
    b = 0.635
    lanes = [-b / 4, 0.0, b / 4]
    shapes = [np.abs(np.sin(np.pi * X / L) * 2 * y / b) for y in lanes]
    y, surf = assemble_3d(shapes, lanes)
    centre = surf[np.argmin(np.abs(y))]
    assert centre.max() <= 0.2
    assert surf[0].max() == pytest.approx(surf[-1].max(), rel=0.01)


def test_assemble_duplicate_exactly_constant():
    s = np.abs(np.sin(2 * np.pi * X / L))
    y, surf = assemble_3d([s, s], [0.0, 0.28])
    assert np.all(surf == surf[0])
    with pytest.raises(ValueError):
        assemble_3d([s], [0.0])
    with pytest.raises(ValueError):
        assemble_3d([s, s], [0.1, 0.1])


def test_match_reference_and_mse():
    assert match_reference(9.9, TRUTH) == 1
    assert match_reference(16.0, TRUTH) is None
    assert shape_mse([1.0, 0.0], [0.0, 0.0]) == 0.5
