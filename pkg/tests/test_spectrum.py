import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage as ndi

from uadoppler import spectrum as sp
from uadoppler.errors import AxisNotFound, EmptyWaveform, NoBoundary, NoSeeds
from uadoppler.spectrum import Envelope, SpectrumConfig
from uadoppler.synthetic import SpectrumSpec, gen_spectrum


def _rgb(values):
    return np.array(values, dtype=np.uint8).reshape(1, -1, 3)


# --- overlays and inpainting ------------------------------------------------

def test_overlay_gray_pixel_false():
    assert not sp.detect_overlays(_rgb([(77, 77, 77)]), dilation=0).any()


def test_overlay_yellow_pixel_true():
    # channel std of (1, 1, 0) is sqrt(2)/3 ~ 0.47 > 12/255
    assert sp.detect_overlays(_rgb([(255, 255, 0)]), dilation=0).all()


def test_overlay_grayscale_image_empty():
    g = np.random.default_rng(0).integers(0, 256, (30, 40), dtype=np.uint8)
    assert not sp.detect_overlays(np.repeat(g[..., None], 3, axis=2)).any()


def test_overlay_dilation_covers_fringe():
    img = np.zeros((11, 11, 3), dtype=np.uint8)
    img[5, 5] = (255, 0, 0)
    mask = sp.detect_overlays(img)
    assert mask[5, 3] and mask[3, 5] and not mask[5, 2]


def test_inpaint_constant():
    gray = np.full((40, 50), 0.5)
    hole = np.zeros_like(gray, dtype=bool)
    hole[5:30, 10:22] = True
    hole[0:3, 40:50] = True  # touching the image border
    out = sp.inpaint_biharmonic(gray, hole)
    assert np.abs(out - 0.5).max() < 1e-6


def test_inpaint_linear_ramp():
    h, w = 60, 80
    ramp = np.tile(np.arange(w) / w, (h, 1))
    hole = np.zeros((h, w), dtype=bool)
    hole[20:40, 30:50] = True
    damaged = np.where(hole, 0.0, ramp)
    out = sp.inpaint_biharmonic(damaged, hole)
    assert np.abs(out - ramp)[hole].max() < 1e-3


def test_inpaint_satisfies_bilaplacian():
    rng = np.random.default_rng(3)
    gray = ndi.gaussian_filter(rng.random((40, 40)), 3)
    hole = np.zeros_like(gray, dtype=bool)
    hole[12:28, 15:25] = True
    out = sp.inpaint_biharmonic(gray, hole, tol=1e-12)
    lap = ndi.laplace(out)
    bilap = ndi.laplace(lap)
    assert np.abs(bilap[hole]).max() < 1e-8


def test_inpaint_whole_image_rejected():
    with pytest.raises(NoBoundary):
        sp.inpaint_biharmonic(np.zeros((5, 5)), np.ones((5, 5), bool))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (16, 18), elements=st.floats(0, 1)),
       arrays(np.bool_, (16, 18), elements=st.booleans()))
def test_inpaint_leaves_known_pixels_bit_identical(gray, hole):
    if hole.all():
        return
    out = sp.inpaint_biharmonic(gray, hole)
    assert np.array_equal(out[~hole], gray[~hole])
    assert np.isfinite(out).all()


# --- random walker ----------------------------------------------------------

def test_walker_two_halves():
    gray = np.full((40, 60), 0.1)
    gray[:, :30] = 0.9
    fg = np.zeros_like(gray, dtype=bool)
    bg = np.zeros_like(gray, dtype=bool)
    fg[20, 5] = True
    bg[20, 55] = True
    mask = sp.segment_spectrum(gray, seeds=(fg, bg))
    assert np.array_equal(mask, gray > 0.5)


def test_walker_all_foreground_seeds():
    fg = np.ones((6, 7), bool)
    assert sp.segment_spectrum(np.zeros((6, 7)), seeds=(fg, ~fg)).all()


def test_walker_uniform_splits_on_bisector():
    n = 41
    fg = np.zeros((n, n), bool)
    bg = np.zeros((n, n), bool)
    fg[0, 0] = True
    bg[-1, -1] = True
    mask = sp.segment_spectrum(np.full((n, n), 0.4), seeds=(fg, bg))
    yy, xx = np.mgrid[0:n, 0:n]
    side = (xx + yy) - (n - 1)  # perpendicular bisector of the two corners
    wrong = (mask & (side > 0)) | (~mask & (side < 0))
    assert not np.any(wrong & (np.abs(side) > 1))


def test_walker_missing_seed_class():
    fg = np.zeros((5, 5), bool)
    fg[2, 2] = True
    with pytest.raises(NoSeeds):
        sp.random_walker_probabilities(np.zeros((5, 5)), fg, np.zeros((5, 5), bool))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_walker_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    gray = ndi.gaussian_filter(rng.random((30, 30)), 2)
    fg = rng.random(gray.shape) < 0.02
    bg = (rng.random(gray.shape) < 0.02) & ~fg
    fg[0, 0], bg[-1, -1] = True, True
    p_fg, p_bg = sp.random_walker_probabilities(gray, fg, bg)
    assert np.abs(p_fg + p_bg - 1).max() < 1e-5
    assert p_fg.min() > -1e-6 and p_fg.max() < 1 + 1e-6


def test_seed_policy_regions():
    img, truth = gen_spectrum(SpectrumSpec(n_waveforms=3))
    gray = img[..., 0] / 255.0
    fg, bg = sp.seed_policy(gray, truth["axis_row"])
    assert not (fg & bg).any()
    assert not fg[truth["axis_row"]:].any()
    assert bg[0].all()


# --- axis, cleanup, envelope ------------------------------------------------

def test_axis_at_row_400():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=3, axis_row=400))
    assert abs(sp.detect_x_axis(img[..., 0] / 255.0) - 400) <= 1


def test_axis_blank_image():
    with pytest.raises(AxisNotFound):
        sp.detect_x_axis(np.zeros((100, 200)))


def test_axis_prefers_bright_long_line():
    gray = np.zeros((500, 600))
    gray[400, :] = 1.0
    gray[100, 200:400] = 0.55
    assert sp.detect_x_axis(gray) == 400


def test_clean_removes_blob_below_axis():
    mask = np.zeros((50, 50), bool)
    mask[40:45, 10:20] = True
    assert not sp.clean_with_axis(mask, 30).any()


def test_clean_fills_interior_hole():
    mask = np.zeros((50, 50), bool)
    mask[10:30, 10:30] = True
    mask[15:18, 15:18] = False
    out = sp.clean_with_axis(mask, 40)
    assert out[15:18, 15:18].all()


def test_clean_keeps_border_background():
    mask = np.zeros((50, 50), bool)
    mask[10:30, 10:30] = True
    mask[0:20, 18:22] = False  # notch open to the top border
    out = sp.clean_with_axis(mask, 40)
    assert not out[0:20, 18:22].any()


@settings(max_examples=40, deadline=None)
@given(arrays(np.bool_, (20, 24)), st.integers(0, 19))
def test_clean_invariants(mask, axis):
    out = sp.clean_with_axis(mask, axis)
    assert not out[axis + 1:].any()
    assert not np.any(mask[: axis + 1] & ~out[: axis + 1])  # only ever adds
    # every remaining background pixel above the axis reaches the border or the axis zone
    bg = ~out
    labels, _ = ndi.label(bg)
    outer = set(np.unique(np.r_[labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    for lab in np.unique(labels[: axis + 1][bg[: axis + 1]]):
        rows = np.nonzero(labels == lab)[0]
        assert lab in outer or rows.max() >= axis


def test_envelope_definition():
    mask = np.zeros((410, 3), bool)
    mask[100:201, 0] = True
    env = sp.extract_envelope(mask, 400)
    assert env.top_y[0] == 100 and env.velocity[0] == 300
    assert env.velocity[1] == 0 and env.top_y[1] == 400


def test_envelope_tracks_generator():
    img, truth = gen_spectrum(SpectrumSpec(n_waveforms=4, seed=5))
    a = sp.analyze(img)
    err = a.envelope.top_y - np.array(truth["top_y"])
    assert np.sqrt(np.mean(err ** 2)) <= 1.0
    assert (a.envelope.velocity >= 0).all() and (a.envelope.top_y <= a.axis_y).all()


# --- peaks, waveforms, scoring ----------------------------------------------

def test_peaks_of_sine():
    x = np.arange(600)
    v = 50 + 40 * np.sin(2 * np.pi * x / 200)
    peaks, valleys = sp.detect_peaks_valleys(v)
    assert len(peaks) == 3 and len(valleys) == 3
    assert np.abs(peaks - [50, 250, 450]).max() <= 2
    assert np.abs(valleys - [150, 350, 550]).max() <= 2


def test_peaks_constant():
    peaks, valleys = sp.detect_peaks_valleys(np.full(300, 7.0))
    assert peaks.size == 0 and valleys.size == 0


def test_peaks_close_pair_keeps_taller():
    x = np.arange(400, dtype=float)
    v = 30 * np.exp(-0.5 * ((x - 180) / 6) ** 2) + 45 * np.exp(-0.5 * ((x - 220) / 6) ** 2)
    peaks, _ = sp.detect_peaks_valleys(v, sigma=0)
    assert peaks.tolist() == [220]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(20, 400), elements=st.floats(0, 100)),
       st.integers(1, 90))
def test_peaks_spacing_and_alternation(v, min_distance):
    peaks, valleys = sp.detect_peaks_valleys(v, sigma=2.0, min_distance=min_distance)
    for cls in (peaks, valleys):
        assert np.all(np.diff(cls) >= min_distance)
    merged = sorted([(p, 1) for p in peaks] + [(q, -1) for q in valleys])
    assert all(a[1] != b[1] for a, b in zip(merged, merged[1:]))
    wfs = sp.identify_waveforms(peaks, valleys)
    assert len(wfs) <= min(len(peaks), max(len(valleys) - 1, 0))
    for (s1, _, e1), (s2, _, e2) in zip(wfs, wfs[1:]):
        assert e1 <= s2


def test_identify_waveforms_examples():
    assert sp.identify_waveforms([250, 450], [150, 350, 550]) == [
        (150, 250, 350), (350, 450, 550)]
    assert sp.identify_waveforms([10], []) == []
    assert sp.identify_waveforms([200, 400], [0, 600]) == []


@pytest.mark.parametrize("value, cls", [
    (0.70, "good"), (0.45, "moderate"), (0.30, "poor"), (0.56, "moderate"), (0.36, "moderate"),
])
def test_clarity_classes(value, cls):
    assert sp.classify_clarity(value) == cls


@given(st.floats(0, 1), st.floats(0, 1))
def test_clarity_monotone(a, b):
    rank = {"poor": 0, "moderate": 1, "good": 2}
    lo, hi = sorted((a, b))
    assert rank[sp.classify_clarity(lo)] <= rank[sp.classify_clarity(hi)]


def test_score_waveform_height_and_intensity():
    gray = np.zeros((401, 10))
    mask = np.zeros((401, 10), bool)
    mask[80:400, 2:8] = True
    gray[mask] = 0.7
    env = sp.extract_envelope(mask, 400)
    wf = sp.score_waveform(gray, mask, env, (2, 5, 7))
    assert wf.height_pct == 80.0 and wf.clarity == "good"
    assert abs(wf.mean_intensity - 0.7) < 1e-12


def test_score_waveform_empty():
    env = Envelope(np.full(10, 50.0), 50, np.zeros(10))
    with pytest.raises(EmptyWaveform):
        sp.score_waveform(np.zeros((51, 10)), np.zeros((51, 10), bool), env, (1, 4, 8))


def _wf(start, end, clarity, height=80.0):
    return sp.Waveform(start, (start + end) // 2, end, 0.5, clarity, height)


def test_clarity_run_requires_adjacent_waveforms():
    chained = [_wf(0, 10, "good"), _wf(10, 20, "moderate"), _wf(20, 30, "good")]
    broken = [_wf(0, 10, "good"), _wf(10, 20, "moderate"), _wf(40, 50, "good")]
    poor_mid = [_wf(0, 10, "good"), _wf(10, 20, "poor"), _wf(20, 30, "good"),
                _wf(30, 40, "good")]
    assert sp.verdict_from_waveforms(chained).clarity_pass
    assert not sp.verdict_from_waveforms(broken).clarity_pass
    assert not sp.verdict_from_waveforms(poor_mid).clarity_pass


@pytest.mark.parametrize("n, sweep", [(2, False), (3, True), (10, True), (11, False)])
def test_sweep_rule(n, sweep):
    wfs = [_wf(10 * k, 10 * k + 10, "good") for k in range(n)]
    assert sp.verdict_from_waveforms(wfs).sweep_pass is sweep


def test_range_rule_is_strict():
    assert not sp.verdict_from_waveforms([_wf(0, 10, "good", 75.0)]).range_pass
    assert sp.verdict_from_waveforms([_wf(0, 10, "good", 75.01)]).range_pass


# --- end to end -------------------------------------------------------------

def test_assess_five_waveforms_all_pass():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=5, intensity=0.8))
    v = sp.assess(img)
    assert v.n_waveforms == 5
    assert v.sweep_pass and v.range_pass and v.clarity_pass
    assert all(abs(w.height_pct - 85) <= 1 for w in v.waveforms)


def test_assess_two_waveforms_fails_sweep():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=2))
    assert not sp.assess(img).sweep_pass


def test_assess_low_heights_fail_range():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=4, peak_heights=[140] * 4))
    v = sp.assess(img)
    assert v.n_waveforms == 4 and not v.range_pass


def test_assess_with_overlays_matches_truth():
    spec = SpectrumSpec(n_waveforms=4, intensity=[0.8, 0.3, 0.5, 0.7], seed=8,
                        overlay_lines=[{"points": [[300, 20], [300, 210]],
                                        "color": [255, 255, 0], "width": 3}])
    img, truth = gen_spectrum(spec)
    a = sp.analyze(img)
    assert a.overlay_mask.any()
    assert [w.clarity for w in a.verdict.waveforms] == truth["clarity"]
    assert [w.peak_col for w in a.verdict.waveforms] == truth["peaks"]


def test_foreground_switch_changes_mean_only():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=3))
    fg = sp.assess(img)
    full = sp.assess(img, SpectrumConfig(foreground_only=False))
    assert fg.n_waveforms == full.n_waveforms
    assert all(a.mean_intensity > b.mean_intensity for a, b in zip(fg.waveforms, full.waveforms))


def test_assess_deterministic():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=4, noise_sigma=0.02, seed=3))
    assert sp.assess(img).to_dict() == sp.assess(img).to_dict()


def test_render_overlay_shape_and_colors():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=3))
    a = sp.analyze(img)
    ov = sp.render_overlay(img, a)
    assert ov.shape == img.shape and ov.dtype == np.uint8
    assert not np.array_equal(ov, img)
