import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uadoppler import evaluation as ev
from uadoppler.errors import Clipped, OffCanvas
from uadoppler.synthetic import (
    InvalidSpec, SpectrumSpec, WedgeSpec, gen_detection_scene, gen_spectrum, gen_wedge,
    spec_to_dict, wedge_edges_mask,
)
from uadoppler.spectrum import assess


def test_wedge_edges_on_analytic_lines():
    spec = WedgeSpec(arcs=False, edge_thickness=1)
    mask = wedge_edges_mask(spec)
    ys, xs = np.nonzero(mask)
    ax, ay = spec.apex
    dists = []
    for phi in np.deg2rad([-spec.half_angle, spec.half_angle]):
        d = np.array([np.sin(phi), np.cos(phi)])
        dists.append(np.abs((xs - ax) * d[1] - (ys - ay) * d[0]))
    assert np.minimum(*dists).max() <= 0.5


def test_wedge_truth_is_exact():
    img, truth = gen_wedge(WedgeSpec(apex=(240, -60), half_angle=25, radii=(120, 380)))
    assert truth.apex == (240, -60)
    assert sorted(a.radius for a in truth.arcs) == [120, 380]
    assert img.shape == (512, 512, 3) and img.dtype == np.uint8


@pytest.mark.parametrize("kwargs", [
    {"half_angle": 0}, {"half_angle": 90}, {"radii": (300, 100)},
])
def test_wedge_spec_rejected(kwargs):
    with pytest.raises((InvalidSpec, OffCanvas)):
        gen_wedge(WedgeSpec(**kwargs))


def test_wedge_off_canvas():
    with pytest.raises(OffCanvas):
        gen_wedge(WedgeSpec(apex=(5000, 5000)))


def test_wedge_deterministic():
    a, _ = gen_wedge(WedgeSpec(noise=0.01, seed=9))
    b, _ = gen_wedge(WedgeSpec(noise=0.01, seed=9))
    c, _ = gen_wedge(WedgeSpec(noise=0.01, seed=10))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_spectrum_truth_lengths():
    _, truth = gen_spectrum(SpectrumSpec(n_waveforms=4))
    for key in ("peaks", "heights", "intensity", "clarity", "height_pct"):
        assert len(truth[key]) == 4
    assert len(truth["valleys"]) == 5


def test_spectrum_clipped():
    with pytest.raises(Clipped):
        gen_spectrum(SpectrumSpec(n_waveforms=2, peak_heights=[150, 200], axis_row=200))


def test_spectrum_intensity_08_is_good():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=4, intensity=0.8))
    assert {w.clarity for w in assess(img).waveforms} == {"good"}


def test_spectrum_height_round_trip():
    img, _ = gen_spectrum(SpectrumSpec(n_waveforms=4, peak_heights=[160] * 4, axis_row=200))
    assert all(abs(w.height_pct - 80) <= 1 for w in assess(img).waveforms)


def test_spectrum_deterministic():
    spec = SpectrumSpec(n_waveforms=3, noise_sigma=0.02, seed=4)
    assert np.array_equal(gen_spectrum(spec)[0], gen_spectrum(spec)[0])


def test_spec_to_dict_is_json_ready():
    d = spec_to_dict(SpectrumSpec(n_waveforms=2))
    assert d["n_waveforms"] == 2 and d["seed"] == 0


def test_scene_exact():
    g, p = gen_detection_scene(10, 0, 0, seed=1)
    curve = ev.sweep(g, p, [1, 5, 20])
    assert curve.sensitivity == [100.0] * 3 and curve.mean_angle_err == [0.0] * 3


def test_scene_jitter_seven():
    g, p = gen_detection_scene(30, 7, 0, seed=2)
    ms = ev.match(g, p)
    assert all(d == 7.0 for _, _, d in ms.pairs)
    assert ev.sensitivity(ms, 5) == 0 and ev.sensitivity(ms, 7) == 0
    assert ev.sensitivity(ms, 8) == 100 and ev.sensitivity(ms, 10) == 100


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 12), st.floats(0, 20), st.integers(0, 2**40))
def test_scene_properties(n, r, noise, seed):
    g, p = gen_detection_scene(n, r, noise, seed=seed)
    ms = ev.match(g, p)
    assert [j for _, j, _ in ms.pairs] == list(range(n))
    assert all(abs(d - r) < 1e-12 for _, _, d in ms.pairs)
    errs = [ev.angle_residual(a.vessel_angle_deg, b.vessel_angle_deg) for a, b in zip(g, p)]
    assert max(errs) <= noise + 1e-9


def test_scene_angle_noise_mean():
    means = []
    for seed in range(40):
        g, p = gen_detection_scene(25, 3, 6, seed=seed)
        means.append(ev.mean_angle_error(g, p, ev.match(g, p), 10))
    assert all(0 <= m <= 6 for m in means)
    assert abs(np.mean(means) - 3) < 0.3


def test_scene_rejects_bad_input():
    with pytest.raises(InvalidSpec):
        gen_detection_scene(0, 1, 1)
