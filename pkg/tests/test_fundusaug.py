import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdrkit import fundusaug as fa
from gdrkit.imagecore import ImageRgb, inscribed_circle_mask
from gdrkit.rng import make_rng

from conftest import constant_image, random_image

SINGLE = {
    "brightness": fa.adjust_brightness,
    "contrast": fa.adjust_contrast,
    "saturation": fa.adjust_saturation,
    "hue": fa.adjust_hue,
    "sharpness": fa.adjust_sharpness,
    "blur": fa.blur,
}
SAMPLED = {"halo": fa.add_halo, "hole": fa.add_hole, "spot": fa.add_spot}


# --- visual transforms -------------------------------------------------------


def test_brightness_examples():
    assert np.allclose(fa.adjust_brightness(constant_image(0.5), 0.3).data, 0.8)
    assert np.all(fa.adjust_brightness(constant_image(0.9), 0.3).data == 1.0)


def test_contrast_two_pixel_oracle():
    img = ImageRgb(np.array([[[0.25] * 3, [0.75] * 3]]), np.ones((1, 2), bool))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = fa.adjust_contrast(img, 2.0)  # clamped to 1.5 with a warning
    mu = 0.5
    expect = np.clip(mu + 1.5 * (np.array([0.25, 0.75]) - mu), 0, 1)
    assert np.allclose(out.data[0, :, 0], expect)


def test_out_of_range_intensity_warns_and_clamps():
    with pytest.warns(UserWarning, match="clamped"):
        out = fa.adjust_brightness(constant_image(0.2), 0.9)
    assert np.allclose(out.data, 0.7)


def test_hue_red_to_green():
    red = ImageRgb(np.array([[[1.0, 0.0, 0.0]]]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # the transform clamps to its +-18 degree range; the raw rotation is
        # checked through the HSV helpers
        from gdrkit.imagecore import hsv_to_rgb, rgb_to_hsv

        hsv = rgb_to_hsv(red.data)
        hsv[..., 0] = (hsv[..., 0] + 120.0) % 360.0
    assert np.allclose(hsv_to_rgb(hsv), [[[0.0, 1.0, 0.0]]], atol=1e-6)


def test_hue_and_saturation_leave_gray_alone():
    gray = constant_image(0.37)
    assert np.allclose(fa.adjust_hue(gray, 17.0).data, 0.37)
    assert np.allclose(fa.adjust_saturation(gray, 1.5).data, 0.37)


def test_saturation_matches_hsv_route():
    from gdrkit.imagecore import hsv_to_rgb, rgb_to_hsv

    img = random_image(11, 9, 9)
    for m in (0.5, 0.8, 1.3, 1.5):
        hsv = rgb_to_hsv(img.data)
        hsv[..., 1] = np.clip(hsv[..., 1] * m, 0, 1)
        assert np.abs(fa.adjust_saturation(img, m).data - hsv_to_rgb(hsv)).max() < 1e-12


def test_sharpness_center_pixel_oracle():
    data = np.zeros((3, 3, 3))
    data[1, 1] = 0.6
    out = fa.adjust_sharpness(ImageRgb(data), 1.5).data
    # box mean at the center is 0.6/9; blend = -0.5*0.6/9 + 1.5*0.6
    assert out[1, 1, 0] == pytest.approx(-0.5 * 0.6 / 9 + 1.5 * 0.6)
    # neighbours: box mean with edge replication, negative blend clamps to 0
    assert out[0, 0, 0] == 0.0


def test_box_blur_edge_replication():
    data = np.zeros((3, 3, 1))
    data[1, 1] = 9.0
    assert fa.box_blur3(data)[0, 0, 0] == pytest.approx(1.0)


def test_blur_impulse_gives_kernel():
    data = np.zeros((21, 21, 3))
    data[10, 10] = 1.0
    out = fa.blur(ImageRgb(data), 1.0).data[..., 0]
    k = fa.gaussian_kernel(1.0)
    assert len(k) == 7 and k.sum() == pytest.approx(1.0)
    assert np.allclose(out[7:14, 7:14], np.outer(k, k), atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-4)


def test_blur_constant_unchanged():
    assert np.allclose(fa.blur(constant_image(0.42), 0.1).data, 0.42)


@pytest.mark.parametrize("name", list(SINGLE))
def test_identity_intensity(name):
    img = random_image(21, 12, 12)
    out = SINGLE[name](img, fa.IDENTITY[name])
    # sigma=0.1 keeps a 3-tap kernel with ~2e-22 side weights
    assert np.abs(out.data - img.data).max() <= 1e-6


@pytest.mark.parametrize("name", list(SAMPLED))
def test_zero_strength_degradations(name):
    img = random_image(22, 16, 16, masked=True)
    out = SAMPLED[name](img, 0.0, make_rng(0, name))
    assert np.abs(out.data - img.data).max() <= 1e-12


# --- degradations ------------------------------------------------------------


def test_halo_support_matches_profile():
    mask = inscribed_circle_mask(32, 32)
    img = ImageRgb(np.zeros((32, 32, 3)), mask)
    geom = {"cx": 16.0, "cy": 16.0, "radius": 10.0, "width": 3.0}
    out = fa.render_halo(img, 1.0, geom).data[..., 0]
    yy, xx = np.mgrid[0:32, 0:32] + 0.5
    g = np.clip(1 - np.abs(np.hypot(xx - 16, yy - 16) - 10) / 3, 0, 1)
    assert np.array_equal(out > 0, (g > 0) & mask)
    assert np.allclose(out[mask], g[mask])


def test_hole_profile_on_white():
    img = ImageRgb(np.ones((40, 40, 3)), np.ones((40, 40), bool))
    out = fa.render_hole(img, 1.0, {"cx": 20.0, "cy": 20.0, "radius": 4.0}).data[..., 0]
    yy, xx = np.mgrid[0:40, 0:40] + 0.5
    d = np.hypot(xx - 20, yy - 20)
    assert np.all(out[d < 4.0] == 0.0)
    ramp = (d > 4.0) & (d < 6.0)
    assert np.allclose(out[ramp], 1 - np.clip((6.0 - d[ramp]) / 2.0, 0, 1))
    assert np.all(out[d >= 6.0] == 1.0)


def test_spot_interior_equals_color():
    img = ImageRgb(np.zeros((32, 32, 3)), np.ones((32, 32), bool))
    color = [0.9, 0.9, 0.81]
    geom = {"spots": [{"cx": 16.0, "cy": 16.0, "radius": 2.0, "color": color}]}
    out = fa.render_spot(img, 1.0, geom).data
    assert np.allclose(out[15, 15], color) and np.allclose(out[16, 16], color)


def test_spot_geometry_bounds_and_determinism():
    mask = inscribed_circle_mask(64, 64)
    g1 = fa.sample_spot_geometry(mask, make_rng(5, "s"))
    g2 = fa.sample_spot_geometry(mask, make_rng(5, "s"))
    assert g1 == g2
    assert 1 <= len(g1["spots"]) <= 5
    for s in g1["spots"]:
        assert 0.64 <= s["radius"] <= 1.92
        assert mask[int(s["cy"]), int(s["cx"])]


def test_hole_radius_range():
    mask = inscribed_circle_mask(100, 100)
    for k in range(50):
        g = fa.sample_hole_geometry(mask, make_rng(k, "h"))
        assert 4.0 <= g["radius"] <= 12.0


def test_halo_center_in_central_third():
    mask = inscribed_circle_mask(90, 90)
    for k in range(50):
        g = fa.sample_halo_geometry(mask, make_rng(k, "halo"))
        assert np.hypot(g["cx"] - 45, g["cy"] - 45) <= 15.0 + 0.5


def test_degradations_confined_to_mask():
    mask = inscribed_circle_mask(24, 24)
    img = ImageRgb(np.full((24, 24, 3), 0.5), mask)
    for name, fn in SAMPLED.items():
        for k in range(10):
            out = fn(img, 1.0, make_rng(k, name))
            assert np.array_equal(out.data[~mask], img.data[~mask]), name


def test_geometry_gives_up_on_empty_fov():
    empty = np.zeros((8, 8), bool)
    assert fa.sample_hole_geometry(empty, make_rng(0)) is None
    assert fa.sample_spot_geometry(empty, make_rng(0)) is None
    img = ImageRgb(np.full((8, 8, 3), 0.3), empty)
    plan = fa.sample_plan(empty, fa.AugConfig.default(probability=1.0), make_rng(0))
    assert not any(s.applied for s in plan.steps if s.name in ("halo", "hole", "spot"))
    assert np.all(np.isfinite(fa.apply_plan(img, plan).data))


@pytest.mark.parametrize("shape", [(1, 1), (2, 3)])
def test_degenerate_images_pass(shape):
    img = ImageRgb(np.zeros(shape + (3,)))
    out, _ = fa.fundus_aug(img, fa.AugConfig.default(probability=1.0), make_rng(1))
    assert out.data.shape == shape + (3,)


# --- composition -------------------------------------------------------------


def test_all_probabilities_zero_is_identity():
    img = random_image(31, 16, 16, masked=True)
    out, plan = fa.fundus_aug(img, fa.AugConfig.default(probability=0.0), make_rng(3))
    assert np.array_equal(out.data, img.data)
    assert plan.applied() == []


def test_collapsed_identity_ranges():
    img = random_image(32, 32, 32, masked=True)
    out, plan = fa.fundus_aug(img, fa.AugConfig.identity(), make_rng(3))
    assert len(plan.applied()) == 9
    assert np.abs(out.data - img.data).max() <= 1e-4


def test_plan_intensities_in_range_and_order():
    cfg = fa.AugConfig.default(probability=0.7)
    mask = inscribed_circle_mask(32, 32)
    for k in range(30):
        plan = fa.sample_plan(mask, cfg, make_rng(k, "p"))
        assert [s.name for s in plan.steps] == list(fa.TRANSFORMS)
        for s in plan.steps:
            if s.applied:
                spec = cfg.transforms[s.name]
                assert spec.low <= s.m <= spec.high


def test_application_rate_near_half():
    mask = inscribed_circle_mask(16, 16)
    cfg = fa.AugConfig.default()
    hits = sum(len(fa.sample_plan(mask, cfg, make_rng(k, "rate")).applied()) for k in range(400))
    rate = hits / (400 * 9)
    assert abs(rate - 0.5) < 0.03


def test_determinism_and_replay_via_json():
    img = random_image(33, 32, 32, masked=True)
    cfg = fa.AugConfig.default(probability=0.8)
    a, plan_a = fa.fundus_aug(img, cfg, make_rng(9, "x"))
    b, plan_b = fa.fundus_aug(img, cfg, make_rng(9, "x"))
    assert np.array_equal(a.data, b.data) and plan_a == plan_b
    replay = fa.apply_plan(img, fa.AugPlan.from_json(plan_a.to_json()))
    assert np.array_equal(replay.data, a.data)


def test_disabled_transform_keeps_other_gates():
    mask = inscribed_circle_mask(16, 16)
    full = fa.sample_plan(mask, fa.AugConfig.default(), make_rng(4))
    no_visual = fa.sample_plan(mask, fa.AugConfig.default(visual=False), make_rng(4))
    assert not any(s.applied for s in no_visual.steps[:5])
    assert [s.applied for s in full.steps[5:]] == [s.applied for s in no_visual.steps[5:]]


def test_config_validation_and_mapping_roundtrip():
    with pytest.raises(ValueError):
        fa.AugConfig.from_mapping({"hue.probability": 1.5})
    with pytest.raises(ValueError):
        fa.AugConfig.from_mapping({"blur.low": 1.0, "blur.high": 0.5})
    with pytest.raises(ValueError):
        fa.AugConfig.from_mapping({"order": ["hue", "hue"]})
    with pytest.raises(KeyError):
        fa.AugConfig.from_mapping({"hue.strength": 1})
    cfg = fa.AugConfig.from_mapping({"hue.enabled": "off", "spot.probability": 0.2})
    again = fa.AugConfig.from_mapping(json.loads(json.dumps(cfg.to_mapping())))
    assert again == cfg and not cfg.transforms["hue"].enabled


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.floats(0.0, 1.0))
def test_outputs_stay_in_unit_range(seed, p):
    img = random_image(seed % 1000, 16, 16, masked=bool(seed % 2))
    out, _ = fa.fundus_aug(img, fa.AugConfig.default(probability=p), make_rng(seed))
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), name=st.sampled_from(list(SINGLE)), u=st.floats(0.0, 1.0))
def test_each_transform_clamps(seed, name, u):
    lo, hi = fa.VALID_RANGES[name]
    out = SINGLE[name](random_image(seed, 8, 8), lo + u * (hi - lo))
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


# --- weak view ---------------------------------------------------------------


def test_weak_identity_branch():
    img = random_image(41, 10, 10)
    out = fa.weak_augment(img, make_rng(0), flip_prob=0.0, min_area=1.0)
    assert np.abs(out.data - img.data).max() <= 1e-6


def test_weak_flip_two_pixel():
    img = ImageRgb(np.array([[[0.1] * 3, [0.9] * 3]]))
    out = fa.weak_augment(img, make_rng(0), flip_prob=1.0, min_area=1.0)
    assert np.allclose(out.data[0, :, 0], [0.9, 0.1])


def test_weak_determinism_and_shape():
    img = random_image(42, 20, 20, masked=True)
    a = fa.weak_augment(img, make_rng(7))
    b = fa.weak_augment(img, make_rng(7))
    assert np.array_equal(a.data, b.data) and a.data.shape == img.data.shape
    assert a.fov_mask.shape == (20, 20)
