import math

import numpy as np
import pytest

import flamecam as fc


def small_model(**kw):
    args = dict(depth=2, base_filters=4, input_shape=(16, 24, 3), seed=3)
    args.update(kw)
    return fc.Model.unet(**args)


def test_predict_probabilities_sum_to_one():
    m = small_model()
    x = np.random.default_rng(0).random((16, 24, 3), dtype=np.float32)
    p = m.predict(x)
    assert p.shape == (16, 24, 4)
    np.testing.assert_allclose(p.sum(axis=2), 1.0, atol=1e-5)


def test_archive_round_trip(tmp_path):
    m = small_model(batchnorm=True)
    path = tmp_path / "m.flm"
    m.save(str(path))
    assert fc.Model.load(str(path)) == m
    assert fc.Model.from_bytes(m.to_bytes()) == m


def test_bad_archive_raises():
    with pytest.raises(fc.Error, match="bad magic"):
        fc.Model.from_bytes(b"NOTMAGIC" + bytes(32))


def test_fold_keeps_outputs():
    m = small_model(batchnorm=True)
    f = m.fold_batchnorm()
    assert not f.has_batchnorm
    x = np.random.default_rng(1).random((16, 24, 3), dtype=np.float32)
    np.testing.assert_allclose(m.predict(x), f.predict(x), atol=1e-4)


def test_quantize_and_segment():
    m = small_model()
    frames = [np.random.default_rng(i).random((16, 24, 3), dtype=np.float32) for i in range(4)]
    q = m.quantize(m.calibrate(frames, histogram=True), scheme="percentile")
    assert q.quantized
    assert q.predict(frames[0]).shape == (16, 24, 4)
    frame, _, _ = fc.generate_scene(seed=5, height=32, width=48, nozzle_x=3, nozzle_y=16,
                                    liftoff_px=3, length_px=30, max_width_px=12)
    assert q.segment(frame).shape == (16, 24)


def test_complexity_matches_conv_formula():
    m = small_model()
    r = m.complexity()
    assert r["macs"] == sum(row["macs"] for row in r["rows"])
    first = r["rows"][0]
    assert first["kind"] == "Conv2D"
    assert first["macs"] == 16 * 24 * 3 * 4 * 9


def test_prune_reduces_params():
    m = fc.Model.unet(depth=2, base_filters=8, input_shape=(16, 24, 3), seed=4, dead_fraction=0.5)
    frames = [np.random.default_rng(i).random((16, 24, 3), dtype=np.float32) for i in range(3)]
    ref = [fc.postprocess(m.predict(x)) for x in frames]
    pruned, history = m.prune(frames, ref, max_rounds=3)
    assert history[0]["params"] == m.param_count
    assert pruned.param_count < m.param_count


def test_metrics():
    a = np.zeros((4, 4), np.uint8)
    a[1:3, 1:3] = 1
    assert fc.dice(a, a) == 1.0
    assert fc.jaccard(a, a) == 1.0
    b = np.zeros_like(a)
    b[1:3, 1:2] = 1
    # class 0: 12 vs 14 px overlap 12; class 1: 4 vs 2 px overlap 2
    assert fc.dice(b, a) == pytest.approx((24 / 26 + 4 / 6) / 2)
    assert fc.class_weight(0.0) == pytest.approx(1 / math.log(1.02))
    assert fc.mape([1.1, 1.8], [1.0, 2.0]) == pytest.approx(10.0)
    assert fc.rmspe([1.1, 1.8], [1.0, 2.0]) == pytest.approx(10.0)
    with pytest.raises(fc.Error):
        fc.mape([1.0], [0.0])


def test_components_and_geometry():
    b = np.zeros((5, 6), np.uint8)
    b[0, 0] = b[1, 1] = 1
    b[4, 5] = 1
    labels, sizes = fc.connected_components(b)
    assert sizes == [2, 1]
    assert labels[1, 1] == 1 and labels[4, 5] == 2

    mask = np.zeros((10, 20), np.uint8)
    mask[4:6, 5:15] = 1
    g = fc.characterize(mask, mpp=0.1, nozzle_x=2, nozzle_y=5, min_px=1)
    # columns 5..14, nozzle at 2: tip - base = 9 px, base - nozzle = 3 px
    assert g["length_m"] == pytest.approx(0.9)
    assert g["liftoff_m"] == pytest.approx(0.3)
    assert g["area_m2"] == pytest.approx(0.2)
    assert fc.characterize(np.zeros((4, 4), np.uint8), 0.1, 0, 2) is None


def test_scene_truth_matches_measurement():
    frame, mask, truth = fc.generate_scene(seed=9, noise_sigma=0.0)
    assert frame.shape == (480, 640) and frame.dtype == np.uint8
    g = fc.characterize(mask, 0.01, 40, 240)
    for k in ("length_m", "liftoff_m", "area_m2"):
        assert g[k] == pytest.approx(truth[k])


def test_pipeline_modes_agree():
    m = small_model()
    single = fc.run_pipeline("single", frames=12, model=m, warmup=2)
    multi = fc.run_pipeline("multi", frames=12, model=m, warmup=2)
    assert single["frames"] == multi["frames"] == 12
    assert single["geometry"] == multi["geometry"]
    assert set(single["stages"]) == {"capture", "preprocess", "inference", "postprocess"}
