import numpy as np
import pytest

import panostitch as ps

SMALL = {"rig.erp_size": "128x64", "rig.fisheye_size": "96"}


def test_version():
    assert ps.__version__ == "0.1.0"
    code, out, _ = ps.run_cli(["version"])
    assert code == 0 and out.strip() == "panostitch 0.1.0"


def test_config_defaults():
    d = ps.config_defaults()
    assert d["loss.alpha"] == "0.3"
    assert d["loss.lambda"] == "0.4"


def test_image_round_trip(tmp_path):
    img = ps.synthetic_panorama(64, 32, seed=1)
    assert img.shape == (32, 64, 3) and img.dtype == np.float32
    ps.write_wssf(tmp_path / "a.wssf", img)
    np.testing.assert_array_equal(ps.read_image(tmp_path / "a.wssf"), img)
    ps.write_png(tmp_path / "a.png", img)
    assert np.abs(ps.read_image(tmp_path / "a.png") - img).max() <= 0.5 / 255 + 1e-6


def test_ssim_identity():
    img = ps.synthetic_panorama(64, 32, seed=2)
    assert ps.ssim(img, img) == pytest.approx(1.0, abs=1e-6)


def test_scene_stitch_evaluate(tmp_path):
    src = ps.synthetic_panorama(128, 64, seed=3)
    scene = ps.make_scene(src, SMALL, seed=5, max_yaw=1.5, gain_min=0.85, gain_max=1.15)
    assert len(scene.inputs) == 3
    assert scene.inputs[0].shape == (96, 96, 3)
    assert scene.m_hat.shape == (64, 128)
    np.testing.assert_array_equal(scene.truth, src)

    result = ps.stitch(scene, {**SMALL, "optim.iters": "20", "optim.log_every": "0"})
    assert result["panorama"].shape == (64, 128, 3)
    assert len(result["history"]) == 20
    assert result["best_loss"] <= result["history"][0][0]

    m0 = ps.evaluate(result["initial"], scene, SMALL)
    m1 = ps.evaluate(result["panorama"], scene, SMALL)
    assert set(m1) == {"perceptual_distance", "psnr", "ssim"}
    assert m1["perceptual_distance"] <= m0["perceptual_distance"] * 1.05

    scene.write(tmp_path / "scene")
    again = ps.read_scene(tmp_path / "scene")
    np.testing.assert_array_equal(again.m_hat, scene.m_hat)


def test_domain_error():
    with pytest.raises(ValueError):
        ps.make_scene(ps.synthetic_panorama(128, 64), {"rig.erp_size": "100x64"})


def test_gradcheck_chain():
    errs = dict(ps.gradcheck(seed=3, chain_only=True))
    assert errs and max(errs.values()) <= 1e-3
