import json

import numpy as np
import pytest

import bmtk

SMALL = {"subjects": 1, "frames": 8, "es_frame": 3, "seed": 5}


@pytest.fixture(scope="module")
def subject():
    return bmtk.simulate_subject(SMALL, 0)


def test_tensor_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4, 5)).astype(np.float32)
    bmtk.write_tensor(tmp_path / "a.bmtk", a, {"units": "px"})
    b = bmtk.read_tensor(tmp_path / "a.bmtk")
    assert b.dtype == np.float32 and b.shape == (3, 4, 5)
    assert np.array_equal(a.view(np.uint32), b.view(np.uint32))
    assert json.loads((tmp_path / "a.bmtk.json").read_text())["units"] == "px"
    raw = (tmp_path / "a.bmtk").read_bytes()
    (tmp_path / "bad.bmtk").write_bytes(b"XXXX0000" + raw[8:])
    with pytest.raises(bmtk.FormatError, match="magic"):
        bmtk.read_tensor(tmp_path / "bad.bmtk")
    (tmp_path / "short.bmtk").write_bytes(raw[:-4])
    with pytest.raises(bmtk.FormatError, match="payload length"):
        bmtk.read_tensor(tmp_path / "short.bmtk")


def test_omega():
    w = np.array(bmtk.omega_weights(50))
    assert abs(w.sum() - 1) < 1e-12
    assert int(w.argmax()) == 20
    assert np.isclose(w[20] / w[0], np.exp(18.0), rtol=1e-9)


def test_simulation(subject):
    f, m, c = subject["fields"], subject["masks"], subject["cine"]
    assert f.shape == (8, 2, 96, 96) and m.shape == (8, 96, 96) and c.shape == (8, 96, 96)
    assert np.all(f[0] == 0)
    assert c.min() >= 0 and c.max() <= 1
    assert len(subject["pressure_kpa"]) == 8
    again = bmtk.simulate_subject(SMALL, 0)
    assert np.array_equal(again["fields"], f)
    with pytest.raises(bmtk.ArgumentError):
        bmtk.simulate_subject({"no_such_key": 1})


def test_metrics(subject):
    myo = subject["ed_myocardium"]
    assert bmtk.dice(myo, myo) == 1.0
    assert bmtk.mcd(myo, myo) == 0.0
    assert bmtk.jacobian_metric(np.zeros((2, 96, 96), np.float32), myo) == 0.0
    rows = bmtk.evaluate_sequence(subject["fields"], subject["masks"])
    assert len(rows) == 8 and min(r["dice"] for r in rows) > 0.9
    s = bmtk.strain_curves(subject["fields"], myo)
    assert s["peak_rr_frame"] == 3 and max(s["rr_pct"]) > 0 > min(s["cc_pct"])
    roi = bmtk.dilate_mask(myo, 3)
    assert roi.sum() > myo.sum()


def test_train_register(subject, tmp_path):
    cfg = {"epochs": 2, "latent_dim": 4, "learning_rate": 1e-3, "es_frame": 3,
           "encoder_channels": [2, 4, 4, 4], "decoder_channels": [4, 4, 4, 2], "seed": 1}
    ck = bmtk.train([subject["fields"]] * 3, cfg)
    assert ck.latent_dim == 4 and ck.grid == (96, 96)
    mu, logvar = ck.encode(subject["fields"])
    assert mu.shape == (8, 4) and logvar.shape == (8, 4)
    assert ck.decode(mu).shape == (8, 2, 96, 96)
    ck.save(tmp_path / "m.bmtvae")
    back = bmtk.Checkpoint.load(tmp_path / "m.bmtvae")
    assert np.array_equal(back.decode(mu), ck.decode(mu))
    r = bmtk.register_sequence(subject["cine"], subject["ed_myocardium"], ck, {"max_iterations": 4})
    assert r["fields"].shape == (8, 2, 96, 96) and r["z"].shape == (8, 4)
    assert r["iterations"] == len(r["objective"]) <= 4
    assert np.array_equal(ck.decode(r["z"]), r["fields"])
    with pytest.raises(bmtk.ManifestError):
        ck.decode(np.zeros((8, 5), np.float32))
