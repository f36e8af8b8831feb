import numpy as np
import pytest

import dsfc


def small_spec(seed=5):
    spec = dsfc.SynthSpec()
    spec.canvas = 32
    spec.width_min = 1.0
    spec.width_max = 2.0
    spec.fg_cap = 0.15
    spec.seed = seed
    return spec


@pytest.fixture(scope="module")
def net():
    return dsfc.DSFCNet()


def test_version():
    assert dsfc.__version__ == "0.1.0"


def test_param_count(net):
    assert net.count_params() == 3_396_977


def test_forward_shapes_and_range(net):
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(64, 64, 3))
    prob = net.forward(img)
    assert prob.shape == (64, 64)
    assert np.all((prob >= 0) & (prob <= 1))

    batch = rng.uniform(size=(2, 64, 64, 3))
    assert net.forward(batch).shape == (2, 64, 64)
    np.testing.assert_array_equal(net.forward(batch[0]), net.forward(batch)[0])


def test_forward_rejects_bad_input(net):
    with pytest.raises(ValueError):
        net.forward(np.zeros((64, 64, 4)))
    with pytest.raises(ValueError):
        net.forward(np.zeros((60, 60, 3)))


def test_seed_determinism():
    cfg = dsfc.ModelConfig()
    cfg.seed = 11
    img = np.random.default_rng(1).uniform(size=(32, 32, 3))
    a = dsfc.DSFCNet(cfg).forward(img)
    b = dsfc.DSFCNet(cfg).forward(img)
    np.testing.assert_array_equal(a, b)
    cfg.seed = 12
    assert not np.array_equal(a, dsfc.DSFCNet(cfg).forward(img))


def test_config_json_roundtrip():
    cfg = dsfc.ModelConfig()
    cfg.seed = 99
    again = dsfc.ModelConfig.from_json(cfg.to_json())
    assert again.seed == 99
    assert again.to_json() == cfg.to_json()


def test_generate_synthetic():
    pairs = dsfc.generate_synthetic(small_spec(), 3)
    assert len(pairs) == 3
    for image, mask in pairs:
        assert image.shape == (32, 32, 3)
        assert mask.shape == (32, 32)
        assert np.all((image >= 0) & (image <= 1))
        assert set(np.unique(mask)) <= {0.0, 1.0}
    assert any(mask.sum() > 0 for _, mask in pairs)
    rerun = dsfc.generate_synthetic(small_spec(), 3)
    np.testing.assert_array_equal(pairs[0][0], rerun[0][0])


def test_metrics_worked_example():
    prob = np.array([[0.9, 0.8, 0.1], [0.2, 0.7, 0.3]])
    target = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    rep = dsfc.metrics(prob, target, threshold=0.5)
    assert (rep["tp"], rep["fp"], rep["fn"], rep["tn"]) == (2, 1, 1, 2)
    assert rep["precision"] == rep["recall"] == rep["f1"] == 2.0 / 3.0
    assert rep["iou"] == 0.5


def test_bce_dice_loss():
    target = np.zeros((8, 8))
    mid = dsfc.bce_dice(np.zeros((8, 8)), target)
    low = dsfc.bce_dice(np.full((8, 8), -20.0), target)
    assert 0.0 <= low < 1e-6
    assert low < mid


def test_checkpoint_roundtrip(net, tmp_path):
    path = str(tmp_path / "net.ckpt")
    net.save(path)
    again = dsfc.load(path)
    assert again.count_params() == net.count_params()
    img = np.random.default_rng(2).uniform(size=(32, 32, 3))
    np.testing.assert_array_equal(net.forward(img), again.forward(img))


def test_gradcheck_module():
    (entry,) = dsfc.gradcheck("layer_norm")
    assert entry["module"] == "layer_norm"
    assert entry["coords"] > 0
    assert entry["max_rel_err"] < 1e-4


def test_flops_sheet(net):
    sheet = net.flops(64, 64)
    kinds = [k for k in sheet if k != "total"]
    assert sheet["total"] == sum(sheet[k] for k in kinds) > 0
    assert net.flops(64, 64, batch=2)["total"] == 2 * sheet["total"]


def test_export_activations(net):
    img = np.random.default_rng(3).uniform(size=(32, 32, 3))
    acts = net.export_activations(img, ["cffm-1", "decoder-4"])
    assert sorted(acts) == ["cffm-1", "decoder-4"]
    for heat in acts.values():
        assert heat.shape == (32, 32)
        assert np.all((heat >= 0) & (heat <= 1))
    assert len(net.export_activations(img, [])) == len(dsfc.DSFCNet.all_taps())
    with pytest.raises(ValueError):
        net.export_activations(img, ["nope"])


def test_train_and_evaluate(tmp_path):
    pairs = [(i, m) for i, m in dsfc.generate_synthetic(small_spec(7), 2)]
    cfg = dsfc.TrainConfig()
    cfg.lr = 1e-3
    cfg.batch_size = 2
    cfg.epochs = 20
    cfg.flip_prob = 0.0
    cfg.seed = 3

    model_cfg = dsfc.ModelConfig()
    model_cfg.seed = 3
    net = dsfc.DSFCNet(model_cfg)
    result = dsfc.train(net, pairs, val_pairs=pairs, config=cfg,
                        out_dir=str(tmp_path / "run"))

    assert result["steps"] == 20 and result["epochs"] == 20
    assert len(result["losses"]) == 20
    assert result["losses"][-1] < result["losses"][0]
    assert result["best_iou"] >= 0.0
    assert (tmp_path / "run" / "latest.ckpt").exists()
    assert (tmp_path / "run" / "best.ckpt").exists()

    rep = dsfc.evaluate(net, pairs, 0.5)
    assert rep["tp"] + rep["fp"] + rep["fn"] + rep["tn"] == 2 * 32 * 32
    assert 0.0 <= rep["iou"] <= rep["f1"] <= 1.0
