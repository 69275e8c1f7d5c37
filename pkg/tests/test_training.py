import numpy as np
import pytest
import torch

import dnseg.training as training
from dnseg.config import TrainConfig
from dnseg.data import (
    CaseEntry,
    CaseManifest,
    SliceSample,
    Split,
    generate_synthetic_benchmark,
    save_archive,
)
from dnseg.training import (
    TrainingDiverged,
    build_network,
    load_checkpoint,
    save_checkpoint,
    train,
)

TINY = dict(
    epochs=2,
    batch_size=8,
    image_size=16,
    depth=2,
    base_channels=4,
    k=1,
    lut_resolution=256,
    seed=0,
)


@pytest.fixture(scope="module")
def tiny_archive(tmp_path_factory):
    root = tmp_path_factory.mktemp("arch")
    path_a, _ = generate_synthetic_benchmark(
        root, num_cases=5, slices_per_case=4, image_size=16, seed=7
    )
    return path_a


@pytest.fixture(scope="module")
def trained(tiny_archive, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    config = TrainConfig(**TINY)
    return config, train(config, tiny_archive, out)


class TestTrainLoop:
    def test_outputs_exist(self, trained):
        config, result = trained
        assert result.checkpoint_path.exists()
        assert result.loss_csv_path.exists()
        assert len(result.epoch_mean_losses) == config.epochs
        assert all(np.isfinite(v) for v in result.epoch_mean_losses)

    def test_loss_csv_schema(self, trained):
        config, result = trained
        lines = result.loss_csv_path.read_text().splitlines()
        assert lines[0] == "epoch,iter,lr,loss"
        # 16 train slices, batch 8 -> 2 steps/epoch
        assert len(lines) == 1 + config.epochs * 2
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "0"
        assert float(first[2]) == config.lr0
        iters = [int(row.split(",")[1]) for row in lines[1:]]
        assert iters == list(range(len(iters)))

    def test_lr_follows_poly_decay(self, trained):
        config, result = trained
        lines = result.loss_csv_path.read_text().splitlines()[1:]
        max_iter = len(lines)
        for row in lines:
            _, it, lr, _ = row.split(",")
            expected = config.lr0 * (1.0 - int(it) / max_iter) ** config.poly_power
            assert float(lr) == pytest.approx(expected, rel=1e-12)

    def test_both_branches_received_updates(self, trained):
        _, result = trained
        net, _ = load_checkpoint(result.checkpoint_path)
        for site in net.dn_sites:
            assert int(site.update_count_similar) > 0
            assert int(site.update_count_dissimilar) > 0

    def test_twin_runs_byte_identical(self, tiny_archive, tmp_path):
        config = TrainConfig(**TINY)
        res1 = train(config, tiny_archive, tmp_path / "r1")
        res2 = train(config, tiny_archive, tmp_path / "r2")
        assert res1.loss_csv_path.read_bytes() == res2.loss_csv_path.read_bytes()

    def test_seed_changes_losses(self, tiny_archive, tmp_path, trained):
        config = TrainConfig(**{**TINY, "seed": 123})
        res = train(config, tiny_archive, tmp_path / "seeded")
        _, base = trained
        assert res.loss_csv_path.read_text() != base.loss_csv_path.read_text()

    def test_baseline_mode_leaves_dissimilar_untouched(self, tiny_archive, tmp_path):
        config = TrainConfig(**{**TINY, "epochs": 1, "style_augment": False})
        result = train(config, tiny_archive, tmp_path / "base")
        net, loaded_cfg = load_checkpoint(result.checkpoint_path)
        assert loaded_cfg.style_augment is False
        for site in net.dn_sites:
            assert int(site.update_count_similar) > 0
            assert int(site.update_count_dissimilar) == 0

    def test_divergence_guard(self, tiny_archive, tmp_path, monkeypatch):
        def nan_loss(*args, **kwargs):
            return torch.tensor(float("nan"), requires_grad=True)

        monkeypatch.setattr(training, "combined_loss", nan_loss)
        config = TrainConfig(**{**TINY, "epochs": 1})
        with pytest.raises(TrainingDiverged, match="non-finite"):
            train(config, tiny_archive, tmp_path / "diverge")

    def test_num_classes_mismatch(self, tiny_archive, tmp_path):
        config = TrainConfig(**{**TINY, "num_classes": 3})
        with pytest.raises(ValueError, match="classes"):
            train(config, tiny_archive, tmp_path / "bad")

    def test_image_size_mismatch(self, tiny_archive, tmp_path):
        config = TrainConfig(**{**TINY, "image_size": 32})
        with pytest.raises(ValueError, match="image_size"):
            train(config, tiny_archive, tmp_path / "bad")

    def test_empty_train_split_rejected(self, tmp_path):
        manifest = CaseManifest(
            modality="synthetic",
            num_classes=2,
            spacing=(1.0, 1.0),
            shape=(16, 16),
            cases=[CaseEntry("case000", 1, Split.TEST)],
        )
        sample = SliceSample(
            image=np.zeros((16, 16), dtype=np.float32),
            label=np.zeros((16, 16), dtype=np.uint8),
            spacing=(1.0, 1.0),
            case_id="case000",
            slice_index=0,
        )
        path = save_archive(tmp_path / "only_test", manifest, [sample])
        with pytest.raises(ValueError, match="no training slices"):
            train(TrainConfig(**TINY), path, tmp_path / "out")


class TestCheckpoint:
    def test_round_trip_bitwise(self, trained, tmp_path):
        config, result = trained
        net, loaded_cfg = load_checkpoint(result.checkpoint_path)
        assert loaded_cfg == config
        assert net.training is False
        rebuilt = save_checkpoint(tmp_path / "again.pt", net, loaded_cfg)
        net2, _ = load_checkpoint(rebuilt)
        sd1, sd2 = net.state_dict(), net2.state_dict()
        assert sd1.keys() == sd2.keys()
        for key in sd1:
            assert torch.equal(sd1[key], sd2[key]), key

    def test_version_check(self, trained, tmp_path):
        _, result = trained
        blob = torch.load(result.checkpoint_path, weights_only=True)
        blob["version"] = 999
        bad = tmp_path / "bad.pt"
        torch.save(blob, bad)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(bad)

    def test_build_network_deterministic(self):
        config = TrainConfig(**TINY)
        a, b = build_network(config), build_network(config)
        for key, tensor in a.state_dict().items():
            assert torch.equal(tensor, b.state_dict()[key]), key
