import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnseg.config import (
    DEFAULTS,
    TrainConfig,
    config_from_mapping,
    config_to_text,
    load_config,
    parse_config_text,
    poly_lr,
    save_config,
)


class TestPolyLR:
    def test_endpoints(self):
        assert poly_lr(4e-3, 0, 1000, 0.9) == 4e-3
        assert poly_lr(4e-3, 1000, 1000, 0.9) == 0.0

    def test_halfway_hand_value(self):
        # lr0 * 0.5^0.9, written through exp/log as an independent route
        expected = 4e-3 * math.exp(0.9 * math.log(0.5))
        assert poly_lr(4e-3, 500, 1000, 0.9) == pytest.approx(expected, rel=1e-12)

    def test_closed_form_across_schedule(self):
        lr0, max_iter, power = 2.5e-3, 777, 0.9
        for it in range(0, max_iter + 1, 7):
            expected = lr0 * math.pow(1.0 - it / max_iter, power)
            assert poly_lr(lr0, it, max_iter, power) == pytest.approx(expected, rel=1e-9)

    @given(st.integers(min_value=0, max_value=100))
    def test_non_increasing(self, it):
        a = poly_lr(1e-2, it, 101, 0.9)
        b = poly_lr(1e-2, it + 1, 101, 0.9)
        assert b <= a

    def test_power_zero_is_constant(self):
        assert poly_lr(3e-3, 40, 100, 0.0) == 3e-3

    def test_out_of_range_iteration(self):
        with pytest.raises(ValueError, match="outside"):
            poly_lr(1e-3, -1, 100, 0.9)
        with pytest.raises(ValueError, match="outside"):
            poly_lr(1e-3, 101, 100, 0.9)


class TestValidation:
    def test_defaults_are_valid(self):
        cfg = TrainConfig().validate()
        assert cfg.epochs == DEFAULTS["epochs"]
        assert cfg.lr0 == DEFAULTS["lr0"]

    @pytest.mark.parametrize(
        "field,value,match",
        [
            ("epochs", 0, "epochs"),
            ("batch_size", 1, "batch_size"),
            ("lr0", 0.0, "lr0"),
            ("poly_power", -0.1, "poly_power"),
            ("k", 0, "k must be >= 1"),
            ("alpha", 0.0, "alpha"),
            ("alpha", 1.5, "alpha"),
            ("eps", 0.0, "eps"),
            ("num_classes", 1, "num_classes"),
            ("depth", 0, "depth"),
            ("base_channels", 0, "base_channels"),
            ("lut_resolution", 128, "lut_resolution"),
        ],
    )
    def test_rejects_bad_field(self, field, value, match):
        cfg = TrainConfig(**{field: value})
        with pytest.raises(ValueError, match=match):
            cfg.validate()

    def test_image_size_must_divide_by_pool_factor(self):
        # depth 4 pools four times, so 100 is not reachable
        with pytest.raises(ValueError, match="multiple"):
            TrainConfig(image_size=100, depth=4).validate()
        TrainConfig(image_size=96, depth=4).validate()

    def test_alpha_one_allowed(self):
        TrainConfig(alpha=1.0).validate()


class TestParsing:
    def test_comments_and_blanks(self):
        text = "\n# full comment\ntrain.epochs = 3  # trailing\n\ntrain.seed=9\n"
        mapping = parse_config_text(text)
        assert mapping == {"train.epochs": "3", "train.seed": "9"}

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config_text("train.k = 1\ntrain.k = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config_text("train.epochs 3\n")

    def test_empty_value_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            parse_config_text("train.epochs =\n")

    def test_undotted_key_rejected(self):
        with pytest.raises(ValueError, match="dotted"):
            config_from_mapping({"epochs": "3"})

    def test_unknown_train_field_rejected(self):
        with pytest.raises(ValueError, match="unknown config field"):
            config_from_mapping({"train.gamma": "1"})

    def test_other_sections_ignored(self):
        cfg = config_from_mapping({"run.subcommand": "train", "train.epochs": "7"})
        assert cfg.epochs == 7

    @pytest.mark.parametrize("raw,expected", [("true", True), ("1", True), ("yes", True), ("on", True), ("false", False), ("0", False), ("no", False), ("off", False)])
    def test_bool_coercion(self, raw, expected):
        cfg = config_from_mapping({"train.style_augment": raw})
        assert cfg.style_augment is expected

    def test_bad_bool_rejected(self):
        with pytest.raises(ValueError, match="boolean"):
            config_from_mapping({"train.style_augment": "maybe"})

    def test_scientific_float(self):
        cfg = config_from_mapping({"train.lr0": "4e-3"})
        assert cfg.lr0 == 4e-3

    def test_k_zero_rejected_from_text(self):
        with pytest.raises(ValueError, match="k must be >= 1"):
            config_from_mapping({"train.k": "0"})


class TestRoundTrip:
    def test_text_round_trip(self):
        cfg = TrainConfig(epochs=5, batch_size=16, lr0=1.25e-3, k=3, style_augment=False)
        again = config_from_mapping(parse_config_text(config_to_text(cfg)))
        assert again == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = TrainConfig(epochs=2, image_size=64, seed=42)
        path = tmp_path / "cfg.txt"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "cfg.txt"
        save_config(TrainConfig(epochs=2, seed=1), path)
        cfg = load_config(path, {"train.seed": "99", "train.k": "4"})
        assert cfg.seed == 99
        assert cfg.k == 4
        assert cfg.epochs == 2

    def test_snapshot_with_run_lines_replays(self, tmp_path):
        cfg = TrainConfig(epochs=3, batch_size=8, image_size=32, depth=2)
        path = tmp_path / "run_config.txt"
        body = "run.subcommand = train\nrun.archive = /data/a\n" + config_to_text(cfg)
        path.write_text(body, encoding="utf-8")
        assert load_config(path) == cfg

    def test_float_repr_exact(self):
        cfg = TrainConfig(lr0=0.1 + 0.2)  # not representable as a short decimal
        again = config_from_mapping(parse_config_text(config_to_text(cfg)))
        assert again.lr0 == cfg.lr0
