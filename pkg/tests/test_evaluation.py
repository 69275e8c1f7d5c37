import csv
import io

import pytest

from dnseg.config import TrainConfig
from dnseg.data import (
    CaseEntry,
    CaseManifest,
    Split,
    generate_synthetic_benchmark,
    load_split,
    save_archive,
)
from dnseg.domains import DomainTag
from dnseg.evaluation import (
    OVERALL,
    EvalMode,
    evaluate,
    sweep_control_points,
)
from dnseg.training import train

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
def archives(tmp_path_factory):
    root = tmp_path_factory.mktemp("arch")
    return generate_synthetic_benchmark(
        root, num_cases=5, slices_per_case=4, image_size=16, seed=7
    )


@pytest.fixture(scope="module")
def checkpoint(archives, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = train(TrainConfig(**TINY), archives[0], out)
    return result.checkpoint_path


def _read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestEvalModeParse:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("select", EvalMode.SELECT),
            ("FORCE_SIMILAR", EvalMode.FORCE_SIMILAR),
            ("force-dissimilar", EvalMode.FORCE_DISSIMILAR),
            ("Ensemble_Avg", EvalMode.ENSEMBLE_AVG),
            (EvalMode.SELECT, EvalMode.SELECT),
        ],
    )
    def test_parse(self, raw, expected):
        assert EvalMode.parse(raw) is expected

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            EvalMode.parse("bogus")


class TestEvaluate:
    def test_select_writes_both_csvs(self, checkpoint, archives, tmp_path):
        result = evaluate(checkpoint, archives[0], EvalMode.SELECT, out_dir=tmp_path)
        assert result.metrics_csv.name == "metrics_select.csv"
        assert result.selection_csv.name == "selection.csv"
        assert result.metrics_csv.exists() and result.selection_csv.exists()

    def test_metrics_rows_per_case_plus_overall(self, checkpoint, archives, tmp_path):
        result = evaluate(checkpoint, archives[0], EvalMode.FORCE_SIMILAR, out_dir=tmp_path)
        rows = _read_csv("\n".join(result.csv_rows))
        # 1 test case at this scale, 1 foreground class -> one case row + overall
        case_ids = [r["case_id"] for r in rows]
        assert case_ids.count(OVERALL) == 1
        assert len(rows) == len(set(case_ids)) * 1
        for r in rows:
            assert r["mode"] == "force-similar"
            assert 0.0 <= float(r["dice_pct"]) <= 100.0
            assert float(r["hd_mm"]) >= 0.0

    def test_force_modes_have_no_reports(self, checkpoint, archives):
        for mode in (EvalMode.FORCE_SIMILAR, EvalMode.FORCE_DISSIMILAR, EvalMode.ENSEMBLE_AVG):
            result = evaluate(checkpoint, archives[0], mode)
            assert result.reports == []
            assert result.selection_fraction is None
            assert result.metrics_csv is None

    def test_select_fraction_sums_to_one(self, checkpoint, archives):
        result = evaluate(checkpoint, archives[0], EvalMode.SELECT)
        frac = result.selection_fraction
        assert set(frac) == {DomainTag.SIMILAR, DomainTag.DISSIMILAR}
        assert frac[DomainTag.SIMILAR] + frac[DomainTag.DISSIMILAR] == pytest.approx(1.0)

    def test_reports_cover_every_slice(self, checkpoint, archives):
        _, samples = load_split(archives[0], Split.TEST)
        result = evaluate(checkpoint, archives[0], EvalMode.SELECT)
        assert len(result.reports) == len(samples)
        seen = {(cid, idx) for cid, idx, _ in result.reports}
        assert seen == {(s.case_id, s.slice_index) for s in samples}

    def test_deterministic(self, checkpoint, archives):
        a = evaluate(checkpoint, archives[0], EvalMode.SELECT)
        b = evaluate(checkpoint, archives[0], EvalMode.SELECT)
        assert a.csv_rows == b.csv_rows
        assert a.mean_dice == b.mean_dice

    def test_train_split_evaluates(self, checkpoint, archives):
        result = evaluate(checkpoint, archives[0], EvalMode.FORCE_SIMILAR, split=Split.TRAIN)
        rows = _read_csv("\n".join(result.csv_rows))
        assert len({r["case_id"] for r in rows}) == 4 + 1  # 4 train cases + overall

    def test_volume_vote_runs(self, checkpoint, archives):
        result = evaluate(checkpoint, archives[0], EvalMode.SELECT, volume_vote=True)
        assert len(result.reports) > 0

    def test_empty_split_rejected(self, checkpoint, tmp_path):
        import numpy as np

        from dnseg.data import SliceSample

        manifest = CaseManifest(
            modality="synthetic",
            num_classes=2,
            spacing=(1.0, 1.0),
            shape=(16, 16),
            cases=[CaseEntry("case000", 1, Split.TRAIN)],
        )
        sample = SliceSample(
            image=np.zeros((16, 16), dtype=np.float32),
            label=np.zeros((16, 16), dtype=np.uint8),
            spacing=(1.0, 1.0),
            case_id="case000",
            slice_index=0,
        )
        path = save_archive(tmp_path / "train_only", manifest, [sample])
        with pytest.raises(ValueError, match="no slices"):
            evaluate(checkpoint, path, EvalMode.SELECT)

    def test_selection_csv_schema(self, checkpoint, archives, tmp_path):
        result = evaluate(checkpoint, archives[0], EvalMode.SELECT, out_dir=tmp_path)
        rows = _read_csv(result.selection_csv.read_text())
        n_layers = len(result.reports[0][2].per_layer)
        expected_cols = 5 + 2 * n_layers
        assert all(len(r) == expected_cols for r in rows)
        for r in rows:
            assert r["chosen"] in ("similar", "dissimilar")
            assert float(r["dist_similar"]) >= 0.0


class TestSweep:
    def test_sweep_structure(self, archives, tmp_path):
        config = TrainConfig(**{**TINY, "epochs": 1})
        targets = {"a": archives[0], "b": archives[1]}
        results = sweep_control_points(config, archives[0], targets, tmp_path, k_values=(1, 2))
        assert set(results) == {1, 2}
        for per_target in results.values():
            assert set(per_target) == {"a", "b"}
        sweep_csv = (tmp_path / "sweep.csv").read_text().splitlines()
        assert sweep_csv[0] == "k,target,mean_dice_pct,mean_hd_mm"
        assert len(sweep_csv) == 1 + 2 * 2
        for k in (1, 2):
            assert (tmp_path / f"k{k}" / "checkpoint.pt").exists()
            for name in targets:
                assert (tmp_path / f"k{k}" / name / "metrics_select.csv").exists()
