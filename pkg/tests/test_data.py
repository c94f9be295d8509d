import numpy as np
import pytest

from msda_few.data import (DomainTransform, MixedSourceDataset, SynthConfig, _prototypes,
                           batch_iterator,
                           load_feature_csv, read_feature_csv, synth_mixed, write_dataset_csv)
from msda_few.exceptions import ConfigError, ContractError, DataError


def small_config(**kw):
    base = dict(n_classes=4, n_alpha_classes=2, samples_per_class=10, target_samples_per_class=5)
    base.update(kw)
    return SynthConfig(**base)


class TestSynth:
    def test_group_tags(self):
        ds = synth_mixed(small_config())
        assert set(ds.alpha_y.tolist()) == {1, 2}
        assert set(ds.beta_y.tolist()) == {3, 4}
        tags = {s.domain_tag for s in ds.samples("source")}
        assert tags == {"alpha", "beta"}

    def test_deterministic(self):
        assert synth_mixed(small_config(seed=3)) == synth_mixed(small_config(seed=3))
        assert synth_mixed(small_config(seed=3)) != synth_mixed(small_config(seed=4))

    def test_identity_transforms_share_distribution(self):
        ident = DomainTransform()
        ds = synth_mixed(small_config(alpha=ident, beta=ident, target=ident,
                                      samples_per_class=2000, target_samples_per_class=2000))
        y_t = ds.target_labels_for_evaluation()
        for cls in (1, 3):
            src = ds.source_X[ds.source_y == cls].mean(axis=0)
            tgt = ds.target_X[y_t == cls].mean(axis=0)
            np.testing.assert_allclose(src, tgt, atol=0.05)

    def test_k_not_below_c(self):
        with pytest.raises(ConfigError, match="k < c"):
            SynthConfig(n_classes=4, n_alpha_classes=4)

    def test_zero_scale_rejected(self):
        with pytest.raises(ConfigError):
            DomainTransform(scale=0.0)

    def test_ring_layout_alternates_groups(self):
        cfg = SynthConfig(prototype_layout="ring", prototype_spread=2.0)
        P = _prototypes(cfg, np.random.default_rng(0))
        np.testing.assert_allclose(np.hypot(P[:, 0], P[:, 1]), 2.0, atol=1e-12)
        angles = np.arctan2(P[:, 1], P[:, 0])
        by_angle = np.argsort((angles - angles[0]) % (2 * np.pi))
        groups = ["a" if i < cfg.n_alpha_classes else "b" for i in by_angle]
        assert groups == ["a", "b"] * 4

    def test_line_layout_is_collinear_and_alternating(self):
        cfg = SynthConfig(prototype_layout="line", prototype_spread=3.0)
        P = _prototypes(cfg, np.random.default_rng(1))
        direction = P[np.argmax(np.linalg.norm(P, axis=1))]
        direction = direction / np.linalg.norm(direction)
        pos = P @ direction
        np.testing.assert_allclose(np.abs(P[:, 0] * direction[1] - P[:, 1] * direction[0]), 0.0,
                                   atol=1e-12)
        groups = ["a" if i < cfg.n_alpha_classes else "b" for i in np.argsort(pos)]
        assert groups in (["a", "b"] * 4, ["b", "a"] * 4)
        assert np.abs(pos).max() == pytest.approx(3.0)

    def test_unknown_layout(self):
        with pytest.raises(ConfigError, match="prototype_layout"):
            SynthConfig(prototype_layout="grid")

    def test_sizes(self):
        ds = synth_mixed(small_config())
        assert (len(ds.alpha_X), len(ds.beta_X), len(ds.target_X)) == (20, 20, 20)


class TestTransform:
    def test_rotation_then_scale_then_shift(self):
        out = DomainTransform(rotation_deg=90.0, scale=2.0, translation=[1.0, 0.0]).apply(
            np.array([[1.0, 0.0]]), np.random.default_rng(0))
        np.testing.assert_allclose(out, [[1.0, 2.0]], atol=1e-12)

    def test_translation_length(self):
        with pytest.raises(ConfigError):
            DomainTransform(translation=[1.0]).apply(np.ones((1, 2)), np.random.default_rng(0))


class TestDatasetContracts:
    def test_frozen(self):
        ds = synth_mixed(small_config())
        with pytest.raises(ValueError):
            ds.alpha_X[0, 0] = 1.0

    def test_target_view_has_no_labels(self):
        ds = synth_mixed(small_config())
        X, y = ds.split_arrays("target")
        assert y is None
        assert all(s.y is None for s in ds.samples("target"))
        assert len(ds.target_labels_for_evaluation()) == len(X)

    def test_missing_target_labels(self):
        ds = MixedSourceDataset([[0.0]], [1], [[1.0]], [2], [[0.5]])
        assert not ds.has_target_labels
        with pytest.raises(ContractError):
            ds.target_labels_for_evaluation()

    def test_beta_label_in_alpha_range(self):
        with pytest.raises(DataError):
            MixedSourceDataset([[0.0], [1.0]], [1, 2], [[1.0]], [2], [[0.5]], n_classes=3,
                               n_alpha_classes=2)

    def test_unknown_split(self):
        with pytest.raises(ValueError):
            synth_mixed(small_config()).split_arrays("test")


def write(path, text):
    path.write_text(text)
    return path


class TestCsv:
    def test_minimal_parse(self, tmp_path):
        a = write(tmp_path / "a.csv", "1,0.1,0.2,0.3\n")
        b = write(tmp_path / "b.csv", "2,1.0,2.0,3.0\n")
        t = write(tmp_path / "t.csv", "-1,0.5,0.5,0.5\n")
        ds = load_feature_csv(a, b, t)
        assert (len(ds.alpha_X), len(ds.beta_X), ds.dim) == (1, 1, 3)
        assert not ds.has_target_labels

    def test_short_row_names_row(self, tmp_path):
        p = write(tmp_path / "a.csv", "# label,x1,x2,x3\n1,0,0,0\n1,0,0\n")
        with pytest.raises(DataError, match="row 3"):
            read_feature_csv(p)

    def test_garbage_value_names_row(self, tmp_path):
        p = write(tmp_path / "a.csv", "1,0,0\n1,abc,0\n")
        with pytest.raises(DataError, match="row 2"):
            read_feature_csv(p)

    def test_unlabeled_only_in_target(self, tmp_path):
        p = write(tmp_path / "a.csv", "-1,0,0\n")
        with pytest.raises(DataError, match="row 1"):
            read_feature_csv(p)
        assert read_feature_csv(p, allow_unlabeled=True)[1].tolist() == [-1]

    def test_label_above_c(self, tmp_path):
        a = write(tmp_path / "a.csv", "1,0\n")
        b = write(tmp_path / "b.csv", "2,1\n3,1\n")
        t = write(tmp_path / "t.csv", "1,0\n")
        with pytest.raises(DataError, match="label 3 outside 1..2 at data row 2"):
            load_feature_csv(a, b, t, n_classes=2)

    def test_dimension_mismatch_across_files(self, tmp_path):
        a = write(tmp_path / "a.csv", "1,0,0\n")
        b = write(tmp_path / "b.csv", "2,1\n")
        t = write(tmp_path / "t.csv", "1,0,0\n")
        with pytest.raises(DataError, match="dimension"):
            load_feature_csv(a, b, t)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="no data"):
            read_feature_csv(write(tmp_path / "a.csv", "# label,x1\n"))

    def test_round_trip(self, tmp_path):
        ds = synth_mixed(small_config(seed=11))
        paths = write_dataset_csv(ds, tmp_path)
        assert load_feature_csv(paths["alpha"], paths["beta"], paths["target"],
                                n_classes=ds.n_classes) == ds


class TestBatches:
    def test_full_batch_is_one_pass(self):
        ds = synth_mixed(small_config())
        it = batch_iterator(ds, "alpha", 20, seed=0)
        X, y = next(it)
        assert sorted(map(tuple, X)) == sorted(map(tuple, ds.alpha_X))

    def test_same_seed_same_sequence(self):
        ds = synth_mixed(small_config())
        a, b = batch_iterator(ds, "source", 7, 1), batch_iterator(ds, "source", 7, 1)
        for _ in range(10):
            xa, ya = next(a)
            xb, yb = next(b)
            assert xa.tobytes() == xb.tobytes() and ya.tobytes() == yb.tobytes()

    def test_epoch_partitions_split(self):
        ds = synth_mixed(small_config())
        it = batch_iterator(ds, "beta", 6, 2)
        sizes = [len(next(it)[0]) for _ in range(4)]
        assert sizes == [6, 6, 6, 2]

    def test_target_batches_unlabeled(self):
        assert next(batch_iterator(synth_mixed(small_config()), "target", 4, 0))[1] is None

    def test_bad_size(self):
        with pytest.raises(ContractError):
            next(batch_iterator(synth_mixed(small_config()), "alpha", 0, 0))
