import numpy as np
import pytest

from ulsense_trainer.ifr import IfrReader, Record, write_ifr
from ulsense_trainer.ifw import TENSOR_ORDER, load, save
from ulsense_trainer.train import (
    TrainConfig,
    bundle_logits,
    inverse_frequency_weights,
    stratified_split,
    train,
)

GRID = (14, 64)
IQ_SHAPE = GRID + (2,)


def synthetic_record(i, interfered, rng):
    """Separable toy slots: interfered ones carry a hot burst + low SINR."""
    iq = (rng.standard_normal(IQ_SHAPE) * 0.3).astype(np.float32)
    sinr = rng.normal(20.0, 1.0)
    cb_err = 0
    if interfered:
        row = int(rng.integers(0, GRID[0]))
        lo = int(rng.integers(0, GRID[1] - 16))
        iq[row, lo:lo + 16, :] += rng.standard_normal((16, 2)) * 2.0
        sinr = rng.normal(5.0, 1.0)
        cb_err = 1
    scalars = np.array([rng.normal(0, 0.5), rng.normal(0, 0.5), sinr,
                        2, 0, cb_err, 2], dtype=np.float32)
    return Record(slot_index=i, scenario_id=i, label=int(interfered),
                  n_interferers=int(interfered), iq=iq.astype(np.float16),
                  scalars=scalars)


def write_dataset(path, n, interf_fraction=0.5, seed=0):
    rng = np.random.default_rng(seed)
    records = [synthetic_record(i, rng.random() < interf_fraction, rng)
               for i in range(n)]
    write_ifr(path, records, IQ_SHAPE)
    return records


class TestHelpers:
    def test_stratified_split_preserves_classes(self):
        targets = np.array([0] * 80 + [1] * 20)
        train_idx, val_idx = stratified_split(targets, 0.2, seed=1)
        assert len(train_idx) + len(val_idx) == 100
        assert np.intersect1d(train_idx, val_idx).size == 0
        assert (targets[val_idx] == 1).sum() == 4
        assert (targets[val_idx] == 0).sum() == 16

    def test_inverse_frequency_weights_favor_minority(self):
        weights = inverse_frequency_weights(np.array([0] * 90 + [1] * 10), 2)
        assert weights[1] > weights[0]
        assert weights[1] == pytest.approx(100 / (2 * 10))


class TestTraining:
    def test_learns_separable_data(self, tmp_path):
        data = tmp_path / "train.ifr"
        write_dataset(data, 160, seed=3)
        config = TrainConfig(alpha=4, beta=8, gamma=16, epochs=4, seed=0)
        bundle, report = train(config, data)
        assert report.val_accuracy >= 0.9
        assert bundle.meta["gamma"] == 16
        # Reduced grids are not the production family: no experimental
        # marker needed.
        assert "experimental" not in bundle.meta

    def test_export_loads_back_and_matches(self, tmp_path):
        data = tmp_path / "train.ifr"
        write_dataset(data, 80, seed=4)
        config = TrainConfig(alpha=4, beta=8, gamma=16, epochs=1, seed=1)
        bundle, _ = train(config, data)
        path = tmp_path / "w.ifw"
        save(bundle, path)
        loaded = load(path)

        reader = IfrReader(data)
        records = [reader.read(i) for i in range(10)]
        reader.close()
        a = bundle_logits(bundle, records)
        b = bundle_logits(loaded, records)
        assert np.array_equal(a, b)

    def test_freeze_block1_preserves_base_bytes(self, tmp_path):
        data = tmp_path / "train.ifr"
        write_dataset(data, 80, seed=5)
        base_config = TrainConfig(alpha=4, beta=8, gamma=16, epochs=1,
                                  seed=2)
        base_bundle, _ = train(base_config, data)
        base_path = tmp_path / "base.ifw"
        save(base_bundle, base_path)

        tuned_config = TrainConfig(alpha=4, beta=8, gamma=16, epochs=2,
                                   seed=3, tl_base=str(base_path),
                                   freeze_block1=True)
        tuned_bundle, _ = train(tuned_config, data)
        for name in ("conv1a.weight", "conv1a.bias", "conv1b.weight",
                     "conv1b.bias"):
            assert tuned_bundle.tensors[name].tobytes() == \
                base_bundle.tensors[name].tobytes(), name
        # The unfrozen layers must actually have moved.
        assert tuned_bundle.tensors["dense.weight"].tobytes() != \
            base_bundle.tensors["dense.weight"].tobytes()

    def test_class_weights_help_minority_recall(self, tmp_path):
        # Imbalanced set (15% interfered): upweighting the minority must
        # not reduce its recall relative to uniform weights.
        data = tmp_path / "imbalanced.ifr"
        write_dataset(data, 200, interf_fraction=0.15, seed=6)

        def minority_recall(class_weights):
            config = TrainConfig(alpha=4, beta=8, gamma=16, epochs=2,
                                 seed=7, class_weights=class_weights)
            bundle, _ = train(config, data)
            reader = IfrReader(data)
            records = [reader.read(i) for i in range(len(reader))]
            reader.close()
            logits = bundle_logits(bundle, records)
            truth = np.array([r.label for r in records])
            pred = logits.argmax(axis=1)
            positives = truth == 1
            return (pred[positives] == 1).mean()

        assert minority_recall((1.0, 10.0)) >= minority_recall((1.0, 1.0))

    def test_tl_base_shape_mismatch_rejected(self, tmp_path):
        data = tmp_path / "train.ifr"
        write_dataset(data, 40, seed=8)
        small, _ = train(TrainConfig(alpha=4, beta=8, gamma=16, epochs=1),
                         data)
        base_path = tmp_path / "base.ifw"
        save(small, base_path)
        bad = TrainConfig(alpha=8, beta=16, gamma=16, epochs=1,
                          tl_base=str(base_path))
        with pytest.raises(ValueError, match="does not match"):
            train(bad, data)

    def test_freeze_requires_base(self):
        with pytest.raises(ValueError, match="tl_base"):
            TrainConfig(alpha=4, beta=8, freeze_block1=True)

    def test_bad_batch_size(self):
        with pytest.raises(ValueError, match="batch size"):
            TrainConfig(alpha=4, beta=8, gamma=48)
