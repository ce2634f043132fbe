import json

import numpy as np
import pytest

from ulsense import cli
from ulsense.channel import ScenarioConfig
from ulsense.dataset import inspect, iter_records
from ulsense.features import PAYLOAD_BYTES
from ulsense.grid import TrafficProfile, mcs_entry
from ulsense.labeling import Label
from ulsense.model import ModelConfig, save_weights, zeros_bundle
from ulsense.synth import SweepSpec, generate_records, synthesize_record


class TestSynth:
    def test_record_is_payload_exact(self):
        scenario = ScenarioConfig(snr_db=15.0, sir_db=5.0, n_interferers=1,
                                  seed=3)
        record, _ = synthesize_record(scenario,
                                      TrafficProfile.high_traffic())
        assert len(record.serialize_payload()) == PAYLOAD_BYTES
        assert record.label == int(Label.INTERF)
        assert record.n_interferers == 1

    def test_clean_slot_labeled_clean(self):
        scenario = ScenarioConfig(snr_db=20.0, n_interferers=0, seed=4)
        record, _ = synthesize_record(scenario, TrafficProfile.no_traffic())
        assert record.label == int(Label.CLEAN)
        assert record.scalars.cb_total_count == 1

    def test_generation_deterministic(self):
        spec = SweepSpec()
        a = [r.serialize_payload() for r in generate_records(spec, 3, 42)]
        b = [r.serialize_payload() for r in generate_records(spec, 3, 42)]
        assert a == b

    def test_seed_changes_stream(self):
        spec = SweepSpec()
        a = next(generate_records(spec, 1, 1)).serialize_payload()
        b = next(generate_records(spec, 1, 2)).serialize_payload()
        assert a != b

    def test_sweep_spec_from_json(self, tmp_path):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps({
            "snr_db": [5, 10], "sir_db": [0], "n_interferers": [0, 2],
            "mcs": [[2, 0], [10, 0]], "high_traffic_fraction": 1.0}))
        spec = SweepSpec.from_file(path)
        assert spec.snr_db == (5, 10)
        assert spec.mcs == ((2, 0), (10, 0))

    def test_sweep_spec_from_yaml(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        path.write_text("snr_db: [7.5]\nmask_burst_count: 3\n")
        spec = SweepSpec.from_file(path)
        assert spec.snr_db == (7.5,)
        assert spec.mask_burst_count == 3

    def test_sweep_spec_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps({"not_a_knob": 1}))
        with pytest.raises(Exception, match="unknown sweep"):
            SweepSpec.from_file(path)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data.ifr"
    spec = tmp_path_factory.mktemp("cli") / "sweep.json"
    spec.write_text(json.dumps({
        "snr_db": [15.0], "sir_db": [5.0], "n_interferers": [0, 1],
        "mcs": [[2, 0]]}))
    rc = cli.main(["gen", "--scenarios", str(spec), "--out", str(out),
                   "--count", "8", "--seed", "1"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def small_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "w.ifw"
    save_weights(zeros_bundle(ModelConfig(64, 128)), path)
    return path


class TestCli:
    def test_gen_writes_dataset(self, small_dataset):
        header = inspect(small_dataset)
        assert header.record_count == 8
        labels = {r.label for r in iter_records(small_dataset)}
        assert labels <= {0, 1}

    def test_shapes_command(self, capsys):
        assert cli.main(["shapes", "--alpha", "128", "--beta", "256"]) == 0
        out = capsys.readouterr().out
        assert "628,992" in out
        assert "1,258,000" in out

    def test_shapes_rejects_unsupported(self, capsys):
        assert cli.main(["shapes", "--alpha", "3", "--beta", "5"]) != 0
        assert "error" in capsys.readouterr().err

    def test_eval_and_infer(self, small_dataset, small_weights, tmp_path,
                            capsys):
        assert cli.main(["eval", "--data", str(small_dataset),
                         "--weights", str(small_weights)]) == 0
        out = capsys.readouterr().out
        assert "confusion matrix" in out

        report = tmp_path / "report.csv"
        assert cli.main(["infer", "--data", str(small_dataset),
                         "--weights", str(small_weights),
                         "--report", str(report)]) == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0].startswith("slot_index,true,predicted")
        assert len(lines) == 1 + 8

    def test_bench_command(self, tmp_path, capsys):
        # Reduced-width bundle keeps this quick; exercises warm-up path.
        path = tmp_path / "small.ifw"
        save_weights(zeros_bundle(ModelConfig(4, 8, grid=(14, 64))), path)
        report = tmp_path / "timing.csv"
        assert cli.main(["bench", "--weights", str(path), "--iters", "12",
                         "--report", str(report)]) == 0
        out = capsys.readouterr().out
        assert "warm-up" in out and "median" in out
        assert "cdf,all" in report.read_text()

    def test_label_command(self, tmp_path):
        log1 = tmp_path / "g1.csv"
        log2 = tmp_path / "g2.csv"
        log1.write_text("t,cb_count\n0.0,5\n0.5,5\n1.2,1\n")
        log2.write_text("t,cb_count\n0.1,1\n1.3,1\n")
        out = tmp_path / "labeled.csv"
        assert cli.main(["label", "--log1", str(log1), "--log2", str(log2),
                         "--window-ms", "1000", "--out", str(out)]) == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "side,t,cb_count,label"
        # Side 1 high in window 0 -> side 2's record there is INTERF.
        assert rows[4].endswith("INTERF")

    def test_unreadable_input_fails_nonzero(self, tmp_path, capsys):
        rc = cli.main(["eval", "--data", str(tmp_path / "nope.ifr"),
                       "--weights", str(tmp_path / "nope.ifw")])
        assert rc != 0

    def test_evaluate_deterministic(self, small_dataset, small_weights):
        from ulsense.metrics import evaluate
        cm1, _, rows1 = evaluate(small_dataset, small_weights)
        cm2, _, rows2 = evaluate(small_dataset, small_weights)
        assert np.array_equal(cm1.counts, cm2.counts)
        for (s1, t1, p1, _, probs1, logits1), \
                (s2, t2, p2, _, probs2, logits2) in zip(rows1, rows2):
            assert (s1, t1, p1) == (s2, t2, p2)
            assert np.array_equal(probs1, probs2)
            assert np.array_equal(logits1, logits2)
