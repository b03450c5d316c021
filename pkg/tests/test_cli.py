import json
from pathlib import Path

import numpy as np
import pytest

jsonschema = pytest.importorskip("jsonschema")

from handpose import bench, gesture_net, skin_segment
from handpose.cli import main
from handpose.haar_cascade import serialize_cascade
from handpose.imaging import Image, load_pnm, save_pnm

from helpers import BG_COLOR, SKIN_BASE, nearest_rank_oracle
from test_pipeline import brightness_cascade, flat_skin_model, scene, zero_network

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"


def load_schema(name):
    return json.loads((SCHEMA_DIR / name).read_text())


@pytest.fixture(scope="module")
def zero_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "zero.hgw"
    path.write_bytes(gesture_net.save_weights(zero_network()))
    return path


@pytest.fixture(scope="module")
def mask_image(tmp_path_factory):
    bits = np.random.default_rng(5).integers(0, 2, size=(48, 48)).astype(np.uint8)
    img = Image((bits * 255)[:, :, None])
    path = tmp_path_factory.mktemp("images") / "mask.pgm"
    path.write_bytes(save_pnm(img))
    return path


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    rng = np.random.default_rng(6)
    for label in range(10):
        sub = root / str(label)
        sub.mkdir()
        for i in range(3):
            bits = rng.integers(0, 2, size=(48, 48)).astype(np.uint8)
            sub.joinpath(f"img_{i}.pgm").write_bytes(save_pnm(Image((bits * 255)[:, :, None])))
    return root


@pytest.fixture(scope="module")
def session_assets(tmp_path_factory, zero_weights):
    root = tmp_path_factory.mktemp("session")
    skin = root / "skin.txt"
    skin.write_text(flat_skin_model().to_text())
    cascade = root / "cascade.xml"
    cascade.write_text(serialize_cascade(brightness_cascade()))
    frames = root / "frames"
    frames.mkdir()
    x = 30
    for i in range(8):
        frames.joinpath(f"frame_{i:06d}.ppm").write_bytes(save_pnm(scene((x, 40))))
        x += 2
    return {"skin": skin, "cascade": cascade, "frames": frames, "weights": zero_weights}


class TestExitCodes:
    def test_no_arguments_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["classify", "--image", "x.pgm"])
        assert exc.value.code == 2

    def test_missing_file_is_domain_error(self, capsys, zero_weights):
        code = main(["classify", "--image", "/nonexistent.pgm", "--weights", str(zero_weights)])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert err.count("\n") == 1

    def test_corrupt_weights(self, capsys, mask_image, tmp_path):
        bad = tmp_path / "bad.hgw"
        bad.write_bytes(b"\x00" * 64)
        code = main(["classify", "--image", str(mask_image), "--weights", str(bad)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_wrong_image_size(self, capsys, zero_weights, tmp_path):
        img = tmp_path / "small.pgm"
        img.write_bytes(save_pnm(Image(np.zeros((10, 10, 1), dtype=np.uint8))))
        code = main(["classify", "--image", str(img), "--weights", str(zero_weights)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestClassify:
    def test_output_contract(self, capsys, zero_weights, mask_image):
        code = main(["classify", "--image", str(mask_image), "--weights", str(zero_weights)])
        assert code == 0
        out = capsys.readouterr().out.strip()
        parts = out.split()
        assert parts[0] == "label" and parts[2] == "conf"
        assert 0 <= int(parts[1]) <= 9
        # zero network spreads probability uniformly over the 10 classes
        assert float(parts[3]) == pytest.approx(0.1, abs=1e-6)


class TestFitSkinAndSegment:
    def test_round_trip(self, capsys, tmp_path):
        rng = np.random.default_rng(8)
        samples = np.clip(
            SKIN_BASE + rng.integers(-6, 7, size=(200, 3)), 0, 255
        ).astype(np.uint8)
        csv = tmp_path / "pixels.csv"
        csv.write_text("\n".join(",".join(str(v) for v in row) for row in samples) + "\n")
        model_path = tmp_path / "skin.txt"
        assert main(["fit-skin", "--pixels", str(csv), "--out", str(model_path)]) == 0
        model = skin_segment.SkinModel.from_text(model_path.read_text())
        assert model.intervals.shape == (6, 2)

        frame_path = tmp_path / "frame.ppm"
        frame_path.write_bytes(save_pnm(scene((50, 40))))
        out_path = tmp_path / "mask.pgm"
        code = main(
            ["segment", "--image", str(frame_path), "--model", str(model_path), "--out", str(out_path)]
        )
        assert code == 0
        mask = load_pnm(out_path.read_bytes())
        assert (mask.height, mask.width, mask.channels) == (48, 48, 1)
        assert set(np.unique(mask.pixels)) <= {0, 255}

    def test_segment_no_hand_exits_one(self, capsys, tmp_path):
        model_path = tmp_path / "skin.txt"
        model_path.write_text(flat_skin_model().to_text())
        frame = np.empty((60, 80, 3), dtype=np.uint8)
        frame[:, :] = BG_COLOR
        frame_path = tmp_path / "empty.ppm"
        frame_path.write_bytes(save_pnm(Image(frame)))
        code = main(
            ["segment", "--image", str(frame_path), "--model", str(model_path), "--out", str(tmp_path / "o.pgm")]
        )
        assert code == 1


class TestTrainEval:
    def test_train_writes_loadable_weights(self, capsys, tiny_dataset, tmp_path):
        out = tmp_path / "trained.hgw"
        code = main(
            ["train", "--data", str(tiny_dataset), "--out", str(out), "--epochs", "1", "--batch-size", "8"]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "effective seed 42" in stdout
        net = gesture_net.load_weights(out.read_bytes())
        assert net.forward(np.zeros((1, 1, 48, 48), dtype=np.float32)).shape == (1, 10)

    def test_eval_csv_matches_library(self, capsys, tiny_dataset, zero_weights, tmp_path):
        report = tmp_path / "cm.csv"
        code = main(
            ["eval", "--data", str(tiny_dataset), "--weights", str(zero_weights), "--report", str(report)]
        )
        assert code == 0
        data = gesture_net.load_dataset(tiny_dataset, "otsu", 128)
        cm, acc = gesture_net.evaluate(zero_network(), data)
        assert report.read_text() == cm.to_csv()
        assert f"accuracy {acc:.4f}" in capsys.readouterr().out


class TestDetectTrackRun:
    def test_detect_prints_detections(self, capsys, session_assets, tmp_path):
        frame_path = tmp_path / "frame.ppm"
        frame_path.write_bytes(save_pnm(scene((50, 40))))
        code = main(
            ["detect", "--image", str(frame_path), "--cascade", str(session_assets["cascade"])]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-1].endswith("detections")
        assert int(lines[-1].split()[0]) >= 1

    def test_track_reports_each_frame(self, capsys, session_assets):
        code = main(
            ["track", "--frames", str(session_assets["frames"]), "--init", "30,40,30,30"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "effective seed 42"
        assert len(lines) == 8  # seed line + 7 tracked frames

    def test_track_bad_init(self, capsys, session_assets):
        code = main(["track", "--frames", str(session_assets["frames"]), "--init", "1,2,3"])
        assert code == 1

    def test_run_writes_schema_valid_report(self, capsys, session_assets, tmp_path):
        report_path = tmp_path / "session.json"
        code = main(
            [
                "run",
                "--frames", str(session_assets["frames"]),
                "--skin", str(session_assets["skin"]),
                "--weights", str(session_assets["weights"]),
                "--cascade", str(session_assets["cascade"]),
                "--report", str(report_path),
            ]
        )
        assert code == 0
        payload = json.loads(report_path.read_text())
        jsonschema.validate(payload, load_schema("session_report.schema.json"))
        assert len(payload["frames"]) == 8
        labelled = [f for f in payload["frames"] if f["raw_label"] is not None]
        assert labelled and all(f["raw_label"] == 0 for f in labelled)


class TestBench:
    def test_forward_single_iteration(self, capsys, zero_weights, tmp_path):
        report_path = tmp_path / "bench.json"
        code = main(
            ["bench", "--weights", str(zero_weights), "--iters", "1", "--warmup", "0", "--report", str(report_path)]
        )
        assert code == 0
        payload = json.loads(report_path.read_text())
        jsonschema.validate(payload, load_schema("bench_report.schema.json"))
        assert payload["iterations"] == 1
        assert payload["mean"] == payload["p50"] == payload["min"] == payload["max"]

    def test_reference_footer_present(self, zero_weights, tmp_path):
        report_path = tmp_path / "bench.json"
        main(["bench", "--weights", str(zero_weights), "--iters", "1", "--report", str(report_path)])
        payload = json.loads(report_path.read_text())
        assert "351" in payload["reference"] and "0.690" in payload["reference"]

    def test_repeated_runs_within_3x(self, capsys, zero_weights):
        net = gesture_net.load_weights(Path(zero_weights).read_bytes())
        means = [bench.bench_forward(net, iters=20, warmup=5, seed=42).stats()["mean"] for _ in range(2)]
        assert means[0] <= 3 * means[1] and means[1] <= 3 * means[0]

    def test_percentiles_match_oracle(self, zero_weights):
        net = gesture_net.load_weights(Path(zero_weights).read_bytes())
        report = bench.bench_forward(net, iters=17, warmup=0, seed=1)
        stats = report.stats()
        assert stats["p50"] == nearest_rank_oracle(report.samples_ms, 0.5)
        assert stats["p95"] == nearest_rank_oracle(report.samples_ms, 0.95)

    def test_pipeline_mode_requires_session_flags(self, capsys, zero_weights):
        code = main(["bench", "--mode", "pipeline", "--weights", str(zero_weights)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_pipeline_mode_samples_per_frame(self, capsys, session_assets, tmp_path):
        report_path = tmp_path / "bench.json"
        code = main(
            [
                "bench",
                "--mode", "pipeline",
                "--weights", str(session_assets["weights"]),
                "--frames", str(session_assets["frames"]),
                "--skin", str(session_assets["skin"]),
                "--cascade", str(session_assets["cascade"]),
                "--iters", "1",
                "--report", str(report_path),
            ]
        )
        assert code == 0
        payload = json.loads(report_path.read_text())
        jsonschema.validate(payload, load_schema("bench_report.schema.json"))
        assert payload["iterations"] == 8
