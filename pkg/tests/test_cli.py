import numpy as np
import pytest

from sparsetrack.cli import main
from sparsetrack.dataio import load_results
from sparsetrack.synth import generate_synthetic, preset_spec


@pytest.fixture(scope="module")
def small_seq(tmp_path_factory):
    root = tmp_path_factory.mktemp("seq")
    spec = preset_spec("translate", n_frames=8, rate=1.5, jitter=1.0, dropout=0.1,
                       width=160, height=120, object_side=32, seed=5)
    generate_synthetic(spec, root)
    return root


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.cfg"
    path.write_text("n_particles = 48\nn_templates = 6\ntemplate_side = 12\n"
                    "max_apg_iters = 60\nseed = 3\n")
    return path


class TestTrack:
    def test_missing_config_flag_exit_1(self, capsys):
        assert main(["track", "--seq", "x", "--out", "y.csv"]) == 1
        assert "--config" in capsys.readouterr().err

    def test_missing_sequence_exit_2(self, small_config, tmp_path):
        rc = main(["track", "--seq", str(tmp_path / "nope"), "--config",
                   str(small_config), "--out", str(tmp_path / "r.csv")])
        assert rc == 2

    def test_no_init_available_exit_2(self, small_config, tmp_path, capsys):
        from PIL import Image
        seq_dir = tmp_path / "bare"
        seq_dir.mkdir()
        rng = np.random.default_rng(0)
        for k in (1, 2):
            Image.fromarray((rng.uniform(0, 255, (40, 40))).astype(np.uint8),
                            mode="L").save(seq_dir / f"{k:08d}.png")
        rc = main(["track", "--seq", str(seq_dir), "--config", str(small_config),
                   "--out", str(tmp_path / "r.csv")])
        assert rc == 2
        assert "initialization" in capsys.readouterr().err

    def test_full_run_row_count_and_log(self, small_seq, small_config, tmp_path):
        out = tmp_path / "results.csv"
        rc = main(["track", "--seq", str(small_seq), "--config", str(small_config),
                   "--detections", str(small_seq / "detections.jsonl"),
                   "--out", str(out)])
        assert rc == 0
        frames, quads, _, _, _ = load_results(out)
        assert frames == list(range(1, 9))
        log_text = out.with_suffix(".log").read_text()
        assert "n_particles = 48" in log_text
        assert "lambda = 0.01" in log_text
        assert "transition_draws = " in log_text

    def test_init_flag_overrides_gt(self, small_seq, small_config, tmp_path):
        out = tmp_path / "r.csv"
        rc = main(["track", "--seq", str(small_seq), "--config", str(small_config),
                   "--out", str(out), "--init", "10,10,40,10,40,40,10,40"])
        assert rc == 0
        _, quads, _, _, _ = load_results(out)
        assert np.allclose(quads[0].corners, [[10, 10], [40, 10], [40, 40], [10, 40]],
                           atol=5e-5)

    def test_rerun_byte_identical(self, small_seq, small_config, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            rc = main(["track", "--seq", str(small_seq), "--config", str(small_config),
                       "--detections", str(small_seq / "detections.jsonl"),
                       "--out", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()


class TestEval:
    def test_pred_equals_gt(self, small_seq, tmp_path, capsys):
        from sparsetrack.dataio import load_sequence, write_results
        from sparsetrack.geometry import StateVector
        from sparsetrack.tracker import FrameResult
        seq = load_sequence(small_seq)
        st = StateVector(0, 0, 0, 1, 1, 0, 0)
        results = [FrameResult(i + 1, q, st, 0.5, False, False)
                   for i, q in enumerate(seq.gt_quads)]
        pred = tmp_path / "pred.csv"
        write_results(results, pred)
        report = tmp_path / "report.csv"
        rc = main(["eval", "--pred", str(pred), "--gt",
                   str(small_seq / "groundtruth.txt"), "--report", str(report)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "accuracy = 1.0000" in out
        assert "sr@0.5 = 1.0000" in out
        assert report.exists()

    def test_length_mismatch_exit_2(self, small_seq, tmp_path, capsys):
        from sparsetrack.dataio import load_sequence, write_results
        from sparsetrack.geometry import StateVector
        from sparsetrack.tracker import FrameResult
        seq = load_sequence(small_seq)
        st = StateVector(0, 0, 0, 1, 1, 0, 0)
        results = [FrameResult(1, seq.gt_quads[0], st, 0.5, False, False)]
        pred = tmp_path / "pred.csv"
        write_results(results, pred)
        rc = main(["eval", "--pred", str(pred), "--gt",
                   str(small_seq / "groundtruth.txt"),
                   "--report", str(tmp_path / "rep.csv")])
        assert rc == 2
        err = capsys.readouterr().err
        assert "1" in err and "8" in err

    def test_hand_computed_three_frame_fixture(self, tmp_path, capsys):
        from sparsetrack.dataio import write_results
        from sparsetrack.geometry import QuadBB, StateVector
        from sparsetrack.tracker import FrameResult
        gt = tmp_path / "gt.txt"
        gt.write_text("0,0,10,0,10,10,0,10\n" * 3)
        st = StateVector(0, 0, 0, 1, 1, 0, 0)
        quads = [
            QuadBB.from_flat([0, 0, 10, 0, 10, 10, 0, 10]),   # IoU 1
            QuadBB.from_flat([5, 0, 15, 0, 15, 10, 5, 10]),   # IoU 1/3
            QuadBB.from_flat([50, 50, 60, 50, 60, 60, 50, 60]),  # IoU 0
        ]
        pred = tmp_path / "p.csv"
        write_results([FrameResult(i + 1, q, st, 0.5, False, False)
                       for i, q in enumerate(quads)], pred)
        rc = main(["eval", "--pred", str(pred), "--gt", str(gt),
                   "--report", str(tmp_path / "rep.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        # accuracy = (1 + 1/3)/2; robustness = one drift / 3 frames; SR@0.5 = 1/3
        assert "accuracy = 0.6667" in out
        assert "robustness = 0.3333" in out
        assert "sr@0.5 = 0.3333" in out


class TestSynth:
    def test_generate_and_determinism(self, tmp_path):
        spec = tmp_path / "synth.cfg"
        spec.write_text("preset = rotate\nn_frames = 6\nrate = 0.02\n")
        rc = main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s1"),
                   "--seed", "4"])
        assert rc == 0
        rc = main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s2"),
                   "--seed", "4"])
        assert rc == 0
        for name in ("00000001.png", "00000006.png", "groundtruth.txt",
                     "detections.jsonl"):
            assert (tmp_path / "s1" / name).read_bytes() == \
                (tmp_path / "s2" / name).read_bytes()

    def test_bad_spec_key_exit_1(self, tmp_path, capsys):
        spec = tmp_path / "synth.cfg"
        spec.write_text("velocity = 3\n")
        rc = main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s")])
        assert rc == 1
        assert "velocity" in capsys.readouterr().err

    def test_gt_matches_analytic_rotation(self, tmp_path):
        from sparsetrack.dataio import load_sequence
        spec = tmp_path / "synth.cfg"
        spec.write_text("preset = rotate\nn_frames = 10\nrate = 0.01\n")
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s"),
                     "--seed", "0"]) == 0
        seq = load_sequence(tmp_path / "s")
        q0, q9 = seq.gt_quads[0], seq.gt_quads[9]
        center = q0.center()
        ang = 0.09
        c, s = np.cos(ang), np.sin(ang)
        expect = (q0.corners - center) @ np.array([[c, s], [-s, c]]).T + center
        assert np.allclose(q9.corners, expect, atol=1e-5)


class TestAblate:
    def test_outputs_and_shared_noise(self, small_seq, small_config, tmp_path, capsys):
        out_dir = tmp_path / "ablation"
        rc = main(["ablate", "--seq", str(small_seq), "--config", str(small_config),
                   "--detections", str(small_seq / "detections.jsonl"),
                   "--out", str(out_dir)])
        assert rc == 0
        names = sorted(p.name for p in out_dir.glob("*.csv"))
        assert names == ["ablation_report.csv", "l1apg.csv", "l1dpf.csv",
                         "l1dpf_nodu.csv", "l1dpfm.csv", "l1dpfm_nodu.csv"]
        draws = set()
        for variant in ("l1apg", "l1dpf", "l1dpf_nodu", "l1dpfm", "l1dpfm_nodu"):
            text = (out_dir / f"{variant}.log").read_text()
            line = next(l for l in text.splitlines() if l.startswith("transition_draws"))
            draws.add(line)
        assert len(draws) == 1  # identical noise stream across variants

    def test_fused_updates_only_with_detection(self, small_seq, small_config, tmp_path):
        # assertable from the run log: dict_update events in fused modes imply
        # a detection was used on that frame
        out_dir = tmp_path / "ab2"
        rc = main(["ablate", "--seq", str(small_seq), "--config", str(small_config),
                   "--detections", str(small_seq / "detections.jsonl"),
                   "--out", str(out_dir)])
        assert rc == 0
        for variant in ("l1dpf", "l1dpfm"):
            for line in (out_dir / f"{variant}.log").read_text().splitlines():
                if line.startswith("frame") and "dict_update" in line:
                    assert "det=1" in line

    def test_requires_gt(self, small_config, tmp_path):
        from PIL import Image
        seq_dir = tmp_path / "bare"
        seq_dir.mkdir()
        Image.fromarray(np.zeros((30, 30), np.uint8), mode="L").save(
            seq_dir / "00000001.png")
        rc = main(["ablate", "--seq", str(seq_dir), "--config", str(small_config),
                   "--detections", str(tmp_path / "missing.jsonl"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
