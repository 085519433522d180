import numpy as np
import pytest
from PIL import Image

from sparsetrack.dataio import (Detection, RunConfig, config_from_mapping, load_config,
                                load_detections, load_frame, load_results,
                                load_sequence, parse_gt_line, parse_kv_text,
                                write_results)
from sparsetrack.errors import ConfigError, DataError, FormatError
from sparsetrack.geometry import QuadBB, StateVector
from sparsetrack.tracker import FrameResult


def write_frames(directory, count, size=(24, 32)):
    rng = np.random.default_rng(0)
    for k in range(1, count + 1):
        arr = (rng.uniform(0, 1, size) * 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(directory / f"{k:08d}.png")


class TestSequenceLoading:
    def test_frames_without_gt(self, tmp_path):
        write_frames(tmp_path, 10)
        seq = load_sequence(tmp_path)
        assert len(seq) == 10
        assert seq.gt_quads is None
        assert [p.name for p in seq.frame_paths[:2]] == ["00000001.png", "00000002.png"]

    def test_numeric_sort_not_lexicographic(self, tmp_path):
        for k in (2, 10, 1):
            Image.fromarray(np.zeros((4, 4), np.uint8), mode="L").save(tmp_path / f"{k}.png")
        seq = load_sequence(tmp_path)
        assert [int(p.stem) for p in seq.frame_paths] == [1, 2, 10]

    def test_gt_parsed(self, tmp_path):
        write_frames(tmp_path, 2)
        (tmp_path / "groundtruth.txt").write_text("10,10,50,10,50,40,10,40\n0,0,5,0,5,5,0,5\n")
        seq = load_sequence(tmp_path)
        assert np.allclose(seq.gt_quads[0].corners, [[10, 10], [50, 10], [50, 40], [10, 40]])

    def test_gt_count_mismatch(self, tmp_path):
        write_frames(tmp_path, 3)
        (tmp_path / "groundtruth.txt").write_text("0,0,5,0,5,5,0,5\n")
        with pytest.raises(DataError, match="3 frames"):
            load_sequence(tmp_path)

    def test_bad_gt_line_names_line_number(self, tmp_path):
        write_frames(tmp_path, 3)
        (tmp_path / "groundtruth.txt").write_text(
            "0,0,5,0,5,5,0,5\n0,0,5,0,5,5,0,5\n1,2,3\n")
        with pytest.raises(DataError, match=":3"):
            load_sequence(tmp_path)

    def test_empty_dir(self, tmp_path):
        with pytest.raises(DataError):
            load_sequence(tmp_path)

    def test_load_frame_rgb_uses_luma(self, tmp_path):
        arr = np.zeros((2, 2, 3), np.uint8)
        arr[0, 0] = (255, 0, 0)
        Image.fromarray(arr, mode="RGB").save(tmp_path / "f.png")
        f = load_frame(tmp_path / "f.png")
        assert f.pixels[0, 0] == pytest.approx(0.299, abs=1e-12)


class TestGtLine:
    def test_unit_square(self):
        q = parse_gt_line("0,0,1,0,1,1,0,1")
        assert np.array_equal(q.corners, [[0, 0], [1, 0], [1, 1], [0, 1]])

    def test_field_count_error(self):
        with pytest.raises(FormatError, match="8 fields"):
            parse_gt_line("0,0,1,0,1,1")

    def test_scientific_notation(self):
        q = parse_gt_line("1e1,0,11,0,11,1,1e1,1")
        assert q.corners[0, 0] == 10.0

    def test_non_numeric(self):
        with pytest.raises(FormatError):
            parse_gt_line("a,0,1,0,1,1,0,1")

    def test_non_convex_warns_but_parses(self, caplog):
        import logging
        with caplog.at_level(logging.WARNING):
            parse_gt_line("0,0,2,2,2,0,0,2")
        assert any("convex" in r.message for r in caplog.records)


class TestDetections:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("")
        assert load_detections(p) == {}

    def test_quad_round_trip(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"frame": 3, "detections": [{"score": 0.9, "class": "car", '
                     '"quad": [1,2,11,2,11,9,1,9]}]}\n')
        dets = load_detections(p)
        assert list(dets) == [3]
        d = dets[3][0]
        assert d.score == 0.9 and d.class_label == "car"
        assert np.array_equal(d.bounding_quad().corners, [[1, 2], [11, 2], [11, 9], [1, 9]])

    def test_mask_only_derives_quad_from_disk(self, tmp_path):
        from sparsetrack.imaging import BinaryMask, rle_encode
        r, c = 12, (20.0, 16.0)
        yy, xx = np.mgrid[0:32, 0:40]
        bits = (xx + 0.5 - c[0]) ** 2 + (yy + 0.5 - c[1]) ** 2 <= r * r
        counts = rle_encode(BinaryMask(bits))
        p = tmp_path / "d.jsonl"
        import json
        p.write_text(json.dumps({"frame": 1, "detections": [
            {"score": 0.5, "mask_rle": {"size": [32, 40], "counts": counts}}]}) + "\n")
        d = load_detections(p)[1][0]
        quad = d.bounding_quad()
        # disk of radius r: two-sigma ellipse has semi-axes ~= r
        assert np.allclose(quad.center(), c, atol=0.5)
        assert quad.area() == pytest.approx((2 * r) ** 2, rel=0.06)

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"frame": 1, "detections": []}\n{oops\n')
        with pytest.raises(FormatError, match=":2"):
            load_detections(p)

    def test_neither_quad_nor_mask(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"frame": 1, "detections": [{"score": 0.5}]}\n')
        with pytest.raises(FormatError):
            load_detections(p)

    def test_duplicate_frame_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"frame": 2, "detections": []}\n{"frame": 2, "detections": []}\n')
        with pytest.raises(FormatError, match="duplicate"):
            load_detections(p)

    def test_order_insensitive(self, tmp_path):
        line = '{"frame": %d, "detections": [{"score": 0.5, "quad": [0,0,4,0,4,4,0,4]}]}'
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        a.write_text("\n".join(line % k for k in (1, 2, 3)))
        b.write_text("\n".join(line % k for k in (3, 1, 2)))
        da, db = load_detections(a), load_detections(b)
        assert sorted(da) == sorted(db) == [1, 2, 3]

    def test_counts_size_mismatch(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"frame": 1, "detections": [{"score": 0.5, '
                     '"mask_rle": {"size": [2, 2], "counts": [3]}}]}\n')
        with pytest.raises(FormatError):
            load_detections(p)

    def test_detection_requires_quad_or_mask(self):
        with pytest.raises(FormatError):
            Detection(score=0.5)


class TestResultsRoundTrip:
    def _results(self):
        q1 = QuadBB.from_flat([1.23456, 2, 11, 2, 11, 9, 1.2, 9])
        q2 = QuadBB.from_flat([5, 5, 15, 5, 15, 15, 5, 15])
        st = StateVector(0, 0, 0, 1, 1, 0, 0)
        return [
            FrameResult(1, q1, st, 0.5, False, False),
            FrameResult(2, q2, st, 0.25, True, True),
        ]

    def test_single_result_two_lines(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results(self._results()[:1], path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0] == ("frame,x1,y1,x2,y2,x3,y3,x4,y4,"
                            "max_likelihood,dict_updated,detection_used")

    def test_round_trip_within_quantization(self, tmp_path):
        path = tmp_path / "r.csv"
        results = self._results()
        write_results(results, path)
        frames, quads, liks, updated, det_used = load_results(path)
        assert frames == [1, 2]
        for res, quad in zip(results, quads):
            assert np.allclose(quad.corners, res.chosen_quad.corners, atol=5e-5)
        assert updated == [False, True]
        assert det_used == [False, True]

    def test_flags_serialized_as_bits(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results(self._results(), path)
        rows = path.read_text().strip().splitlines()
        assert rows[1].endswith(",0,0")
        assert rows[2].endswith(",1,1")


class TestConfig:
    def test_empty_file_all_defaults(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("")
        cfg = load_config(p)
        assert cfg == RunConfig()

    def test_single_override(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("n_particles = 100\n")
        cfg = load_config(p)
        assert cfg.n_particles == 100
        assert cfg.alpha == RunConfig().alpha

    def test_unknown_mode_lists_choices(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("mode = l1dpfm\n")
        with pytest.raises(ConfigError, match="l1apg"):
            load_config(p)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="particles"):
            config_from_mapping({"particles": "10"})

    def test_type_error_names_key(self):
        with pytest.raises(ConfigError, match="n_particles"):
            config_from_mapping({"n_particles": "many"})

    def test_range_error(self):
        with pytest.raises(ConfigError, match="alpha"):
            config_from_mapping({"alpha": "-3"})

    def test_lambda_key_maps(self):
        cfg = config_from_mapping({"lambda": "0.5"})
        assert cfg.lam == 0.5

    def test_comments_and_blanks(self):
        kv = parse_kv_text("# header\n\nseed = 7  # trailing\n")
        assert kv == {"seed": "7"}

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_kv_text("seed = 1\nseed = 2\n")

    def test_bool_parsing(self):
        assert config_from_mapping({"dict_update": "false"}).dict_update is False
        assert config_from_mapping({"dict_update": "1"}).dict_update is True
        with pytest.raises(ConfigError):
            config_from_mapping({"dict_update": "maybe"})

    def test_knn_default_tracks_population(self):
        assert RunConfig(n_particles=400).resolved_knn_k() == 40
        assert RunConfig(n_particles=3).resolved_knn_k() == 1
        assert RunConfig(n_particles=40, knn_k=5).resolved_knn_k() == 5

    def test_knn_range_checked(self):
        with pytest.raises(ConfigError, match="knn_k"):
            RunConfig(n_particles=10, knn_k=11)

    def test_effective_lines_cover_all_keys(self):
        lines = RunConfig().lines()
        keys = {line.split(" = ")[0] for line in lines}
        assert "lambda" in keys and "mode" in keys and "knn_k" in keys
        assert len(keys) == len(lines)
