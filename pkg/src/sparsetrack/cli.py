"""Batch command-line entry points: track, eval, synth, ablate.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime failure.
Result files are deterministic given identical inputs and seed; run logs
additionally carry timings and update events.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, metrics
from .dataio import RunConfig
from .errors import ConfigError, DataError, FormatError, TrackError
from .geometry import QuadBB
from .synth import generate_synthetic, spec_from_mapping
from .tracker import FrameResult, Tracker, rng_for

ABLATION_VARIANTS = [
    ("l1apg", "l1apg", True),
    ("l1dpf", "l1dpf", True),
    ("l1dpf_nodu", "l1dpf", False),
    ("l1dpfm", "l1dpf-m", True),
    ("l1dpfm_nodu", "l1dpf-m", False),
]

ABLATION_PAIRS = [("l1dpf", "l1apg"), ("l1dpfm", "l1dpf"),
                  ("l1dpf", "l1dpf_nodu"), ("l1dpfm", "l1dpfm_nodu")]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="sparsetrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the tracker over a sequence")
    p_track.add_argument("--seq", required=True, help="sequence directory")
    p_track.add_argument("--config", required=True, help="key = value config file")
    p_track.add_argument("--detections", help="detections JSON-lines file")
    p_track.add_argument("--out", required=True, help="output results CSV")
    p_track.add_argument("--init", help="override init quad: x1,y1,...,x4,y4")
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="score a results CSV against ground truth")
    p_eval.add_argument("--pred", required=True, help="results CSV")
    p_eval.add_argument("--gt", required=True, help="groundtruth.txt")
    p_eval.add_argument("--report", required=True, help="output report CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--spec", required=True, help="key = value synth spec file")
    p_synth.add_argument("--out", required=True, help="output sequence directory")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_abl = sub.add_parser("ablate", help="run all mode/update variants")
    p_abl.add_argument("--seq", required=True)
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--detections", required=True)
    p_abl.add_argument("--out", required=True, help="output directory")
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def _parse_init(text: str) -> QuadBB:
    parts = text.split(",")
    if len(parts) != 8:
        raise ConfigError(f"--init needs 8 comma-separated numbers, got {len(parts)}")
    try:
        return QuadBB.from_flat([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"--init: {exc}") from exc


def run_tracking(seq: dataio.Sequence, cfg: RunConfig,
                 detections: dict[int, list[dataio.Detection]],
                 init_quad: QuadBB, log_path: Path | None) -> list[FrameResult]:
    """Track a full sequence; writes a run log when log_path is given."""
    log_lines = ["# effective configuration"]
    log_lines += cfg.lines()
    draws = rng_for(cfg.seed, 2, 0).standard_normal(10)
    log_lines.append("# first 10 transition draws (frame 2, particle 0)")
    log_lines.append("transition_draws = " + ",".join(f"{v:.17g}" for v in draws))
    log_lines.append("# per-frame results")

    frame = dataio.load_frame(seq.frame_paths[0])
    tracker = Tracker(frame, init_quad, cfg)
    results = [tracker.initial_result()]
    for i, path in enumerate(seq.frame_paths[1:], start=2):
        t0 = time.perf_counter()
        frame = dataio.load_frame(path)
        res = tracker.step(frame, detections.get(i, []))
        ms = (time.perf_counter() - t0) * 1e3
        events = []
        if res.dict_updated:
            events.append("dict_update")
        if res.dict_update_failed:
            events.append("dict_update_failed")
        if res.failed:
            events.append("FAILED")
        theta = getattr(res.chosen_state, "theta", None)
        theta_txt = f" theta={theta:.4f}" if theta is not None else ""
        log_lines.append(f"frame {i}: {ms:.1f} ms lik={res.max_likelihood:.4f}"
                         f" det={int(res.detection_used)}{theta_txt}"
                         f" {' '.join(events)}".rstrip())
        results.append(res)

    if log_path is not None:
        log_path.write_text("\n".join(log_lines) + "\n")
    return results


def _init_quad_for(seq: dataio.Sequence, init_arg: str | None) -> QuadBB:
    if init_arg:
        return _parse_init(init_arg)
    if seq.gt_quads:
        return seq.gt_quads[0]
    raise DataError("no initialization available: sequence has no ground truth "
                    "and --init was not given")


def cmd_track(args) -> int:
    cfg = dataio.load_config(args.config)
    seq = dataio.load_sequence(args.seq)
    detections = dataio.load_detections(args.detections) if args.detections else {}
    init_quad = _init_quad_for(seq, args.init)
    out = Path(args.out)
    results = run_tracking(seq, cfg, detections, init_quad, out.with_suffix(".log"))
    dataio.write_results(results, out)
    print(f"tracked {len(results)} frames -> {out}")
    return 0


def cmd_eval(args) -> int:
    frames, quads, liks, updated, _ = dataio.load_results(args.pred)
    gt_path = Path(args.gt)
    if not gt_path.exists():
        raise DataError(f"ground-truth file not found: {gt_path}")
    gt_quads = []
    for lineno, line in enumerate(gt_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            gt_quads.append(dataio.parse_gt_line(line))
        except FormatError as exc:
            raise DataError(f"{gt_path}:{lineno}: {exc}") from exc
    if len(quads) != len(gt_quads):
        raise DataError(f"prediction has {len(quads)} frames, "
                        f"ground truth has {len(gt_quads)}")
    report = metrics.evaluate(quads, gt_quads, updated)
    metrics.write_report(report, args.report)
    print(f"accuracy = {report.accuracy:.4f}")
    print(f"robustness = {report.robustness:.4f}")
    print(f"sr@0.5 = {report.sr_at(0.5):.4f}")
    return 0


def cmd_synth(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise ConfigError(f"synth spec file not found: {spec_path}")
    kv = dataio.parse_kv_text(spec_path.read_text(), source=str(spec_path))
    spec = spec_from_mapping(kv, seed=args.seed)
    result = generate_synthetic(spec, args.out)
    print(f"wrote {spec.n_frames} frames -> {result.seq_dir}")
    return 0


def cmd_ablate(args) -> int:
    cfg = dataio.load_config(args.config)
    seq = dataio.load_sequence(args.seq)
    if not seq.gt_quads:
        raise DataError("ablation requires ground truth in the sequence directory")
    detections = dataio.load_detections(args.detections)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    init_quad = seq.gt_quads[0]

    run_quads: dict[str, list[QuadBB]] = {}
    run_liks: dict[str, list[float]] = {}
    for name, mode, dict_update in ABLATION_VARIANTS:
        variant_cfg = dataclasses.replace(cfg, mode=mode, dict_update=dict_update)
        dets = detections if mode != "l1apg" else {}
        results = run_tracking(seq, variant_cfg, dets, init_quad,
                               out_dir / f"{name}.log")
        dataio.write_results(results, out_dir / f"{name}.csv")
        run_quads[name] = [r.chosen_quad for r in results]
        run_liks[name] = [r.max_likelihood for r in results]
        print(f"variant {name}: done")

    _write_ablation_report(out_dir / "ablation_report.csv", run_quads, run_liks,
                           seq.gt_quads)
    print(f"ablation report -> {out_dir / 'ablation_report.csv'}")
    return 0


def _write_ablation_report(path: Path, run_quads, run_liks, gt_quads) -> None:
    import csv as _csv

    with path.open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["variant", "sr@0.5", "accuracy"])
        for name, _, _ in ABLATION_VARIANTS:
            report = metrics.evaluate(run_quads[name], gt_quads)
            writer.writerow([name, f"{report.sr_at(0.5):.6f}", f"{report.accuracy:.6f}"])
        writer.writerow(["pair", "metric", "value"])
        pair_curves = {}
        for a, b in ABLATION_PAIRS:
            pairing = metrics.ablation_pairing(run_quads[a], run_liks[a],
                                               run_quads[b], run_liks[b], gt_quads)
            pair_curves[(a, b)] = pairing
            writer.writerow([f"{a}-{b}", "likelihood_win_rate",
                             f"{pairing.likelihood_win_rate:.6f}"])
            writer.writerow([f"{a}-{b}", "mean_iou_delta",
                             f"{float(np.mean(pairing.iou_delta)):.6f}"])
        writer.writerow(["pair", "tau", "sr_delta"])
        for (a, b), pairing in pair_curves.items():
            for tau, delta in zip(metrics.TAU_GRID, pairing.sr_delta):
                writer.writerow([f"{a}-{b}", f"{tau:.2f}", f"{delta:.6f}"])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrackError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
