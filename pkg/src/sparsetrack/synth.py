"""Synthetic sequences with exact ground truth and oracle detections.

A textured patch is splatted onto a static noise background by inverse
warping through the per-frame motion state, so the ground-truth quad, the
rendered appearance, and the tracker's own warp convention agree exactly.
Oracle detections are the ground-truth state perturbed by per-field jitter
and dropped with a configurable probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError
from .geometry import QuadBB, StateVector, compose_affine, quad_from_affine
from .imaging import bilinear_sample

PRESETS = ("static", "translate", "rotate", "scale", "shear", "mixed", "occlude", "illum")

DEFAULT_RATES = {"static": 0.0, "translate": 2.0, "rotate": 0.01, "scale": 0.005,
                 "shear": 0.003, "mixed": 1.0, "occlude": 0.0, "illum": 0.004}

OCCLUDER_INTENSITY = 0.85


@dataclass
class SynthSpec:
    """Everything needed to render one sequence deterministically."""

    n_frames: int
    width: int
    height: int
    texture: np.ndarray                 # (obj_side, obj_side) intensities
    trajectory: list[StateVector]
    noise_seed: int
    detection_jitter: np.ndarray        # (7,) sigma per state field
    dropout: float
    detection_score: float = 0.95
    occluders: list[QuadBB | None] | None = None
    gains: np.ndarray | None = None     # per-frame object intensity gain
    background_range: tuple[float, float] = (0.2, 0.4)

    def __post_init__(self):
        if len(self.trajectory) != self.n_frames:
            raise ConfigError(
                f"trajectory has {len(self.trajectory)} states for {self.n_frames} frames")
        self.detection_jitter = np.asarray(self.detection_jitter, dtype=np.float64)
        if self.detection_jitter.shape != (7,) or (self.detection_jitter < 0).any():
            raise ConfigError("detection_jitter must be 7 non-negative sigmas")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must lie in [0, 1]")
        self.texture = np.asarray(self.texture, dtype=np.float64)

    @property
    def object_side(self) -> int:
        return self.texture.shape[0]


@dataclass
class SynthResult:
    seq_dir: Path
    gt_quads: list[QuadBB]
    detection_quads: list[QuadBB | None]
    occluder_quads: list[QuadBB | None] = field(default_factory=list)


def make_texture(side: int, contrast: float, seed: int,
                 background_mean: float = 0.3, variation: float = 0.12) -> np.ndarray:
    """Asymmetric random texture with mean background_mean + contrast.

    A dark border ring and a mid-frequency checker give the patch enough
    structure that scale and rotation are observable through the tracker's
    template warp; the smooth random base breaks all rotational symmetry.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 11)))
    coarse = rng.uniform(-1.0, 1.0, (6, 6))
    ys = np.linspace(0, coarse.shape[0] - 1, side)
    xs = np.linspace(0, coarse.shape[1] - 1, side)
    # bilinear upsample of the coarse grid
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, coarse.shape[0] - 1)
    x1 = np.minimum(x0 + 1, coarse.shape[1] - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    up = (coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
          + coarse[np.ix_(y0, x1)] * (1 - fy) * fx
          + coarse[np.ix_(y1, x0)] * fy * (1 - fx)
          + coarse[np.ix_(y1, x1)] * fy * fx)
    peak = np.abs(up).max()
    if peak > 0:
        up *= variation / peak

    yy, xx = np.mgrid[0:side, 0:side]
    period = max(4, side // 4)
    checker = (((xx // period) + (yy // period)) % 2 - 0.5) * 0.16
    edge = np.minimum(np.minimum(xx, side - 1 - xx), np.minimum(yy, side - 1 - yy))
    ring = np.where(edge < max(2, side // 16), -0.3, 0.0)

    tex = up + checker + ring
    tex += (background_mean + contrast) - tex.mean()
    return np.clip(tex, 0.0, 1.0)


def render_frame(background: np.ndarray, texture: np.ndarray, affine: np.ndarray,
                 gain: float = 1.0, occluder: QuadBB | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-warp the texture onto a copy of the background.

    Returns (pixels, alpha_mask); the mask marks object pixels before any
    occluder is painted.
    """
    h, w = background.shape
    side = texture.shape[0]
    out = background.copy()
    mask = np.zeros((h, w), dtype=bool)

    full = np.vstack([affine, [0.0, 0.0, 1.0]])
    inv = np.linalg.inv(full)
    quad = quad_from_affine(affine, side)
    x_lo = max(int(np.floor(quad.corners[:, 0].min())) - 2, 0)
    x_hi = min(int(np.ceil(quad.corners[:, 0].max())) + 2, w)
    y_lo = max(int(np.floor(quad.corners[:, 1].min())) - 2, 0)
    y_hi = min(int(np.ceil(quad.corners[:, 1].max())) + 2, h)
    if x_lo < x_hi and y_lo < y_hi:
        yy, xx = np.mgrid[y_lo:y_hi, x_lo:x_hi]
        px = xx + 0.5
        py = yy + 0.5
        u = inv[0, 0] * px + inv[0, 1] * py + inv[0, 2]
        v = inv[1, 0] * px + inv[1, 1] * py + inv[1, 2]
        inside = (np.abs(u) <= side / 2.0) & (np.abs(v) <= side / 2.0)
        if inside.any():
            # sample texel centers, clamped to the texture edge
            tx = np.clip(u[inside] + side / 2.0, 0.5, side - 0.5)
            ty = np.clip(v[inside] + side / 2.0, 0.5, side - 0.5)
            vals = bilinear_sample(texture, tx, ty)
            window = out[y_lo:y_hi, x_lo:x_hi]
            window[inside] = np.clip(gain * vals, 0.0, 1.0)
            mask[y_lo:y_hi, x_lo:x_hi] = inside

    if occluder is not None:
        ox_lo = max(int(np.floor(occluder.corners[:, 0].min())), 0)
        ox_hi = min(int(np.ceil(occluder.corners[:, 0].max())), w)
        oy_lo = max(int(np.floor(occluder.corners[:, 1].min())), 0)
        oy_hi = min(int(np.ceil(occluder.corners[:, 1].max())), h)
        if ox_lo < ox_hi and oy_lo < oy_hi:
            out[oy_lo:oy_hi, ox_lo:ox_hi] = OCCLUDER_INTENSITY
    return out, mask


def _jittered_state(state: StateVector, jitter: np.ndarray,
                    rng: np.random.Generator) -> StateVector:
    vals = state.as_array() + rng.standard_normal(7) * jitter
    vals[3:5] = np.maximum(vals[3:5], 0.05)
    return StateVector.from_array(vals)


def generate_synthetic(spec: SynthSpec, out_dir: Path | str) -> SynthResult:
    """Render frames plus groundtruth.txt and detections.jsonl into out_dir."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out_dir}: {exc}") from exc

    bg_rng = np.random.default_rng(np.random.SeedSequence((spec.noise_seed, 1)))
    lo, hi = spec.background_range
    background = bg_rng.uniform(lo, hi, (spec.height, spec.width))
    det_rng = np.random.default_rng(np.random.SeedSequence((spec.noise_seed, 2)))

    gt_quads: list[QuadBB] = []
    det_quads: list[QuadBB | None] = []
    occluders = spec.occluders or [None] * spec.n_frames
    gains = spec.gains if spec.gains is not None else np.ones(spec.n_frames)

    det_lines = []
    for t in range(spec.n_frames):
        state = spec.trajectory[t]
        affine = compose_affine(state)
        pixels, _ = render_frame(background, spec.texture, affine,
                                 gain=float(gains[t]), occluder=occluders[t])
        img = Image.fromarray(np.round(pixels * 255.0).astype(np.uint8), mode="L")
        img.save(out_dir / f"{t + 1:08d}.png")
        gt_quads.append(quad_from_affine(affine, spec.object_side))

        dets = []
        dropped = det_rng.random() < spec.dropout
        jit = det_rng.standard_normal(7) * spec.detection_jitter
        if not dropped:
            vals = state.as_array() + jit
            vals[3:5] = np.maximum(vals[3:5], 0.05)
            det_state = StateVector.from_array(vals)
            quad = quad_from_affine(compose_affine(det_state), spec.object_side)
            det_quads.append(quad)
            dets.append({"score": spec.detection_score, "class": "object",
                         "quad": [round(float(v), 6) for v in quad.flat()]})
        else:
            det_quads.append(None)
        det_lines.append(json.dumps({"frame": t + 1, "detections": dets}))

    gt_text = "\n".join(",".join(f"{v:.6f}" for v in q.flat()) for q in gt_quads)
    (out_dir / "groundtruth.txt").write_text(gt_text + "\n")
    (out_dir / "detections.jsonl").write_text("\n".join(det_lines) + "\n")
    return SynthResult(seq_dir=out_dir, gt_quads=gt_quads, detection_quads=det_quads,
                       occluder_quads=list(occluders))


def preset_spec(preset: str, n_frames: int = 100, rate: float | None = None,
                jitter: float = 2.0, dropout: float = 0.2, contrast: float = 0.35,
                width: int = 320, height: int = 240, object_side: int = 48,
                seed: int = 0, score: float = 0.95) -> SynthSpec:
    """Build a SynthSpec for one named motion preset."""
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown value {preset!r}, expected one of {PRESETS}")
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    if rate is None:
        rate = DEFAULT_RATES[preset]
    cx, cy = width / 2.0, height / 2.0
    if preset == "translate":
        # start left of center so the full run stays inside the frame
        cx = max(object_side, cx - rate * (n_frames - 1) / 2.0)

    states: list[StateVector] = []
    occluders: list[QuadBB | None] | None = None
    gains = None
    for t in range(n_frames):
        theta, o1, o2 = 0.0, cx, cy
        s = 1.0
        sh1 = 0.0
        if preset == "translate":
            o1 = cx + rate * t
        elif preset == "rotate":
            theta = rate * t
        elif preset == "scale":
            s = 1.0 + rate * t
        elif preset == "shear":
            sh1 = min(rate * t, 0.6)
        elif preset == "mixed":
            o1 = cx + 0.8 * rate * t - 0.4 * rate * (n_frames - 1)
            theta = 0.004 * rate * t
            s = 1.0 + 0.002 * rate * t
        states.append(StateVector(theta=theta, o1=o1, o2=o2, s1=s, s2=s,
                                  sh1=sh1, sh2=0.0))

    if preset == "occlude":
        occluders = []
        bar_w = 0.9 * object_side
        t0, t1 = n_frames // 4, max(n_frames // 4 + 1, 3 * n_frames // 4)
        for t in range(n_frames):
            if t0 <= t < t1:
                frac = (t - t0) / max(t1 - t0 - 1, 1)
                bar_cx = cx - object_side + frac * 2.0 * object_side
                occluders.append(QuadBB(np.array([
                    [bar_cx - bar_w / 2, 0.0], [bar_cx + bar_w / 2, 0.0],
                    [bar_cx + bar_w / 2, float(height)], [bar_cx - bar_w / 2, float(height)]])))
            else:
                occluders.append(None)
    if preset == "illum":
        gains = 1.0 + rate * np.arange(n_frames, dtype=np.float64)

    texture = make_texture(object_side, contrast, seed)
    return SynthSpec(n_frames=n_frames, width=width, height=height, texture=texture,
                     trajectory=states, noise_seed=seed,
                     detection_jitter=np.array([0.0, jitter, jitter, 0.0, 0.0, 0.0, 0.0]),
                     dropout=dropout, detection_score=score,
                     occluders=occluders, gains=gains)


_SYNTH_KEYS = {"n_frames": int, "preset": str, "rate": float, "jitter": float,
               "dropout": float, "contrast": float, "width": int, "height": int,
               "object_side": int, "score": float}


def spec_from_mapping(kv: dict[str, str], seed: int) -> SynthSpec:
    """Build a preset SynthSpec from key = value pairs (the synth file format)."""
    kwargs: dict = {}
    for key, value in kv.items():
        if key not in _SYNTH_KEYS:
            raise ConfigError(f"unknown synth key {key!r}")
        typ = _SYNTH_KEYS[key]
        try:
            kwargs[key] = typ(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    preset = kwargs.pop("preset", "translate")
    return preset_spec(preset, seed=seed, **kwargs)
