"""Particle-filter tracking loop with sparse-appearance and fused likelihoods.

Modes
-----
``l1apg``   free 6-parameter affine states, reconstruction-error likelihood,
            slow one-column dictionary updates.
``l1dpf``   same states, but the likelihood is fused with a detector patch and
            the dictionary is fully rebuilt when tracker and detector disagree.
``l1dpf-m`` fused likelihood plus the decomposed 7-field motion state
            (rotation / translation / scale / shear sampled independently).

Determinism: every random draw comes from a generator derived from
(seed, frame index, particle index); the resampling stream uses the tag one
past the last particle index.  Reductions are in particle-index order, so
results do not depend on execution order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

from .dataio import Detection, RunConfig
from .errors import ContractError, NumericError, TrackError
from .geometry import (LegacyStateVector, QuadBB, StateVector, compose_affine,
                       extract_state, safe_quad_iou)
from .imaging import (Frame, PatchVector, affine_from_quad, reference_corners,
                      warp_affine_batch, warp_patch)
from .sparse import (Coefficients, Dictionary, SolverConfig, build_dictionary,
                     reconstruction_errors, solve_batch)

log = logging.getLogger(__name__)

SCALE_FLOOR = 0.05
SHEAR_LIMIT = 1.0
FAILED_ERROR = 1e6  # reconstruction error assigned to degenerate particles


@dataclass(frozen=True)
class Particle:
    state: StateVector | LegacyStateVector
    weight: float
    cached_error: float


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    chosen_quad: QuadBB
    chosen_state: StateVector | LegacyStateVector
    max_likelihood: float
    dict_updated: bool
    detection_used: bool
    failed: bool = False
    dict_update_failed: bool = False

    def __post_init__(self):
        if not 0.0 <= self.max_likelihood <= 1.0:
            raise ContractError(f"max_likelihood {self.max_likelihood} outside [0, 1]")


def rng_for(seed: int, frame_index: int, stream: int) -> np.random.Generator:
    """Generator for one (seed, frame, stream) triple; parallel-safe by design."""
    return np.random.default_rng(np.random.SeedSequence((seed, frame_index, stream)))


def transition(states: np.ndarray, sigmas: np.ndarray,
               rngs: Seq[np.random.Generator]) -> np.ndarray:
    """Perturb every state field with independent zero-mean Gaussian noise.

    7-column states get their scales clamped to >= 0.05 and shears clipped to
    [-1, 1] so particles cannot collapse or reflect.
    """
    states = np.asarray(states, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if states.shape[1] != sigmas.size:
        raise ContractError(f"{sigmas.size} sigmas for {states.shape[1]}-field states")
    noise = np.stack([rng.standard_normal(sigmas.size) for rng in rngs])
    out = states + noise * sigmas
    if states.shape[1] == 7:
        out[:, 3:5] = np.maximum(out[:, 3:5], SCALE_FLOOR)
        out[:, 5:7] = np.clip(out[:, 5:7], -SHEAR_LIMIT, SHEAR_LIMIT)
    return out


def likelihood_pf(errors: np.ndarray, alpha: float) -> np.ndarray:
    """Normalized reconstruction-error likelihood exp(-alpha * err) / L."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size < 1:
        raise ContractError("need at least one particle error")
    if not np.isfinite(e).all():
        raise NumericError("non-finite reconstruction error")
    z = -alpha * e
    z -= z.max()  # log-sum-exp shift
    w = np.exp(z)
    return w / w.sum()


def _as_patch_matrix(candidate_patches, d: int) -> np.ndarray:
    if isinstance(candidate_patches, np.ndarray):
        mat = candidate_patches
    else:
        mat = np.stack([p.values for p in candidate_patches])
    if mat.ndim != 2 or mat.shape[1] != d:
        raise ContractError(f"candidate patches must be (N, {d}), got {mat.shape}")
    return mat


def likelihood_fused(errors: np.ndarray, detection_patch: PatchVector,
                     candidate_patches, alpha: float) -> np.ndarray:
    """Likelihood fusing reconstruction error with detector-patch agreement."""
    e = np.asarray(errors, dtype=np.float64)
    d_vec = detection_patch.values
    mat = _as_patch_matrix(candidate_patches, d_vec.size)
    if mat.shape[0] != e.size:
        raise ContractError(f"{e.size} errors for {mat.shape[0]} candidate patches")
    if not np.isfinite(e).all():
        raise NumericError("non-finite reconstruction error")
    diff = mat - d_vec
    z = -alpha * (e + np.sum(diff * diff, axis=1))
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def select_map(weights: np.ndarray) -> int:
    """Index of the maximum weight; ties go to the lowest particle index."""
    w = np.asarray(weights)
    if w.size < 1:
        raise ContractError("empty particle population")
    return int(np.argmax(w))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator,
                        n_out: int | None = None) -> np.ndarray:
    """Systematic resampling: n_out offspring indices from one uniform offset.

    Offspring counts deviate from n_out * w_i by less than one each.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = n_out if n_out is not None else w.size
    positions = (np.arange(n) + rng.random()) / n
    cumsum = np.cumsum(w)
    cumsum[-1] = max(cumsum[-1], 1.0)  # guard fp shortfall
    return np.minimum(np.searchsorted(cumsum, positions, side="right"), w.size - 1)


def consensus_check(pf_weights: np.ndarray, fused_weights: np.ndarray, k: int) -> bool:
    """True iff the pf-likelihood argmax ranks within the top k fused weights."""
    pf = np.asarray(pf_weights)
    fused = np.asarray(fused_weights)
    if pf.shape != fused.shape:
        raise ContractError("weight sets must cover the same particles")
    if not 1 <= k <= pf.size:
        raise ContractError(f"need 1 <= k <= {pf.size}, got {k}")
    i_star = select_map(pf)
    rank = 1 + int(np.sum(fused > fused[i_star]))  # ties share the better rank
    return rank <= k


def update_dictionary_slow(dictionary: Dictionary, tracked_patch: PatchVector,
                           coeffs: Coefficients, threshold: float) -> Dictionary:
    """Replace the smallest-coefficient column when no column is similar enough.

    Returns the input dictionary object unchanged when no replacement happens.
    """
    p = np.asarray(tracked_patch.values, dtype=np.float64)
    norm = float(np.linalg.norm(p))
    if norm <= 0.0:
        return dictionary
    p = p / norm
    sims = dictionary.significant.T @ p
    if sims.max() >= threshold:
        return dictionary
    j = int(np.argmin(coeffs.significant))
    s = dictionary.significant.copy()
    s[:, j] = p
    return Dictionary(s, dictionary.side)


def update_dictionary_full(frame: Frame, detection_quad: QuadBB,
                           n: int, side: int) -> Dictionary:
    """Fresh dictionary collected around the detector's region."""
    return build_dictionary(frame, detection_quad, n, side)


def associate_detection(detections: Seq[Detection], prev_quad: QuadBB) -> Detection | None:
    """Pick the detection for a single-target step.

    Highest IoU with the previous tracked quad wins; with no overlap at all,
    the highest-score detection whose center lies within 1.5x the tracked
    quad's diagonal is used; otherwise the frame is treated as detection-free.
    """
    best = None
    best_iou = 0.0
    usable: list[tuple[Detection, QuadBB]] = []
    for det in detections:
        try:
            quad = det.bounding_quad()
        except TrackError as exc:
            log.warning("skipping unusable detection: %s", exc)
            continue
        usable.append((det, quad))
        iou = safe_quad_iou(quad, prev_quad)
        if iou > best_iou:
            best, best_iou = det, iou
    if best is not None:
        return best
    gate = 1.5 * prev_quad.diagonal()
    center = prev_quad.center()
    best_score = -1.0
    for det, quad in usable:
        if np.linalg.norm(quad.center() - center) <= gate and det.score > best_score:
            best, best_score = det, det.score
    return best


class Tracker:
    """Single-target tracker; one instance per sequence, stepped frame by frame.

    Per-particle work inside a step is batched and order-independent; state
    mutation (dictionary swap, resampling) happens once per step.
    """

    def __init__(self, frame: Frame, init_quad: QuadBB, cfg: RunConfig):
        self.cfg = cfg
        self.legacy = cfg.mode in ("l1apg", "l1dpf")
        self.solver_cfg = SolverConfig(lam=cfg.lam, mu=cfg.mu,
                                       max_iters=cfg.max_apg_iters, tol=cfg.apg_tol)
        self.dictionary = build_dictionary(frame, init_quad, cfg.n_templates,
                                           cfg.template_side)
        affine = affine_from_quad(init_quad.corners, cfg.template_side)
        if self.legacy:
            state0 = LegacyStateVector(a1=affine[0, 0], a2=affine[0, 1],
                                       a3=affine[1, 0], a4=affine[1, 1],
                                       o1=affine[0, 2], o2=affine[1, 2])
            self.sigmas = np.array([cfg.sigma_a1, cfg.sigma_a2, cfg.sigma_a3,
                                    cfg.sigma_a4, cfg.sigma_tx, cfg.sigma_ty])
        else:
            state0 = extract_state(affine)
            self.sigmas = np.array([cfg.sigma_theta, cfg.sigma_tx, cfg.sigma_ty,
                                    cfg.sigma_s1, cfg.sigma_s2,
                                    cfg.sigma_sh1, cfg.sigma_sh2])
        n = cfg.n_particles
        self.states = np.tile(state0.as_array(), (n, 1))
        self.weights = np.full(n, 1.0 / n)
        self.errors = np.zeros(n)
        self.frame_index = 1
        self.prev_quad = init_quad
        self.prev_state = state0
        self.last_pf_weights: np.ndarray | None = None
        self.last_fused_weights: np.ndarray | None = None

    def initial_result(self) -> FrameResult:
        """Row for the initialization frame (no likelihood evaluated yet)."""
        return FrameResult(frame_index=1, chosen_quad=self.prev_quad,
                           chosen_state=self.prev_state,
                           max_likelihood=1.0 / self.cfg.n_particles,
                           dict_updated=False, detection_used=False)

    def particles(self) -> list[Particle]:
        return [Particle(self._state_obj(row), float(w), float(e))
                for row, w, e in zip(self.states, self.weights, self.errors)]

    def _state_obj(self, row: np.ndarray):
        if self.legacy:
            return LegacyStateVector.from_array(row)
        return StateVector.from_array(row)

    def _affine_of_row(self, row: np.ndarray) -> np.ndarray:
        if self.legacy:
            # built directly so near-singular rows reach the degeneracy guard
            # instead of tripping state validation
            return np.array([[row[0], row[1], row[4]], [row[2], row[3], row[5]]])
        return compose_affine(StateVector.from_array(row))

    def _check_normalized(self, weights: np.ndarray) -> np.ndarray:
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise NumericError(f"weights sum to {weights.sum()}, expected 1")
        return weights

    def step(self, frame: Frame, detections: Seq[Detection] = ()) -> FrameResult:
        """Advance one frame; on failure reports the previous quad, flagged."""
        self.frame_index += 1
        try:
            return self._step_inner(frame, detections)
        except TrackError as exc:
            log.error("frame %d failed: %s", self.frame_index, exc)
            return FrameResult(frame_index=self.frame_index, chosen_quad=self.prev_quad,
                               chosen_state=self.prev_state, max_likelihood=0.0,
                               dict_updated=False, detection_used=False, failed=True)

    def _step_inner(self, frame: Frame, detections: Seq[Detection]) -> FrameResult:
        cfg = self.cfg
        fidx = self.frame_index
        n = cfg.n_particles
        side = cfg.template_side
        d = side * side

        rngs = [rng_for(cfg.seed, fidx, i) for i in range(n)]
        self.states = transition(self.states, self.sigmas, rngs)

        affines = np.stack([self._affine_of_row(row) for row in self.states])
        ref = reference_corners(side)
        corners = np.einsum("kj,nij->nki", ref, affines[:, :, :2]) + affines[:, None, :, 2]
        areas = 0.5 * np.abs(
            np.sum(corners[:, :, 0] * np.roll(corners[:, :, 1], -1, axis=1), axis=1)
            - np.sum(corners[:, :, 1] * np.roll(corners[:, :, 0], -1, axis=1), axis=1))
        valid = areas >= 1.0  # degenerate candidates carry no usable patch
        patches = warp_affine_batch(frame, affines, side, normalize=True)
        valid &= np.linalg.norm(patches, axis=1) > 0.0  # fully off-frame reads
        patches[~valid] = 0.0

        errors = np.full(n, FAILED_ERROR)
        coeff_s = np.zeros((n, self.dictionary.n))
        coeff_i = np.zeros((n, d))
        if valid.any():
            # per-particle solves run in float32; weights stay float64 downstream
            a_s, a_i, _ = solve_batch(self.dictionary,
                                      patches[valid].astype(np.float32),
                                      self.solver_cfg)
            errors[valid] = reconstruction_errors(self.dictionary, patches[valid],
                                                  a_s.astype(np.float64))
            coeff_s[valid] = a_s
            coeff_i[valid] = a_i

        pf_w = self._check_normalized(likelihood_pf(errors, cfg.alpha))
        self.last_pf_weights = pf_w

        det = None
        if cfg.mode != "l1apg" and detections:
            det = associate_detection(detections, self.prev_quad)
        if det is not None:
            d_patch = warp_patch(frame, det.bounding_quad(), side, normalize=True)
            fused_w = self._check_normalized(
                likelihood_fused(errors, d_patch, patches, cfg.alpha))
            weights, detection_used = fused_w, True
        else:
            fused_w = pf_w
            weights, detection_used = pf_w, False
        self.last_fused_weights = fused_w

        idx = select_map(weights)
        if not valid[idx]:
            raise TrackError("every particle degenerated this frame")
        chosen_quad = QuadBB(corners[idx])
        chosen_state = self._state_obj(self.states[idx])
        max_lik = float(weights[idx])

        dict_updated = False
        update_failed = False
        if cfg.mode == "l1apg":
            if cfg.dict_update:
                tracked = PatchVector(patches[idx], side, normalized=True)
                coeffs = Coefficients(coeff_s[idx], coeff_i[idx])
                new_dict = update_dictionary_slow(self.dictionary, tracked, coeffs,
                                                  cfg.slow_update_threshold)
                dict_updated = new_dict is not self.dictionary
                self.dictionary = new_dict
        elif cfg.dict_update and det is not None:
            if not consensus_check(pf_w, fused_w, cfg.resolved_knn_k()):
                try:
                    self.dictionary = update_dictionary_full(
                        frame, det.bounding_quad(), cfg.n_templates, side)
                    dict_updated = True
                except TrackError as exc:
                    log.warning("frame %d: dictionary update failed: %s", fidx, exc)
                    update_failed = True

        indices = systematic_resample(weights, rng_for(cfg.seed, fidx, n))
        self.states = self.states[indices]
        self.errors = errors[indices]
        self.weights = np.full(n, 1.0 / n)
        self.prev_quad = chosen_quad
        self.prev_state = chosen_state

        return FrameResult(frame_index=fidx, chosen_quad=chosen_quad,
                           chosen_state=chosen_state, max_likelihood=max_lik,
                           dict_updated=dict_updated, detection_used=detection_used,
                           dict_update_failed=update_failed)
