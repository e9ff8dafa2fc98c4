"""Tracking loop and training-time data assembly.

Per frame the tracker draws candidate poses from the Brownian motion
model around the previous pose (the zero offset is always a free
candidate), scores the total energy of each, takes the best, and refines
it by backtracking gradient descent. Training harvests foreground patches
at labeled poses and background patches at rejection-sampled poses, fits
the chosen encoder, and fits the generative density pair on the codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geom
from .densities import GaussianDensity, fit as fit_density
from .encoders import ppca_fit, rae_train, RandomProjectionEncoder
from .factors import ChainEnergy, LikelihoodFactor, MotionFactor, PriorFactor
from .geom import Pose2, TangentCovariance
from .imaging import GrayImage
from .metrics import OrientedBox, obb_iou
from .warp import PatchSpec, extract_batch


class SamplingError(RuntimeError):
    """Background rejection sampling could not find enough poses."""


@dataclass(frozen=True)
class DescentConfig:
    max_iters: int = 50
    # Per-axis scale of the descent direction; None means diag(Q) so that
    # pixel and radian axes move commensurately.
    initial_step: tuple | None = None
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    convergence_step_norm: float = 1e-3
    max_halvings: int = 24


@dataclass(frozen=True)
class BgSamplerConfig:
    overlap_max: float = 0.1
    per_frame: int = 20
    attempts_per_pose: int = 10_000


@dataclass(frozen=True)
class TrackerConfig:
    n_samples: int = 64
    Q: TangentCovariance = field(default_factory=lambda: TangentCovariance.from_diagonal(6.0, 6.0, 0.15))
    descent: DescentConfig = field(default_factory=DescentConfig)
    bg: BgSamplerConfig = field(default_factory=BgSamplerConfig)
    axis_aligned: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not (0.0 <= self.bg.overlap_max < 1.0):
            raise ValueError("bg overlap threshold must lie in [0, 1)")

    def step_scale(self) -> np.ndarray:
        if self.descent.initial_step is not None:
            return np.asarray(self.descent.initial_step, dtype=float)
        return np.diag(self.Q.Q).copy()


@dataclass(frozen=True)
class TrackingModels:
    encoder: object
    p_F: GaussianDensity
    p_B: GaussianDensity
    spec: PatchSpec


@dataclass
class TrajectoryPoint:
    frame_index: int
    pose: Pose2
    energy: float
    n_candidates: int
    descent_iters: int


@dataclass
class Trajectory:
    points: list[TrajectoryPoint] = field(default_factory=list)

    def append(self, point: TrajectoryPoint) -> None:
        if self.points and point.frame_index <= self.points[-1].frame_index:
            raise ValueError("frame indices must be strictly increasing")
        self.points.append(point)

    def poses(self) -> list[Pose2]:
        return [p.pose for p in self.points]

    def frame_indices(self) -> list[int]:
        return [p.frame_index for p in self.points]

    def __len__(self) -> int:
        return len(self.points)


def frame_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic split of the master seed per (track, frame, purpose)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *(int(s) & 0xFFFFFFFF for s in stream)])


def _box_interior_margins(theta: float, spec: PatchSpec) -> tuple[float, float]:
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    ex = 0.5 * (spec.box_width * c + spec.box_height * s)
    ey = 0.5 * (spec.box_width * s + spec.box_height * c)
    return ex, ey


def bg_sample_poses(
    frame_width: int,
    frame_height: int,
    fg_poses,
    spec: PatchSpec,
    cfg: BgSamplerConfig,
    rng: np.random.Generator,
    axis_aligned: bool = False,
) -> list[Pose2]:
    """Rejection-sample poses whose box avoids every foreground box.

    Positions are uniform over the frame interior with the box fully
    inside; theta is uniform over (-pi, pi] (zero in axis-aligned mode).
    A candidate survives if its oriented-box IoU with every foreground box
    stays below cfg.overlap_max.
    """
    fg_boxes = [OrientedBox(p, spec.box_width, spec.box_height) for p in fg_poses]
    out: list[Pose2] = []
    attempts = 0
    budget = cfg.attempts_per_pose * cfg.per_frame
    while len(out) < cfg.per_frame:
        if attempts >= budget:
            raise SamplingError(
                f"background sampling failed after {attempts} attempts "
                f"(overlap threshold {cfg.overlap_max})"
            )
        attempts += 1
        theta = 0.0 if axis_aligned else rng.uniform(-math.pi, math.pi)
        ex, ey = _box_interior_margins(theta, spec)
        if 2 * ex >= frame_width - 1 or 2 * ey >= frame_height - 1:
            raise SamplingError("sampling box does not fit inside the frame")
        x = rng.uniform(ex, frame_width - 1 - ex)
        y = rng.uniform(ey, frame_height - 1 - ey)
        cand = Pose2(x, y, theta)
        box = OrientedBox(cand, spec.box_width, spec.box_height)
        if all(obb_iou(box, fgb) < cfg.overlap_max for fgb in fg_boxes):
            out.append(cand)
    return out


def _descend(pose: Pose2, energy_fn, grad_fn, config: TrackerConfig):
    """Backtracking per-axis-scaled gradient descent from pose.

    Accepted iterates strictly decrease the energy; returns the final pose,
    its energy, and the iteration count.
    """
    d = config.descent
    scale = config.step_scale()
    energy = energy_fn(pose)
    iters = 0
    for _ in range(d.max_iters):
        grad = grad_fn(pose)
        if config.axis_aligned:
            grad = grad.copy()
            grad[2] = 0.0
        direction = -scale * grad
        slope = float(grad @ direction)
        if slope >= 0.0 or not np.all(np.isfinite(direction)):
            break
        alpha = 1.0
        accepted = False
        for _ in range(d.max_halvings):
            step = alpha * direction
            trial = geom.compose(pose, geom.exp(step))
            trial_energy = energy_fn(trial)
            if trial_energy <= energy + d.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= d.backtrack_factor
        if not accepted:
            break
        pose, energy = trial, trial_energy
        iters += 1
        if float(np.linalg.norm(step)) < d.convergence_step_norm:
            break
    return pose, energy, iters


def track_frame(
    prev_pose: Pose2,
    frame: GrayImage,
    likelihood: LikelihoodFactor,
    motion: MotionFactor,
    config: TrackerConfig,
    rng: np.random.Generator,
):
    """One step of sample-then-refine; returns (pose, diagnostics)."""
    xi = motion.Q.sample(rng, config.n_samples)
    if config.axis_aligned:
        xi[:, 2] = 0.0
    xi = np.vstack([np.zeros(3), xi])  # zero offset is always a candidate
    candidates = [geom.compose(prev_pose, geom.exp(x)) for x in xi]

    motion_energies = np.array([float(x @ motion.Q.solve(x)) for x in xi])
    energies = motion_energies + likelihood.energy_batch(candidates)
    best = int(np.argmin(energies))

    def total_energy(g: Pose2) -> float:
        return motion.energy(prev_pose, g) + likelihood.energy(g)

    def total_grad(g: Pose2) -> np.ndarray:
        return motion.grad(prev_pose, g)[1] + likelihood.grad(g)

    refined, refined_energy, iters = _descend(candidates[best], total_energy, total_grad, config)
    if refined_energy > energies[best]:
        refined, refined_energy = candidates[best], float(energies[best])
    diagnostics = {
        "n_candidates": len(candidates),
        "best_sample_energy": float(energies[best]),
        "refined_energy": float(refined_energy),
        "descent_iters": iters,
    }
    return refined, diagnostics


def track_sequence(
    frames,
    init_pose: Pose2,
    models: TrackingModels,
    motion: MotionFactor,
    config: TrackerConfig,
    seed: int,
    stream: int = 0,
) -> Trajectory:
    """Fold track_frame over (frame_index, image) pairs.

    The first entry initializes the trajectory at init_pose (ground-truth
    initialization); the RNG is split per frame from (seed, stream,
    frame_index) so parallel schedules cannot perturb results.
    """
    traj = Trajectory()
    pose = init_pose
    for i, (frame_index, image) in enumerate(frames):
        lik = LikelihoodFactor(models.encoder, models.p_F, models.p_B, models.spec, image)
        if i == 0:
            traj.append(TrajectoryPoint(frame_index, pose, lik.energy(pose), 1, 0))
            continue
        rng = frame_rng(seed, stream, frame_index)
        pose, diag = track_frame(pose, image, lik, motion, config, rng)
        traj.append(
            TrajectoryPoint(
                frame_index, pose, diag["refined_energy"], diag["n_candidates"], diag["descent_iters"]
            )
        )
    return traj


def refine_chain(
    traj: Trajectory,
    frames,
    models: TrackingModels,
    motion: MotionFactor,
    config: TrackerConfig,
    max_iters: int = 20,
) -> Trajectory:
    """Optional whole-trajectory descent pass over the full chain energy.

    Re-optimizes all poses jointly under prior + motion + likelihood
    factors, anchored at the first pose.
    """
    images = dict(frames)
    chain = ChainEnergy()
    for point in traj.points:
        chain.add_pose(point.pose)
    prior_q = TangentCovariance(1e-6 * np.eye(3))
    chain.add_prior(0, PriorFactor(traj.points[0].pose, prior_q))
    for k in range(1, len(traj.points)):
        chain.add_motion(k - 1, k, motion)
    for k, point in enumerate(traj.points):
        lik = LikelihoodFactor(
            models.encoder, models.p_F, models.p_B, models.spec, images[point.frame_index]
        )
        chain.add_likelihood(k, lik)

    scale = config.step_scale()
    energy = chain.energy()
    for _ in range(max_iters):
        grads, _ = chain.grad()
        grads[0] = 0.0  # anchored initialization
        if config.axis_aligned:
            grads[:, 2] = 0.0
        direction = -grads * scale
        slope = float(np.sum(grads * direction))
        if slope >= 0.0:
            break
        alpha, accepted = 1.0, False
        base = list(chain.poses)
        for _ in range(config.descent.max_halvings):
            chain.poses = [geom.compose(g, geom.exp(alpha * d)) for g, d in zip(base, direction)]
            trial = chain.energy()
            if trial <= energy + config.descent.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= config.descent.backtrack_factor
        if not accepted:
            chain.poses = base
            break
        energy = trial
        if float(np.linalg.norm(alpha * direction)) < config.descent.convergence_step_norm:
            break

    out = Trajectory()
    for point, pose in zip(traj.points, chain.poses):
        out.append(replace(point, pose=pose))
    return out


@dataclass
class TrainedModels:
    encoder: object
    p_F: GaussianDensity
    p_B_full: GaussianDensity
    p_B_diag: GaussianDensity
    spec: PatchSpec
    n_fg: int
    n_bg: int
    rae_loss_history: list = field(default_factory=list)


def harvest_patches(dataset, spec: PatchSpec, bg_cfg: BgSamplerConfig, seed: int, axis_aligned: bool = False):
    """Collect foreground and background patch matrices over the train split.

    Foreground patches are extracted at every labeled pose in every training
    frame; background patches at rejection-sampled poses per frame. Returns
    (fg_patches, bg_patches) as (count, dim) arrays.
    """
    lo, hi = dataset.train_range
    fg_parts, bg_parts = [], []
    for frame_index in range(lo, hi):
        fg_poses = dataset.poses_in_frame(frame_index)
        if not fg_poses:
            continue
        if axis_aligned:
            fg_poses = [Pose2(p.x, p.y, 0.0) for p in fg_poses]
        image = dataset.load_frame(frame_index)
        fg_parts.append(extract_batch(fg_poses, image, spec))
        rng = frame_rng(seed, 1, frame_index)
        bg_poses = bg_sample_poses(
            dataset.frame_width, dataset.frame_height, fg_poses, spec, bg_cfg, rng, axis_aligned
        )
        bg_parts.append(extract_batch(bg_poses, image, spec))
    if not fg_parts:
        raise SamplingError("no labeled poses found in the training split")
    return np.concatenate(fg_parts), np.concatenate(bg_parts)


def train_pipeline(
    dataset,
    encoder_kind: str,
    d: int,
    spec: PatchSpec,
    bg_cfg: BgSamplerConfig,
    seed: int,
    axis_aligned: bool = False,
    rae_opts: dict | None = None,
) -> TrainedModels:
    """Harvest patches, train/fit the encoder, fit the density pair.

    The background density is fit twice (full and diagonal covariance) so
    the covariance ablation can run without retraining the encoder.
    """
    if axis_aligned:
        spec = spec.axis_aligned()
    fg, bg = harvest_patches(dataset, spec, bg_cfg, seed, axis_aligned)

    if encoder_kind == "rp":
        encoder = RandomProjectionEncoder(spec.dim, d, seed)
    elif encoder_kind == "ppca":
        encoder = ppca_fit(fg, d)
    elif encoder_kind == "rae":
        opts = dict(rae_opts or {})
        encoder = rae_train(fg, d, seed=seed, **opts)
    else:
        raise ValueError(f"unknown encoder kind {encoder_kind!r}")

    fg_codes = encoder.encode_batch(fg)
    bg_codes = encoder.encode_batch(bg)
    p_F = fit_density(fg_codes, "full")
    p_B_full = fit_density(bg_codes, "full")
    p_B_diag = fit_density(bg_codes, "diagonal")
    history = list(getattr(encoder, "loss_history", []))
    return TrainedModels(encoder, p_F, p_B_full, p_B_diag, spec, fg.shape[0], bg.shape[0], history)
