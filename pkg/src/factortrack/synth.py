"""Deterministic synthetic benchmark: textured elongated targets over a
periodic grating, moving under Brownian SE(2) motion with exact truth.

Every random draw derives from the master seed through fixed purpose
streams, so a config maps to one byte-exact dataset. Targets are rendered
as antialiased textured ellipses; motion steps that would push a target's
box outside the frame are resampled so ground truth never leaves the
frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import geom
from .dataset import TrackRow, frame_name, write_tracks_csv
from .geom import Pose2
from .imaging import GrayImage, write_pgm


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    frame_width: int = 1024
    frame_height: int = 1024
    n_targets: int = 20
    n_frames: int = 180
    train_frames: int = 100
    body_length: float = 70.0  # along the pose x-axis
    body_width: float = 40.0
    box_width: float = 70.0
    box_height: float = 40.0
    q_sigma_x: float = 3.0
    q_sigma_y: float = 3.0
    q_sigma_theta: float = 0.1
    grating_period: float = 24.0
    grating_contrast: float = 0.3
    noise_sigma: float = 0.02
    tex_lo: float = 0.15
    tex_hi: float = 0.85
    tex_cells_x: int = 9
    tex_cells_y: int = 5
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SceneConfig":
        return SceneConfig(**json.loads(text))

    @property
    def box_diagonal(self) -> float:
        return math.hypot(self.box_width, self.box_height)


def benchmark_preset(name: str) -> SceneConfig:
    """Named scene presets; desk20 is the 20-track benchmark with a
    100-frame training split followed by an 80-frame test split."""
    presets = {
        "desk20": SceneConfig(),
        "mini4": SceneConfig(
            frame_width=320,
            frame_height=320,
            n_targets=4,
            n_frames=40,
            train_frames=24,
            seed=0,
        ),
    }
    if name not in presets:
        raise GenerationError(f"unknown preset {name!r}; known: {sorted(presets)}")
    return presets[name]


def _rng(config: SceneConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed & 0xFFFFFFFF, *(s & 0xFFFFFFFF for s in stream)])


def _target_texture(config: SceneConfig, target: int, salt: int) -> np.ndarray:
    rng = _rng(config, 1, target, salt)
    grid = rng.uniform(config.tex_lo, config.tex_hi, (config.tex_cells_y, config.tex_cells_x))
    return grid


def _sample_texture(grid: np.ndarray, xb: np.ndarray, yb: np.ndarray, a: float, b: float) -> np.ndarray:
    """Bilinear texture lookup in body coordinates spanning the ellipse box."""
    gh, gw = grid.shape
    u = np.clip((xb + a) / (2.0 * a) * (gw - 1), 0.0, gw - 1)
    v = np.clip((yb + b) / (2.0 * b) * (gh - 1), 0.0, gh - 1)
    x0 = np.minimum(u.astype(np.intp), gw - 2)
    y0 = np.minimum(v.astype(np.intp), gh - 2)
    fx = u - x0
    fy = v - y0
    top = grid[y0, x0] * (1 - fx) + grid[y0, x0 + 1] * fx
    bot = grid[y0 + 1, x0] * (1 - fx) + grid[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def canonical_patch(config: SceneConfig, grid: np.ndarray, cols: int = 35, rows: int = 20) -> np.ndarray:
    """The target's appearance in its own frame; used for the
    distinguishability check and by texture tests."""
    a, b = config.body_length / 2.0, config.body_width / 2.0
    xs = np.linspace(-a, a, cols)
    ys = np.linspace(-b, b, rows)
    xb, yb = np.meshgrid(xs, ys)
    tex = _sample_texture(grid, xb, yb, a, b)
    r = np.sqrt((xb / a) ** 2 + (yb / b) ** 2)
    return np.where(r <= 1.0, tex, 0.0)


def _draw_textures(config: SceneConfig) -> list[np.ndarray]:
    """Per-target texture grids, re-drawn until mutually distinguishable."""
    grids = []
    patches = []
    for t in range(config.n_targets):
        salt = 0
        while True:
            grid = _target_texture(config, t, salt)
            patch = canonical_patch(config, grid)
            if all(np.mean(np.abs(patch - other)) > 0.05 for other in patches):
                break
            salt += 1
            if salt > 64:
                raise GenerationError(f"could not draw a distinguishable texture for target {t}")
        grids.append(grid)
        patches.append(patch)
    return grids


def _pose_fits(config: SceneConfig, pose: Pose2, margin: float = 1.0) -> bool:
    c, s = abs(math.cos(pose.theta)), abs(math.sin(pose.theta))
    ex = 0.5 * (config.box_width * c + config.box_height * s) + margin
    ey = 0.5 * (config.box_width * s + config.box_height * c) + margin
    return (
        pose.x - ex >= 0.0
        and pose.x + ex <= config.frame_width - 1
        and pose.y - ey >= 0.0
        and pose.y + ey <= config.frame_height - 1
    )


def _initial_poses(config: SceneConfig) -> list[Pose2]:
    margin = config.box_diagonal
    if 2 * margin >= min(config.frame_width, config.frame_height) - 1:
        raise GenerationError("targets cannot fit: frame smaller than twice the box diagonal")
    rng = _rng(config, 0)
    poses: list[Pose2] = []
    min_sep = 1.25 * config.box_diagonal
    for t in range(config.n_targets):
        for attempt in range(20_000):
            x = rng.uniform(margin, config.frame_width - 1 - margin)
            y = rng.uniform(margin, config.frame_height - 1 - margin)
            theta = rng.uniform(-math.pi, math.pi)
            if all(math.hypot(x - p.x, y - p.y) >= min_sep for p in poses):
                poses.append(Pose2(x, y, theta))
                break
        else:
            raise GenerationError(
                f"could not place target {t}: frame too crowded for {config.n_targets} targets"
            )
    return poses


def _simulate_tracks(config: SceneConfig, initial: list[Pose2]) -> list[list[Pose2]]:
    sig = np.array([config.q_sigma_x, config.q_sigma_y, config.q_sigma_theta])
    tracks = []
    for t, start in enumerate(initial):
        rng = _rng(config, 2, t)
        seq = [start]
        for _ in range(1, config.n_frames):
            prev = seq[-1]
            for attempt in range(1000):
                xi = rng.standard_normal(3) * sig
                nxt = geom.compose(prev, geom.exp(xi))
                if _pose_fits(config, nxt):
                    break
            else:
                raise GenerationError(f"motion sampling stalled for target {t}")
            seq.append(nxt)
        tracks.append(seq)
    return tracks


def _static_background(config: SceneConfig) -> np.ndarray:
    x = np.arange(config.frame_width)
    y = np.arange(config.frame_height)
    gx = np.sin(2.0 * math.pi * x / config.grating_period)
    gy = np.sin(2.0 * math.pi * y / config.grating_period)
    return 0.5 + 0.5 * config.grating_contrast * np.outer(gy, gx)


def _composite_target(frame: np.ndarray, pose: Pose2, grid: np.ndarray, config: SceneConfig) -> None:
    a, b = config.body_length / 2.0, config.body_width / 2.0
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex = a * abs(c) + b * abs(s) + 2.0
    ey = a * abs(s) + b * abs(c) + 2.0
    x0 = max(0, int(math.floor(pose.x - ex)))
    x1 = min(config.frame_width, int(math.ceil(pose.x + ex)) + 1)
    y0 = max(0, int(math.floor(pose.y - ey)))
    y1 = min(config.frame_height, int(math.ceil(pose.y + ey)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1) - pose.x
    ys = np.arange(y0, y1) - pose.y
    dx, dy = np.meshgrid(xs, ys)
    xb = c * dx + s * dy
    yb = -s * dx + c * dy
    r = np.sqrt((xb / a) ** 2 + (yb / b) ** 2)
    edge = min(a, b)
    alpha = np.clip((1.0 - r) * edge, 0.0, 1.0)
    if not np.any(alpha > 0.0):
        return
    tex = _sample_texture(grid, xb, yb, a, b)
    region = frame[y0:y1, x0:x1]
    frame[y0:y1, x0:x1] = region * (1.0 - alpha) + tex * alpha


def render_frame(config: SceneConfig, background: np.ndarray, poses, grids, frame_index: int) -> GrayImage:
    noise_rng = _rng(config, 3, frame_index)
    frame = background + config.noise_sigma * noise_rng.standard_normal(background.shape)
    for pose, grid in zip(poses, grids):
        _composite_target(frame, pose, grid, config)
    return GrayImage(np.clip(frame, 0.0, 1.0))


def generate(config: SceneConfig, out_dir) -> None:
    """Render the scene to a dataset directory (frames, tracks, metadata)."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    grids = _draw_textures(config)
    tracks = _simulate_tracks(config, _initial_poses(config))
    background = _static_background(config)
    for k in range(config.n_frames):
        poses_k = [tracks[t][k] for t in range(config.n_targets)]
        img = render_frame(config, background, poses_k, grids, k)
        write_pgm(img, out / "frames" / frame_name(k))
    rows = [
        TrackRow(t, k, tracks[t][k], config.box_width, config.box_height)
        for t in range(config.n_targets)
        for k in range(config.n_frames)
    ]
    write_tracks_csv(out / "tracks.csv", rows)
    meta = {
        "frame_width": config.frame_width,
        "frame_height": config.frame_height,
        "num_frames": config.n_frames,
        "train_range": [0, config.train_frames],
        "test_range": [config.train_frames, config.n_frames],
        "box_width": config.box_width,
        "box_height": config.box_height,
        "scene_config": asdict(config),
    }
    with open(out / "dataset.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
