"""Factor-graph energies over a tracked trajectory.

A trajectory is a Markov chain of per-frame variables (pose, optionally an
appearance code). Factors score subsets of variables with negative
log-likelihoods: a prior on the first pose, Brownian-motion between factors
on consecutive poses, an optional random-walk factor on appearance codes,
and the data term: foreground NLL minus background NLL of the encoded
patch at a pose. Every factor provides analytic gradients for first-order
descent; energies are plain scalars and the likelihood term can go
negative, so this is gradient descent, not least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geom
from .densities import GaussianDensity
from .geom import Pose2, TangentCovariance
from .imaging import GrayImage
from .warp import Patch, PatchSpec, extract, extract_batch, pullback_pose_gradient

_LOG_2PI = math.log(2.0 * math.pi)


def _weighted_residual(r: np.ndarray, Q: TangentCovariance) -> tuple[float, np.ndarray]:
    w = Q.solve(r)
    return float(r @ w), w


@dataclass(frozen=True)
class PriorFactor:
    """Anchors a pose to g0 with tangent covariance Q0."""

    g0: Pose2
    Q0: TangentCovariance

    def energy(self, g: Pose2) -> float:
        r = geom.log(geom.between(self.g0, g))
        e, _ = _weighted_residual(r, self.Q0)
        return e

    def grad(self, g: Pose2) -> np.ndarray:
        r = geom.log(geom.between(self.g0, g))
        _, w = _weighted_residual(r, self.Q0)
        return 2.0 * geom.log_right_jacobian_inverse(r).T @ w


@dataclass(frozen=True)
class MotionFactor:
    """Brownian-motion between factor: squared Mahalanobis relative motion."""

    Q: TangentCovariance

    def energy(self, g1: Pose2, g2: Pose2) -> float:
        r = geom.log(geom.between(g1, g2))
        e, _ = _weighted_residual(r, self.Q)
        return e

    def grad(self, g1: Pose2, g2: Pose2) -> tuple[np.ndarray, np.ndarray]:
        """Gradients w.r.t. right perturbations of g1 and g2.

        With r = log(g1^{-1} g2), the residual Jacobians are the inverse
        right Jacobian at r for g2 and minus the inverse left Jacobian
        (equal to Jr^{-1} at -r) for g1; both exact for any residual size.
        """
        r = geom.log(geom.between(g1, g2))
        _, w = _weighted_residual(r, self.Q)
        g2_grad = 2.0 * geom.log_right_jacobian_inverse(r).T @ w
        g1_grad = -2.0 * geom.log_right_jacobian_inverse(-r).T @ w
        return g1_grad, g2_grad


class AppearanceFactor:
    """Gaussian random walk over appearance codes with diagonal covariance."""

    def __init__(self, Qa_diag: np.ndarray):
        self.Qa = np.asarray(Qa_diag, dtype=float).ravel()
        if np.any(self.Qa <= 0.0):
            raise ValueError("appearance covariance entries must be positive")
        self.const = 0.5 * float(np.sum(np.log(2.0 * math.pi * self.Qa)))

    def energy(self, a1: np.ndarray, a2: np.ndarray) -> float:
        d = np.asarray(a2, dtype=float) - np.asarray(a1, dtype=float)
        if d.shape != self.Qa.shape:
            raise ValueError("appearance dimension mismatch")
        return 0.5 * float(np.sum(d * d / self.Qa)) + self.const

    def grad(self, a1: np.ndarray, a2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = (np.asarray(a2, dtype=float) - np.asarray(a1, dtype=float)) / self.Qa
        return -d, d


class LikelihoodFactor:
    """Data term at one frame: foreground NLL minus background NLL.

    Encodes the oriented patch at a pose and scores the code under the two
    generative densities. When an appearance code a is supplied, the
    foreground model shifts its mean by a (a Gaussian random-walk
    realization of per-frame appearance).
    """

    def __init__(
        self,
        encoder,
        p_F: GaussianDensity,
        p_B: GaussianDensity,
        spec: PatchSpec,
        frame: GrayImage,
    ):
        if encoder.dim != p_F.dim or encoder.dim != p_B.dim:
            raise ValueError("encoder output dim must match density dim")
        self.encoder = encoder
        self.p_F = p_F
        self.p_B = p_B
        self.spec = spec
        self.frame = frame

    def _code(self, g: Pose2) -> tuple[Patch, np.ndarray]:
        patch = extract(g, self.frame, self.spec)
        return patch, self.encoder.encode(patch.flat())

    def energy(self, g: Pose2, a: np.ndarray | None = None) -> float:
        _, c = self._code(g)
        fg = self.p_F.nll(c - a) if a is not None else self.p_F.nll(c)
        return fg - self.p_B.nll(c)

    def energy_batch(self, poses) -> np.ndarray:
        """Energies of many poses in one fused pass (no appearance shift)."""
        codes = self.encoder.encode_batch(extract_batch(poses, self.frame, self.spec))
        return self.p_F.nll_batch(codes) - self.p_B.nll_batch(codes)

    def grad(self, g: Pose2, a: np.ndarray | None = None) -> np.ndarray:
        patch, c = self._code(g)
        dE_dc = (
            self.p_F.nll_grad(c - a) if a is not None else self.p_F.nll_grad(c)
        ) - self.p_B.nll_grad(c)
        dE_dpatch = self.encoder.backprop(patch.flat(), dE_dc).reshape(patch.values.shape)
        return pullback_pose_gradient(patch, dE_dpatch, g, self.frame, self.spec)

    def grad_appearance(self, g: Pose2, a: np.ndarray) -> np.ndarray:
        """Gradient of the energy w.r.t. the appearance code."""
        _, c = self._code(g)
        return -self.p_F.nll_grad(c - a)


@dataclass
class ChainEnergy:
    """Ordered per-frame variables plus the factors connecting them.

    Poses (and optional appearance codes) are indexed by position; each
    bound factor records which variable indices it touches. The total
    energy is the factor sum and is invariant to factor ordering; the
    gradient accumulates per variable.
    """

    poses: list = field(default_factory=list)
    appearances: list = field(default_factory=list)
    _factors: list = field(default_factory=list)

    def add_pose(self, g: Pose2) -> int:
        self.poses.append(g)
        return len(self.poses) - 1

    def add_appearance(self, a: np.ndarray) -> int:
        self.appearances.append(np.asarray(a, dtype=float))
        return len(self.appearances) - 1

    def add_prior(self, pose_index: int, factor: PriorFactor) -> None:
        self._factors.append(("prior", (pose_index,), factor))

    def add_motion(self, i: int, j: int, factor: MotionFactor) -> None:
        self._factors.append(("motion", (i, j), factor))

    def add_likelihood(self, pose_index: int, factor: LikelihoodFactor, appearance_index: int | None = None) -> None:
        self._factors.append(("likelihood", (pose_index, appearance_index), factor))

    def add_appearance_walk(self, i: int, j: int, factor: AppearanceFactor) -> None:
        self._factors.append(("appearance", (i, j), factor))

    @property
    def num_factors(self) -> int:
        return len(self._factors)

    def energy(self) -> float:
        total = 0.0
        for kind, idx, f in self._factors:
            if kind == "prior":
                total += f.energy(self.poses[idx[0]])
            elif kind == "motion":
                total += f.energy(self.poses[idx[0]], self.poses[idx[1]])
            elif kind == "likelihood":
                a = self.appearances[idx[1]] if idx[1] is not None else None
                total += f.energy(self.poses[idx[0]], a)
            else:
                total += f.energy(self.appearances[idx[0]], self.appearances[idx[1]])
        return total

    def grad(self) -> tuple[np.ndarray, list]:
        """Per-pose tangent gradients (n, 3) and per-appearance gradients."""
        pose_grads = np.zeros((len(self.poses), 3))
        app_grads = [np.zeros_like(a) for a in self.appearances]
        for kind, idx, f in self._factors:
            if kind == "prior":
                pose_grads[idx[0]] += f.grad(self.poses[idx[0]])
            elif kind == "motion":
                gi, gj = f.grad(self.poses[idx[0]], self.poses[idx[1]])
                pose_grads[idx[0]] += gi
                pose_grads[idx[1]] += gj
            elif kind == "likelihood":
                a = self.appearances[idx[1]] if idx[1] is not None else None
                pose_grads[idx[0]] += f.grad(self.poses[idx[0]], a)
                if idx[1] is not None:
                    app_grads[idx[1]] += f.grad_appearance(self.poses[idx[0]], a)
            else:
                ga, gb = f.grad(self.appearances[idx[0]], self.appearances[idx[1]])
                app_grads[idx[0]] += ga
                app_grads[idx[1]] += gb
        return pose_grads, app_grads


def motion_energy(f: MotionFactor, g1: Pose2, g2: Pose2) -> float:
    return f.energy(g1, g2)


def motion_energy_grad(f: MotionFactor, g1: Pose2, g2: Pose2):
    return f.grad(g1, g2)


def appearance_energy(f: AppearanceFactor, a1, a2) -> float:
    return f.energy(a1, a2)


def likelihood_energy(f: LikelihoodFactor, g: Pose2) -> float:
    return f.energy(g)


def likelihood_energy_grad(f: LikelihoodFactor, g: Pose2) -> np.ndarray:
    return f.grad(g)


def chain_energy(chain: ChainEnergy) -> float:
    return chain.energy()


def chain_grad(chain: ChainEnergy):
    return chain.grad()
