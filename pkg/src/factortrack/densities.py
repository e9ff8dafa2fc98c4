"""Gaussian generative models over feature space.

A fitted density evaluates negative log-likelihoods and their gradients
through a cached Cholesky factor. The foreground/background pair drives
the tracking likelihood: the foreground model is fit on codes of patches
at labeled poses, the background model on codes at poses sampled away
from every labeled box.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import serialize

_LOG_2PI = math.log(2.0 * math.pi)

DENSITY_KINDS = ("gauss_full", "gauss_diag")


class DensityFitError(RuntimeError):
    pass


class GaussianDensity:
    """Mean/covariance pair with cached factorization.

    kind "full" keeps the complete covariance; "diagonal" keeps only the
    variances (naive Bayes). Covariances are regularized at fit time, so
    construction requires a positive-definite matrix.
    """

    def __init__(self, mu: np.ndarray, cov: np.ndarray, kind: str):
        if kind not in ("full", "diagonal"):
            raise ValueError(f"unknown density kind {kind!r}")
        self.mu = np.asarray(mu, dtype=float)
        self.kind = kind
        self.dim = self.mu.shape[0]
        if kind == "full":
            self.cov = np.asarray(cov, dtype=float)
            if self.cov.shape != (self.dim, self.dim):
                raise ValueError("full covariance shape mismatch")
            self._cho = cho_factor(self.cov, lower=True)
            self.log_det = 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))
        else:
            self.var = np.asarray(cov, dtype=float).ravel()
            if self.var.shape != (self.dim,):
                raise ValueError("diagonal covariance shape mismatch")
            if np.any(self.var <= 0.0):
                raise ValueError("diagonal variances must be positive")
            self.log_det = float(np.sum(np.log(self.var)))

    def nll(self, c: np.ndarray) -> float:
        """0.5 (c-mu)^T Sigma^{-1} (c-mu) + 0.5 log det(2 pi Sigma)."""
        e = np.asarray(c, dtype=float) - self.mu
        if self.kind == "full":
            maha = float(e @ cho_solve(self._cho, e))
        else:
            maha = float(np.sum(e * e / self.var))
        return 0.5 * maha + 0.5 * (self.dim * _LOG_2PI + self.log_det)

    def nll_batch(self, C: np.ndarray) -> np.ndarray:
        E = np.asarray(C, dtype=float) - self.mu
        if self.kind == "full":
            maha = np.sum(E * cho_solve(self._cho, E.T).T, axis=1)
        else:
            maha = np.sum(E * E / self.var, axis=1)
        return 0.5 * maha + 0.5 * (self.dim * _LOG_2PI + self.log_det)

    def nll_grad(self, c: np.ndarray) -> np.ndarray:
        """Gradient Sigma^{-1} (c - mu) of nll at c."""
        e = np.asarray(c, dtype=float) - self.mu
        if self.kind == "full":
            return cho_solve(self._cho, e)
        return e / self.var

    def save(self, path) -> None:
        tag = "gauss_full" if self.kind == "full" else "gauss_diag"
        with open(path, "wb") as fh:
            serialize.write_header(fh, tag)
            serialize.write_u32(fh, self.dim)
            serialize.write_array(fh, self.mu)
            serialize.write_array(fh, self.cov if self.kind == "full" else self.var)


def load_density(path) -> GaussianDensity:
    with open(path, "rb") as fh:
        tag = serialize.read_header(fh, DENSITY_KINDS)
        d = serialize.read_u32(fh)
        mu = serialize.read_array(fh, (d,))
        if tag == "gauss_full":
            cov = serialize.read_array(fh, (d, d))
            return GaussianDensity(mu, cov, "full")
        var = serialize.read_array(fh, (d,))
        return GaussianDensity(mu, var, "diagonal")


def fit(samples: np.ndarray, kind: str = "full") -> GaussianDensity:
    """MLE mean and covariance plus a trace-scaled ridge.

    Encoded features can be rank-deficient (few thousand samples against
    d = 256), so eps * trace(Sigma)/d is always added to the diagonal to
    keep the factorization well-posed.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise DensityFitError("samples must be 2-d (count x dim)")
    n, d = X.shape
    if n < 2:
        raise DensityFitError(f"need at least 2 samples, got {n}")
    mu = X.mean(axis=0)
    Xc = X - mu
    if kind == "full":
        cov = (Xc.T @ Xc) / n
        ridge = 1e-6 * float(np.trace(cov)) / d
        cov = cov + ridge * np.eye(d)
        return GaussianDensity(mu, cov, "full")
    if kind == "diagonal":
        var = np.mean(Xc * Xc, axis=0)
        ridge = 1e-6 * float(np.sum(var)) / d
        return GaussianDensity(mu, var + ridge, "diagonal")
    raise ValueError(f"unknown density kind {kind!r}")


def fit_foreground_background(
    frames,
    fg_poses_by_frame: dict,
    encoder,
    spec,
    bg_config,
    rng: np.random.Generator,
    kind: str = "full",
    bg_kind: str | None = None,
):
    """Fit the foreground/background density pair on encoded patches.

    frames maps frame index -> GrayImage; fg_poses_by_frame maps frame
    index -> list of labeled poses. Background poses come from rejection
    sampling with bounded overlap against every labeled box (bg_config
    fields: box dims, per-frame count, IoU ceiling). Returns
    (p_F, p_B, n_fg, n_bg).
    """
    from .tracker import bg_sample_poses  # deferred: tracker imports this module

    if bg_kind is None:
        bg_kind = kind
    fg_codes = []
    bg_codes = []
    for frame_index, img in frames.items():
        fg_poses = fg_poses_by_frame.get(frame_index, [])
        if not fg_poses:
            continue
        from .warp import extract_batch

        fg_codes.append(encoder.encode_batch(extract_batch(fg_poses, img, spec)))
        bg_poses = bg_sample_poses(img.width, img.height, fg_poses, spec, bg_config, rng)
        bg_codes.append(encoder.encode_batch(extract_batch(bg_poses, img, spec)))
    if not fg_codes:
        raise DensityFitError("no labeled foreground poses in the supplied frames")
    fg = np.concatenate(fg_codes, axis=0)
    bg = np.concatenate(bg_codes, axis=0)
    return fit(fg, kind), fit(bg, bg_kind), fg.shape[0], bg.shape[0]
