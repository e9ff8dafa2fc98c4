"""Feature encoders mapping patches to d-dimensional codes, with backprop.

Three encoders behind one contract: a seeded Gaussian random projection,
probabilistic PCA fit in closed form by eigendecomposition, and a dense
autoencoder trained with reconstruction, code-norm, and decoder-weight
penalties. Every encoder exposes encode / encode_batch / backprop, where
backprop is the exact adjoint of the encoder linearization at the input.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import serialize
from .serialize import ContainerError

ENCODER_KINDS = ("rp", "ppca", "rae")


class EncoderDimensionError(ValueError):
    """Input length does not match the encoder's expected patch size."""


class FitError(RuntimeError):
    """Not enough data (or degenerate data) to fit a model."""


class TrainingError(RuntimeError):
    """Autoencoder optimization failed; message reports the epoch."""


def _as_flat(x, input_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != input_dim:
        raise EncoderDimensionError(f"expected input of length {input_dim}, got {x.shape[0]}")
    return x


def _as_batch(X, input_dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != input_dim:
        raise EncoderDimensionError(f"expected rows of length {input_dim}, got {X.shape[1]}")
    return X


class RandomProjectionEncoder:
    """c = A^T x / sqrt(k) with A ~ N(0, 1), reproducible from its seed."""

    kind = "rp"

    def __init__(self, input_dim: int, k: int, seed: int):
        self.input_dim = int(input_dim)
        self.dim = int(k)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.A = rng.standard_normal((self.input_dim, self.dim))
        self._scale = 1.0 / math.sqrt(self.dim)

    def encode(self, x) -> np.ndarray:
        return _as_flat(x, self.input_dim) @ self.A * self._scale

    def encode_batch(self, X) -> np.ndarray:
        return _as_batch(X, self.input_dim) @ self.A * self._scale

    def backprop(self, x, dl_dc) -> np.ndarray:
        return self.A @ np.asarray(dl_dc, dtype=float) * self._scale

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            serialize.write_header(fh, self.kind)
            serialize.write_u32(fh, self.input_dim)
            serialize.write_u32(fh, self.dim)
            serialize.write_u64(fh, self.seed)
            serialize.write_array(fh, self.A)

    @classmethod
    def _load_body(cls, fh) -> "RandomProjectionEncoder":
        input_dim = serialize.read_u32(fh)
        k = serialize.read_u32(fh)
        seed = serialize.read_u64(fh)
        enc = cls(input_dim, k, seed)
        enc.A = serialize.read_array(fh, (input_dim, k))
        return enc


class PpcaEncoder:
    """Linear-Gaussian latent factor model with closed-form posterior mean.

    The observation model is x = W c + mu + noise with isotropic residual
    variance; encode returns the posterior mean M^{-1} W^T (x - mu) where
    M = W^T W + sigma_sq I.
    """

    kind = "ppca"

    def __init__(self, W: np.ndarray, mu: np.ndarray, sigma_sq: float):
        self.W = np.asarray(W, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.sigma_sq = float(sigma_sq)
        if self.sigma_sq <= 0.0:
            raise ValueError("residual variance must be positive")
        self.input_dim = self.W.shape[0]
        self.dim = self.W.shape[1]
        M = self.W.T @ self.W + self.sigma_sq * np.eye(self.dim)
        self._M_cho = cho_factor(M)

    def encode(self, x) -> np.ndarray:
        x = _as_flat(x, self.input_dim)
        return cho_solve(self._M_cho, self.W.T @ (x - self.mu))

    def encode_batch(self, X) -> np.ndarray:
        X = _as_batch(X, self.input_dim)
        return cho_solve(self._M_cho, ((X - self.mu) @ self.W).T).T

    def backprop(self, x, dl_dc) -> np.ndarray:
        # M is symmetric, so the adjoint of M^{-1} W^T is W M^{-1}.
        return self.W @ cho_solve(self._M_cho, np.asarray(dl_dc, dtype=float))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            serialize.write_header(fh, self.kind)
            serialize.write_u32(fh, self.input_dim)
            serialize.write_u32(fh, self.dim)
            serialize.write_f64(fh, self.sigma_sq)
            serialize.write_array(fh, self.mu)
            serialize.write_array(fh, self.W)

    @classmethod
    def _load_body(cls, fh) -> "PpcaEncoder":
        input_dim = serialize.read_u32(fh)
        q = serialize.read_u32(fh)
        sigma_sq = serialize.read_f64(fh)
        mu = serialize.read_array(fh, (input_dim,))
        W = serialize.read_array(fh, (input_dim, q))
        return cls(W, mu, sigma_sq)


def ppca_fit(samples: np.ndarray, q: int) -> PpcaEncoder:
    """Maximum-likelihood fit by eigendecomposition of the sample covariance.

    The residual variance is the mean of the d - q trailing eigenvalues;
    loading columns are the leading eigenvectors scaled by
    sqrt(max(eigenvalue - sigma_sq, 0)). The rotation ambiguity is fixed to
    the identity.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise FitError("samples must be a 2-d array (count x dim)")
    n_samples, d = X.shape
    if q >= d:
        raise FitError(f"latent dim q={q} must be below data dim {d}")
    if n_samples < q + 1:
        raise FitError(f"need at least q+1={q + 1} samples, got {n_samples}")
    mu = X.mean(axis=0)
    Xc = X - mu
    S = (Xc.T @ Xc) / n_samples  # biased MLE covariance
    evals, evecs = np.linalg.eigh(S)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    sigma_sq = float(np.mean(evals[q:]))
    sigma_sq = max(sigma_sq, 1e-12)
    radicand = np.maximum(evals[:q] - sigma_sq, 0.0)
    W = evecs[:, :q] * np.sqrt(radicand)
    return PpcaEncoder(W, mu, sigma_sq)


class RaeEncoder:
    """Dense autoencoder: input -> hidden ReLU -> d linear, mirrored decoder.

    Only the encoder half is exposed through the contract; the decoder is
    kept for the training loss and diagnostics.
    """

    kind = "rae"

    def __init__(self, weights: dict, lam: float, meta: dict):
        self.W1 = weights["W1"]
        self.b1 = weights["b1"]
        self.W2 = weights["W2"]
        self.b2 = weights["b2"]
        self.W3 = weights["W3"]
        self.b3 = weights["b3"]
        self.W4 = weights["W4"]
        self.b4 = weights["b4"]
        self.lam = float(lam)
        self.meta = dict(meta)
        self.input_dim = self.W1.shape[0]
        self.hidden = self.W1.shape[1]
        self.dim = self.W2.shape[1]
        self.loss_history: list[float] = list(meta.get("loss_history", []))

    def encode(self, x) -> np.ndarray:
        x = _as_flat(x, self.input_dim)
        h1 = np.maximum(x @ self.W1 + self.b1, 0.0)
        return h1 @ self.W2 + self.b2

    def encode_batch(self, X) -> np.ndarray:
        X = _as_batch(X, self.input_dim)
        H1 = np.maximum(X @ self.W1 + self.b1, 0.0)
        return H1 @ self.W2 + self.b2

    def backprop(self, x, dl_dc) -> np.ndarray:
        x = _as_flat(x, self.input_dim)
        z1 = x @ self.W1 + self.b1
        g_h1 = np.asarray(dl_dc, dtype=float) @ self.W2.T
        g_z1 = g_h1 * (z1 > 0.0)
        return g_z1 @ self.W1.T

    def decode_batch(self, C) -> np.ndarray:
        H2 = np.maximum(C @ self.W3 + self.b3, 0.0)
        return H2 @ self.W4 + self.b4

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            serialize.write_header(fh, self.kind)
            serialize.write_u32(fh, self.input_dim)
            serialize.write_u32(fh, self.hidden)
            serialize.write_u32(fh, self.dim)
            serialize.write_f64(fh, self.lam)
            serialize.write_u32(fh, self.meta.get("epochs", 0))
            serialize.write_f64(fh, self.meta.get("lr", 0.0))
            serialize.write_u64(fh, self.meta.get("seed", 0))
            for arr in (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3, self.W4, self.b4):
                serialize.write_array(fh, arr)

    @classmethod
    def _load_body(cls, fh) -> "RaeEncoder":
        n = serialize.read_u32(fh)
        hidden = serialize.read_u32(fh)
        d = serialize.read_u32(fh)
        lam = serialize.read_f64(fh)
        epochs = serialize.read_u32(fh)
        lr = serialize.read_f64(fh)
        seed = serialize.read_u64(fh)
        shapes = {
            "W1": (n, hidden), "b1": (hidden,),
            "W2": (hidden, d), "b2": (d,),
            "W3": (d, hidden), "b3": (hidden,),
            "W4": (hidden, n), "b4": (n,),
        }
        weights = {name: serialize.read_array(fh, shape) for name, shape in shapes.items()}
        return cls(weights, lam, {"epochs": epochs, "lr": lr, "seed": seed})


def rae_loss(model: RaeEncoder, X: np.ndarray) -> dict:
    """Loss components on a batch: reconstruction, code norm, decoder penalty."""
    X = _as_batch(X, model.input_dim)
    C = model.encode_batch(X)
    Xr = model.decode_batch(C)
    rec = float(np.mean(np.sum((X - Xr) ** 2, axis=1)))
    code = float(np.mean(0.5 * np.sum(C**2, axis=1)))
    reg = float(
        np.sum(model.W3**2) + np.sum(model.b3**2) + np.sum(model.W4**2) + np.sum(model.b4**2)
    )
    return {"rec": rec, "code": code, "reg": reg, "total": rec + code + model.lam * reg}


def rae_train(
    patches: np.ndarray,
    d: int,
    lam: float = 1e-4,
    epochs: int = 300,
    lr: float = 1e-3,
    batch_size: int = 64,
    hidden: int = 512,
    seed: int = 0,
    min_patches: int = 100,
) -> RaeEncoder:
    """Train the autoencoder by mini-batch Adam; deterministic given the seed.

    Minimizes mean reconstruction error plus half squared code norm plus
    lam times the squared decoder parameters. Per-epoch mean total loss is
    recorded on the returned model.
    """
    X = np.asarray(patches, dtype=float)
    if X.ndim != 2:
        raise FitError("patches must be a 2-d array (count x dim)")
    n_samples, n = X.shape
    if n_samples < min_patches:
        raise FitError(f"need at least {min_patches} patches, got {n_samples}")

    rng = np.random.default_rng(seed)

    def he(fan_in, shape):
        return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)

    params = {
        "W1": he(n, (n, hidden)), "b1": np.zeros(hidden),
        "W2": rng.standard_normal((hidden, d)) * math.sqrt(1.0 / hidden), "b2": np.zeros(d),
        "W3": he(d, (d, hidden)), "b3": np.zeros(hidden),
        "W4": rng.standard_normal((hidden, n)) * math.sqrt(1.0 / hidden), "b4": np.zeros(n),
    }
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    loss_history = []

    for epoch in range(epochs):
        order = rng.permutation(n_samples)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_samples, batch_size):
            idx = order[start : start + batch_size]
            xb = X[idx]
            B = xb.shape[0]

            z1 = xb @ params["W1"] + params["b1"]
            h1 = np.maximum(z1, 0.0)
            c = h1 @ params["W2"] + params["b2"]
            z2 = c @ params["W3"] + params["b3"]
            h2 = np.maximum(z2, 0.0)
            xr = h2 @ params["W4"] + params["b4"]

            diff = xr - xb
            rec = float(np.mean(np.sum(diff**2, axis=1)))
            code = float(np.mean(0.5 * np.sum(c**2, axis=1)))
            reg = float(
                np.sum(params["W3"] ** 2) + np.sum(params["b3"] ** 2)
                + np.sum(params["W4"] ** 2) + np.sum(params["b4"] ** 2)
            )
            total = rec + code + lam * reg
            if not math.isfinite(total):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            epoch_loss += total
            n_batches += 1

            g_xr = 2.0 * diff / B
            grads = {}
            grads["W4"] = h2.T @ g_xr + 2.0 * lam * params["W4"]
            grads["b4"] = g_xr.sum(axis=0) + 2.0 * lam * params["b4"]
            g_z2 = (g_xr @ params["W4"].T) * (z2 > 0.0)
            grads["W3"] = c.T @ g_z2 + 2.0 * lam * params["W3"]
            grads["b3"] = g_z2.sum(axis=0) + 2.0 * lam * params["b3"]
            g_c = g_z2 @ params["W3"].T + c / B
            grads["W2"] = h1.T @ g_c
            grads["b2"] = g_c.sum(axis=0)
            g_z1 = (g_c @ params["W2"].T) * (z1 > 0.0)
            grads["W1"] = xb.T @ g_z1
            grads["b1"] = g_z1.sum(axis=0)

            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            for key, g in grads.items():
                adam_m[key] = beta1 * adam_m[key] + (1.0 - beta1) * g
                adam_v[key] = beta2 * adam_v[key] + (1.0 - beta2) * g * g
                params[key] -= lr * (adam_m[key] / bc1) / (np.sqrt(adam_v[key] / bc2) + eps)

        loss_history.append(epoch_loss / max(n_batches, 1))

    meta = {"epochs": epochs, "lr": lr, "seed": seed, "loss_history": loss_history}
    return RaeEncoder(params, lam, meta)


_LOADERS = {
    "rp": RandomProjectionEncoder,
    "ppca": PpcaEncoder,
    "rae": RaeEncoder,
}


def load_encoder(path):
    """Load any encoder container, dispatching on its kind tag."""
    with open(path, "rb") as fh:
        kind = serialize.read_header(fh, ENCODER_KINDS)
        return _LOADERS[kind]._load_body(fh)
