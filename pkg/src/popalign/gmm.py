"""Gaussian mixture generative model with exact densities and analytic
parameter gradients.

Components are isotropic; weights live in logit space (softmax) and scales
in log space so every parameter is unconstrained and plain gradient methods
apply. All density work goes through log-sum-exp — raw density products are
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .core import Population, RngStream, Sample

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of K isotropic Gaussians in d dimensions.

    logits: (K,) unnormalized log weights; means: (K, d); log_stds: (K,).
    """

    logits: np.ndarray
    means: np.ndarray
    log_stds: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        means = np.asarray(self.means, dtype=float)
        log_stds = np.asarray(self.log_stds, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if logits.ndim != 1 or log_stds.ndim != 1 or means.ndim != 2:
            raise ValueError("bad parameter shapes")
        k = logits.shape[0]
        if k < 1 or means.shape[0] != k or log_stds.shape[0] != k:
            raise ValueError("logits, means and log_stds must agree on K >= 1")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "log_stds", log_stds)

    # -- basic descriptors ------------------------------------------------
    @property
    def k(self) -> int:
        return self.logits.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def weights(self) -> np.ndarray:
        return softmax(self.logits)

    def stds(self) -> np.ndarray:
        return np.exp(self.log_stds)

    # -- flat parameter vector (logits, means, log_stds) -------------------
    def params(self) -> np.ndarray:
        return np.concatenate([self.logits, self.means.ravel(), self.log_stds])

    def replace_params(self, vec: np.ndarray) -> "GaussianMixture":
        k, d = self.k, self.dim
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (k + k * d + k,):
            raise ValueError("parameter vector has wrong length")
        return GaussianMixture(
            logits=vec[:k].copy(),
            means=vec[k:k + k * d].reshape(k, d).copy(),
            log_stds=vec[k + k * d:].copy(),
        )

    @property
    def n_params(self) -> int:
        return self.k * (2 + self.dim)

    # -- densities ----------------------------------------------------------
    def _component_log_pdf(self, X: np.ndarray) -> np.ndarray:
        """(n, K) matrix of log w_k + log N(x_i; mu_k, sigma_k^2 I)."""
        X = self._as_batch(X)
        d = self.dim
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        var = np.exp(2.0 * self.log_stds)
        log_norm = -0.5 * d * LOG_2PI - d * self.log_stds
        log_w = self.logits - logsumexp(self.logits)
        return log_w[None, :] + log_norm[None, :] - 0.5 * sq / var[None, :]

    def log_prob(self, x) -> float:
        return float(self.log_prob_batch(x)[0])

    def log_prob_batch(self, X) -> np.ndarray:
        return logsumexp(self._component_log_pdf(X), axis=1)

    def responsibilities(self, x) -> np.ndarray:
        return self.responsibilities_batch(x)[0]

    def responsibilities_batch(self, X) -> np.ndarray:
        return np.exp(self.log_responsibilities_batch(X))

    def log_responsibilities_batch(self, X) -> np.ndarray:
        comp = self._component_log_pdf(X)
        return comp - logsumexp(comp, axis=1, keepdims=True)

    # -- gradients ------------------------------------------------------------
    def grad_log_prob(self, x) -> np.ndarray:
        """Flat gradient of log p(x) in the params() layout."""
        return self.weighted_grad_log_prob(x, np.array([1.0]))

    def weighted_grad_log_prob(self, X, coeffs: np.ndarray) -> np.ndarray:
        """Flat gradient of sum_i coeffs_i * log p(x_i).

        Responsibilities r drive everything:
          d/d mu_k      = r_k (x - mu_k) / sigma_k^2
          d/d logit_k   = r_k - w_k
          d/d log_std_k = r_k (||x - mu_k||^2 / sigma_k^2 - d)
        """
        X = self._as_batch(X)
        coeffs = np.asarray(coeffs, dtype=float)
        r = self.responsibilities_batch(X)          # (n, K)
        w = self.weights()
        var = np.exp(2.0 * self.log_stds)
        diff = X[:, None, :] - self.means[None, :, :]  # (n, K, d)
        cr = coeffs[:, None] * r

        g_logits = cr.sum(axis=0) - coeffs.sum() * w
        g_means = (cr[:, :, None] * diff / var[None, :, None]).sum(axis=0)
        sq = (diff ** 2).sum(axis=2)
        g_log_stds = (cr * (sq / var[None, :] - self.dim)).sum(axis=0)
        return np.concatenate([g_logits, g_means.ravel(), g_log_stds])

    # -- sampling ----------------------------------------------------------
    def sample(self, n: int, rng: RngStream, condition: str = "neutral",
               component: int | None = None) -> Population:
        """Ancestral sampling. ``component`` restricts draws to one component
        (the conditional-sampling analog of an attribute-specific prompt).
        Samples carry the drawn component as ground-truth attribute G{k+1}."""
        if n < 1:
            raise ValueError("n must be >= 1")
        gen = rng.generator
        if component is None:
            comps = gen.choice(self.k, size=n, p=self.weights())
        else:
            comps = np.full(n, int(component))
        eps = gen.standard_normal((n, self.dim))
        xs = self.means[comps] + np.exp(self.log_stds)[comps, None] * eps
        samples = tuple(
            Sample(x=xs[i], condition=condition, attribute=component_label(comps[i]))
            for i in range(n)
        )
        return Population(condition=condition, samples=samples)

    # -- serialization -------------------------------------------------------
    def to_text(self) -> str:
        lines = ["k,logit,mean,log_std"]
        for k in range(self.k):
            mean = ";".join(repr(float(v)) for v in self.means[k])
            lines.append(f"{k},{self.logits[k]!r},{mean},{self.log_stds[k]!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "GaussianMixture":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if lines[0] != "k,logit,mean,log_std":
            raise ValueError("unrecognized mixture checkpoint header")
        logits, means, log_stds = [], [], []
        for line in lines[1:]:
            _, logit, mean, log_std = line.split(",")
            logits.append(float(logit))
            means.append([float(v) for v in mean.split(";")])
            log_stds.append(float(log_std))
        return cls(np.array(logits), np.array(means), np.array(log_stds))

    @classmethod
    def load(cls, path) -> "GaussianMixture":
        with open(path) as fh:
            return cls.from_text(fh.read())

    # -- helpers ----------------------------------------------------------
    def _as_batch(self, X) -> np.ndarray:
        if isinstance(X, Sample):
            X = X.x
        elif isinstance(X, Population):
            X = X.xs()
        X = np.asarray(X, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        elif X.ndim == 1:
            # a single point in d dims, or a batch of scalars for d == 1
            X = Ximag = X[:, None] if self.dim == 1 and X.shape[0] != self.dim else X[None, :]
        if X.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: got {X.shape[-1]}, model has {self.dim}")
        return X


def component_label(k: int) -> str:
    """Attribute name of mixture component k (zero-based): G1, G2, ..."""
    return f"G{int(k) + 1}"


def reference_model_1d() -> GaussianMixture:
    """The skewed three-component 1D setup used throughout the synthetic
    track: weights softmax(1, 0, -1), means (-7, 0, 7), unit scales."""
    return GaussianMixture(
        logits=np.array([1.0, 0.0, -1.0]),
        means=np.array([[-7.0], [0.0], [7.0]]),
        log_stds=np.zeros(3),
    )
