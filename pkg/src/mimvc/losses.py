"""Reconstruction and graph-guided contrastive objectives.

The contrastive losses take the fused graph as a constant: it is converted
to a tensor without gradient history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .exceptions import ConfigError, DataError, TrainingError

DTYPE = torch.float64
CONTRASTIVE_VARIANTS = ("wcl", "dcl", "cl", "none")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    tau: float = 1.0
    eps: float = 1e-12
    variant: str = "wcl"
    literal_eq14: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.variant not in CONTRASTIVE_VARIANTS:
            raise ConfigError(f"unknown contrastive variant {self.variant!r}")


def reconstruction_loss(originals, reconstructions, n_samples):
    """Squared error summed over observed rows of every view, divided by ``N``."""
    if len(originals) != len(reconstructions):
        raise DataError("one reconstruction per view is required")
    total = torch.zeros((), dtype=DTYPE)
    for Z, G in zip(originals, reconstructions):
        if Z.shape != G.shape:
            raise DataError(f"reconstruction shape {tuple(G.shape)} != {tuple(Z.shape)}")
        total = total + ((Z - G) ** 2).sum()
    return total / n_samples


def cosine_logits(Y, tau):
    """Pairwise cosine similarities divided by ``tau``."""
    norms = Y.norm(dim=1)
    if bool((norms == 0).any()):
        raise TrainingError("zero-norm row in cluster indicator")
    Yn = Y / norms[:, None]
    return (Yn @ Yn.T) / tau


def _graph(A_hat, N):
    A = torch.as_tensor(A_hat, dtype=DTYPE).detach()
    if A.shape != (N, N):
        raise DataError(f"graph shape {tuple(A.shape)} does not match N={N}")
    return A


def _log_weighted_sum(logits, weights, shift, eps=None):
    # log(sum_j w_j exp(l_j) [+ eps]) evaluated with a fixed shift for stability
    s = (weights * torch.exp(logits - shift)).sum(dim=1)
    if eps is not None:
        s = s + eps * math.exp(-shift)
    return torch.log(s) + shift


def weighted_contrastive_loss(Y, A_hat, tau=1.0, eps=1e-12, literal=False):
    """Each pair is a positive with weight ``a_ij`` and a negative with ``1 - a_ij``.

    Self pairs are excluded unless ``literal`` is set, in which case the sums
    run over every ``j`` including ``i``.
    """
    N = Y.shape[0]
    A = _graph(A_hat, N)
    logits = cosine_logits(Y, tau)
    keep = torch.ones(N, N, dtype=DTYPE)
    if not literal:
        keep = keep - torch.eye(N, dtype=DTYPE)
    shift = 1.0 / tau
    log_pos = _log_weighted_sum(logits, A * keep, shift, eps)
    log_neg = _log_weighted_sum(logits, (1.0 - A) * keep, shift, eps)
    return -(log_pos - log_neg).mean()


def _binary_sets(A_hat, N):
    A = _graph(A_hat, N)
    off = ~torch.eye(N, dtype=torch.bool)
    return (A > 0) & off, (A == 0) & off


def decoupled_contrastive_loss(Y, A_hat, tau=1.0):
    """Positives ``a_ij > 0`` over negatives ``a_ij == 0``, positives kept out
    of the denominator. Samples lacking either set are skipped."""
    N = Y.shape[0]
    pos, neg = _binary_sets(A_hat, N)
    logits = cosine_logits(Y, tau)
    keep = pos.any(dim=1) & neg.any(dim=1)
    if not bool(keep.any()):
        return torch.zeros((), dtype=DTYPE)
    shift = 1.0 / tau
    log_pos = _log_weighted_sum(logits, pos.to(DTYPE), shift)
    log_neg = _log_weighted_sum(logits[keep], neg[keep].to(DTYPE), shift)
    return -(log_pos[keep] - log_neg).mean()


def standard_contrastive_loss(Y, A_hat, tau=1.0):
    """InfoNCE with positives in both numerator and denominator.

    Samples without positives are skipped; a sample without negatives
    contributes zero.
    """
    N = Y.shape[0]
    pos, neg = _binary_sets(A_hat, N)
    logits = cosine_logits(Y, tau)
    keep = pos.any(dim=1)
    if not bool(keep.any()):
        return torch.zeros((), dtype=DTYPE)
    shift = 1.0 / tau
    log_pos = _log_weighted_sum(logits[keep], pos[keep].to(DTYPE), shift)
    log_all = _log_weighted_sum(logits[keep], (pos | neg)[keep].to(DTYPE), shift)
    return -(log_pos - log_all).mean()


def contrastive_loss(Y, A_hat, config: LossConfig):
    if config.variant == "wcl":
        return weighted_contrastive_loss(Y, A_hat, config.tau, config.eps, config.literal_eq14)
    if config.variant == "dcl":
        return decoupled_contrastive_loss(Y, A_hat, config.tau)
    if config.variant == "cl":
        return standard_contrastive_loss(Y, A_hat, config.tau)
    return torch.zeros((), dtype=DTYPE)


def total_loss(rec, zeta, lam):
    for name, value in (("reconstruction", rec), ("contrastive", zeta)):
        value = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite {name} loss: {value}")
    return rec + lam * zeta
