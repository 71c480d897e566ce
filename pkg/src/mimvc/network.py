"""Per-view GCN encoders, mask-informed feature fusion, decoders and the
orthogonalised cluster projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .exceptions import DataError, DegenerateProjectionError, TrainingError

DTYPE = torch.float64
HIDDEN_DIMS = (196, 128, 64)
RANK_TOL = 1e-10

ACTIVATIONS = {"relu": torch.relu, "none": lambda x: x}


def gcn_layer(H, A_norm, W, bias=None, activation="relu"):
    """``activation(A_norm @ H @ W + bias)``."""
    if H.shape[1] != W.shape[0] or A_norm.shape != (H.shape[0], H.shape[0]):
        raise DataError(
            f"gcn_layer shape mismatch: H {tuple(H.shape)}, A {tuple(A_norm.shape)}, "
            f"W {tuple(W.shape)}"
        )
    out = A_norm @ (H @ W)
    if bias is not None:
        out = out + bias
    return ACTIVATIONS[activation](out)


def dense_layer(H, W, bias=None, activation="relu"):
    if H.shape[1] != W.shape[0]:
        raise DataError(f"dense layer shape mismatch: {tuple(H.shape)} @ {tuple(W.shape)}")
    out = H @ W
    if bias is not None:
        out = out + bias
    return ACTIVATIONS[activation](out)


class Dense(nn.Module):
    """Weight of shape ``(in, out)`` plus optional bias; applied by the caller."""

    def __init__(self, n_in, n_out, bias=True, generator=None):
        super().__init__()
        limit = math.sqrt(6.0 / (n_in + n_out))
        W = torch.empty(n_in, n_out, dtype=DTYPE)
        W.uniform_(-limit, limit, generator=generator)
        self.weight = nn.Parameter(W)
        self.bias = nn.Parameter(torch.zeros(n_out, dtype=DTYPE)) if bias else None


def _activations(n_layers):
    return ["relu"] * (n_layers - 1) + ["none"]


def encode_view(Z, A_norm, layers):
    """Stack of GCN layers on the observed rows of one view."""
    H = Z
    for layer, act in zip(layers, _activations(len(layers))):
        H = gcn_layer(H, A_norm, layer.weight, layer.bias, act)
    return H


def decode_view(F_obs, layers):
    G = F_obs
    for layer, act in zip(layers, _activations(len(layers))):
        G = dense_layer(G, layer.weight, layer.bias, act)
    return G


def fuse_features(latents, observed_idx, mask, masked=True):
    """Average each sample's latent rows over the views that observe it.

    ``latents[v]`` holds one row per entry of ``observed_idx[v]``. With
    ``masked=False`` missing rows count as zeros and every sample is divided
    by ``V``.
    """
    mask = torch.as_tensor(mask, dtype=DTYPE)
    N, V = mask.shape
    L = latents[0].shape[1]
    total = torch.zeros(N, L, dtype=latents[0].dtype)
    for H, idx in zip(latents, observed_idx):
        if H.shape[0] != len(idx):
            raise DataError(f"latent block has {H.shape[0]} rows, expected {len(idx)}")
        total = total.index_add(0, torch.as_tensor(idx, dtype=torch.long), H)
    if not masked:
        return total / V
    counts = mask.sum(dim=1)
    if bool((counts == 0).any()):
        raise DataError("sample observed in no view")
    return total / counts[:, None]


def project_clusters(F, W, bias=None):
    """Linear map to ``C`` columns followed by thin QR; returns ``Q``.

    Columns of ``Q`` are sign-fixed so that ``R`` has a positive diagonal,
    which makes the factorisation unique and differentiable.
    """
    P = F @ W
    if bias is not None:
        P = P + bias
    if P.shape[0] < P.shape[1]:
        raise DegenerateProjectionError(
            f"need at least as many samples as clusters, got {tuple(P.shape)}"
        )
    Q, R = torch.linalg.qr(P, mode="reduced")
    diag = torch.diagonal(R)
    if bool((diag.abs() < RANK_TOL).any()):
        raise DegenerateProjectionError(
            f"cluster projection is rank deficient (min |R_ii| = {diag.abs().min().item():.3g})"
        )
    return Q * torch.sign(diag).detach()


@dataclass
class ForwardOutput:
    latents: list
    F: torch.Tensor
    reconstructions: list
    Y: torch.Tensor | None


class MaskedContrastiveNet(nn.Module):
    """All trainable parameters: encoders, decoders and cluster projection.

    Parameters
    ----------
    dims : sequence of int
        Input dimension of each view.
    n_clusters : int
    hidden_dims : sequence of int
        Encoder widths; decoders mirror them. The last entry is the latent width.
    use_bias : bool
    seed : int
        Seeds the Glorot-uniform weight initialisation.
    center_latents : bool
        Subtract each view's latent mean (over its observed rows) before
        fusion. Off by default; removes per-view offsets that otherwise make
        the fused representation depend on which views a sample has.
    """

    def __init__(self, dims, n_clusters, hidden_dims=HIDDEN_DIMS, use_bias=True, seed=0,
                 center_latents=False):
        super().__init__()
        if n_clusters < 1:
            raise DataError("n_clusters must be positive")
        gen = torch.Generator().manual_seed(int(seed))
        self.dims = [int(d) for d in dims]
        self.hidden_dims = [int(h) for h in hidden_dims]
        self.n_clusters = int(n_clusters)
        self.use_bias = bool(use_bias)
        self.center_latents = bool(center_latents)

        def stack(sizes):
            return nn.ModuleList(
                Dense(a, b, bias=use_bias, generator=gen) for a, b in zip(sizes, sizes[1:])
            )

        self.encoders = nn.ModuleList(stack([d, *self.hidden_dims]) for d in self.dims)
        self.decoders = nn.ModuleList(
            stack([*self.hidden_dims[::-1], d]) for d in self.dims
        )
        self.projection = Dense(self.hidden_dims[-1], self.n_clusters, bias=use_bias, generator=gen)

    @property
    def latent_dim(self):
        return self.hidden_dims[-1]

    def encode(self, views_obs, a_norms):
        latents = [encode_view(Z, A, enc) for Z, A, enc in zip(views_obs, a_norms, self.encoders)]
        if self.center_latents:
            latents = [H - H.mean(dim=0) for H in latents]
        return latents

    def project(self, F):
        return project_clusters(F, self.projection.weight, self.projection.bias)

    def forward(self, views_obs, a_norms, observed_idx, mask, masked_fusion=True, project=True):
        latents = self.encode(views_obs, a_norms)
        F = fuse_features(latents, observed_idx, mask, masked=masked_fusion)
        recon = [
            decode_view(F[torch.as_tensor(idx, dtype=torch.long)], dec)
            for idx, dec in zip(observed_idx, self.decoders)
        ]
        Y = self.project(F) if project else None
        for t in [F, *recon]:
            if not bool(torch.isfinite(t).all()):
                raise TrainingError("non-finite activations in forward pass")
        return ForwardOutput(latents=latents, F=F, reconstructions=recon, Y=Y)
