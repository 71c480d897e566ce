"""Full-batch training loop, ablation variants and lambda sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import torch

from . import graph as G
from .dataset import MultiViewDataset, partition_observed, scale_dataset
from .evaluation import METRIC_NAMES, evaluate
from .exceptions import ConfigError, DataError, TrainingError
from .losses import LossConfig, contrastive_loss, reconstruction_loss, total_loss
from .network import DTYPE, HIDDEN_DIMS, MaskedContrastiveNet

logger = logging.getLogger(__name__)

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)

# variant -> (masked feature fusion, masked graph fusion, contrastive loss, use reconstruction)
VARIANTS = {
    "full": (True, True, "wcl", True),
    "wo_mff": (False, True, "wcl", True),
    "wo_mgf": (True, False, "wcl", True),
    "wo_wcl": (True, True, "none", True),
    "wo_rec": (True, True, "wcl", False),
    "w_cl": (True, True, "cl", True),
    "w_dcl": (True, True, "dcl", True),
}

HISTORY_COLUMNS = ("epoch", "total", "rec", "contrastive", *METRIC_NAMES)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    learning_rate: float = 1e-3
    lam: float = 1.0
    tau: float = 1.0
    k: int = 15
    seed: int = 0
    graph_refresh_period: int = 1
    variant: str = "full"
    use_bias: bool = True
    literal_eq14: bool = False
    eps: float = 1e-12
    hidden_dims: tuple = HIDDEN_DIMS
    scale: bool = True
    n_clusters: int | None = None
    eval_every: int = 0
    eval_seeds: tuple = (0, 1, 2, 3, 4)
    kmeans_restarts: int = 10
    cluster_on: str = "F"
    checkpoint_every: int = 0
    center_latents: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "eval_seeds", tuple(int(s) for s in self.eval_seeds))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.graph_refresh_period < 1:
            raise ConfigError("graph_refresh_period must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.cluster_on not in ("F", "Y"):
            raise ConfigError("cluster_on must be 'F' or 'Y'")
        self.loss_config()  # validates tau, lam, eps

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lam=self.lam,
            tau=self.tau,
            eps=self.eps,
            variant=VARIANTS[self.variant][2],
            literal_eq14=self.literal_eq14,
        )

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["eval_seeds"] = list(self.eval_seeds)
        return d


@dataclass
class EpochRecord:
    epoch: int
    total: float
    rec: float
    contrastive: float
    metrics: dict | None = None

    def as_row(self):
        row = {"epoch": self.epoch, "total": self.total, "rec": self.rec,
               "contrastive": self.contrastive}
        for name in METRIC_NAMES:
            row[name] = "" if self.metrics is None else self.metrics[name]
        return row


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in self.records:
            row = r.as_row()
            buf.write(",".join(_fmt(row[c]) for c in HISTORY_COLUMNS) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def plot_rows(self):
        """Rows of (epoch, acc, nmi, ari, fscore, loss) for epochs that were scored."""
        for r in self.records:
            if r.metrics is not None:
                yield {"epoch": r.epoch, **{m: r.metrics[m] for m in METRIC_NAMES},
                       "loss": r.total}


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class ViewGraph:
    adjacency: np.ndarray   # observed block, symmetric
    normalized: np.ndarray  # D^-1/2 (A + I) D^-1/2
    lifted: np.ndarray      # N x N


@dataclass
class PreparedData:
    dataset: MultiViewDataset
    partition: object
    graphs: list
    views_obs: list
    a_norms: list
    observed_idx: list
    mask: torch.Tensor

    @property
    def lifted(self):
        return [g.lifted for g in self.graphs]


def prepare_static_graphs(dataset: MultiViewDataset, k: int) -> list:
    """Adaptive-neighbour graph per view, built once from its observed rows."""
    part = partition_observed(dataset.mask)
    out = []
    for v, X in enumerate(dataset.views):
        idx = part.observed[v]
        if len(idx) < k + 2:
            raise DataError(
                f"view {dataset.names[v]!r} has {len(idx)} observed samples; need >= k+2 = {k + 2}"
            )
        A = G.adaptive_knn_graph(X[idx], k)
        out.append(ViewGraph(A, G.gcn_normalize(A), G.lift_graph(A, idx, dataset.n_samples)))
    return out


def prepare(dataset: MultiViewDataset, k: int, scale: bool = True) -> PreparedData:
    data = scale_dataset(dataset) if scale else dataset
    part = partition_observed(data.mask)
    graphs = prepare_static_graphs(data, k)
    return PreparedData(
        dataset=data,
        partition=part,
        graphs=graphs,
        views_obs=[torch.tensor(X[idx], dtype=DTYPE) for X, idx in zip(data.views, part.observed)],
        a_norms=[torch.tensor(g.normalized, dtype=DTYPE) for g in graphs],
        observed_idx=[torch.as_tensor(idx, dtype=torch.long) for idx in part.observed],
        mask=torch.tensor(data.mask, dtype=DTYPE),
    )


def refresh_common_graph(F, k, lifted, mask, masked=True) -> np.ndarray:
    """Rebuild the common graph from ``F`` and fuse it with the view graphs.

    ``F`` is detached first: the result is a constant for the optimiser.
    """
    if isinstance(F, torch.Tensor):
        F = F.detach().cpu().numpy()
    S = G.adaptive_knn_graph(F, k)
    return G.fuse_graphs(lifted, np.asarray(mask), S, masked=masked)


@dataclass
class ModelState:
    model: MaskedContrastiveNet
    optimizer: torch.optim.Optimizer
    config: TrainConfig
    epoch: int = 0

    @property
    def seed(self):
        return self.config.seed

    def forward(self, prep: PreparedData, project=True):
        masked_fusion = VARIANTS[self.config.variant][0]
        return self.model(prep.views_obs, prep.a_norms, prep.observed_idx, prep.mask,
                          masked_fusion=masked_fusion, project=project)

    @torch.no_grad()
    def embed(self, dataset_or_prep, which="F") -> np.ndarray:
        prep = dataset_or_prep
        if isinstance(prep, MultiViewDataset):
            prep = prepare(prep, self.config.k, self.config.scale)
        out = self.forward(prep, project=(which == "Y"))
        return (out.Y if which == "Y" else out.F).numpy().copy()


def build_state(dims, n_clusters, config: TrainConfig) -> ModelState:
    model = MaskedContrastiveNet(dims, n_clusters, config.hidden_dims, config.use_bias,
                                 config.seed, center_latents=config.center_latents)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999))
    return ModelState(model=model, optimizer=opt, config=config)


def loss_terms(config: TrainConfig, prep: PreparedData, out, A_hat):
    """The variant's ``(total, rec, zeta)`` for a finished forward pass."""
    _, _, contrastive, use_rec = VARIANTS[config.variant]
    rec = reconstruction_loss(prep.views_obs, out.reconstructions, prep.dataset.n_samples)
    if contrastive == "none":
        zeta = torch.zeros((), dtype=DTYPE)
        lam = 0.0
    else:
        zeta = contrastive_loss(out.Y, A_hat, config.loss_config())
        lam = config.lam
    return total_loss(rec if use_rec else 0.0 * rec, zeta, lam), rec, zeta


def compute_losses(state: ModelState, prep: PreparedData, A_hat):
    """Forward pass plus loss terms, returning ``(total, rec, zeta, output)``."""
    contrastive = VARIANTS[state.config.variant][2]
    out = state.forward(prep, project=contrastive != "none")
    return (*loss_terms(state.config, prep, out, A_hat), out)


def _n_clusters(dataset, config):
    C = config.n_clusters or dataset.n_clusters
    if C is None:
        raise DataError("number of clusters unknown: set n_clusters or provide labels")
    return int(C)


def train(dataset: MultiViewDataset, config: TrainConfig, checkpoint_dir=None, state=None):
    """Train from scratch (or continue ``state``) for ``config.epochs`` epochs.

    Returns ``(ModelState, TrainHistory)``. Each history entry holds the
    losses evaluated at the parameters before that epoch's update.
    """
    torch.manual_seed(config.seed)
    prep = prepare(dataset, config.k, config.scale)
    C = _n_clusters(dataset, config)
    if state is None:
        state = build_state(prep.dataset.dims, C, config)
    masked_graph, contrastive = VARIANTS[config.variant][1], VARIANTS[config.variant][2]
    labels = prep.dataset.labels
    history = TrainHistory()
    A_hat = None
    for epoch in range(1, config.epochs + 1):
        try:
            out = state.forward(prep, project=contrastive != "none")
            if contrastive != "none" and (
                A_hat is None or (epoch - 1) % config.graph_refresh_period == 0
            ):
                A_hat = refresh_common_graph(out.F, config.k, prep.lifted, prep.dataset.mask,
                                             masked=masked_graph)
            total, rec, zeta = loss_terms(config, prep, out, A_hat)
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        state.optimizer.zero_grad()
        total.backward()
        state.optimizer.step()
        state.epoch += 1
        for p in state.model.parameters():
            if not bool(torch.isfinite(p).all()):
                raise TrainingError(f"epoch {epoch}: non-finite parameters after update")

        metrics = None
        if config.eval_every and labels is not None and (
            epoch % config.eval_every == 0 or epoch == 1 or epoch == config.epochs
        ):
            Z = out.F if config.cluster_on == "F" else state.model.project(out.F)
            metrics = evaluate(Z.detach().numpy(), labels, C, config.eval_seeds,
                               config.kmeans_restarts).as_row()
        history.records.append(
            EpochRecord(epoch, float(total.item()), float(rec.item()), float(zeta.item()), metrics)
        )
        if checkpoint_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            from .state import save_state
            save_state(state, os.path.join(checkpoint_dir, f"checkpoint_{epoch:06d}.bin"))
        if epoch == 1 or epoch % 100 == 0:
            logger.debug("epoch %d total=%.6g rec=%.6g zeta=%.6g", epoch, total.item(),
                         rec.item(), zeta.item())
    return state, history


def evaluate_state(state: ModelState, dataset: MultiViewDataset, seeds=None, restarts=None,
                   **meta):
    cfg = state.config
    Z = state.embed(dataset, which=cfg.cluster_on)
    return evaluate(
        Z, dataset.labels, _n_clusters(dataset, cfg),
        seeds=cfg.eval_seeds if seeds is None else seeds,
        restarts=cfg.kmeans_restarts if restarts is None else restarts,
        epoch=state.epoch, variant=cfg.variant, lam=cfg.lam,
        eta=dataset.meta.get("eta", float(1.0 - dataset.mask.mean())), **meta,
    )


# -- ablation and sweeps ----------------------------------------------------------


def _run_cell(args):
    dataset, config = args
    state, history = train(dataset, config)
    record = evaluate_state(state, dataset, seed=config.seed)
    return record, history


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_ablation(dataset, base_config: TrainConfig, seeds=None, variants=tuple(VARIANTS),
                 workers=1):
    """Train every variant for every seed. Returns ``{variant: [(record, history), ...]}``."""
    seeds = [base_config.seed] if seeds is None else list(seeds)
    jobs = [(dataset, replace(base_config, variant=v, seed=s)) for v in variants for s in seeds]
    results = _map(_run_cell, jobs, workers)
    table = {v: [] for v in variants}
    for (_, cfg), res in zip(jobs, results):
        table[cfg.variant].append(res)
    return table


def run_sweep(dataset, base_config: TrainConfig, lambdas=LAMBDA_GRID, seeds=(0, 1, 2, 3, 4),
              workers=1):
    """Cross product of lambda values and seeds.

    Returns ``(cells, summary)``: one ``(lam, seed, record, history)`` per cell
    and the per-lambda mean of every metric.
    """
    jobs = [(dataset, replace(base_config, lam=float(lam), seed=int(s)))
            for lam in lambdas for s in seeds]
    results = _map(_run_cell, jobs, workers)
    cells = [(cfg.lam, cfg.seed, rec, hist) for (_, cfg), (rec, hist) in zip(jobs, results)]
    summary = []
    for lam in lambdas:
        recs = [rec for l, _, rec, _ in cells if l == float(lam)]
        row = {"lambda": float(lam), "n_runs": len(recs)}
        row.update({m: float(np.mean([getattr(r, m) for r in recs])) for m in METRIC_NAMES})
        summary.append(row)
    return cells, summary


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})


def median(values):
    return float(np.median(values)) if len(values) else math.nan
