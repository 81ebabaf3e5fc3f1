"""Linear embedding adapter trained with a combined contrastive + Pearson loss.

Per-modality square maps W_image and W_text are applied to frozen unit
embeddings and re-normalized, so the adapted similarity is
cos(normalize(W_image v), normalize(W_text c)).  Two objectives share the
parameters:

  contrastive   L_C = -(1/2N) sum_i [ log softmax_row_i + log softmax_col_i ]
                over the similarity matrix s_ij / tau, with learnable
                temperature tau = exp(log_tau);
  pearson       L_P = 1 - r(x, y) where x is the batch's CLIPScore vector on
                adapted embeddings and y the human ratings.

In combined mode each update accumulates the gradient of one contrastive
batch and one rated batch before a single SGD step; instances of the two
losses are never mixed in one batch.  All arithmetic is float64 and all
gradients are analytic (the test suite checks them against central finite
differences).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from capeval.errors import (
    DataError,
    DegenerateBatchError,
    NumericError,
    UsageError,
)
from capeval.metrics import ClipScoreConfig
from capeval.rng import derive_rng
from capeval.store import (
    EmbeddingRecord,
    EmbeddingStore,
    Modality,
    normalize_vectors,
)

LOG_TAU_MIN = math.log(1e-3)
LOG_TAU_MAX = math.log(100.0)
LOSS_MODES = ("contrastive_only", "pearson_only", "combined")


@dataclass
class AdapterState:
    w_text: np.ndarray  # (d, d) float64
    w_image: np.ndarray  # (d, d) float64
    log_tau: float
    step: int = 0

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @property
    def dim(self) -> int:
        return self.w_text.shape[0]

    def __post_init__(self) -> None:
        self.w_text = np.asarray(self.w_text, dtype=np.float64)
        self.w_image = np.asarray(self.w_image, dtype=np.float64)
        d = self.w_text.shape[0]
        if self.w_text.shape != (d, d) or self.w_image.shape != (d, d):
            raise UsageError("adapter matrices must be square and equal-sized")
        if not (np.all(np.isfinite(self.w_text)) and np.all(np.isfinite(self.w_image))):
            raise NumericError("adapter matrices contain non-finite entries")
        if not math.isfinite(self.log_tau):
            raise NumericError("log_tau is not finite")

    @classmethod
    def identity(cls, dim: int, tau: float = 0.07) -> "AdapterState":
        if dim <= 0:
            raise UsageError("adapter dimension must be positive")
        if not (tau > 0):
            raise UsageError("temperature must be positive")
        return cls(np.eye(dim), np.eye(dim), math.log(tau))

    def copy(self) -> "AdapterState":
        return AdapterState(
            self.w_text.copy(), self.w_image.copy(), self.log_tau, self.step
        )


@dataclass(frozen=True)
class AdapterGrads:
    w_text: np.ndarray
    w_image: np.ndarray
    log_tau: float

    def scaled(self, factor: float) -> "AdapterGrads":
        return AdapterGrads(self.w_text * factor, self.w_image * factor, self.log_tau * factor)

    def plus(self, other: "AdapterGrads") -> "AdapterGrads":
        return AdapterGrads(
            self.w_text + other.w_text,
            self.w_image + other.w_image,
            self.log_tau + other.log_tau,
        )


@dataclass(frozen=True)
class ContrastiveBatch:
    images: np.ndarray  # (N, d) unit rows
    texts: np.ndarray  # (N, d) unit rows, aligned by index

    def __post_init__(self) -> None:
        if self.images.ndim != 2 or self.images.shape != self.texts.shape:
            raise UsageError("contrastive batch needs aligned (N, d) image/text arrays")
        if self.images.shape[0] < 2:
            raise DegenerateBatchError("contrastive batch needs at least 2 pairs")


@dataclass(frozen=True)
class PearsonBatch:
    images: np.ndarray
    texts: np.ndarray
    ratings: np.ndarray

    def __post_init__(self) -> None:
        if self.images.ndim != 2 or self.images.shape != self.texts.shape:
            raise UsageError("rated batch needs aligned (N, d) image/text arrays")
        if self.images.shape[0] < 3:
            raise DegenerateBatchError("rated batch needs at least 3 pairs")
        if self.ratings.shape != (self.images.shape[0],):
            raise UsageError("ratings must align with the batch rows")
        if float(np.ptp(self.ratings)) == 0.0:
            raise DegenerateBatchError("ratings are constant within the batch")


def _map_and_normalize(w: np.ndarray, x: np.ndarray):
    """Rows of x through the map, then unit-normalized; returns intermediates."""
    z = x @ w.T
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise NumericError("adapter map produced a zero vector")
    z_hat = z / norms[:, None]
    return z, norms, z_hat


def _grad_through_map(
    g_hat: np.ndarray, norms: np.ndarray, z_hat: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """Backprop g_hat through normalize(x @ W.T) to get dLoss/dW."""
    radial = np.sum(g_hat * z_hat, axis=1, keepdims=True)
    g_z = (g_hat - radial * z_hat) / norms[:, None]
    return g_z.T @ x


def adapted_cosine(state: AdapterState, image: np.ndarray, text: np.ndarray) -> float:
    """cos(normalize(W_image v), normalize(W_text c)) for unit inputs."""
    _, _, z_hat = _map_and_normalize(state.w_image, np.atleast_2d(image))
    _, _, t_hat = _map_and_normalize(state.w_text, np.atleast_2d(text))
    value = float(z_hat[0] @ t_hat[0])
    if not math.isfinite(value):
        raise NumericError("adapted cosine is not finite")
    return min(1.0, max(-1.0, value))


def contrastive_loss(
    state: AdapterState, batch: ContrastiveBatch
) -> tuple[float, AdapterGrads]:
    """Symmetric InfoNCE loss over the adapted similarity matrix, with
    analytic gradients for both maps and log_tau."""
    n = batch.images.shape[0]
    tau = state.tau
    _, nz, z_hat = _map_and_normalize(state.w_image, batch.images)
    _, nt, t_hat = _map_and_normalize(state.w_text, batch.texts)
    sims = z_hat @ t_hat.T
    logits = sims / tau

    row_max = logits.max(axis=1, keepdims=True)
    row_exp = np.exp(logits - row_max)
    row_lse = np.log(row_exp.sum(axis=1)) + row_max[:, 0]
    col_max = logits.max(axis=0, keepdims=True)
    col_exp = np.exp(logits - col_max)
    col_lse = np.log(col_exp.sum(axis=0)) + col_max[0, :]
    diag = np.diag(logits)
    loss = -(np.sum(diag - row_lse) + np.sum(diag - col_lse)) / (2.0 * n)
    if not math.isfinite(loss):
        raise NumericError("contrastive loss overflowed after stabilization")

    p_row = row_exp / row_exp.sum(axis=1, keepdims=True)
    p_col = col_exp / col_exp.sum(axis=0, keepdims=True)
    eye = np.eye(n)
    g_logits = (p_row + p_col - 2.0 * eye) / (2.0 * n)
    g_sims = g_logits / tau
    g_log_tau = -float(np.sum(g_logits * sims)) / tau

    g_zhat = g_sims @ t_hat
    g_that = g_sims.T @ z_hat
    grads = AdapterGrads(
        w_text=_grad_through_map(g_that, nt, t_hat, batch.texts),
        w_image=_grad_through_map(g_zhat, nz, z_hat, batch.images),
        log_tau=g_log_tau,
    )
    return float(loss), grads


def pearson_loss(
    state: AdapterState,
    batch: PearsonBatch,
    cfg: ClipScoreConfig,
    raw_cos: bool = False,
) -> tuple[float, AdapterGrads]:
    """1 - Pearson(x, y) where x is the batch's adapted CLIPScore vector.

    x uses the clamped score w * max(cos, 0) unless raw_cos is set; the
    clamp's zero-gradient region is accepted.
    """
    _, nz, z_hat = _map_and_normalize(state.w_image, batch.images)
    _, nt, t_hat = _map_and_normalize(state.w_text, batch.texts)
    cos = np.sum(z_hat * t_hat, axis=1)
    if raw_cos:
        x = cfg.w * cos
        dx_dcos = np.full_like(cos, cfg.w)
    else:
        x = cfg.w * np.maximum(cos, 0.0)
        dx_dcos = cfg.w * (cos > 0.0).astype(np.float64)

    a = x - x.mean()
    b = batch.ratings.astype(np.float64) - batch.ratings.mean()
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < 1e-12:
        raise DegenerateBatchError("CLIPScore vector is constant within the batch")
    r = float(a @ b) / (na * nb)
    loss = 1.0 - r
    if not math.isfinite(loss):
        raise NumericError("pearson loss is not finite")

    g_x = -(b / (na * nb) - r * a / (na * na))
    g_cos = g_x * dx_dcos
    g_zhat = g_cos[:, None] * t_hat
    g_that = g_cos[:, None] * z_hat
    grads = AdapterGrads(
        w_text=_grad_through_map(g_that, nt, t_hat, batch.texts),
        w_image=_grad_through_map(g_zhat, nz, z_hat, batch.images),
        log_tau=0.0,
    )
    return float(loss), grads


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    loss_mode: str = "combined"
    contrastive_weight: float = 1.0
    pearson_weight: float = 1.0
    raw_cos: bool = False
    clip: ClipScoreConfig = field(default_factory=ClipScoreConfig)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise UsageError("learning rate, epochs and batch size must be positive")
        if self.loss_mode not in LOSS_MODES:
            raise UsageError(f"loss mode must be one of {LOSS_MODES}")


@dataclass(frozen=True)
class PairedDataset:
    """Aligned (image, text) rows, optionally with ratings."""

    ids: tuple[str, ...]
    images: np.ndarray
    texts: np.ndarray
    ratings: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.ids)
        if self.images.shape[0] != n or self.texts.shape[0] != n:
            raise UsageError("dataset ids and arrays are misaligned")
        if self.ratings is not None and self.ratings.shape != (n,):
            raise UsageError("dataset ratings are misaligned")

    def __len__(self) -> int:
        return len(self.ids)

    def canonical(self) -> "PairedDataset":
        """Sort by id so training never depends on incidental input order."""
        order = np.argsort(np.asarray(self.ids))
        return PairedDataset(
            tuple(self.ids[i] for i in order),
            self.images[order],
            self.texts[order],
            None if self.ratings is None else self.ratings[order],
        )


@dataclass(frozen=True)
class CurvePoint:
    step: int
    contrastive: float | None
    pearson: float | None


@dataclass
class TrainResult:
    state: AdapterState
    curve: list[CurvePoint]
    skipped_batches: int


def _epoch_batches(
    n: int, batch_size: int, rng: np.random.Generator, minimum: int
) -> list[np.ndarray]:
    perm = rng.permutation(n)
    slices = [perm[k : k + batch_size] for k in range(0, n, batch_size)]
    return [s for s in slices if s.size >= minimum]


def train(
    state: AdapterState,
    contrastive_data: PairedDataset | None,
    rated_data: PairedDataset | None,
    cfg: TrainConfig,
) -> TrainResult:
    """SGD over the configured schedule; deterministic for a fixed seed.

    Combined mode accumulates the gradients of one contrastive batch and one
    rated batch per update.  Degenerate rated batches are skipped and counted;
    an epoch that skips more than half of its batches aborts with a
    diagnostic.
    """
    use_c = cfg.loss_mode in ("contrastive_only", "combined")
    use_p = cfg.loss_mode in ("pearson_only", "combined")
    if use_c and (contrastive_data is None or len(contrastive_data) == 0):
        raise UsageError(f"loss mode {cfg.loss_mode} needs contrastive data")
    if use_p and (rated_data is None or len(rated_data) == 0):
        raise UsageError(f"loss mode {cfg.loss_mode} needs rated data")
    if use_p and rated_data.ratings is None:
        raise UsageError("rated data carries no ratings")

    cdata = contrastive_data.canonical() if use_c else None
    pdata = rated_data.canonical() if use_p else None
    work = state.copy()
    curve: list[CurvePoint] = []
    skipped_total = 0

    for epoch in range(cfg.epochs):
        c_batches = (
            _epoch_batches(
                len(cdata), cfg.batch_size, derive_rng(cfg.seed, "shuffle-contrastive", epoch), 2
            )
            if use_c
            else []
        )
        p_batches = (
            _epoch_batches(
                len(pdata), cfg.batch_size, derive_rng(cfg.seed, "shuffle-rated", epoch), 3
            )
            if use_p
            else []
        )
        if cfg.loss_mode == "combined":
            n_updates = min(len(c_batches), len(p_batches))
        elif cfg.loss_mode == "contrastive_only":
            n_updates = len(c_batches)
        else:
            n_updates = len(p_batches)
        if n_updates == 0:
            raise DataError(f"epoch {epoch}: no usable batches")

        skipped_epoch = 0
        for u in range(n_updates):
            grads = AdapterGrads(
                np.zeros_like(work.w_text), np.zeros_like(work.w_image), 0.0
            )
            loss_c = loss_p = None
            if use_c:
                idx = c_batches[u]
                batch = ContrastiveBatch(cdata.images[idx], cdata.texts[idx])
                loss_c, g = contrastive_loss(work, batch)
                grads = grads.plus(g.scaled(cfg.contrastive_weight))
            if use_p:
                idx = p_batches[u]
                try:
                    batch = PearsonBatch(
                        pdata.images[idx], pdata.texts[idx], pdata.ratings[idx]
                    )
                    loss_p, g = pearson_loss(work, batch, cfg.clip, cfg.raw_cos)
                    grads = grads.plus(g.scaled(cfg.pearson_weight))
                except DegenerateBatchError:
                    skipped_epoch += 1
                    if cfg.loss_mode == "pearson_only":
                        continue
            work.w_text = work.w_text - cfg.learning_rate * grads.w_text
            work.w_image = work.w_image - cfg.learning_rate * grads.w_image
            work.log_tau = float(
                np.clip(work.log_tau - cfg.learning_rate * grads.log_tau, LOG_TAU_MIN, LOG_TAU_MAX)
            )
            work.step += 1
            curve.append(CurvePoint(work.step, loss_c, loss_p))
        skipped_total += skipped_epoch
        if skipped_epoch * 2 > n_updates:
            raise DataError(
                f"epoch {epoch}: {skipped_epoch} of {n_updates} batches degenerate; aborting"
            )
    return TrainResult(state=work, curve=curve, skipped_batches=skipped_total)


def export_adapted_store(state: AdapterState, store: EmbeddingStore) -> EmbeddingStore:
    """Map every vector through its modality's matrix and re-normalize."""
    if store.dimension != state.dim:
        raise UsageError(
            f"adapter dimension {state.dim} does not match store dimension {store.dimension}"
        )
    records = list(store)
    ids = [r.id for r in records]
    matrix = np.stack([r.vector for r in records]).astype(np.float64)
    out = np.empty_like(matrix)
    for modality, w in ((Modality.IMAGE, state.w_image), (Modality.TEXT, state.w_text)):
        mask = np.array([r.modality is modality for r in records])
        if np.any(mask):
            z = matrix[mask] @ w.T
            norms = np.linalg.norm(z, axis=1)
            if np.any(norms == 0.0):
                bad = np.array(ids)[mask][norms == 0.0][0]
                raise NumericError(f"adapter maps vector {bad!r} to zero")
            out[mask] = z / norms[:, None]
    normalized = normalize_vectors(out, ids)
    adapted = EmbeddingStore(store.dimension)
    for rec, vec in zip(records, normalized):
        vec = vec.copy()
        vec.setflags(write=False)
        adapted.add(EmbeddingRecord(rec.id, vec, rec.modality))
    return adapted


def save_checkpoint(state: AdapterState, path: str | Path) -> None:
    """JSON header line {dim, tau, step} followed by the two f64 LE matrices,
    W_text first."""
    header = json.dumps(
        {"dim": state.dim, "tau": state.tau, "step": state.step}, sort_keys=True
    )
    with Path(path).open("wb") as handle:
        handle.write(header.encode("utf-8") + b"\n")
        handle.write(np.asarray(state.w_text, dtype="<f8").tobytes())
        handle.write(np.asarray(state.w_image, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> AdapterState:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    blob = path.read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
        dim = int(header["dim"])
        tau = float(header["tau"])
        step = int(header["step"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: malformed checkpoint header") from exc
    body = blob[newline + 1 :]
    expected = 2 * dim * dim * 8
    if len(body) != expected:
        raise DataError(
            f"{path}: checkpoint body has {len(body)} bytes, expected {expected}"
        )
    w_text = np.frombuffer(body[: expected // 2], dtype="<f8").reshape(dim, dim).copy()
    w_image = np.frombuffer(body[expected // 2 :], dtype="<f8").reshape(dim, dim).copy()
    if not (tau > 0):
        raise DataError(f"{path}: checkpoint temperature must be positive")
    return AdapterState(w_text, w_image, math.log(tau), step)


def write_loss_curve_csv(curve: Sequence[CurvePoint], path: str | Path) -> None:
    lines = ["step,loss_contrastive,loss_pearson"]
    for point in curve:
        c = "" if point.contrastive is None else repr(point.contrastive)
        p = "" if point.pearson is None else repr(point.pearson)
        lines.append(f"{point.step},{c},{p}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
