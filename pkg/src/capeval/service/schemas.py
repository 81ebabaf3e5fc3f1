"""Request/response models for the evaluation service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    kind: Literal["usage", "data", "numeric"]
    message: str


class ScoreRequest(BaseModel):
    images_store: str
    texts_store: str
    pairs: str
    out_dir: str
    w: float = Field(default=2.5, gt=0)


class ScoreResponse(BaseModel):
    count: int
    corpus_mean: float
    csv_path: str
    manifest_path: str


class CorrelationEntry(BaseModel):
    language: str
    n: int | None = None
    rho: float
    tau_b: float
    tau_c: float
    n_c: int | None = None
    n_d: int | None = None
    n_0: int | None = None
    n_1: int | None = None
    n_2: int | None = None
    m: int | None = None
    rho_std: float | None = None
    tau_b_std: float | None = None
    tau_c_std: float | None = None


class CorrelateRequest(BaseModel):
    scores_csv: str
    pairs: str
    out_dir: str
    metric: Literal["clipscore", "refclipscore"] = "clipscore"
    per_language: bool = True
    m: int | None = None
    bootstrap: bool = False
    boot_iters: int = Field(default=1000, ge=1)
    boot_frac: float = Field(default=0.8, gt=0, le=1)
    strata: Literal["rating_value", "language", "none"] = "rating_value"
    seed: int = 0
    jobs: int = Field(default=1, ge=1)


class CorrelateResponse(BaseModel):
    reports: list[CorrelationEntry]
    json_path: str
    manifest_path: str


class TaskRequest(BaseModel):
    task: Literal["valse", "xvnli", "marvl", "pascal"]
    dataset: str
    images_store: str
    texts_store: str
    out_dir: str
    w: float = Field(default=2.5, gt=0)
    seed: int = 0
    metric: Literal["clipscore", "refclipscore"] = "clipscore"


class TaskResultModel(BaseModel):
    task: str
    language: str
    breakdown: dict[str, dict[str, float]]
    correct: int
    total: int
    accuracy: float
    skipped: int
    macro_accuracy: float | None = None


class TaskResponse(BaseModel):
    results: list[TaskResultModel]
    json_path: str
    manifest_path: str


class HeatmapRequest(BaseModel):
    scores_csv: str
    out_dir: str
    qe_jsonl: str | None = None
    mode: Literal["all", "bottom25", "top25"] = "all"


class HeatmapResponse(BaseModel):
    languages: list[str]
    matrix: list[list[float | None]]
    csv_path: str
    manifest_path: str


class MtSelectRequest(BaseModel):
    candidates: str
    out_dir: str


class MtSelectResponse(BaseModel):
    selected: int
    dropped: int
    selected_path: str
    drops_path: str
    manifest_path: str


class FinetuneRequest(BaseModel):
    images_store: str
    texts_store: str
    out_dir: str
    contrastive_pairs: str | None = None
    rated_pairs: str | None = None
    loss_mode: Literal["contrastive_only", "pearson_only", "combined"] = "combined"
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=32, ge=1)
    seed: int = 0
    w: float = Field(default=2.5, gt=0)
    contrastive_weight: float = 1.0
    pearson_weight: float = 1.0
    pearson_raw_cos: bool = False
    export_adapted: bool = False


class FinetuneResponse(BaseModel):
    steps: int
    skipped_batches: int
    final_contrastive: float | None
    final_pearson: float | None
    checkpoint_path: str
    curve_path: str
    adapted_images_path: str | None = None
    adapted_texts_path: str | None = None
    manifest_path: str
