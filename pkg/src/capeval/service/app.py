"""FastAPI service wrapping the evaluation engine.

Endpoints receive file paths plus configuration, run the corresponding
pipeline server-side, write the outputs (and a manifest with SHA-256 digests)
under the requested output directory, and return a JSON summary.  The service
holds no mutable state; everything is a pure function of the request and the
referenced files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from capeval import __version__, adapter, correlation, metrics, mtselect, tasks
from capeval.bootstrap import BootstrapConfig, bootstrap_std
from capeval.datasets import load_jsonl_dataset
from capeval.errors import CapevalError, DataError
from capeval.metrics import ClipScoreConfig
from capeval.runio import RunManifest, dump_json, prepare_out_dir
from capeval.store import load_store, save_store
from capeval.service import schemas

_STATUS_BY_KIND = {"usage": 400, "data": 422, "numeric": 500}


@dataclass(frozen=True)
class Observation:
    """One metric value joined with one human rating."""

    instance_id: str
    language: str
    score: float
    rating: float


def create_app() -> FastAPI:
    app = FastAPI(title="capeval", version=__version__)

    @app.exception_handler(CapevalError)
    async def _capeval_error(_: Request, exc: CapevalError) -> JSONResponse:
        return JSONResponse(
            status_code=_STATUS_BY_KIND[exc.kind],
            content={"kind": exc.kind, "message": str(exc)},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
        out_dir = prepare_out_dir(req.out_dir)
        cfg = ClipScoreConfig(w=req.w)
        images = load_store(req.images_store)
        texts = load_store(req.texts_store)
        pairs = load_jsonl_dataset(req.pairs, "rated-pair")
        records = metrics.score_dataset(pairs, images, texts, cfg)
        csv_path = out_dir / "scores.csv"
        metrics.write_scores_csv(records, csv_path)
        manifest = RunManifest(
            subcommand="score",
            inputs={
                "images_store": req.images_store,
                "texts_store": req.texts_store,
                "pairs": req.pairs,
            },
            config={"w": req.w},
        )
        manifest.record_output(csv_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)
        return schemas.ScoreResponse(
            count=len(records),
            corpus_mean=metrics.corpus_mean(records),
            csv_path=str(csv_path),
            manifest_path=str(manifest_path),
        )

    @app.post("/correlate", response_model=schemas.CorrelateResponse)
    def correlate(req: schemas.CorrelateRequest) -> schemas.CorrelateResponse:
        out_dir = prepare_out_dir(req.out_dir)
        observations = _join_scores_with_ratings(req.scores_csv, req.pairs, req.metric)
        groups: dict[str, list[Observation]] = {}
        if req.per_language:
            for obs in observations:
                groups.setdefault(obs.language, []).append(obs)
        else:
            groups["all"] = observations

        entries: list[schemas.CorrelationEntry] = []
        for language in sorted(groups):
            members = groups[language]
            report = correlation.correlate(
                [o.score for o in members], [o.rating for o in members], req.m
            )
            entry = schemas.CorrelationEntry(language=language, **report.to_json_dict())
            if req.bootstrap:
                cfg = BootstrapConfig(
                    iterations=req.boot_iters,
                    fraction=req.boot_frac,
                    seed=req.seed,
                    strata_key=req.strata,
                )
                m_full = report.m

                def stat(fn):
                    def inner(subset):
                        return fn([o.score for o in subset], [o.rating for o in subset])

                    return inner

                entry.rho_std = bootstrap_std(
                    members, stat(correlation.spearman), cfg, req.jobs
                )[1]
                entry.tau_b_std = bootstrap_std(
                    members, stat(lambda s, r: correlation.kendall_tau_b(s, r)[0]), cfg, req.jobs
                )[1]
                entry.tau_c_std = bootstrap_std(
                    members,
                    stat(lambda s, r: correlation.kendall_tau_c(s, r, m_full)),
                    cfg,
                    req.jobs,
                )[1]
            entries.append(entry)

        if req.per_language and len(entries) > 1:
            macro = schemas.CorrelationEntry(
                language="macro_avg",
                rho=float(np.mean([e.rho for e in entries])),
                tau_b=float(np.mean([e.tau_b for e in entries])),
                tau_c=float(np.mean([e.tau_c for e in entries])),
                n=int(sum(e.n for e in entries)),
            )
            if req.bootstrap:
                macro.rho_std = float(np.mean([e.rho_std for e in entries]))
                macro.tau_b_std = float(np.mean([e.tau_b_std for e in entries]))
                macro.tau_c_std = float(np.mean([e.tau_c_std for e in entries]))
            entries.append(macro)

        json_path = out_dir / "correlations.json"
        dump_json([e.model_dump() for e in entries], json_path)
        manifest = RunManifest(
            subcommand="correlate",
            inputs={"scores_csv": req.scores_csv, "pairs": req.pairs},
            config=req.model_dump(exclude={"scores_csv", "pairs", "out_dir"}),
            seed=req.seed,
        )
        manifest.record_output(json_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)
        return schemas.CorrelateResponse(
            reports=entries, json_path=str(json_path), manifest_path=str(manifest_path)
        )

    @app.post("/task", response_model=schemas.TaskResponse)
    def task(req: schemas.TaskRequest) -> schemas.TaskResponse:
        out_dir = prepare_out_dir(req.out_dir)
        cfg = ClipScoreConfig(w=req.w)
        images = load_store(req.images_store)
        texts = load_store(req.texts_store)

        results: list[tasks.AccuracyResult] = []
        if req.task == "valse":
            records = load_jsonl_dataset(req.dataset, "foil")
            results.extend(tasks.valse_accuracy(records, images, texts, cfg).values())
        elif req.task == "xvnli":
            records = load_jsonl_dataset(req.dataset, "nli")
            for fn in (tasks.xvnli_task1, tasks.xvnli_task2, tasks.xvnli_task3):
                results.extend(fn(records, images, texts, cfg).values())
        elif req.task == "marvl":
            records = load_jsonl_dataset(req.dataset, "two-image")
            for fn in (tasks.marvl_task1, tasks.marvl_task2):
                results.extend(fn(records, images, texts, cfg).values())
        else:
            records = load_jsonl_dataset(req.dataset, "preference")
            results.append(
                tasks.pascal_pairwise(records, images, texts, cfg, req.seed, req.metric)
            )
        results.sort(key=lambda r: (r.task_name, r.language))

        payload = [r.to_json_dict() for r in results]
        json_path = out_dir / "task_results.json"
        dump_json(payload, json_path)
        manifest = RunManifest(
            subcommand=f"task-{req.task}",
            inputs={
                "dataset": req.dataset,
                "images_store": req.images_store,
                "texts_store": req.texts_store,
            },
            config=req.model_dump(exclude={"dataset", "images_store", "texts_store", "out_dir"}),
            seed=req.seed,
        )
        manifest.record_output(json_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)
        return schemas.TaskResponse(
            results=[schemas.TaskResultModel(**p) for p in payload],
            json_path=str(json_path),
            manifest_path=str(manifest_path),
        )

    @app.post("/heatmap", response_model=schemas.HeatmapResponse)
    def heatmap(req: schemas.HeatmapRequest) -> schemas.HeatmapResponse:
        out_dir = prepare_out_dir(req.out_dir)
        score_tables = _score_tables_by_language(req.scores_csv)
        qe_tables = None
        if req.qe_jsonl is not None:
            instance_ids = None
            for vectors in score_tables.values():
                instance_ids = vectors[0]
                break
            qe_tables = _qe_tables_aligned(req.qe_jsonl, instance_ids)
        result = tasks.language_heatmap(
            {lang: vec for lang, (_, vec) in score_tables.items()},
            qe_tables,
            req.mode,
        )
        csv_path = out_dir / "heatmap.csv"
        tasks.write_heatmap_csv(result, csv_path)
        manifest = RunManifest(
            subcommand="heatmap",
            inputs={"scores_csv": req.scores_csv, "qe_jsonl": req.qe_jsonl or ""},
            config={"mode": req.mode},
        )
        manifest.record_output(csv_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)
        payload = result.to_json_dict()
        return schemas.HeatmapResponse(
            languages=payload["languages"],
            matrix=payload["matrix"],
            csv_path=str(csv_path),
            manifest_path=str(manifest_path),
        )

    @app.post("/mt-select", response_model=schemas.MtSelectResponse)
    def mt_select(req: schemas.MtSelectRequest) -> schemas.MtSelectResponse:
        out_dir = prepare_out_dir(req.out_dir)
        candidates = load_jsonl_dataset(req.candidates, "mt-candidate")
        report = mtselect.select_best(candidates)
        selected_path = out_dir / "selected.jsonl"
        drops_path = out_dir / "drops.jsonl"
        mtselect.write_selection_jsonl(report, selected_path, drops_path)
        manifest = RunManifest(
            subcommand="mt-select",
            inputs={"candidates": req.candidates},
            config={},
        )
        manifest.record_output(selected_path)
        manifest.record_output(drops_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)
        return schemas.MtSelectResponse(
            selected=len(report.selected),
            dropped=len(report.dropped),
            selected_path=str(selected_path),
            drops_path=str(drops_path),
            manifest_path=str(manifest_path),
        )

    @app.post("/finetune", response_model=schemas.FinetuneResponse)
    def finetune(req: schemas.FinetuneRequest) -> schemas.FinetuneResponse:
        out_dir = prepare_out_dir(req.out_dir)
        images = load_store(req.images_store)
        texts = load_store(req.texts_store)
        cfg = adapter.TrainConfig(
            learning_rate=req.learning_rate,
            epochs=req.epochs,
            batch_size=req.batch_size,
            seed=req.seed,
            loss_mode=req.loss_mode,
            contrastive_weight=req.contrastive_weight,
            pearson_weight=req.pearson_weight,
            raw_cos=req.pearson_raw_cos,
            clip=ClipScoreConfig(w=req.w),
        )
        cdata = pdata = None
        if req.contrastive_pairs is not None:
            cdata = _paired_dataset(req.contrastive_pairs, images, texts, with_ratings=False)
        if req.rated_pairs is not None:
            pdata = _paired_dataset(req.rated_pairs, images, texts, with_ratings=True)

        state = adapter.AdapterState.identity(images.dimension)
        result = adapter.train(state, cdata, pdata, cfg)

        checkpoint_path = out_dir / "adapter.ckpt"
        adapter.save_checkpoint(result.state, checkpoint_path)
        curve_path = out_dir / "loss_curve.csv"
        adapter.write_loss_curve_csv(result.curve, curve_path)

        adapted_images_path = adapted_texts_path = None
        if req.export_adapted:
            adapted_images = adapter.export_adapted_store(result.state, images)
            adapted_texts = adapter.export_adapted_store(result.state, texts)
            adapted_images_path = out_dir / "adapted_images.capevec"
            adapted_texts_path = out_dir / "adapted_texts.capevec"
            save_store(adapted_images, adapted_images_path)
            save_store(adapted_texts, adapted_texts_path)

        manifest = RunManifest(
            subcommand="finetune",
            inputs={
                "images_store": req.images_store,
                "texts_store": req.texts_store,
                "contrastive_pairs": req.contrastive_pairs or "",
                "rated_pairs": req.rated_pairs or "",
            },
            config=req.model_dump(
                exclude={"images_store", "texts_store", "contrastive_pairs", "rated_pairs", "out_dir"}
            ),
            seed=req.seed,
        )
        manifest.record_output(checkpoint_path)
        manifest.record_output(curve_path)
        if adapted_images_path is not None:
            manifest.record_output(adapted_images_path)
            manifest.record_output(adapted_texts_path)
        manifest_path = out_dir / "manifest.json"
        manifest.write(manifest_path)

        last_c = next((p.contrastive for p in reversed(result.curve) if p.contrastive is not None), None)
        last_p = next((p.pearson for p in reversed(result.curve) if p.pearson is not None), None)
        return schemas.FinetuneResponse(
            steps=result.state.step,
            skipped_batches=result.skipped_batches,
            final_contrastive=last_c,
            final_pearson=last_p,
            checkpoint_path=str(checkpoint_path),
            curve_path=str(curve_path),
            adapted_images_path=None if adapted_images_path is None else str(adapted_images_path),
            adapted_texts_path=None if adapted_texts_path is None else str(adapted_texts_path),
            manifest_path=str(manifest_path),
        )

    return app


def _join_scores_with_ratings(
    scores_csv: str, pairs_path: str, metric: str
) -> list[Observation]:
    """Positional join of a score CSV with its source rated-pair file."""
    scores = metrics.read_scores_csv(scores_csv)
    pairs = load_jsonl_dataset(pairs_path, "rated-pair")
    if len(scores) != len(pairs):
        raise DataError(
            f"score CSV has {len(scores)} rows but pairs file has {len(pairs)} records"
        )
    observations = []
    for row, pair in zip(scores, pairs):
        if row.instance_id != pair.instance_id or row.language != pair.language:
            raise DataError(
                f"score row ({row.instance_id!r}, {row.language!r}) does not match "
                f"pair ({pair.instance_id!r}, {pair.language!r}); regenerate the CSV"
            )
        if metric == "refclipscore":
            if row.refclipscore is None:
                raise DataError(
                    f"instance {row.instance_id!r} has no refclipscore; "
                    "score the dataset with references first"
                )
            value = row.refclipscore
        else:
            value = row.clipscore
        observations.append(Observation(row.instance_id, row.language, value, pair.rating))
    return observations


def _score_tables_by_language(scores_csv: str) -> dict[str, tuple[list[str], np.ndarray]]:
    """language -> (sorted instance ids, aligned clipscore vector)."""
    rows = metrics.read_scores_csv(scores_csv)
    by_lang: dict[str, dict[str, float]] = {}
    for row in rows:
        table = by_lang.setdefault(row.language, {})
        if row.instance_id in table:
            raise DataError(
                f"duplicate instance {row.instance_id!r} for language {row.language!r}"
            )
        table[row.instance_id] = row.clipscore
    if not by_lang:
        raise DataError("score CSV is empty")
    id_sets = {lang: tuple(sorted(t)) for lang, t in by_lang.items()}
    reference = next(iter(id_sets.values()))
    for lang, ids in id_sets.items():
        if ids != reference:
            raise DataError(
                f"language {lang!r} does not share the instance index of the other languages"
            )
    return {
        lang: (list(reference), np.array([by_lang[lang][i] for i in reference]))
        for lang in sorted(by_lang)
    }


def _qe_tables_aligned(
    qe_jsonl: str, instance_ids: list[str]
) -> dict[str, np.ndarray]:
    tables = mtselect.read_selected_qe(qe_jsonl)
    aligned: dict[str, np.ndarray] = {}
    for language, mapping in tables.items():
        missing = [i for i in instance_ids if i not in mapping]
        if missing:
            raise DataError(
                f"QE table for {language!r} lacks instance {missing[0]!r}"
            )
        aligned[language] = np.array([mapping[i] for i in instance_ids])
    return aligned


def _paired_dataset(pairs_path: str, images, texts, with_ratings: bool):
    pairs = load_jsonl_dataset(pairs_path, "rated-pair")
    if not pairs:
        raise DataError(f"{pairs_path}: no records")
    ids = tuple(p.instance_id for p in pairs)
    image_rows = np.stack(
        [images.vector(p.image_id, f"instance {p.instance_id!r}") for p in pairs]
    ).astype(np.float64)
    text_rows = np.stack(
        [texts.vector(p.candidate_id, f"instance {p.instance_id!r}") for p in pairs]
    ).astype(np.float64)
    ratings = np.array([p.rating for p in pairs], dtype=np.float64) if with_ratings else None
    return adapter.PairedDataset(ids, image_rows, text_rows, ratings)
