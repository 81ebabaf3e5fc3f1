"""Command-line client for the evaluation service.

Every subcommand builds one HTTP request.  Without ``--server`` the request is
served by an in-process instance of the FastAPI app, so the CLI works without
a running daemon; with ``--server http://host:port`` it talks to a remote
instance (which must share the filesystem paths named in the request).

Correlations and accuracies are printed multiplied by 100 with one decimal
(the usual table convention); the JSON artifacts keep full precision.
Exit codes: 0 success, 2 usage/input error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys

import httpx

from capeval import __version__
from capeval.service.app import create_app

_EXIT_BY_KIND = {"usage": 2, "data": 3, "numeric": 4}


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default="capeval-out", help="directory for outputs")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument(
        "--jobs",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="worker count; results never depend on it",
    )
    parser.add_argument("--w", type=float, default=2.5, help="metric rescale parameter")
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capeval",
        description="Evaluate captioning metrics from stored embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"capeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="compute CLIPScore/RefCLIPScore over a dataset")
    p.add_argument("--images", required=True, help="image embedding store")
    p.add_argument("--texts", required=True, help="text embedding store")
    p.add_argument("--pairs", required=True, help="rated-pair JSONL")
    _common_flags(p)

    p = sub.add_parser("correlate", help="correlate metric scores with human ratings")
    p.add_argument("--scores", required=True, help="score CSV from the score subcommand")
    p.add_argument("--pairs", required=True, help="rated-pair JSONL with the ratings")
    p.add_argument("--metric", choices=["clipscore", "refclipscore"], default="clipscore")
    p.add_argument("--pooled", action="store_true", help="ignore language; one pooled report")
    p.add_argument("--m", type=int, default=None, help="rating scale cardinality for tau_c")
    p.add_argument("--bootstrap", action="store_true", help="bootstrap stds per coefficient")
    p.add_argument("--boot-iters", type=int, default=1000)
    p.add_argument("--boot-frac", type=float, default=0.8)
    p.add_argument("--strata", choices=["rating_value", "language", "none"], default="rating_value")
    _common_flags(p)

    p = sub.add_parser("task", help="run a classification-style evaluation")
    p.add_argument("variant", choices=["valse", "xvnli", "marvl", "pascal"])
    p.add_argument("--dataset", required=True, help="task JSONL file")
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--metric", choices=["clipscore", "refclipscore"], default="clipscore")
    _common_flags(p)

    p = sub.add_parser("heatmap", help="cross-language Pearson matrix of scores")
    p.add_argument("--scores", required=True, help="score CSV covering all languages")
    p.add_argument("--qe", default=None, help="selected-translation JSONL with QE scores")
    p.add_argument("--mode", choices=["all", "bottom25", "top25"], default="all")
    _common_flags(p)

    p = sub.add_parser("mt-select", help="pick the best translation candidates")
    p.add_argument("--candidates", required=True, help="mt-candidate JSONL")
    _common_flags(p)

    p = sub.add_parser("finetune", help="train the linear embedding adapter")
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--contrastive-pairs", default=None, help="rated-pair JSONL (ratings unused)")
    p.add_argument("--rated-pairs", default=None, help="rated-pair JSONL with ratings")
    p.add_argument(
        "--loss",
        choices=["contrastive_only", "pearson_only", "combined"],
        default="combined",
    )
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--contrastive-weight", type=float, default=1.0)
    p.add_argument("--pearson-weight", type=float, default=1.0)
    p.add_argument("--pearson-raw-cos", action="store_true", help="use w*cos without the clamp")
    p.add_argument("--export-adapted", action="store_true", help="also write adapted stores")
    _common_flags(p)

    p = sub.add_parser("serve", help="run the evaluation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        try:
            return httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
        except httpx.HTTPError as exc:
            print(f"cannot reach server {server}: {exc}", file=sys.stderr)
            sys.exit(2)

    async def in_process() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://capeval", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(in_process())


def _result(resp: httpx.Response) -> dict:
    if resp.status_code == 200:
        return resp.json()
    try:
        body = resp.json()
    except ValueError:
        body = {}
    kind = body.get("kind")
    message = body.get("message") or str(body.get("detail", resp.text))
    print(f"error: {message}", file=sys.stderr)
    if kind in _EXIT_BY_KIND:
        sys.exit(_EXIT_BY_KIND[kind])
    sys.exit(2 if resp.status_code in (400, 422) else 1)


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}"


def _run_score(args) -> int:
    body = _result(
        _post(
            args.server,
            "/score",
            {
                "images_store": args.images,
                "texts_store": args.texts,
                "pairs": args.pairs,
                "out_dir": args.out_dir,
                "w": args.w,
            },
        )
    )
    print(f"scored {body['count']} pairs; corpus CLIPScore mean {body['corpus_mean']:.6f}")
    print(f"wrote {body['csv_path']}")
    return 0


def _run_correlate(args) -> int:
    body = _result(
        _post(
            args.server,
            "/correlate",
            {
                "scores_csv": args.scores,
                "pairs": args.pairs,
                "metric": args.metric,
                "per_language": not args.pooled,
                "m": args.m,
                "bootstrap": args.bootstrap,
                "boot_iters": args.boot_iters,
                "boot_frac": args.boot_frac,
                "strata": args.strata,
                "seed": args.seed,
                "jobs": args.jobs,
                "out_dir": args.out_dir,
            },
        )
    )
    if args.bootstrap:
        print(f"{'language':<12} {'tau_b/std':>14} {'tau_c/std':>14} {'rho/std':>14}")
        for e in body["reports"]:
            print(
                f"{e['language']:<12}"
                f" {_pct(e['tau_b'])}/{100.0 * e['tau_b_std']:.2f}".rjust(15)
                + f" {_pct(e['tau_c'])}/{100.0 * e['tau_c_std']:.2f}".rjust(15)
                + f" {_pct(e['rho'])}/{100.0 * e['rho_std']:.2f}".rjust(15)
            )
    else:
        print(f"{'language':<12} {'tau_b':>7} {'tau_c':>7} {'rho':>7}")
        for e in body["reports"]:
            print(
                f"{e['language']:<12} {_pct(e['tau_b']):>7} {_pct(e['tau_c']):>7} {_pct(e['rho']):>7}"
            )
    print(f"wrote {body['json_path']}")
    return 0


def _run_task(args) -> int:
    body = _result(
        _post(
            args.server,
            "/task",
            {
                "task": args.variant,
                "dataset": args.dataset,
                "images_store": args.images,
                "texts_store": args.texts,
                "out_dir": args.out_dir,
                "w": args.w,
                "seed": args.seed,
                "metric": args.metric,
            },
        )
    )
    for r in body["results"]:
        extras = f" skipped={r['skipped']}" if r["skipped"] else ""
        print(
            f"{r['task']:<8} {r['language']:<8} accuracy {_pct(r['accuracy'])}"
            f" ({r['correct']}/{r['total']}){extras}"
        )
    print(f"wrote {body['json_path']}")
    return 0


def _run_heatmap(args) -> int:
    body = _result(
        _post(
            args.server,
            "/heatmap",
            {
                "scores_csv": args.scores,
                "qe_jsonl": args.qe,
                "mode": args.mode,
                "out_dir": args.out_dir,
            },
        )
    )
    print(f"heatmap over {len(body['languages'])} languages (mode {args.mode})")
    print(f"wrote {body['csv_path']}")
    return 0


def _run_mt_select(args) -> int:
    body = _result(
        _post(
            args.server,
            "/mt-select",
            {"candidates": args.candidates, "out_dir": args.out_dir},
        )
    )
    print(f"selected {body['selected']} translations, dropped {body['dropped']} groups")
    print(f"wrote {body['selected_path']} and {body['drops_path']}")
    return 0


def _run_finetune(args) -> int:
    body = _result(
        _post(
            args.server,
            "/finetune",
            {
                "images_store": args.images,
                "texts_store": args.texts,
                "contrastive_pairs": args.contrastive_pairs,
                "rated_pairs": args.rated_pairs,
                "loss_mode": args.loss,
                "learning_rate": args.lr,
                "epochs": args.epochs,
                "batch_size": args.batch_size,
                "seed": args.seed,
                "w": args.w,
                "contrastive_weight": args.contrastive_weight,
                "pearson_weight": args.pearson_weight,
                "pearson_raw_cos": args.pearson_raw_cos,
                "export_adapted": args.export_adapted,
                "out_dir": args.out_dir,
            },
        )
    )
    losses = []
    if body["final_contrastive"] is not None:
        losses.append(f"contrastive {body['final_contrastive']:.6f}")
    if body["final_pearson"] is not None:
        losses.append(f"pearson {body['final_pearson']:.6f}")
    skipped = f", skipped {body['skipped_batches']} batches" if body["skipped_batches"] else ""
    print(f"trained {body['steps']} steps; final loss " + ", ".join(losses) + skipped)
    print(f"wrote {body['checkpoint_path']} and {body['curve_path']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    runner = {
        "score": _run_score,
        "correlate": _run_correlate,
        "task": _run_task,
        "heatmap": _run_heatmap,
        "mt-select": _run_mt_select,
        "finetune": _run_finetune,
    }[args.command]
    return runner(args)


if __name__ == "__main__":
    sys.exit(main())
