"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s`.  Every tolerance and runtime
budget is asserted here; nothing is deferred to later calibration.
"""

import itertools
import json
import math
import os
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from capeval.adapter import (
    AdapterState,
    ContrastiveBatch,
    PairedDataset,
    PearsonBatch,
    TrainConfig,
    contrastive_loss,
    pearson_loss,
    train,
)
from capeval.bootstrap import BootstrapConfig, bootstrap_std
from capeval.cli import main as cli_main
from capeval.correlation import correlate, kendall_tau_b, kendall_tau_c, spearman
from capeval.datasets import (
    FoilRecord,
    NliLabel,
    NliRecord,
    PreferenceRecord,
    TwoImageRecord,
    load_jsonl_dataset,
)
from capeval.metrics import ClipScoreConfig, clip_score, ref_clip_score, score_dataset
from capeval.mtselect import qe_percentile_mask, select_best
from capeval.store import Modality, load_store, store_from_matrix
from capeval.tasks import (
    marvl_task1,
    marvl_task2,
    pascal_pairwise,
    valse_accuracy,
    xvnli_task1,
    xvnli_task2,
    xvnli_task3,
)

from oracles import (
    bootstrap_oracle,
    brute_force_pair_counts,
    brute_force_tau_b,
    brute_force_tau_c,
    fraction_spearman,
    mp_ref_clip_score,
    pair_value_multisets,
    percentile_linear,
    vectorized_pair_counts,
)

CFG = ClipScoreConfig()
TOY = Path(__file__).resolve().parent.parent / "data" / "toy"


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _at_cosines(rng, anchors: np.ndarray, cosines: np.ndarray) -> np.ndarray:
    """Row i is a unit vector at the requested cosine with anchors[i]."""
    p = rng.standard_normal(anchors.shape)
    u = p - np.sum(p * anchors, axis=1, keepdims=True) * anchors
    u = _unit(u)
    c = cosines[:, None]
    return c * anchors + np.sqrt(np.clip(1 - c * c, 0, None)) * u


def test_metric_formula_suite():
    """clip_score clamp/bound/scale properties on 10k pairs; ref_clip_score
    vs extended-precision oracle to 1e-9 on 1k triples; < 5 s."""
    start = time.monotonic()
    rng = np.random.Generator(np.random.Philox(key=101))
    d = 16
    c = _unit(rng.standard_normal((10_000, d)))
    v = _unit(rng.standard_normal((10_000, d)))
    for i in range(10_000):
        s = clip_score(c[i], v[i], CFG)
        assert 0.0 <= s <= CFG.w
    # scale invariance is literal after store normalization
    from capeval.store import normalize_vectors

    ids = [str(i) for i in range(1000)]
    alphas = rng.uniform(0.02, 40, 1000)[:, None]
    betas = rng.uniform(0.02, 40, 1000)[:, None]
    c_scaled = normalize_vectors(c[:1000] * alphas, ids)
    v_scaled = normalize_vectors(v[:1000] * betas, ids)
    for i in range(1000):
        assert clip_score(c_scaled[i], v_scaled[i], CFG) == pytest.approx(
            clip_score(c[i], v[i], CFG), abs=1e-6
        )
    refs = _unit(rng.standard_normal((1000, 3, d)).reshape(-1, d)).reshape(1000, 3, d)
    for i in range(1000):
        got = ref_clip_score(c[i], list(refs[i]), v[i], CFG)
        want = mp_ref_clip_score(c[i], list(refs[i]), v[i], CFG.w)
        assert got == pytest.approx(want, abs=1e-9)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"metric suite took {elapsed:.1f}s"
    print(f"[PASS] metric formula suite ({elapsed:.1f}s)")


def test_correlation_oracle_equivalence():
    """tau_b/tau_c/rho vs O(n^2) and exact-rank oracles: exhaustive over all
    n <= 8 multisets of value pairs from {1,2,3} (covering every sequence up
    to index permutation, an invariance tested elsewhere), plus 1,000 random
    n = 200 tied lists at 1e-12, plus the hand-derived tied case; < 60 s."""
    start = time.monotonic()
    tau, counts = kendall_tau_b([1, 1, 2], [1, 2, 2])
    assert tau == pytest.approx(0.5, abs=0)
    assert kendall_tau_c([1, 1, 2], [1, 2, 2], m=2) == pytest.approx(4 / 9, abs=1e-15)

    from capeval.correlation import pair_counts

    checked = 0
    for n in range(2, 9):
        for x, y in pair_value_multisets(n):
            want = brute_force_pair_counts(x, y)
            got = pair_counts(x, y)
            assert (got.n_c, got.n_d, got.n_1, got.n_2) == (
                want["n_c"], want["n_d"], want["n_1"], want["n_2"],
            )
            if (want["n_0"] - want["n_1"]) * (want["n_0"] - want["n_2"]) > 0:
                assert kendall_tau_b(x, y)[0] == brute_force_tau_b(x, y)
                assert kendall_tau_c(x, y, 3) == brute_force_tau_c(x, y, 3)
            if len(set(x)) > 1 and len(set(y)) > 1:
                assert spearman(x, y) == pytest.approx(fraction_spearman(x, y), abs=1e-13)
            checked += 1
    assert checked == 24_300  # sum of C(n+8, 8) for n = 2..8

    rng = np.random.Generator(np.random.Philox(key=202))
    for _ in range(1000):
        x = rng.integers(0, 30, 200).astype(float)
        y = rng.integers(1, 9, 200).astype(float)
        want = vectorized_pair_counts(x, y)
        report = correlate(x, y, m=8)
        assert (report.n_c, report.n_d, report.n_1, report.n_2) == (
            want["n_c"], want["n_d"], want["n_1"], want["n_2"],
        )
        tau_b_oracle = (want["n_c"] - want["n_d"]) / math.sqrt(
            (want["n_0"] - want["n_1"]) * (want["n_0"] - want["n_2"])
        )
        tau_c_oracle = ((want["n_c"] - want["n_d"]) / want["n_0"]) * (199 / 200) * (8 / 7)
        assert report.tau_b == pytest.approx(tau_b_oracle, abs=1e-12)
        assert report.tau_c == pytest.approx(tau_c_oracle, abs=1e-12)
        assert report.rho == pytest.approx(fraction_spearman(x.tolist(), y.tolist()), abs=1e-12)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"correlation suite took {elapsed:.1f}s"
    print(f"[PASS] correlation oracle equivalence ({elapsed:.1f}s, {checked} exhaustive cases)")


class _Row:
    __slots__ = ("rating", "language", "clipscore")

    def __init__(self, rating, language, clipscore):
        self.rating = rating
        self.language = language
        self.clipscore = clipscore


def test_bootstrap_determinism_and_speed():
    """Identical (mean, std) across 1/2/8 workers; constant statistic has
    exactly zero std; 1,000 iterations over 5,000 records in < 30 s."""
    rng = np.random.Generator(np.random.Philox(key=303))
    rows = [
        _Row(float(rng.integers(1, 5)), "en", float(rng.uniform(0, 2.5)))
        for _ in range(5000)
    ]

    def mean_clip(subset):
        return float(np.mean([r.clipscore for r in subset]))

    cfg = BootstrapConfig(iterations=1000, fraction=0.8, seed=7)
    start = time.monotonic()
    results = [bootstrap_std(rows, mean_clip, cfg, jobs=j) for j in (1, 2, 8)]
    elapsed = time.monotonic() - start
    assert results[0] == results[1] == results[2]
    assert elapsed < 30.0 * 3, f"bootstrap took {elapsed:.1f}s for three runs"

    single = time.monotonic()
    bootstrap_std(rows, mean_clip, cfg, jobs=1)
    single = time.monotonic() - single
    assert single < 30.0, f"single bootstrap run took {single:.1f}s"

    mean, std = bootstrap_std(rows, lambda s: 42.0, cfg)
    assert (mean, std) == (42.0, 0.0)

    small = rows[:100]
    got = bootstrap_std(small, mean_clip, BootstrapConfig(iterations=200, seed=7))
    want = bootstrap_oracle(small, mean_clip, 200, 0.8, 7, "rating_value")
    assert got == want
    print(f"[PASS] bootstrap determinism ({single:.1f}s for 1000x5000)")


def test_task_harness_geometry_suite():
    """Forced orderings give accuracy 1.0 on every task; randomly labeled
    captions drawn at iid positive cosines (labels carry no information,
    scores continuous so the clamp never ties) land within 3 sigma of each
    task's chance level over 10,000 instances."""
    start = time.monotonic()
    rng = np.random.Generator(np.random.Philox(key=404))
    d = 16
    n = 10_000

    images = _unit(rng.standard_normal((n, d)))
    good = _at_cosines(rng, images, 0.8 + rng.uniform(-0.05, 0.05, n))
    mid = _at_cosines(rng, images, 0.5 + rng.uniform(-0.05, 0.05, n))
    bad = _at_cosines(rng, images, 0.2 + rng.uniform(-0.05, 0.05, n))
    rand_a = _at_cosines(rng, images, rng.uniform(0.05, 0.95, n))
    rand_b = _at_cosines(rng, images, rng.uniform(0.05, 0.95, n))
    rand_c = _at_cosines(rng, images, rng.uniform(0.05, 0.95, n))
    images_store = store_from_matrix([f"v{i}" for i in range(n)], images, Modality.IMAGE)
    text_ids, text_rows = [], []
    for prefix, rows in (
        ("g", good), ("m", mid), ("b", bad), ("ra", rand_a), ("rb", rand_b), ("rc", rand_c),
    ):
        text_ids += [f"{prefix}{i}" for i in range(n)]
        text_rows.append(rows)
    texts = store_from_matrix(text_ids, np.vstack(text_rows), Modality.TEXT)

    def within_3_sigma(accuracy, p, trials):
        return abs(accuracy - p) <= 3 * math.sqrt(p * (1 - p) / trials)

    # VALSE
    forced = [FoilRecord(f"v{i}", f"g{i}", f"b{i}", "phen", "en") for i in range(n)]
    assert valse_accuracy(forced, images_store, texts, CFG)["en"].accuracy == 1.0
    random_foils = [FoilRecord(f"v{i}", f"ra{i}", f"rb{i}", "phen", "en") for i in range(n)]
    acc = valse_accuracy(random_foils, images_store, texts, CFG)["en"].accuracy
    assert within_3_sigma(acc, 0.5, n), f"valse random accuracy {acc}"

    # XVNLI: one caption per label per image
    forced_nli, random_nli = [], []
    for i in range(n):
        forced_nli.append(NliRecord(f"v{i}", f"g{i}", NliLabel.ENTAILMENT, "en"))
        forced_nli.append(NliRecord(f"v{i}", f"b{i}", NliLabel.CONTRADICTION, "en"))
        random_nli.append(NliRecord(f"v{i}", f"ra{i}", NliLabel.ENTAILMENT, "en"))
        random_nli.append(NliRecord(f"v{i}", f"rb{i}", NliLabel.CONTRADICTION, "en"))
    assert xvnli_task1(forced_nli, images_store, texts, CFG)["en"].accuracy == 1.0
    acc = xvnli_task1(random_nli, images_store, texts, CFG)["en"].accuracy
    assert within_3_sigma(acc, 0.5, n), f"xvnli1 random accuracy {acc}"

    forced_nli3 = forced_nli + [
        NliRecord(f"v{i}", f"m{i}", NliLabel.NEUTRAL, "en") for i in range(n)
    ]
    random_nli3 = random_nli + [
        NliRecord(f"v{i}", f"rc{i}", NliLabel.NEUTRAL, "en") for i in range(n)
    ]
    assert xvnli_task2(forced_nli3, images_store, texts, CFG)["en"].accuracy == 1.0
    assert xvnli_task3(forced_nli3, images_store, texts, CFG)["en"].accuracy == 1.0
    acc2 = xvnli_task2(random_nli3, images_store, texts, CFG)["en"].accuracy
    assert within_3_sigma(acc2, 0.5, 3 * n), f"xvnli2 random accuracy {acc2}"
    acc3 = xvnli_task3(random_nli3, images_store, texts, CFG)["en"].accuracy
    assert within_3_sigma(acc3, 1 / 6, n), f"xvnli3 random accuracy {acc3}"

    elapsed = time.monotonic() - start
    print(f"[PASS] task geometry suite: valse/xvnli ({elapsed:.1f}s)")


def test_task_harness_marvl_pascal_chance_levels():
    """MaRVL chance levels derived by exhaustive rank enumeration; preference
    task sits at one half; forced variants are perfect."""
    start = time.monotonic()
    rng = np.random.Generator(np.random.Philox(key=505))
    d = 16
    n = 10_000

    # chance level for task 1: max of two iid beats min of two iid
    hits = 0
    for perm in itertools.permutations(range(4)):
        if max(perm[0], perm[1]) > min(perm[2], perm[3]):
            hits += 1
    p1 = hits / math.factorial(4)
    assert p1 == pytest.approx(5 / 6)
    # chance level for task 2 over 8 iid scores
    hits = 0
    for perm in itertools.permutations(range(8)):
        t = min(max(perm[0], perm[1]), max(perm[2], perm[3]))
        f = max(min(perm[4], perm[5]), min(perm[6], perm[7]))
        if t > f:
            hits += 1
    p2 = hits / math.factorial(8)

    captions = _unit(rng.standard_normal((n, d)))
    cap_ids = [f"cap{i}" for i in range(n)]
    texts = store_from_matrix(cap_ids, captions, Modality.TEXT)

    # forced: true images near the caption, false images far; random images at
    # iid positive cosines so scores are continuous iid and labels uninformative
    near = _at_cosines(rng, captions, rng.uniform(0.7, 0.9, n))
    far1 = _at_cosines(rng, captions, rng.uniform(0.05, 0.25, n))
    far2 = _at_cosines(rng, captions, rng.uniform(0.05, 0.25, n))
    near2 = _at_cosines(rng, captions, rng.uniform(0.7, 0.9, n))
    image_ids, image_rows = [], []
    for i in range(n):
        image_ids += [f"n1-{i}", f"n2-{i}", f"f1-{i}", f"f2-{i}"]
        image_rows += [near[i], near2[i], far1[i], far2[i]]
    for k in range(8):
        rand_k = _at_cosines(rng, captions, rng.uniform(0.05, 0.95, n))
        image_ids += [f"r{k}-{i}" for i in range(n)]
        image_rows += list(rand_k)
    images = store_from_matrix(image_ids, np.asarray(image_rows), Modality.IMAGE)

    forced_groups, random_groups = [], []
    for i in range(n):
        forced_groups += [
            TwoImageRecord(f"fg{i}", f"cap{i}", f"n1-{i}", f"f1-{i}", True, "en"),
            TwoImageRecord(f"fg{i}", f"cap{i}", f"n2-{i}", f"f2-{i}", False, "en"),
        ]
        random_groups += [
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r0-{i}", f"r1-{i}", True, "en"),
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r2-{i}", f"r3-{i}", False, "en"),
        ]
    # forced task1: best true image (cos ~0.8) beats worst false image (~0.15)
    assert marvl_task1(forced_groups, images, texts, CFG)["en"].accuracy == 1.0
    acc = marvl_task1(random_groups, images, texts, CFG)["en"].accuracy
    assert abs(acc - p1) <= 3 * math.sqrt(p1 * (1 - p1) / n), f"marvl1 random {acc}"

    forced4, random4 = [], []
    for i in range(n):
        forced4 += [
            TwoImageRecord(f"fg{i}", f"cap{i}", f"n1-{i}", f"f1-{i}", True, "en"),
            TwoImageRecord(f"fg{i}", f"cap{i}", f"n2-{i}", f"f2-{i}", True, "en"),
            TwoImageRecord(f"fg{i}", f"cap{i}", f"f1-{i}", f"f2-{i}", False, "en"),
            TwoImageRecord(f"fg{i}", f"cap{i}", f"f2-{i}", f"f1-{i}", False, "en"),
        ]
        random4 += [
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r0-{i}", f"r1-{i}", True, "en"),
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r2-{i}", f"r3-{i}", True, "en"),
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r4-{i}", f"r5-{i}", False, "en"),
            TwoImageRecord(f"rg{i}", f"cap{i}", f"r6-{i}", f"r7-{i}", False, "en"),
        ]
    assert marvl_task2(forced4, images, texts, CFG)["en"].accuracy == 1.0
    acc = marvl_task2(random4, images, texts, CFG)["en"].accuracy
    assert abs(acc - p2) <= 3 * math.sqrt(p2 * (1 - p2) / n), f"marvl2 random {acc} vs {p2}"

    # Pascal pairwise at chance with candidates at iid positive cosines
    pref_images = _unit(rng.standard_normal((n, d)))
    a = _at_cosines(rng, pref_images, rng.uniform(0.05, 0.95, n))
    b = _at_cosines(rng, pref_images, rng.uniform(0.05, 0.95, n))
    ids_img = [f"pv{i}" for i in range(n)]
    p_images = store_from_matrix(ids_img, pref_images, Modality.IMAGE)
    p_texts = store_from_matrix(
        [f"pa{i}" for i in range(n)] + [f"pb{i}" for i in range(n)],
        np.vstack([a, b]),
        Modality.TEXT,
    )
    prefs = [
        PreferenceRecord(f"pv{i}", f"pa{i}", f"pb{i}", "HC", 30, 18, ())
        for i in range(n)
    ]
    acc = pascal_pairwise(prefs, p_images, p_texts, CFG, seed=1).accuracy
    assert abs(acc - 0.5) <= 3 * math.sqrt(0.25 / n), f"pascal random {acc}"

    elapsed = time.monotonic() - start
    print(f"[PASS] task geometry suite: marvl/pascal (chance {p2:.4f}, {elapsed:.1f}s)")


def test_loss_and_gradient_suite():
    """Closed-form loss values to 1e-9, ln N uniform case, Pearson endpoints,
    and finite-difference agreement at 10 random states; < 10 s."""
    start = time.monotonic()
    state = AdapterState.identity(2, tau=1.0)
    loss, _ = contrastive_loss(state, ContrastiveBatch(np.eye(2), np.eye(2)))
    assert loss == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-9)

    row = np.array([1.0, 0.0, 0.0])
    batch = ContrastiveBatch(np.tile(row, (7, 1)), np.tile(row, (7, 1)))
    loss, _ = contrastive_loss(AdapterState.identity(3, tau=0.3), batch)
    assert loss == pytest.approx(math.log(7), abs=1e-12)

    rng = np.random.Generator(np.random.Philox(key=606))
    from test_adapter import batch_with_cosines, finite_difference_grads, random_state, rel_err

    y = np.array([1.0, 2.0, 3.0, 4.0])
    images, texts = batch_with_cosines(rng, (y / 5).tolist())
    loss, _ = pearson_loss(AdapterState.identity(6), PearsonBatch(images, texts, y), CFG)
    assert loss == pytest.approx(0.0, abs=1e-9)
    images, texts = batch_with_cosines(rng, ((5 - y) / 5).tolist())
    loss, _ = pearson_loss(AdapterState.identity(6), PearsonBatch(images, texts, y), CFG)
    assert loss == pytest.approx(2.0, abs=1e-9)

    checked = 0
    for k in range(10):
        st = random_state(rng, 5)
        if k % 2 == 0:
            cb = ContrastiveBatch(
                _unit(rng.standard_normal((4, 5))), _unit(rng.standard_normal((4, 5)))
            )
            _, grads = contrastive_loss(st, cb)
            fd = finite_difference_grads(lambda s: contrastive_loss(s, cb)[0], st)
            assert rel_err(grads.log_tau, fd["log_tau"]) <= 1e-4
        else:
            pb = PearsonBatch(
                _unit(rng.standard_normal((6, 5))),
                _unit(rng.standard_normal((6, 5))),
                rng.uniform(1, 5, 6),
            )
            _, grads = pearson_loss(st, pb, CFG, raw_cos=True)
            fd = finite_difference_grads(lambda s: pearson_loss(s, pb, CFG, raw_cos=True)[0], st)
        assert rel_err(grads.w_text, fd["w_text"]) <= 1e-4
        assert rel_err(grads.w_image, fd["w_image"]) <= 1e-4
        checked += 1
    assert checked == 10
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"loss suite took {elapsed:.1f}s"
    print(f"[PASS] loss/gradient suite ({elapsed:.1f}s)")


def _training_corpus(seed, n=500, d=64, noise=0.25):
    rng = np.random.Generator(np.random.Philox(key=seed))
    imgs = _unit(rng.standard_normal((n, d)))
    cos = rng.uniform(0.05, 0.95, n)
    texts_rows = _at_cosines(rng, imgs, cos)
    ratings = 1 + 3 * cos + noise * rng.standard_normal(n)
    ids = tuple(f"i{k:04d}" for k in range(n))
    return PairedDataset(ids, imgs, texts_rows, ratings)


def test_training_smoke():
    """Combined schedule on 500 instances at d = 64: batch Pearson correlation
    strictly improves from first to last epoch, contrastive loss drops, and a
    fixed seed reruns bit-identically; < 60 s."""
    start = time.monotonic()
    data = _training_corpus(11)
    seed_rng = np.random.Generator(np.random.Philox(key=77))
    start_state = AdapterState.identity(64)
    start_state.w_text = np.eye(64) + 0.3 * seed_rng.standard_normal((64, 64))
    start_state.w_image = np.eye(64) + 0.3 * seed_rng.standard_normal((64, 64))

    cfg = TrainConfig(learning_rate=0.1, epochs=5, batch_size=32, seed=2, loss_mode="combined")
    result = train(start_state.copy(), data, data, cfg)
    per_epoch = len(result.curve) // cfg.epochs
    first, last = result.curve[:per_epoch], result.curve[-per_epoch:]
    c_first = float(np.mean([p.contrastive for p in first]))
    c_last = float(np.mean([p.contrastive for p in last]))
    r_first = 1 - float(np.mean([p.pearson for p in first]))
    r_last = 1 - float(np.mean([p.pearson for p in last]))
    assert r_last > r_first, f"batch Pearson r did not improve: {r_first} -> {r_last}"
    assert c_last < c_first, f"contrastive loss did not drop: {c_first} -> {c_last}"

    again = train(start_state.copy(), data, data, cfg)
    assert np.array_equal(result.state.w_text, again.state.w_text)
    assert np.array_equal(result.state.w_image, again.state.w_image)
    assert result.state.log_tau == again.state.log_tau
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"training smoke took {elapsed:.1f}s"
    print(
        f"[PASS] training smoke (r {r_first:.3f}->{r_last:.3f}, "
        f"contrastive {c_first:.3f}->{c_last:.3f}, {elapsed:.1f}s)"
    )


def test_mt_selection_and_percentiles():
    """Filter-then-argmax, tie-break, drop report on table cases; percentile
    masks equal a sort-based oracle on 1,000 random QE vectors."""
    from capeval.datasets import MtCandidate

    def cand(cid, ok, qe, source="s0"):
        return MtCandidate(source, "de", cid, "text", ok, qe)

    table = [
        ([cand("a", True, 0.8), cand("b", False, 0.95), cand("c", True, 0.6)], "a"),
        ([cand("b", True, 0.7), cand("a", True, 0.7)], "a"),
        ([cand("x", True, 0.1), cand("y", True, 0.1000001)], "y"),
    ]
    for candidates, expected in table:
        report = select_best(candidates)
        assert report.selected[("s0", "de")].candidate_id == expected
    dropped = select_best([cand("a", False, 0.9), cand("b", False, 0.8)])
    assert len(dropped.dropped) == 1 and dropped.dropped[0].n_candidates == 2

    rng = np.random.Generator(np.random.Philox(key=808))
    for _ in range(1000):
        n = int(rng.integers(4, 120))
        qe = rng.uniform(0, 1, n)
        lo = percentile_linear(qe, 25)
        hi = percentile_linear(qe, 75)
        np.testing.assert_array_equal(qe_percentile_mask(qe, 25, "below"), qe < lo)
        np.testing.assert_array_equal(qe_percentile_mask(qe, 25, "above"), qe > hi)
    print("[PASS] mt selection and percentile masks")


def _golden_flow(out_root: Path) -> list[Path]:
    """score -> correlate -> all tasks -> mt-select -> heatmap, fixed seed."""
    def cli(*argv):
        code = cli_main(list(argv))
        assert code == 0, f"cli {argv} exited {code}"

    s = out_root / "score"
    cli("score", "--images", str(TOY / "images.capevec"), "--texts", str(TOY / "texts.capevec"),
        "--pairs", str(TOY / "pairs.jsonl"), "--out-dir", str(s))
    cli("correlate", "--scores", str(s / "scores.csv"), "--pairs", str(TOY / "pairs.jsonl"),
        "--bootstrap", "--boot-iters", "50", "--seed", "7", "--jobs", "2",
        "--out-dir", str(out_root / "corr"))
    for variant, dataset in (("valse", "foils.jsonl"), ("xvnli", "nli.jsonl"),
                             ("marvl", "marvl.jsonl"), ("pascal", "prefs.jsonl")):
        cli("task", variant, "--dataset", str(TOY / dataset),
            "--images", str(TOY / "images.capevec"), "--texts", str(TOY / "texts.capevec"),
            "--seed", "7", "--out-dir", str(out_root / variant))
    cli("mt-select", "--candidates", str(TOY / "mt.jsonl"), "--out-dir", str(out_root / "mt"))
    cli("heatmap", "--scores", str(s / "scores.csv"), "--mode", "all",
        "--out-dir", str(out_root / "hm-all"))
    cli("heatmap", "--scores", str(s / "scores.csv"), "--qe", str(out_root / "mt" / "selected.jsonl"),
        "--mode", "bottom25", "--out-dir", str(out_root / "hm-b25"))
    return sorted(p for p in out_root.rglob("*") if p.is_file())


def test_end_to_end_cli_golden_run(tmp_path, capsys):
    """The checked-in toy bundle flows through the full pipeline twice into
    the same directory, producing byte-identical outputs, with manifest
    digests matching the emitted files."""
    out_root = tmp_path / "run"
    files = _golden_flow(out_root)
    assert len(files) >= 16
    snapshot = {p: p.read_bytes() for p in files}

    from capeval.runio import sha256_file

    for manifest_path in out_root.rglob("manifest.json"):
        manifest = json.loads(manifest_path.read_text())
        for output, digest in manifest["outputs"].items():
            assert sha256_file(output) == digest

    shutil.rmtree(out_root)
    files_again = _golden_flow(out_root)
    assert files_again == files
    for p in files_again:
        assert p.read_bytes() == snapshot[p], f"{p} changed between runs"
    capsys.readouterr()
    print(f"[PASS] end-to-end golden run ({len(files)} byte-stable files)")


@pytest.mark.skipif(
    "CAPEVAL_REAL_EMBEDDINGS" not in os.environ,
    reason="set CAPEVAL_REAL_EMBEDDINGS to a directory with real exported "
    "stores (images.capevec, texts.capevec, pairs.jsonl) to run the "
    "direction-of-effect reproduction",
)
def test_direction_of_effect_with_real_checkpoint():
    """With real exported embeddings: tau_b for CLIPScore exceeds 0.45 and
    RefCLIPScore correlates at least as well as CLIPScore."""
    root = Path(os.environ["CAPEVAL_REAL_EMBEDDINGS"])
    images = load_store(root / "images.capevec")
    texts = load_store(root / "texts.capevec")
    pairs = load_jsonl_dataset(root / "pairs.jsonl", "rated-pair")
    records = score_dataset(pairs, images, texts, CFG)
    ratings = [p.rating for p in pairs]
    tau_clip, _ = kendall_tau_b([r.clipscore for r in records], ratings)
    assert tau_clip > 0.45
    scored_refs = [r.refclipscore for r in records if r.refclipscore is not None]
    if len(scored_refs) == len(records):
        tau_ref, _ = kendall_tau_b(scored_refs, ratings)
        assert tau_ref >= tau_clip
    print(f"[PASS] direction-of-effect (tau_b={tau_clip:.3f})")
