"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or let the summary lines
surface via -rA).
"""

import functools
import json
import math
import random
import time

import numpy as np
import pytest

from anaphora_eval import miner, model as M, numerics, synthetic
from anaphora_eval.aligner import em_train, read_pharaoh, write_pharaoh
from anaphora_eval.cli import main
from anaphora_eval.corpus import (PronounLexicon, build_manifest, make_sentence,
                                  pronoun_indices, read_manifest, write_manifest)
from anaphora_eval.metrics import (NOISY_BETTER, REF_BETTER, gwet_ac1,
                                   normalize_judgments)
from anaphora_eval.miner import RankingPair, filter_pairs
from anaphora_eval.model import (ModelConfig, Parameter, build_vocab,
                                 export_attention, init_parameters,
                                 load_checkpoint, pronoun_attention,
                                 read_attention, save_checkpoint, score_side)
from anaphora_eval.trainer import TrainConfig, hinge_loss, train
from conftest import (FIG1_GOLD_LINKS, FIG1_NOISY_1, FIG1_NOISY_2, FIG1_REF,
                      FIG1_SYS)
from test_metrics import rec, two_rater_fixture

LEX = PronounLexicon.default()


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {name}: FAIL")
                raise
            print(f"ACCEPTANCE {name}: PASS")
        return wrapper
    return deco


def _random_two_pronoun_side(rng):
    fillers = ["storm", "harbour", "letters", "spoke", "waited", "near", "old"]
    pronouns = ["he", "she", "it", "they", "him", "her", "his", "their"]
    words = [str(rng.choice(fillers)) for _ in range(int(rng.integers(3, 7)))]
    for _ in range(2):
        words.insert(int(rng.integers(len(words) + 1)), str(rng.choice(pronouns)))
    sent = make_sentence("d", 0, " ".join(words) + " .")
    ctx = [make_sentence("d", 0, " ".join(str(rng.choice(fillers))
                                          for _ in range(int(rng.integers(2, 5)))))]
    return ctx, sent, pronoun_indices(sent, LEX)


@criterion("gradient-suite")
def test_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(100)
    worst = 0.0
    for encoder in ("bilstm", "average-baseline"):
        for context_mode in ("NC", "CRC"):
            for trial in range(2):
                ctx, sent, pidx = _random_two_pronoun_side(rng)
                assert len(pidx) >= 2
                side = (ctx if context_mode != "NC" else [], sent, pidx)
                vocab = build_vocab(t.lower for s in [sent] + ctx for t in s.tokens)
                cfg = ModelConfig(d=6, h=5, v=len(vocab), M=6,
                                  context_mode=context_mode, encoder=encoder)
                params = init_parameters(cfg, rng)

                def loss_fn():
                    M.zero_grads(params)
                    y, _, cache = score_side(side, cfg, params, vocab, with_cache=True)
                    M.backward_side(1.0, cache, cfg, params)
                    return y

                err = numerics.finite_diff_check(loss_fn, params, eps=1e-5)
                assert err < 1e-4, f"{encoder}/{context_mode} trial {trial}: {err}"
                worst = max(worst, err)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    print(f"  (worst rel err {worst:.2e}, {elapsed:.1f}s)", end=" ")


@criterion("attention-normalization-suite")
def test_attention_normalization_suite():
    rng = np.random.default_rng(200)
    # attention rows sum to 1 +/- 1e-6, masked rows exactly zero
    for _ in range(5):
        ctx, sent, pidx = _random_two_pronoun_side(rng)
        vocab = build_vocab(t.lower for t in sent.tokens)
        cfg = ModelConfig(d=6, h=5, v=len(vocab), M=8)
        params = init_parameters(cfg, rng)
        enc = M.encode([], sent, pidx, cfg, params, vocab)
        _, trace = pronoun_attention(enc, params)
        assert np.allclose(trace.weights[trace.slot_mask].sum(axis=1), 1.0, atol=1e-6)
        assert np.all(trace.weights[~trace.slot_mask] == 0.0)
    # layer-norm rows standardized pre-affine
    x = rng.normal(size=(12, 9)) * 3 + 1.5
    pre_affine = numerics.layer_norm(x, np.ones(9), np.zeros(9), eps=1e-10)
    assert np.allclose(pre_affine.mean(axis=1), 0.0, atol=1e-9)
    assert np.allclose(pre_affine.var(axis=1), 1.0, atol=1e-6)
    # padding invariance of y, exact, for M in {3, 12, 32}
    side = ([], *(lambda s: (s, pronoun_indices(s, LEX)))(
        make_sentence("d", 0, "He gave her his coat .")))
    vocab = build_vocab(t.lower for t in side[1].tokens)
    for encoder in ("bilstm", "average-baseline"):
        base = init_parameters(ModelConfig(d=6, h=5, v=len(vocab), M=32,
                                           encoder=encoder), np.random.default_rng(7))
        ys = set()
        for m in (3, 12, 32):
            cfg = ModelConfig(d=6, h=5, v=len(vocab), M=m, encoder=encoder)
            params = {k: Parameter.of(v.value.copy()) for k, v in base.items()}
            if encoder == "bilstm":
                params["w"] = Parameter.of(base["w"].value[:m].copy())
            ys.add(score_side(side, cfg, params, vocab)[0])
        assert len(ys) == 1, f"padding changed y for {encoder}: {ys}"


@criterion("loss-contract")
def test_loss_contract():
    rng = np.random.default_rng(300)
    for _ in range(500):
        y_r, y_s = rng.normal(size=2) * 2
        loss = hinge_loss(y_r, y_s, 0.1)
        assert loss >= 0.0
        assert (loss == 0.0) == (y_r >= y_s + 0.1)
    assert hinge_loss(0.7, 0.7, 0.1) == 0.1  # equal scores: exactly the margin


@criterion("figure1-golden")
def test_figure1_golden(tmp_path):
    ref = tmp_path / "ref.txt"
    sysf = tmp_path / "sys.txt"
    ref.write_text(FIG1_REF + "\n", encoding="utf-8")
    sysf.write_text(FIG1_SYS + "\n", encoding="utf-8")
    gold = tmp_path / "gold.pharaoh"
    write_pharaoh([FIG1_GOLD_LINKS], gold)
    out = tmp_path / "pairs.jsonl"
    assert main(["mine", "--ref", str(ref), "--sys", str(sysf), "--alignments",
                 str(gold), "--mode", "ref-vs-noisy", "--output", str(out)]) == 0
    pairs = miner.read_pairs(out)
    assert len(pairs) == 2
    # byte-exact against the published noisy candidates
    assert pairs[0].sys.encode("utf-8") == FIG1_NOISY_1.encode("utf-8")
    assert pairs[1].sys.encode("utf-8") == FIG1_NOISY_2.encode("utf-8")


@criterion("synthetic-ranking-experiment")
def test_synthetic_ranking_experiment(tmp_path):
    n = 6000
    assert n >= 5000
    # deterministic generation under the fixed seed
    head = [(p.ref, p.sys) for p in synthetic.generate_corpus(50, seed=42)]
    again = [(p.ref, p.sys) for p in synthetic.generate_corpus(50, seed=42)]
    assert head == again
    out = tmp_path / "synth"
    assert main(["synth", "--n", str(n), "--seed", "42", "--output-dir", str(out)]) == 0
    start = time.perf_counter()
    ckpt = tmp_path / "model.ckpt"
    assert main(["train", "--pairs", str(out / "train.jsonl"),
                 "--dev", str(out / "dev.jsonl"), "--output", str(ckpt),
                 "--d", "32", "--hidden", "32", "--context-mode", "NC",
                 "--encoder", "bilstm", "--epochs", "12", "--patience", "3",
                 "--seed", "0"]) == 0
    report_path = tmp_path / "report.json"
    assert main(["eval", "--checkpoint", str(ckpt), "--pairs", str(out / "test.jsonl"),
                 "--output", str(report_path)]) == 0
    elapsed = time.perf_counter() - start
    accuracy = json.loads(report_path.read_text())["accuracy"]
    assert accuracy >= 0.90, f"held-out accuracy {accuracy}"
    assert elapsed < 600.0, f"training+eval took {elapsed:.0f}s"
    print(f"  (accuracy {accuracy:.4f} in {elapsed:.0f}s)", end=" ")


@criterion("aligner-suite")
def test_aligner_suite(tmp_path):
    rnd = random.Random(77)
    # EM log-likelihood non-decreasing over 20 iterations on random toys
    for _ in range(3):
        corpus = []
        for _ in range(rnd.randint(3, 6)):
            n, m = rnd.randint(1, 5), rnd.randint(1, 5)
            corpus.append(([f"s{rnd.randrange(6)}" for _ in range(n)],
                           [f"t{rnd.randrange(6)}" for _ in range(m)]))
        model = em_train(corpus, 20, mode="model1")
        assert (np.diff(model.ll_history) >= -1e-9).all()
    # first-iteration posteriors match brute-force enumeration
    toy = [("la maison".split(), "the house".split()),
           ("la fleur".split(), "the flower".split())]
    model0 = em_train(toy, 1, mode="model1")
    uniform = 1.0 / 3
    p0 = model0.diag.null_prob
    counts = {}
    for src, tgt in toy:
        l = len(src)
        for t in tgt:
            terms = [("<null>", p0 * uniform)] + \
                    [(s, (1 - p0) / l * uniform) for s in src]
            z = sum(p for _, p in terms)
            for s, p in terms:
                counts.setdefault(s, {}).setdefault(t, 0.0)
                counts[s][t] += p / z
    for s, row in counts.items():
        total = sum(row.values())
        for t, c in row.items():
            assert abs(model0.ttable[s][t] - c / total) < 1e-9
    # Pharaoh round-trip, bit-exact
    sets = [{(0, 0), (2, 1), (1, 3)}, set(), {(4, 4)}]
    p1, p2 = tmp_path / "a.pharaoh", tmp_path / "b.pharaoh"
    write_pharaoh(sets, p1)
    write_pharaoh(read_pharaoh(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert read_pharaoh(p2) == sets


@criterion("agreement-suite")
def test_agreement_suite():
    # perfect agreement
    perfect, _ = normalize_judgments(two_rater_fixture(10, 0))
    assert gwet_ac1(perfect, [REF_BETTER, NOISY_BETTER]) == pytest.approx(1.0)
    # the 9/10 two-rater fixture
    nine, _ = normalize_judgments(two_rater_fixture(9, 1))
    assert gwet_ac1(nine, [REF_BETTER, NOISY_BETTER]) == pytest.approx(0.889, abs=1e-3)
    # category-relabel invariance
    flipped = {item: {r: (NOISY_BETTER if c == REF_BETTER else REF_BETTER)
                      for r, c in votes.items()}
               for item, votes in nine.items()}
    assert gwet_ac1(flipped, [REF_BETTER, NOISY_BETTER]) == \
        pytest.approx(gwet_ac1(nine, [REF_BETTER, NOISY_BETTER]), abs=1e-12)
    # tau = 0.8 retain/drop policy
    def pair(forms):
        return RankingPair(id="x", lang_pair="t", ref_context=[], ref="He ran .",
                           sys_context=[], sys="It ran .", ref_pronouns=[0],
                           sys_pronouns=[0], mismatch_forms=[forms])
    table = {("he", "it"): (0.95, 0.95, 135),   # retained
             ("that", "it"): (0.6, 0.9, 79),    # low agreement: dropped
             ("x", "y"): (0.9, 0.4, 25)}        # system preferred: dropped
    kept = filter_pairs([pair(("he", "it")), pair(("that", "it")), pair(("x", "y"))],
                        table, 0.8)
    assert [p.mismatch_forms[0] for p in kept] == [("he", "it")]


@criterion("train-determinism")
def test_train_determinism(tmp_path):
    pairs = synthetic.generate_corpus(30, seed=5)
    train_p, dev_p, _ = synthetic.split_corpus(pairs, seed=5)
    blobs = []
    for run in range(2):
        ckpt = tmp_path / f"m{run}.ckpt"
        log = tmp_path / f"l{run}.jsonl"
        tcfg = TrainConfig(max_epochs=3, patience=3, seed=9)
        params, vocab, cfg, _ = train(train_p, dev_p, tcfg, d=8, h=6, log_path=log)
        save_checkpoint(ckpt, cfg, vocab, params)
        blobs.append((ckpt.read_bytes(), log.read_bytes()))
    assert blobs[0][0] == blobs[1][0], "checkpoints differ"
    assert blobs[0][1] == blobs[1][1], "logs differ"


@criterion("blinding-end-to-end-service-side")
def test_blinding_service_side(tmp_path):
    # The client-driver half of this criterion lives in frontend/tests; this
    # covers the service guarantees it builds on: blinded payloads, durable
    # journal across restart, and the per-annotator permutation.
    from fastapi.testclient import TestClient

    from anaphora_eval.annotation_service import (CampaignConfig, create_app,
                                                  new_campaign_dir)
    from anaphora_eval.metrics import CHOICES

    new_campaign_dir(tmp_path / "c1", synthetic.generate_corpus(8, seed=2),
                     CampaignConfig(seed=4))
    client = TestClient(create_app(tmp_path))
    served = []
    while True:
        task = client.get("/campaigns/c1/next", params={"annotator": "a1"}).json()
        if task.get("done"):
            break
        payload = json.dumps(task).lower()
        assert "reference" not in payload and "noisy" not in payload
        assert task["choices"] == list(CHOICES)  # the five-way choice set
        served.append(task["item_id"])
        resp = client.post("/campaigns/c1/judgments",
                           json={"annotator": "a1", "item_id": task["item_id"],
                                 "choice": "A"})
        assert resp.status_code == 200
        assert "reference" not in json.dumps(resp.json()).lower()
    assert len(served) == 8 and len(set(served)) == 8  # permutation coverage
    # restart: rebuild the app over the same directory, nothing lost
    client2 = TestClient(create_app(tmp_path))
    export = [json.loads(l) for l in
              client2.get("/campaigns/c1/export").text.splitlines()]
    assert {r["item_id"] for r in export} == set(served)


@criterion("format-round-trips")
def test_format_round_trips(tmp_path):
    # ranking pairs JSONL
    pairs = synthetic.generate_corpus(12, seed=3)
    pairs[0].source_text = "ein Satz"
    pairs_path = tmp_path / "pairs.jsonl"
    miner.write_pairs(pairs, pairs_path)
    assert miner.read_pairs(pairs_path) == pairs
    # checkpoint
    vocab = build_vocab(["he", "ran", "."])
    cfg = ModelConfig(d=4, h=3, v=len(vocab))
    params = init_parameters(cfg, np.random.default_rng(0))
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, cfg, vocab, params)
    cfg2, vocab2, params2 = load_checkpoint(ckpt)
    assert cfg2 == cfg and vocab2.words == vocab.words
    assert all(np.array_equal(params2[k].value, params[k].value) for k in params)
    # attention TSV
    sent = make_sentence("d", 0, "He told her .")
    enc = M.encode([], sent, pronoun_indices(sent, LEX), cfg, params, vocab)
    _, trace = pronoun_attention(enc, params)
    attn = tmp_path / "attn.tsv"
    export_attention(trace, attn)
    surfaces, forms, weights = read_attention(attn)
    assert surfaces == trace.token_surfaces and forms == trace.slot_forms
    assert np.array_equal(weights, trace.weights[trace.slot_mask])
    # manifest TSV
    lang = tmp_path / "suite" / "German"
    lang.mkdir(parents=True)
    (lang / "wmt2014.txt").write_text("ctx a\nctx b\n", encoding="utf-8")
    manifest = build_manifest(tmp_path / "suite")
    mpath = tmp_path / "manifest.tsv"
    write_manifest(manifest, mpath)
    assert read_manifest(mpath) == manifest
