import json

import pytest

import qagen


def test_metrics():
    assert qagen.exact_match("The Eiffel Tower!", "eiffel tower") == 1
    assert qagen.f1_score("x y z", "y z w") == pytest.approx(2 / 3)
    refs = ["what is the capital of france", "who wrote the book"]
    assert qagen.bleu(refs, refs) == pytest.approx(1.0)


def test_truncate():
    out = qagen.truncate([0.5, 0.3, 0.15, 0.05], k=20, p=0.95)
    assert out == pytest.approx([0.5 / 0.95, 0.3 / 0.95, 0.15 / 0.95, 0.0])
    with pytest.raises(ValueError):
        qagen.truncate([0.5, 0.5], k=0)


def test_tokenize_round_trip():
    vocab = qagen.build_vocab(["the capital of france is paris."], 50)
    ids = qagen.tokenize("the capital of france is paris.", vocab)
    assert qagen.detokenize(ids, vocab) == "the capital of france is paris."
    assert vocab.token(2) == "</s>"


def test_scoring_and_top_m():
    pairs = []
    for i in range(10):
        p = qagen.GeneratedPair()
        p.passage_id = "p0"
        p.sample_index = i
        p.question = f"q{i}"
        p.answer = "x"
        p.answer_token_logprobs = [-0.1 * i, -0.5]
        p.question_token_logprobs = [-1.0]
        p.contained = True
        pairs.append(p)
    assert qagen.lm_score(pairs[3], "qagen2s", "sum") == pytest.approx(-0.8)
    assert qagen.lm_score(pairs[3], "aqgen", "sum") == pytest.approx(-1.8)
    kept, drops = qagen.select_top_m(pairs, 5)
    assert [p.sample_index for p in kept] == [0, 1, 2, 3, 4]
    assert drops["below_top_m"] == 5


def test_lexical_oracle_and_buckets():
    passage = "The capital of France is Paris. It sits on the Seine."
    assert qagen.lexical_oracle(passage, "What is the capital of France?") == "Paris"
    rows = qagen.bucket_analysis([(float(-i), 1.0 - i / 10) for i in range(10)], 4)
    assert [r[2] for r in rows] == [4, 4, 2]
    assert rows[0][1] >= rows[1][1] >= rows[2][1]


def test_pipeline_run(tmp_path):
    paragraphs = []
    for i, (city, country) in enumerate([("paris", "france"), ("rome", "italy"), ("oslo", "norway")]):
        ctx = f"the capital of {country} is {city}. it has a river."
        paragraphs.append({"context": ctx, "qas": [{"id": f"q{i}", "question": f"what is the capital of {country}?",
                                                    "answers": [{"text": city, "answer_start": ctx.index(city)}]}]})
    corpus = tmp_path / "train.json"
    corpus.write_text(json.dumps({"data": [{"title": "t", "paragraphs": paragraphs}]}))
    model = tmp_path / "model"
    manifest = qagen.run("train-lm", {"train_corpus": str(corpus), "mode": "qagen", "epochs": 60,
                                      "dim": 16, "ffn_dim": 32, "out": str(model)})
    assert manifest["subcommand"] == "train-lm"
    gen = tmp_path / "gen"
    cfg = {"corpus": str(corpus), "checkpoint": str(model / "model.json"), "mode": "qagen",
           "min_tokens": 5, "passage_count": 3, "seed": 7, "out": str(gen)}
    manifest = qagen.run("generate", cfg)
    assert (gen / "synthetic.json").exists()
    digests = {o["path"]: o["sha256"] for o in manifest["outputs"]}
    cfg["out"] = str(tmp_path / "gen2")
    again = qagen.run("generate", cfg)
    assert [o["sha256"] for o in again["outputs"]] == list(digests.values())
    with pytest.raises(ValueError, match="unknown config key"):
        qagen.run("generate", {"bogus": 1})
