import hashlib
import json
from pathlib import Path

import pytest

import mockcorpus
from synthpqa import annotation, cli, corpus, pipeline


def run_cli(*argv) -> int:
    return cli.main([str(a) for a in argv])


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    """Run the whole pipeline once over a small corpus; return artifact paths."""
    root = tmp_path_factory.mktemp("pipe")
    raw = mockcorpus.write_corpus(root / "raw", n_questions=30, seed=7)
    p = {"root": root}

    p["corpus"] = root / "corpus"
    assert run_cli("ingest", "--questions", raw["questions"], "--answers", raw["answers"],
                   "--qrels", raw["qrels"], "--out-dir", p["corpus"],
                   "--validate-qrels") == 0
    p["questions"] = p["corpus"] / "questions.jsonl"
    p["answers"] = p["corpus"] / "answers.jsonl"
    p["qrels"] = p["corpus"] / "qrels.txt"

    p["profiles"] = root / "profiles.json"
    assert run_cli("profiles", "--questions", p["questions"], "--out", p["profiles"]) == 0

    p["prompts"] = root / "prompts.jsonl"
    assert run_cli("prompts", "--questions", p["questions"], "--profiles", p["profiles"],
                   "--out", p["prompts"]) == 0

    p["generated"] = root / "generated.jsonl"
    assert run_cli("generate", "--prompts", p["prompts"], "--mock-llm",
                   "--model", "test-model", "--cache-dir", root / "cache",
                   "--out", p["generated"]) == 0

    p["index"] = root / "bm25.index"
    assert run_cli("index", "--answers", p["answers"], "--answers", p["generated"],
                   "--out", p["index"]) == 0

    p["bm25_run"] = root / "bm25.run"
    assert run_cli("search", "--index", p["index"], "--questions", p["questions"],
                   "--k", 50, "--out", p["bm25_run"]) == 0

    p["checkpoint"] = root / "encoder.json"
    assert run_cli("train", "--questions", p["questions"], "--answers", p["answers"],
                   "--qrels", p["qrels"], "--epochs", 2, "--batch-size", 8,
                   "--hash-dim", 2048, "--emb-dim", 16,
                   "--out", p["checkpoint"]) == 0

    p["neural_run"] = root / "neural.run"
    assert run_cli("rerank", "--run", p["bm25_run"], "--questions", p["questions"],
                   "--answers", p["answers"], "--answers", p["generated"],
                   "--checkpoint", p["checkpoint"], "--out", p["neural_run"]) == 0

    p["lambda_tsv"] = root / "lambda.tsv"
    p["fused_run"] = root / "fused.run"
    assert run_cli("tune-lambda", "--bm25-run", p["bm25_run"],
                   "--neural-run", p["neural_run"], "--qrels", p["qrels"],
                   "--fused-out", p["fused_run"], "--out", p["lambda_tsv"]) == 0

    p["eval"] = root / "eval.json"
    assert run_cli("evaluate", "--run", p["fused_run"], "--qrels", p["qrels"],
                   "--out", p["eval"]) == 0

    p["compare_md"] = root / "compare.md"
    p["compare_tsv"] = root / "compare.tsv"
    assert run_cli("compare", "--qrels", p["qrels"],
                   "--baseline", f"bm25={p['bm25_run']}",
                   "--candidate", f"fused={p['fused_run']}",
                   "--candidate", f"neural={p['neural_run']}",
                   "--lambda", "fused=0.5",
                   "--out-md", p["compare_md"], "--out-tsv", p["compare_tsv"]) == 0

    p["div_md"] = root / "diversity.md"
    p["div_tsv"] = root / "diversity.tsv"
    assert run_cli("diversity", "--questions", p["questions"],
                   "--answers", p["generated"],
                   "--out-md", p["div_md"], "--out-tsv", p["div_tsv"]) == 0

    p["overlap"] = root / "overlap.tsv"
    assert run_cli("overlap", "--questions", p["questions"],
                   "--answers", p["answers"], "--answers", p["generated"],
                   "--out", p["overlap"]) == 0

    p["ann_sample"] = root / "sample.json"
    assert run_cli("annotate", "sample", "--questions", p["questions"],
                   "--answers", p["answers"], "--answers", p["generated"],
                   "-n", 12, "--out", p["ann_sample"]) == 0
    return p


def test_ingest_artifacts_and_manifest(pipe):
    for key in ("questions", "answers", "qrels"):
        assert pipe[key].exists() and pipe[key].stat().st_size > 0
    manifest = json.loads((pipe["corpus"] / "manifest.json").read_text())
    assert manifest["command"] == "ingest"
    assert manifest["params"] == {"validate_qrels": True}
    assert manifest["outputs"]["questions"]["sha256"] == sha256(pipe["questions"])
    assert all(len(entry["sha256"]) == 64 for entry in manifest["inputs"].values())


def test_profiles_format(pipe):
    doc = json.loads(pipe["profiles"].read_text())
    assert doc["format"] == "synthpqa-profiles"
    questions = corpus.read_questions(pipe["questions"])
    assert set(doc["profiles"]) == {q.user_id for q in questions}
    assert all(isinstance(tags, list) for tags in doc["profiles"].values())


def test_prompts_cover_every_question_and_type(pipe):
    lines = [json.loads(l) for l in pipe["prompts"].read_text().splitlines()]
    questions = corpus.read_questions(pipe["questions"])
    assert len(lines) == 3 * len(questions)
    seen = {(l["question_id"], l["prompt_type"]) for l in lines}
    assert len(seen) == len(lines)
    assert {l["prompt_type"] for l in lines} == {"basic", "personalized", "contextual"}


def test_generate_writes_answer_records(pipe):
    answers = corpus.read_answers(pipe["generated"])
    prompts = pipe["prompts"].read_text().splitlines()
    assert len(answers) == len(prompts)
    assert all(a.source == "generated" and a.model_name == "test-model" for a in answers)
    manifest = json.loads(Path(str(pipe["generated"]) + ".manifest.json").read_text())
    assert manifest["params"]["mock"] is True
    assert manifest["params"]["failures"] == 0


def test_search_run_is_valid_trec(pipe):
    run = pipeline.read_run(pipe["bm25_run"])
    questions = {q.id for q in corpus.read_questions(pipe["questions"])}
    assert set(run) <= questions
    assert all(len(ranking) <= 50 for ranking in run.values())
    first_line = pipe["bm25_run"].read_text().splitlines()[0].split()
    assert len(first_line) == 6 and first_line[1] == "Q0" and first_line[3] == "1"


def test_train_manifest_records_loss_curve(pipe):
    manifest = json.loads(Path(str(pipe["checkpoint"]) + ".manifest.json").read_text())
    assert manifest["params"]["epochs"] == 2
    assert len(manifest["params"]["epoch_mean_loss"]) == 2
    assert manifest["params"]["pool"] == "human"


def test_rerank_preserves_candidates(pipe):
    first = pipeline.read_run(pipe["bm25_run"])
    second = pipeline.read_run(pipe["neural_run"])
    assert set(first) == set(second)
    for qid in first:
        assert {d for d, _ in first[qid]} == {d for d, _ in second[qid]}


def test_tune_lambda_table_shape(pipe):
    lines = pipe["lambda_tsv"].read_text().strip().splitlines()
    assert lines[0] == "lambda\tndcg@10"
    assert len(lines) == 13  # header + 11 grid rows + best marker
    assert lines[-1].startswith("# best_lambda\t")
    assert pipe["fused_run"].exists()


def test_evaluate_report_contents(pipe, capsys):
    doc = json.loads(pipe["eval"].read_text())
    assert set(doc["metrics"]) == {"P@1", "NDCG@3", "NDCG@10", "MAP@100"}
    assert set(doc["means"]) == set(doc["metrics"])
    assert len(doc["evaluated_queries"]) > 0
    assert run_cli("evaluate", "--run", pipe["fused_run"], "--qrels", pipe["qrels"],
                   "--out", pipe["root"] / "eval2.json") == 0
    out = capsys.readouterr().out
    assert "NDCG@10\t" in out and "P@1\t" in out


def test_compare_tables(pipe):
    md = pipe["compare_md"].read_text()
    assert "bm25" in md and "fused" in md and "neural" in md
    assert "0.5" in md  # the declared fusion weight column
    tsv = pipe["compare_tsv"].read_text()
    assert tsv.splitlines()[0].startswith("run\t")


def test_diversity_tables(pipe):
    md = pipe["div_md"].read_text()
    assert "basic vs contextual" in md
    tsv = [l.split("\t") for l in pipe["div_tsv"].read_text().splitlines()]
    assert tsv[0][:3] == ["model", "hyp_prompt", "ref_prompt"]
    model_rows = [r for r in tsv if r[0] == "test-model" and len(r) == 5]
    assert len(model_rows) == 3  # one per prompt-strategy pair


def test_overlap_table(pipe):
    lines = pipe["overlap"].read_text().splitlines()
    assert lines[0] == "model\tprompt\tn\tmean_overlap_pct"
    labels = {tuple(l.split("\t")[:2]) for l in lines[1:]}
    assert ("human", "none") in labels
    assert ("test-model", "basic") in labels


def test_annotate_sample_artifact(pipe):
    sample = annotation.load_sample(pipe["ann_sample"])
    assert len(sample.items) == 12
    communities = {item.community for item in sample.items}
    assert communities == {"cooking", "travel", "boardgames"}


def test_annotate_report_counts_rates(pipe, tmp_path, capsys):
    sample = annotation.load_sample(pipe["ann_sample"])
    pairs = [(item.question_id, ans.answer_id)
             for item in sample.items for ans in item.answers][:5]
    store = annotation.LabelStore(tmp_path / "labels.jsonl")
    labels = ["hallucinated", "hallucinated", "correct", "correct", "correct"]
    for (qid, aid), label in zip(pairs, labels):
        store.append(annotation.AnnotationRecord(
            annotator="ann", question_id=qid, answer_id=aid,
            model_name="test-model", prompt_type="basic", label=label))
    out = tmp_path / "report.json"
    assert run_cli("annotate", "report", "--store", tmp_path / "labels.jsonl",
                   "--sample", pipe["ann_sample"], "--out", out) == 0
    report = json.loads(out.read_text())
    row = report["by_model"]["test-model"]
    assert row["judged"] == 5 and row["hallucinated"] == 2
    assert row["hallucination_rate_pct"] == pytest.approx(40.0)
    assert "40.0%" in capsys.readouterr().out


# --- flags, config, and failure modes -------------------------------------------

def test_sample_command_caps_per_community(pipe, tmp_path):
    out = tmp_path / "sampled.jsonl"
    assert run_cli("sample", "--questions", pipe["questions"], "--cap", 4,
                   "--out", out) == 0
    sampled = corpus.read_questions(out)
    per = {}
    for q in sampled:
        per[q.community] = per.get(q.community, 0) + 1
    assert all(n <= 4 for n in per.values())
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["params"] == {"cap": 4, "seed": 42}


def test_config_file_supplies_defaults_flags_override(pipe, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"bm25": {"k1": 0.9}}))
    out1 = tmp_path / "a.run"
    assert run_cli("--config", config, "search", "--index", pipe["index"],
                   "--questions", pipe["questions"], "--out", out1) == 0
    m1 = json.loads(Path(str(out1) + ".manifest.json").read_text())
    assert m1["params"]["k1"] == 0.9
    out2 = tmp_path / "b.run"
    assert run_cli("--config", config, "search", "--index", pipe["index"],
                   "--questions", pipe["questions"], "--k1", 1.2, "--out", out2) == 0
    m2 = json.loads(Path(str(out2) + ".manifest.json").read_text())
    assert m2["params"]["k1"] == 1.2


def test_seed_flag_changes_sample(pipe, tmp_path):
    outs = {}
    for seed in (1, 1, 2):
        out = tmp_path / f"s{seed}_{len(outs)}.json"
        assert run_cli("--seed", seed, "annotate", "sample",
                       "--questions", pipe["questions"], "--answers", pipe["answers"],
                       "-n", 6, "--out", out) == 0
        outs[out] = annotation.load_sample(out).sample_id
    ids = list(outs.values())
    assert ids[0] == ids[1]
    assert ids[0] != ids[2]


def test_prompt_type_subset(pipe, tmp_path):
    out = tmp_path / "ctx.jsonl"
    assert run_cli("prompts", "--questions", pipe["questions"],
                   "--types", "contextual", "--out", out) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert {l["prompt_type"] for l in lines} == {"contextual"}


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["evaluate", "--qrels", "x"])
    assert exc.value.code == 2


def test_missing_input_file_reports_and_exits_1(tmp_path, capsys):
    rc = run_cli("evaluate", "--run", tmp_path / "absent.run",
                 "--qrels", tmp_path / "absent.txt", "--out", tmp_path / "o.json")
    assert rc == 1
    assert "absent" in capsys.readouterr().err


def test_corrupt_config_exits_1(pipe, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text("[1, 2]")
    rc = run_cli("--config", config, "sample", "--questions", pipe["questions"],
                 "--out", tmp_path / "o.jsonl")
    assert rc == 1
    assert "config" in capsys.readouterr().err


def test_serve_rejects_bad_bind(pipe, tmp_path, capsys):
    rc = run_cli("annotate", "serve", "--sample", pipe["ann_sample"],
                 "--store", tmp_path / "labels.jsonl", "--bind", "nohost")
    assert rc == 1
    assert "HOST:PORT" in capsys.readouterr().err


def test_rerank_requires_a_scorer(pipe, tmp_path, capsys):
    rc = run_cli("rerank", "--run", pipe["bm25_run"], "--questions", pipe["questions"],
                 "--answers", pipe["answers"], "--out", tmp_path / "o.run")
    assert rc == 1
    assert "checkpoint" in capsys.readouterr().err


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
