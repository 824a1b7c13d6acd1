"""Command-line orchestration of the answer-synthesis and retrieval pipeline.

Each subcommand consumes documented file formats, writes its artifact, and
drops a manifest next to it recording input hashes, parameters, and output
hashes, so any network-free stage can be re-run and verified byte-for-byte.
Defaults come from an optional JSON config file; flags override the config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, annotation, bm25, corpus, encoder, genclient, metrics, pipeline
from . import prompt as prompt_mod
from . import textdiv

log = logging.getLogger(__name__)

PROFILES_FORMAT = "synthpqa-profiles"
PROFILES_VERSION = 1


# --- config / manifest plumbing --------------------------------------------

def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise ValueError(f"{path}: config root must be a JSON object")
    return config


def _eff(flag_value, config: dict, section: str, key: str, default):
    """Effective setting: explicit flag > config file > built-in default."""
    if flag_value is not None:
        return flag_value
    return config.get(section, {}).get(key, default)


def _seed(args, config: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", 42))


def _sha256_path(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, inputs: dict[str, Path], params: dict,
                    outputs: dict[str, Path], manifest_path: Path | None = None) -> None:
    if manifest_path is None:
        primary = next(iter(outputs.values()))
        manifest_path = Path(str(primary) + ".manifest.json")
    doc = {
        "command": command,
        "created_at": int(time.time()),
        "inputs": {name: {"path": str(p), "sha256": _sha256_path(Path(p))}
                   for name, p in sorted(inputs.items())},
        "params": params,
        "outputs": {name: {"path": str(p), "sha256": _sha256_path(Path(p))}
                    for name, p in sorted(outputs.items())},
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _read_answer_files(paths: list[str]) -> list[corpus.Answer]:
    answers: list[corpus.Answer] = []
    seen: dict[str, str] = {}
    for path in paths:
        for ans in corpus.read_answers(path):
            if ans.id in seen:
                raise corpus.CorpusValidationError(
                    f"duplicate answer id {ans.id!r} across {seen[ans.id]} and {path}")
            seen[ans.id] = str(path)
            answers.append(ans)
    return answers


def _queries_of(questions: list[corpus.Question]) -> dict[str, str]:
    return {q.id: q.query_text() for q in questions}


# --- corpus stages ----------------------------------------------------------

def cmd_ingest(args, config) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    questions, answers, qrels = corpus.parse_corpus(
        args.questions, args.answers, args.qrels, validate_qrels=args.validate_qrels)
    out_q = out_dir / "questions.jsonl"
    out_a = out_dir / "answers.jsonl"
    out_r = out_dir / "qrels.txt"
    corpus.write_questions(questions, out_q)
    corpus.write_answers(answers, out_a)
    corpus.write_qrels(qrels, out_r)
    _write_manifest("ingest",
                    {"questions": Path(args.questions), "answers": Path(args.answers),
                     "qrels": Path(args.qrels)},
                    {"validate_qrels": args.validate_qrels},
                    {"questions": out_q, "answers": out_a, "qrels": out_r},
                    manifest_path=out_dir / "manifest.json")
    print(f"ingested {len(questions)} questions, {len(answers)} answers, "
          f"{sum(len(v) for v in qrels.values())} judgments -> {out_dir}")
    return 0


def cmd_sample(args, config) -> int:
    seed = _seed(args, config)
    questions = corpus.read_questions(args.questions)
    cap = _eff(args.cap, config, "corpus", "community_cap", 3000)
    sampled = corpus.sample_per_community(questions, cap=cap, seed=seed)
    corpus.write_questions(sampled, args.out)
    _write_manifest("sample", {"questions": Path(args.questions)},
                    {"cap": cap, "seed": seed}, {"questions": Path(args.out)})
    print(f"sampled {len(sampled)}/{len(questions)} questions (cap {cap}) -> {args.out}")
    return 0


def cmd_profiles(args, config) -> int:
    questions = corpus.read_questions(args.questions)
    as_of = args.as_of if args.as_of is not None else max(
        (q.created_at for q in questions), default=0) + 1
    users = sorted({q.user_id for q in questions})
    profiles = {uid: list(corpus.build_user_profile(uid, questions, as_of, k=args.top_k).top_tags)
                for uid in users}
    doc = {"format": PROFILES_FORMAT, "version": PROFILES_VERSION,
           "as_of": as_of, "k": args.top_k, "profiles": profiles}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, ensure_ascii=False, indent=1)
        fh.write("\n")
    _write_manifest("profiles", {"questions": Path(args.questions)},
                    {"as_of": as_of, "k": args.top_k}, {"profiles": Path(args.out)})
    print(f"built {len(profiles)} user profiles (as_of {as_of}) -> {args.out}")
    return 0


def _load_profiles(path: str) -> dict[str, corpus.UserProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != PROFILES_FORMAT or doc.get("version") != PROFILES_VERSION:
        raise ValueError(f"{path}: not a {PROFILES_FORMAT} v{PROFILES_VERSION} file")
    as_of = doc["as_of"]
    return {uid: corpus.UserProfile(user_id=uid, top_tags=tuple(tags), as_of=as_of)
            for uid, tags in doc["profiles"].items()}


def cmd_prompts(args, config) -> int:
    questions = corpus.read_questions(args.questions)
    profiles = _load_profiles(args.profiles) if args.profiles else {}
    ptypes = tuple(t.strip() for t in args.types.split(",")) if args.types \
        else prompt_mod.PROMPT_TYPES
    templates = dict(prompt_mod.DEFAULT_TEMPLATES)
    overrides = {prompt_mod.BASIC: args.template_basic,
                 prompt_mod.PERSONALIZED: args.template_personalized,
                 prompt_mod.CONTEXTUAL: args.template_contextual}
    for ptype, path in overrides.items():
        if path:
            templates[ptype] = prompt_mod.load_template(path)
    rendered = prompt_mod.render_all(questions, ptypes=ptypes, profiles=profiles,
                                     templates=templates)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rp in rendered:
            fh.write(json.dumps({"question_id": rp.question_id, "prompt_type": rp.prompt_type,
                                 "text": rp.text, "model_hint": rp.model_hint},
                                sort_keys=True, ensure_ascii=False) + "\n")
    inputs = {"questions": Path(args.questions)}
    if args.profiles:
        inputs["profiles"] = Path(args.profiles)
    _write_manifest("prompts", inputs, {"types": list(ptypes)}, {"prompts": Path(args.out)})
    print(f"rendered {len(rendered)} prompts ({', '.join(ptypes)}) -> {args.out}")
    return 0


def _load_prompts(path: str) -> list[prompt_mod.RenderedPrompt]:
    prompts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                prompts.append(prompt_mod.RenderedPrompt(**json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad prompt record: {exc}")
    return prompts


# --- generation --------------------------------------------------------------

def cmd_generate(args, config) -> int:
    prompts = _load_prompts(args.prompts)
    params = genclient.GenParams(
        model_name=_eff(args.model, config, "generate", "model_name", None) or "",
        endpoint_url=_eff(args.endpoint, config, "generate", "endpoint_url",
                          genclient.GenParams.__dataclass_fields__["endpoint_url"].default),
        temperature=_eff(args.temperature, config, "generate", "temperature", 1.0),
        max_tokens=_eff(args.max_tokens, config, "generate", "max_tokens", 500),
        api_key_env=_eff(args.api_key_env, config, "generate", "api_key_env",
                         "SYNTHPQA_API_KEY"),
    )
    cache_dir = _eff(args.cache_dir, config, "generate", "cache_dir",
                     genclient.DEFAULT_CACHE_DIR)
    max_in_flight = _eff(args.max_in_flight, config, "generate", "max_in_flight",
                         args.threads or genclient.DEFAULT_MAX_IN_FLIGHT)
    backend = genclient.MockBackend() if args.mock_llm else None
    clock = (lambda: 0.0) if args.mock_llm else time.time
    client = genclient.GenClient(params, cache=genclient.GenCache(cache_dir),
                                 backend=backend, clock=clock)
    results = client.generate_batch(prompts, max_in_flight=max_in_flight)

    records = [r for r in results if isinstance(r, genclient.GenRecord)]
    failures = [r for r in results if isinstance(r, genclient.GenFailure)]
    answers = [genclient.record_to_answer(r) for r in records]
    corpus.write_answers(answers, args.out)
    _write_manifest("generate", {"prompts": Path(args.prompts)},
                    {"model": params.model_name, "temperature": params.temperature,
                     "max_tokens": params.max_tokens, "mock": bool(args.mock_llm),
                     "max_in_flight": max_in_flight, "failures": len(failures)},
                    {"answers": Path(args.out)})
    print(f"generated {len(records)}/{len(prompts)} answers -> {args.out}")
    for failure in failures:
        print(f"error: generation failed for question {failure.question_id!r} "
              f"({failure.prompt_type}): {failure.error}", file=sys.stderr)
    return 1 if failures else 0


# --- retrieval stages --------------------------------------------------------

def _bm25_params(args, config) -> bm25.Bm25Params:
    return bm25.Bm25Params(
        k1=_eff(getattr(args, "k1", None), config, "bm25", "k1", 1.75),
        b=_eff(getattr(args, "b", None), config, "bm25", "b", 1.0),
    )


def cmd_index(args, config) -> int:
    answers = _read_answer_files(args.answers)
    index = bm25.build_index([(a.id, a.text) for a in answers])
    bm25.save_index(index, args.out)
    _write_manifest("index", {f"answers{i}": Path(p) for i, p in enumerate(args.answers)},
                    {"docs": index.N}, {"index": Path(args.out)})
    print(f"indexed {index.N} answers -> {args.out}")
    return 0


def cmd_search(args, config) -> int:
    index = bm25.load_index(args.index)
    questions = corpus.read_questions(args.questions)
    params = _bm25_params(args, config)
    depth = _eff(args.k, config, "fusion", "depth", pipeline.DEFAULT_DEPTH)
    run = pipeline.bm25_run(index, params, _queries_of(questions), depth=depth)
    pipeline.write_run(run, args.out, tag="bm25")
    _write_manifest("search", {"index": Path(args.index), "questions": Path(args.questions)},
                    {"k1": params.k1, "b": params.b, "depth": depth}, {"run": Path(args.out)})
    print(f"searched {len(run)} queries (depth {depth}) -> {args.out}")
    return 0


def _training_pairs(questions: list[corpus.Question], answers: list[corpus.Answer],
                    qrels: corpus.Qrels, pool: str) -> list[tuple[str, str]]:
    if pool == corpus.HUMAN:
        eligible = {a.id: a for a in answers if a.source == corpus.HUMAN}
    elif pool in prompt_mod.PROMPT_TYPES:
        eligible = {a.id: a for a in answers
                    if a.source == corpus.GENERATED and a.prompt_type == pool}
    else:
        raise ValueError(f"pool must be 'human' or one of {prompt_mod.PROMPT_TYPES}, got {pool!r}")
    by_qid = {q.id: q for q in questions}
    pairs: list[tuple[str, str]] = []
    for qid in sorted(qrels):
        for aid in sorted(qrels[qid]):
            if qrels[qid][aid] < 1 or aid not in eligible:
                continue
            if qid not in by_qid:
                raise corpus.CorpusValidationError(
                    f"qrels reference question {qid!r} missing from the question file")
            pairs.append((by_qid[qid].query_text(), eligible[aid].text))
    return pairs


def cmd_train(args, config) -> int:
    questions = corpus.read_questions(args.questions)
    answers = _read_answer_files(args.answers)
    qrels = corpus.read_qrels(args.qrels)
    pool = args.pool
    pairs = _training_pairs(questions, answers, qrels, pool)
    if len(pairs) < 2:
        raise ValueError(f"pool {pool!r} yields {len(pairs)} training pairs; need at least 2")
    cfg = encoder.TrainConfig(
        epochs=_eff(args.epochs, config, "train", "epochs", 20),
        batch_size=_eff(args.batch_size, config, "train", "batch_size", 128),
        learning_rate=_eff(args.learning_rate, config, "train", "learning_rate", 1e-3),
        margin=_eff(args.margin, config, "train", "margin", 0.5),
        seed=_seed(args, config),
        hash_dim=_eff(args.hash_dim, config, "train", "hash_dim", 32768),
        emb_dim=_eff(args.emb_dim, config, "train", "emb_dim", 64),
        negatives=_eff(args.negatives, config, "train", "negatives", "sample_one"),
        distance=_eff(args.distance, config, "train", "distance", "cosine"),
    )
    result = encoder.train(pairs, cfg, pool_tag=pool)
    encoder.save_model(result.model, args.out)
    inputs = {"questions": Path(args.questions), "qrels": Path(args.qrels)}
    inputs.update({f"answers{i}": Path(p) for i, p in enumerate(args.answers)})
    _write_manifest("train", inputs,
                    {"pool": pool, "pairs": len(pairs), "epochs": cfg.epochs,
                     "batch_size": cfg.batch_size, "learning_rate": cfg.learning_rate,
                     "margin": cfg.margin, "seed": cfg.seed, "hash_dim": cfg.hash_dim,
                     "emb_dim": cfg.emb_dim, "negatives": cfg.negatives,
                     "distance": cfg.distance,
                     "epoch_mean_loss": result.epoch_mean_loss,
                     "skipped_single_batches": result.skipped_single_batches},
                    {"checkpoint": Path(args.out)})
    first = result.epoch_mean_loss[0] if result.epoch_mean_loss else float("nan")
    last = result.epoch_mean_loss[-1] if result.epoch_mean_loss else float("nan")
    print(f"trained on {len(pairs)} pairs (pool {pool}): epoch loss {first:.4f} -> {last:.4f}; "
          f"checkpoint -> {args.out}")
    return 0


def _build_scorer(args, answers: list[corpus.Answer]) -> encoder.Scorer:
    if args.checkpoint:
        return encoder.EncoderScorer(encoder.load_model(args.checkpoint))
    if args.scorer == "tfidf":
        return encoder.TfidfScorer([a.text for a in answers])
    raise ValueError("rerank needs --checkpoint (trained encoder) or --scorer tfidf")


def cmd_rerank(args, config) -> int:
    first_stage = pipeline.read_run(args.run)
    questions = corpus.read_questions(args.questions)
    answers = _read_answer_files(args.answers)
    scorer = _build_scorer(args, answers)
    depth = _eff(args.depth, config, "fusion", "depth", pipeline.DEFAULT_DEPTH)
    docs = {a.id: a.text for a in answers}
    run = pipeline.rerank(first_stage, scorer, _queries_of(questions), docs, depth=depth)
    pipeline.write_run(run, args.out, tag="neural")
    inputs = {"run": Path(args.run), "questions": Path(args.questions)}
    inputs.update({f"answers{i}": Path(p) for i, p in enumerate(args.answers)})
    if args.checkpoint:
        inputs["checkpoint"] = Path(args.checkpoint)
    _write_manifest("rerank", inputs,
                    {"depth": depth, "scorer": "encoder" if args.checkpoint else args.scorer},
                    {"run": Path(args.out)})
    print(f"re-scored {len(run)} queries (depth {depth}) -> {args.out}")
    return 0


def cmd_tune_lambda(args, config) -> int:
    lexical_run = pipeline.read_run(args.bm25_run)
    neural_run = pipeline.read_run(args.neural_run)
    qrels = corpus.read_qrels(args.qrels)
    objective = _eff(args.objective, config, "fusion", "objective", pipeline.DEFAULT_OBJECTIVE)
    grid = (tuple(float(x) for x in args.grid.split(",")) if args.grid
            else pipeline.DEFAULT_LAMBDA_GRID)
    result = pipeline.tune_lambda(lexical_run, neural_run, qrels,
                                  objective=objective, lambdas=grid)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(result.table_tsv())
    outputs = {"table": Path(args.out)}
    if args.fused_out:
        fused = pipeline.fuse(lexical_run, neural_run, result.best_lambda)
        pipeline.write_run(fused, args.fused_out, tag="fused")
        outputs["fused_run"] = Path(args.fused_out)
    _write_manifest("tune-lambda",
                    {"bm25_run": Path(args.bm25_run), "neural_run": Path(args.neural_run),
                     "qrels": Path(args.qrels)},
                    {"objective": objective, "grid": list(grid),
                     "best_lambda": result.best_lambda, "best_mean": result.best_mean},
                    outputs)
    print(f"lambda* = {result.best_lambda:g} ({objective} = {result.best_mean:.6f}) "
          f"-> {args.out}")
    return 0


def _metric_ids(args, config) -> tuple[str, ...]:
    raw = _eff(args.metrics, config, "metrics", "ids", None)
    if raw is None:
        return metrics.DEFAULT_METRICS
    if isinstance(raw, str):
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    return tuple(raw)


def cmd_evaluate(args, config) -> int:
    run = pipeline.read_run(args.run)
    qrels = corpus.read_qrels(args.qrels)
    metric_ids = _metric_ids(args, config)
    report = metrics.evaluate_run(run, qrels, metric_ids,
                                  exclude_no_relevant=not args.keep_no_relevant)
    doc = {
        "metrics": list(report.metric_ids),
        "means": report.means,
        "per_query": report.per_query,
        "evaluated_queries": report.evaluated_queries,
        "skipped_no_relevant": report.skipped_no_relevant,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest("evaluate", {"run": Path(args.run), "qrels": Path(args.qrels)},
                    {"metrics": list(metric_ids), "keep_no_relevant": args.keep_no_relevant},
                    {"report": Path(args.out)})
    for mid in metric_ids:
        print(f"{mid}\t{report.means[mid]:.4f}")
    return 0


def _parse_named(values: list[str] | None, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for value in values or []:
        name, sep, payload = value.partition("=")
        if not sep or not name:
            raise ValueError(f"{what} must look like NAME={'{value}'}, got {value!r}")
        out[name] = payload
    return out


def cmd_compare(args, config) -> int:
    qrels = corpus.read_qrels(args.qrels)
    metric_ids = _metric_ids(args, config)
    base_name, base_path = next(iter(_parse_named([args.baseline], "--baseline").items()))
    candidates = _parse_named(args.candidate, "--candidate")
    if not candidates:
        raise ValueError("compare needs at least one --candidate NAME=RUN")
    alpha = _eff(args.alpha, config, "metrics", "alpha", 0.01)
    lambdas = {name: float(v) for name, v in _parse_named(args.lam, "--lambda").items()}

    base_report = metrics.evaluate_run(pipeline.read_run(base_path), qrels, metric_ids)
    cand_reports = {name: metrics.evaluate_run(pipeline.read_run(path), qrels, metric_ids)
                    for name, path in candidates.items()}
    md, tsv = metrics.comparison_table(base_name, base_report, cand_reports, alpha=alpha,
                                       metric_ids=metric_ids, lambdas=lambdas or None)
    Path(args.out_md).write_text(md, encoding="utf-8")
    Path(args.out_tsv).write_text(tsv, encoding="utf-8")
    inputs = {"qrels": Path(args.qrels), f"run_{base_name}": Path(base_path)}
    inputs.update({f"run_{name}": Path(path) for name, path in candidates.items()})
    _write_manifest("compare", inputs,
                    {"alpha": alpha, "metrics": list(metric_ids), "lambdas": lambdas},
                    {"markdown": Path(args.out_md), "tsv": Path(args.out_tsv)})
    print(md, end="")
    return 0


# --- diversity / overlap ------------------------------------------------------

def cmd_diversity(args, config) -> int:
    questions = corpus.read_questions(args.questions)
    answers = [a for a in _read_answer_files(args.answers) if a.source == corpus.GENERATED]
    report = textdiv.diversity_report(answers, questions, smoothing=args.smoothing)
    md, tsv = textdiv.render_diversity_report(report)
    Path(args.out_md).write_text(md, encoding="utf-8")
    Path(args.out_tsv).write_text(tsv, encoding="utf-8")
    inputs = {"questions": Path(args.questions)}
    inputs.update({f"answers{i}": Path(p) for i, p in enumerate(args.answers)})
    _write_manifest("diversity", inputs, {"smoothing": args.smoothing},
                    {"markdown": Path(args.out_md), "tsv": Path(args.out_tsv)})
    print(md, end="")
    return 0


def cmd_overlap(args, config) -> int:
    questions = {q.id: q for q in corpus.read_questions(args.questions)}
    answers = _read_answer_files(args.answers)
    groups: dict[tuple[str, str], list[float]] = {}
    for ans in answers:
        question = questions.get(ans.question_id)
        if question is None:
            raise corpus.CorpusValidationError(
                f"answer {ans.id!r} references question {ans.question_id!r} "
                "missing from the question file")
        label = ans.model_name if ans.source == corpus.GENERATED else corpus.HUMAN
        groups.setdefault((label, ans.prompt_type), []).append(
            textdiv.lexical_overlap(question.body, ans.text))
    lines = ["model\tprompt\tn\tmean_overlap_pct"]
    for (label, ptype), values in sorted(groups.items()):
        lines.append(f"{label}\t{ptype}\t{len(values)}\t{sum(values) / len(values):.4f}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    inputs = {"questions": Path(args.questions)}
    inputs.update({f"answers{i}": Path(p) for i, p in enumerate(args.answers)})
    _write_manifest("overlap", inputs, {}, {"table": Path(args.out)})
    print(f"overlap table ({len(groups)} groups) -> {args.out}")
    return 0


# --- annotation ----------------------------------------------------------------

def cmd_annotate_sample(args, config) -> int:
    questions = corpus.read_questions(args.questions)
    answers = _read_answer_files(args.answers)
    seed = _seed(args, config)
    sample = annotation.draw_sample(questions, answers, n=args.n, seed=seed)
    annotation.save_sample(sample, args.out)
    inputs = {"questions": Path(args.questions)}
    inputs.update({f"answers{i}": Path(p) for i, p in enumerate(args.answers)})
    _write_manifest("annotate-sample", inputs, {"n": args.n, "seed": seed},
                    {"sample": Path(args.out)})
    per_community = {}
    for item in sample.items:
        per_community[item.community] = per_community.get(item.community, 0) + 1
    print(f"sample {sample.sample_id}: {len(sample.items)} questions "
          f"({', '.join(f'{c}={n}' for c, n in sorted(per_community.items()))}) -> {args.out}")
    return 0


def cmd_annotate_serve(args, config) -> int:
    import uvicorn

    sample = annotation.load_sample(args.sample)
    store = annotation.LabelStore(args.store)
    ui_dir = args.ui_dir
    if ui_dir is None and Path("frontend/dist/index.html").exists():
        ui_dir = "frontend/dist"
    app = annotation.build_app(sample, store, reveal_models=args.reveal_models, ui_dir=ui_dir)
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"--bind must look like HOST:PORT, got {args.bind!r}")
    print(f"serving sample {sample.sample_id} on http://{args.bind} "
          f"(store {args.store}, ui {'on' if ui_dir else 'off'})")
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return 0


def cmd_annotate_report(args, config) -> int:
    store = annotation.LabelStore(args.store)
    sample = annotation.load_sample(args.sample) if args.sample else None
    report = annotation.hallucination_report(store.records(), sample)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    inputs = {"store": Path(args.store)}
    if args.sample:
        inputs["sample"] = Path(args.sample)
    _write_manifest("annotate-report", inputs, {}, {"report": Path(args.out)})
    for model, row in report["by_model"].items():
        rate = row["hallucination_rate_pct"]
        shown = f"{rate:.1f}%" if rate is not None else "undefined (no judged labels)"
        print(f"{model}: hallucination rate {shown} "
              f"({row['hallucinated']}/{row['judged']} judged, {row['unsure']} unsure)")
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthpqa",
        description="Synthesize community-QA answers, train and evaluate two-stage "
                    "retrieval over them, and audit the output.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, help="global random seed (default 42)")
    parser.add_argument("--threads", type=int, help="default parallelism for batched stages")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("ingest", help="parse and validate a corpus, write normalized copies")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--validate-qrels", action="store_true",
                   help="also check qrels referential integrity")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="cap questions per community")
    p.add_argument("--questions", required=True)
    p.add_argument("--cap", type=int, help="per-community cap (default 3000)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("profiles", help="build per-user top-tag profiles")
    p.add_argument("--questions", required=True)
    p.add_argument("--as-of", type=int,
                   help="cutoff timestamp; default: just past the newest question")
    p.add_argument("--top-k", type=int, default=5, help="profile length (default 5)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("prompts", help="render generation prompts")
    p.add_argument("--questions", required=True)
    p.add_argument("--profiles", help="profiles JSON (needed for personalized prompts)")
    p.add_argument("--types", help="comma-separated prompt types (default: all three)")
    p.add_argument("--template-basic", help="override template file")
    p.add_argument("--template-personalized", help="override template file")
    p.add_argument("--template-contextual", help="override template file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("generate", help="synthesize answers for rendered prompts")
    p.add_argument("--prompts", required=True)
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--endpoint", help="chat-completions URL")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--api-key-env", help="env var holding the API key")
    p.add_argument("--mock-llm", action="store_true",
                   help="use the offline deterministic generator")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("index", help="build the BM25 index over answers")
    p.add_argument("--answers", action="append", required=True,
                   help="answers JSONL (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="first-stage BM25 retrieval")
    p.add_argument("--index", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--k", type=int, help="retrieval depth (default 100)")
    p.add_argument("--k1", type=float, help="BM25 k1 (default 1.75)")
    p.add_argument("--b", type=float, help="BM25 b (default 1.0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train the second-stage encoder on relevant pairs")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", action="append", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--pool", default=corpus.HUMAN,
                   help="answer pool: human or a prompt type (default human)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--hash-dim", type=int)
    p.add_argument("--emb-dim", type=int)
    p.add_argument("--negatives", choices=["sample_one", "all"])
    p.add_argument("--distance", choices=["cosine", "euclidean"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="re-score a first-stage run with a neural scorer")
    p.add_argument("--run", required=True, help="first-stage TREC run")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", action="append", required=True)
    p.add_argument("--checkpoint", help="trained encoder checkpoint")
    p.add_argument("--scorer", choices=["tfidf"], help="alternative scorer")
    p.add_argument("--depth", type=int, help="re-rank depth (default 100)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("tune-lambda", help="grid-search the fusion weight on validation")
    p.add_argument("--bm25-run", required=True)
    p.add_argument("--neural-run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--objective", help="metric id (default NDCG@10)")
    p.add_argument("--grid", help="comma-separated lambda values (default 0.0..1.0 step 0.1)")
    p.add_argument("--fused-out", help="also write the fused run at lambda*")
    p.add_argument("--out", required=True, help="per-lambda TSV table")
    p.set_defaults(func=cmd_tune_lambda)

    p = sub.add_parser("evaluate", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", help="comma-separated metric ids")
    p.add_argument("--keep-no-relevant", action="store_true",
                   help="keep queries with no relevant docs in the averages")
    p.add_argument("--out", required=True, help="JSON report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="significance-tested comparison against a baseline")
    p.add_argument("--qrels", required=True)
    p.add_argument("--baseline", required=True, metavar="NAME=RUN")
    p.add_argument("--candidate", action="append", metavar="NAME=RUN")
    p.add_argument("--metrics", help="comma-separated metric ids")
    p.add_argument("--alpha", type=float, help="significance level (default 0.01)")
    p.add_argument("--lambda", dest="lam", action="append", metavar="NAME=VALUE",
                   help="fusion weight used by a run, shown as a column")
    p.add_argument("--out-md", required=True)
    p.add_argument("--out-tsv", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diversity", help="pairwise BLEU/chrF between prompt strategies")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", action="append", required=True)
    p.add_argument("--smoothing", choices=["none", "add-one"], default="none")
    p.add_argument("--out-md", required=True)
    p.add_argument("--out-tsv", required=True)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("overlap", help="query-word overlap per answer group")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("annotate", help="hallucination audit stages")
    asub = p.add_subparsers(dest="annotate_command", required=True, metavar="STAGE")

    pa = asub.add_parser("sample", help="draw the audit sample")
    pa.add_argument("--questions", required=True)
    pa.add_argument("--answers", action="append", required=True)
    pa.add_argument("-n", type=int, default=annotation.DEFAULT_SAMPLE_SIZE)
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_annotate_sample)

    pa = asub.add_parser("serve", help="serve the labeling API and UI")
    pa.add_argument("--sample", required=True)
    pa.add_argument("--store", required=True, help="labels JSONL (append-only)")
    pa.add_argument("--bind", default="127.0.0.1:8080")
    pa.add_argument("--reveal-models", action="store_true",
                    help="include model identities in API payloads")
    pa.add_argument("--ui-dir", help="compiled UI assets (default: frontend/dist if present)")
    pa.set_defaults(func=cmd_annotate_serve)

    pa = asub.add_parser("report", help="compute hallucination rates from labels")
    pa.add_argument("--store", required=True)
    pa.add_argument("--sample", help="sample JSON for community breakdowns")
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_annotate_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - single reporting point for stage failures
        log.debug("stage failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
