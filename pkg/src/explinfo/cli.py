"""Pipeline command line: split, embed, estimate, score, analyze, report.

Every subcommand works inside a run directory guarded by a lock file,
reads and writes documented file formats, and appends what it did (seeds,
hyperparameters, artifact digests) to the run manifest, so a finished
run directory is a self-describing reproducibility record.

Exit codes: 0 success, 2 usage error, 3 missing upstream artifact,
4 numeric failure, 5 backend/transport failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from explinfo import corpus, gptscore, mi_estimators, numerics, silver_labels, synthetic, v_information
from explinfo import analysis as analysis_mod
from explinfo import embeddings as embeddings_mod
from explinfo import manifest as manifest_mod
from explinfo.embeddings import BytesStore, ProviderResponseError, TransportError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4
EXIT_TRANSPORT = 5


class MissingArtifactError(RuntimeError):
    pass


def _require_file(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path} (run `explinfo {produced_by}` first)")
    return path


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        return manifest_mod.load_config(args.config)
    return {}


def _cfg(config: dict, section: str, key: str, default):
    return config.get(section, {}).get(key, default)


def _pick(flag_value, config, section, key, default):
    """CLI flag beats config file beats built-in default."""
    if flag_value is not None:
        return flag_value
    return _cfg(config, section, key, default)


def _provider(args, config):
    name = _pick(getattr(args, "provider", None), config, "embedding", "provider", "hash")
    if name == "hash":
        dim = int(_pick(getattr(args, "dim", None), config, "embedding", "dim", 64))
        seed = int(_pick(getattr(args, "hash_seed", None), config, "embedding", "seed", 0))
        return embeddings_mod.HashEmbeddingProvider(dim=dim, seed=seed)
    if name == "remote":
        base_url = _cfg(config, "embedding", "base_url", None)
        model = _cfg(config, "embedding", "model", None)
        if not base_url or not model:
            raise ValueError("remote embedding provider needs base_url and model in the config file")
        key_env = _cfg(config, "embedding", "api_key_env", "EXPLINFO_API_KEY")
        return embeddings_mod.RemoteEmbeddingProvider(
            base_url=base_url,
            model=model,
            api_key=os.environ.get(key_env, ""),
            timeout=float(_cfg(config, "embedding", "timeout", 30.0)),
        )
    raise ValueError(f"unknown embedding provider {name!r}")


def _backend(args, config):
    name = _pick(getattr(args, "backend", None), config, "gptscore", "backend", "mock")
    if name == "mock":
        seed = int(_pick(getattr(args, "backend_seed", None), config, "gptscore", "seed", 0))
        return gptscore.MockLikertBackend(seed=seed)
    if name == "remote":
        base_url = _cfg(config, "gptscore", "base_url", None)
        model = _cfg(config, "gptscore", "model", None)
        if not base_url or not model:
            raise ValueError("remote completion backend needs base_url and model in the config file")
        key_env = _cfg(config, "gptscore", "api_key_env", "EXPLINFO_API_KEY")
        return gptscore.RemoteCompletionBackend(
            base_url=base_url,
            model=model,
            api_key=os.environ.get(key_env, ""),
            timeout=float(_cfg(config, "gptscore", "timeout", 30.0)),
        )
    raise ValueError(f"unknown completion backend {name!r}")


def _open_manifest(run_dir: Path, config: dict):
    m = manifest_mod.RunManifest.load_or_new(run_dir / "manifest.json")
    if config:
        m.config_hash = manifest_mod.config_hash(config)
    return m


def _save_manifest(m, run_dir: Path):
    m.save(run_dir / "manifest.json")


def _split_dir(run_dir: Path, kind: str) -> Path:
    return run_dir / "splits" / kind


def _read_kind_split(run_dir: Path, kind: str):
    split_dir = _split_dir(run_dir, kind)
    for name in ("train.jsonl", "validation.jsonl", "test.jsonl", "split_manifest.json"):
        _require_file(split_dir / name, "split")
    return corpus.read_split(split_dir, kind)


def _embedding_store(run_dir: Path, must_exist: bool) -> BytesStore:
    path = run_dir / "cache" / "embeddings.bin"
    if must_exist:
        _require_file(path, "embed")
    return BytesStore(path)


def _matrix(provider, texts, store) -> np.ndarray:
    vectors = embeddings_mod.embed_texts_cached(provider, texts, store)
    return np.vstack([v.values.astype(np.float64) for v in vectors])


def _derived_seeds(seed: int, count: int) -> list:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


# --- subcommands ----------------------------------------------------------


def cmd_split(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    val_ratio = float(_pick(args.val_ratio, config, "split", "validation_ratio", 1 / 6))
    test_ratio = float(_pick(args.test_ratio, config, "split", "test_ratio", 1 / 6))
    ratios = (1.0 - val_ratio - test_ratio, val_ratio, test_ratio)
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        id_sets = {}
        for input_path in args.input:
            records = corpus.load_corpus(input_path)
            kinds = {r.kind for r in records}
            if len(kinds) != 1:
                raise corpus.CorpusError(f"{input_path}: expected a single explanation kind, found {sorted(kinds)}")
            kind = kinds.pop()
            if kind in id_sets:
                raise corpus.CorpusError(f"{input_path}: kind {kind!r} given twice")
            id_sets[kind] = ({r.id for r in records}, records)
        reference = None
        for kind, (ids, _) in id_sets.items():
            if reference is None:
                reference = ids
            elif ids != reference:
                raise corpus.CorpusError("input files must cover the same instance ids for paired analysis")
        for kind, (_, records) in id_sets.items():
            # Sorting by id before the seeded shuffle puts the same
            # instance in the same bucket for every kind.
            ordered = sorted(records, key=lambda r: r.id)
            split = corpus.split_dataset(ordered, ratios, args.seed)
            info = corpus.write_split(split, _split_dir(run_dir, kind), ratios=ratios)
            m.split_sizes[kind] = info["sizes"]
            for name in ("train.jsonl", "validation.jsonl", "test.jsonl", "split_manifest.json"):
                m.record_artifact(_split_dir(run_dir, kind) / name, run_dir)
            print(f"split {kind}: {info['sizes']}")
        m.seeds["split"] = args.seed
        _save_manifest(m, run_dir)
    return EXIT_OK


def _all_kinds(run_dir: Path) -> list:
    base = run_dir / "splits"
    _require_file(base, "split")
    return sorted(p.name for p in base.iterdir() if p.is_dir())


def cmd_embed(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        store = _embedding_store(run_dir, must_exist=False)
        texts = []
        for kind in _all_kinds(run_dir):
            split = _read_kind_split(run_dir, kind)
            for part in (split.train, split.validation, split.test):
                for r in part:
                    texts.append(corpus.canonical_input(r))
                    texts.append(r.explanan)
        vectors = embeddings_mod.embed_texts_cached(provider, texts, store)
        m.providers["embedding"] = {"provider": provider.name, "model": provider.model, "dim": vectors[0].dim}
        m.notes["rationale_embedding"] = "explanan texts embedded as rendered, space-preserving strings"
        m.record_artifact(store.path, run_dir)
        _save_manifest(m, run_dir)
        print(f"embedded {len(texts)} texts ({len(store)} cache entries) with {provider.model}")
    return EXIT_OK


def cmd_validate_estimators(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    targets = [float(t) for t in args.targets.split(",") if t]
    if not targets:
        raise ValueError("no targets given")
    train_config = mi_estimators.TrainConfig(
        learning_rate=float(_pick(args.lr, config, "validate", "learning_rate", 3e-3)),
        batch_size=int(_pick(args.batch_size, config, "validate", "batch_size", 256)),
        epochs=int(_pick(args.epochs, config, "validate", "epochs", 30)),
    )
    scenarios = [
        synthetic.GaussianScenario(
            target_mi=t, dim=args.dim, n_samples=args.n_samples, n_validation=args.n_validation
        )
        for t in targets
    ]
    estimator = synthetic.make_infonce_estimator(train_config, eval_batch_size=args.eval_batch_size)
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        report = synthetic.validate_estimator(estimator, scenarios, trials=args.trials, seed=args.seed)
        out_dir = run_dir / "validation"
        synthetic.write_validation_csv(report, out_dir / "validation.csv")
        summary = synthetic.format_validation_summary(report)
        (out_dir / "summary.txt").write_text(summary + "\n", encoding="utf-8")
        m.seeds["validate-estimators"] = args.seed
        m.hyperparameters["validate-estimators"] = {
            "dim": args.dim,
            "targets": targets,
            "trials": args.trials,
            "n_samples": args.n_samples,
            "n_validation": args.n_validation,
            "learning_rate": train_config.learning_rate,
            "batch_size": train_config.batch_size,
            "epochs": train_config.epochs,
        }
        m.record_artifact(out_dir / "validation.csv", run_dir)
        m.record_artifact(out_dir / "summary.txt", run_dir)
        _save_manifest(m, run_dir)
        print(summary)
    return EXIT_OK


def cmd_tune(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    kind = args.kind
    epochs = int(args.epochs) if args.epochs is not None else 10
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        store = _embedding_store(run_dir, must_exist=True)
        split = _read_kind_split(run_dir, kind)
        train_es = _matrix(provider, [r.explanan for r in split.train], store)
        val_es = _matrix(provider, [r.explanan for r in split.validation], store)
        if args.stage == "infonce":
            train_xs = _matrix(provider, [corpus.canonical_input(r) for r in split.train], store)
            val_xs = _matrix(provider, [corpus.canonical_input(r) for r in split.validation], store)

            def objective(cfg):
                tc = mi_estimators.TrainConfig(
                    learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"], epochs=epochs
                )
                _, history = mi_estimators.train_infonce(train_xs, train_es, val_xs, val_es, tc, args.seed)
                return min(history.val_loss)

            space = synthetic.INFONCE_SEARCH_SPACE
        else:
            train_labels = [r.label_index for r in split.train]
            val_labels = [r.label_index for r in split.validation]

            def objective(cfg):
                pc = v_information.PredictorConfig(
                    learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"], epochs=epochs
                )
                _, history = v_information.fit_predictor(train_es, train_labels, val_es, val_labels, 3, pc, args.seed)
                return min(history.val_loss)

            space = synthetic.PREDICTOR_SEARCH_SPACE
        budget = args.budget
        best, trace = synthetic.random_search(space, budget, objective, seed=args.seed)
        out_path = run_dir / "tuning" / f"{args.stage}_{kind}.json"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "best": best,
            "trace": [{"config": t.config, "value": t.value, "error": t.error} for t in trace],
        }
        out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        m.seeds[f"tune/{args.stage}/{kind}"] = args.seed
        m.hyperparameters[f"tune/{args.stage}/{kind}"] = {"budget": budget, "epochs": epochs, "best": best}
        m.record_artifact(out_path, run_dir)
        _save_manifest(m, run_dir)
        print(f"best {args.stage} config for {kind}: {best}")
    return EXIT_OK


def _tuned(run_dir: Path, stage: str, kind: str):
    path = run_dir / "tuning" / f"{stage}_{kind}.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))["best"]
    return {}


def cmd_estimate_relevance(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    kind = args.kind
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        store = _embedding_store(run_dir, must_exist=True)
        split = _read_kind_split(run_dir, kind)
        tuned = _tuned(run_dir, "infonce", kind)
        train_config = mi_estimators.TrainConfig(
            learning_rate=float(_pick(args.lr, config, "infonce", "learning_rate", tuned.get("learning_rate", 1e-4))),
            batch_size=int(_pick(args.batch_size, config, "infonce", "batch_size", tuned.get("batch_size", 64))),
            epochs=int(_pick(args.epochs, config, "infonce", "epochs", 10)),
        )
        eval_bs = int(_pick(args.eval_batch_size, config, "infonce", "eval_batch_size", train_config.batch_size))
        train_seed, shuffle_seed = _derived_seeds(args.seed, 2)

        train_xs = _matrix(provider, [corpus.canonical_input(r) for r in split.train], store)
        train_es = _matrix(provider, [r.explanan for r in split.train], store)
        val_xs = _matrix(provider, [corpus.canonical_input(r) for r in split.validation], store)
        val_es = _matrix(provider, [r.explanan for r in split.validation], store)
        test_xs = _matrix(provider, [corpus.canonical_input(r) for r in split.test], store)
        test_es = _matrix(provider, [r.explanan for r in split.test], store)

        critic, history = mi_estimators.train_infonce(train_xs, train_es, val_xs, val_es, train_config, train_seed)
        batches = mi_estimators.make_batches(
            test_xs, test_es, ids=[r.id for r in split.test], batch_size=eval_bs, seed=shuffle_seed
        )
        estimate = mi_estimators.infonce_estimate(batches, critic, history=history)

        out_path = run_dir / "estimates" / f"relevance_{kind}_{provider.model}.csv"
        mi_estimators.write_pointwise_csv(estimate, out_path, seed=args.seed)
        m.seeds[f"estimate-relevance/{kind}"] = args.seed
        m.seeds[f"estimate-relevance/{kind}/train"] = train_seed
        m.seeds[f"estimate-relevance/{kind}/test_shuffle"] = shuffle_seed
        m.hyperparameters[f"estimate-relevance/{kind}"] = {
            "learning_rate": train_config.learning_rate,
            "batch_size": train_config.batch_size,
            "epochs": train_config.epochs,
            "eval_batch_size": eval_bs,
            "best_epoch": history.best_epoch,
        }
        m.notes[f"relevance_{kind}_{provider.model}_nats"] = estimate.dataset_nats
        m.record_artifact(out_path, run_dir)
        _save_manifest(m, run_dir)
        print(f"relevance[{kind}, {provider.model}] = {estimate.dataset_nats:.4f} nats "
              f"({len(estimate.pointwise)} test instances, batch {eval_bs})")
    return EXIT_OK


def cmd_estimate_informativeness(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    kind = args.kind
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        store = _embedding_store(run_dir, must_exist=True)
        split = _read_kind_split(run_dir, kind)
        tuned = _tuned(run_dir, "predictor", kind)
        pred_config = v_information.PredictorConfig(
            learning_rate=float(_pick(args.lr, config, "predictor", "learning_rate", tuned.get("learning_rate", 1e-3))),
            batch_size=int(_pick(args.batch_size, config, "predictor", "batch_size", tuned.get("batch_size", 16))),
            epochs=int(_pick(args.epochs, config, "predictor", "epochs", 10)),
        )
        fit_seed, null_seed = _derived_seeds(args.seed, 2)
        train_es = _matrix(provider, [r.explanan for r in split.train], store)
        test_es = _matrix(provider, [r.explanan for r in split.test], store)
        train_labels = [r.label_index for r in split.train]
        test_labels = [r.label_index for r in split.test]
        estimate = v_information.estimate_v_information(
            train_es,
            train_labels,
            test_es,
            test_labels,
            n_classes=len(corpus.LABELS),
            config=pred_config,
            seed=fit_seed,
            eval_ids=[r.id for r in split.test],
            null_seed=null_seed,
        )
        out_path = run_dir / "estimates" / f"informativeness_{kind}_{provider.model}.csv"
        v_information.write_pvi_csv(estimate, out_path, seed=args.seed)
        m.seeds[f"estimate-informativeness/{kind}"] = args.seed
        m.seeds[f"estimate-informativeness/{kind}/fit"] = fit_seed
        m.seeds[f"estimate-informativeness/{kind}/null"] = null_seed
        m.hyperparameters[f"estimate-informativeness/{kind}"] = {
            "learning_rate": pred_config.learning_rate,
            "batch_size": pred_config.batch_size,
            "epochs": pred_config.epochs,
        }
        m.notes[f"informativeness_{kind}_{provider.model}_nats"] = estimate.v_information
        m.notes[f"informativeness_{kind}_{provider.model}_h_entropy"] = estimate.h_entropy
        m.notes[f"informativeness_{kind}_{provider.model}_h_conditional"] = estimate.h_conditional
        m.record_artifact(out_path, run_dir)
        _save_manifest(m, run_dir)
        print(f"informativeness[{kind}, {provider.model}] = {estimate.v_information:.4f} nats "
              f"(H = {estimate.h_entropy:.4f}, H|E = {estimate.h_conditional:.4f})")
    return EXIT_OK


def cmd_silver_labels(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    kind = args.kind
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        store = _embedding_store(run_dir, must_exist=True)
        split = _read_kind_split(run_dir, kind)
        records = split.test
        xs = _matrix(provider, [corpus.canonical_input(r) for r in records], store)
        es = _matrix(provider, [r.explanan for r in records], store)
        out_path = run_dir / "silver" / f"silver_{kind}_{provider.model}.csv"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "type_overlap_ratio", "edit_distance_ratio", "cosine_similarity"])
            for i, r in enumerate(records):
                labels = silver_labels.compute_silver_labels(
                    r.id, corpus.canonical_input(r), r.explanan, xs[i], es[i]
                )
                writer.writerow(
                    [
                        r.id,
                        repr(labels.type_overlap_ratio),
                        repr(labels.edit_distance_ratio),
                        repr(labels.cosine_similarity),
                    ]
                )
        m.record_artifact(out_path, run_dir)
        _save_manifest(m, run_dir)
        print(f"silver labels for {len(records)} {kind} test instances -> {out_path.name}")
    return EXIT_OK


def cmd_gptscore(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    kind = args.kind
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        backend = _backend(args, config)
        store = BytesStore(run_dir / "cache" / "responses.bin")
        split = _read_kind_split(run_dir, kind)
        records = split.test
        max_parallel = int(_pick(args.max_parallel, config, "gptscore", "max_parallel", 1))
        scores, failures = gptscore.score_records(records, gptscore.EVALUATION_ITEMS, backend, store, max_parallel)
        out_path = run_dir / "gptscore" / f"gpt_{kind}_{backend.identifier}.csv"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        item_names = [item.name for item in gptscore.EVALUATION_ITEMS]
        with out_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + item_names)
            for r in records:
                row = scores[r.id]
                writer.writerow([r.id] + ["" if row[n] is None else str(row[n]) for n in item_names])
        m.providers["gptscore"] = {"backend": backend.identifier}
        m.notes[f"gptscore_{kind}_failures"] = len(failures)
        m.record_artifact(out_path, run_dir)
        m.record_artifact(store.path, run_dir)
        _save_manifest(m, run_dir)
        print(f"scored {len(records)} x {len(item_names)} items with {backend.identifier}; {len(failures)} failures")
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        provider = _provider(args, config)
        backend = _backend(args, config)
        table = analysis_mod.ScoreTable()
        for kind in _all_kinds(run_dir):
            split = _read_kind_split(run_dir, kind)
            relevance = mi_estimators.read_pointwise_csv(
                _require_file(run_dir / "estimates" / f"relevance_{kind}_{provider.model}.csv", "estimate-relevance")
            )
            informativeness = v_information.read_pvi_csv(
                _require_file(
                    run_dir / "estimates" / f"informativeness_{kind}_{provider.model}.csv",
                    "estimate-informativeness",
                )
            )
            silver_path = _require_file(run_dir / "silver" / f"silver_{kind}_{provider.model}.csv", "silver-labels")
            silver = {}
            with silver_path.open("r", encoding="utf-8", newline="") as fh:
                for rec in csv.DictReader(fh):
                    silver[rec["id"]] = rec
            gpt_path = _require_file(run_dir / "gptscore" / f"gpt_{kind}_{backend.identifier}.csv", "gptscore")
            gpt = {}
            with gpt_path.open("r", encoding="utf-8", newline="") as fh:
                for rec in csv.DictReader(fh):
                    gpt[rec["id"]] = rec
            for r in split.test:
                row = analysis_mod.ScoreRow(id=r.id, embedding=provider.model, kind=kind, label=r.label)
                row.relevance_nats = relevance.get(r.id)
                row.informativeness_nats = informativeness.get(r.id)
                s = silver.get(r.id)
                if s is not None:
                    row.type_overlap_ratio = float(s["type_overlap_ratio"])
                    row.edit_distance_ratio = float(s["edit_distance_ratio"])
                    row.cosine_similarity = float(s["cosine_similarity"])
                g = gpt.get(r.id)
                if g is not None:
                    for item in gptscore.EVALUATION_ITEMS:
                        cell = g.get(item.name, "")
                        row.gpt_scores[item.name] = int(cell) if cell != "" else None
                table.add(row)
        out_path = run_dir / "analysis" / "score_table.csv"
        analysis_mod.write_score_table(table, out_path)
        m.record_artifact(out_path, run_dir)
        _save_manifest(m, run_dir)
        print(f"score table with {len(table)} rows -> {out_path.name}")
    return EXIT_OK


def cmd_report(args) -> int:
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    with manifest_mod.RunLock(run_dir):
        m = _open_manifest(run_dir, config)
        table_path = _require_file(run_dir / "analysis" / "score_table.csv", "analyze")
        table = analysis_mod.read_score_table(table_path)
        run_info = {
            "config_hash": m.config_hash,
            "seeds": m.seeds,
            "providers": m.providers,
            "hyperparameters": m.hyperparameters,
        }
        report_dir = run_dir / "report"
        analysis_mod.emit_report(table, report_dir, run_info=run_info, k_extremes=args.extremes)
        for path in sorted(report_dir.iterdir()):
            if path.is_file():
                m.record_artifact(path, run_dir)
        _save_manifest(m, run_dir)
        print(f"report written to {report_dir}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="explinfo",
        description="Information scores for text explanations: estimate, label, and analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--run-dir", required=True, help="run directory holding all artifacts")
        p.add_argument("--config", help="TOML config file; flags override its values")
        if seed_required:
            p.add_argument("--seed", type=int, required=True, help="seed for every random choice in this stage")

    def provider_flags(p):
        p.add_argument("--provider", choices=["hash", "remote"], help="embedding provider")
        p.add_argument("--dim", type=int, help="hash provider dimension")
        p.add_argument("--hash-seed", type=int, help="hash provider seed")

    def backend_flags(p):
        p.add_argument("--backend", choices=["mock", "remote"], help="completion backend")
        p.add_argument("--backend-seed", type=int, help="mock backend seed")

    p = sub.add_parser("split", help="split corpora into train/validation/test")
    common(p, seed_required=True)
    p.add_argument("--input", action="append", required=True, help="corpus JSONL (repeat per explanation kind)")
    p.add_argument("--val-ratio", type=float, help="validation fraction")
    p.add_argument("--test-ratio", type=float, help="test fraction")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("embed", help="warm the embedding cache for every split text")
    common(p)
    provider_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("validate-estimators", help="check the contrastive bound on Gaussians with known MI")
    common(p, seed_required=True)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--targets", default="1,2", help="comma-separated true MI values in nats")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--n-samples", type=int, default=10_000)
    p.add_argument("--n-validation", type=int, default=2_000)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-batch-size", type=int, help="estimate batch size (training batch size by default)")
    p.set_defaults(func=cmd_validate_estimators)

    p = sub.add_parser("tune", help="seeded random search over the training hyperparameters")
    common(p, seed_required=True)
    provider_flags(p)
    p.add_argument("--stage", choices=["infonce", "predictor"], required=True)
    p.add_argument("--kind", choices=list(corpus.KINDS), required=True)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("estimate-relevance", help="train the critic and score the test split")
    common(p, seed_required=True)
    provider_flags(p)
    p.add_argument("--kind", choices=list(corpus.KINDS), required=True)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-batch-size", type=int)
    p.set_defaults(func=cmd_estimate_relevance)

    p = sub.add_parser("estimate-informativeness", help="fit label predictors and score the test split")
    common(p, seed_required=True)
    provider_flags(p)
    p.add_argument("--kind", choices=list(corpus.KINDS), required=True)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_estimate_informativeness)

    p = sub.add_parser("silver-labels", help="lexical and semantic reference scores for the test split")
    common(p)
    provider_flags(p)
    p.add_argument("--kind", choices=list(corpus.KINDS), required=True)
    p.set_defaults(func=cmd_silver_labels)

    p = sub.add_parser("gptscore", help="Likert-scale judgments through the completion backend")
    common(p)
    backend_flags(p)
    p.add_argument("--kind", choices=list(corpus.KINDS), required=True)
    p.add_argument("--max-parallel", type=int)
    p.set_defaults(func=cmd_gptscore)

    p = sub.add_parser("analyze", help="join all per-kind scores into one table")
    common(p)
    provider_flags(p)
    backend_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="summary tables, correlations, tests, and scatter plots")
    common(p)
    p.add_argument("--extremes", type=int, default=5, help="instances listed per end of each score")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TransportError, ProviderResponseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (
        numerics.NumericsError,
        mi_estimators.TrainingDivergedError,
        v_information.VInformationError,
        synthetic.SearchError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        corpus.CorpusError,
        analysis_mod.AnalysisError,
        silver_labels.SilverLabelError,
        mi_estimators.EstimatorError,
        synthetic.SyntheticError,
        embeddings_mod.EmbeddingError,
        manifest_mod.ManifestError,
        manifest_mod.LockHeldError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
