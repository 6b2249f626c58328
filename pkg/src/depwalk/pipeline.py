"""Stage orchestration shared by the CLI subcommands.

Every stage reads its inputs from files and writes its artifact back to the
work directory, so running the stages one by one is equivalent to running
``pipeline`` (feature vectors are always rebuilt from the on-disk embedding,
never from in-memory training state).
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from . import contexts, embedding, evaluation, forest, oracle, simindex, synth, walks
from .config import PipelineConfig, workdir_path
from .errors import DepwalkError
from .flows import (biflow_to_uniflows, filter_tcp_udp, parse_biflows,
                    parse_flows, read_flows_csv, write_flows_csv)
from .graph import read_graph_jsonl, reservoir_sample_edges, select_top_addresses, write_graph_jsonl
from .walks import WalkLabel

log = logging.getLogger(__name__)

ARTIFACTS = {
    "flows": "flows.csv",
    "graph": "graph.jsonl",
    "walks": "walks.jsonl",
    "embedding": "embedding.bin",
    "embedding_manifest": "embedding.json",
    "ground_truth": "ground_truth.csv",
    "labels": "labels.csv",
    "model": "model.json",
    "predictions": "predictions.csv",
    "eval_report": "eval_report.json",
    "baseline": "baseline.csv",
    "baseline_summary": "baseline_summary.json",
    "synth_flows": "synth_flows.csv",
    "planted_truth": "planted_truth.csv",
}


def artifact(cfg: PipelineConfig, name: str) -> Path:
    return workdir_path(cfg) / ARTIFACTS[name]


def _ensure_workdir(cfg: PipelineConfig) -> None:
    workdir_path(cfg).mkdir(parents=True, exist_ok=True)


def stage_synth(cfg: PipelineConfig) -> Path:
    _ensure_workdir(cfg)
    flows, truth = synth.generate(cfg.synth)
    out = artifact(cfg, "synth_flows")
    write_flows_csv(flows, out)
    oracle.write_ground_truth(truth, artifact(cfg, "planted_truth"))
    log.info("synth: %d flows, %d planted records", len(flows), len(truth))
    return out


def stage_ingest(cfg: PipelineConfig, flows_in) -> Path:
    """Parse, optionally split biflows, filter to TCP/UDP, write flows.csv."""
    _ensure_workdir(cfg)
    path = Path(flows_in)
    if not path.exists():
        raise FileNotFoundError(None, "input flow file not found", str(path))
    with open(path, "r", encoding="utf-8") as fh:
        if cfg.ingest.biflows:
            biflows, report = parse_biflows(fh, cfg.ingest.format)
            records = []
            for b in biflows:
                records.extend(biflow_to_uniflows(b, cfg.ingest.split_mode))
        else:
            records, report = parse_flows(fh, cfg.ingest.format)
    for lineno, message in report.errors:
        log.warning("%s:%d: %s", path, lineno, message)
    if report.dropped_self_loops:
        log.info("dropped %d self-loop records", report.dropped_self_loops)
    kept = filter_tcp_udp(records)
    log.info("ingest: %d records parsed, %d TCP/UDP flows kept", report.parsed, len(kept))
    out = artifact(cfg, "flows")
    write_flows_csv(kept, out)
    return out


def _read_preprocessed(cfg: PipelineConfig):
    path = artifact(cfg, "flows")
    if not path.exists():
        raise FileNotFoundError(None, "preprocessed flow file not found (run ingest first)", str(path))
    flows, report = read_flows_csv(path)
    if not report.ok:
        raise DepwalkError(f"{path}: {len(report.errors)} invalid lines in a pipeline artifact")
    return flows


def stage_sample(cfg: PipelineConfig) -> Path:
    flows = _read_preprocessed(cfg)
    selected = select_top_addresses(flows, cfg.sampler)
    graph = reservoir_sample_edges(flows, selected, cfg.sampler)
    out = artifact(cfg, "graph")
    write_graph_jsonl(graph, out)
    log.info("sample: %d vertices, %d edges", len(graph.vertices), graph.n_edges)
    return out


def _read_graph(cfg: PipelineConfig):
    path = artifact(cfg, "graph")
    if not path.exists():
        raise FileNotFoundError(None, "graph artifact not found (run sample first)", str(path))
    return read_graph_jsonl(path)


def stage_walks(cfg: PipelineConfig) -> Path:
    graph = _read_graph(cfg)
    positives = walks.generate_walks(graph, cfg.walks)
    negatives = walks.generate_negative_walks(graph, positives, cfg.walks)
    out = artifact(cfg, "walks")
    walks.write_walks_jsonl(positives + negatives, out)
    log.info("walks: %d positive, %d negative", len(positives), len(negatives))
    return out


def stage_embed(cfg: PipelineConfig) -> Path:
    graph = _read_graph(cfg)
    walk_path = artifact(cfg, "walks")
    if not walk_path.exists():
        raise FileNotFoundError(None, "walks artifact not found (run walks first)", str(walk_path))
    all_walks = walks.read_walks_jsonl(walk_path)
    pos_pairs = []
    neg_pairs = []
    for walk in all_walks:
        pairs = contexts.split_walk(walk, cfg.context.size, cfg.context.include_trailing)
        (pos_pairs if walk.label is WalkLabel.POSITIVE else neg_pairs).extend(pairs)
    emb = embedding.train_embedding(pos_pairs, neg_pairs, graph.vertices, cfg.embedding)
    out = artifact(cfg, "embedding")
    embedding.save_embedding(emb, out, artifact(cfg, "embedding_manifest"))
    log.info("embed: %d vertices x %d dims from %d/%d context pairs",
             len(emb.vertex_index), emb.dims, len(pos_pairs), len(neg_pairs))
    return out


def stage_oracle(cfg: PipelineConfig) -> Path:
    flows = _read_preprocessed(cfg)
    records = oracle.enumerate_all(flows, cfg.oracle)
    out = artifact(cfg, "ground_truth")
    oracle.write_ground_truth(records, out)
    log.info("oracle: %d dependency records", len(records))
    return out


def _read_embedding(cfg: PipelineConfig):
    path = artifact(cfg, "embedding")
    if not path.exists():
        raise FileNotFoundError(None, "embedding artifact not found (run embed first)", str(path))
    return embedding.load_embedding(path)


def _read_labels(cfg: PipelineConfig, emb) -> list[forest.LabeledPair]:
    path = artifact(cfg, "labels")
    if not path.exists():
        raise FileNotFoundError(None, "label artifact not found (run train first)", str(path))
    pairs = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for src, dst, label in reader:
            pairs.append(forest.LabeledPair(src, dst, embedding.dependency_vector(emb, src, dst),
                                            label == "1"))
    return pairs


def stage_train(cfg: PipelineConfig) -> Path:
    gt_path = artifact(cfg, "ground_truth")
    if not gt_path.exists():
        raise FileNotFoundError(None, "ground truth not found (run oracle first)", str(gt_path))
    emb = _read_embedding(cfg)
    records = oracle.read_ground_truth(gt_path)
    known = set(emb.vertex_index)
    gt_pairs = sorted({(r.src, r.dst) for r in records
                       if r.src in known and r.dst in known})
    if not gt_pairs:
        raise DepwalkError("no ground-truth pair has both endpoints among the sampled vertices")
    labels = forest.build_label_set(gt_pairs, known, cfg.seed_for("labels"),
                                    unordered=cfg.evaluation.unordered_pairs)
    for pair in labels:
        pair.features = embedding.dependency_vector(emb, pair.src, pair.dst)
    with open(artifact(cfg, "labels"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "label"])
        for pair in labels:
            writer.writerow([pair.src, pair.dst, int(pair.label)])
    model = forest.train_forest(labels, cfg.forest)
    out = artifact(cfg, "model")
    forest.save_forest(model, out)
    log.info("train: %d labelled pairs, %d trees", len(labels), len(model.trees))
    return out


def _read_model(cfg: PipelineConfig):
    path = artifact(cfg, "model")
    if not path.exists():
        raise FileNotFoundError(None, "model artifact not found (run train first)", str(path))
    return forest.load_forest(path)


def stage_predict(cfg: PipelineConfig, pairs_path=None) -> Path:
    emb = _read_embedding(cfg)
    model = _read_model(cfg)
    if pairs_path is not None:
        pairs = []
        with open(pairs_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for row in reader:
                if not row or row[0] == "src":
                    continue
                pairs.append((row[0], row[1]))
    else:
        pairs = [(p.src, p.dst) for p in _read_labels(cfg, emb)]
    out = artifact(cfg, "predictions")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "probability"])
        for src, dst in pairs:
            prob = forest.predict_proba(model, embedding.dependency_vector(emb, src, dst))
            writer.writerow([src, dst, repr(prob)])
    log.info("predict: %d pairs scored", len(pairs))
    return out


def stage_eval(cfg: PipelineConfig) -> Path:
    emb = _read_embedding(cfg)
    labels = _read_labels(cfg, emb)
    summary = evaluation.repeated_eval(
        labels, cfg.forest,
        seed=cfg.seed_for("evaluation"),
        n_splits=cfg.evaluation.n_splits,
        fractions=cfg.evaluation.fractions,
        threshold=cfg.evaluation.threshold,
    )
    out = artifact(cfg, "eval_report")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(summary.to_json())
    log.info("eval: auc=%s ap=%s chance=%.3f",
             summary.roc_auc, summary.average_precision, summary.chance_level)
    return out


def stage_simindex(cfg: PipelineConfig) -> Path:
    graph = _read_graph(cfg)
    emb = _read_embedding(cfg)
    model = _read_model(cfg)
    labels = _read_labels(cfg, emb)
    scored = [(p.src, p.dst, forest.predict_proba(model, p.features)) for p in labels]
    rows, correlations = simindex.baseline_report(graph, scored)
    out = artifact(cfg, "baseline")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "AA", "CN", "PA", "RA", "model_probability"])
        for row in rows:
            writer.writerow([row["src"], row["dst"], repr(row["AA"]), repr(row["CN"]),
                             repr(row["PA"]), repr(row["RA"]), repr(row["model_probability"])])
    with open(artifact(cfg, "baseline_summary"), "w", encoding="utf-8") as fh:
        json.dump({"correlations": correlations, "n_pairs": len(rows)}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    log.info("simindex: %d pairs scored", len(rows))
    return out


def run_pipeline(cfg: PipelineConfig, flows_input=None, use_synth: bool = False,
                 resume: bool = False) -> dict[str, Path]:
    """Run every stage in order; with ``resume`` a stage whose artifact
    already exists is skipped."""
    _ensure_workdir(cfg)
    produced: dict[str, Path] = {}

    def wants(name: str) -> bool:
        return not (resume and artifact(cfg, name).exists())

    if use_synth:
        if wants("synth_flows"):
            stage_synth(cfg)
        flows_input = artifact(cfg, "synth_flows")
        produced["synth_flows"] = flows_input
    if flows_input is None:
        raise DepwalkError("pipeline needs an input flow file (or synthetic generation)")
    if wants("flows"):
        stage_ingest(cfg, flows_input)
    produced["flows"] = artifact(cfg, "flows")
    for name, stage in (("graph", stage_sample), ("walks", stage_walks),
                        ("embedding", stage_embed), ("ground_truth", stage_oracle),
                        ("model", stage_train), ("predictions", stage_predict),
                        ("eval_report", stage_eval), ("baseline", stage_simindex)):
        if wants(name):
            stage(cfg)
        produced[name] = artifact(cfg, name)
    return produced
