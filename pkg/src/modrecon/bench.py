"""Pipelines behind the command-line verbs: train, eval, infer-bench, scaling."""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .apam import NewNode, infer_apam, infer_plain, prepare_inference
from .cluster import kmeans_fit, sweep_k
from .gae import GaeModel, gae_forward, gae_input, gae_train
from .graph import (
    Graph,
    load_edge_list,
    load_features,
    load_labels,
    modularity_matrix,
    normalized_adjacency,
    _text_ids,
    save_assignment,
)
from .metrics import MAX_ACCURACY_K, accuracy, modularity_score, nmi
from .nn import TrainingConfig, adam_update, backprop_through_layers, forward_layers, load_checkpoint, loss_gradient_wrt_embedding, save_checkpoint
from .onestage import OneStageModel, build_input, embed, init_model, train_onestage
from .report import RunReport, SeedResult, Timings, code_version, write_table_csv
from .seeding import derive_rng
from .synthetic import planted_partition
from .twostage import ModularityInput, TwoStageModel, embed_twostage, init_twostage, run_epoch, train_twostage

logger = logging.getLogger(__name__)

VARIANTS = (("plain-1", 1, False), ("apam-1", 1, True), ("plain-2", 2, False), ("apam-2", 2, True), ("plain-3", 3, False))
MIN_HELD_OUT = 10


# datasets ------------------------------------------------------------------


def load_dataset(spec):
    if not spec.edges:
        raise ValueError("no edge file given")
    graph = load_edge_list(spec.edges)
    if spec.features:
        graph = load_features(spec.features, graph)
    if spec.labels:
        graph = load_labels(spec.labels, graph)
    return graph


def dataset_info(graph, spec=None):
    info = {"n_nodes": graph.n_nodes, "n_edges": graph.total_edges, "n_features": graph.n_features,
            "has_labels": graph.labels is not None}
    if spec is not None:
        info.update({"edges": spec.edges, "features": spec.features, "labels": spec.labels})
    return info


# training and embedding ---------------------------------------------------


def train_model(kind, graph, config):
    """Returns ``(model, Z)``."""
    if kind == "onestage":
        return train_onestage(graph, config)
    if kind == "twostage":
        return train_twostage(graph, config)
    if kind == "gae":
        return gae_train(graph, config)
    raise ValueError(f"unknown model kind {kind!r}")


def checkpoint_extra(kind, graph, config):
    return {"n_nodes": graph.n_nodes, "n_features": graph.n_features, "embed_seed": config.seed}


def embedding_from_checkpoint(path, graph):
    """Rebuild the embedding of ``graph`` from a saved model; returns ``(kind, config, Z)``."""
    kind, weights, config, extra = load_checkpoint(path)
    if extra.get("n_nodes") not in (None, graph.n_nodes) or extra.get("n_features", 0) != graph.n_features:
        raise ValueError(f"checkpoint expects {extra.get('n_nodes')} nodes and {extra.get('n_features', 0)} "
                         f"features, dataset has {graph.n_nodes} and {graph.n_features}")
    if kind == "onestage":
        B = modularity_matrix(graph)
        model = OneStageModel(weights, config, normalized_adjacency(graph), build_input(B, graph))
        return kind, config, embed(model)
    if kind == "twostage":
        model = TwoStageModel(weights, config, graph.n_nodes + graph.n_features)
        rng = derive_rng(extra.get("embed_seed", config.seed), "embed")
        return kind, config, embed_twostage(model, graph, rng)
    if kind == "gae":
        return kind, config, gae_forward(GaeModel(weights, normalized_adjacency(graph)), gae_input(graph))
    raise ValueError(f"unknown checkpoint kind {kind!r}")


# clustering and scoring ---------------------------------------------------


def resolve_k(spec, graph, k=None, k_range=None):
    """Fixed ``k`` or a sweep range; label count when neither is given."""
    k = spec.k if k is None else k
    k_range = spec.k_range if k_range is None else k_range
    if k is not None and k < 2:
        raise ValueError("k must be >= 2 (a single community has Q = 0)")
    if k is None and k_range is None:
        if graph.labels is None:
            raise ValueError("give k or k_range when the dataset has no labels")
        k = int(graph.labels.max()) + 1
    return k, k_range


def cluster(Z, graph, k, k_range, restarts, seed):
    """``(labels, chosen_k, sweep_table)``."""
    if k is not None:
        res = kmeans_fit(Z, k, restarts, seed)
        return res.labels, k, None
    lo, hi = k_range
    sweep = sweep_k(Z, graph, range(lo, hi + 1), restarts, seed)
    return sweep.best.labels, sweep.best_k, sweep.table


def score(graph, labels, metrics):
    """Q always; NMI/AC when requested and labels exist. Returns ``(scores, errors)``."""
    out = {"Q": modularity_score(graph, labels), "NMI": None, "AC": None}
    errors = []
    wants = [m for m in ("nmi", "ac") if m in metrics]
    if wants and graph.labels is None:
        errors.append(f"{'/'.join(m.upper() for m in wants)} requested but the dataset has no labels")
        return out, errors
    if "nmi" in metrics:
        out["NMI"] = nmi(labels, graph.labels)
    if "ac" in metrics:
        k = max(int(labels.max()), int(graph.labels.max())) + 1
        if k > MAX_ACCURACY_K:
            errors.append(f"AC skipped: {k} communities exceed the matching limit {MAX_ACCURACY_K}")
        else:
            out["AC"] = accuracy(labels, graph.labels)
    return out, errors


def _add_errors(report, errors):
    for e in errors:
        if e not in report.errors:
            report.errors.append(e)


# train / eval ---------------------------------------------------------------


def run_train(spec, out_dir, graph=None, timings=None):
    """Train one model per seed, cluster, score, and persist everything under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = timings or Timings()
    with timings.phase("load"):
        graph = graph or load_dataset(spec)
    k, k_range = resolve_k(spec, graph)
    report = RunReport("train", spec.to_dict(), code_version(), dataset_info(graph, spec))
    if spec.epochs == 0:
        report.notes.append("untrained run: epochs = 0, embeddings come from the initial weights")
    for seed in spec.seeds:
        cfg = spec.training_config(seed)
        with timings.phase("train", seed):
            model, Z = train_model(spec.model, graph, cfg)
        save_checkpoint(out / f"checkpoint_seed{seed}.npz", spec.model, model.weights, cfg,
                        checkpoint_extra(spec.model, graph, cfg))
        np.save(out / f"embedding_seed{seed}.npy", Z)
        with timings.phase("cluster", seed):
            labels, chosen_k, table = cluster(Z, graph, k, k_range, spec.restarts, seed)
        assign = f"assignment_seed{seed}.txt"
        save_assignment(out / assign, graph, labels)
        scores, errors = score(graph, labels, spec.metrics)
        _add_errors(report, errors)
        report.add_seed(SeedResult(seed, chosen_k, scores["Q"], scores["NMI"], scores["AC"],
                                   spec.epochs == 0, [float(x) for x in model.loss_trace], assign, table))
        if table is not None:
            write_table_csv(out / f"sweep_seed{seed}.csv", table, ["k", "Q", "inertia"])
    report.write(out)
    timings.write(out / "timings.csv")
    return report


def run_eval(spec, checkpoints, out_dir, graph=None, k=None, k_range=None, timings=None):
    """Re-embed ``graph`` with saved models, cluster, score and write a report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = timings or Timings()
    graph = graph or load_dataset(spec)
    k, k_range = resolve_k(spec, graph, k, k_range)
    report = RunReport("eval", spec.to_dict(), code_version(), dataset_info(graph, spec))
    report.extra["checkpoints"] = [Path(c).name for c in checkpoints]
    for path in checkpoints:
        with timings.phase("embed"):
            kind, cfg, Z = embedding_from_checkpoint(path, graph)
        seed = cfg.seed
        with timings.phase("cluster", seed):
            labels, chosen_k, table = cluster(Z, graph, k, k_range, spec.restarts, seed)
        assign = f"eval_assignment_seed{seed}.txt"
        save_assignment(out / assign, graph, labels)
        scores, errors = score(graph, labels, spec.metrics)
        _add_errors(report, errors)
        report.add_seed(SeedResult(seed, chosen_k, scores["Q"], scores["NMI"], scores["AC"],
                                   cfg.epochs == 0, [], assign, table))
        if table is not None:
            write_table_csv(out / f"eval_sweep_seed{seed}.csv", table, ["k", "Q", "inertia"])
    report.write(out)
    timings.write(out / "timings.csv")
    return report


# held-out inference ---------------------------------------------------------


def holdout_split(graph, fraction, rng, min_nodes=MIN_HELD_OUT):
    """Hide a uniform ``fraction`` of nodes.

    Returns ``(base, new_nodes, held_ids)`` where ``base`` is the induced
    graph on the kept nodes, ``new_nodes`` carry their edges into ``base``
    as stubs, and ``held_ids`` are their indices in ``graph``. Held-out nodes
    with no edge into ``base`` are dropped (they cannot be placed).
    """
    if not 0.0 < fraction <= 0.5:
        raise ValueError("split_fraction must be in (0, 0.5] for inference")
    n = graph.n_nodes
    n_held = int(round(fraction * n))
    held = np.sort(rng.choice(n, size=n_held, replace=False))
    keep = np.setdiff1d(np.arange(n), held)
    base = graph.subgraph(keep)
    pos = np.full(n, -1, dtype=np.int64)
    pos[keep] = np.arange(len(keep))
    nodes, ids = [], []
    for v in held:
        stubs = pos[graph.neighbors(v)]
        stubs = stubs[stubs >= 0]
        if stubs.size:
            feats = None if graph.features is None else graph.features[v]
            nodes.append(NewNode(stubs, feats, id=graph.inverse_id_map[v]))
            ids.append(v)
    if len(nodes) < min_nodes:
        raise ValueError(f"held-out split has {len(nodes)} usable nodes, need at least {min_nodes}")
    return base, nodes, np.asarray(ids, dtype=np.int64)


def run_inference_variants(model, base, base_labels, nodes, seed, fine_tune_epochs=20):
    """Infer ``nodes`` under every variant; returns ``{variant: (pred, latencies, fine_tune_s)}``."""
    inf = {}
    for L in sorted({v[1] for v in VARIANTS}):
        inf[L] = prepare_inference(model, base, base_labels, L, epochs=0 if L == model.n_layers else fine_tune_epochs,
                                   seed=seed)
    # variants are interleaved per node so that machine drift hits them equally;
    # each keeps its own random stream
    runs = [(infer_apam if aligned else infer_plain, inf[L], derive_rng(seed, "infer", i))
            for i, (_, L, aligned) in enumerate(VARIANTS)]
    preds = np.empty((len(VARIANTS), len(nodes)), dtype=np.int64)
    lat = np.empty((len(VARIANTS), len(nodes)))
    for j, node in enumerate(nodes):
        for i, (fn, model_l, rng) in enumerate(runs):
            t0 = time.perf_counter()
            preds[i, j], _ = fn(model_l, node, rng)
            lat[i, j] = time.perf_counter() - t0
    return {name: (preds[i], lat[i], inf[L].fine_tune_seconds) for i, (name, L, _) in enumerate(VARIANTS)}


def run_infer_bench(spec, out_dir, graph=None, n_synthetic=5000, timings=None):
    """Held-out inference benchmark over the five variants, for every seed."""
    from threadpoolctl import threadpool_limits

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = timings or Timings()
    if len(spec.layer_dims) != 3:
        raise ValueError("the inference benchmark needs a 3-layer two-stage model")
    if spec.split_fraction <= 0:
        raise ValueError("split_fraction must be positive for the inference benchmark")
    synthetic = graph is None and not spec.edges
    report = RunReport("infer-bench", spec.to_dict(), code_version())
    if synthetic:
        report.notes.append(f"desk-scale substitute: synthetic planted-partition graph, N={n_synthetic}, "
                            "10 communities, average degree 10, in/out ratio 4:1")
    per_seed, inferences = [], []
    for seed in spec.seeds:
        g = graph or (planted_partition(n_synthetic, seed=seed) if synthetic else load_dataset(spec))
        if g.labels is None:
            raise ValueError("held-out NMI needs ground-truth labels")
        base, nodes, held = holdout_split(g, spec.split_fraction, derive_rng(seed, "holdout"))
        cfg = spec.training_config(seed)
        with timings.phase("train", seed):
            model, Z = train_twostage(base, cfg)
        k = spec.k or int(g.labels.max()) + 1
        base_labels = kmeans_fit(Z, k, spec.restarts, seed).labels
        with threadpool_limits(1):
            res = run_inference_variants(model, base, base_labels, nodes, seed)
        truth = g.labels[held]
        ref = np.mean(res["plain-3"][1])
        for name, (pred, lat, ft) in res.items():
            timings.add(f"fine-tune:{name}", seed, ft)
            timings.add(f"infer-mean:{name}", seed, float(np.mean(lat)))
            per_seed.append({"seed": seed, "variant": name, "n_held_out": len(nodes),
                             "nmi": nmi(pred, truth), "mean_latency_us": 1e6 * float(np.mean(lat)),
                             "speedup_vs_plain3": float(ref / np.mean(lat)), "fine_tune_s": ft})
            inferences.extend({"seed": seed, "variant": name, "id": node.id, "community": int(c),
                               "latency_microseconds": 1e6 * float(t)} for node, c, t in zip(nodes, pred, lat))
        report.add_seed(SeedResult(seed, k, modularity_score(base, base_labels), nmi(base_labels, base.labels),
                                   None, spec.epochs == 0, [float(x) for x in model.loss_trace]))
    table = summarize_bench(per_seed)
    report.extra["held_out_nmi"] = {r["variant"]: r["nmi"] for r in table}
    report.extra["per_seed_nmi"] = [{"seed": r["seed"], "variant": r["variant"], "nmi": r["nmi"]} for r in per_seed]
    report.write(out)
    write_table_csv(out / "infer_bench.csv", table)
    write_table_csv(out / "infer_bench_per_seed.csv", per_seed)
    write_table_csv(out / "inferences.csv", inferences, ["seed", "variant", "id", "community", "latency_microseconds"])
    timings.write(out / "timings.csv")
    return report, table


def summarize_bench(per_seed):
    table = []
    for name, L, aligned in VARIANTS:
        rows = [r for r in per_seed if r["variant"] == name]
        table.append({"variant": name, "layers": L, "aligned": aligned,
                      "nmi": float(np.mean([r["nmi"] for r in rows])),
                      "mean_latency_us": float(np.mean([r["mean_latency_us"] for r in rows])),
                      "speedup_vs_plain3": float(np.mean([r["speedup_vs_plain3"] for r in rows])),
                      "fine_tune_s": float(np.mean([r["fine_tune_s"] for r in rows]))})
    return table


# scaling ---------------------------------------------------------------------


def fit_slope(ns, ts):
    """Least-squares slope of ``log t`` against ``log n``."""
    x, y = np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(ts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _onestage_epoch(graph, config):
    B = modularity_matrix(graph)
    model = init_model(graph, config, B)

    def step():
        acts = forward_layers(model.a_norm, model.input, model.weights)
        up = loss_gradient_wrt_embedding(acts[-1], B, config.decoder_nonlinearity)
        grads = backprop_through_layers(acts, model.weights, up, model.a_norm)
        model.weights = [adam_update(lw, g, config.learning_rate) for lw, g in zip(model.weights, grads)]

    return step


def _twostage_epoch(graph, config):
    model = init_twostage(graph, config)
    src = ModularityInput(graph)
    counter = iter(range(1 << 30))

    def step():
        i = next(counter)
        run_epoch(model, src, derive_rng(config.seed, "order", i), derive_rng(config.seed, "sample", i))

    return step


def run_scaling(n_list, kinds=("twostage",), degree=10.0, repeats=3, seed=0, config=None):
    """Median per-epoch wall time on planted-partition graphs; returns ``(rows, slopes)``."""
    from threadpoolctl import threadpool_limits

    ns = [int(n) for n in n_list]
    if len(set(ns)) < 3 or ns != sorted(ns) or len(set(ns)) != len(ns):
        raise ValueError("n_list must hold at least three distinct sizes in ascending order")
    config = config or TrainingConfig(neighbor_samples=10, minibatch_size=16, seed=seed)
    rows, slopes = [], {}
    for kind in kinds:
        makers = {"onestage": _onestage_epoch, "twostage": _twostage_epoch}
        if kind not in makers:
            raise ValueError(f"scaling supports {sorted(makers)}, got {kind!r}")
        med = []
        for n in ns:
            g = planted_partition(n, avg_degree=degree, seed=seed)
            step = makers[kind](g, replace(config, seed=seed))
            times = []
            with threadpool_limits(1):
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    step()
                    times.append(time.perf_counter() - t0)
            med.append(float(np.median(times)))
            rows.append({"kind": kind, "n_nodes": n, "n_edges": g.total_edges, "seconds": med[-1], "repeats": repeats})
            logger.info("%s N=%d %.3fs", kind, n, med[-1])
        slopes[kind] = fit_slope(ns, med)
    return rows, slopes


# new-node records -------------------------------------------------------------


def read_new_nodes(path, graph):
    """Parse ``{id, stubs, features}`` records (JSON lines or a JSON list).

    Stubs are node labels as they appear in the edge file.
    """
    import json

    text = Path(path).read_text()
    stripped = text.lstrip()
    records = json.loads(text) if stripped.startswith("[") else [json.loads(l) for l in text.splitlines() if l.strip()]
    nodes = []
    lookup = _text_ids(graph)
    for n, rec in enumerate(records, 1):
        try:
            stubs = [lookup[str(s)] for s in rec["stubs"]]
        except KeyError as exc:
            raise ValueError(f"{path}: record {n}: unknown stub node {exc.args[0]!r}") from None
        node = NewNode(stubs, rec.get("features"), rec.get("id", n - 1))
        node.check(graph)
        nodes.append(node)
    return nodes


def run_new_nodes(spec, checkpoint, records, out_dir, variant="apam", n_layers=1, graph=None,
                  fine_tune_epochs=None, timings=None):
    """Assign new nodes to the communities of a trained two-stage checkpoint.

    Communities come from clustering the checkpoint's embedding of the base
    graph; results go to ``new_nodes.jsonl`` as ``{id, community,
    latency_microseconds}`` records.
    """
    import json

    from .apam import FINE_TUNE_EPOCHS

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = timings or Timings()
    graph = graph or load_dataset(spec)
    kind, weights, config, extra = load_checkpoint(checkpoint)
    if kind != "twostage":
        raise ValueError("new-node inference needs a two-stage checkpoint")
    if variant not in ("apam", "plain"):
        raise ValueError("variant must be 'apam' or 'plain'")
    _, _, Z = embedding_from_checkpoint(checkpoint, graph)
    k, k_range = resolve_k(spec, graph)
    labels, _, _ = cluster(Z, graph, k, k_range, spec.restarts, config.seed)
    model = TwoStageModel(weights, config, graph.n_nodes + graph.n_features)
    epochs = FINE_TUNE_EPOCHS if fine_tune_epochs is None else fine_tune_epochs
    with timings.phase("fine-tune", config.seed):
        inf = prepare_inference(model, graph, labels, n_layers, epochs=0 if n_layers == model.n_layers else epochs)
    nodes = read_new_nodes(records, graph) if not isinstance(records, list) else records
    fn = infer_apam if variant == "apam" else infer_plain
    rng = derive_rng(config.seed, "infer")
    rows = []
    for node in nodes:
        t0 = time.perf_counter()
        c, _ = fn(inf, node, rng)
        rows.append({"id": node.id, "community": int(c), "latency_microseconds": 1e6 * (time.perf_counter() - t0)})
    with open(out / "new_nodes.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    timings.add("infer-total", config.seed, sum(r["latency_microseconds"] for r in rows) * 1e-6)
    timings.write(out / "timings.csv")
    return rows
