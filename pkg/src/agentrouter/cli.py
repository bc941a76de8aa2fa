"""``agentrouter`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import BackendConfig, BackendError, HTTPBackend, MockBackend, judge_agent_entities, run_agents
from .config import ConfigError, RunConfig, load_config
from .dataio import (
    DESIGNS,
    AgentProfile,
    DataError,
    canonical_order,
    default_profiles,
    join_for_training,
    load_agent_cache,
    load_dataset,
    make_splits,
)
from .embed import TextEmbedder, import_embeddings
from .evaluate import (
    TABLE_METHODS,
    aggregate_scores,
    baselines,
    exact_match,
    format_table,
    report_rows,
    token_f1,
    topk_deltas,
    transfer_report,
)
from .gnn import NumericError, forward, load_checkpoint
from .graph import GraphError, graph_path, graph_stats, load_graph, save_graph
from .pipeline import (
    agent_f1_matrix,
    encode,
    graph_for_record,
    load_agent_entity_map,
    make_examples,
    record_annotations,
    write_agent_entity_map,
)
from .route import fuse
from .train import fit

logger = logging.getLogger("agentrouter")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class MissingReference(DataError):
    pass


# ---------------------------------------------------------------- plumbing


def _effective_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seeds = {args.seed}")
    if args.k is not None:
        overrides.append(f"k = {args.k}")
    if args.drop_mode is not None:
        overrides.append(f"drop_mode = {args.drop_mode}")
    if args.trust_cache_f1:
        overrides.append("trust_cache_f1 = true")
    return load_config(args.config, overrides)


def _out_dir(args, name: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = Path("runs") / f"{name}-{stamp}"
        n = 1
        while out.exists():
            out = Path("runs") / f"{name}-{stamp}-{n}"
            n += 1
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({c: (f"{r[c]:.6f}" if isinstance(r[c], float) else r[c]) for c in columns})


@dataclass
class Data:
    config: RunConfig
    profiles: list
    train: list
    val: list
    test: list
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def agent_ids(self) -> list[str]:
        return [p.agent_id for p in self.profiles]


def _records(cfg: RunConfig):
    if not cfg.train_file or not cfg.val_file:
        raise UsageError("the config must set train_file and val_file")
    for p in (cfg.train_file, cfg.val_file):
        if not Path(p).exists():
            raise UsageError(f"dataset file {p} does not exist")
    train = load_dataset(cfg.train_file, cfg.dataset)
    val = load_dataset(cfg.val_file, cfg.dataset)
    return make_splits(train, val, cfg.split_spec())


def _all_records(splits) -> list:
    seen, out = set(), []
    for part in splits:
        for r in part:
            if r.id not in seen:
                seen.add(r.id)
                out.append(r)
    return out


def load_data(cfg: RunConfig) -> Data:
    """Splits joined with the agent cache; the agent pool is whatever the cache holds."""
    splits = _records(cfg)
    if not cfg.cache:
        raise UsageError("the config must set cache")
    cache = load_agent_cache(cfg.cache)
    if not cache:
        raise DataError(f"agent cache {cfg.cache} is empty")
    profiles = canonical_order([AgentProfile.from_id(a) for a in cache.agent_ids()])
    data = Data(cfg, profiles, *[None] * 3, records=_all_records(splits), warnings=list(cache.warnings))
    for name, part in zip(("train", "val", "test"), splits):
        joined, excluded = join_for_training(part, cache, profiles)
        if excluded:
            data.warnings.append(f"{name}: {len(excluded)} record(s) without cached answers excluded")
        if not joined:
            raise DataError(f"{name} split has no records with cached answers")
        setattr(data, name, joined)
    return data


def _embedder(cfg: RunConfig) -> TextEmbedder:
    imported = import_embeddings(cfg.embeddings, cfg.d_text) if cfg.embeddings else None
    return TextEmbedder(cfg.d_text, cfg.embed_seed, imported)


def _graph(cfg, record, profiles, amap, warnings):
    if cfg.graphs_dir:
        path = graph_path(cfg.graphs_dir, record.id)
        if path.exists():
            return load_graph(path)
    return graph_for_record(record, profiles, amap.get(record.id), warnings)


def encode_joined(cfg: RunConfig, joined, profiles, warnings) -> list:
    amap = load_agent_entity_map(cfg.agent_entity_map) if cfg.agent_entity_map else {}
    embedder = _embedder(cfg)
    order = [p.agent_id for p in profiles]
    encoded = {}
    for j in joined:
        g = _graph(cfg, j.record, profiles, amap, warnings)
        if g.agent_order != order:
            raise DataError(f"graph for {j.record.id} was built for a different agent pool")
        encoded[j.record.id] = encode(g, embedder)
    return make_examples(joined, encoded, cfg.trust_cache_f1)


def resolve_checkpoints(path) -> list[tuple[str, Path]]:
    """A checkpoint file, or every ``seed-*/checkpoint.bin`` under a run directory."""
    p = Path(path)
    if p.is_file():
        return [(p.stem, p)]
    found = [(c.parent.name, c) for c in p.glob("seed-*/checkpoint.bin")]
    if not found:
        raise DataError(f"no checkpoints found at {p}")

    def seed_key(item):
        tail = item[0].split("-", 1)[1]
        return (0, int(tail), "") if tail.isdigit() else (1, 0, tail)

    return sorted(found, key=seed_key)


def checkpoint_probs(checkpoints, examples, agent_ids) -> list[tuple[str, list]]:
    out = []
    for label, path in checkpoints:
        params, header = load_checkpoint(path)
        if list(header["agent_order"]) != list(agent_ids):
            raise DataError(f"agent order of checkpoint {path} does not match the cache's canonical order")
        if params.d_in != examples[0].features.shape[1]:
            raise DataError(f"checkpoint {path} expects {params.d_in} input features, "
                            f"data has {examples[0].features.shape[1]}")
        out.append((label, [forward(ex.graph, ex.features, params)[1].probs for ex in examples]))
    return out


def routed(probs_per_seed, examples, k: int):
    """Per-seed EM and F1 lists plus routing results at clip size k."""
    ems, f1s, results = [], [], []
    for label, probs in probs_per_seed:
        res = [fuse(p, ex.answers, k, ex.graph.agent_ids, ex.record_id) for p, ex in zip(probs, examples)]
        ems.append([exact_match(r.fused_answer, ex.golds) for r, ex in zip(res, examples)])
        f1s.append([token_f1(r.fused_answer, ex.golds) for r, ex in zip(res, examples)])
        results.append((label, res))
    return ems, f1s, results


def scores_by_k(probs_per_seed, examples, ks) -> dict:
    by_k = {}
    for k in ks:
        ems, f1s, _ = routed(probs_per_seed, examples, k)
        rep = aggregate_scores(ems, f1s, "router", k=k)
        by_k[k] = {"f1": rep.f1_mean, "em": rep.em_mean}
    return by_k


# ---------------------------------------------------------------- commands


def cmd_build_graphs(cfg: RunConfig, out: Path, args) -> int:
    splits = _records(cfg)
    records = _all_records(splits)
    amap = load_agent_entity_map(cfg.agent_entity_map) if cfg.agent_entity_map else {}
    profiles = default_profiles()
    if cfg.cache:
        cache = load_agent_cache(cfg.cache)
        if cache:
            profiles = canonical_order([AgentProfile.from_id(a) for a in cache.agent_ids()])
    gdir = out / "graphs"
    graphs, failures, warnings = [], [], []
    for r in records:
        try:
            g = graph_for_record(r, profiles, amap.get(r.id), warnings)
            g.validate()
        except (GraphError, ValueError) as exc:
            failures.append(f"{r.id}: {exc}")
            continue
        save_graph(g, gdir)
        graphs.append(g)
    lines = []
    if graphs:
        stats = graph_stats(graphs)
        row = {"dataset": cfg.dataset, **{k: round(v, 4) for k, v in stats.items()}}
        columns = list(row)
        table = format_table([row], columns)
        _write(out / "stats.json", json.dumps(row, sort_keys=True) + "\n")
        _write_csv(out / "stats.csv", [row], columns)
        _write(out / "stats.txt", table + "\n")
        lines.append(table)
    lines.append(f"{len(graphs)} graph(s) written to {gdir}")
    for w in warnings:
        logger.warning(w)
    if failures:
        _write(out / "failures.txt", "\n".join(failures) + "\n")
        lines.append(f"{len(failures)} record(s) failed:")
        lines.extend("  " + f for f in failures)
    print("\n".join(lines))
    return EXIT_DATA if failures else EXIT_OK


def cmd_train(cfg: RunConfig, out: Path, args) -> int:
    data = load_data(cfg)
    train = encode_joined(cfg, data.train, data.profiles, data.warnings)
    val = encode_joined(cfg, data.val, data.profiles, data.warnings)
    for w in data.warnings:
        logger.warning(w)
    summary = []
    for seed in cfg.seeds:
        run_dir = out / f"seed-{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _, log = fit(train, val, cfg.train_config(seed), None, run_dir / "checkpoint.bin",
                     run_dir / "train_log.jsonl", data.agent_ids)
        best = max(log, key=lambda e: (e["val_f1"], -e["epoch"]))
        summary.append({"seed": seed, "best_epoch": best["epoch"], "val_f1": best["val_f1"],
                        "val_em": best["val_em"], "final_train_kl": log[-1]["mean_train_kl"]})
    table = format_table(summary, ["seed", "best_epoch", "val_f1", "val_em", "final_train_kl"])
    _write(out / "train_summary.txt", table + "\n")
    print(table)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path, args) -> int:
    data = load_data(cfg)
    test = encode_joined(cfg, data.test, data.profiles, data.warnings)
    probs = checkpoint_probs(resolve_checkpoints(args.checkpoint), test, data.agent_ids)
    ems, f1s, results = routed(probs, test, cfg.k)
    flags: list[str] = []
    reports = baselines(data.test, data.agent_ids, data.train, len(probs), cfg.dataset, flags)
    reports["router"] = aggregate_scores(ems, f1s, "router", cfg.dataset, cfg.k)
    ordered = [reports[m] for m in TABLE_METHODS]
    with (out / "report.jsonl").open("w", encoding="utf-8") as fh:
        for rep in ordered:
            row = rep.row()
            if rep.detail:
                row["detail"] = rep.detail
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    for label, res in results:
        with (out / f"routing-{label}.jsonl").open("w", encoding="utf-8") as fh:
            for r in res:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    table = format_table(report_rows(ordered), ["method", "k", "F1", "EM", "seeds"])
    notes = [f"best_llm = {reports['best_llm'].detail}", f"best_agent = {reports['best_agent'].detail}"]
    notes += flags + data.warnings
    _write(out / "report.txt", table + "\n\n" + "\n".join(notes) + "\n")
    print(table)
    return EXIT_OK


def cmd_sweep_topk(cfg: RunConfig, out: Path, args) -> int:
    data = load_data(cfg)
    test = encode_joined(cfg, data.test, data.profiles, data.warnings)
    probs = checkpoint_probs(resolve_checkpoints(args.checkpoint), test, data.agent_ids)
    ks = sorted(set(cfg.k_list) | {24})
    rows = topk_deltas(scores_by_k(probs, test, ks), base_k=24)
    columns = ["k", "f1", "em", "f1_delta_pct", "em_delta_pct"]
    _write_csv(out / "sweep.csv", rows, columns)
    table = format_table(rows, columns)
    _write(out / "sweep.txt", table + "\n")
    print(table)
    return EXIT_OK


def cmd_transfer(cfg: RunConfig, out: Path, args) -> int:
    source = resolve_checkpoints(args.checkpoint)
    columns = ["k", "f1_drop", "em_drop"]
    used = set()
    for spec in args.target:
        tcfg_path, sep, run = spec.partition("=")
        if not sep:
            raise UsageError(f"--target expects CONFIG=IN_DOMAIN_RUN, got {spec!r}")
        tcfg = load_config(tcfg_path)
        run_path = Path(run)
        if not run_path.exists() or not list(run_path.glob("seed-*/checkpoint.bin")) and not run_path.is_file():
            raise MissingReference(
                f"no in-domain reference for target {tcfg.dataset}: expected checkpoints at {run_path} "
                f"(train on {tcfg.dataset} first)")
        data = load_data(tcfg)
        test = encode_joined(tcfg, data.test, data.profiles, data.warnings)
        ks = list(cfg.k_list)
        m_in = scores_by_k(checkpoint_probs(resolve_checkpoints(run_path), test, data.agent_ids), test, ks)
        m_x = scores_by_k(checkpoint_probs(source, test, data.agent_ids), test, ks)
        rows = transfer_report(m_in, m_x, ks, cfg.drop_mode)
        name = f"transfer-{cfg.dataset}-to-{tcfg.dataset}"
        n = 1
        while name in used:
            n += 1
            name = f"transfer-{cfg.dataset}-to-{tcfg.dataset}-{n}"
        used.add(name)
        _write_csv(out / f"{name}.csv", rows, columns)
        table = format_table(rows, columns)
        _write(out / f"{name}.txt", table + "\n")
        print(f"{cfg.dataset} -> {tcfg.dataset} ({cfg.drop_mode} drop, %)\n{table}\n")
    return EXIT_OK


def _pool(args) -> list:
    profiles = default_profiles()
    if args.designs:
        wanted = {d.strip() for d in args.designs.split(",")}
        unknown = wanted - set(DESIGNS)
        if unknown:
            raise UsageError(f"unknown design(s): {', '.join(sorted(unknown))}")
        profiles = [p for p in profiles if p.design in wanted]
    return profiles


def _backends(cfg: RunConfig, records, mock: bool, judge: bool = False):
    if mock:
        return MockBackend({r.question: r.gold_answers[0] for r in records})
    if not cfg.endpoint:
        raise UsageError("the config must set endpoint (or pass --mock-backend)")
    models = cfg.model_map()

    def make(model):
        return HTTPBackend(BackendConfig(cfg.endpoint, model, cfg.temperature, cfg.max_tokens, cfg.api_key_env,
                                         cfg.timeout, cfg.max_attempts, cfg.backoff_base))

    try:
        if judge:
            model = cfg.judge_model or next(iter(models.values()), "")
            if not model:
                raise UsageError("the config must set judge_model or models")
            return make(model)
        if not models:
            raise UsageError("the config must set models = backbone=model,...")
        return {backbone: make(model) for backbone, model in models.items()}
    except BackendError as exc:
        raise UsageError(str(exc)) from None


def cmd_agents_run(cfg: RunConfig, out: Path, args) -> int:
    records = _all_records(_records(cfg))
    profiles = _pool(args)
    backends = _backends(cfg, records, args.mock_backend)
    cache = Path(args.cache) if args.cache else out / "agent_cache.jsonl"
    summary = run_agents(records, profiles, backends, cache, cfg.concurrency, cfg.transcripts_dir,
                         cfg.sc_samples, cfg.max_revisions)
    info = {"cache": str(cache), "written": summary.written, "skipped": summary.skipped,
            "errors": summary.errors, "calls": summary.calls}
    _write(out / "agents_run.json", json.dumps(info, sort_keys=True) + "\n")
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_agents_judge(cfg: RunConfig, out: Path, args) -> int:
    records = _all_records(_records(cfg))
    profiles = _pool(args)
    backend = _backends(cfg, records, args.mock_backend, judge=True)
    rows, warnings, flags = [], [], []
    for r in records:
        mentions, triples = record_annotations(r)
        amap = judge_agent_entities(r, mentions, triples, profiles, backend, cfg.judge_top, warnings, flags)
        rows.extend((r.id, agent_id, ents) for agent_id, ents in amap.items())
    write_agent_entity_map(out / "agent_entities.jsonl", rows)
    _write(out / "judge_flags.txt", "\n".join(flags + warnings) + ("\n" if flags or warnings else ""))
    print(f"{len(rows)} agent-entity rows for {len(records)} record(s); {len(flags)} fallback(s)")
    return EXIT_OK


def cmd_report_variance(cfg: RunConfig, out: Path, args) -> int:
    data = load_data(cfg)
    joined = data.train + data.val + data.test
    f1 = agent_f1_matrix(joined, cfg.trust_cache_f1)
    rows = []
    for i, agent_id in enumerate(data.agent_ids):
        col = 100.0 * f1[:, i]
        q1, med, q3 = np.percentile(col, [25, 50, 75])
        rows.append({"agent": agent_id, "n": len(col), "mean": float(col.mean()), "std": float(col.std()),
                     "min": float(col.min()), "q1": float(q1), "median": float(med), "q3": float(q3),
                     "max": float(col.max())})
    columns = ["agent", "n", "mean", "std", "min", "q1", "median", "q3", "max"]
    _write_csv(out / "variance.csv", rows, columns)
    table = format_table(rows, columns)
    _write(out / "variance.txt", table + "\n")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--out", help="output directory (default: a fresh timestamped folder under runs/)")
    p.add_argument("--k", type=int, help="top-k clip size for routing")
    p.add_argument("--drop-mode", choices=("relative", "absolute"), help="transfer drop convention")
    p.add_argument("--trust-cache-f1", action="store_true", help="use F1 values stored in the cache")
    p.add_argument("--mock-backend", action="store_true", help="answer with the built-in deterministic mock")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="agentrouter", description="Graph-based routing over LLM agents.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("build-graphs", parents=[common], help="extract entities and write one graph per record")
    sub.add_parser("train", parents=[common], help="train one router per seed")
    for name, helptext in (("eval", "score the router against the baselines"),
                           ("sweep-topk", "router scores across clip sizes, relative to k=24")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint", required=True, help="checkpoint file or training run directory")
    p = sub.add_parser("transfer", parents=[common], help="drop tables for a router applied to other datasets")
    p.add_argument("--checkpoint", required=True, help="source run directory or checkpoint")
    p.add_argument("--target", action="append", required=True, metavar="CONFIG=IN_DOMAIN_RUN",
                   help="target config and the run trained on that target (repeatable)")

    agents = sub.add_parser("agents", help="online harness")
    asub = agents.add_subparsers(dest="agents_command", required=True)
    for name, helptext in (("run", "collect agent answers into a cache"),
                           ("judge", "score agent-entity relevance for the graphs")):
        p = asub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--designs", help="comma-separated subset of agent designs")
        if name == "run":
            p.add_argument("--cache", help="cache file to resume into (default: OUT/agent_cache.jsonl)")

    report = sub.add_parser("report", help="summaries over cached answers")
    rsub = report.add_subparsers(dest="report_command", required=True)
    rsub.add_parser("variance", parents=[common], help="per-agent F1 spread")
    return parser


COMMANDS = {
    "build-graphs": cmd_build_graphs,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-topk": cmd_sweep_topk,
    "transfer": cmd_transfer,
    ("agents", "run"): cmd_agents_run,
    ("agents", "judge"): cmd_agents_judge,
    ("report", "variance"): cmd_report_variance,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    key = args.command
    if key == "agents":
        key = ("agents", args.agents_command)
    elif key == "report":
        key = ("report", args.report_command)
    name = key if isinstance(key, str) else "-".join(key)
    try:
        cfg = _effective_config(args)
        out = _out_dir(args, name)
        _write(out / "config.txt", cfg.to_text())
        return COMMANDS[key](cfg, out, args)
    except (ConfigError, UsageError) as exc:
        print(f"agentrouter {name}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"agentrouter {name}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GraphError, FileNotFoundError, KeyError, BackendError) as exc:
        print(f"agentrouter {name}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
